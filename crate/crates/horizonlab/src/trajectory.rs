//! Time grids, piecewise-constant controls, trajectories and the
//! convergence diagnostics (Sobolev seminorms, LF metric, sup-distance)
//! used throughout the crate.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing finite time grid starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidInput("time grid needs at least 2 nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidInput("time grid must start at 0".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) || nodes.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("time grid must be strictly increasing and finite".into()));
        }
        Ok(Self { nodes })
    }

    /// Uniform grid on [0, t_end] with `n` intervals.
    pub fn uniform(t_end: f64, n: usize) -> Result<Self> {
        if !(t_end > 0.0) || n < 1 {
            return Err(Error::InvalidInput("uniform grid needs t_end > 0 and n >= 1".into()));
        }
        let nodes = (0..=n).map(|i| t_end * i as f64 / n as f64).collect();
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn t_end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Piecewise-constant control: value `values[j]` on the half-open interval
/// [breakpoints[j], breakpoints[j+1]) and `tail` on [last breakpoint, inf).
///
/// Empty intervals (repeated breakpoints) are legal and skipped in evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseControl {
    breakpoints: Vec<f64>,
    values: Vec<Vec<f64>>,
    tail: Vec<f64>,
}

impl PiecewiseControl {
    pub fn new(breakpoints: Vec<f64>, values: Vec<DVector<f64>>, tail: DVector<f64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints[0] != 0.0 {
            return Err(Error::InvalidInput("breakpoints must start at 0".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("breakpoints must be nondecreasing".into()));
        }
        if values.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} values for {} breakpoints, got {}",
                breakpoints.len() - 1,
                breakpoints.len(),
                values.len()
            )));
        }
        let m = tail.len();
        if values.iter().any(|v| v.len() != m) {
            return Err(Error::InvalidInput("all control values must share the tail dimension".into()));
        }
        Ok(Self {
            breakpoints,
            values: values.into_iter().map(|v| v.as_slice().to_vec()).collect(),
            tail: tail.as_slice().to_vec(),
        })
    }

    /// Control constant equal to `value` on the whole half-line.
    pub fn constant(value: DVector<f64>) -> Self {
        Self {
            breakpoints: vec![0.0],
            values: vec![],
            tail: value.as_slice().to_vec(),
        }
    }

    /// Scalar convenience constructor.
    pub fn scalar(breakpoints: Vec<f64>, values: Vec<f64>, tail: f64) -> Result<Self> {
        Self::new(
            breakpoints,
            values.into_iter().map(|v| DVector::from_vec(vec![v])).collect(),
            DVector::from_vec(vec![tail]),
        )
    }

    pub fn dim(&self) -> usize {
        self.tail.len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> Vec<DVector<f64>> {
        self.values.iter().map(|v| DVector::from_vec(v.clone())).collect()
    }

    pub fn tail_value(&self) -> DVector<f64> {
        DVector::from_vec(self.tail.clone())
    }

    /// Evaluate the step function at `t >= 0` with the half-open convention
    /// [tau_{j-1}, tau_j); returns the tail value for t >= last breakpoint.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        for j in 0..self.values.len() {
            if t >= self.breakpoints[j] && t < self.breakpoints[j + 1] {
                return DVector::from_vec(self.values[j].clone());
            }
        }
        DVector::from_vec(self.tail.clone())
    }

    /// Breakpoints strictly inside (0, t_end), deduplicated, sorted.
    pub fn interior_breakpoints(&self, t_end: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .breakpoints
            .iter()
            .copied()
            .filter(|&t| t > 0.0 && t < t_end)
            .collect();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.dedup();
        out
    }

    /// Merge two controls into one with stacked values, on the union of
    /// breakpoints. Both controls keep their own evaluation semantics.
    pub fn stack(a: &PiecewiseControl, b: &PiecewiseControl) -> PiecewiseControl {
        let mut bps: Vec<f64> = a.breakpoints.iter().chain(b.breakpoints.iter()).copied().collect();
        bps.sort_by(|x, y| x.partial_cmp(y).unwrap());
        bps.dedup();
        let mut values = Vec::with_capacity(bps.len() - 1);
        for j in 0..bps.len() - 1 {
            let t = bps[j];
            let va = a.eval(t);
            let vb = b.eval(t);
            let mut v = va.as_slice().to_vec();
            v.extend_from_slice(vb.as_slice());
            values.push(v);
        }
        let mut tail = a.tail.clone();
        tail.extend_from_slice(&b.tail);
        PiecewiseControl {
            breakpoints: bps,
            values,
            tail,
        }
    }
}

/// Evaluate a piecewise-constant control at time `t`.
pub fn eval_control(u: &PiecewiseControl, t: f64) -> DVector<f64> {
    u.eval(t)
}

/// A state trajectory sampled on a time grid, with an optional escape
/// (blow-up) time when the solution left every compact set.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: TimeGrid,
    states: Vec<DVector<f64>>,
    /// Per-interval (left, right) state derivatives for cubic Hermite
    /// interpolation; the two ends may disagree across control jumps.
    interval_derivs: Option<Vec<(DVector<f64>, DVector<f64>)>>,
    escape_time: Option<f64>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, states: Vec<DVector<f64>>, escape_time: Option<f64>) -> Result<Self> {
        if states.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "states count {} != nodes count {}",
                states.len(),
                grid.len()
            )));
        }
        if let Some(te) = escape_time {
            if te > grid.t_end() {
                return Err(Error::InvalidInput("escape_time beyond last node".into()));
            }
        }
        Ok(Self {
            grid,
            states,
            interval_derivs: None,
            escape_time,
        })
    }

    /// Attach per-interval derivative pairs, upgrading interpolation from
    /// linear to cubic Hermite.
    pub fn with_interval_derivs(mut self, derivs: Vec<(DVector<f64>, DVector<f64>)>) -> Result<Self> {
        if derivs.len() + 1 != self.grid.len() {
            return Err(Error::InvalidInput("need one derivative pair per interval".into()));
        }
        self.interval_derivs = Some(derivs);
        Ok(self)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn escape_time(&self) -> Option<f64> {
        self.escape_time
    }

    pub fn interval_derivs(&self) -> Option<&[(DVector<f64>, DVector<f64>)]> {
        self.interval_derivs.as_deref()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().unwrap()
    }

    fn check_defined_up_to(&self, t: f64) -> Result<()> {
        if let Some(te) = self.escape_time {
            if te <= t {
                return Err(Error::EscapeBefore { escape_time: te, requested: t });
            }
        }
        if self.grid.t_end() < t - 1e-12 {
            return Err(Error::InvalidInput(format!(
                "trajectory defined up to {} only, requested {}",
                self.grid.t_end(),
                t
            )));
        }
        Ok(())
    }

    /// Interpolation of the sampled states (cubic Hermite when interval
    /// derivatives are attached, linear otherwise); clamps outside the grid.
    pub fn interpolate(&self, t: f64) -> DVector<f64> {
        let nodes = self.grid.nodes();
        if t <= nodes[0] {
            return self.states[0].clone();
        }
        if t >= *nodes.last().unwrap() {
            return self.states.last().unwrap().clone();
        }
        let idx = match nodes.binary_search_by(|n| n.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.states[i].clone(),
            Err(i) => i,
        };
        let (t0, t1) = (nodes[idx - 1], nodes[idx]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (x0, x1) = (&self.states[idx - 1], &self.states[idx]);
        if let Some(derivs) = &self.interval_derivs {
            let (d0, d1) = &derivs[idx - 1];
            let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
            let h10 = s * (1.0 - s) * (1.0 - s);
            let h01 = s * s * (3.0 - 2.0 * s);
            let h11 = s * s * (s - 1.0);
            x0 * h00 + d0 * (h * h10) + x1 * h01 + d1 * (h * h11)
        } else {
            x0 * (1.0 - s) + x1 * s
        }
    }

    /// Write the trajectory as CSV with header `t,x1,...,xn`.
    pub fn to_csv(&self) -> String {
        let n = self.state_dim();
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",x{i}"));
        }
        out.push('\n');
        for (t, x) in self.grid.nodes().iter().zip(&self.states) {
            out.push_str(&format!("{t:.12e}"));
            for v in x.iter() {
                out.push_str(&format!(",{v:.12e}"));
            }
            out.push('\n');
        }
        if let Some(te) = self.escape_time {
            out.push_str(&format!("# escape_time={te:.12e}\n"));
        }
        out
    }
}

/// Report on a sequence of gaps converging (or not) to a limit.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub indices: Vec<u64>,
    pub gaps: Vec<f64>,
    pub monotone_decreasing: bool,
    pub extrapolated_limit: Option<f64>,
}

impl ConvergenceReport {
    pub fn from_gaps(indices: Vec<u64>, gaps: Vec<f64>) -> Self {
        debug_assert!(gaps.iter().all(|g| *g >= 0.0));
        let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
        let extrapolated = if monotone { gaps.last().copied() } else { None };
        Self {
            indices,
            gaps,
            monotone_decreasing: monotone,
            extrapolated_limit: extrapolated,
        }
    }
}

fn union_times(x: &Trajectory, y: &Trajectory, t_end: f64) -> Vec<f64> {
    let mut ts: Vec<f64> = x
        .grid()
        .nodes()
        .iter()
        .chain(y.grid().nodes().iter())
        .copied()
        .filter(|&t| t <= t_end)
        .collect();
    ts.push(t_end);
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup();
    ts
}

/// Max over the union grid restricted to [0, T] of |x(t) - y(t)|.
pub fn sup_distance(x: &Trajectory, y: &Trajectory, t_end: f64) -> Result<f64> {
    x.check_defined_up_to(t_end)?;
    y.check_defined_up_to(t_end)?;
    if x.state_dim() != y.state_dim() {
        return Err(Error::GridMismatch("state dimensions differ".into()));
    }
    let mut best = 0.0f64;
    for t in union_times(x, y, t_end) {
        let d = (x.interpolate(t) - y.interpolate(t)).norm();
        if d > best {
            best = d;
        }
    }
    Ok(best)
}

/// Sobolev exponent for the seminorm diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn finite(self) -> Option<f64> {
        match self {
            Exponent::Finite(p) => Some(p),
            Exponent::Infinity => None,
        }
    }
}

/// Composite trapezoid of `f` sampled at `ts`.
pub(crate) fn trapezoid(ts: &[f64], fs: &[f64]) -> f64 {
    debug_assert_eq!(ts.len(), fs.len());
    let mut acc = 0.0;
    for i in 1..ts.len() {
        acc += 0.5 * (fs[i] + fs[i - 1]) * (ts[i] - ts[i - 1]);
    }
    acc
}

/// Finite-difference derivative samples: central in the interior, one-sided
/// at the endpoints.
fn fd_derivative(ts: &[f64], xs: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n = ts.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let d = if i == 0 {
            (&xs[1] - &xs[0]) / (ts[1] - ts[0])
        } else if i == n - 1 {
            (&xs[n - 1] - &xs[n - 2]) / (ts[n - 1] - ts[n - 2])
        } else {
            (&xs[i + 1] - &xs[i - 1]) / (ts[i + 1] - ts[i - 1])
        };
        out.push(d);
    }
    out
}

/// W^{order,p} seminorm of the trajectory restricted to (0, T), computed by
/// composite quadrature on the grid (order-1 derivatives by finite
/// differences). For p = infinity, the grid max.
pub fn sobolev_seminorm(x: &Trajectory, t_end: f64, order: u8, p: Exponent) -> Result<f64> {
    if order > 1 {
        return Err(Error::InvalidInput("only orders 0 and 1 supported".into()));
    }
    x.check_defined_up_to(t_end)?;
    let mut ts: Vec<f64> = x.grid().nodes().iter().copied().filter(|&t| t <= t_end).collect();
    if *ts.last().unwrap() < t_end {
        ts.push(t_end);
    }
    let xs: Vec<DVector<f64>> = ts.iter().map(|&t| x.interpolate(t)).collect();
    match p {
        Exponent::Infinity => {
            let mut best = xs.iter().map(|v| v.norm()).fold(0.0, f64::max);
            if order == 1 {
                best = fd_derivative(&ts, &xs)
                    .iter()
                    .map(|v| v.norm())
                    .fold(best, f64::max);
            }
            Ok(best)
        }
        Exponent::Finite(p) => {
            if !(p > 1.0) {
                return Err(Error::InvalidInput("exponent must lie in (1, inf]".into()));
            }
            let f0: Vec<f64> = xs.iter().map(|v| v.norm().powf(p)).collect();
            let mut acc = trapezoid(&ts, &f0);
            if order == 1 {
                let dx = fd_derivative(&ts, &xs);
                let f1: Vec<f64> = dx.iter().map(|v| v.norm().powf(p)).collect();
                acc += trapezoid(&ts, &f1);
            }
            Ok(acc.powf(1.0 / p))
        }
    }
}

/// The LF-space metric sup_k 2^{-k} r_k / (1 + r_k) with r_k the sup-distance
/// on [0, T_k], truncated to the supplied defining times. The neglected tail
/// contributes less than 2^{-k_max}.
pub fn lf_metric(x: &Trajectory, y: &Trajectory, defining_times: &[f64]) -> Result<f64> {
    if defining_times.is_empty() {
        return Err(Error::InvalidInput("need at least one defining time".into()));
    }
    if defining_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("defining times must be increasing".into()));
    }
    let mut best = 0.0f64;
    for (k, &tk) in defining_times.iter().enumerate() {
        let r = sup_distance(x, y, tk)?;
        let term = 0.5f64.powi(k as i32) * r / (1.0 + r);
        if term > best {
            best = term;
        }
    }
    Ok(best)
}
