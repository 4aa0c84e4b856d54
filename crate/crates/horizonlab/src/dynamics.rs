//! Controlled ODE integration for control-affine systems x' = a(t,x) + b(t,x)u,
//! with blow-up detection, plus exact linear-system machinery (state-transition
//! matrix, variation of constants, commuting closed form) used as oracles.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::trajectory::{trapezoid, PiecewiseControl, TimeGrid, Trajectory};

pub type DriftFn = Box<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type InputMapFn = Box<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type MatrixFn = Box<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// Structured tag describing where a system came from; the generic drift and
/// input-map closures are always usable regardless of the tag.
pub enum SystemKind {
    Generic,
    /// x' = B1 x + u B2 x (relaxed two-subsystem switched linear system).
    SwitchedLinear { b1: DMatrix<f64>, b2: DMatrix<f64> },
    LinearTV { a: MatrixFn, b: MatrixFn },
}

/// The control-affine pair (a, b) with f(t,x,u) = a(t,x) + b(t,x) u.
pub struct ControlSystem {
    pub state_dim: usize,
    pub control_dim: usize,
    pub drift: DriftFn,
    pub input_map: InputMapFn,
    pub kind: SystemKind,
}

impl ControlSystem {
    pub fn generic(state_dim: usize, control_dim: usize, drift: DriftFn, input_map: InputMapFn) -> Self {
        Self {
            state_dim,
            control_dim,
            drift,
            input_map,
            kind: SystemKind::Generic,
        }
    }

    /// Relaxed switched system x' = u A1 x + (1-u) A2 x, rewritten as
    /// x' = B1 x + u B2 x with B1 = A2 and B2 = A1 - A2.
    pub fn switched_linear(a1: &DMatrix<f64>, a2: &DMatrix<f64>) -> Self {
        let n = a1.nrows();
        assert_eq!(a1.shape(), a2.shape());
        assert_eq!(n, a1.ncols());
        let b1 = a2.clone();
        let b2 = a1 - a2;
        let b1c = b1.clone();
        let b2c = b2.clone();
        Self {
            state_dim: n,
            control_dim: 1,
            drift: Box::new(move |_t, x| &b1c * x),
            input_map: Box::new(move |_t, x| {
                let col = &b2c * x;
                DMatrix::from_column_slice(col.len(), 1, col.as_slice())
            }),
            kind: SystemKind::SwitchedLinear { b1, b2 },
        }
    }

    pub fn rhs(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.drift)(t, x) + (self.input_map)(t, x) * u
    }

    /// Time-varying linear system x' = A(t) x + B(t) u from shared closures.
    pub fn linear_tv_shared(
        n: usize,
        m: usize,
        a: std::sync::Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>,
        b: std::sync::Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>,
    ) -> Self {
        let a1 = a.clone();
        let b1 = b.clone();
        let a2 = a.clone();
        let b2 = b.clone();
        Self {
            state_dim: n,
            control_dim: m,
            drift: Box::new(move |t, x| a1(t) * x),
            input_map: Box::new(move |t, _x| b1(t)),
            kind: SystemKind::LinearTV {
                a: Box::new(move |t| a2(t)),
                b: Box::new(move |t| b2(t)),
            },
        }
    }
}

/// Adaptive integrator configuration.
#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Norm threshold at which the solution is declared to have blown up.
    pub escape_radius: f64,
    pub max_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            escape_radius: 1e8,
            max_step: 0.1,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if !(self.escape_radius >= 10.0) {
            return Err(Error::Config("escape_radius must be >= 10".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::Config("max_step must be positive".into()));
        }
        Ok(())
    }
}

// Dormand-Prince 5(4) coefficients.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

pub(crate) enum StepOutcome {
    Finished,
    Escaped(f64),
}

/// Integrate x' = f(t, x) on [t0, t1], appending accepted nodes to `ts`/`xs`
/// (which must already contain the initial point). Declares escape when the
/// state norm exceeds `escape_radius` or goes non-finite.
pub(crate) fn rk_segment<F>(
    f: &F,
    t0: f64,
    t1: f64,
    ts: &mut Vec<f64>,
    xs: &mut Vec<DVector<f64>>,
    ds: &mut Vec<(DVector<f64>, DVector<f64>)>,
    cfg: &IntegratorConfig,
) -> Result<StepOutcome>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let mut t = t0;
    let mut x = xs.last().unwrap().clone();
    let mut k0 = f(t, &x);
    let mut h = (t1 - t0).min(cfg.max_step).max(1e-12);

    while t < t1 {
        h = h.min(t1 - t);
        let h_min = 1e-13 * (1.0 + t.abs());
        let mut ks: Vec<DVector<f64>> = Vec::with_capacity(7);
        ks.push(k0.clone());
        let mut failed_nonfinite = false;
        for i in 1..7 {
            let mut xi = x.clone();
            for (j, kj) in ks.iter().enumerate() {
                if A[i][j] != 0.0 {
                    xi += kj * (h * A[i][j]);
                }
            }
            let ki = f(t + C[i] * h, &xi);
            if ki.iter().any(|v| !v.is_finite()) {
                failed_nonfinite = true;
                break;
            }
            ks.push(ki);
        }
        if failed_nonfinite {
            if h <= h_min {
                return Ok(StepOutcome::Escaped(t));
            }
            h *= 0.25;
            continue;
        }
        let mut x5 = x.clone();
        let mut x4 = x.clone();
        for i in 0..7 {
            if B5[i] != 0.0 {
                x5 += &ks[i] * (h * B5[i]);
            }
            if B4[i] != 0.0 {
                x4 += &ks[i] * (h * B4[i]);
            }
        }
        if x5.iter().any(|v| !v.is_finite()) {
            if h <= h_min {
                return Ok(StepOutcome::Escaped(t));
            }
            h *= 0.25;
            continue;
        }
        // scaled RMS error estimate
        let mut err = 0.0;
        for i in 0..x.len() {
            let sc = cfg.abs_tol + cfg.rel_tol * x[i].abs().max(x5[i].abs());
            let e = (x5[i] - x4[i]) / sc;
            err += e * e;
        }
        err = (err / x.len() as f64).sqrt();

        if err <= 1.0 || h <= h_min {
            let t_new = t + h;
            if x5.norm() > cfg.escape_radius {
                // bracket the escape instant by bisection on the Hermite
                // interpolant of the accepted step
                let k1 = f(t_new, &x5);
                let te = bisect_escape(&x, &k0, &x5, &k1, t, t_new, cfg.escape_radius);
                let xe = hermite(&x, &k0, &x5, &k1, t, t_new, te);
                let ke = f(te, &xe);
                ts.push(te);
                ds.push((k0.clone(), ke));
                xs.push(xe);
                return Ok(StepOutcome::Escaped(te));
            }
            ts.push(t_new);
            xs.push(x5.clone());
            let k1 = f(t_new, &x5); // FSAL would reuse ks[6]; recompute keeps this simple
            ds.push((k0, k1.clone()));
            k0 = k1;
            x = x5;
            t = t_new;
        }
        let factor = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
        h = (h * factor.clamp(0.2, 5.0)).min(cfg.max_step);
        if h < h_min {
            h = h_min;
        }
    }
    Ok(StepOutcome::Finished)
}

fn hermite(
    x0: &DVector<f64>,
    d0: &DVector<f64>,
    x1: &DVector<f64>,
    d1: &DVector<f64>,
    t0: f64,
    t1: f64,
    t: f64,
) -> DVector<f64> {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    x0 * h00 + d0 * (h * h10) + x1 * h01 + d1 * (h * h11)
}

fn bisect_escape(
    x0: &DVector<f64>,
    d0: &DVector<f64>,
    x1: &DVector<f64>,
    d1: &DVector<f64>,
    t0: f64,
    t1: f64,
    radius: f64,
) -> f64 {
    let mut lo = t0;
    let mut hi = t1;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let xm = hermite(x0, d0, x1, d1, t0, t1, mid);
        if xm.norm() > radius {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-14 * (1.0 + hi.abs()) {
            break;
        }
    }
    hi
}

/// Integrate the controlled system under a piecewise-constant control on
/// [0, T]. Integration restarts exactly at every control breakpoint so the
/// adaptive stepper never straddles a control discontinuity. Blow-up is
/// recorded in the returned trajectory rather than raised as an error.
pub fn integrate(
    sys: &ControlSystem,
    u: &PiecewiseControl,
    x0: &DVector<f64>,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if !(t_end > 0.0) {
        return Err(Error::Config("T must be positive".into()));
    }
    if u.dim() != sys.control_dim {
        return Err(Error::InvalidInput(format!(
            "control dimension {} != system control dimension {}",
            u.dim(),
            sys.control_dim
        )));
    }

    let mut seg_ends = u.interior_breakpoints(t_end);
    seg_ends.push(t_end);

    let mut ts = vec![0.0];
    let mut xs = vec![x0.clone()];
    let mut ds = Vec::new();
    let mut escape = None;
    let mut seg_start = 0.0;
    for seg_end in seg_ends {
        if seg_end <= seg_start {
            continue;
        }
        // constant control value on the open segment
        let uval = u.eval(0.5 * (seg_start + seg_end));
        let f = |t: f64, x: &DVector<f64>| sys.rhs(t, x, &uval);
        match rk_segment(&f, seg_start, seg_end, &mut ts, &mut xs, &mut ds, cfg)? {
            StepOutcome::Finished => {}
            StepOutcome::Escaped(te) => {
                escape = Some(te);
                break;
            }
        }
        seg_start = seg_end;
    }
    Trajectory::new(TimeGrid::new(ts)?, xs, escape)?.with_interval_derivs(ds)
}

/// State-transition matrix Phi(t1, t0) of x' = A(t) x, by column-wise
/// integration of the matrix ODE M' = A M, M(t0) = I.
pub fn state_transition<F>(a: &F, t0: f64, t1: f64, n: usize, cfg: &IntegratorConfig) -> Result<DMatrix<f64>>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    cfg.validate()?;
    if t1 < t0 {
        return Err(Error::InvalidInput("state_transition requires t1 >= t0".into()));
    }
    if t1 == t0 {
        return Ok(DMatrix::identity(n, n));
    }
    let f = |t: f64, m: &DVector<f64>| {
        let mat = DMatrix::from_column_slice(n, n, m.as_slice());
        let dm = a(t) * mat;
        DVector::from_column_slice(dm.as_slice())
    };
    let eye = DMatrix::<f64>::identity(n, n);
    let mut ts = vec![t0];
    let mut xs = vec![DVector::from_column_slice(eye.as_slice())];
    let mut ds = Vec::new();
    match rk_segment(&f, t0, t1, &mut ts, &mut xs, &mut ds, cfg)? {
        StepOutcome::Finished => {}
        StepOutcome::Escaped(te) => {
            return Err(Error::NonFinite(format!("transition matrix blew up at t = {te}")));
        }
    }
    let last = xs.last().unwrap();
    if last.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("transition matrix has non-finite entries".into()));
    }
    Ok(DMatrix::from_column_slice(n, n, last.as_slice()))
}

/// Cached state-transition data on a fine grid: Phi(t_i, 0) for all nodes.
pub struct TransitionCache {
    pub times: Vec<f64>,
    pub phis: Vec<DMatrix<f64>>,
}

impl TransitionCache {
    pub fn build<F>(a: &F, t_end: f64, n: usize, steps: usize, cfg: &IntegratorConfig) -> Result<Self>
    where
        F: Fn(f64) -> DMatrix<f64>,
    {
        let mut times = Vec::with_capacity(steps + 1);
        let mut phis = Vec::with_capacity(steps + 1);
        let mut phi = DMatrix::<f64>::identity(n, n);
        times.push(0.0);
        phis.push(phi.clone());
        for i in 1..=steps {
            let t0 = t_end * (i - 1) as f64 / steps as f64;
            let t1 = t_end * i as f64 / steps as f64;
            let step = state_transition(a, t0, t1, n, cfg)?;
            phi = step * phi;
            times.push(t1);
            phis.push(phi.clone());
        }
        Ok(Self { times, phis })
    }

    /// Phi(t, s) = Phi(t, 0) Phi(s, 0)^{-1}, with t, s grid nodes.
    pub fn between(&self, s_idx: usize, t_idx: usize) -> DMatrix<f64> {
        let inv = self.phis[s_idx]
            .clone()
            .try_inverse()
            .expect("transition matrix is invertible");
        &self.phis[t_idx] * inv
    }
}

/// Solve the linear system x' = A(t) x + B(t) u via the variation-of-constants
/// formula x(t) = Phi(t,0) x0 + int_0^t Phi(t,s) B(s) u(s) ds, using a cached
/// transition matrix on a fine grid and trapezoid quadrature in s.
pub fn variation_of_constants<FA, FB>(
    a: &FA,
    b: &FB,
    u: &PiecewiseControl,
    x0: &DVector<f64>,
    t_end: f64,
    n: usize,
    cfg: &IntegratorConfig,
) -> Result<Trajectory>
where
    FA: Fn(f64) -> DMatrix<f64>,
    FB: Fn(f64) -> DMatrix<f64>,
{
    cfg.validate()?;
    let base_steps = ((t_end / cfg.max_step).ceil() as usize).max(2000);
    // snap grid to include control breakpoints
    let mut times: Vec<f64> = (0..=base_steps).map(|i| t_end * i as f64 / base_steps as f64).collect();
    times.extend(u.interior_breakpoints(t_end));
    times.sort_by(|p, q| p.partial_cmp(q).unwrap());
    times.dedup();

    // Phi(t_i, 0) cached by stepping across the (non-uniform) grid
    let mut phis = Vec::with_capacity(times.len());
    let mut phi = DMatrix::<f64>::identity(n, n);
    phis.push(phi.clone());
    for i in 1..times.len() {
        let step = state_transition(a, times[i - 1], times[i], n, cfg)?;
        phi = step * phi;
        phis.push(phi.clone());
    }

    // cumulative integral of Phi(s,0)^{-1} B(s) u(s): the control is constant
    // on every subinterval (breakpoints are grid nodes), so integrate the
    // smooth factor Phi^{-1} B by trapezoid and multiply by the interval value
    let mut smooth = Vec::with_capacity(times.len());
    for (i, &s) in times.iter().enumerate() {
        let inv = phis[i]
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NonFinite("singular transition matrix".into()))?;
        smooth.push(inv * b(s));
    }
    let mut states = Vec::with_capacity(times.len());
    let mut acc = DVector::zeros(n);
    states.push(phis[0].clone() * x0);
    for i in 1..times.len() {
        let us = u.eval(0.5 * (times[i - 1] + times[i]));
        acc += (&smooth[i] + &smooth[i - 1]) * us * (0.5 * (times[i] - times[i - 1]));
        states.push(&phis[i] * (x0 + &acc));
    }
    Trajectory::new(TimeGrid::new(times)?, states, None)
}

/// Report of the Gronwall transition bound |Phi(t,s)| <= e^{lambda_T (t-s)}.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TransitionBoundReport {
    pub lambda: f64,
    pub max_ratio: f64,
    pub pairs_checked: usize,
}

fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

/// Verify |Phi(t,s)| <= e^{lambda_T (t-s)} with lambda_T the grid max of the
/// operator norm of A(t), at `samples` grid points per axis.
pub fn transition_bound_check<F>(
    a: &F,
    t_end: f64,
    n: usize,
    samples: usize,
    cfg: &IntegratorConfig,
) -> Result<TransitionBoundReport>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    let samples = samples.max(2);
    let cache = TransitionCache::build(a, t_end, n, samples, cfg)?;
    let lambda = cache
        .times
        .iter()
        .map(|&t| operator_norm(&a(t)))
        .fold(0.0f64, f64::max);
    let mut max_ratio = 0.0f64;
    let mut pairs = 0;
    for si in 0..cache.times.len() {
        for ti in si..cache.times.len() {
            let phi = cache.between(si, ti);
            let bound = (lambda * (cache.times[ti] - cache.times[si])).exp();
            let ratio = operator_norm(&phi) / bound;
            if ratio > max_ratio {
                max_ratio = ratio;
            }
            pairs += 1;
        }
    }
    Ok(TransitionBoundReport {
        lambda,
        max_ratio,
        pairs_checked: pairs,
    })
}

/// Closed-form solution for a commuting switched-linear pair:
/// x(t) = exp(B1 t + B2 int_0^t u) x0. Only valid when [B1, B2] = 0.
pub fn commuting_closed_form(
    b1: &DMatrix<f64>,
    b2: &DMatrix<f64>,
    u: &PiecewiseControl,
    x0: &DVector<f64>,
    t: f64,
) -> DVector<f64> {
    let iu = control_integral(u, t);
    let m = b1 * t + b2 * iu;
    m.exp() * x0
}

/// int_0^t u(s) ds for a scalar piecewise-constant control.
pub fn control_integral(u: &PiecewiseControl, t: f64) -> f64 {
    assert_eq!(u.dim(), 1);
    let bps = u.breakpoints();
    let vals = u.values();
    let mut acc = 0.0;
    for j in 0..vals.len() {
        let lo = bps[j];
        let hi = bps[j + 1].min(t);
        if hi > lo {
            acc += vals[j][0] * (hi - lo);
        }
    }
    let last = *bps.last().unwrap();
    if t > last {
        acc += u.tail_value()[0] * (t - last);
    }
    acc
}

/// Running integral of a scalar function sampled on the trajectory grid.
pub fn grid_quadrature(traj: &Trajectory, f: impl Fn(f64, &DVector<f64>) -> f64) -> f64 {
    let ts = traj.grid().nodes();
    let fs: Vec<f64> = ts.iter().zip(traj.states()).map(|(&t, x)| f(t, x)).collect();
    trapezoid(ts, &fs)
}
