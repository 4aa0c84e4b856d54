//! Cost functionals: finite-horizon running cost plus the tail term that
//! augments it (|u|^p beyond the horizon for finite p, a hard control-set
//! indicator for p = infinity), state-constraint indicators, and a sampling
//! probe for the control-coercivity certificate.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::dynamics::{integrate, ControlSystem, IntegratorConfig};
use crate::error::{Error, Result};
use crate::trajectory::{Exponent, PiecewiseControl, Trajectory};

/// Constraint sets for controls and states.
#[derive(Debug, Clone)]
pub enum SetDescriptor {
    /// Axis-aligned box [lo_i, hi_i].
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    /// { x : normal . x <= offset }
    Halfspace { normal: Vec<f64>, offset: f64 },
    /// { x : x_i >= 0, sum x_i <= 1 }
    Simplex,
}

impl SetDescriptor {
    /// Membership with a slack: negative values of the returned margin mean
    /// the point is outside by that amount.
    pub fn margin(&self, x: &DVector<f64>) -> f64 {
        match self {
            SetDescriptor::Box { lo, hi } => {
                let mut m = f64::INFINITY;
                for i in 0..x.len() {
                    m = m.min(x[i] - lo[i]).min(hi[i] - x[i]);
                }
                m
            }
            SetDescriptor::Ball { center, radius } => {
                let c = DVector::from_vec(center.clone());
                radius - (x - c).norm()
            }
            SetDescriptor::Halfspace { normal, offset } => {
                let nv = DVector::from_vec(normal.clone());
                offset - nv.dot(x)
            }
            SetDescriptor::Simplex => {
                let mut m = f64::INFINITY;
                for v in x.iter() {
                    m = m.min(*v);
                }
                m.min(1.0 - x.sum())
            }
        }
    }

    pub fn contains(&self, x: &DVector<f64>, safety_margin: f64) -> bool {
        self.margin(x) >= -1e-12 + safety_margin
    }
}

pub type StateCostFn = Box<dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync>;
pub type ControlCostFn = Box<dyn Fn(f64, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;
pub type GreedyFn = Box<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type WeightFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Coercivity certificate: l2(t,x,u) >= alpha |u|^p - gamma(t).
pub struct Coercivity {
    pub alpha: f64,
    pub gamma: WeightFn,
}

/// Running cost l(t,x,u) = l1(t,x) + l2(t,x,u), the exponent p of the tail
/// term, and optional constraint sets / certificates.
pub struct CostSpec {
    pub state_dim: usize,
    pub control_dim: usize,
    pub l1: StateCostFn,
    pub l2: ControlCostFn,
    pub p: Exponent,
    pub control_set: Option<SetDescriptor>,
    pub state_set: Option<SetDescriptor>,
    /// Safety margin tightening the state set to account for inter-node
    /// excursions (constraints are only checked at grid nodes).
    pub state_margin: f64,
    pub greedy: Option<GreedyFn>,
    pub coercivity: Option<Coercivity>,
}

impl CostSpec {
    pub fn new(state_dim: usize, control_dim: usize, l1: StateCostFn, l2: ControlCostFn, p: Exponent) -> Self {
        Self {
            state_dim,
            control_dim,
            l1,
            l2,
            p,
            control_set: None,
            state_set: None,
            state_margin: 0.0,
            greedy: None,
            coercivity: None,
        }
    }

    pub fn with_control_set(mut self, s: SetDescriptor) -> Self {
        self.control_set = Some(s);
        self
    }

    pub fn with_state_set(mut self, s: SetDescriptor, margin: f64) -> Self {
        self.state_set = Some(s);
        self.state_margin = margin;
        self
    }

    pub fn with_greedy(mut self, g: GreedyFn) -> Self {
        self.greedy = Some(g);
        self
    }

    pub fn with_coercivity(mut self, alpha: f64, gamma: WeightFn) -> Self {
        self.coercivity = Some(Coercivity { alpha, gamma });
        self
    }

    pub fn l(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (self.l1)(t, x) + (self.l2)(t, x, u)
    }

    /// Sample-based structural validation: nonnegativity of l1, l2 and the
    /// greedy zero-cost identity l2(t, x, u_g(t,x)) = 0.
    pub fn validate(&self, seed: u64) -> Result<()> {
        if let Exponent::Finite(p) = self.p {
            if !(p > 1.0) {
                return Err(Error::Config("exponent p must lie in (1, inf]".into()));
            }
        } else if self.control_set.is_none() {
            return Err(Error::Config("p = inf requires a control set".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..256 {
            let t: f64 = rng.gen_range(0.0..10.0);
            let x = DVector::from_fn(self.state_dim, |_, _| rng.gen_range(-5.0..5.0));
            let u = DVector::from_fn(self.control_dim, |_, _| rng.gen_range(-5.0..5.0));
            let v1 = (self.l1)(t, &x);
            let v2 = (self.l2)(t, &x, &u);
            if v1 < 0.0 || v2 < 0.0 {
                return Err(Error::Config("running costs must be nonnegative".into()));
            }
            if let Some(g) = &self.greedy {
                let ug = g(t, &x);
                if (self.l2)(t, &x, &ug).abs() > 1e-9 {
                    return Err(Error::Config("greedy control must zero out l2".into()));
                }
            }
        }
        Ok(())
    }
}

/// First detected constraint failure along an evaluated pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Violation {
    None,
    State(f64),
    Control(f64),
    /// Trajectory escaped before the horizon.
    Inadmissible,
}

#[derive(Debug, Clone)]
pub struct CostBreakdown {
    pub running: f64,
    pub tail: f64,
    pub violation: Violation,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.running + self.tail
    }

    pub fn to_json(&self) -> serde_json::Value {
        fn xr(v: f64) -> serde_json::Value {
            if v.is_finite() {
                json!(v)
            } else {
                json!("inf")
            }
        }
        let violation = match self.violation {
            Violation::None => json!({ "kind": "none", "time": null }),
            Violation::State(t) => json!({ "kind": "state", "time": t }),
            Violation::Control(t) => json!({ "kind": "control", "time": t }),
            Violation::Inadmissible => json!({ "kind": "inadmissible", "time": null }),
        };
        json!({
            "running": xr(self.running),
            "tail": xr(self.tail),
            "total": xr(self.total()),
            "violation": violation,
        })
    }

    fn inadmissible() -> Self {
        Self {
            running: f64::INFINITY,
            tail: f64::INFINITY,
            violation: Violation::Inadmissible,
        }
    }
}

fn norm_pow(u: &DVector<f64>, p: f64) -> f64 {
    u.norm().powf(p)
}

/// Running cost by per-interval trapezoid on the trajectory grid: the control
/// is constant between grid nodes (breakpoints are nodes), so each interval
/// uses its own control value at both ends.
fn running_cost(spec: &CostSpec, traj: &Trajectory, u: &PiecewiseControl, t_end: f64) -> f64 {
    let ts = traj.grid().nodes();
    let xs = traj.states();
    let mut acc = 0.0;
    for i in 1..ts.len() {
        if ts[i - 1] >= t_end {
            break;
        }
        let hi = ts[i].min(t_end);
        let um = u.eval(0.5 * (ts[i - 1] + hi));
        let f0 = spec.l(ts[i - 1], &xs[i - 1], &um);
        let f1 = spec.l(hi, &traj.interpolate(hi), &um);
        acc += 0.5 * (f0 + f1) * (hi - ts[i - 1]);
        if !acc.is_finite() {
            return f64::INFINITY;
        }
    }
    acc
}

/// Closed-form tail int_T^inf |u|^p dt of a piecewise-constant control:
/// finite (a finite sum) exactly when the tail value is zero.
fn finite_p_tail(u: &PiecewiseControl, t_start: f64, p: f64) -> f64 {
    if u.tail_value().norm() > 0.0 {
        return f64::INFINITY;
    }
    let bps = u.breakpoints();
    let vals = u.values();
    let mut acc = 0.0;
    for j in 0..vals.len() {
        let lo = bps[j].max(t_start);
        let hi = bps[j + 1];
        if hi > lo {
            acc += norm_pow(&vals[j], p) * (hi - lo);
        }
    }
    acc
}

/// First time at which the control leaves the set U, scanning every interval
/// value and the tail.
fn control_violation_time(u: &PiecewiseControl, set: &SetDescriptor) -> Option<f64> {
    let bps = u.breakpoints();
    let vals = u.values();
    for j in 0..vals.len() {
        if bps[j + 1] > bps[j] && !set.contains(&vals[j], 0.0) {
            return Some(bps[j]);
        }
    }
    if !set.contains(&u.tail_value(), 0.0) {
        return Some(*bps.last().unwrap());
    }
    None
}

/// Evaluate the tail-augmented functional for the pair (u, x(u)) on horizon T.
/// Failures are encoded as extended values, never errors.
pub fn evaluate(
    spec: &CostSpec,
    sys: &ControlSystem,
    u: &PiecewiseControl,
    x0: &DVector<f64>,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<CostBreakdown> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidInput("horizon T must be positive and finite".into()));
    }
    let traj = integrate(sys, u, x0, t_end, cfg)?;
    if traj.escape_time().map_or(false, |te| te <= t_end) {
        return Ok(CostBreakdown::inadmissible());
    }
    // state constraint at grid nodes
    if let Some(xset) = &spec.state_set {
        for (t, x) in traj.grid().nodes().iter().zip(traj.states()) {
            if !xset.contains(x, spec.state_margin) {
                return Ok(CostBreakdown {
                    running: f64::INFINITY,
                    tail: 0.0,
                    violation: Violation::State(*t),
                });
            }
        }
    }
    let tail = match spec.p {
        Exponent::Finite(p) => finite_p_tail(u, t_end, p),
        Exponent::Infinity => {
            let set = spec
                .control_set
                .as_ref()
                .ok_or_else(|| Error::Config("p = inf requires a control set".into()))?;
            if let Some(tv) = control_violation_time(u, set) {
                return Ok(CostBreakdown {
                    running: f64::INFINITY,
                    tail: f64::INFINITY,
                    violation: Violation::Control(tv),
                });
            }
            0.0
        }
    };
    Ok(CostBreakdown {
        running: running_cost(spec, &traj, u, t_end),
        tail,
        violation: Violation::None,
    })
}

/// Upper bound on the cost neglected beyond the truncation horizon.
#[derive(Debug, Clone, PartialEq)]
pub enum TailEstimate {
    Bound(f64),
    UnboundedTailUnknown,
}

/// Truncated stand-in for the infinite-horizon functional: running cost on
/// [0, T_max] plus an explicit bound on the neglected state-cost tail, fitted
/// from the exponential decay of l1 along the last quarter of the horizon.
pub fn evaluate_truncated_infinite(
    spec: &CostSpec,
    sys: &ControlSystem,
    u: &PiecewiseControl,
    x0: &DVector<f64>,
    t_max: f64,
    cfg: &IntegratorConfig,
) -> Result<(CostBreakdown, TailEstimate)> {
    let traj = integrate(sys, u, x0, t_max, cfg)?;
    if traj.escape_time().map_or(false, |te| te <= t_max) {
        return Ok((CostBreakdown::inadmissible(), TailEstimate::UnboundedTailUnknown));
    }
    let running = running_cost(spec, &traj, u, t_max);

    // fit log l1(t, x(t)) ~ a + s t on the last quarter; a negative slope s
    // bounds the tail by l1(T) / (-s)
    let ts = traj.grid().nodes();
    let xs = traj.states();
    let t_lo = 0.75 * t_max;
    let samples: Vec<(f64, f64)> = ts
        .iter()
        .zip(xs)
        .filter(|(t, _)| **t >= t_lo)
        .map(|(t, x)| (*t, (spec.l1)(*t, x)))
        .collect();
    let last_val = samples.last().map(|s| s.1).unwrap_or(0.0);
    let estimate = if samples.iter().all(|(_, v)| *v <= 1e-300) {
        TailEstimate::Bound(0.0)
    } else if samples.iter().any(|(_, v)| *v <= 0.0) {
        TailEstimate::UnboundedTailUnknown
    } else {
        let n = samples.len() as f64;
        let mt = samples.iter().map(|(t, _)| t).sum::<f64>() / n;
        let ml = samples.iter().map(|(_, v)| v.ln()).sum::<f64>() / n;
        let mut num = 0.0;
        let mut den = 0.0;
        for (t, v) in &samples {
            num += (t - mt) * (v.ln() - ml);
            den += (t - mt) * (t - mt);
        }
        let slope = if den > 0.0 { num / den } else { 0.0 };
        if slope < -1e-12 {
            TailEstimate::Bound(last_val / (-slope))
        } else {
            TailEstimate::UnboundedTailUnknown
        }
    };
    Ok((
        CostBreakdown {
            running,
            tail: 0.0,
            violation: Violation::None,
        },
        estimate,
    ))
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CoercivityReport {
    pub worst_margin: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Sample (t, x, u) and report the worst margin l2 - (alpha |u|^p - gamma(t)).
pub fn coercivity_probe(spec: &CostSpec, sample_count: usize, rng_seed: u64) -> Result<CoercivityReport> {
    let cert = spec
        .coercivity
        .as_ref()
        .ok_or_else(|| Error::Config("no coercivity certificate attached".into()))?;
    let p = match spec.p {
        Exponent::Finite(p) => p,
        Exponent::Infinity => {
            // compact control set takes over; nothing to falsify pointwise
            return Err(Error::Config(
                "coercivity probe applies to finite p only (p = inf uses a compact control set)".into(),
            ));
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut worst = f64::INFINITY;
    for _ in 0..sample_count {
        let t: f64 = rng.gen_range(0.0..10.0);
        let x = DVector::from_fn(spec.state_dim, |_, _| rng.gen_range(-5.0..5.0));
        let u = DVector::from_fn(spec.control_dim, |_, _| rng.gen_range(-5.0..5.0));
        let margin = (spec.l2)(t, &x, &u) - (cert.alpha * norm_pow(&u, p) - (cert.gamma)(t));
        if margin < worst {
            worst = margin;
        }
    }
    Ok(CoercivityReport {
        worst_margin: worst,
        samples: sample_count,
        pass: worst >= -1e-9,
    })
}

/// Quadratic state cost 1/2 |x|^2 with zero control cost (the switched-linear
/// objective).
pub fn half_state_square(n: usize, m: usize) -> CostSpec {
    let _ = m;
    CostSpec::new(
        n,
        m,
        Box::new(|_t, x: &DVector<f64>| 0.5 * x.norm_squared()),
        Box::new(|_t, _x: &DVector<f64>, _u: &DVector<f64>| 0.0),
        Exponent::Infinity,
    )
    .with_control_set(SetDescriptor::Box {
        lo: vec![0.0; m],
        hi: vec![1.0; m],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn zero_cost(n: usize, m: usize, p: Exponent) -> CostSpec {
        CostSpec::new(
            n,
            m,
            Box::new(|_t, _x| 0.0),
            Box::new(|_t, _x, _u| 0.0),
            p,
        )
    }

    fn decoupled_system(n: usize, m: usize) -> ControlSystem {
        ControlSystem::generic(
            n,
            m,
            Box::new(move |_t, _x| DVector::zeros(2)),
            Box::new(move |_t, _x| DMatrix::zeros(2, 1)),
        )
    }

    #[test]
    fn zero_cost_zero_total() {
        let spec = zero_cost(2, 1, Exponent::Finite(2.0));
        let sys = decoupled_system(2, 1);
        let u = PiecewiseControl::scalar(vec![0.0, 1.0], vec![1.0], 0.0).unwrap();
        let b = evaluate(&spec, &sys, &u, &DVector::zeros(2), 2.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(b.total(), 0.0);
        assert_eq!(b.violation, Violation::None);
    }

    #[test]
    fn nonzero_tail_value_diverges() {
        let spec = zero_cost(2, 1, Exponent::Finite(2.0));
        let sys = decoupled_system(2, 1);
        let u = PiecewiseControl::scalar(vec![0.0, 1.0], vec![1.0], 0.3).unwrap();
        let b = evaluate(&spec, &sys, &u, &DVector::zeros(2), 2.0, &IntegratorConfig::default()).unwrap();
        assert!(b.tail.is_infinite());
        assert!(b.total().is_infinite());
    }

    #[test]
    fn compact_support_tail_closed_form() {
        // |u| = 2 on [3, 5), zero after: int_3^inf |u|^2 = 8
        let u = PiecewiseControl::scalar(vec![0.0, 3.0, 5.0], vec![0.0, 2.0], 0.0).unwrap();
        assert_relative_eq!(finite_p_tail(&u, 3.0, 2.0), 8.0);
        // started inside the support: int_4^inf = 4
        assert_relative_eq!(finite_p_tail(&u, 4.0, 2.0), 4.0);
        assert_relative_eq!(finite_p_tail(&u, 5.0, 2.0), 0.0);
    }

    #[test]
    fn switched_zero_initial_state_costs_nothing() {
        let a1 = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let a2 = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -1.0]);
        let sys = ControlSystem::switched_linear(&a1, &a2);
        let spec = half_state_square(2, 1);
        for vals in [vec![0.0, 1.0], vec![1.0, 0.0], vec![0.5, 0.5]] {
            let u = PiecewiseControl::scalar(vec![0.0, 1.0, 2.0], vals, 0.0).unwrap();
            let b = evaluate(&spec, &sys, &u, &DVector::zeros(2), 3.0, &IntegratorConfig::default()).unwrap();
            assert!(b.total().abs() < 1e-12);
        }
    }

    #[test]
    fn escape_is_inadmissible() {
        let sys = ControlSystem::generic(
            1,
            1,
            Box::new(|_t, _x| DVector::zeros(1)),
            Box::new(|_t, x: &DVector<f64>| DMatrix::from_element(1, 1, x[0] * x[0])),
        );
        let spec = zero_cost(1, 1, Exponent::Finite(2.0));
        let u = PiecewiseControl::constant(DVector::from_vec(vec![1.0]));
        let b = evaluate(&spec, &sys, &u, &DVector::from_vec(vec![1.0]), 2.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(b.violation, Violation::Inadmissible);
        assert!(b.total().is_infinite());
    }

    #[test]
    fn control_set_violation_for_p_infinity() {
        let spec = zero_cost(2, 1, Exponent::Infinity).with_control_set(SetDescriptor::Box {
            lo: vec![0.0],
            hi: vec![1.0],
        });
        let sys = decoupled_system(2, 1);
        let u = PiecewiseControl::scalar(vec![0.0, 1.0, 2.0], vec![0.5, 1.5], 0.0).unwrap();
        let b = evaluate(&spec, &sys, &u, &DVector::zeros(2), 3.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(b.violation, Violation::Control(1.0));
        assert!(b.total().is_infinite());
    }

    #[test]
    fn state_constraint_first_violation_time() {
        // x' = u, x crosses 1 at t = 1 under u = 1
        let sys = ControlSystem::generic(
            1,
            1,
            Box::new(|_t, _x| DVector::zeros(1)),
            Box::new(|_t, _x| DMatrix::from_element(1, 1, 1.0)),
        );
        let spec = zero_cost(1, 1, Exponent::Finite(2.0)).with_state_set(
            SetDescriptor::Box {
                lo: vec![-10.0],
                hi: vec![1.0],
            },
            0.0,
        );
        let u = PiecewiseControl::scalar(vec![0.0, 3.0], vec![1.0], 0.0).unwrap();
        let b = evaluate(&spec, &sys, &u, &DVector::zeros(1), 3.0, &IntegratorConfig::default()).unwrap();
        match b.violation {
            Violation::State(t) => assert!(t >= 1.0 - 1e-9 && t < 1.2, "t = {t}"),
            other => panic!("expected state violation, got {other:?}"),
        }
    }

    #[test]
    fn truncated_infinite_zero_and_decay() {
        let spec = zero_cost(2, 1, Exponent::Finite(2.0));
        let sys = decoupled_system(2, 1);
        let u = PiecewiseControl::scalar(vec![0.0, 1.0], vec![0.0], 0.0).unwrap();
        let (b, est) = evaluate_truncated_infinite(&spec, &sys, &u, &DVector::zeros(2), 10.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(b.running, 0.0);
        assert_eq!(est, TailEstimate::Bound(0.0));
    }

    #[test]
    fn truncated_infinite_stable_switched_tail_bound() {
        let a1 = DMatrix::from_row_slice(2, 2, &[-0.5, 0.0, 0.0, -1.0]);
        let a2 = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -0.5]);
        let sys = ControlSystem::switched_linear(&a1, &a2);
        let spec = half_state_square(2, 1);
        let u = PiecewiseControl::scalar(vec![0.0, 2.0], vec![1.0], 0.0).unwrap();
        let x0 = DVector::from_vec(vec![1.0, 1.0]);
        let (b, est) = evaluate_truncated_infinite(&spec, &sys, &u, &x0, 80.0, &IntegratorConfig::default()).unwrap();
        assert!(b.running > 0.0 && b.running.is_finite());
        match est {
            TailEstimate::Bound(bd) => assert!(bd < 1e-6 * b.running, "bound {bd} vs running {}", b.running),
            other => panic!("expected a bound, got {other:?}"),
        }
    }

    #[test]
    fn coercivity_equality_and_falsification() {
        let base = |alpha: f64| {
            CostSpec::new(
                1,
                1,
                Box::new(|_t, _x| 0.0),
                Box::new(|_t, _x, u: &DVector<f64>| u.norm_squared()),
                Exponent::Finite(2.0),
            )
            .with_coercivity(alpha, Box::new(|_t| 0.0))
        };
        let ok = coercivity_probe(&base(1.0), 512, 7).unwrap();
        assert!(ok.pass);
        assert!(ok.worst_margin.abs() < 1e-9);
        let bad = coercivity_probe(&base(2.0), 512, 7).unwrap();
        assert!(!bad.pass);
        assert!(bad.worst_margin < 0.0);
    }

    #[test]
    fn probe_without_certificate_errors() {
        let spec = zero_cost(1, 1, Exponent::Finite(2.0));
        assert!(coercivity_probe(&spec, 16, 0).is_err());
    }

    #[test]
    fn breakdown_json_schema() {
        let b = CostBreakdown {
            running: 1.5,
            tail: f64::INFINITY,
            violation: Violation::Control(2.0),
        };
        let j = b.to_json();
        assert_eq!(j["running"], 1.5);
        assert_eq!(j["tail"], "inf");
        assert_eq!(j["total"], "inf");
        assert_eq!(j["violation"]["kind"], "control");
        assert_eq!(j["violation"]["time"], 2.0);
    }

    #[test]
    fn running_cost_monotone_in_horizon() {
        let a1 = DMatrix::from_row_slice(2, 2, &[-0.2, 0.1, 0.0, -0.3]);
        let a2 = DMatrix::from_row_slice(2, 2, &[-0.3, 0.0, 0.1, -0.2]);
        let sys = ControlSystem::switched_linear(&a1, &a2);
        let spec = half_state_square(2, 1);
        let u = PiecewiseControl::scalar(vec![0.0, 1.0], vec![1.0], 0.0).unwrap();
        let x0 = DVector::from_vec(vec![1.0, -1.0]);
        let mut prev = 0.0;
        for t in [1.0, 2.0, 4.0, 8.0] {
            let b = evaluate(&spec, &sys, &u, &x0, t, &IntegratorConfig::default()).unwrap();
            assert!(b.running >= prev - 1e-12);
            prev = b.running;
        }
    }

    #[test]
    fn validate_catches_bad_greedy() {
        let spec = CostSpec::new(
            1,
            1,
            Box::new(|_t, _x| 0.0),
            Box::new(|_t, _x, u: &DVector<f64>| (u[0] - 1.0) * (u[0] - 1.0)),
            Exponent::Finite(2.0),
        )
        .with_greedy(Box::new(|_t, _x| DVector::zeros(1)));
        assert!(spec.validate(3).is_err());
        let good = CostSpec::new(
            1,
            1,
            Box::new(|_t, _x| 0.0),
            Box::new(|_t, _x, u: &DVector<f64>| (u[0] - 1.0) * (u[0] - 1.0)),
            Exponent::Finite(2.0),
        )
        .with_greedy(Box::new(|_t, _x| DVector::from_vec(vec![1.0])));
        assert!(good.validate(3).is_ok());
    }
}
