//! Controlled SIR epidemic model
//!   s' = -b s i - v s,   i' = b s i - gamma i
//! with transmission control b in [beta_star, beta], vaccination v in
//! [0, v_max], running cost lambda_b (beta - b) + lambda_v v + lambda_i i and
//! the hard infection cap i <= i_max. The unit triangle
//! {s >= 0, i >= 0, s + i <= 1} is forward invariant.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dynamics::{integrate, ControlSystem, IntegratorConfig};
use crate::error::{Error, Result};
use crate::optim::{golden_min, grid_then_golden};
use crate::trajectory::{PiecewiseControl, Trajectory};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SirParams {
    pub beta_star: f64,
    pub beta: f64,
    pub gamma: f64,
    pub v_max: f64,
    pub i_max: f64,
    #[serde(default)]
    pub lambda_b: f64,
    #[serde(default)]
    pub lambda_v: f64,
    #[serde(default)]
    pub lambda_i: f64,
}

impl SirParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta_star > 0.0
            && self.beta < 1.0
            && self.beta_star <= self.beta
            && self.gamma > 0.0
            && self.v_max > 0.0
            && self.i_max > 0.0
            && self.i_max <= 1.0
            && self.lambda_b >= 0.0
            && self.lambda_v >= 0.0
            && self.lambda_i >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("SIR parameters out of range".into()))
        }
    }

    /// Control-affine form with stacked control u = (b, v):
    /// a(x) = (0, -gamma i), input map [[-s i, -s], [s i, 0]].
    pub fn system(&self) -> ControlSystem {
        let gamma = self.gamma;
        ControlSystem::generic(
            2,
            2,
            Box::new(move |_t, x: &DVector<f64>| DVector::from_vec(vec![0.0, -gamma * x[1]])),
            Box::new(|_t, x: &DVector<f64>| {
                DMatrix::from_row_slice(2, 2, &[-x[0] * x[1], -x[0], x[0] * x[1], 0.0])
            }),
        )
    }
}

pub fn in_triangle(x: &DVector<f64>, tol: f64) -> bool {
    x[0] >= -tol && x[1] >= -tol && x[0] + x[1] <= 1.0 + tol
}

fn check_range(u: &PiecewiseControl, lo: f64, hi: f64, label: &str) -> Result<()> {
    let tol = 1e-9;
    let ok = u
        .values()
        .iter()
        .chain(std::iter::once(&u.tail_value()))
        .all(|v| v[0] >= lo - tol && v[0] <= hi + tol);
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{label} control leaves [{lo}, {hi}]")))
    }
}

/// Simulate the controlled SIR system; blow-up is impossible inside the
/// triangle, so the trajectory always covers [0, T].
pub fn sir_simulate(
    params: &SirParams,
    b: &PiecewiseControl,
    v: &PiecewiseControl,
    x0: &DVector<f64>,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    params.validate()?;
    if !in_triangle(x0, 1e-12) {
        return Err(Error::InvalidInput("initial condition outside unit triangle".into()));
    }
    check_range(b, params.beta_star, params.beta, "transmission")?;
    check_range(v, 0.0, params.v_max, "vaccination")?;
    let u = PiecewiseControl::stack(b, v);
    integrate(&params.system(), &u, x0, t_end, cfg)
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub trials: usize,
    pub max_violation: f64,
}

/// Random initial conditions in the triangle and random admissible piecewise
/// controls; reports the worst violation of the triangle constraints.
pub fn triangle_invariance_check(
    params: &SirParams,
    trials: usize,
    rng_seed: u64,
    cfg: &IntegratorConfig,
) -> Result<InvarianceReport> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut worst = 0.0f64;
    for _ in 0..trials.max(1) {
        let x0 = loop {
            let s: f64 = rng.gen_range(0.0..1.0);
            let i: f64 = rng.gen_range(0.0..1.0);
            if s + i <= 1.0 {
                break DVector::from_vec(vec![s, i]);
            }
        };
        let t_end = rng.gen_range(1.0..20.0);
        let mut make_control = |lo: f64, hi: f64| {
            let pieces = rng.gen_range(1..4usize);
            let mut bps = vec![0.0];
            for _ in 0..pieces {
                bps.push(rng.gen_range(0.0..t_end));
            }
            bps.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let vals: Vec<f64> = (0..pieces).map(|_| rng.gen_range(lo..hi)).collect();
            let tail = rng.gen_range(lo..hi);
            PiecewiseControl::scalar(bps, vals, tail).unwrap()
        };
        let b = make_control(params.beta_star, params.beta);
        let v = make_control(0.0, params.v_max);
        let traj = sir_simulate(params, &b, &v, &x0, t_end, cfg)?;
        for x in traj.states() {
            let viol = (-x[0]).max(-x[1]).max(x[0] + x[1] - 1.0).max(0.0);
            worst = worst.max(viol);
        }
    }
    Ok(InvarianceReport {
        trials,
        max_violation: worst,
    })
}

/// Running cost int lambda_b (beta - b) + lambda_v v + lambda_i i dt by
/// per-interval trapezoid on the trajectory grid (controls are constant
/// between nodes).
pub fn sir_cost(
    params: &SirParams,
    traj: &Trajectory,
    b: &PiecewiseControl,
    v: &PiecewiseControl,
    t_end: f64,
) -> f64 {
    let ts = traj.grid().nodes();
    let xs = traj.states();
    let mut acc = 0.0;
    for k in 1..ts.len() {
        if ts[k - 1] >= t_end {
            break;
        }
        let hi = ts[k].min(t_end);
        let h = hi - ts[k - 1];
        let tm = 0.5 * (ts[k - 1] + hi);
        let bv = b.eval(tm)[0];
        let vv = v.eval(tm)[0];
        let f0 = params.lambda_b * (params.beta - bv) + params.lambda_v * vv + params.lambda_i * xs[k - 1][1];
        let i1 = traj.interpolate(hi)[1];
        let f1 = params.lambda_b * (params.beta - bv) + params.lambda_v * vv + params.lambda_i * i1;
        acc += 0.5 * h * (f0 + f1);
    }
    acc
}

/// Largest excess of i over the cap along the trajectory (negative when the
/// constraint is slack everywhere).
pub fn constraint_slack(params: &SirParams, traj: &Trajectory) -> f64 {
    traj.states()
        .iter()
        .map(|x| x[1] - params.i_max)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct VaccinationResult {
    pub tau1: f64,
    pub cost: f64,
    /// max_t i(t) - i_max at the optimum; feasibility means <= ~0.
    pub max_slack: f64,
}

/// Optimal bang-bang vaccination v = v_max on [0, tau1), 0 afterwards, with
/// b = beta fixed. Candidates violating i <= i_max at any node score +inf.
pub fn optimize_vaccination(
    params: &SirParams,
    x0: &DVector<f64>,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<VaccinationResult> {
    params.validate()?;
    let b = PiecewiseControl::constant(DVector::from_vec(vec![params.beta]));
    let feas_tol = 1e-9;
    let cost_at = |tau1: f64| -> f64 {
        let v = vaccination_control(params, tau1, t_end);
        let Ok(traj) = sir_simulate(params, &b, &v, x0, t_end, cfg) else {
            return f64::INFINITY;
        };
        if constraint_slack(params, &traj) > feas_tol {
            return f64::INFINITY;
        }
        sir_cost(params, &traj, &b, &v, t_end)
    };
    let grid_points = 65;
    let any_feasible = (0..grid_points)
        .map(|k| cost_at(t_end * k as f64 / (grid_points - 1) as f64))
        .any(|c| c.is_finite());
    if !any_feasible {
        return Err(Error::Infeasible(
            "no vaccination switch time keeps i below the cap (x0 outside the viable set)".into(),
        ));
    }
    let (tau1, cost) = grid_then_golden(&cost_at, 0.0, t_end, grid_points, 1e-7 * t_end);
    let v = vaccination_control(params, tau1, t_end);
    let traj = sir_simulate(params, &b, &v, x0, t_end, cfg)?;
    Ok(VaccinationResult {
        tau1,
        cost,
        max_slack: constraint_slack(params, &traj),
    })
}

pub fn vaccination_control(params: &SirParams, tau1: f64, t_end: f64) -> PiecewiseControl {
    let tau1 = tau1.clamp(0.0, t_end);
    PiecewiseControl::scalar(vec![0.0, tau1], vec![params.v_max], 0.0).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arc3Mode {
    #[serde(rename = "feedback_keep_iM")]
    /// b = gamma / s(t) on the third arc, the feedback that freezes i at the
    /// cap; in closed form gamma / (s(tau2) - gamma i_max (t - tau2)).
    FeedbackKeepIm,
    #[serde(rename = "formula_as_printed")]
    /// The alternative closed form beta - gamma / (s(tau2) + gamma i_max
    /// (tau2 - t)); implemented for comparison, not expected to hold i at the
    /// cap (see the per-mode deviation report).
    FormulaAsPrinted,
}

impl Default for Arc3Mode {
    fn default() -> Self {
        Arc3Mode::FeedbackKeepIm
    }
}

impl Arc3Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Arc3Mode::FeedbackKeepIm => "feedback_keep_iM",
            Arc3Mode::FormulaAsPrinted => "formula_as_printed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct NpiControl {
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    pub arc3_mode: Arc3Mode,
}

/// Build the four-phase transmission control: beta on [0, tau1), beta_star on
/// [tau1, tau2), the synthesized third arc on [tau2, tau3) (sampled piecewise
/// constant and clipped to [beta_star, beta]), and beta afterwards. `s_tau2`
/// is the susceptible fraction when the third arc starts.
pub fn npi_transmission_control(
    params: &SirParams,
    npi: &NpiControl,
    s_tau2: f64,
    arc_samples: usize,
) -> PiecewiseControl {
    let mut bps = vec![0.0];
    let mut vals = Vec::new();
    if npi.tau1 > 0.0 {
        bps.push(npi.tau1);
        vals.push(params.beta);
    }
    if npi.tau2 > npi.tau1 {
        bps.push(npi.tau2);
        vals.push(params.beta_star);
    }
    if npi.tau3 > npi.tau2 {
        let n = arc_samples.max(1);
        for k in 0..n {
            let t0 = npi.tau2 + (npi.tau3 - npi.tau2) * k as f64 / n as f64;
            let t1 = npi.tau2 + (npi.tau3 - npi.tau2) * (k + 1) as f64 / n as f64;
            let tm = 0.5 * (t0 + t1);
            let denom = s_tau2 - params.gamma * params.i_max * (tm - npi.tau2);
            let raw = match npi.arc3_mode {
                Arc3Mode::FeedbackKeepIm => {
                    if denom > 1e-12 {
                        params.gamma / denom
                    } else {
                        params.beta
                    }
                }
                Arc3Mode::FormulaAsPrinted => {
                    if denom.abs() > 1e-12 {
                        params.beta - params.gamma / denom
                    } else {
                        params.beta_star
                    }
                }
            };
            bps.push(t1);
            vals.push(raw.clamp(params.beta_star, params.beta));
        }
    }
    PiecewiseControl::scalar(bps, vals, params.beta).unwrap()
}

#[derive(Debug, Clone, Serialize)]
pub struct ArcModeReport {
    pub mode: &'static str,
    pub cost: f64,
    /// max |i - i_max| over the third arc under this mode's control.
    pub arc_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NpiResult {
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    pub arc3_mode: &'static str,
    pub cost: f64,
    pub max_slack: f64,
    pub mode_reports: Vec<ArcModeReport>,
    /// Which arc3 mode holds i closest to the cap on the third arc.
    pub saturating_mode: &'static str,
}

impl NpiResult {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "tau1": self.tau1,
            "tau2": self.tau2,
            "tau3": self.tau3,
            "arc3_mode": self.arc3_mode,
            "cost": if self.cost.is_finite() { json!(self.cost) } else { json!("inf") },
            "max_slack": self.max_slack,
            "mode_reports": self.mode_reports,
            "saturating_mode": self.saturating_mode,
        })
    }
}

const ARC_SAMPLES: usize = 400;

/// Cost of the four-phase control at the given switch times (+inf when the
/// cap is violated), together with the synthesized transmission control.
pub fn npi_candidate_cost(
    params: &SirParams,
    x0: &DVector<f64>,
    t_end: f64,
    taus: (f64, f64, f64),
    mode: Arc3Mode,
    cfg: &IntegratorConfig,
) -> Result<(f64, PiecewiseControl)> {
    let (tau1, tau2, tau3) = taus;
    let npi = NpiControl {
        tau1,
        tau2,
        tau3,
        arc3_mode: mode,
    };
    let v = PiecewiseControl::constant(DVector::zeros(1));
    // first pass to find s(tau2)
    let s_tau2 = if tau3 > tau2 {
        let head = npi_transmission_control(
            params,
            &NpiControl {
                tau1,
                tau2,
                tau3: tau2,
                arc3_mode: mode,
            },
            0.0,
            1,
        );
        let t_head = tau2.max(1e-9);
        let traj = sir_simulate(params, &head, &v, x0, t_head, cfg)?;
        traj.final_state()[0]
    } else {
        0.0
    };
    let b = npi_transmission_control(params, &npi, s_tau2, ARC_SAMPLES);
    let traj = sir_simulate(params, &b, &v, x0, t_end, cfg)?;
    if constraint_slack(params, &traj) > 1e-7 {
        return Ok((f64::INFINITY, b));
    }
    Ok((sir_cost(params, &traj, &b, &v, t_end), b))
}

/// First time i(t) crosses `level` under constant b = beta, v = 0; None when
/// it never does on [0, T].
pub fn first_crossing(
    params: &SirParams,
    x0: &DVector<f64>,
    level: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Option<f64>> {
    let b = PiecewiseControl::constant(DVector::from_vec(vec![params.beta]));
    let v = PiecewiseControl::constant(DVector::zeros(1));
    let traj = sir_simulate(params, &b, &v, x0, t_end, cfg)?;
    let ts = traj.grid().nodes();
    let xs = traj.states();
    for k in 1..ts.len() {
        if xs[k][1] >= level {
            let (i0, i1) = (xs[k - 1][1], xs[k][1]);
            let w = if (i1 - i0).abs() > 0.0 { (level - i0) / (i1 - i0) } else { 0.0 };
            return Ok(Some(ts[k - 1] + w.clamp(0.0, 1.0) * (ts[k] - ts[k - 1])));
        }
    }
    Ok(None)
}

/// Four-phase NPI optimizer with v = 0: coordinate descent with golden-section
/// line searches over (tau1, tau2, tau3), warm-started at the time i first
/// crosses i_max / 2 under b = beta, and always comparing against the
/// collapsed no-intervention candidate.
pub fn optimize_npi(
    params: &SirParams,
    x0: &DVector<f64>,
    t_end: f64,
    mode: Arc3Mode,
    cfg: &IntegratorConfig,
) -> Result<NpiResult> {
    params.validate()?;
    if params.lambda_i != 0.0 {
        return Err(Error::Config("NPI optimizer requires lambda_i = 0".into()));
    }
    let score = |taus: (f64, f64, f64)| -> f64 {
        if !(0.0 <= taus.0 && taus.0 <= taus.1 && taus.1 <= taus.2 && taus.2 <= t_end) {
            return f64::INFINITY;
        }
        npi_candidate_cost(params, x0, t_end, taus, mode, cfg)
            .map(|(c, _)| c)
            .unwrap_or(f64::INFINITY)
    };

    // candidate list: collapsed (no intervention) plus a warm start around the
    // first approach of the cap
    let mut best = (0.0, 0.0, 0.0);
    let mut best_cost = score(best);
    let warm = first_crossing(params, x0, 0.5 * params.i_max, t_end, cfg)?;
    if let Some(t_half) = warm {
        for (f1, f2, f3) in [(1.0, 1.5, 3.0), (0.8, 2.0, 4.0), (1.0, 1.2, 2.0), (0.5, 1.5, 3.5)] {
            let cand = (
                (f1 * t_half).min(t_end),
                (f2 * t_half).min(t_end),
                (f3 * t_half).min(t_end),
            );
            let c = score(cand);
            if c < best_cost {
                best_cost = c;
                best = cand;
            }
        }
    }
    // coarse scan in case the warm start was infeasible everywhere
    if !best_cost.is_finite() {
        let n = 8;
        for a in 0..n {
            for b_ in a..n {
                for c_ in b_..n {
                    let cand = (
                        t_end * a as f64 / n as f64,
                        t_end * b_ as f64 / n as f64,
                        t_end * c_ as f64 / n as f64,
                    );
                    let c = score(cand);
                    if c < best_cost {
                        best_cost = c;
                        best = cand;
                    }
                }
            }
        }
    }
    if !best_cost.is_finite() {
        return Err(Error::Infeasible(
            "no four-phase candidate keeps i below the cap".into(),
        ));
    }

    // coordinate descent
    for _round in 0..4 {
        let (_t1, t2, t3) = best;
        let (nt1, c1) = golden_min(&|x| score((x, t2.max(x), t3.max(x))), 0.0, t2, 1e-6 * t_end);
        if c1 < best_cost {
            best_cost = c1;
            best = (nt1, t2.max(nt1), t3.max(nt1));
        }
        let (t1, _t2, t3) = best;
        let (nt2, c2) = golden_min(&|x| score((t1, x, t3.max(x))), t1, t3.max(t1), 1e-6 * t_end);
        if c2 < best_cost {
            best_cost = c2;
            best = (t1, nt2, t3.max(nt2));
        }
        let (t1, t2, _t3) = best;
        let (nt3, c3) = golden_min(&|x| score((t1, t2, x)), t2, t_end, 1e-6 * t_end);
        if c3 < best_cost {
            best_cost = c3;
            best = (t1, t2, nt3);
        }
    }

    // per-mode reports at the found switch times
    let mut mode_reports = Vec::new();
    let v = PiecewiseControl::constant(DVector::zeros(1));
    for m in [Arc3Mode::FeedbackKeepIm, Arc3Mode::FormulaAsPrinted] {
        let (c, bm) = npi_candidate_cost(params, x0, t_end, best, m, cfg)?;
        let traj = sir_simulate(params, &bm, &v, x0, t_end, cfg)?;
        let dev = arc_deviation(params, &traj, best.1, best.2);
        mode_reports.push(ArcModeReport {
            mode: m.name(),
            cost: c,
            arc_deviation: dev,
        });
    }
    let saturating = if mode_reports[0].arc_deviation <= mode_reports[1].arc_deviation {
        mode_reports[0].mode
    } else {
        mode_reports[1].mode
    };
    let (_, b_best) = npi_candidate_cost(params, x0, t_end, best, mode, cfg)?;
    let traj = sir_simulate(params, &b_best, &v, x0, t_end, cfg)?;
    Ok(NpiResult {
        tau1: best.0,
        tau2: best.1,
        tau3: best.2,
        arc3_mode: mode.name(),
        cost: best_cost,
        max_slack: constraint_slack(params, &traj),
        mode_reports,
        saturating_mode: saturating,
    })
}

/// max |i - i_max| on [tau2, tau3].
pub fn arc_deviation(params: &SirParams, traj: &Trajectory, tau2: f64, tau3: f64) -> f64 {
    if tau3 <= tau2 {
        return 0.0;
    }
    traj.grid()
        .nodes()
        .iter()
        .zip(traj.states())
        .filter(|(t, _)| **t >= tau2 && **t <= tau3)
        .map(|(_, x)| (x[1] - params.i_max).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn base_params() -> SirParams {
        SirParams {
            beta_star: 0.05,
            beta: 0.5,
            gamma: 0.1,
            v_max: 0.3,
            i_max: 0.1,
            lambda_b: 1.0,
            lambda_v: 1.0,
            lambda_i: 1.0,
        }
    }

    #[test]
    fn zero_infection_decouples_s() {
        let p = base_params();
        let b = PiecewiseControl::constant(DVector::from_vec(vec![p.beta]));
        let v = PiecewiseControl::scalar(vec![0.0, 2.0], vec![0.2], 0.0).unwrap();
        let x0 = DVector::from_vec(vec![0.8, 0.0]);
        let traj = sir_simulate(&p, &b, &v, &x0, 5.0, &IntegratorConfig::default()).unwrap();
        for (t, x) in traj.grid().nodes().iter().zip(traj.states()) {
            assert!(x[1].abs() < 1e-12);
            let int_v = 0.2 * t.min(2.0);
            assert_relative_eq!(x[0], 0.8 * (-int_v).exp(), epsilon = 1e-8);
        }
    }

    #[test]
    fn classical_first_integral_conserved() {
        // v = 0, b constant: s + i - (gamma/b) ln s is conserved
        let p = base_params();
        let b = PiecewiseControl::constant(DVector::from_vec(vec![0.3]));
        let v = PiecewiseControl::constant(DVector::zeros(1));
        let x0 = DVector::from_vec(vec![0.9, 0.05]);
        let traj = sir_simulate(&p, &b, &v, &x0, 50.0, &IntegratorConfig::default()).unwrap();
        let inv = |s: f64, i: f64| s + i - (p.gamma / 0.3) * s.ln();
        let v0 = inv(0.9, 0.05);
        let mut drift = 0.0f64;
        for x in traj.states() {
            drift = drift.max((inv(x[0], x[1]) - v0).abs());
        }
        assert!(drift < 1e-6, "drift = {drift}");
    }

    #[test]
    fn s_plus_i_nonincreasing() {
        let p = base_params();
        let b = PiecewiseControl::scalar(vec![0.0, 3.0], vec![0.4], 0.1).unwrap();
        let v = PiecewiseControl::scalar(vec![0.0, 1.0], vec![0.25], 0.05).unwrap();
        let x0 = DVector::from_vec(vec![0.7, 0.2]);
        let traj = sir_simulate(&p, &b, &v, &x0, 10.0, &IntegratorConfig::default()).unwrap();
        let mut prev = f64::INFINITY;
        for x in traj.states() {
            let tot = x[0] + x[1];
            assert!(tot <= prev + 1e-10);
            prev = tot;
        }
    }

    #[test]
    fn invariance_small_batch() {
        let p = base_params();
        let rep = triangle_invariance_check(&p, 100, 42, &IntegratorConfig::default()).unwrap();
        assert!(rep.max_violation < 1e-9, "violation = {}", rep.max_violation);
    }

    #[test]
    fn stationary_origin() {
        let p = base_params();
        let b = PiecewiseControl::constant(DVector::from_vec(vec![p.beta]));
        let v = PiecewiseControl::constant(DVector::from_vec(vec![p.v_max]));
        let traj = sir_simulate(&p, &b, &v, &DVector::zeros(2), 5.0, &IntegratorConfig::default()).unwrap();
        for x in traj.states() {
            assert!(x.norm() < 1e-14);
        }
    }

    #[test]
    fn outside_triangle_rejected() {
        let p = base_params();
        let b = PiecewiseControl::constant(DVector::from_vec(vec![p.beta]));
        let v = PiecewiseControl::constant(DVector::zeros(1));
        let bad = DVector::from_vec(vec![0.8, 0.5]);
        assert!(sir_simulate(&p, &b, &v, &bad, 1.0, &IntegratorConfig::default()).is_err());
    }

    #[test]
    fn vaccination_no_epidemic_no_vaccination() {
        let mut p = base_params();
        p.i_max = 1.0;
        p.lambda_v = 1.0;
        let x0 = DVector::from_vec(vec![0.9, 0.0]);
        let res = optimize_vaccination(&p, &x0, 10.0, &IntegratorConfig::default()).unwrap();
        assert!(res.tau1 < 1e-5, "tau1 = {}", res.tau1);
        assert!(res.cost.abs() < 1e-8);
    }

    #[test]
    fn vaccination_matches_brute_force() {
        // slack constraint, infection cost only: optimizer vs brute force
        let mut p = base_params();
        p.i_max = 1.0;
        p.lambda_b = 0.0;
        p.lambda_v = 0.2;
        p.lambda_i = 1.0;
        let x0 = DVector::from_vec(vec![0.9, 0.02]);
        let t_end = 12.0;
        let cfg = IntegratorConfig::default();
        let res = optimize_vaccination(&p, &x0, t_end, &cfg).unwrap();
        // brute force over 400 switch times
        let b = PiecewiseControl::constant(DVector::from_vec(vec![p.beta]));
        let mut bf_tau = 0.0;
        let mut bf_cost = f64::INFINITY;
        for k in 0..=400 {
            let tau = t_end * k as f64 / 400.0;
            let v = vaccination_control(&p, tau, t_end);
            let traj = sir_simulate(&p, &b, &v, &x0, t_end, &cfg).unwrap();
            let c = sir_cost(&p, &traj, &b, &v, t_end);
            if c < bf_cost {
                bf_cost = c;
                bf_tau = tau;
            }
        }
        assert!(
            (res.tau1 - bf_tau).abs() <= t_end / 400.0 + 1e-9,
            "opt {} vs brute {}",
            res.tau1,
            bf_tau
        );
        assert!(res.cost <= bf_cost + 1e-9);
        // endpoint domination
        for tau in [0.0, t_end] {
            let v = vaccination_control(&p, tau, t_end);
            let traj = sir_simulate(&p, &b, &v, &x0, t_end, &cfg).unwrap();
            assert!(res.cost <= sir_cost(&p, &traj, &b, &v, t_end) + 1e-9);
        }
    }

    #[test]
    fn npi_subcritical_collapses() {
        let mut p = base_params();
        p.i_max = 1.0;
        p.lambda_v = 0.0;
        p.lambda_i = 0.0;
        // beta s0 < gamma: epidemic dies out on its own
        let x0 = DVector::from_vec(vec![0.15, 0.01]);
        let res = optimize_npi(&p, &x0, 10.0, Arc3Mode::FeedbackKeepIm, &IntegratorConfig::default()).unwrap();
        assert!(res.cost.abs() < 1e-9, "cost = {}", res.cost);
        assert!(res.tau2 - res.tau1 < 1e-6 && res.tau3 - res.tau2 < 1e-6);
    }

    #[test]
    fn feedback_arc_holds_cap() {
        // construct an active-constraint third arc directly: run b = beta
        // until i hits the cap, then hand over to the feedback arc
        let mut p = base_params();
        p.lambda_v = 0.0;
        p.lambda_i = 0.0;
        let cfg = IntegratorConfig::default();
        let x0 = DVector::from_vec(vec![0.95, 0.01]);
        let tau2 = first_crossing(&p, &x0, p.i_max, 40.0, &cfg).unwrap().expect("cap reached");
        let tau3 = tau2 + 15.0;
        let npi = NpiControl {
            tau1: tau2,
            tau2,
            tau3,
            arc3_mode: Arc3Mode::FeedbackKeepIm,
        };
        let b_head = PiecewiseControl::constant(DVector::from_vec(vec![p.beta]));
        let v = PiecewiseControl::constant(DVector::zeros(1));
        let head = sir_simulate(&p, &b_head, &v, &x0, tau2, &cfg).unwrap();
        let s_tau2 = head.final_state()[0];
        let b = npi_transmission_control(&p, &npi, s_tau2, ARC_SAMPLES);
        let traj = sir_simulate(&p, &b, &v, &x0, tau3 + 5.0, &cfg).unwrap();
        let dev = arc_deviation(&p, &traj, tau2 + 0.05, tau3);
        assert!(dev < 1e-4, "deviation = {dev}");
        // printed formula at the same switch times does not hold the cap
        let npi2 = NpiControl {
            arc3_mode: Arc3Mode::FormulaAsPrinted,
            ..npi
        };
        let b2 = npi_transmission_control(&p, &npi2, s_tau2, ARC_SAMPLES);
        let traj2 = sir_simulate(&p, &b2, &v, &x0, tau3 + 5.0, &cfg).unwrap();
        let dev2 = arc_deviation(&p, &traj2, tau2 + 0.05, tau3);
        assert!(dev2 > dev, "printed formula unexpectedly saturates the cap");
    }

    #[test]
    fn params_json_roundtrip_rejects_unknown() {
        let p = base_params();
        let s = serde_json::to_string(&p).unwrap();
        let back: SirParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back.beta, p.beta);
        let with_extra = r#"{"beta_star":0.05,"beta":0.5,"gamma":0.1,"v_max":0.3,"i_max":0.1,"bogus":1}"#;
        assert!(serde_json::from_str::<SirParams>(with_extra).is_err());
    }
}
