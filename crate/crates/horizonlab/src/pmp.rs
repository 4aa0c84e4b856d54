//! Pontryagin machinery for the relaxed switched-linear problem
//! x' = B1 x + u B2 x with cost 1/2 int |x|^2: backward costate integration,
//! the switching function phi = p^T B2 x, and optimality residuals.

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use crate::dynamics::{rk_segment, IntegratorConfig, StepOutcome};
use crate::error::{Error, Result};
use crate::trajectory::{PiecewiseControl, TimeGrid, Trajectory};

/// Symmetric part S(M) = (M + M^T)/2.
pub fn sym_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Costate p(t) sampled on the state-trajectory grid, with the transversality
/// terminal condition p(T) = 0.
#[derive(Debug, Clone)]
pub struct CostateTrajectory {
    grid: TimeGrid,
    costates: Vec<DVector<f64>>,
}

impl CostateTrajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn costates(&self) -> &[DVector<f64>] {
        &self.costates
    }

    pub fn terminal(&self) -> &DVector<f64> {
        self.costates.last().unwrap()
    }
}

/// Solve p' = -x - B1^T p - u B2^T p backward from p(T) = 0, by adaptive RK on
/// the time-reversed equation with restarts at control breakpoints, then
/// resample onto the state grid. The state enters through the trajectory's
/// dense output.
pub fn costate_solve(
    b1: &DMatrix<f64>,
    b2: &DMatrix<f64>,
    x: &Trajectory,
    u: &PiecewiseControl,
    cfg: &IntegratorConfig,
) -> Result<CostateTrajectory> {
    if x.escape_time().is_some() {
        return Err(Error::Infeasible("costate undefined past a blow-up".into()));
    }
    let t_end = x.grid().t_end();
    let n = x.state_dim();
    let b1t = b1.transpose();
    let b2t = b2.transpose();

    // reversed clock s = T - t
    let f = |s: f64, q: &DVector<f64>| {
        let t = (t_end - s).max(0.0);
        let xs = x.interpolate(t);
        // evaluate u inside the interval containing t (left of a breakpoint
        // when s sits at a restart node, handled by segment midpoints below)
        let uv = u.eval(t);
        xs + &b1t * q + (&b2t * q) * uv[0]
    };

    let mut seg_ends: Vec<f64> = u
        .interior_breakpoints(t_end)
        .iter()
        .map(|&bp| t_end - bp)
        .collect();
    seg_ends.push(t_end);
    seg_ends.sort_by(|a, b| a.partial_cmp(b).unwrap());
    seg_ends.dedup();

    let mut ss = vec![0.0];
    let mut qs = vec![DVector::zeros(n)];
    let mut ds = Vec::new();
    let mut seg_start = 0.0;
    for seg_end in seg_ends {
        if seg_end <= seg_start {
            continue;
        }
        // freeze the control value for the whole segment so the reversed
        // integrator never straddles a jump
        let t_mid = t_end - 0.5 * (seg_start + seg_end);
        let uv = u.eval(t_mid);
        let fseg = |s: f64, q: &DVector<f64>| {
            let t = (t_end - s).max(0.0);
            let xs = x.interpolate(t);
            xs + &b1t * q + (&b2t * q) * uv[0]
        };
        match rk_segment(&fseg, seg_start, seg_end, &mut ss, &mut qs, &mut ds, cfg)? {
            StepOutcome::Finished => {}
            StepOutcome::Escaped(s) => {
                return Err(Error::NonFinite(format!("costate blew up at t = {}", t_end - s)));
            }
        }
        seg_start = seg_end;
    }
    let _ = f; // the per-segment closures shadow the generic one

    let q_traj = Trajectory::new(TimeGrid::new(ss)?, qs, None)?.with_interval_derivs(ds)?;
    let costates: Vec<DVector<f64>> = x
        .grid()
        .nodes()
        .iter()
        .map(|&t| q_traj.interpolate(t_end - t))
        .collect();
    if costates.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("costate has non-finite entries".into()));
    }
    Ok(CostateTrajectory {
        grid: x.grid().clone(),
        costates,
    })
}

/// The switching function phi(t) = p^T B2 x and its analytic derivative
/// phi'(t) = -x^T S(B2) x, sampled on the shared grid.
#[derive(Debug, Clone)]
pub struct SwitchingFunction {
    pub times: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi_dot: Vec<f64>,
}

pub fn switching_function(b2: &DMatrix<f64>, x: &Trajectory, p: &CostateTrajectory) -> Result<SwitchingFunction> {
    if x.grid() != p.grid() {
        return Err(Error::GridMismatch("state and costate grids differ".into()));
    }
    let s = sym_part(b2);
    let mut phi = Vec::with_capacity(x.grid().len());
    let mut phi_dot = Vec::with_capacity(x.grid().len());
    for (xi, pi) in x.states().iter().zip(p.costates()) {
        phi.push(pi.dot(&(b2 * xi)));
        phi_dot.push(-(xi.dot(&(&s * xi))));
    }
    Ok(SwitchingFunction {
        times: x.grid().nodes().to_vec(),
        phi,
        phi_dot,
    })
}

/// Optimality residuals: the sign (Weierstrass) condition u = 0 on {phi > 0},
/// u = 1 on {phi < 0}, constancy of the Hamiltonian, and the number of sign
/// changes of phi.
#[derive(Debug, Clone)]
pub struct PmpResiduals {
    pub weierstrass_violation: f64,
    pub hamiltonian_rel_var: f64,
    pub phi_zero_crossings: usize,
}

impl PmpResiduals {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "weierstrass_violation": self.weierstrass_violation,
            "hamiltonian_rel_var": self.hamiltonian_rel_var,
            "phi_zero_crossings": self.phi_zero_crossings,
        })
    }
}

/// Hamiltonian samples H = 1/2 x^T x + p^T B1 x + u phi on the shared grid.
pub fn hamiltonian_samples(
    b1: &DMatrix<f64>,
    b2: &DMatrix<f64>,
    x: &Trajectory,
    p: &CostateTrajectory,
    u: &PiecewiseControl,
) -> Result<Vec<f64>> {
    if x.grid() != p.grid() {
        return Err(Error::GridMismatch("state and costate grids differ".into()));
    }
    let nodes = x.grid().nodes();
    let mut out = Vec::with_capacity(nodes.len());
    for i in 0..nodes.len() {
        let xi = &x.states()[i];
        let pi = &p.costates()[i];
        let phi = pi.dot(&(b2 * xi));
        // at interior nodes use the midpoint of the following interval so
        // breakpoint nodes take the incoming-interval value consistently
        let t_eval = if i + 1 < nodes.len() {
            0.5 * (nodes[i] + nodes[i + 1])
        } else {
            nodes[i]
        };
        let uv = u.eval(t_eval);
        out.push(0.5 * xi.norm_squared() + pi.dot(&(b1 * xi)) + uv[0] * phi);
    }
    Ok(out)
}

/// Compute the residual triple from phi samples, the control, and Hamiltonian
/// samples. `delta` overrides the default zero band 1e-6 (1 + max |phi|).
pub fn residuals(
    sf: &SwitchingFunction,
    u: &PiecewiseControl,
    h_samples: &[f64],
    delta: Option<f64>,
) -> PmpResiduals {
    let max_phi = sf.phi.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let delta = delta.unwrap_or(1e-6 * (1.0 + max_phi));
    let t_total = *sf.times.last().unwrap() - sf.times[0];

    // grid measure of sign-rule violations, interval by interval
    let mut bad = 0.0;
    for i in 1..sf.times.len() {
        let h = sf.times[i] - sf.times[i - 1];
        let phi_mid = 0.5 * (sf.phi[i] + sf.phi[i - 1]);
        let uv = u.eval(0.5 * (sf.times[i] + sf.times[i - 1]))[0];
        let violated = (phi_mid > delta && uv > delta) || (phi_mid < -delta && uv < 1.0 - delta);
        if violated {
            bad += h;
        }
    }

    let (mut hmax, mut hmin) = (f64::NEG_INFINITY, f64::INFINITY);
    for &h in h_samples {
        hmax = hmax.max(h);
        hmin = hmin.min(h);
    }
    let h_end = *h_samples.last().unwrap_or(&0.0);
    let rel_var = if h_samples.is_empty() {
        0.0
    } else {
        (hmax - hmin) / (1.0 + h_end.abs())
    };

    PmpResiduals {
        weierstrass_violation: bad / t_total,
        hamiltonian_rel_var: rel_var,
        phi_zero_crossings: zero_crossings(&sf.phi, delta),
    }
}

/// Count sign changes of a sampled function, ignoring the band |v| <= delta.
pub fn zero_crossings(values: &[f64], delta: f64) -> usize {
    let mut count = 0;
    let mut last_sign = 0i8;
    for &v in values {
        let s = if v > delta {
            1
        } else if v < -delta {
            -1
        } else {
            0
        };
        if s != 0 {
            if last_sign != 0 && s != last_sign {
                count += 1;
            }
            last_sign = s;
        }
    }
    count
}

/// Synthesize the bang-bang control from the sign rule of a sampled switching
/// function: u = 0 where phi > 0, u = 1 where phi < 0; ties keep the previous
/// value (initialized to 0).
pub fn control_from_sign_rule(sf: &SwitchingFunction, delta: f64) -> PiecewiseControl {
    let mut bps = vec![0.0];
    let mut vals: Vec<f64> = Vec::new();
    let mut current = if sf.phi[0] < -delta { 1.0 } else { 0.0 };
    vals.push(current);
    for i in 1..sf.times.len() - 1 {
        let desired = if sf.phi[i] > delta {
            0.0
        } else if sf.phi[i] < -delta {
            1.0
        } else {
            current
        };
        if desired != current {
            // place the switch at the linearly interpolated zero crossing
            let (p0, p1) = (sf.phi[i - 1], sf.phi[i]);
            let t_switch = if p0 * p1 <= 0.0 && (p1 - p0).abs() > 0.0 {
                sf.times[i - 1] + (sf.times[i] - sf.times[i - 1]) * (0.0 - p0) / (p1 - p0)
            } else {
                sf.times[i]
            };
            bps.push(t_switch.max(*bps.last().unwrap()));
            vals.push(desired);
            current = desired;
        }
    }
    bps.push(*sf.times.last().unwrap());
    PiecewiseControl::scalar(bps, vals, 0.0).expect("sign-rule control is well formed")
}
