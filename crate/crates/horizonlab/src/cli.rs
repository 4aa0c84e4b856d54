//! Command-line frontend: declarative JSON problem specs, subcommands
//! wrapping every module, deterministic output artifacts.
//!
//! Exit codes: 0 success, 1 usage/parse error, 2 infeasible problem or
//! trajectory escape.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use serde_json::json;

use crate::dynamics::{integrate, ControlSystem, IntegratorConfig};
use crate::error::{Error, Result};
use crate::gammalab::{closure_probe, dyadic_dictionary, gap_curve, gaps_to_csv, WeakStarSequence};
use crate::pattern::{certify_limit, sweep, sweep_to_csv, SweepConfig, SweepProblem};
use crate::pmp::{costate_solve, hamiltonian_samples, residuals, switching_function};
use crate::sir::{optimize_npi, optimize_vaccination, sir_simulate, Arc3Mode, SirParams};
use crate::switched::{
    optimize_single_switch, relaxed_direct_solve, single_switch_control, snap_and_merge,
    transition_count, check_condition, ConditionOptions, ConditionType, RelaxedOptions,
    SwitchedPair,
};
use crate::trajectory::PiecewiseControl;

#[derive(Parser)]
#[command(
    name = "horizonlab",
    version,
    about = "Numerical laboratory for horizon-dependent optimal-control switching patterns",
    disable_help_subcommand = true
)]
struct Cli {
    /// Number of worker threads (fallback: HORIZONLAB_JOBS, then all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a system under controls from a JSON file and write a
    /// trajectory CSV (footer `# escape_time=...` on blow-up)
    Simulate {
        /// Problem spec JSON (spec_version 1)
        #[arg(long)]
        spec: PathBuf,
        /// Control JSON with keys `u` (switched / linear) or `b`, `v` (SIR)
        #[arg(long)]
        control: PathBuf,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the bang-bang sign conditions for a matrix pair; prints a JSON
    /// report (verdict is data: exit 0 either way)
    CheckCondition {
        /// JSON file with square matrices A1, A2
        #[arg(long)]
        matrices: PathBuf,
    },
    /// Solve the single-switch problem parametrically and by relaxed direct
    /// descent; prints a JSON comparison with optimality residuals
    Solve {
        #[arg(long)]
        spec: PathBuf,
        /// Write the JSON report here instead of standard output
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Horizon sweep: writes sweep.csv, residuals.json and certification.json
    /// into the output directory
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Weak-star gap and closure probes for generator sequences
    GammaProbe {
        #[arg(long)]
        spec: PathBuf,
        /// Write the gap table as CSV here (JSON always goes to stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal bang-bang vaccination switch time
    SirVacc {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Optimal four-phase transmission control
    SirNpi {
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ProblemKind {
    Switched,
    SirVacc,
    SirNpi,
    LinearLqrProbe,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Tolerances {
    #[serde(default)]
    abs_tol: Option<f64>,
    #[serde(default)]
    rel_tol: Option<f64>,
    #[serde(default)]
    max_step: Option<f64>,
    #[serde(default)]
    escape_radius: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GammaSpec {
    /// "chatter" | "oscillation" | "scaled_pulse"
    sequence: String,
    #[serde(default)]
    mean: Option<f64>,
    #[serde(default)]
    amplitude: Option<f64>,
    #[serde(default)]
    rates: Option<Vec<f64>>,
    ks: Vec<usize>,
    t_end: f64,
    #[serde(default)]
    dict_levels: Option<u32>,
    #[serde(default)]
    dict_degree: Option<u32>,
    /// "switched" (uses the matrices from the problem file) or "blowup"
    /// (x' = x^2 u) to also
    /// run the trajectory-closure probe
    #[serde(default)]
    closure_system: Option<String>,
}

/// Versioned problem spec; unknown keys are rejected.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    spec_version: u64,
    problem: ProblemKind,
    #[serde(default)]
    matrices: Option<serde_json::Value>,
    #[serde(default)]
    sir: Option<SirParams>,
    #[serde(default)]
    x0: Option<Vec<f64>>,
    #[serde(default)]
    t_end: Option<f64>,
    #[serde(default)]
    horizons: Option<Vec<f64>>,
    #[serde(default)]
    condition: Option<String>,
    #[serde(default)]
    arc3_mode: Option<Arc3Mode>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    relaxed_intervals: Option<usize>,
    #[serde(default)]
    t_cert: Option<f64>,
    #[serde(default)]
    competitors: Option<usize>,
    #[serde(default)]
    tolerances: Option<Tolerances>,
    #[serde(default)]
    gamma: Option<GammaSpec>,
}

impl SpecFile {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: SpecFile = serde_json::from_str(&text)?;
        if spec.spec_version != 1 {
            return Err(Error::Config(format!(
                "unsupported spec_version {} (expected 1)",
                spec.spec_version
            )));
        }
        Ok(spec)
    }

    fn integrator(&self) -> IntegratorConfig {
        let mut cfg = IntegratorConfig::default();
        if let Some(t) = &self.tolerances {
            if let Some(v) = t.abs_tol {
                cfg.abs_tol = v;
            }
            if let Some(v) = t.rel_tol {
                cfg.rel_tol = v;
            }
            if let Some(v) = t.max_step {
                cfg.max_step = v;
            }
            if let Some(v) = t.escape_radius {
                cfg.escape_radius = v;
            }
        }
        cfg
    }

    fn x0(&self) -> Result<DVector<f64>> {
        let v = self
            .x0
            .as_ref()
            .ok_or_else(|| Error::Config("spec is missing x0".into()))?;
        Ok(DVector::from_vec(v.clone()))
    }

    fn t_end(&self) -> Result<f64> {
        self.t_end
            .ok_or_else(|| Error::Config("spec is missing t_end".into()))
    }

    fn pair(&self) -> Result<SwitchedPair> {
        let m = self
            .matrices
            .as_ref()
            .ok_or_else(|| Error::Config("spec is missing matrices".into()))?;
        SwitchedPair::from_json(m)
    }

    fn sir(&self) -> Result<SirParams> {
        let p = self
            .sir
            .clone()
            .ok_or_else(|| Error::Config("spec is missing sir parameters".into()))?;
        p.validate()?;
        Ok(p)
    }

    fn condition(&self) -> Result<ConditionType> {
        match self.condition.as_deref() {
            None | Some("one_zero") => Ok(ConditionType::OneZero),
            Some("zero_one") => Ok(ConditionType::ZeroOne),
            Some(other) => Err(Error::Config(format!("unknown condition type '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlFile {
    #[serde(default)]
    u: Option<PiecewiseControl>,
    #[serde(default)]
    b: Option<PiecewiseControl>,
    #[serde(default)]
    v: Option<PiecewiseControl>,
}

impl ControlFile {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn parse_matrix(v: &serde_json::Value, key: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = serde_json::from_value(
        v.get(key)
            .cloned()
            .ok_or_else(|| Error::Config(format!("matrices file is missing '{key}'")))?,
    )?;
    let nr = rows.len();
    let nc = rows.first().map(|r| r.len()).unwrap_or(0);
    if nr == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err(Error::Config(format!("'{key}' is not a rectangular matrix")));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Infeasible(_) | Error::EscapeBefore { .. } | Error::InvalidInput(_) => 2,
        _ => 1,
    }
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprint!("{e}");
            return 1;
        }
    };
    let jobs = cli.jobs.or_else(|| {
        std::env::var("HORIZONLAB_JOBS")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    if let Some(n) = jobs {
        // ignore the error when a global pool already exists (tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Simulate { spec, control, out } => cmd_simulate(&spec, &control, &out),
        Command::CheckCondition { matrices } => cmd_check_condition(&matrices),
        Command::Solve { spec, out } => cmd_solve(&spec, out.as_deref()),
        Command::Sweep { spec, out_dir } => cmd_sweep(&spec, &out_dir),
        Command::GammaProbe { spec, out } => cmd_gamma_probe(&spec, out.as_deref()),
        Command::SirVacc { spec } => cmd_sir_vacc(&spec),
        Command::SirNpi { spec } => cmd_sir_npi(&spec),
    }
}

fn cmd_simulate(spec_path: &Path, control_path: &Path, out: &Path) -> Result<i32> {
    let spec = SpecFile::load(spec_path)?;
    let controls = ControlFile::load(control_path)?;
    let cfg = spec.integrator();
    let x0 = spec.x0()?;
    let t_end = spec.t_end()?;

    let (traj, sir_headers) = match spec.problem {
        ProblemKind::Switched => {
            let pair = spec.pair()?;
            let u = controls
                .u
                .ok_or_else(|| Error::Config("control file is missing 'u'".into()))?;
            (integrate(&pair.system(), &u, &x0, t_end, &cfg)?, false)
        }
        ProblemKind::SirVacc | ProblemKind::SirNpi => {
            let params = spec.sir()?;
            let b = controls
                .b
                .unwrap_or_else(|| PiecewiseControl::constant(DVector::from_vec(vec![params.beta])));
            let v = controls
                .v
                .unwrap_or_else(|| PiecewiseControl::constant(DVector::zeros(1)));
            (sir_simulate(&params, &b, &v, &x0, t_end, &cfg)?, true)
        }
        ProblemKind::LinearLqrProbe => {
            let m = spec
                .matrices
                .as_ref()
                .ok_or_else(|| Error::Config("spec is missing matrices".into()))?;
            let a = parse_matrix(m, "A")?;
            let b = parse_matrix(m, "B")?;
            if a.nrows() != a.ncols() || b.nrows() != a.nrows() {
                return Err(Error::Config("A must be square and B conformable".into()));
            }
            let u = controls
                .u
                .ok_or_else(|| Error::Config("control file is missing 'u'".into()))?;
            let (n, mm) = (a.nrows(), b.ncols());
            let a = Arc::new(move |_t: f64| a.clone());
            let b = Arc::new(move |_t: f64| b.clone());
            let sys = ControlSystem::linear_tv_shared(n, mm, a, b);
            (integrate(&sys, &u, &x0, t_end, &cfg)?, false)
        }
    };

    let mut csv = traj.to_csv();
    if sir_headers {
        csv = csv.replacen("t,x1,x2", "t,s,i", 1);
    }
    std::fs::write(out, csv)?;
    if let Some(te) = traj.escape_time() {
        eprintln!("trajectory escaped at t = {te:.12e}; CSV truncated");
        return Ok(2);
    }
    Ok(0)
}

fn cmd_check_condition(matrices_path: &Path) -> Result<i32> {
    let text = std::fs::read_to_string(matrices_path)?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    let pair = SwitchedPair::from_json(&v)?;
    let opts = ConditionOptions::default();
    let one_zero = check_condition(&pair, ConditionType::OneZero, &opts);
    let zero_one = check_condition(&pair, ConditionType::ZeroOne, &opts);
    let report = json!({
        "commutes": pair.commutes(),
        "one_zero": one_zero.to_json(),
        "zero_one": zero_one.to_json(),
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(0)
}

fn cmd_solve(spec_path: &Path, out: Option<&Path>) -> Result<i32> {
    let spec = SpecFile::load(spec_path)?;
    if spec.problem != ProblemKind::Switched {
        return Err(Error::Config("solve supports the switched problem kind".into()));
    }
    let pair = spec.pair()?;
    let ctype = spec.condition()?;
    let x0 = spec.x0()?;
    let t_end = spec.t_end()?;
    let cfg = spec.integrator();

    let parametric = optimize_single_switch(&pair, ctype, &x0, t_end, &cfg)?;
    let n = spec.relaxed_intervals.unwrap_or(200);
    let relaxed = relaxed_direct_solve(&pair, &x0, t_end, n, &cfg, &RelaxedOptions::default())?;
    let snapped = snap_and_merge(&relaxed.u, t_end / n as f64, 0.05);

    let u_opt = single_switch_control(ctype, parametric.tau, t_end);
    let traj = integrate(&pair.system(), &u_opt, &x0, t_end, &cfg)?;
    let p = costate_solve(&pair.b1, &pair.b2, &traj, &u_opt, &cfg)?;
    let sf = switching_function(&pair.b2, &traj, &p)?;
    let hs = hamiltonian_samples(&pair.b1, &pair.b2, &traj, &p, &u_opt)?;
    let resid = residuals(&sf, &u_opt, &hs, None);

    let report = json!({
        "parametric": {
            "tau": parametric.tau,
            "cost": parametric.cost,
            "flat_objective": parametric.flat_objective,
        },
        "relaxed": {
            "cost": relaxed.cost,
            "converged": relaxed.converged,
            "iterations": relaxed.iterations,
            "transitions_after_snap": transition_count(&snapped),
        },
        "residuals": resid.to_json(),
    });
    let text = serde_json::to_string_pretty(&report)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(0)
}

fn sweep_problem(spec: &SpecFile) -> Result<SweepProblem> {
    Ok(match spec.problem {
        ProblemKind::Switched => SweepProblem::Switched {
            pair: spec.pair()?,
            ctype: spec.condition()?,
            x0: spec.x0()?,
        },
        ProblemKind::SirVacc => SweepProblem::SirVacc {
            params: spec.sir()?,
            x0: spec.x0()?,
        },
        ProblemKind::SirNpi => SweepProblem::SirNpi {
            params: spec.sir()?,
            x0: spec.x0()?,
            mode: spec.arc3_mode.unwrap_or_default(),
        },
        ProblemKind::LinearLqrProbe => {
            return Err(Error::Config("sweep does not support linear_lqr_probe".into()))
        }
    })
}

fn cmd_sweep(spec_path: &Path, out_dir: &Path) -> Result<i32> {
    let spec = SpecFile::load(spec_path)?;
    let horizons = spec
        .horizons
        .clone()
        .ok_or_else(|| Error::Config("spec is missing horizons".into()))?;
    let problem = sweep_problem(&spec)?;
    let cfg = SweepConfig {
        integrator: spec.integrator(),
        ..SweepConfig::default()
    };

    let result = sweep(&problem, &horizons, &cfg)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("sweep.csv"), sweep_to_csv(&result))?;

    let residuals: Vec<serde_json::Value> = result
        .records
        .iter()
        .map(|r| {
            json!({
                "T": r.t_end,
                "taus": r.taus,
                "arc_values": r.arc_values,
                "cost": if r.cost.is_finite() { json!(r.cost) } else { json!("inf") },
                "infeasible": r.infeasible,
                "residuals": r.residuals.as_ref().map(|x| x.to_json()),
                "arc3_mode": r.arc3_mode,
                "arc_deviation": r.arc_deviation,
            })
        })
        .collect();
    let diag = json!({
        "records": residuals,
        "classification": result.classification,
        "tau_infinity": result.tau_infinity.iter().map(|&t| {
            if t.is_finite() { json!(t) } else { json!("inf") }
        }).collect::<Vec<_>>(),
        "diagnostics": result.diagnostics,
        "any_infeasible": result.any_infeasible,
    });
    std::fs::write(
        out_dir.join("residuals.json"),
        serde_json::to_string_pretty(&diag)? + "\n",
    )?;

    let certification = if result.tau_infinity.iter().all(|t| t.is_finite()) {
        let t_cert = spec.t_cert.unwrap_or(*horizons.last().unwrap());
        let budget = spec.competitors.unwrap_or(50);
        let seed = spec.seed.unwrap_or(0);
        certify_limit(&problem, &result.tau_infinity, t_cert, budget, seed, &cfg)?.to_json()
    } else {
        json!({
            "certified": false,
            "reason": "a switch time diverges with the horizon; no finite pattern to certify",
        })
    };
    std::fs::write(
        out_dir.join("certification.json"),
        serde_json::to_string_pretty(&certification)? + "\n",
    )?;

    if result.records.iter().all(|r| r.infeasible) {
        eprintln!("all horizons infeasible");
        return Ok(2);
    }
    if result.any_infeasible {
        eprintln!("warning: some horizons were infeasible; flagged in residuals.json");
    }
    Ok(0)
}

fn cmd_gamma_probe(spec_path: &Path, out: Option<&Path>) -> Result<i32> {
    let spec = SpecFile::load(spec_path)?;
    let g = spec
        .gamma
        .clone()
        .ok_or_else(|| Error::Config("spec is missing the gamma section".into()))?;
    let seq = match g.sequence.as_str() {
        "chatter" => WeakStarSequence::Chatter {
            mean: g.mean.unwrap_or(0.5),
        },
        "oscillation" => WeakStarSequence::Oscillation {
            mean: g.mean.unwrap_or(0.0),
            amplitude: g
                .amplitude
                .ok_or_else(|| Error::Config("oscillation needs an amplitude".into()))?,
        },
        "scaled_pulse" => WeakStarSequence::ScaledPulse {
            rates: g
                .rates
                .clone()
                .ok_or_else(|| Error::Config("scaled_pulse needs rates".into()))?,
        },
        other => return Err(Error::Config(format!("unknown sequence kind '{other}'"))),
    };
    let dict = dyadic_dictionary(g.t_end, g.dict_levels.unwrap_or(3), g.dict_degree.unwrap_or(2));
    let gaps = gap_curve(&seq, &g.ks, &dict, g.t_end)?;

    let closure = match g.closure_system.as_deref() {
        None => None,
        Some(kind) => {
            let sys = match kind {
                "switched" => spec.pair()?.system(),
                "blowup" => ControlSystem::generic(
                    1,
                    1,
                    Box::new(|_t, _x: &DVector<f64>| DVector::zeros(1)),
                    Box::new(|_t, x: &DVector<f64>| DMatrix::from_element(1, 1, x[0] * x[0])),
                ),
                other => return Err(Error::Config(format!("unknown closure system '{other}'"))),
            };
            let x0 = spec.x0()?;
            Some(closure_probe(&sys, &seq, &g.ks, &x0, g.t_end, &spec.integrator())?)
        }
    };

    let report = json!({
        "gaps": gaps,
        "closure": closure,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(p) = out {
        std::fs::write(p, gaps_to_csv(&gaps))?;
    }
    Ok(0)
}

fn cmd_sir_vacc(spec_path: &Path) -> Result<i32> {
    let spec = SpecFile::load(spec_path)?;
    let params = spec.sir()?;
    let res = optimize_vaccination(&params, &spec.x0()?, spec.t_end()?, &spec.integrator())?;
    let report = json!({
        "tau1": res.tau1,
        "cost": res.cost,
        "max_slack": res.max_slack,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(0)
}

fn cmd_sir_npi(spec_path: &Path) -> Result<i32> {
    let spec = SpecFile::load(spec_path)?;
    let params = spec.sir()?;
    let res = optimize_npi(
        &params,
        &spec.x0()?,
        spec.t_end()?,
        spec.arc3_mode.unwrap_or_default(),
        &spec.integrator(),
    )?;
    println!("{}", serde_json::to_string_pretty(&res.to_json())?);
    Ok(0)
}
