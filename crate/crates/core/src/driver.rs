//! Experiment drivers: single runs, ε-sweeps and initial-data export.
//!
//! A run directory holds `manifest.json` (resolved configuration, code
//! version, numerical conventions, outcome), `series.csv` (one row per
//! accepted step plus the initial row) and `*.lela` state snapshots.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::config::{InitialConfig, SimulationConfig};
use crate::diagnostics::{
    constraint_residuals, correction_integrand, energy_functional, physical_energy, smallness, taylor_sign_min,
    CorrectionIntegral, EnergyReport, TaylorMonitor, TimeDerivatives,
};
use crate::error::{Error, Result};
use crate::evolve::{cfl_dt, evolve_to, picard_solve, rhs, Model, TimeStep};
use crate::field::ScalarField;
use crate::geometry::{dealias, eulerian_divergence, vector_gradient, FlowMap, FlowState, ReferenceDeformation};
use crate::initdata::{construct_initial_data, CompatibleData, IterationSettings};
use crate::io::{read_state, write_json, write_snapshot, write_state};
use crate::smoothing::{GeometryCache, MollifierKernel};

/// Version of the `series.csv` column layout.
pub const SERIES_SCHEMA: u32 = 1;

/// Numerical conventions recorded in every manifest.
pub fn conventions() -> serde_json::Value {
    json!({
        "laplacian": "tangential spectral Laplacian plus the normal derivative operator applied twice",
        "neumann_solvability": "zero tangential mode projected along the discrete left null vector",
        "torus_smoothing": "eta_tilde = Lambda^2 eta, psi = 0",
        "interior_invariants": "divergence identities are checked at interior nodes",
        "cfl_elastic_bound": "Frobenius norm of F0 per node",
        "dealiasing": "2/3 rule in y1, y2",
        "functional_truncation": "row k uses floor(k*order/4) time derivatives",
        "picard_stages": "stage coefficients from the matching stage of the previous iterate",
    })
}

/// Initial state, reference deformation and (if constructed) the data record.
pub fn prepare_initial(cfg: &SimulationConfig) -> Result<(FlowState, ReferenceDeformation, Option<CompatibleData>)> {
    let g = cfg.grid()?;
    match &cfg.initial {
        InitialConfig::Builtin { name } => {
            let d = name.data(&g)?;
            let f0 = ReferenceDeformation::new(d.g0);
            let eta = FlowMap::identity(&g);
            let f = f0.transport(&eta);
            Ok((FlowState { t: 0.0, eta, v: d.v0, h: d.q0, f }, f0, None))
        }
        InitialConfig::Snapshot { path } => {
            let (state, f0) = read_state(path)?;
            if state.grid() != &g {
                return Err(Error::Config(format!(
                    "snapshot {} has grid {:?}, configuration asks for {:?}",
                    path.display(),
                    state.grid(),
                    g
                )));
            }
            Ok((state, f0, None))
        }
        InitialConfig::Construct { seed, order, max_iter } => {
            if !g.is_slab() {
                return Err(Error::RequiresSlab("initial-data construction"));
            }
            let inc = seed.data(&g)?;
            let settings = IterationSettings { max_iter: *max_iter, tol: cfg.tolerances.elliptic_tol, epsilon_min: cfg.epsilon_min };
            let data = construct_initial_data(&inc, cfg.epsilon.0, *order, settings)?;
            let (state, f0) = data.initial_state();
            Ok((state, f0, Some(data)))
        }
    }
}

pub fn build_model(cfg: &SimulationConfig, f0: ReferenceDeformation) -> Result<Model> {
    let g = f0.grid().clone();
    let mut model = Model::new(f0, cfg.equation_of_state()?, MollifierKernel::new(&g, cfg.kappa)?);
    model.jac_floor = cfg.jac_floor;
    model.filter = cfg.flags.filter_on;
    Ok(model)
}

/// Per-step bookkeeping shared by runs and sweeps.
struct Monitor<'a> {
    model: &'a Model,
    order: usize,
    correction: CorrectionIntegral,
    taylor: TaylorMonitor,
    max_eprime_dth: f64,
}

impl<'a> Monitor<'a> {
    fn new(model: &'a Model, cfg: &SimulationConfig) -> Self {
        Self {
            model,
            order: cfg.functional_order,
            correction: CorrectionIntegral::new(model.f0.grid()),
            taylor: TaylorMonitor::new(cfg.c0),
            max_eprime_dth: 0.0,
        }
    }

    fn report(&mut self, state: &FlowState, geo: &GeometryCache, dt: f64) -> Result<EnergyReport> {
        let m = self.model;
        let rates = rhs(state, geo, &m.f0, &m.eos)?;
        let derivs = if self.order >= 2 {
            TimeDerivatives::compute(state, m, self.order)?
        } else {
            let mut d = TimeDerivatives { eta: vec![state.eta.displacement.clone()], v: vec![state.v.clone()], h: vec![state.h.clone()] };
            if self.order == 1 {
                d.eta.push(rates.eta.clone());
                d.v.push(rates.v.clone());
                d.h.push(rates.h.clone());
            }
            d
        };
        self.correction.push(state.t, correction_integrand(state, geo, &m.f0, &m.kernel)?);
        let residuals = constraint_residuals(state, geo, &m.f0, &m.eos, &rates, Some(&self.correction));
        let eprime_dth = rates.h.mul(&m.eos.de_field(&state.h)).max_abs();
        self.max_eprime_dth = self.max_eprime_dth.max(eprime_dth);
        let taylor_min = taylor_sign_min(&state.h);
        if let Some(tm) = taylor_min {
            self.taylor.observe(state.t, tm);
        }
        Ok(EnergyReport {
            t: state.t,
            dt,
            energy: physical_energy(state, geo, &m.eos),
            functional: energy_functional(state, geo, &m.eos, &m.f0, &m.kernel, &derivs, self.order)?,
            taylor_min,
            smallness: smallness(geo),
            residuals,
        })
    }
}

/// Result of a completed run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub directory: PathBuf,
    pub steps: usize,
    pub initial: EnergyReport,
    pub last: EnergyReport,
    pub final_state: FlowState,
    /// States at the requested sample times.
    pub samples: Vec<FlowState>,
    pub max_eprime_dth: f64,
    pub taylor_warnings: usize,
    pub initial_data: Option<CompatibleData>,
}

impl RunOutcome {
    /// `|E(T) − E(0)| / |E(0)|` of the physical energy.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.initial.energy.total;
        (self.last.energy.total - e0).abs() / e0.abs().max(f64::MIN_POSITIVE)
    }
}

/// Runs one configuration, writing into `cfg.output.directory`.
pub fn run(cfg: &SimulationConfig) -> Result<RunOutcome> {
    run_sampled(cfg, &[])
}

/// The compressible evolution has no meaning at `ε = ∞` (`e′ ≡ 0`); only the
/// initial-data construction accepts it.
fn require_finite_epsilon(eps: f64) -> Result<()> {
    if eps.is_finite() {
        Ok(())
    } else {
        Err(Error::Config("epsilon = inf is accepted by initdata only; run and sweep need a finite epsilon".into()))
    }
}

/// Like [`run`], additionally keeping the states at `sample_times`
/// (which must lie in `(0, t_final]`, increasing).
pub fn run_sampled(cfg: &SimulationConfig, sample_times: &[f64]) -> Result<RunOutcome> {
    cfg.validate()?;
    require_finite_epsilon(cfg.epsilon.0)?;
    let dir = cfg.output.directory.clone();
    fs::create_dir_all(&dir)?;
    let mut manifest = json!({
        "code_version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "conventions": conventions(),
        "series_schema": SERIES_SCHEMA,
        "status": "running",
    });
    write_json(&dir.join("manifest.json"), &manifest)?;
    let result = run_inner(cfg, &dir, sample_times, &mut manifest);
    match &result {
        Ok(out) => {
            manifest["status"] = json!("ok");
            manifest["steps"] = json!(out.steps);
            manifest["t_end"] = json!(out.final_state.t);
            manifest["energy_drift"] = json!(out.energy_drift());
            manifest["taylor_warnings"] = json!(out.taylor_warnings);
        }
        Err(e) => {
            manifest["status"] = json!("error");
            manifest["error"] = json!(e.to_string());
            manifest["exit_code"] = json!(e.exit_code());
        }
    }
    write_json(&dir.join("manifest.json"), &manifest)?;
    result
}

fn run_inner(cfg: &SimulationConfig, dir: &Path, sample_times: &[f64], manifest: &mut serde_json::Value) -> Result<RunOutcome> {
    let (state, f0, data) = prepare_initial(cfg)?;
    if let Some(d) = &data {
        manifest["initial_data"] = initdata_summary(d);
    }
    let model = build_model(cfg, f0)?;
    model.eos.check_range(&state.h, cfg.eos_a)?;
    let mut monitor = Monitor::new(&model, cfg);
    let geo0 = model.geometry(&state)?;
    let initial = monitor.report(&state, &geo0, 0.0)?;

    let mut series = csv::Writer::from_path(dir.join("series.csv"))?;
    series.write_record(initial.header())?;
    series.write_record(initial.record())?;

    if cfg.flags.picard_mode {
        return run_picard(cfg, dir, state, &model, &mut monitor, initial, &mut series, data, sample_times);
    }

    let step = match cfg.dt {
        Some(dt) => TimeStep::Fixed(dt),
        None => TimeStep::Cfl(cfg.cfl),
    };
    let stride = cfg.output.snapshot_stride;
    let mut steps = 0usize;
    let mut last = initial.clone();
    let mut last_good = state.clone();
    let mut samples = Vec::new();
    let mut current = state;
    let mut targets: Vec<f64> = sample_times.iter().copied().filter(|&t| t < cfg.t_final).collect();
    targets.push(cfg.t_final);
    for (k, &target) in targets.iter().enumerate() {
        let outcome = evolve_to(current.clone(), &model, target, step, |s, geo, dt| {
            steps += 1;
            model.eos.check_range(&s.h, cfg.eos_a)?;
            let rep = monitor.report(s, geo, dt)?;
            series.write_record(rep.record())?;
            if stride > 0 && steps % stride == 0 {
                write_state(&dir.join(format!("snap_{steps:06}.lela")), s, &model.f0)?;
            }
            last = rep;
            last_good = s.clone();
            Ok(())
        });
        current = match outcome {
            Ok(s) => s,
            Err(e) => {
                series.flush()?;
                write_state(&dir.join("abort.lela"), &last_good, &model.f0)?;
                return Err(e);
            }
        };
        if k < sample_times.len() {
            samples.push(current.clone());
        }
    }
    series.flush()?;
    write_state(&dir.join("final.lela"), &current, &model.f0)?;
    Ok(RunOutcome {
        directory: dir.to_path_buf(),
        steps,
        initial,
        last,
        final_state: current,
        samples,
        max_eprime_dth: monitor.max_eprime_dth,
        taylor_warnings: monitor.taylor.warnings,
        initial_data: data,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_picard(
    cfg: &SimulationConfig,
    dir: &Path,
    state: FlowState,
    model: &Model,
    monitor: &mut Monitor<'_>,
    initial: EnergyReport,
    series: &mut csv::Writer<fs::File>,
    data: Option<CompatibleData>,
    sample_times: &[f64],
) -> Result<RunOutcome> {
    let dt = match cfg.dt {
        Some(dt) => dt,
        None => cfl_dt(&state, &model.geometry(&state)?, &model.f0, &model.eos, cfg.cfl)?,
    };
    let steps = ((cfg.t_final / dt).ceil() as usize).max(1);
    let out = picard_solve(&state, model, cfg.t_final, steps, cfg.picard_max_iter, cfg.tolerances.tol_picard)?;
    let h = cfg.t_final / steps as f64;
    let mut last = initial.clone();
    for s in &out.trajectory[1..] {
        let geo = model.geometry(s)?;
        last = monitor.report(s, &geo, h)?;
        series.write_record(last.record())?;
    }
    series.flush()?;
    let mut w = csv::Writer::from_path(dir.join("picard.csv"))?;
    w.write_record(["iterate", "difference"])?;
    for (k, d) in out.differences.iter().enumerate() {
        w.write_record([(k + 1).to_string(), format!("{d:e}")])?;
    }
    w.flush()?;
    let final_state = out.trajectory.last().expect("non-empty trajectory").clone();
    write_state(&dir.join("final.lela"), &final_state, &model.f0)?;
    let samples = sample_times
        .iter()
        .map(|&t| {
            let k = ((t / h).round() as usize).min(steps);
            out.trajectory[k].clone()
        })
        .collect();
    Ok(RunOutcome {
        directory: dir.to_path_buf(),
        steps,
        initial,
        last,
        final_state,
        samples,
        max_eprime_dth: monitor.max_eprime_dth,
        taylor_warnings: monitor.taylor.warnings,
        initial_data: data,
    })
}

// ---------------------------------------------------------------------------
// Sweep

#[derive(Clone, Debug, Serialize)]
pub struct SweepMember {
    pub epsilon: f64,
    pub directory: PathBuf,
    pub steps: usize,
    /// `max_t ‖e′(h)∂_t h‖_∞`.
    pub max_eprime_dth: f64,
    /// Interior `‖div_ã v‖_∞` at the final time.
    pub div_v_final: f64,
    /// `‖v₀ε − v₀‖_{ℓ²}` of the constructed data (0 for other sources).
    pub data_correction: f64,
}

/// Sup over matched sample times of the max-norm differences between two
/// consecutive members.
#[derive(Clone, Debug, Serialize)]
pub struct CauchyRow {
    pub epsilon_a: f64,
    pub epsilon_b: f64,
    pub v: f64,
    pub f: f64,
    pub h: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub epsilons: Vec<f64>,
    pub sample_times: Vec<f64>,
    pub members: Vec<SweepMember>,
    pub cauchy: Vec<CauchyRow>,
    pub complete: bool,
}

/// Runs `base` at every `ε` (non-decreasing, at least three) from the same seed
/// and records Cauchy differences at matched times.
pub fn epsilon_sweep(base: &SimulationConfig, epsilons: &[f64], samples: usize) -> Result<SweepResult> {
    if epsilons.len() < 3 {
        return Err(Error::Config(format!("a sweep needs at least 3 epsilon values, got {}", epsilons.len())));
    }
    if epsilons.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("sweep epsilon values must be non-decreasing".into()));
    }
    for &eps in epsilons {
        require_finite_epsilon(eps)?;
    }
    let root = base.output.directory.clone();
    fs::create_dir_all(&root)?;
    let samples = samples.max(1);
    let times: Vec<f64> = (1..=samples).map(|k| base.t_final * k as f64 / samples as f64).collect();
    let mut result = SweepResult { epsilons: epsilons.to_vec(), sample_times: times.clone(), members: Vec::new(), cauchy: Vec::new(), complete: false };
    let mut previous: Option<(f64, Vec<FlowState>)> = None;
    let mut failure = None;
    for (k, &eps) in epsilons.iter().enumerate() {
        let mut cfg = base.with_epsilon(eps);
        cfg.output.directory = root.join(format!("member-{k}-eps-{eps:e}"));
        let out = match run_sampled(&cfg, &times[..times.len() - 1]) {
            Ok(o) => o,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        let mut states = out.samples.clone();
        states.push(out.final_state.clone());
        let kernel = MollifierKernel::new(out.final_state.grid(), cfg.kappa)?;
        let geo = GeometryCache::new(&out.final_state.eta, &out.final_state.v, &kernel, cfg.jac_floor)?;
        let div_v = dealias(&eulerian_divergence(geo.a_tilde(), &vector_gradient(&out.final_state.v))).max_abs_interior();
        let data_correction = out
            .initial_data
            .as_ref()
            .map(|d| {
                let seed = d.v0.sub(&initial_seed_velocity(&cfg).unwrap_or_else(|| d.v0.clone()));
                seed.l2()
            })
            .unwrap_or(0.0);
        result.members.push(SweepMember {
            epsilon: eps,
            directory: out.directory.clone(),
            steps: out.steps,
            max_eprime_dth: out.max_eprime_dth,
            div_v_final: div_v,
            data_correction,
        });
        if let Some((pe, ps)) = &previous {
            let sup = |f: &dyn Fn(&FlowState, &FlowState) -> f64| ps.iter().zip(&states).map(|(a, b)| f(a, b)).fold(0.0, f64::max);
            result.cauchy.push(CauchyRow {
                epsilon_a: *pe,
                epsilon_b: eps,
                v: sup(&|a, b| a.v.sub(&b.v).max_abs()),
                f: sup(&|a, b| a.f.sub(&b.f).max_abs()),
                h: sup(&|a, b| a.h.sub(&b.h).max_abs()),
            });
        }
        previous = Some((eps, states));
    }
    result.complete = failure.is_none();
    write_sweep(&root, &result)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(result),
    }
}

fn initial_seed_velocity(cfg: &SimulationConfig) -> Option<crate::field::VectorField> {
    match &cfg.initial {
        InitialConfig::Construct { seed, .. } | InitialConfig::Builtin { name: seed } => cfg.grid().ok().map(|g| seed.velocity(&g)),
        InitialConfig::Snapshot { .. } => None,
    }
}

fn write_sweep(root: &Path, result: &SweepResult) -> Result<()> {
    write_json(&root.join("sweep.json"), result)?;
    let mut w = csv::Writer::from_path(root.join("sweep.csv"))?;
    w.write_record(["epsilon_a", "epsilon_b", "dv", "dF", "dh"])?;
    for r in &result.cauchy {
        w.write_record([r.epsilon_a, r.epsilon_b, r.v, r.f, r.h].iter().map(|x| format!("{x:e}")))?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Initial data export

fn initdata_summary(d: &CompatibleData) -> serde_json::Value {
    json!({
        "epsilon": crate::config::Epsilon(d.epsilon),
        "order": d.order,
        "iterations": d.iterations,
        "converged": d.converged,
        "trace": d.trace,
        "ratios": d.ratios(),
        "neumann_projection": d.neumann_projection,
        "final_residuals": d.residuals(),
    })
}

/// Constructs compatible data and writes `initdata.lela` (fields `v₀ε`,
/// `F⁰ε` row-major, `h_(0..m)`), `initial_state.lela` (a state snapshot
/// usable as a run source) and `initdata.json`.
pub fn initdata(cfg: &SimulationConfig) -> Result<CompatibleData> {
    cfg.validate()?;
    let (seed, order, max_iter) = match &cfg.initial {
        InitialConfig::Construct { seed, order, max_iter } => (*seed, *order, *max_iter),
        InitialConfig::Builtin { name } => (*name, 1, 50),
        InitialConfig::Snapshot { .. } => return Err(Error::Config("initdata needs a seed (builtin or construct source)".into())),
    };
    let g = cfg.grid()?;
    if !g.is_slab() {
        return Err(Error::RequiresSlab("initial-data construction"));
    }
    let inc = seed.data(&g)?;
    let settings = IterationSettings { max_iter, tol: cfg.tolerances.elliptic_tol, epsilon_min: cfg.epsilon_min };
    let data = construct_initial_data(&inc, cfg.epsilon.0, order, settings)?;
    let dir = &cfg.output.directory;
    fs::create_dir_all(dir)?;
    let mut fields: Vec<&ScalarField> = data.v0.0.iter().collect();
    fields.extend(data.f0.0.iter().flatten());
    fields.extend(data.h.iter());
    write_snapshot(&dir.join("initdata.lela"), 0.0, &fields)?;
    let (state, f0) = data.initial_state();
    write_state(&dir.join("initial_state.lela"), &state, &f0)?;
    let mut summary = initdata_summary(&data);
    summary["seed"] = json!(seed);
    let report = inc.report();
    summary["seed_report"] = json!({
        "taylor_min": report.taylor_min,
        "taylor_holds": report.taylor_holds(cfg.c0),
        "constraints_hold": report.constraints_hold(cfg.tolerances.constraint_tol),
    });
    summary["config"] = json!(cfg);
    summary["code_version"] = json!(env!("CARGO_PKG_VERSION"));
    write_json(&dir.join("initdata.json"), &summary)?;
    Ok(data)
}
