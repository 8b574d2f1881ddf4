use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use scuc_core::adversary::{solve_adversary, AdversaryOptions};
use scuc_core::decomposition::{solve_risk_aware, RiskOptions};
use scuc_core::evaluation::{
    evaluate_schedules, sample_stressors, solve_stochastic_scuc, EvalOptions, SampleMethod, SampleSpec, StochasticOptions,
};
use scuc_core::parallel::default_workers;
use scuc_core::scuc::{da_pricing_run, solve_deterministic, CommitmentSchedule, DaSolution};
use scuc_core::solver::{backend_by_name, Backend, MipOptions};
use scuc_core::system::{load_case, load_history, HistoryKind, PowerSystem};
use scuc_core::uncertainty::{build_uncertainty_set, grid_points, UncertaintySet};

use crate::config::{RunConfig, Sampling};
use crate::{Command, Failure};

struct Run<'a> {
    cfg: &'a RunConfig,
    sys: PowerSystem,
    backend: Box<dyn Backend>,
    out: PathBuf,
}

impl<'a> Run<'a> {
    fn open(cfg: &'a RunConfig) -> Result<Self, Failure> {
        let mut case = load_case(cfg.case_path()?)?.into_case();
        if let Some(v) = cfg.voll_da {
            case.voll_da = v;
        }
        if let Some(v) = cfg.voll_rt {
            case.voll_rt = v;
        }
        if let Some(f) = &cfg.flex_window {
            case.time.flex_window = f.clone();
        }
        let sys = PowerSystem::new(case)?;
        let backend = backend_by_name(&cfg.backend).map_err(|e| Failure::input(e.to_string()))?;
        std::fs::create_dir_all(&cfg.output)
            .map_err(|e| Failure::input(format!("cannot create output directory {}: {e}", cfg.output.display())))?;
        Ok(Self { cfg, sys, backend, out: cfg.output.clone() })
    }

    fn mip(&self) -> MipOptions {
        MipOptions { gap: self.cfg.gap, time_limit: self.cfg.time_limit, ..MipOptions::default() }
    }

    fn workers(&self) -> usize {
        if self.cfg.workers == 0 {
            default_workers()
        } else {
            self.cfg.workers
        }
    }

    fn deterministic(&self) -> Result<DaSolution, Failure> {
        Ok(solve_deterministic(&self.sys, self.backend.as_ref(), &self.mip())?)
    }

    fn uncertainty(&self) -> Result<UncertaintySet, Failure> {
        let load = load_history(self.cfg.load_history_path()?, HistoryKind::Load, &self.sys)?;
        let wind = match &self.cfg.wind_history {
            Some(p) => Some(load_history(p, HistoryKind::Wind, &self.sys)?),
            None => None,
        };
        Ok(build_uncertainty_set(&load, wind.as_ref(), &self.sys, self.cfg.k, self.cfg.r_load, self.cfg.r_wind, self.cfg.sigma_rule)?)
    }

    fn read_schedule(&self, path: &Path) -> Result<CommitmentSchedule, Failure> {
        if !path.is_file() {
            return Err(Failure::input(format!("file not found: {}", path.display())));
        }
        Ok(CommitmentSchedule::read_csv(&self.sys, path)?)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).expect("summaries serialise");
        std::fs::write(&path, text + "\n").map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
    }

    /// Config hash, version and seed next to the outputs.
    fn manifest(&self, command: &str) -> Result<(), Failure> {
        let canonical = serde_json::to_string(self.cfg).expect("config serialises");
        let hash = Sha256::digest(canonical.as_bytes());
        self.write_json(
            "manifest.json",
            &json!({
                "command": command,
                "version": env!("CARGO_PKG_VERSION"),
                "backend": self.backend.name(),
                "seed": self.cfg.seed,
                "config_sha256": format!("{hash:x}"),
                "config": self.cfg,
            }),
        )
    }
}

pub fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<(), Failure> {
    let run = Run::open(cfg)?;
    match cmd {
        Command::SolveDa => solve_da(&run)?,
        Command::SolveRiskAware => risk_aware(&run)?,
        Command::Adversary { schedule } => adversary(&run, schedule.as_deref())?,
        Command::Evaluate { schedules } => evaluate(&run, schedules)?,
        Command::BenchmarkSto { warm_start } => benchmark_sto(&run, warm_start.as_deref())?,
        Command::PcaAudit => pca_audit(&run)?,
    }
    Ok(())
}

fn solve_da(run: &Run) -> Result<(), Failure> {
    let det = run.deterministic()?;
    let priced = da_pricing_run(&run.sys, &det.schedule, run.backend.as_ref())?;
    det.schedule.write_csv(&run.sys, &run.path("schedule.csv"))?;
    priced.write_dir(&run.sys, &run.path("dispatch"))?;
    run.write_json(
        "summary.json",
        &json!({
            "da_cost": det.dispatch.cost,
            "mip_gap": det.mip_gap,
            "total_payment": priced.total_payment,
        }),
    )?;
    run.manifest("solve-da")
}

fn risk_aware(run: &Run) -> Result<(), Failure> {
    let det = run.deterministic()?;
    let uset = run.uncertainty()?;
    let opts = RiskOptions {
        rho: run.cfg.rho,
        families: run.cfg.cut_families.clone(),
        mode: run.cfg.mode,
        root_cuts: run.cfg.root_cuts,
        mip: run.mip(),
        adversary: AdversaryOptions { workers: run.workers() },
        max_iterations: run.cfg.max_iterations,
        v0: 0.0,
    };
    let sol = solve_risk_aware(&run.sys, &uset, &det.schedule, run.backend.as_ref(), &opts)?;
    sol.schedule.write_csv(&run.sys, &run.path("schedule.csv"))?;
    sol.da_dispatch.write_dir(&run.sys, &run.path("dispatch"))?;
    sol.write_trace(&run.path("trace.csv"))?;
    run.write_json("cuts.json", &sol.cuts)?;
    run.write_json(
        "summary.json",
        &json!({
            "rho": sol.rho,
            "total_objective": sol.total_objective,
            "da_cost": sol.da_dispatch.cost,
            "worst_case_exposure": sol.v_hat,
            "deterministic_da_cost": det.dispatch.cost.total,
            "iterations": sol.iterations,
            "adversary_calls": sol.adversary_calls,
            "opt_gap": sol.opt_gap,
            "converged": sol.converged,
            "congestion_flag": sol.congestion_flag,
        }),
    )?;
    run.manifest("solve-risk-aware")?;
    if !sol.converged {
        return Err(Failure::solver(format!("decomposition stopped before convergence (gap {:.3e})", sol.opt_gap)));
    }
    Ok(())
}

fn adversary(run: &Run, schedule: Option<&Path>) -> Result<(), Failure> {
    let y = match schedule {
        Some(p) => run.read_schedule(p)?,
        None => run.deterministic()?.schedule,
    };
    let uset = run.uncertainty()?;
    let res = solve_adversary(&run.sys, &uset, &y, run.backend.as_ref(), &AdversaryOptions { workers: run.workers() })?;
    res.write_grid_log(&run.path("grid_log.csv"))?;
    res.worst_rt_solution.write_csv(&run.sys, &run.path("worst_rt.csv"))?;
    run.write_json(
        "summary.json",
        &json!({
            "worst_exposure": res.worst_exposure,
            "worst_grid": res.worst_index,
            "per_hour_exposure": res.per_hour_exposure,
            "worst_alpha": res.worst_alpha,
            "grids": res.grid_log.len(),
            "failed_grids": res.grid_log.iter().filter(|g| g.exposure.is_none()).count(),
            "congestion": res.any_congestion(),
            "ramp_binding": res.any_ramp_binding(),
        }),
    )?;
    run.manifest("adversary")
}

fn evaluate(run: &Run, specs: &[String]) -> Result<(), Failure> {
    let mut schedules = Vec::with_capacity(specs.len());
    for s in specs {
        let (name, path) = s
            .split_once('=')
            .ok_or_else(|| Failure::input(format!("schedule `{s}` must be NAME=PATH")))?;
        schedules.push((name.to_string(), run.read_schedule(Path::new(path))?));
    }
    let uset = run.uncertainty()?;
    let method = match run.cfg.sampling {
        Sampling::Uniform => SampleMethod::Uniform,
        Sampling::Cone { angle, joint } => {
            let worst = solve_adversary(&run.sys, &uset, &schedules[0].1, run.backend.as_ref(), &AdversaryOptions {
                workers: run.workers(),
            })?;
            SampleMethod::Cone { angle, center: worst.worst_alpha, joint }
        }
    };
    let spec = SampleSpec { method, n_samples: run.cfg.n_samples, seed: run.cfg.seed };
    let samples = sample_stressors(&uset, &spec)?;
    let opts = EvalOptions { workers: run.workers(), rt_periods_per_hour: run.cfg.eval_periods_per_hour };
    let report = evaluate_schedules(&run.sys, &schedules, &uset, &samples, run.backend.as_ref(), &opts)?;
    report.write_dir(&run.sys, &run.out)?;
    run.write_json(
        "summary.json",
        &json!({
            "samples_used": report.n_samples,
            "failed_samples": report.failed_samples,
            "comparisons": report.comparisons,
        }),
    )?;
    run.manifest("evaluate")
}

fn benchmark_sto(run: &Run, warm_start: Option<&Path>) -> Result<(), Failure> {
    let uset = run.uncertainty()?;
    let start = match warm_start {
        Some(p) => run.read_schedule(p)?,
        None => run.deterministic()?.schedule,
    };
    let spec = SampleSpec { method: SampleMethod::Uniform, n_samples: run.cfg.n_scenarios, seed: run.cfg.seed };
    let scenarios = sample_stressors(&uset, &spec)?
        .iter()
        .map(|a| uset.realize_truncated(a))
        .collect::<Result<Vec<_>, _>>()?;
    let opts = StochasticOptions { rho_sto: run.cfg.rho_sto, beta: run.cfg.beta, mip: run.mip(), warm_start: Some(start) };
    let sol = solve_stochastic_scuc(&run.sys, &scenarios, run.backend.as_ref(), &opts)?;
    sol.schedule.write_csv(&run.sys, &run.path("schedule.csv"))?;
    run.write_json("summary.json", &sol)?;
    run.manifest("benchmark-sto")
}

fn pca_audit(run: &Run) -> Result<(), Failure> {
    let uset = run.uncertainty()?;
    uset.write_modes_csv(&run.sys, &run.path("modes.csv"))?;
    let kind = |ks: &scuc_core::uncertainty::KindSet| {
        json!({
            "dimension": ks.pca.dim(),
            "numerical_rank": ks.pca.numerical_rank(),
            "modes_used": ks.k(),
            "eigenvalues": ks.pca.eigvals,
            "explained_ratio": ks.pca.explained_ratio(ks.k()),
            "r": ks.r,
            "sigma": ks.sigma,
        })
    };
    let grids = grid_points(&uset);
    run.write_json(
        "summary.json",
        &json!({
            "load": kind(&uset.load),
            "wind": kind(&uset.wind),
            "grid_points": grids.len(),
            "truncated_grid_points": grids.iter().filter(|g| g.truncated).count(),
        }),
    )?;
    run.manifest("pca-audit")
}
