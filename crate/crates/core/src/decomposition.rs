//! Risk-aware commitment by decomposition: a master SCUC carrying an
//! exposure estimate `V̂`, an adversary oracle, and cuts bounding `V̂` from
//! below as a linear function of the RT-hour commitment.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::{solve_adversary_on, AdversaryOptions};
use crate::clock::Clock;
use crate::error::{Error, Result};
use crate::scuc::{build_da_model, da_pricing_run, CommitmentSchedule, DaDispatch, DaModel};
use crate::solver::{Backend, Constraint, MipOptions, Sense, SolveResult, Var};
use crate::system::PowerSystem;
use crate::uncertainty::{grid_points, GridPoint, UncertaintySet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutFamily {
    NoGood,
    LShaped,
    Lbbd,
}

impl std::str::FromStr for CutFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no_good" | "no-good" | "nogood" => Ok(CutFamily::NoGood),
            "l_shaped" | "l-shaped" | "lshaped" => Ok(CutFamily::LShaped),
            "lbbd" => Ok(CutFamily::Lbbd),
            other => Err(Error::InvalidOption(format!("unknown cut family `{other}` (no_good, l_shaped, lbbd)"))),
        }
    }
}

/// `V̂ ≥ constant + Σ coef · y[unit][hour]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cut {
    pub family: CutFamily,
    pub constant: f64,
    /// `(unit, hour, coefficient)` over RT hours.
    pub coeffs: Vec<(usize, usize, f64)>,
    /// Exposure at the generating commitment.
    pub v_star: f64,
    pub iteration: usize,
}

impl Cut {
    /// Lower bound the cut imposes on `V̂` at `sched`.
    pub fn bound_at(&self, sched: &CommitmentSchedule) -> f64 {
        self.constant
            + self.coeffs.iter().map(|&(g, t, c)| if sched.y[g][t] { c } else { 0.0 }).sum::<f64>()
    }

    fn constraint(&self, y: &[Vec<Var>], v_hat: Var) -> Constraint {
        let mut terms = vec![(v_hat, 1.0)];
        terms.extend(self.coeffs.iter().filter(|c| c.2 != 0.0).map(|&(g, t, c)| (y[g][t], -c)));
        Constraint::new(terms, Sense::Ge, self.constant)
    }
}

/// Slope `a` of `V̂ ≥ V̂* − a·(flips)`: `max(V̂* − V̂₁, (V̂* − V̂₀)/2)`.
fn flip_cut(sys: &PowerSystem, y_star: &CommitmentSchedule, v_star: f64, a: f64, family: CutFamily) -> Cut {
    let mut coeffs = Vec::new();
    let mut n_on = 0usize;
    for g in 0..sys.n_thermal() {
        for &t in &sys.time().rt_hours {
            if y_star.y[g][t] {
                n_on += 1;
                coeffs.push((g, t, a));
            } else {
                coeffs.push((g, t, -a));
            }
        }
    }
    Cut { family, constant: v_star - a * n_on as f64, coeffs, v_star, iteration: 0 }
}

/// Exact at `y_star`, nonpositive at every other RT commitment.
pub fn make_no_good_cut(sys: &PowerSystem, y_star: &CommitmentSchedule, v_star: f64) -> Cut {
    flip_cut(sys, y_star, v_star, v_star, CutFamily::NoGood)
}

/// Integer L-shaped cut from the best one-flip neighbour value `v1` and a
/// global lower bound `v0`.
pub fn make_l_shaped_cut(sys: &PowerSystem, y_star: &CommitmentSchedule, v_star: f64, v1: f64, v0: f64) -> Cut {
    let a = (v_star - v1).max((v_star - v0) / 2.0);
    flip_cut(sys, y_star, v_star, a, CutFamily::LShaped)
}

/// `V̂ ≥ Σ_t V̂*_t (1 − Σ_{g off at t} y_gt)`.
pub fn make_lbbd_cut(sys: &PowerSystem, y_star: &CommitmentSchedule, per_hour: &[f64]) -> Cut {
    let hours = &sys.time().rt_hours;
    let mut coeffs = Vec::new();
    for (k, &t) in hours.iter().enumerate() {
        for g in 0..sys.n_thermal() {
            if !y_star.y[g][t] {
                coeffs.push((g, t, -per_hour[k]));
            }
        }
    }
    let constant = per_hour.iter().sum();
    Cut { family: CutFamily::Lbbd, constant, coeffs, v_star: constant, iteration: 0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionMode {
    Iterative,
    BranchAndCut,
}

impl std::str::FromStr for DecompositionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iterative" => Ok(DecompositionMode::Iterative),
            "branch_and_cut" | "branch-and-cut" | "bc" => Ok(DecompositionMode::BranchAndCut),
            other => Err(Error::InvalidOption(format!("unknown mode `{other}` (iterative, branch_and_cut)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RiskOptions {
    /// Weight on worst-case exposure.
    pub rho: f64,
    pub families: Vec<CutFamily>,
    pub mode: DecompositionMode,
    /// Iterative rounds run before the branch-and-cut solve.
    pub root_cuts: usize,
    /// Per master solve; `time_limit` bounds the whole run.
    pub mip: MipOptions,
    pub adversary: AdversaryOptions,
    pub max_iterations: usize,
    /// Global lower bound on exposure for L-shaped cuts.
    pub v0: f64,
}

impl Default for RiskOptions {
    fn default() -> Self {
        Self {
            rho: 1.0,
            families: vec![CutFamily::Lbbd],
            mode: DecompositionMode::Iterative,
            root_cuts: 0,
            mip: MipOptions::default(),
            adversary: AdversaryOptions::default(),
            max_iterations: 1000,
            v0: 0.0,
        }
    }
}

/// One master solve or lazy-callback check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub master_obj: f64,
    pub v_hat_master: f64,
    pub adversary_exposure: f64,
    pub cuts_added: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct RiskAwareSolution {
    pub schedule: CommitmentSchedule,
    pub da_dispatch: DaDispatch,
    /// Worst-case exposure of `schedule` from the adversary.
    pub v_hat: f64,
    pub rho: f64,
    /// DA cost plus `rho * v_hat`.
    pub total_objective: f64,
    pub cuts: Vec<Cut>,
    pub iterations: usize,
    pub opt_gap: f64,
    pub converged: bool,
    /// An LBBD cut was generated at a commitment whose worst case congests a line.
    pub congestion_flag: bool,
    pub trace: Vec<IterationRecord>,
    /// Adversary evaluations that were not served from the cache.
    pub adversary_calls: usize,
}

impl RiskAwareSolution {
    pub fn write_trace(&self, path: &Path) -> Result<()> {
        let mut w = crate::export::writer(path)?;
        let err = |e| crate::export::csv_err(path, e);
        w.write_record(["iter", "master_obj", "v_hat_master", "adversary_exposure", "cuts_added", "wall_time"])
            .map_err(err)?;
        for r in &self.trace {
            w.write_record([
                r.iter.to_string(),
                r.master_obj.to_string(),
                r.v_hat_master.to_string(),
                r.adversary_exposure.to_string(),
                r.cuts_added.to_string(),
                r.wall_time.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Convergence tolerance on the exposure estimate.
pub fn exposure_tolerance(v_star: f64) -> f64 {
    1e-4 * (1.0 + v_star.abs())
}

#[derive(Debug, Clone)]
struct Evaluation {
    total: f64,
    per_hour: Vec<f64>,
    congested: bool,
}

/// Adversary with results cached by RT-hour commitment.
struct ExposureOracle<'a> {
    sys: &'a PowerSystem,
    grids: Vec<GridPoint>,
    backend: &'a dyn Backend,
    opts: AdversaryOptions,
    cache: HashMap<Vec<bool>, Evaluation>,
    calls: usize,
}

impl<'a> ExposureOracle<'a> {
    fn new(sys: &'a PowerSystem, uset: &UncertaintySet, backend: &'a dyn Backend, opts: AdversaryOptions) -> Self {
        Self { sys, grids: grid_points(uset), backend, opts, cache: HashMap::new(), calls: 0 }
    }

    fn eval(&mut self, sched: &CommitmentSchedule) -> Result<Evaluation> {
        let key = sched.rt_key(self.sys);
        if let Some(e) = self.cache.get(&key) {
            return Ok(e.clone());
        }
        let res = solve_adversary_on(self.sys, &self.grids, sched, self.backend, &self.opts)?;
        self.calls += 1;
        let congested = res.any_congestion();
        let e = Evaluation { total: res.worst_exposure, per_hour: res.per_hour_exposure, congested };
        self.cache.insert(key, e.clone());
        Ok(e)
    }

    /// Smallest exposure over all single (unit, RT hour) flips of `sched`.
    fn best_neighbor(&mut self, sched: &CommitmentSchedule) -> Result<f64> {
        let mut best = f64::INFINITY;
        for g in 0..self.sys.n_thermal() {
            for &t in &self.sys.time().rt_hours.clone() {
                let mut y = sched.y.clone();
                y[g][t] = !y[g][t];
                best = best.min(self.eval(&CommitmentSchedule::from_on_off(y))?.total);
            }
        }
        Ok(best)
    }

    fn cuts(
        &mut self,
        families: &[CutFamily],
        sched: &CommitmentSchedule,
        ev: &Evaluation,
        v0: f64,
        iteration: usize,
        congestion_flag: &mut bool,
    ) -> Result<Vec<Cut>> {
        let mut out = Vec::with_capacity(families.len());
        for fam in families {
            let mut cut = match fam {
                CutFamily::NoGood => make_no_good_cut(self.sys, sched, ev.total),
                CutFamily::LShaped => {
                    let v1 = self.best_neighbor(sched)?;
                    make_l_shaped_cut(self.sys, sched, ev.total, v1, v0.min(ev.total))
                }
                CutFamily::Lbbd => {
                    if ev.congested {
                        log::info!("LBBD cut generated under congestion; it may overestimate exposure elsewhere");
                        *congestion_flag = true;
                    }
                    make_lbbd_cut(self.sys, sched, &ev.per_hour)
                }
            };
            cut.iteration = iteration;
            out.push(cut);
        }
        Ok(out)
    }
}

struct Master {
    da: DaModel,
    v_hat: Var,
}

fn build_master(sys: &PowerSystem, det: &CommitmentSchedule, rho: f64) -> Master {
    let mut da = build_da_model(sys);
    let v_hat = da.model.add_var(0.0, f64::INFINITY, rho);
    for g in 0..sys.n_thermal() {
        for t in 0..sys.n_hours() {
            if !sys.time().is_flex(t) {
                da.fix_on_off(g, t, det.y[g][t]);
            }
        }
    }
    Master { da, v_hat }
}

struct Incumbent {
    total: f64,
    schedule: CommitmentSchedule,
    dispatch: DaDispatch,
    v_star: f64,
}

/// Solves the risk-aware SCUC. `det` is the deterministic schedule used
/// outside the flex window.
pub fn solve_risk_aware(
    sys: &PowerSystem,
    uset: &UncertaintySet,
    det: &CommitmentSchedule,
    backend: &dyn Backend,
    opts: &RiskOptions,
) -> Result<RiskAwareSolution> {
    det.check_dims(sys)?;
    if !(opts.rho >= 0.0) || !opts.rho.is_finite() {
        return Err(Error::InvalidOption("rho must be a finite nonnegative number".into()));
    }
    if opts.families.is_empty() {
        return Err(Error::InvalidOption("at least one cut family is required".into()));
    }
    let clock = Clock::new(opts.mip.time_limit);

    if opts.rho == 0.0 {
        let priced = da_pricing_run(sys, det, backend)?;
        let total = priced.dispatch.cost.total;
        return Ok(RiskAwareSolution {
            schedule: det.clone(),
            da_dispatch: priced.dispatch,
            v_hat: 0.0,
            rho: 0.0,
            total_objective: total,
            cuts: vec![],
            iterations: 1,
            opt_gap: 0.0,
            converged: true,
            congestion_flag: false,
            trace: vec![IterationRecord {
                iter: 1,
                master_obj: total,
                v_hat_master: 0.0,
                adversary_exposure: 0.0,
                cuts_added: 0,
                wall_time: clock.elapsed(),
            }],
            adversary_calls: 0,
        });
    }

    let mut oracle = ExposureOracle::new(sys, uset, backend, opts.adversary);
    let mut master = build_master(sys, det, opts.rho);
    let mut state = LoopState::default();

    let use_bc = opts.mode == DecompositionMode::BranchAndCut && backend.supports_lazy();
    if opts.mode == DecompositionMode::BranchAndCut && !use_bc {
        log::warn!("backend `{}` has no lazy-constraint support; using iterative mode", backend.name());
    }
    let rounds = if use_bc { opts.root_cuts } else { opts.max_iterations };

    let mut warm: Option<Vec<f64>> = None;
    for _ in 0..rounds {
        if clock.expired() {
            break;
        }
        let mip = MipOptions { time_limit: clock.remaining(), warm_start: warm.take(), ..opts.mip.clone() };
        let res = backend.solve_mip(&master.da.model, &mip, None)?;
        if !res.has_solution() {
            return Err(Error::status(res.status, "solving the risk-aware master problem"));
        }
        let sched = master.da.schedule_from(&res.x);
        let ev = oracle.eval(&sched)?;
        let v_m = res.value(master.v_hat);
        state.observe(sys, &master, &res, &sched, &ev, opts.rho);
        let done = v_m >= ev.total - exposure_tolerance(ev.total);
        let mut added = 0;
        if !done {
            let iter = state.trace.len() + 1;
            for cut in oracle.cuts(&opts.families, &sched, &ev, opts.v0, iter, &mut state.congestion)? {
                master.da.model.add_constraint(cut.constraint(&master.da.y, master.v_hat));
                state.cuts.push(cut);
                added += 1;
            }
            let mut x = res.x.clone();
            x[master.v_hat.index()] = ev.total;
            warm = Some(x);
        }
        state.record(&res, v_m, ev.total, added, clock.elapsed());
        if done && res.is_optimal() {
            state.converged = true;
            break;
        }
        if res.is_optimal() && state.exhausted(sys) {
            // every flex-window commitment has been evaluated exactly
            state.converged = true;
            state.lower_bound = state.incumbent.as_ref().map_or(state.lower_bound, |b| b.total);
            break;
        }
    }

    if use_bc && !state.converged && !clock.expired() {
        let mut failure: Option<Error> = None;
        let y_vars = master.da.y.clone();
        let v_hat = master.v_hat;
        let da_ref = &master.da;
        let mut records = Vec::new();
        let mut new_cuts = Vec::new();
        let mut congestion = state.congestion;
        let iter0 = state.trace.len();
        let mut callback = |x: &[f64], obj: f64| -> Vec<Constraint> {
            if failure.is_some() {
                return vec![];
            }
            let sched = da_ref.schedule_from(x);
            let result = oracle.eval(&sched).and_then(|ev| {
                let v_m = x[v_hat.index()];
                let iter = iter0 + records.len() + 1;
                let cuts = if v_m >= ev.total - exposure_tolerance(ev.total) {
                    vec![]
                } else {
                    oracle.cuts(&opts.families, &sched, &ev, opts.v0, iter, &mut congestion)?
                };
                records.push(IterationRecord {
                    iter,
                    master_obj: obj,
                    v_hat_master: v_m,
                    adversary_exposure: ev.total,
                    cuts_added: cuts.len(),
                    wall_time: clock.elapsed(),
                });
                Ok(cuts)
            });
            match result {
                Ok(cuts) => {
                    let rows = cuts.iter().map(|c| c.constraint(&y_vars, v_hat)).collect();
                    new_cuts.extend(cuts);
                    rows
                }
                Err(e) => {
                    failure = Some(e);
                    vec![]
                }
            }
        };
        let mip = MipOptions { time_limit: clock.remaining(), ..opts.mip.clone() };
        let res = backend.solve_mip(&master.da.model, &mip, Some(&mut callback))?;
        if let Some(e) = failure {
            return Err(e);
        }
        state.trace.extend(records);
        state.cuts.extend(new_cuts);
        state.congestion = congestion;
        if !res.has_solution() {
            return Err(Error::status(res.status, "solving the risk-aware master problem with lazy cuts"));
        }
        let sched = master.da.schedule_from(&res.x);
        let ev = oracle.eval(&sched)?;
        state.observe(sys, &master, &res, &sched, &ev, opts.rho);
        state.converged = res.is_optimal();
    }

    let Some(best) = state.incumbent else {
        return Err(Error::status(crate::solver::Status::TimeLimit, "risk-aware SCUC found no commitment"));
    };
    let lower = state.lower_bound;
    let mut opt_gap = ((best.total - lower) / best.total.abs().max(1e-9)).max(0.0);
    if !state.converged {
        opt_gap = opt_gap.max(state.last_mip_gap);
    }
    Ok(RiskAwareSolution {
        schedule: best.schedule,
        da_dispatch: best.dispatch,
        v_hat: best.v_star,
        rho: opts.rho,
        total_objective: best.total,
        cuts: state.cuts,
        iterations: state.trace.len(),
        opt_gap,
        converged: state.converged,
        congestion_flag: state.congestion,
        trace: state.trace,
        adversary_calls: oracle.calls,
    })
}

fn flex_key(sys: &PowerSystem, sched: &CommitmentSchedule) -> Vec<bool> {
    let flex = &sys.time().flex_window;
    sched.y.iter().flat_map(|row| flex.iter().map(|&t| row[t])).collect()
}

#[derive(Default)]
struct LoopState {
    incumbent: Option<Incumbent>,
    cuts: Vec<Cut>,
    trace: Vec<IterationRecord>,
    lower_bound: f64,
    last_mip_gap: f64,
    converged: bool,
    congestion: bool,
    flex_seen: HashSet<Vec<bool>>,
}

impl LoopState {
    /// Records the master point as a candidate and tightens the lower bound.
    fn observe(&mut self, sys: &PowerSystem, master: &Master, res: &SolveResult, sched: &CommitmentSchedule, ev: &Evaluation, rho: f64) {
        let dispatch = master.da.dispatch_from(sys, res);
        let total = dispatch.cost.total + rho * ev.total;
        let gap = res.mip_gap.unwrap_or(0.0);
        self.last_mip_gap = gap;
        let bound = res.objective - gap * res.objective.abs();
        if self.incumbent.is_none() {
            self.lower_bound = bound;
        }
        self.lower_bound = self.lower_bound.max(bound);
        self.flex_seen.insert(flex_key(sys, sched));
        if self.incumbent.as_ref().is_none_or(|b| total < b.total) {
            self.incumbent = Some(Incumbent { total, schedule: sched.clone(), dispatch, v_star: ev.total });
        }
    }

    /// All `2^(units × flex hours)` master commitments have been seen.
    fn exhausted(&self, sys: &PowerSystem) -> bool {
        let bits = sys.n_thermal() * sys.time().flex_window.len();
        bits < 20 && self.flex_seen.len() == 1usize << bits
    }

    fn record(&mut self, res: &SolveResult, v_m: f64, v_star: f64, added: usize, wall: f64) {
        self.trace.push(IterationRecord {
            iter: self.trace.len() + 1,
            master_obj: res.objective,
            v_hat_master: v_m,
            adversary_exposure: v_star,
            cuts_added: added,
            wall_time: wall,
        });
    }
}
