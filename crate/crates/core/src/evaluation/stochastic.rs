//! Extensive-form stochastic SCUC with a CVaR term on scenario costs.

use serde::Serialize;

use crate::dcopf::Scenario;
use crate::error::{Error, Result};
use crate::scuc::block::{build_block, BlockSpec, CommitmentTerms, OnOff, RampScale};
use crate::scuc::CommitmentSchedule;
use crate::solver::{Backend, MipOptions, Model, Sense, Var};
use crate::system::PowerSystem;

#[derive(Debug, Clone)]
pub struct StochasticOptions {
    /// Weight on the CVaR term; 0 gives plain expected cost.
    pub rho_sto: f64,
    pub beta: f64,
    pub mip: MipOptions,
    /// Prior schedule whose fixed-commitment solution seeds the search.
    pub warm_start: Option<CommitmentSchedule>,
}

impl Default for StochasticOptions {
    fn default() -> Self {
        Self { rho_sto: 0.0, beta: 0.9, mip: MipOptions::default(), warm_start: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StochasticSolution {
    pub schedule: CommitmentSchedule,
    /// Total cost per scenario, commitment costs included.
    pub scenario_costs: Vec<f64>,
    /// Value-at-risk level; 0 when the CVaR term is off.
    pub z: f64,
    pub eta: Vec<f64>,
    pub objective: f64,
    pub mip_gap: Option<f64>,
}

/// Scenario loads and wind on the DA hour grid: RT hours take the mean of
/// their periods, other hours keep the forecast.
pub fn hourly_profile(sys: &PowerSystem, sc: &Scenario) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let time = sys.time();
    let lift = |forecast: &[f64], rt: &[f64]| -> Vec<f64> {
        let mut out = forecast.to_vec();
        for (k, &h) in time.rt_hours.iter().enumerate() {
            let r = time.periods_of_rt_hour(k);
            out[h] = rt[r.clone()].iter().sum::<f64>() / r.len() as f64;
        }
        out
    };
    let load = sys.buses().iter().zip(&sc.d_rt).map(|(b, rt)| lift(&b.forecast_load, rt)).collect();
    let wind = sys.wind().iter().zip(&sc.p_cap_rt).map(|(w, rt)| lift(&w.forecast_cap, rt)).collect();
    (load, wind)
}

struct ExtensiveForm {
    model: Model,
    y: Vec<Vec<Var>>,
    v: Vec<Vec<Var>>,
    w: Vec<Vec<Var>>,
    cost: Vec<Var>,
    z: Option<Var>,
    eta: Vec<Var>,
}

fn build(sys: &PowerSystem, scenarios: &[Scenario], rho: f64, beta: f64) -> ExtensiveForm {
    let mut model = Model::new();
    let n_h = sys.n_hours();
    let s_count = scenarios.len() as f64;
    let mut y = Vec::new();
    let mut v = Vec::new();
    let mut w = Vec::new();
    for _ in sys.thermal() {
        y.push((0..n_h).map(|_| model.add_binary(0.0)).collect::<Vec<_>>());
        v.push((0..n_h).map(|_| model.add_binary(0.0)).collect::<Vec<_>>());
        w.push((0..n_h).map(|_| model.add_binary(0.0)).collect::<Vec<_>>());
    }
    for g in 0..sys.n_thermal() {
        model.fix(w[g][0], 0.0);
        model.add_row(vec![(v[g][0], 1.0), (w[g][0], -1.0), (y[g][0], -1.0)], Sense::Eq, 0.0);
        for t in 1..n_h {
            model.add_row(vec![(v[g][t], 1.0), (w[g][t], -1.0), (y[g][t], -1.0), (y[g][t - 1], 1.0)], Sense::Eq, 0.0);
        }
    }
    let as_terms = |m: &Vec<Vec<Var>>| -> Vec<Vec<OnOff>> {
        m.iter().map(|r| r.iter().map(|&x| OnOff::Var(x)).collect()).collect()
    };
    let (ty, tv, tw) = (as_terms(&y), as_terms(&v), as_terms(&w));
    let hours: Vec<usize> = (0..n_h).collect();

    let z = (rho > 0.0).then(|| model.add_var(f64::NEG_INFINITY, f64::INFINITY, rho));
    let mut cost = Vec::with_capacity(scenarios.len());
    let mut eta = Vec::new();
    for sc in scenarios {
        let (load, wind) = hourly_profile(sys, sc);
        let block = build_block(
            &mut model,
            sys,
            &CommitmentTerms { y: &ty, v: &tv, w: &tw },
            &BlockSpec {
                period_hour: &hours,
                load: &load,
                wind_cap: &wind,
                voll: sys.voll_rt(),
                ramp: RampScale::Hourly,
                weight: 0.0,
            },
        );
        // c_s = commitment costs + production + RT-priced unmet load
        let c = model.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0 / s_count);
        let mut terms = vec![(c, 1.0)];
        for (g, gen) in sys.thermal().iter().enumerate() {
            for t in 0..n_h {
                if gen.startup_cost != 0.0 {
                    terms.push((v[g][t], -gen.startup_cost));
                }
                if gen.shutdown_cost != 0.0 {
                    terms.push((w[g][t], -gen.shutdown_cost));
                }
                terms.push((block.h[g][t], -1.0));
            }
        }
        for row in &block.unmet {
            for &u in row {
                terms.push((u, -sys.voll_rt()));
            }
        }
        model.add_row(terms, Sense::Eq, 0.0);
        if let Some(z) = z {
            let e = model.add_var(0.0, f64::INFINITY, rho / (s_count * (1.0 - beta)));
            model.add_row(vec![(e, 1.0), (c, -1.0), (z, 1.0)], Sense::Ge, 0.0);
            eta.push(e);
        }
        cost.push(c);
    }
    ExtensiveForm { model, y, v, w, cost, z, eta }
}

fn check_inputs(sys: &PowerSystem, scenarios: &[Scenario], rho: f64, beta: f64) -> Result<()> {
    if scenarios.is_empty() {
        return Err(Error::InvalidOption("the stochastic model needs at least one scenario".into()));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidOption("beta must lie in (0, 1)".into()));
    }
    if !(rho >= 0.0) {
        return Err(Error::InvalidOption("rho_sto must be nonnegative".into()));
    }
    scenarios.iter().try_for_each(|s| s.validate(sys))
}

fn fix(ef: &mut ExtensiveForm, sched: &CommitmentSchedule) {
    let b = |x: bool| if x { 1.0 } else { 0.0 };
    for g in 0..ef.y.len() {
        for t in 0..ef.y[g].len() {
            ef.model.fix(ef.y[g][t], b(sched.y[g][t]));
            ef.model.fix(ef.v[g][t], b(sched.v[g][t]));
            ef.model.fix(ef.w[g][t], b(sched.w[g][t]));
        }
    }
}

fn solution(ef: &ExtensiveForm, x: &[f64], objective: f64, mip_gap: Option<f64>) -> StochasticSolution {
    let bits = |m: &Vec<Vec<Var>>| -> Vec<Vec<bool>> {
        m.iter().map(|r| r.iter().map(|v| x[v.index()] > 0.5).collect()).collect()
    };
    StochasticSolution {
        schedule: CommitmentSchedule { y: bits(&ef.y), v: bits(&ef.v), w: bits(&ef.w) },
        scenario_costs: ef.cost.iter().map(|c| x[c.index()]).collect(),
        z: ef.z.map_or(0.0, |z| x[z.index()]),
        eta: ef.eta.iter().map(|e| x[e.index()]).collect(),
        objective,
        mip_gap,
    }
}

/// Objective of the stochastic model with commitment fixed to `sched`.
pub fn evaluate_fixed_schedule(
    sys: &PowerSystem,
    scenarios: &[Scenario],
    sched: &CommitmentSchedule,
    rho_sto: f64,
    beta: f64,
    backend: &dyn Backend,
) -> Result<StochasticSolution> {
    check_inputs(sys, scenarios, rho_sto, beta)?;
    sched.check_dims(sys)?;
    let mut ef = build(sys, scenarios, rho_sto, beta);
    fix(&mut ef, sched);
    let res = backend.solve_lp(&ef.model)?;
    if !res.is_optimal() {
        return Err(Error::status(res.status, "evaluating a fixed schedule in the stochastic model"));
    }
    Ok(solution(&ef, &res.x, res.objective, None))
}

pub fn solve_stochastic_scuc(
    sys: &PowerSystem,
    scenarios: &[Scenario],
    backend: &dyn Backend,
    opts: &StochasticOptions,
) -> Result<StochasticSolution> {
    check_inputs(sys, scenarios, opts.rho_sto, opts.beta)?;
    let mut mip = opts.mip.clone();
    if let Some(start) = &opts.warm_start {
        match evaluate_start(sys, scenarios, start, opts, backend) {
            Ok(x) => mip.warm_start = Some(x),
            Err(e) => log::warn!("warm start ignored: {e}"),
        }
    }
    let ef = build(sys, scenarios, opts.rho_sto, opts.beta);
    let res = backend.solve_mip(&ef.model, &mip, None)?;
    if !res.has_solution() {
        return Err(Error::status(res.status, "solving the stochastic SCUC"));
    }
    if !res.is_optimal() {
        log::warn!("stochastic SCUC stopped with status {} (gap {:?})", res.status, res.mip_gap);
    }
    Ok(solution(&ef, &res.x, res.objective, res.mip_gap))
}

fn evaluate_start(
    sys: &PowerSystem,
    scenarios: &[Scenario],
    start: &CommitmentSchedule,
    opts: &StochasticOptions,
    backend: &dyn Backend,
) -> Result<Vec<f64>> {
    start.check_dims(sys)?;
    let mut ef = build(sys, scenarios, opts.rho_sto, opts.beta);
    fix(&mut ef, start);
    let res = backend.solve_lp(&ef.model)?;
    if !res.is_optimal() {
        return Err(Error::status(res.status, "solving the warm-start LP"));
    }
    Ok(res.x)
}
