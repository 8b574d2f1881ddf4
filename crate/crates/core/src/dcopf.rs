//! Real-time DC optimal power flow under a fixed commitment.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scuc::block::{build_block, BlockSpec, CommitmentTerms, RampScale};
use crate::scuc::CommitmentSchedule;
use crate::solver::{Backend, Model};
use crate::system::PowerSystem;

const BINDING_TOL: f64 = 1e-6;

/// Realized RT load `[bus][period]` and wind availability `[farm][period]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub d_rt: Vec<Vec<f64>>,
    pub p_cap_rt: Vec<Vec<f64>>,
}

impl Scenario {
    /// RT baselines of the system: no deviation from forecast.
    pub fn baseline(sys: &PowerSystem) -> Self {
        Self { d_rt: sys.rt_baseline_loads(), p_cap_rt: sys.rt_baseline_winds() }
    }

    pub fn validate(&self, sys: &PowerSystem) -> Result<()> {
        let n = sys.time().n_rt_periods();
        let shape_ok = |m: &Vec<Vec<f64>>, rows: usize| m.len() == rows && m.iter().all(|r| r.len() == n);
        if !shape_ok(&self.d_rt, sys.n_buses()) || !shape_ok(&self.p_cap_rt, sys.n_wind()) {
            return Err(Error::Dimension(format!(
                "scenario must cover {} buses and {} farms over {n} RT periods",
                sys.n_buses(),
                sys.n_wind()
            )));
        }
        for (kind, m, names) in [
            ("load", &self.d_rt, sys.buses().iter().map(|b| b.id.as_str()).collect::<Vec<_>>()),
            ("wind", &self.p_cap_rt, sys.wind().iter().map(|w| w.id.as_str()).collect()),
        ] {
            for (i, row) in m.iter().enumerate() {
                if let Some((t, &v)) = row.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
                    return Err(Error::NegativeRealization { kind, name: names[i].to_string(), period: t, value: v });
                }
            }
        }
        Ok(())
    }
}

/// Consumer exposure `(1/n_tp) Σ λ (d - D̄)^+` and its breakdowns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exposure {
    pub total: f64,
    pub by_bus: Vec<f64>,
    pub by_period: Vec<f64>,
}

/// Exposure of consumers to RT prices on load above the baseline.
pub fn consumer_exposure(lmp: &[Vec<f64>], d_rt: &[Vec<f64>], baseline: &[Vec<f64>], n_tp: usize) -> Exposure {
    let n_per = lmp.first().map_or(0, Vec::len);
    let mut by_bus = vec![0.0; lmp.len()];
    let mut by_period = vec![0.0; n_per];
    let scale = 1.0 / n_tp as f64;
    for (i, row) in lmp.iter().enumerate() {
        for (t, &l) in row.iter().enumerate() {
            let e = scale * l * (d_rt[i][t] - baseline[i][t]).max(0.0);
            by_bus[i] += e;
            by_period[t] += e;
        }
    }
    Exposure { total: by_bus.iter().sum(), by_bus, by_period }
}

/// RT operating point; matrices are `[entity][period]`.
#[derive(Debug, Clone, Serialize)]
pub struct RtSolution {
    pub p: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub p_wind: Vec<Vec<f64>>,
    pub p_curtail: Vec<Vec<f64>>,
    pub flow: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub p_unmet: Vec<Vec<f64>>,
    /// $/MWh
    pub lmp: Vec<Vec<f64>>,
    pub load: Vec<Vec<f64>>,
    pub baseline: Vec<Vec<f64>>,
    /// RT operating cost in $, the LP objective divided by periods per hour.
    pub cost: f64,
    pub exposure: Exposure,
    pub producer_surplus: f64,
    /// Some line is at its limit in some period.
    pub congested: bool,
    /// Some limited RT ramp is at its bound.
    pub ramp_binding: bool,
}

impl RtSolution {
    /// Writes `bus,period,lmp,load,excess,exposure`.
    pub fn write_csv(&self, sys: &PowerSystem, path: &Path) -> Result<()> {
        let mut w = crate::export::writer(path)?;
        let err = |e| crate::export::csv_err(path, e);
        w.write_record(["bus", "period", "lmp", "load", "excess", "exposure"]).map_err(err)?;
        let n_tp = sys.time().n_tp as f64;
        for (i, b) in sys.buses().iter().enumerate() {
            for t in 0..self.lmp[i].len() {
                let excess = (self.load[i][t] - self.baseline[i][t]).max(0.0);
                let exp = self.lmp[i][t] * excess / n_tp;
                w.write_record([
                    b.id.clone(),
                    t.to_string(),
                    self.lmp[i][t].to_string(),
                    self.load[i][t].to_string(),
                    excess.to_string(),
                    exp.to_string(),
                ])
                .map_err(err)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Producer surplus `Σ (λ_bus p - h) / n_tp` over thermal units and wind farms,
/// with `h` recomputed from the cost curve.
pub fn producer_surplus(sys: &PowerSystem, lmp: &[Vec<f64>], p: &[Vec<f64>], p_wind: &[Vec<f64>]) -> f64 {
    let n_tp = sys.time().n_tp as f64;
    let mut total = 0.0;
    for (g, gen) in sys.thermal().iter().enumerate() {
        let i = sys.thermal_bus(g);
        for (t, &pg) in p[g].iter().enumerate() {
            let cost = if pg > BINDING_TOL { gen.production_cost(pg) } else { 0.0 };
            total += lmp[i][t] * pg - cost;
        }
    }
    for (w, row) in p_wind.iter().enumerate() {
        let i = sys.wind_bus(w);
        for (t, &pw) in row.iter().enumerate() {
            total += lmp[i][t] * pw;
        }
    }
    total / n_tp
}

/// Solves the RT dispatch for commitment `y_star` under `omega`.
pub fn solve_dcopf(
    sys: &PowerSystem,
    y_star: &CommitmentSchedule,
    omega: &Scenario,
    backend: &dyn Backend,
) -> Result<RtSolution> {
    y_star.check_dims(sys)?;
    omega.validate(sys)?;
    let mut model = Model::new();
    let [ty, tv, tw] = y_star.terms();
    let period_hour = sys.time().rt_period_hours();
    let block = build_block(
        &mut model,
        sys,
        &CommitmentTerms { y: &ty, v: &tv, w: &tw },
        &BlockSpec {
            period_hour: &period_hour,
            load: &omega.d_rt,
            wind_cap: &omega.p_cap_rt,
            voll: sys.voll_rt(),
            ramp: RampScale::RealTime,
            weight: 1.0,
        },
    );
    let res = backend.solve_lp(&model)?;
    if !res.is_optimal() {
        return Err(Error::status(res.status, "solving the RT dispatch"));
    }
    let vals = |m: &Vec<Vec<crate::solver::Var>>| -> Vec<Vec<f64>> {
        m.iter().map(|row| row.iter().map(|&v| res.value(v)).collect()).collect()
    };
    let lmp: Vec<Vec<f64>> =
        block.balance.iter().map(|rows| rows.iter().map(|&r| res.dual(r).expect("LP duals")).collect()).collect();
    let p = vals(&block.p);
    let p_wind = vals(&block.p_wind);
    let p_curtail = p_wind
        .iter()
        .zip(&omega.p_cap_rt)
        .map(|(row, cap)| row.iter().zip(cap).map(|(p, c)| (c - p).max(0.0)).collect())
        .collect();
    let flow = vals(&block.flow);
    let baseline = sys.rt_baseline_loads();
    let exposure = consumer_exposure(&lmp, &omega.d_rt, &baseline, sys.time().n_tp);
    let producer_surplus = producer_surplus(sys, &lmp, &p, &p_wind);
    let congested = flow
        .iter()
        .zip(sys.lines())
        .any(|(row, line)| row.iter().any(|f| f.abs() >= line.capacity - BINDING_TOL));
    let ramp_binding = ramp_binding(sys, y_star, &period_hour, &p);
    Ok(RtSolution {
        h: vals(&block.h),
        theta: vals(&block.theta),
        p_unmet: vals(&block.unmet),
        cost: res.objective / sys.time().n_tp as f64,
        p,
        p_wind,
        p_curtail,
        flow,
        lmp,
        load: omega.d_rt.clone(),
        baseline,
        exposure,
        producer_surplus,
        congested,
        ramp_binding,
    })
}

fn ramp_binding(sys: &PowerSystem, y: &CommitmentSchedule, period_hour: &[usize], p: &[Vec<f64>]) -> bool {
    sys.thermal().iter().enumerate().any(|(g, gen)| {
        let Some(m) = gen.ramp_rt.limit() else { return false };
        (1..period_hour.len()).any(|t| {
            let both_on = y.y[g][period_hour[t - 1]] && y.y[g][period_hour[t]];
            let bound = if both_on { m } else { gen.p_min };
            (p[g][t] - p[g][t - 1]).abs() >= bound - BINDING_TOL && (both_on || gen.p_min > 0.0)
        })
    })
}
