//! Out-of-sample evaluation of commitment schedules and the stochastic
//! benchmark.

mod sampling;
mod stochastic;

use std::path::Path;

use serde::Serialize;

pub use sampling::{default_cone_angle, sample_cap, sample_stressors, SampleMethod, SampleSpec};
pub use stochastic::{
    evaluate_fixed_schedule, hourly_profile, solve_stochastic_scuc, StochasticOptions, StochasticSolution,
};

use crate::dcopf::{solve_dcopf, RtSolution};
use crate::error::{Error, Result};
use crate::parallel::par_map;
use crate::scuc::{da_pricing_run, CommitmentSchedule};
use crate::solver::Backend;
use crate::system::PowerSystem;
use crate::uncertainty::{StressorVector, UncertaintySet};

/// Compensated (Neumaier) summation.
pub fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    stable_sum(values.iter().copied()) / values.len() as f64
}

/// Sample standard deviation, denominator `n - 1`; 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (stable_sum(values.iter().map(|v| (v - m) * (v - m))) / (values.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub workers: usize,
    /// Evaluate on this many RT periods per hour, baselines held constant in each hour.
    pub rt_periods_per_hour: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { workers: 1, rt_periods_per_hour: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleStats {
    pub name: String,
    pub da_cost: f64,
    /// DA cost plus RT consumer exposure, averaged over samples.
    pub mean_total_cost: f64,
    pub std_total_cost: f64,
    pub mean_exposure: f64,
    pub mean_producer_surplus: f64,
    pub mean_rt_cost: f64,
    /// Per bus, averaged over DA hours.
    pub da_lmp_mean: Vec<f64>,
    /// Per bus, averaged over samples and RT periods.
    pub rt_lmp_mean: Vec<f64>,
    /// `[bus][sample]` RT price averaged over periods, for distribution plots.
    pub rt_lmp_samples: Vec<Vec<f64>>,
    pub total_costs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub subject: String,
    pub comparator: String,
    /// Comparator mean cost minus subject mean cost.
    pub save: f64,
    pub comparator_cost: f64,
    /// `save / comparator_cost`.
    pub cost_reduction: f64,
    pub da_cost_diff: f64,
    pub exposure_diff: f64,
}

pub fn compare(subject: &ScheduleStats, comparator: &ScheduleStats) -> Comparison {
    let save = comparator.mean_total_cost - subject.mean_total_cost;
    Comparison {
        subject: subject.name.clone(),
        comparator: comparator.name.clone(),
        save,
        comparator_cost: comparator.mean_total_cost,
        cost_reduction: if comparator.mean_total_cost != 0.0 { save / comparator.mean_total_cost } else { 0.0 },
        da_cost_diff: subject.da_cost - comparator.da_cost,
        exposure_diff: subject.mean_exposure - comparator.mean_exposure,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub n_samples: usize,
    /// Samples on which some schedule failed; excluded for every schedule.
    pub failed_samples: Vec<usize>,
    pub schedules: Vec<ScheduleStats>,
    /// Every schedule after the first against the first.
    pub comparisons: Vec<Comparison>,
}

impl EvalReport {
    /// Writes `summary.csv`, `comparison.csv` and `rt_lmp_distribution.csv`.
    pub fn write_dir(&self, sys: &PowerSystem, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("summary.csv");
        let mut w = crate::export::writer(&path)?;
        let err = |p: &Path, e| crate::export::csv_err(p, e);
        w.write_record([
            "schedule",
            "da_cost",
            "mean_total_cost",
            "std_total_cost",
            "mean_exposure",
            "mean_producer_surplus",
            "mean_rt_cost",
        ])
        .map_err(|e| err(&path, e))?;
        for s in &self.schedules {
            w.write_record([
                s.name.clone(),
                s.da_cost.to_string(),
                s.mean_total_cost.to_string(),
                s.std_total_cost.to_string(),
                s.mean_exposure.to_string(),
                s.mean_producer_surplus.to_string(),
                s.mean_rt_cost.to_string(),
            ])
            .map_err(|e| err(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("comparison.csv");
        let mut w = crate::export::writer(&path)?;
        w.write_record(["schedule", "comparator", "Save", "Deter. cost", "Cost red.", "DA cost diff.", "Consr. exp. diff."])
            .map_err(|e| err(&path, e))?;
        for c in &self.comparisons {
            w.write_record([
                c.subject.clone(),
                c.comparator.clone(),
                c.save.to_string(),
                c.comparator_cost.to_string(),
                c.cost_reduction.to_string(),
                c.da_cost_diff.to_string(),
                c.exposure_diff.to_string(),
            ])
            .map_err(|e| err(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("rt_lmp_distribution.csv");
        let mut w = crate::export::writer(&path)?;
        w.write_record(["schedule", "bus", "sample", "rt_lmp", "da_lmp"]).map_err(|e| err(&path, e))?;
        for s in &self.schedules {
            for (i, b) in sys.buses().iter().enumerate() {
                for (k, v) in s.rt_lmp_samples[i].iter().enumerate() {
                    w.write_record([s.name.clone(), b.id.clone(), k.to_string(), v.to_string(), s.da_lmp_mean[i].to_string()])
                        .map_err(|e| err(&path, e))?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }
}

/// Paired out-of-sample evaluation: every schedule sees the same realizations.
pub fn evaluate_schedules(
    sys: &PowerSystem,
    schedules: &[(String, CommitmentSchedule)],
    uset: &UncertaintySet,
    samples: &[StressorVector],
    backend: &dyn Backend,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if schedules.is_empty() {
        return Err(Error::InvalidOption("no schedules to evaluate".into()));
    }
    for (name, s) in schedules {
        s.check_dims(sys).map_err(|e| Error::Dimension(format!("schedule `{name}`: {e}")))?;
    }
    let base_tp = sys.time().n_tp;
    let (eval_sys, eval_uset) = match opts.rt_periods_per_hour {
        Some(n) if n != base_tp => {
            let fine = sys.with_rt_resolution(n)?;
            let u = uset.rebase(&fine)?;
            (fine, u)
        }
        _ => (sys.clone(), uset.clone()),
    };
    let eval_tp = eval_sys.time().n_tp;
    let scenarios = samples
        .iter()
        .map(|a| eval_uset.realize_truncated(&a.regrid(base_tp, eval_tp)))
        .collect::<Result<Vec<_>>>()?;

    let mut per_schedule: Vec<Vec<Option<RtSolution>>> = Vec::with_capacity(schedules.len());
    let mut da = Vec::with_capacity(schedules.len());
    for (name, s) in schedules {
        let priced = da_pricing_run(sys, s, backend)
            .map_err(|e| Error::InvalidOption(format!("schedule `{name}` has no feasible DA dispatch: {e}")))?;
        da.push(priced);
        let sols = par_map(&scenarios, opts.workers, |sc| match solve_dcopf(&eval_sys, s, sc, backend) {
            Ok(sol) => Some(sol),
            Err(e) => {
                log::warn!("schedule `{name}`: sample failed: {e}");
                None
            }
        });
        per_schedule.push(sols);
    }
    let failed_samples: Vec<usize> =
        (0..scenarios.len()).filter(|&k| per_schedule.iter().any(|sols| sols[k].is_none())).collect();
    let used: Vec<usize> = (0..scenarios.len()).filter(|k| !failed_samples.contains(k)).collect();
    if used.is_empty() {
        return Err(Error::status(crate::solver::Status::Infeasible, "evaluating schedules: every sample failed"));
    }

    let stats: Vec<ScheduleStats> = schedules
        .iter()
        .zip(&per_schedule)
        .zip(&da)
        .map(|(((name, _), sols), priced)| {
            let da_cost = priced.dispatch.cost.total;
            let pick = |f: &dyn Fn(&RtSolution) -> f64| -> Vec<f64> {
                used.iter().map(|&k| f(sols[k].as_ref().expect("used samples succeeded"))).collect()
            };
            let exposure = pick(&|s| s.exposure.total);
            let total_costs: Vec<f64> = exposure.iter().map(|e| da_cost + e).collect();
            let surplus = pick(&|s| s.producer_surplus);
            let rt_cost = pick(&|s| s.cost);
            let rt_lmp_samples: Vec<Vec<f64>> = (0..sys.n_buses())
                .map(|i| pick(&|s| mean(&s.lmp[i])))
                .collect();
            ScheduleStats {
                name: name.clone(),
                da_cost,
                mean_total_cost: mean(&total_costs),
                std_total_cost: sample_std(&total_costs),
                mean_exposure: mean(&exposure),
                mean_producer_surplus: mean(&surplus),
                mean_rt_cost: mean(&rt_cost),
                da_lmp_mean: priced.lmp.iter().map(|row| mean(row)).collect(),
                rt_lmp_mean: rt_lmp_samples.iter().map(|v| mean(v)).collect(),
                rt_lmp_samples,
                total_costs,
            }
        })
        .collect();
    let comparisons = stats.iter().skip(1).map(|s| compare(s, &stats[0])).collect();
    Ok(EvalReport { n_samples: used.len(), failed_samples, schedules: stats, comparisons })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_beats_naive() {
        let mut v = vec![1e16];
        v.extend(std::iter::repeat(1.0).take(1000));
        v.push(-1e16);
        assert_eq!(stable_sum(v.iter().copied()), 1000.0);
    }

    #[test]
    fn std_uses_n_minus_one() {
        assert!((sample_std(&[1.0, 3.0]) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(sample_std(&[5.0]), 0.0);
    }
}
