//! Worst-case consumer exposure for a fixed commitment, by grid search over
//! the uncertainty set.

use std::path::Path;

use serde::Serialize;

use crate::dcopf::{solve_dcopf, RtSolution, Scenario};
use crate::error::{Error, Result};
use crate::parallel::par_map;
use crate::scuc::CommitmentSchedule;
use crate::solver::Backend;
use crate::system::PowerSystem;
use crate::uncertainty::{grid_points, GridPoint, StressorVector, UncertaintySet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdversaryOptions {
    /// Concurrent DCOPF solves; 0 uses every available core.
    pub workers: usize,
}

impl Default for AdversaryOptions {
    fn default() -> Self {
        Self { workers: 1 }
    }
}

/// Outcome of one grid evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridEval {
    pub load_pattern: usize,
    pub wind_pattern: usize,
    /// `None` when the DCOPF failed.
    pub exposure: Option<f64>,
    pub congested: bool,
    pub ramp_binding: bool,
    pub truncated: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AdversaryResult {
    /// Position of the worst grid in `grid_log`.
    pub worst_index: usize,
    pub worst_alpha: StressorVector,
    pub worst_scenario: Scenario,
    pub worst_exposure: f64,
    /// Exposure of the worst grid split by RT hour; sums to `worst_exposure`.
    pub per_hour_exposure: Vec<f64>,
    pub worst_rt_solution: RtSolution,
    pub grid_log: Vec<GridEval>,
}

impl AdversaryResult {
    /// Any evaluated grid hit a line limit.
    pub fn any_congestion(&self) -> bool {
        self.grid_log.iter().any(|g| g.congested)
    }

    pub fn any_ramp_binding(&self) -> bool {
        self.grid_log.iter().any(|g| g.ramp_binding)
    }

    /// Writes `grid,load_pattern,wind_pattern,exposure,congested,ramp_binding,truncated,error`.
    pub fn write_grid_log(&self, path: &Path) -> Result<()> {
        let mut w = crate::export::writer(path)?;
        let err = |e| crate::export::csv_err(path, e);
        w.write_record(["grid", "load_pattern", "wind_pattern", "exposure", "congested", "ramp_binding", "truncated", "error"])
            .map_err(err)?;
        let pat = |p: usize| if p == usize::MAX { "zero".to_string() } else { p.to_string() };
        for (i, g) in self.grid_log.iter().enumerate() {
            w.write_record([
                i.to_string(),
                pat(g.load_pattern),
                pat(g.wind_pattern),
                g.exposure.map_or(String::new(), |e| e.to_string()),
                g.congested.to_string(),
                g.ramp_binding.to_string(),
                g.truncated.to_string(),
                g.error.clone().unwrap_or_default(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Maximises consumer exposure over the grid of `uset`.
pub fn solve_adversary(
    sys: &PowerSystem,
    uset: &UncertaintySet,
    y_star: &CommitmentSchedule,
    backend: &dyn Backend,
    opts: &AdversaryOptions,
) -> Result<AdversaryResult> {
    solve_adversary_on(sys, &grid_points(uset), y_star, backend, opts)
}

/// Same as [`solve_adversary`] over precomputed grid points.
pub fn solve_adversary_on(
    sys: &PowerSystem,
    grids: &[GridPoint],
    y_star: &CommitmentSchedule,
    backend: &dyn Backend,
    opts: &AdversaryOptions,
) -> Result<AdversaryResult> {
    y_star.check_dims(sys)?;
    if grids.is_empty() {
        return Err(Error::InvalidOption("the adversary needs at least one grid point".into()));
    }
    let solved: Vec<Result<RtSolution>> =
        par_map(grids, opts.workers, |g| solve_dcopf(sys, y_star, &g.scenario, backend));

    let mut grid_log = Vec::with_capacity(grids.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, (g, r)) in grids.iter().zip(&solved).enumerate() {
        let entry = match r {
            Ok(sol) => {
                let e = sol.exposure.total;
                // strict: ties stay with the earliest grid
                if best.is_none_or(|(_, b)| e > b) {
                    best = Some((i, e));
                }
                GridEval {
                    load_pattern: g.load_pattern,
                    wind_pattern: g.wind_pattern,
                    exposure: Some(e),
                    congested: sol.congested,
                    ramp_binding: sol.ramp_binding,
                    truncated: g.truncated,
                    error: None,
                }
            }
            Err(e) => {
                log::warn!("adversary grid {i} skipped: {e}");
                GridEval {
                    load_pattern: g.load_pattern,
                    wind_pattern: g.wind_pattern,
                    exposure: None,
                    congested: false,
                    ramp_binding: false,
                    truncated: g.truncated,
                    error: Some(e.to_string()),
                }
            }
        };
        grid_log.push(entry);
    }

    let Some((worst_index, worst_exposure)) = best else {
        let first = solved.into_iter().find_map(|r| r.err()).expect("no success implies an error");
        return Err(match first {
            Error::SolverStatus { status, context } => {
                Error::SolverStatus { status, context: format!("{context} (all {} adversary grids failed)", grids.len()) }
            }
            other => other,
        });
    };
    let worst_rt_solution = solved.into_iter().nth(worst_index).expect("index in range").expect("best is Ok");
    let time = sys.time();
    let per_hour_exposure = (0..time.rt_hours.len())
        .map(|k| time.periods_of_rt_hour(k).map(|t| worst_rt_solution.exposure.by_period[t]).sum())
        .collect();
    Ok(AdversaryResult {
        worst_index,
        worst_alpha: grids[worst_index].alpha.clone(),
        worst_scenario: grids[worst_index].scenario.clone(),
        worst_exposure,
        per_hour_exposure,
        worst_rt_solution,
        grid_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::SimplexBackend;
    use crate::system::fixtures::*;
    use crate::system::{CaseData, HistoryMatrix};
    use crate::uncertainty::{build_uncertainty_set, SigmaRule};

    fn one_bus(load: f64, cap: f64) -> PowerSystem {
        PowerSystem::new(CaseData {
            buses: vec![bus("1", &[load])],
            lines: vec![],
            thermal_generators: vec![thermal("g", "1", 0.0, cap, 10.0)],
            wind_generators: vec![],
            time: hours(1, &[0]),
            voll_da: 1000.0,
            voll_rt: 5000.0,
        })
        .unwrap()
    }

    fn varying_history() -> HistoryMatrix {
        HistoryMatrix::new(vec!["1".into()], vec![vec![1.0], vec![3.0], vec![2.0]]).unwrap()
    }

    #[test]
    fn shortfall_priced_at_rt_voll() {
        // committed capacity equals forecast load; the worst grid adds 20 MW of shortfall
        let sys = one_bus(100.0, 100.0);
        let uset = build_uncertainty_set(&varying_history(), None, &sys, 1, 20.0, 0.0, SigmaRule::default()).unwrap();
        let res = solve_adversary(&sys, &uset, &CommitmentSchedule::all_on(1, 1), &SimplexBackend::default(), &Default::default())
            .unwrap();
        assert!((res.worst_exposure - 5000.0 * 20.0).abs() < 1e-6, "{}", res.worst_exposure);
        assert_eq!(res.grid_log.len(), 2);
        assert!((res.per_hour_exposure.iter().sum::<f64>() - res.worst_exposure).abs() < 1e-9);
    }

    #[test]
    fn zero_covariance_gives_forecast_exposure() {
        let sys = one_bus(50.0, 100.0);
        let h = HistoryMatrix::new(vec!["1".into()], vec![vec![4.0]; 3]).unwrap();
        let uset = build_uncertainty_set(&h, None, &sys, 3, 10.0, 0.0, SigmaRule::default()).unwrap();
        let res = solve_adversary(&sys, &uset, &CommitmentSchedule::all_on(1, 1), &SimplexBackend::default(), &Default::default())
            .unwrap();
        assert_eq!(res.worst_exposure, 0.0);
        assert_eq!(res.worst_scenario, Scenario::baseline(&sys));
    }

    #[test]
    fn parallel_matches_sequential() {
        let sys = PowerSystem::new(ramp_example()).unwrap();
        let h = HistoryMatrix::new(vec!["1".into()], vec![vec![50.0], vec![60.0], vec![55.0]]).unwrap();
        let uset = build_uncertainty_set(&h, None, &sys, 1, 5.0, 0.0, SigmaRule::default()).unwrap();
        let y = CommitmentSchedule::all_on(3, 2);
        let a = solve_adversary(&sys, &uset, &y, &SimplexBackend::default(), &AdversaryOptions { workers: 1 }).unwrap();
        let b = solve_adversary(&sys, &uset, &y, &SimplexBackend::default(), &AdversaryOptions { workers: 4 }).unwrap();
        assert_eq!(a.worst_index, b.worst_index);
        assert_eq!(a.grid_log, b.grid_log);
    }
}
