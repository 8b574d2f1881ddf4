#![allow(dead_code)]

use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use scuc_core::adversary::solve_adversary;
use scuc_core::scuc::{da_pricing_run, CommitmentSchedule};
use scuc_core::solver::{Backend, LazyCallback, MipOptions, Model, SimplexBackend, SolveResult, SolverError};
use scuc_core::system::{
    Bus, CaseData, CostSegment, HistoryMatrix, Line, PowerSystem, Ramp, ThermalGenerator, TimeStructure, WindGenerator,
};
use scuc_core::uncertainty::{build_uncertainty_set, SigmaRule, UncertaintySet};

pub fn thermal(id: &str, bus: &str, p_max: f64, slope: f64) -> ThermalGenerator {
    ThermalGenerator {
        id: id.into(),
        bus: bus.into(),
        p_min: 0.0,
        p_max,
        ramp_hourly: Ramp::Unbounded,
        ramp_rt: Ramp::Unbounded,
        startup_cost: 0.0,
        shutdown_cost: 0.0,
        cost_segments: vec![CostSegment { slope, intercept: 0.0 }],
    }
}

pub fn bus(id: &str, load: &[f64]) -> Bus {
    Bus { id: id.into(), forecast_load: load.to_vec(), rt_forecast_load: None }
}

pub fn hours(n: usize, rt: &[usize]) -> TimeStructure {
    TimeStructure { da_hours: n, rt_hours: rt.to_vec(), n_tp: 1, flex_window: rt.to_vec() }
}

/// Three units on one bus, two hours, unit 3 limited to 1 MW per RT step.
pub fn ramp_case() -> PowerSystem {
    let mut g3 = thermal("3", "1", 50.0, 3.0);
    g3.ramp_rt = Ramp::Limited(1.0);
    PowerSystem::new(CaseData {
        buses: vec![bus("1", &[59.0, 59.0])],
        lines: vec![],
        thermal_generators: vec![thermal("1", "1", 50.0, 1.0), thermal("2", "1", 10.0, 2.0), g3],
        wind_generators: vec![],
        time: hours(2, &[0, 1]),
        voll_da: 10_000.0,
        voll_rt: 20_000.0,
    })
    .unwrap()
}

pub fn exact_mip() -> MipOptions {
    MipOptions { gap: 1e-9, ..MipOptions::default() }
}

/// A small case with an uncongested network and free ramping, so the
/// per-hour monotonicity behind LBBD cuts holds.
pub struct TinyInstance {
    pub sys: PowerSystem,
    pub uset: UncertaintySet,
    pub rho: f64,
}

pub fn tiny_instance(seed: u64) -> TinyInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_bus = rng.random_range(1..=3usize);
    let n_gen = rng.random_range(2..=4usize);
    let n_rt = rng.random_range(1..=2usize);
    let da_hours = n_rt + rng.random_range(0..=1usize);
    let rt: Vec<usize> = (da_hours - n_rt..da_hours).collect();
    let bus_ids: Vec<String> = (0..n_bus).map(|i| format!("b{i}")).collect();

    let mut gens = Vec::new();
    let mut cap_total = 0.0;
    for g in 0..n_gen {
        let mut t = thermal(&format!("g{g}"), &bus_ids[rng.random_range(0..n_bus)], rng.random_range(20.0..60.0), rng.random_range(1.0..40.0));
        t.startup_cost = rng.random_range(0.0..200.0);
        t.cost_segments[0].intercept = rng.random_range(0.0..30.0);
        cap_total += t.p_max;
        gens.push(t);
    }
    let share = 0.6 * cap_total / n_bus as f64;
    let buses = bus_ids
        .iter()
        .map(|id| bus(id, &(0..da_hours).map(|_| share * rng.random_range(0.5..1.0)).collect::<Vec<_>>()))
        .collect();
    let lines = (1..n_bus)
        .map(|i| Line {
            from_bus: bus_ids[rng.random_range(0..i)].clone(),
            to_bus: bus_ids[i].clone(),
            susceptance: rng.random_range(5.0..20.0),
            capacity: 1e4,
        })
        .collect();
    let with_wind = rng.random_bool(0.5);
    let wind = if with_wind {
        vec![WindGenerator {
            id: "w0".into(),
            bus: bus_ids[0].clone(),
            forecast_cap: (0..da_hours).map(|_| rng.random_range(5.0..15.0)).collect(),
            rt_forecast_cap: None,
        }]
    } else {
        vec![]
    };
    let sys = PowerSystem::new(CaseData {
        buses,
        lines,
        thermal_generators: gens,
        wind_generators: wind,
        time: hours(da_hours, &rt),
        voll_da: 500.0,
        voll_rt: 1000.0,
    })
    .unwrap();

    let k = rng.random_range(1..=2usize);
    let history = |rng: &mut ChaCha8Rng, ids: Vec<String>, scale: f64| {
        let n = ids.len();
        let rows = (0..8).map(|_| (0..n).map(|_| scale * rng.random_range(0.0..1.0)).collect()).collect();
        HistoryMatrix::new(ids, rows).unwrap()
    };
    let load_hist = history(&mut rng, bus_ids.clone(), 10.0);
    let wind_hist = with_wind.then(|| history(&mut rng, vec!["w0".into()], 5.0));
    let r_load = rng.random_range(5.0..0.4 * share);
    let uset = build_uncertainty_set(&load_hist, wind_hist.as_ref(), &sys, k, r_load, 3.0, SigmaRule::default()).unwrap();
    TinyInstance { sys, uset, rho: rng.random_range(0.2..2.0) }
}

/// Every RT-window commitment, with `base` elsewhere.
pub fn flex_commitments(sys: &PowerSystem, base: &CommitmentSchedule) -> Vec<CommitmentSchedule> {
    let flex = &sys.time().flex_window;
    let bits = sys.n_thermal() * flex.len();
    (0..1usize << bits)
        .map(|mask| {
            let mut y = base.y.clone();
            for g in 0..sys.n_thermal() {
                for (j, &t) in flex.iter().enumerate() {
                    y[g][t] = mask >> (g * flex.len() + j) & 1 == 1;
                }
            }
            CommitmentSchedule::from_on_off(y)
        })
        .collect()
}

pub struct Enumerated {
    pub schedule: CommitmentSchedule,
    pub da_cost: f64,
    pub exposure: f64,
    pub per_hour: Vec<f64>,
    pub congested: bool,
    pub ramp_binding: bool,
}

/// DA cost and worst-case exposure of every flex-window commitment.
pub fn enumerate(sys: &PowerSystem, uset: &UncertaintySet, base: &CommitmentSchedule) -> Vec<Enumerated> {
    let backend = SimplexBackend::default();
    flex_commitments(sys, base)
        .into_iter()
        .map(|schedule| {
            let da = da_pricing_run(sys, &schedule, &backend).unwrap();
            let adv = solve_adversary(sys, uset, &schedule, &backend, &Default::default()).unwrap();
            Enumerated {
                da_cost: da.dispatch.cost.total,
                exposure: adv.worst_exposure,
                per_hour: adv.per_hour_exposure.clone(),
                congested: adv.any_congestion(),
                ramp_binding: adv.any_ramp_binding(),
                schedule,
            }
        })
        .collect()
}

/// Uniform points on the cap around `axis`, by rejection from the whole sphere.
pub fn reference_cap(axis: &[f64], angle: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let norm = axis.iter().map(|x| x * x).sum::<f64>().sqrt();
    let min_cos = angle.cos();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let g: Vec<f64> = (0..axis.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let c = g.iter().zip(axis).map(|(a, b)| a * b).sum::<f64>() / (gn * norm);
        if c >= min_cos {
            out.push(g.iter().map(|x| x / gn * norm).collect());
        }
    }
    out
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Critical value at level 0.01.
pub fn ks_critical(n: usize, m: usize) -> f64 {
    1.628 * ((n + m) as f64 / (n * m) as f64).sqrt()
}

/// Delegating backend that keeps the strong-duality residual of every LP.
#[derive(Default)]
pub struct AuditBackend {
    inner: SimplexBackend,
    pub lp_gaps: Mutex<Vec<f64>>,
}

impl Backend for AuditBackend {
    fn name(&self) -> &str {
        "audit"
    }

    fn supports_lazy(&self) -> bool {
        self.inner.supports_lazy()
    }

    fn solve_lp(&self, model: &Model) -> Result<SolveResult, SolverError> {
        let res = self.inner.solve_lp(model)?;
        if res.is_optimal() {
            self.lp_gaps.lock().unwrap().push(res.duality_gap().unwrap_or(f64::INFINITY));
        }
        Ok(res)
    }

    fn solve_mip(&self, model: &Model, opts: &MipOptions, lazy: Option<&mut dyn LazyCallback>) -> Result<SolveResult, SolverError> {
        self.inner.solve_mip(model, opts, lazy)
    }
}
