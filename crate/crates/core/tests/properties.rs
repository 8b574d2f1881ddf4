mod common;

use proptest::prelude::*;

use common::*;
use scuc_core::dcopf::{consumer_exposure, Scenario};
use scuc_core::decomposition::{solve_risk_aware, CutFamily, DecompositionMode, RiskOptions};
use scuc_core::evaluation::{
    evaluate_fixed_schedule, evaluate_schedules, sample_stressors, solve_stochastic_scuc, EvalOptions, SampleMethod,
    SampleSpec, StochasticOptions,
};
use scuc_core::scuc::{solve_deterministic, CommitmentSchedule};
use scuc_core::solver::{Backend, Model, Sense, SimplexBackend};
use scuc_core::system::{CaseData, HistoryMatrix, Line, PowerSystem};
use scuc_core::uncertainty::{build_uncertainty_set, grid_points, PrincipalModes, SigmaRule, StressorVector};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

/// `min c·x` over `A x ≥ b`, `0 ≤ x ≤ u` with `b ≤ A u` so the box corner is feasible.
fn covering_lp(c: &[f64], a: &[Vec<f64>], frac: &[f64], u: &[f64]) -> (Model, Vec<f64>) {
    let mut m = Model::new();
    let vars: Vec<_> = c.iter().zip(u).map(|(&ci, &ui)| m.add_var(0.0, ui, ci)).collect();
    let mut rhs = Vec::new();
    for (row, f) in a.iter().zip(frac) {
        let b = f * dot(row, u);
        rhs.push(b);
        m.add_row(vars.iter().zip(row).map(|(&v, &x)| (v, x)).collect(), Sense::Ge, b);
    }
    (m, rhs)
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn lp_strong_duality_and_rhs_sensitivity(
        c in prop::collection::vec(0.5f64..10.0, 4),
        a in prop::collection::vec(prop::collection::vec(0.0f64..5.0, 4), 3),
        frac in prop::collection::vec(0.1f64..0.9, 3),
        u in prop::collection::vec(1.0f64..10.0, 4),
    ) {
        let backend = SimplexBackend::default();
        let (m, _) = covering_lp(&c, &a, &frac, &u);
        let res = backend.solve_lp(&m).unwrap();
        prop_assert!(res.is_optimal());
        prop_assert!(m.max_violation(&res.x) <= 1e-7);
        prop_assert!(res.duality_gap().unwrap() <= 1e-6);
        // duals are d(obj)/d(rhs): ≥ rows of a minimisation have nonnegative duals
        for d in res.duals.as_ref().unwrap() {
            prop_assert!(*d >= -1e-9);
        }
    }

    #[test]
    fn branch_and_bound_matches_enumeration(
        c in prop::collection::vec(-10.0f64..10.0, 5),
        w in prop::collection::vec(1.0f64..10.0, 5),
        cap_frac in 0.2f64..0.8,
    ) {
        let cap = cap_frac * w.iter().sum::<f64>();
        let mut m = Model::new();
        let x: Vec<_> = c.iter().map(|&ci| m.add_binary(ci)).collect();
        m.add_row(x.iter().zip(&w).map(|(&v, &wi)| (v, wi)).collect(), Sense::Le, cap);
        let res = SimplexBackend::default().solve_mip(&m, &exact_mip(), None).unwrap();
        let best = (0..32u32)
            .filter(|mask| (0..5).map(|i| if mask >> i & 1 == 1 { w[i] } else { 0.0 }).sum::<f64>() <= cap)
            .map(|mask| (0..5).map(|i| if mask >> i & 1 == 1 { c[i] } else { 0.0 }).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        prop_assert!(res.is_optimal());
        prop_assert!((res.objective - best).abs() <= 1e-7, "{} vs {}", res.objective, best);
    }

    #[test]
    fn pca_modes_are_orthonormal_ordered_and_oriented(
        rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 4), 3..20),
    ) {
        let pca = PrincipalModes::from_rows(&rows, 4);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot(&pca.eigvecs[i], &pca.eigvecs[j]) - want).abs() <= 1e-9);
            }
            let q = &pca.eigvecs[i];
            let max = q.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let lead = q.iter().find(|x| x.abs() >= max - 1e-12).unwrap();
            prop_assert!(*lead > 0.0);
        }
        prop_assert!(pca.eigvals.windows(2).all(|w| w[0] >= w[1]));
        let rec = pca.reconstruct();
        let scale = 1.0 + pca.eigvals[0].abs();
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((rec[i][j] - pca.covariance[i][j]).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn exposure_is_additive_nonnegative_and_scaled(
        lmp in prop::collection::vec(prop::collection::vec(-20.0f64..200.0, 3), 2),
        load in prop::collection::vec(prop::collection::vec(0.0f64..100.0, 3), 2),
        base in prop::collection::vec(prop::collection::vec(0.0f64..100.0, 3), 2),
        n_tp in 1usize..13,
    ) {
        let e = consumer_exposure(&lmp, &load, &base, n_tp);
        let direct: f64 = (0..2)
            .flat_map(|i| (0..3).map(move |t| (i, t)))
            .map(|(i, t)| lmp[i][t] * (load[i][t] - base[i][t]).max(0.0) / n_tp as f64)
            .sum();
        prop_assert!((e.total - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
        prop_assert!((e.by_bus.iter().sum::<f64>() - e.total).abs() <= 1e-9 * (1.0 + e.total.abs()));
        prop_assert!((e.by_period.iter().sum::<f64>() - e.total).abs() <= 1e-9 * (1.0 + e.total.abs()));
        let unit = consumer_exposure(&lmp, &load, &base, 1);
        prop_assert!((unit.total / n_tp as f64 - e.total).abs() <= 1e-9 * (1.0 + unit.total.abs()));
    }
}

fn three_bus(load: f64) -> PowerSystem {
    PowerSystem::new(CaseData {
        buses: (0..3).map(|i| bus(&i.to_string(), &[load, load])).collect(),
        lines: (1..3)
            .map(|i| Line { from_bus: "0".into(), to_bus: i.to_string(), susceptance: 10.0, capacity: 1e4 })
            .collect(),
        thermal_generators: (0..3).map(|i| thermal(&format!("g{i}"), &i.to_string(), 3.0 * load, 1.0)).collect(),
        wind_generators: vec![],
        time: hours(2, &[0, 1]),
        voll_da: 100.0,
        voll_rt: 200.0,
    })
    .unwrap()
}

fn three_bus_history(rows: Vec<Vec<f64>>) -> HistoryMatrix {
    HistoryMatrix::new(vec!["0".into(), "1".into(), "2".into()], rows).unwrap()
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn realization_is_linear_in_stressors(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 3), 4..10),
        a in prop::collection::vec(-5.0f64..5.0, 4),
        b in prop::collection::vec(-5.0f64..5.0, 4),
    ) {
        // baseline large enough that no entry is truncated
        let sys = three_bus(1000.0);
        let uset = build_uncertainty_set(&three_bus_history(rows), None, &sys, 2, 10.0, 0.0, SigmaRule::default()).unwrap();
        let k = uset.load.k();
        let alpha = |v: &[f64]| StressorVector { alpha_d: (0..k).map(|j| v[2 * j..2 * j + 2].to_vec()).collect(), alpha_w: vec![] };
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let zero = uset.realize(&uset.zero_stressor(), &sys).unwrap();
        let (ra, rb, rs) = (uset.realize(&alpha(&a), &sys).unwrap(), uset.realize(&alpha(&b), &sys).unwrap(), uset.realize(&alpha(&sum), &sys).unwrap());
        for i in 0..3 {
            for t in 0..2 {
                let lin = ra.d_rt[i][t] + rb.d_rt[i][t] - zero.d_rt[i][t];
                prop_assert!((rs.d_rt[i][t] - lin).abs() <= 1e-9);
            }
        }
        prop_assert_eq!(zero, Scenario::baseline(&sys));
    }

    #[test]
    fn grid_points_stay_in_the_set_and_nonnegative(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 3), 4..10),
        base in 1.0f64..30.0,
        r in 0.0f64..40.0,
        k in 1usize..4,
    ) {
        let sys = three_bus(base);
        let uset = build_uncertainty_set(&three_bus_history(rows), None, &sys, k, r, 0.0, SigmaRule::default()).unwrap();
        let grids = grid_points(&uset);
        prop_assert!(!grids.is_empty());
        for g in &grids {
            prop_assert!(g.alpha.alpha_d.iter().flatten().all(|a| a.abs() <= r + 1e-9));
            prop_assert!(g.scenario.d_rt.iter().flatten().all(|&d| d >= 0.0));
        }
    }

    #[test]
    fn cone_samples_keep_norm_and_angle(
        center in prop::collection::vec(-10.0f64..10.0, 2),
        angle in 0.0f64..1.5,
        seed in any::<u64>(),
    ) {
        prop_assume!(center.iter().any(|c| c.abs() > 1e-3));
        let sys = three_bus(50.0);
        let rows = vec![vec![1.0, 2.0, 0.0], vec![3.0, 1.0, 1.0], vec![0.0, 0.0, 5.0], vec![2.0, 4.0, 1.0]];
        let uset = build_uncertainty_set(&three_bus_history(rows), None, &sys, 2, 10.0, 0.0, SigmaRule::default()).unwrap();
        let c = StressorVector::constant(&center, &[], 2);
        let spec = SampleSpec { method: SampleMethod::Cone { angle, center: c, joint: false }, n_samples: 50, seed };
        let samples = sample_stressors(&uset, &spec).unwrap();
        let cn = dot(&center, &center).sqrt();
        for s in &samples {
            for t in 0..2 {
                let col = s.column(true, t);
                let nrm = dot(&col, &col).sqrt();
                prop_assert!((nrm - cn).abs() <= 1e-9 * cn);
                let cos = (dot(&col, &center) / (nrm * cn)).clamp(-1.0, 1.0);
                prop_assert!(cos.acos() <= angle + 1e-9);
            }
        }
        prop_assert_eq!(&samples, &sample_stressors(&uset, &spec).unwrap());
    }
}

proptest! {
    #![proptest_config(config(8))]

    #[test]
    fn every_cut_family_and_mode_reaches_the_enumerated_optimum(seed in 100u64..10_000) {
        let inst = tiny_instance(seed);
        let backend = SimplexBackend::default();
        let det = solve_deterministic(&inst.sys, &backend, &exact_mip()).unwrap().schedule;
        let best = enumerate(&inst.sys, &inst.uset, &det)
            .iter()
            .map(|e| e.da_cost + inst.rho * e.exposure)
            .fold(f64::INFINITY, f64::min);
        for (families, mode) in [
            (vec![CutFamily::NoGood], DecompositionMode::Iterative),
            (vec![CutFamily::LShaped], DecompositionMode::Iterative),
            (vec![CutFamily::Lbbd, CutFamily::LShaped], DecompositionMode::BranchAndCut),
            (vec![CutFamily::Lbbd], DecompositionMode::BranchAndCut),
        ] {
            let opts = RiskOptions { rho: inst.rho, families: families.clone(), mode, root_cuts: 1, mip: exact_mip(), ..RiskOptions::default() };
            let sol = solve_risk_aware(&inst.sys, &inst.uset, &det, &backend, &opts).unwrap();
            prop_assert!(sol.converged);
            prop_assert!(
                (sol.total_objective - best).abs() <= 1e-6 * best.abs().max(1.0),
                "{:?} {:?}: {} vs {}", families, mode, sol.total_objective, best
            );
            prop_assert!(sol.opt_gap <= 1e-6);
        }
    }

    #[test]
    fn cvar_identity_and_stochastic_dominance(
        loads in prop::collection::vec(20.0f64..110.0, 2..6),
        beta in 0.5f64..0.95,
        rho in 0.1f64..2.0,
    ) {
        let backend = SimplexBackend::default();
        let mut a = thermal("a", "1", 60.0, 10.0);
        a.startup_cost = 50.0;
        let mut b = thermal("b", "1", 60.0, 30.0);
        b.startup_cost = 300.0;
        let sys = PowerSystem::new(CaseData {
            buses: vec![bus("1", &[50.0, 70.0])],
            lines: vec![],
            thermal_generators: vec![a, b],
            wind_generators: vec![],
            time: hours(2, &[1]),
            voll_da: 500.0,
            voll_rt: 1000.0,
        })
        .unwrap();
        let scenarios: Vec<Scenario> = loads
            .iter()
            .map(|&l| {
                let mut s = Scenario::baseline(&sys);
                s.d_rt[0][0] = l;
                s
            })
            .collect();
        let opts = StochasticOptions { rho_sto: rho, beta, mip: exact_mip(), warm_start: None };
        let sol = solve_stochastic_scuc(&sys, &scenarios, &backend, &opts).unwrap();

        let s = loads.len() as f64;
        let mut sorted = sol.scenario_costs.clone();
        sorted.sort_by(|x, y| y.total_cmp(x));
        let (mut mass, mut tail) = (1.0 - beta, 0.0);
        for c in sorted {
            let take = mass.min(1.0 / s);
            tail += take * c;
            mass -= take;
        }
        let cvar = sol.z + sol.eta.iter().sum::<f64>() / (s * (1.0 - beta));
        prop_assert!((cvar - tail / (1.0 - beta)).abs() <= 1e-6 * (1.0 + cvar.abs()));

        let det = solve_deterministic(&sys, &backend, &exact_mip()).unwrap().schedule;
        let fixed = evaluate_fixed_schedule(&sys, &scenarios, &det, rho, beta, &backend).unwrap();
        prop_assert!(sol.objective <= fixed.objective + 1e-6 * (1.0 + fixed.objective.abs()));
    }
}

#[test]
fn single_scenario_collapses_to_deterministic_scuc() {
    let backend = SimplexBackend::default();
    let mut a = thermal("a", "1", 60.0, 10.0);
    a.startup_cost = 40.0;
    let mut b = thermal("b", "1", 60.0, 30.0);
    b.startup_cost = 300.0;
    let case = |load: [f64; 2]| CaseData {
        buses: vec![bus("1", &load)],
        lines: vec![],
        thermal_generators: vec![a.clone(), b.clone()],
        wind_generators: vec![],
        time: hours(2, &[1]),
        voll_da: 900.0,
        voll_rt: 1000.0,
    };
    let sys = PowerSystem::new(case([50.0, 70.0])).unwrap();
    let mut sc = Scenario::baseline(&sys);
    sc.d_rt[0][0] = 85.0;
    let sol = solve_stochastic_scuc(&sys, &[sc], &backend, &StochasticOptions { mip: exact_mip(), ..Default::default() }).unwrap();
    let det_sys = PowerSystem::new(case([50.0, 85.0])).unwrap();
    let det = solve_deterministic(&det_sys, &backend, &exact_mip()).unwrap();
    assert!((sol.objective - det.dispatch.cost.total).abs() < 1e-6, "{} vs {}", sol.objective, det.dispatch.cost.total);
}

#[test]
fn warm_started_stochastic_solve_agrees() {
    let backend = SimplexBackend::default();
    let sys = PowerSystem::new(CaseData {
        buses: vec![bus("1", &[50.0, 70.0])],
        lines: vec![],
        thermal_generators: vec![thermal("a", "1", 60.0, 10.0), thermal("b", "1", 60.0, 30.0)],
        wind_generators: vec![],
        time: hours(2, &[1]),
        voll_da: 500.0,
        voll_rt: 1000.0,
    })
    .unwrap();
    let scenarios: Vec<Scenario> = [40.0, 90.0]
        .iter()
        .map(|&l| {
            let mut s = Scenario::baseline(&sys);
            s.d_rt[0][0] = l;
            s
        })
        .collect();
    let cold = solve_stochastic_scuc(&sys, &scenarios, &backend, &StochasticOptions { mip: exact_mip(), ..Default::default() }).unwrap();
    let warm = StochasticOptions { mip: exact_mip(), warm_start: Some(CommitmentSchedule::all_on(2, 2)), ..Default::default() };
    let warm = solve_stochastic_scuc(&sys, &scenarios, &backend, &warm).unwrap();
    assert!((cold.objective - warm.objective).abs() < 1e-6);
}

#[test]
fn paired_evaluation_of_identical_schedules_saves_nothing_and_is_reproducible() {
    let backend = SimplexBackend::default();
    let sys = three_bus(40.0);
    let rows = vec![vec![1.0, 2.0, 0.0], vec![3.0, 1.0, 1.0], vec![0.0, 0.0, 5.0], vec![2.0, 4.0, 1.0]];
    let uset = build_uncertainty_set(&three_bus_history(rows), None, &sys, 2, 15.0, 0.0, SigmaRule::default()).unwrap();
    let spec = SampleSpec { method: SampleMethod::Uniform, n_samples: 20, seed: 3 };
    let samples = sample_stressors(&uset, &spec).unwrap();
    let y = CommitmentSchedule::all_on(3, 2);
    let schedules = vec![("a".to_string(), y.clone()), ("b".to_string(), y)];
    let opts = EvalOptions { workers: 3, rt_periods_per_hour: Some(4) };
    let report = evaluate_schedules(&sys, &schedules, &uset, &samples, &backend, &opts).unwrap();
    assert_eq!(report.comparisons[0].save, 0.0);
    assert_eq!(report.n_samples, 20);

    let again = evaluate_schedules(&sys, &schedules, &uset, &sample_stressors(&uset, &spec).unwrap(), &backend, &opts).unwrap();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    report.write_dir(&sys, dir_a.path()).unwrap();
    again.write_dir(&sys, dir_b.path()).unwrap();
    for f in ["summary.csv", "comparison.csv", "rt_lmp_distribution.csv"] {
        assert_eq!(std::fs::read(dir_a.path().join(f)).unwrap(), std::fs::read(dir_b.path().join(f)).unwrap(), "{f}");
    }
}
