//! Branch-and-bound over the simplex LP relaxation, with lazy constraints
//! checked at every integral candidate.

use crate::clock::Clock;

use super::{simplex, Constraint, Model, SolveResult, Status, Tolerances};

/// Receives integral candidates before they become incumbents.
///
/// Returning a non-empty vector rejects the candidate: the rows are added to
/// the model globally and the node is re-solved.
pub trait LazyCallback {
    fn on_candidate(&mut self, x: &[f64], objective: f64) -> Vec<Constraint>;
}

impl<F> LazyCallback for F
where
    F: FnMut(&[f64], f64) -> Vec<Constraint>,
{
    fn on_candidate(&mut self, x: &[f64], objective: f64) -> Vec<Constraint> {
        self(x, objective)
    }
}

#[derive(Debug, Clone)]
pub struct MipOptions {
    /// Relative optimality gap at which the search stops.
    pub gap: f64,
    /// Wall-clock limit in seconds.
    pub time_limit: Option<f64>,
    pub node_limit: usize,
    /// A full assignment used as the starting incumbent if feasible.
    pub warm_start: Option<Vec<f64>>,
}

impl Default for MipOptions {
    fn default() -> Self {
        Self { gap: 1e-3, time_limit: None, node_limit: 1_000_000, warm_start: None }
    }
}

struct Node {
    bounds: Vec<(f64, f64)>,
    parent_bound: f64,
    id: usize,
}

fn relative_gap(incumbent: f64, lower: f64) -> f64 {
    if !incumbent.is_finite() {
        return f64::INFINITY;
    }
    let diff = (incumbent - lower).max(0.0);
    if diff == 0.0 {
        0.0
    } else {
        diff / incumbent.abs().max(1e-10)
    }
}

fn most_fractional(model: &Model, x: &[f64], tol: f64) -> Option<usize> {
    let mut pick = None;
    let mut best = tol;
    for (j, c) in model.columns().iter().enumerate() {
        if c.kind == super::VarKind::Continuous {
            continue;
        }
        let frac = (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
        if frac > best + 1e-12 {
            best = frac;
            pick = Some(j);
        }
    }
    pick
}

fn round_integers(model: &Model, x: &mut [f64]) {
    for (j, c) in model.columns().iter().enumerate() {
        if c.kind != super::VarKind::Continuous {
            x[j] = x[j].round();
        }
    }
}

pub(crate) fn branch_and_bound(
    model: &Model,
    opts: &MipOptions,
    tol: &Tolerances,
    mut lazy: Option<&mut dyn LazyCallback>,
) -> SolveResult {
    let clock = Clock::new(opts.time_limit);
    let mut work = model.clone();
    let root_bounds: Vec<(f64, f64)> = work.columns().iter().map(|c| (c.lb, c.ub)).collect();

    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    if let Some(start) = &opts.warm_start {
        if start.len() == work.num_vars() && most_fractional(&work, start, tol.integrality_tol).is_none() {
            let mut x = start.clone();
            round_integers(&work, &mut x);
            if work.max_violation(&x) <= tol.feas_tol {
                let obj = work.objective_value(&x);
                let cuts = lazy.as_mut().map(|cb| cb.on_candidate(&x, obj)).unwrap_or_default();
                if cuts.is_empty() {
                    incumbent = Some((x, obj));
                } else {
                    for c in cuts {
                        work.add_constraint(c);
                    }
                }
            }
        }
    }

    let mut open = vec![Node { bounds: root_bounds, parent_bound: f64::NEG_INFINITY, id: 0 }];
    let mut next_id = 1;
    let mut pruned_lower = f64::INFINITY;
    let mut nodes = 0usize;
    let mut limit_status: Option<Status> = None;
    let mut root_unbounded = false;

    while !open.is_empty() {
        if clock.expired() {
            limit_status = Some(Status::TimeLimit);
            break;
        }
        if nodes >= opts.node_limit {
            limit_status = Some(Status::NodeLimit);
            break;
        }
        // depth-first until an incumbent exists, then best bound
        let pick = if incumbent.is_none() {
            open.len() - 1
        } else {
            let mut k = 0;
            for (i, n) in open.iter().enumerate() {
                let b = &open[k];
                if n.parent_bound < b.parent_bound || (n.parent_bound == b.parent_bound && n.id < b.id) {
                    k = i;
                }
            }
            k
        };
        let node = open.swap_remove(pick);
        let inc_obj = incumbent.as_ref().map_or(f64::INFINITY, |(_, o)| *o);
        let prune_slack = |inc: f64| opts.gap * inc.abs() + 1e-9;
        if node.parent_bound >= inc_obj - prune_slack(inc_obj) {
            pruned_lower = pruned_lower.min(node.parent_bound);
            continue;
        }
        nodes += 1;

        loop {
            let lp = simplex::solve(&work, Some(&node.bounds));
            match lp.status {
                Status::Optimal => {}
                Status::Unbounded => {
                    if node.id == 0 {
                        root_unbounded = true;
                    }
                    break;
                }
                _ => break,
            }
            let inc_obj = incumbent.as_ref().map_or(f64::INFINITY, |(_, o)| *o);
            if lp.objective >= inc_obj - prune_slack(inc_obj) {
                pruned_lower = pruned_lower.min(lp.objective);
                break;
            }
            match most_fractional(&work, &lp.x, tol.integrality_tol) {
                Some(j) => {
                    let v = lp.x[j];
                    let (lb, ub) = node.bounds[j];
                    let mut down = node.bounds.clone();
                    down[j] = (lb, v.floor().max(lb));
                    let mut up = node.bounds.clone();
                    up[j] = (v.ceil().min(ub), ub);
                    // child nearer the LP value is explored first
                    let (first, second) = if v - v.floor() >= 0.5 { (up, down) } else { (down, up) };
                    open.push(Node { bounds: second, parent_bound: lp.objective, id: next_id });
                    open.push(Node { bounds: first, parent_bound: lp.objective, id: next_id + 1 });
                    next_id += 2;
                    break;
                }
                None => {
                    let mut x = lp.x;
                    round_integers(&work, &mut x);
                    let obj = work.objective_value(&x);
                    let cuts = lazy.as_mut().map(|cb| cb.on_candidate(&x, obj)).unwrap_or_default();
                    if cuts.is_empty() {
                        incumbent = Some((x, obj));
                        break;
                    }
                    for c in cuts {
                        work.add_constraint(c);
                    }
                }
            }
        }
        if root_unbounded {
            break;
        }

        if let Some((_, inc)) = &incumbent {
            let open_lower = open.iter().map(|n| n.parent_bound).fold(f64::INFINITY, f64::min);
            let lower = open_lower.min(pruned_lower).min(*inc);
            if !open.is_empty() && relative_gap(*inc, lower) <= opts.gap {
                for n in open.drain(..) {
                    pruned_lower = pruned_lower.min(n.parent_bound);
                }
            }
        }
    }

    if root_unbounded && incumbent.is_none() {
        let mut res = SolveResult::without_point(Status::Unbounded);
        res.nodes = nodes;
        return res;
    }

    let open_lower = open.iter().map(|n| n.parent_bound).fold(f64::INFINITY, f64::min);
    match incumbent {
        Some((x, obj)) => {
            let lower = open_lower.min(pruned_lower).min(obj);
            SolveResult {
                status: limit_status.unwrap_or(Status::Optimal),
                x,
                duals: None,
                objective: obj,
                dual_objective: None,
                mip_gap: Some(relative_gap(obj, lower)),
                nodes,
            }
        }
        None => {
            let mut res = SolveResult::without_point(limit_status.unwrap_or(Status::Infeasible));
            res.nodes = nodes;
            res
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{Backend, Sense, SimplexBackend, Var};

    fn knapsack() -> (Model, Vec<Var>, Vec<f64>, Vec<f64>, f64) {
        let values = vec![10.0, 13.0, 7.0, 8.0, 4.0];
        let weights = vec![5.0, 6.0, 4.0, 3.0, 2.0];
        let cap = 11.0;
        let mut m = Model::new();
        let xs: Vec<Var> = values.iter().map(|&v| m.add_binary(-v)).collect();
        m.add_row(xs.iter().zip(&weights).map(|(&x, &w)| (x, w)).collect(), Sense::Le, cap);
        (m, xs, values, weights, cap)
    }

    fn brute_force(values: &[f64], weights: &[f64], cap: f64, banned: &[u32]) -> (u32, f64) {
        let n = values.len();
        let mut best = (0, 0.0);
        for mask in 0..(1u32 << n) {
            if banned.contains(&mask) {
                continue;
            }
            let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| weights[i]).sum();
            if w > cap {
                continue;
            }
            let v: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| values[i]).sum();
            if v > best.1 {
                best = (mask, v);
            }
        }
        best
    }

    fn mask_of(x: &[f64], xs: &[Var]) -> u32 {
        xs.iter().enumerate().filter(|(_, v)| x[v.0] > 0.5).map(|(i, _)| 1u32 << i).sum()
    }

    #[test]
    fn trivial_binary_minimum() {
        let mut m = Model::new();
        let y = m.add_binary(1.0);
        let res = SimplexBackend::default().solve_mip(&m, &MipOptions::default(), None).unwrap();
        assert_eq!(res.status, Status::Optimal);
        assert_eq!(res.value(y), 0.0);
    }

    #[test]
    fn knapsack_matches_enumeration() {
        let (m, xs, values, weights, cap) = knapsack();
        let opts = MipOptions { gap: 1e-9, ..Default::default() };
        let res = SimplexBackend::default().solve_mip(&m, &opts, None).unwrap();
        let (mask, best) = brute_force(&values, &weights, cap, &[]);
        assert!((-res.objective - best).abs() < 1e-9);
        assert_eq!(mask_of(&res.x, &xs), mask);
    }

    #[test]
    fn lazy_no_good_removes_assignment() {
        let (m, xs, values, weights, cap) = knapsack();
        let (banned, _) = brute_force(&values, &weights, cap, &[]);
        let mut calls = 0;
        let xs_cb = xs.clone();
        let mut cb = |x: &[f64], _obj: f64| -> Vec<Constraint> {
            calls += 1;
            if mask_of(x, &xs_cb) != banned {
                return vec![];
            }
            // sum_{on} (1 - x) + sum_{off} x >= 1
            let mut terms = Vec::new();
            let mut rhs = 1.0;
            for (i, &v) in xs_cb.iter().enumerate() {
                if banned >> i & 1 == 1 {
                    terms.push((v, -1.0));
                    rhs -= 1.0;
                } else {
                    terms.push((v, 1.0));
                }
            }
            vec![Constraint::new(terms, Sense::Ge, rhs)]
        };
        let opts = MipOptions { gap: 1e-9, ..Default::default() };
        let res = SimplexBackend::default().solve_mip(&m, &opts, Some(&mut cb)).unwrap();
        assert!(calls >= 1);
        let got = mask_of(&res.x, &xs);
        assert_ne!(got, banned);
        let (_, second) = brute_force(&values, &weights, cap, &[banned]);
        assert!((-res.objective - second).abs() < 1e-9);
    }

    #[test]
    fn reported_gap_within_requested() {
        let mut m = Model::new();
        let n = 12;
        let xs: Vec<Var> = (0..n).map(|i| m.add_binary(-(3.0 + (i as f64 * 1.7) % 5.0))).collect();
        m.add_row(xs.iter().enumerate().map(|(i, &x)| (x, 2.0 + (i as f64 * 2.3) % 4.0)).collect(), Sense::Le, 17.5);
        let opts = MipOptions { gap: 1e-3, ..Default::default() };
        let res = SimplexBackend::default().solve_mip(&m, &opts, None).unwrap();
        assert_eq!(res.status, Status::Optimal);
        assert!(res.mip_gap.unwrap() <= 1e-3);
    }

    #[test]
    fn infeasible_mip() {
        let mut m = Model::new();
        let a = m.add_binary(0.0);
        let b = m.add_binary(0.0);
        m.add_row(vec![(a, 1.0), (b, 1.0)], Sense::Eq, 1.5);
        let res = SimplexBackend::default().solve_mip(&m, &MipOptions::default(), None).unwrap();
        assert_eq!(res.status, Status::Infeasible);
    }

    #[test]
    fn warm_start_is_used_as_incumbent() {
        let (m, xs, values, weights, cap) = knapsack();
        let (mask, best) = brute_force(&values, &weights, cap, &[]);
        let start: Vec<f64> = (0..xs.len()).map(|i| (mask >> i & 1) as f64).collect();
        let opts = MipOptions { gap: 1e-9, warm_start: Some(start), ..Default::default() };
        let res = SimplexBackend::default().solve_mip(&m, &opts, None).unwrap();
        assert!((-res.objective - best).abs() < 1e-9);
    }

    #[test]
    fn nonpositive_gap_rejected() {
        let (m, ..) = knapsack();
        let opts = MipOptions { gap: 0.0, ..Default::default() };
        assert!(SimplexBackend::default().solve_mip(&m, &opts, None).is_err());
    }
}
