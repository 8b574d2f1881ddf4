//! Dense bounded-variable primal simplex.
//!
//! Every column is shifted to `[0, u]`; rows get a slack and an artificial
//! column. The artificial block starts as the identity, so after the final
//! pivot it holds `B^-1` and the row duals are read off as `c_B^T B^-1`.
//!
//! The tableau is rebuilt from the original rows whenever the basic values
//! drift from them, and always before optimality is declared.

use nalgebra::{DMatrix, DVector};

use super::{Model, Sense, SolveResult, Status};

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const ZERO_STEP: f64 = 1e-12;
const DEGENERATE_SWITCH: usize = 64;
const HARRIS_TOL: f64 = 1e-9;
/// Pivots between residual checks of the basic values.
const CHECK_EVERY: usize = 50;
const DRIFT_TOL: f64 = 1e-7;
const MAX_REFINEMENTS: usize = 3;

#[derive(Debug, Clone, Copy)]
enum ColMap {
    Fixed(f64),
    Shift { col: usize, sign: f64, shift: f64 },
    Split { pos: usize, neg: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum State {
    Lower,
    Upper,
    Basic,
}

struct Tableau {
    m: usize,
    ncol: usize,
    t: Vec<f64>,
    xb: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<State>,
    upper: Vec<f64>,
    barred: Vec<bool>,
    d: Vec<f64>,
    /// Original (row-flipped) constraint columns as `(row, coef)` and right-hand side.
    a0: Vec<Vec<(usize, f64)>>,
    b0: Vec<f64>,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
    Singular,
}

impl Tableau {
    fn at(&self, r: usize, j: usize) -> f64 {
        self.t[r * self.ncol + j]
    }

    fn reduced_costs(&mut self, cost: &[f64]) {
        self.d.copy_from_slice(cost);
        for r in 0..self.m {
            let cb = cost[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.t[r * self.ncol..(r + 1) * self.ncol];
            for (dj, &a) in self.d.iter_mut().zip(row) {
                *dj -= cb * a;
            }
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let n = self.ncol;
        let piv = self.t[r * n + j];
        {
            let row = &mut self.t[r * n..(r + 1) * n];
            for a in row.iter_mut() {
                *a /= piv;
            }
            row[j] = 1.0;
        }
        let (head, rest) = self.t.split_at_mut(r * n);
        let (prow, tail) = rest.split_at_mut(n);
        for other in head.chunks_mut(n).chain(tail.chunks_mut(n)) {
            let f = other[j];
            if f == 0.0 {
                continue;
            }
            for (a, &p) in other.iter_mut().zip(prow.iter()) {
                *a -= f * p;
            }
            other[j] = 0.0;
        }
        let f = self.d[j];
        if f != 0.0 {
            for (dk, &p) in self.d.iter_mut().zip(prow.iter()) {
                *dk -= f * p;
            }
            self.d[j] = 0.0;
        }
    }

    /// Rebuilds the tableau and basic values from the original rows, discarding
    /// accumulated pivot error. False if the basis matrix is singular.
    fn reinvert(&mut self) -> bool {
        let (m, n) = (self.m, self.ncol);
        let mut b = DMatrix::zeros(m, m);
        for (k, &j) in self.basis.iter().enumerate() {
            for &(r, a) in &self.a0[j] {
                b[(r, k)] = a;
            }
        }
        let Some(binv) = b.lu().try_inverse() else {
            return false;
        };
        self.t.fill(0.0);
        for (j, col) in self.a0.iter().enumerate() {
            for &(k, a) in col {
                for (r, &v) in binv.column(k).iter().enumerate() {
                    self.t[r * n + j] += a * v;
                }
            }
        }
        for (k, &j) in self.basis.iter().enumerate() {
            for r in 0..m {
                self.t[r * n + j] = if r == k { 1.0 } else { 0.0 };
            }
        }
        let xb = binv * DVector::from_vec(self.nonbasic_rhs());
        self.xb.copy_from_slice(xb.as_slice());
        true
    }

    /// Row right-hand side net of nonbasic columns sitting at their upper bound.
    fn nonbasic_rhs(&self) -> Vec<f64> {
        let mut rhs = self.b0.clone();
        for j in 0..self.ncol {
            if self.state[j] == State::Upper {
                for &(r, a) in &self.a0[j] {
                    rhs[r] -= a * self.upper[j];
                }
            }
        }
        rhs
    }

    /// Largest row residual of the current basic values against the original rows.
    fn residual(&self) -> f64 {
        let mut res = self.nonbasic_rhs();
        for (k, &j) in self.basis.iter().enumerate() {
            for &(r, a) in &self.a0[j] {
                res[r] -= a * self.xb[k];
            }
        }
        res.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let mut enter = None;
        let mut best = 0.0;
        for j in 0..self.ncol {
            if self.barred[j] {
                continue;
            }
            let score = match self.state[j] {
                State::Basic => continue,
                State::Lower if self.d[j] < -OPT_TOL && self.upper[j] > 0.0 => -self.d[j],
                State::Upper if self.d[j] > OPT_TOL => self.d[j],
                _ => continue,
            };
            if bland {
                return Some(j);
            }
            if score > best {
                best = score;
                enter = Some(j);
            }
        }
        enter
    }

    /// Ratio test for entering column `j` moving in direction `delta`. Returns
    /// the step and the leaving row with whether it leaves at its upper bound;
    /// no row means a bound flip. Outside Bland mode a Harris pass picks the
    /// largest pivot among rows that block within the feasibility tolerance.
    fn ratio(&self, j: usize, delta: f64, bland: bool) -> (f64, Option<(usize, bool)>) {
        let limit = |r: usize, slack: f64| -> Option<(f64, bool)> {
            let a = delta * self.at(r, j);
            if a > PIVOT_TOL {
                Some(((self.xb[r].max(0.0) + slack) / a, false))
            } else if a < -PIVOT_TOL {
                let u = self.upper[self.basis[r]];
                u.is_finite().then(|| (((u - self.xb[r]).max(0.0) + slack) / -a, true))
            } else {
                None
            }
        };
        let mut leave: Option<(usize, bool)> = None;
        if bland {
            let mut theta = self.upper[j];
            for r in 0..self.m {
                let Some((lim, to_upper)) = limit(r, 0.0) else { continue };
                let take = lim < theta - ZERO_STEP
                    || (lim <= theta + ZERO_STEP && leave.is_some_and(|(lr, _)| self.basis[r] < self.basis[lr]));
                if take {
                    theta = lim;
                    leave = Some((r, to_upper));
                }
            }
            return (theta, leave);
        }
        let mut bound = self.upper[j];
        for r in 0..self.m {
            if let Some((lim, _)) = limit(r, HARRIS_TOL) {
                bound = bound.min(lim);
            }
        }
        if !bound.is_finite() {
            return (f64::INFINITY, None);
        }
        let mut theta = self.upper[j];
        let mut best = 0.0;
        for r in 0..self.m {
            let Some((lim, to_upper)) = limit(r, 0.0) else { continue };
            let a = self.at(r, j).abs();
            if lim <= bound && a > best {
                best = a;
                theta = lim;
                leave = Some((r, to_upper));
            }
        }
        if leave.is_some() && self.upper[j] <= theta {
            return (self.upper[j], None);
        }
        (theta, leave)
    }

    fn run(&mut self, cost: &[f64], max_iter: usize, phase_one: bool) -> Outcome {
        let scale = 1.0 + self.b0.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()));
        let mut degenerate = 0usize;
        let mut bland = false;
        let mut since_check = 0usize;
        let mut refinements = 0usize;
        for _ in 0..max_iter {
            since_check += 1;
            if since_check >= CHECK_EVERY {
                since_check = 0;
                if self.residual() > DRIFT_TOL * scale {
                    if !self.reinvert() {
                        return Outcome::Singular;
                    }
                    self.reduced_costs(cost);
                }
            }
            let Some(j) = self.entering(bland) else {
                // confirm optimality on a freshly inverted basis
                if refinements >= MAX_REFINEMENTS {
                    return Outcome::Optimal;
                }
                refinements += 1;
                if !self.reinvert() {
                    return Outcome::Singular;
                }
                self.reduced_costs(cost);
                since_check = 0;
                if self.entering(bland).is_none() {
                    return Outcome::Optimal;
                }
                continue;
            };
            let delta = if self.state[j] == State::Lower { 1.0 } else { -1.0 };
            let (theta, leave) = self.ratio(j, delta, bland);
            if !theta.is_finite() {
                return Outcome::Unbounded;
            }

            if theta > ZERO_STEP {
                for r in 0..self.m {
                    let a = self.at(r, j);
                    if a != 0.0 {
                        self.xb[r] -= delta * theta * a;
                    }
                }
                degenerate = 0;
                bland = false;
            } else {
                degenerate += 1;
                if degenerate > DEGENERATE_SWITCH {
                    bland = true;
                }
            }

            match leave {
                None => {
                    self.state[j] = if self.state[j] == State::Lower { State::Upper } else { State::Lower };
                }
                Some((r, to_upper)) => {
                    let start = if self.state[j] == State::Lower { 0.0 } else { self.upper[j] };
                    let l = self.basis[r];
                    self.state[l] = if to_upper { State::Upper } else { State::Lower };
                    if phase_one && self.upper[l].is_infinite() && self.barred_candidate(l) {
                        self.barred[l] = true;
                    }
                    self.pivot(r, j);
                    self.basis[r] = j;
                    self.state[j] = State::Basic;
                    self.xb[r] = start + delta * theta;
                }
            }
        }
        Outcome::IterationLimit
    }

    // artificial columns occupy the trailing m slots
    fn barred_candidate(&self, col: usize) -> bool {
        col >= self.ncol - self.m
    }
}

/// Solves the LP relaxation of `model`, optionally with overridden column
/// bounds (used by branch-and-bound).
pub(crate) fn solve(model: &Model, bounds: Option<&[(f64, f64)]>) -> SolveResult {
    solve_with_rows(model, bounds, model.rows().len())
}

pub(crate) fn solve_with_rows(model: &Model, bounds: Option<&[(f64, f64)]>, n_rows: usize) -> SolveResult {
    let cols = model.columns();
    let n_user = cols.len();
    let bound_of = |j: usize| bounds.map_or((cols[j].lb, cols[j].ub), |b| b[j]);

    // column substitution
    let mut maps = Vec::with_capacity(n_user);
    let mut upper = Vec::new();
    let mut cost = Vec::new();
    for (j, c) in cols.iter().enumerate() {
        let (lb, ub) = bound_of(j);
        if lb > ub + 1e-9 {
            return SolveResult::without_point(Status::Infeasible);
        }
        let map = if lb.is_finite() && (ub - lb).abs() <= 1e-12 {
            ColMap::Fixed(lb)
        } else if lb.is_finite() {
            upper.push(ub - lb);
            cost.push(c.obj);
            ColMap::Shift { col: upper.len() - 1, sign: 1.0, shift: lb }
        } else if ub.is_finite() {
            upper.push(f64::INFINITY);
            cost.push(-c.obj);
            ColMap::Shift { col: upper.len() - 1, sign: -1.0, shift: ub }
        } else {
            upper.push(f64::INFINITY);
            cost.push(c.obj);
            upper.push(f64::INFINITY);
            cost.push(-c.obj);
            ColMap::Split { pos: upper.len() - 2, neg: upper.len() - 1 }
        };
        maps.push(map);
    }
    let n_struct = upper.len();

    // rows in structural space
    struct StdRow {
        user: usize,
        coefs: Vec<(usize, f64)>,
        slack: f64,
        rhs: f64,
    }
    let mut std_rows: Vec<StdRow> = Vec::new();
    for (i, row) in model.rows()[..n_rows].iter().enumerate() {
        let mut rhs = row.rhs;
        let mut coefs = Vec::with_capacity(row.terms.len());
        for &(v, a) in &row.terms {
            if a == 0.0 {
                continue;
            }
            match maps[v.0] {
                ColMap::Fixed(val) => rhs -= a * val,
                ColMap::Shift { col, sign, shift } => {
                    rhs -= a * shift;
                    coefs.push((col, a * sign));
                }
                ColMap::Split { pos, neg } => {
                    coefs.push((pos, a));
                    coefs.push((neg, -a));
                }
            }
        }
        if coefs.is_empty() {
            let tol = 1e-9 * (1.0 + row.rhs.abs());
            let ok = match row.sense {
                Sense::Le => 0.0 <= rhs + tol,
                Sense::Ge => 0.0 >= rhs - tol,
                Sense::Eq => rhs.abs() <= tol,
            };
            if !ok {
                return SolveResult::without_point(Status::Infeasible);
            }
            continue;
        }
        let slack = match row.sense {
            Sense::Le => 1.0,
            Sense::Ge => -1.0,
            Sense::Eq => 0.0,
        };
        std_rows.push(StdRow { user: i, coefs, slack, rhs });
    }

    let m = std_rows.len();
    let slack_rows: Vec<usize> = (0..m).filter(|&r| std_rows[r].slack != 0.0).collect();
    let n_slack = slack_rows.len();
    let art0 = n_struct + n_slack;
    let ncol = art0 + m;

    let mut tab = Tableau {
        m,
        ncol,
        t: vec![0.0; m * ncol],
        xb: vec![0.0; m],
        basis: vec![0; m],
        state: vec![State::Lower; ncol],
        upper: Vec::with_capacity(ncol),
        barred: vec![false; ncol],
        d: vec![0.0; ncol],
        a0: Vec::new(),
        b0: Vec::new(),
    };
    tab.upper.extend_from_slice(&upper);
    tab.upper.extend(std::iter::repeat(f64::INFINITY).take(n_slack));
    tab.upper.extend(std::iter::repeat(0.0).take(m));

    let mut flips = vec![1.0; m];
    let mut slack_col = vec![usize::MAX; m];
    for (k, &r) in slack_rows.iter().enumerate() {
        slack_col[r] = n_struct + k;
    }
    let mut phase_one_needed = false;
    for (r, row) in std_rows.iter().enumerate() {
        let flip = if row.rhs < 0.0 { -1.0 } else { 1.0 };
        flips[r] = flip;
        let base = r * ncol;
        for &(c, a) in &row.coefs {
            tab.t[base + c] += flip * a;
        }
        let art = art0 + r;
        tab.t[base + art] = 1.0;
        tab.xb[r] = flip * row.rhs;
        let s = slack_col[r];
        if s != usize::MAX {
            let sc = flip * row.slack;
            tab.t[base + s] = sc;
            if sc > 0.0 {
                tab.basis[r] = s;
                tab.state[s] = State::Basic;
                tab.barred[art] = true;
                continue;
            }
        }
        tab.basis[r] = art;
        tab.state[art] = State::Basic;
        tab.upper[art] = f64::INFINITY;
        phase_one_needed = true;
    }
    for j in art0..ncol {
        if tab.state[j] != State::Basic {
            tab.barred[j] = true;
        }
    }
    tab.a0 = (0..ncol)
        .map(|j| (0..m).filter_map(|r| Some((r, tab.t[r * ncol + j])).filter(|&(_, a)| a != 0.0)).collect())
        .collect();
    tab.b0 = tab.xb.clone();

    let max_iter = 50_000 + 50 * (m + ncol);

    if phase_one_needed {
        let mut c1 = vec![0.0; ncol];
        for c in c1.iter_mut().skip(art0) {
            *c = 1.0;
        }
        tab.reduced_costs(&c1);
        match tab.run(&c1, max_iter, true) {
            Outcome::Optimal => {}
            Outcome::Unbounded => unreachable!("phase one objective is bounded below"),
            Outcome::IterationLimit | Outcome::Singular => return SolveResult::without_point(Status::IterationLimit),
        }
        let scale = 1.0 + std_rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        let infeas: f64 = (0..m)
            .filter(|&r| tab.basis[r] >= art0)
            .map(|r| tab.xb[r].max(0.0))
            .sum();
        if infeas > 1e-8 * scale {
            return SolveResult::without_point(Status::Infeasible);
        }
        for j in art0..ncol {
            tab.barred[j] = true;
            tab.upper[j] = 0.0;
        }
    }

    let mut c2 = vec![0.0; ncol];
    c2[..n_struct].copy_from_slice(&cost);
    tab.reduced_costs(&c2);
    match tab.run(&c2, max_iter, false) {
        Outcome::Optimal => {}
        Outcome::Unbounded => return SolveResult::without_point(Status::Unbounded),
        Outcome::IterationLimit | Outcome::Singular => return SolveResult::without_point(Status::IterationLimit),
    }

    // primal recovery
    let mut xs = vec![0.0; ncol];
    for j in 0..ncol {
        xs[j] = match tab.state[j] {
            State::Lower => 0.0,
            State::Upper => tab.upper[j],
            State::Basic => 0.0,
        };
    }
    for r in 0..m {
        xs[tab.basis[r]] = tab.xb[r];
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|mp| match *mp {
            ColMap::Fixed(v) => v,
            ColMap::Shift { col, sign, shift } => shift + sign * xs[col],
            ColMap::Split { pos, neg } => xs[pos] - xs[neg],
        })
        .collect();

    // duals: y = c_B^T B^-1 in flipped row space
    let mut duals = vec![0.0; n_rows];
    for (r, row) in std_rows.iter().enumerate() {
        let col = art0 + r;
        let y: f64 = (0..m).map(|k| c2[tab.basis[k]] * tab.at(k, col)).sum();
        duals[row.user] = flips[r] * y;
    }

    let objective = model.obj_offset() + cols.iter().zip(&x).map(|(c, xi)| c.obj * xi).sum::<f64>();
    let dual_objective = dual_objective(model, bounds, &x, &duals, n_rows);

    SolveResult {
        status: Status::Optimal,
        x,
        duals: Some(duals),
        objective,
        dual_objective: Some(dual_objective),
        mip_gap: None,
        nodes: 0,
    }
}

fn dual_objective(model: &Model, bounds: Option<&[(f64, f64)]>, x: &[f64], duals: &[f64], n_rows: usize) -> f64 {
    let cols = model.columns();
    let mut reduced: Vec<f64> = cols.iter().map(|c| c.obj).collect();
    let mut total = model.obj_offset();
    for (row, &y) in model.rows()[..n_rows].iter().zip(duals) {
        if y == 0.0 {
            continue;
        }
        total += row.rhs * y;
        for &(v, a) in &row.terms {
            reduced[v.0] -= a * y;
        }
    }
    for (j, &r) in reduced.iter().enumerate() {
        let (lb, ub) = bounds.map_or((cols[j].lb, cols[j].ub), |b| b[j]);
        let at = if lb == ub {
            lb
        } else if r > 0.0 {
            if lb.is_finite() {
                lb
            } else {
                x[j]
            }
        } else if r < 0.0 {
            if ub.is_finite() {
                ub
            } else {
                x[j]
            }
        } else {
            0.0
        };
        total += r * at;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{Model, Sense};

    #[test]
    fn bounded_columns_flip_without_pivot() {
        // max x + y with x,y in [0,1] and no rows
        let mut m = Model::new();
        let x = m.add_var(0.0, 1.0, -1.0);
        let y = m.add_var(0.0, 1.0, -1.0);
        let res = solve(&m, None);
        assert_eq!(res.status, Status::Optimal);
        assert_eq!(res.value(x), 1.0);
        assert_eq!(res.value(y), 1.0);
        assert!((res.objective + 2.0).abs() < 1e-12);
    }

    #[test]
    fn negative_rhs_rows_flip_dual_sign() {
        // min x s.t. -x <= -2  (x >= 2): d obj / d rhs = -1
        let mut m = Model::new();
        let x = m.add_var(0.0, f64::INFINITY, 1.0);
        let r = m.add_row(vec![(x, -1.0)], Sense::Le, -2.0);
        let res = solve(&m, None);
        assert!((res.value(x) - 2.0).abs() < 1e-12);
        assert!((res.dual(r).unwrap() + 1.0).abs() < 1e-12);
        assert!(res.duality_gap().unwrap() < 1e-12);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut m = Model::new();
        let x = m.add_var(0.0, 10.0, 1.0);
        let y = m.add_var(0.0, 10.0, 2.0);
        m.add_row(vec![(x, 1.0), (y, 1.0)], Sense::Eq, 4.0);
        m.add_row(vec![(x, 2.0), (y, 2.0)], Sense::Eq, 8.0);
        let res = solve(&m, None);
        assert_eq!(res.status, Status::Optimal);
        assert!((res.objective - 4.0).abs() < 1e-9);
        assert!(res.duality_gap().unwrap() < 1e-9);
    }

    #[test]
    fn upper_bounded_free_side_columns() {
        // x <= 5 with no lower bound, maximise x
        let mut m = Model::new();
        let x = m.add_var(f64::NEG_INFINITY, 5.0, -1.0);
        m.add_row(vec![(x, 1.0)], Sense::Ge, -3.0);
        let res = solve(&m, None);
        assert!((res.value(x) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn badly_scaled_rows_stay_feasible_after_many_pivots() {
        use rand::{Rng, SeedableRng};
        // coefficients over six orders of magnitude force long pivot sequences
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut m = Model::new();
        let xs: Vec<_> = (0..150).map(|_| m.add_var(0.0, 50.0, rng.random_range(-5.0..5.0))).collect();
        for _ in 0..90 {
            let mut terms = Vec::new();
            for &x in &xs {
                if rng.random_bool(0.2) {
                    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    terms.push((x, sign * 10f64.powf(rng.random_range(-3.0..3.0))));
                }
            }
            let sense = if rng.random_bool(0.2) { Sense::Eq } else { Sense::Le };
            m.add_row(terms, sense, rng.random_range(0.0..100.0));
        }
        let res = solve(&m, None);
        assert_eq!(res.status, Status::Optimal);
        assert!(m.max_violation(&res.x) < 1e-6, "violation {}", m.max_violation(&res.x));
        assert!(res.duality_gap().unwrap() < 1e-7);
    }
}
