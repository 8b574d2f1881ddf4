//! Linear and mixed-integer programming backend.
//!
//! Models are built column by column into a [`Model`] and handed to a
//! [`Backend`]. The built-in [`SimplexBackend`] is a dense bounded-variable
//! two-phase simplex with a best-bound branch-and-bound on top. It reports
//! row duals for LPs and supports lazy constraint callbacks for MILPs.

mod branch;
mod simplex;

use std::fmt;

pub use branch::{LazyCallback, MipOptions};

/// Column handle inside a [`Model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Row handle inside a [`Model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(pub(crate) usize);

impl RowId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub lb: f64,
    pub ub: f64,
    pub obj: f64,
    pub kind: VarKind,
}

/// A linear row `sum(coef * var) <sense> rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub terms: Vec<(Var, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(terms: Vec<(Var, f64)>, sense: Sense, rhs: f64) -> Self {
        Self { terms, sense, rhs }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * x[v.0]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.sense {
            Sense::Le => (act - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - act).max(0.0),
            Sense::Eq => (act - self.rhs).abs(),
        }
    }
}

/// A minimisation model with bounded columns and linear rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Model {
    cols: Vec<Column>,
    rows: Vec<Constraint>,
    obj_offset: f64,
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, lb: f64, ub: f64, obj: f64) -> Var {
        self.cols.push(Column { lb, ub, obj, kind: VarKind::Continuous });
        Var(self.cols.len() - 1)
    }

    pub fn add_binary(&mut self, obj: f64) -> Var {
        self.cols.push(Column { lb: 0.0, ub: 1.0, obj, kind: VarKind::Binary });
        Var(self.cols.len() - 1)
    }

    pub fn add_integer(&mut self, lb: f64, ub: f64, obj: f64) -> Var {
        self.cols.push(Column { lb, ub, obj, kind: VarKind::Integer });
        Var(self.cols.len() - 1)
    }

    pub fn add_row(&mut self, terms: Vec<(Var, f64)>, sense: Sense, rhs: f64) -> RowId {
        self.rows.push(Constraint { terms, sense, rhs });
        RowId(self.rows.len() - 1)
    }

    pub fn add_constraint(&mut self, row: Constraint) -> RowId {
        self.rows.push(row);
        RowId(self.rows.len() - 1)
    }

    pub fn set_bounds(&mut self, v: Var, lb: f64, ub: f64) {
        let c = &mut self.cols[v.0];
        c.lb = lb;
        c.ub = ub;
    }

    /// Pins a column to a single value by tightening both bounds.
    pub fn fix(&mut self, v: Var, value: f64) {
        self.set_bounds(v, value, value);
    }

    pub fn set_obj(&mut self, v: Var, c: f64) {
        self.cols[v.0].obj = c;
    }

    pub fn add_obj(&mut self, v: Var, c: f64) {
        self.cols[v.0].obj += c;
    }

    pub fn add_obj_offset(&mut self, c: f64) {
        self.obj_offset += c;
    }

    pub fn obj_offset(&self) -> f64 {
        self.obj_offset
    }

    pub fn column(&self, v: Var) -> &Column {
        &self.cols[v.0]
    }

    pub fn columns(&self) -> &[Column] {
        &self.cols
    }

    pub fn row(&self, r: RowId) -> &Constraint {
        &self.rows[r.0]
    }

    pub fn rows(&self) -> &[Constraint] {
        &self.rows
    }

    pub fn num_vars(&self) -> usize {
        self.cols.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_integer(&self, v: Var) -> bool {
        self.cols[v.0].kind != VarKind::Continuous
    }

    /// True when some integer column still has a nontrivial domain.
    pub fn has_free_integers(&self) -> bool {
        self.cols.iter().any(|c| c.kind != VarKind::Continuous && c.lb != c.ub)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.obj_offset + self.cols.iter().zip(x).map(|(c, xi)| c.obj * xi).sum::<f64>()
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let bounds = self
            .cols
            .iter()
            .zip(x)
            .map(|(c, &xi)| (c.lb - xi).max(xi - c.ub).max(0.0));
        let rows = self.rows.iter().map(|r| r.violation(x));
        bounds.chain(rows).fold(0.0, f64::max)
    }

    /// Checks structural well-formedness: referenced columns exist, bounds are
    /// ordered and binaries live in {0,1}.
    pub fn validate(&self) -> Result<(), SolverError> {
        for (j, c) in self.cols.iter().enumerate() {
            if c.lb.is_nan() || c.ub.is_nan() || !c.obj.is_finite() {
                return Err(SolverError::InvalidModel(format!("column {j} has non-finite data")));
            }
            if c.kind == VarKind::Binary && (c.lb < 0.0 || c.ub > 1.0) {
                return Err(SolverError::InvalidModel(format!("binary column {j} bounds outside [0,1]")));
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            if !r.rhs.is_finite() {
                return Err(SolverError::InvalidModel(format!("row {i} has non-finite rhs")));
            }
            for &(v, a) in &r.terms {
                if v.0 >= self.cols.len() {
                    return Err(SolverError::InvalidModel(format!("row {i} references missing column {}", v.0)));
                }
                if !a.is_finite() {
                    return Err(SolverError::InvalidModel(format!("row {i} has non-finite coefficient")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    TimeLimit,
    NodeLimit,
    IterationLimit,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::TimeLimit => "time_limit",
            Status::NodeLimit => "node_limit",
            Status::IterationLimit => "iteration_limit",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: Status,
    /// Primal values, one per model column. Empty when no point is available.
    pub x: Vec<f64>,
    /// Row duals (d objective / d rhs). Present for LP solves only.
    pub duals: Option<Vec<f64>>,
    pub objective: f64,
    /// Objective of the dual solution; LP solves only.
    pub dual_objective: Option<f64>,
    pub mip_gap: Option<f64>,
    pub nodes: usize,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn has_solution(&self) -> bool {
        !self.x.is_empty()
    }

    pub fn value(&self, v: Var) -> f64 {
        self.x[v.0]
    }

    pub fn dual(&self, r: RowId) -> Option<f64> {
        self.duals.as_ref().map(|d| d[r.0])
    }

    /// `|primal - dual| / (1 + |primal|)` for LP solves.
    pub fn duality_gap(&self) -> Option<f64> {
        self.dual_objective
            .map(|d| (self.objective - d).abs() / (1.0 + self.objective.abs()))
    }

    pub(crate) fn without_point(status: Status) -> Self {
        Self {
            status,
            x: Vec::new(),
            duals: None,
            objective: f64::NAN,
            dual_objective: None,
            mip_gap: None,
            nodes: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("LP solve requested on a model with unfixed integer columns")]
    FreeIntegers,
    #[error("invalid solver option: {0}")]
    InvalidOption(String),
    #[error("unknown solver backend `{0}`")]
    UnknownBackend(String),
}

/// Numerical tolerances shared by the LP and MILP paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Primal feasibility tolerance reported to callers.
    pub feas_tol: f64,
    /// Accepted strong-duality residual (relative).
    pub dual_tol: f64,
    pub integrality_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { feas_tol: 1e-6, dual_tol: 1e-6, integrality_tol: 1e-6 }
    }
}

/// An LP/MILP engine. Implementations must be deterministic.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    /// Whether [`Backend::solve_mip`] honours lazy callbacks.
    fn supports_lazy(&self) -> bool;

    fn solve_lp(&self, model: &Model) -> Result<SolveResult, SolverError>;

    fn solve_mip(
        &self,
        model: &Model,
        opts: &MipOptions,
        lazy: Option<&mut dyn LazyCallback>,
    ) -> Result<SolveResult, SolverError>;
}

/// Dense two-phase simplex plus branch-and-bound.
#[derive(Debug, Clone)]
pub struct SimplexBackend {
    pub tolerances: Tolerances,
    lazy: bool,
}

impl Default for SimplexBackend {
    fn default() -> Self {
        Self { tolerances: Tolerances::default(), lazy: true }
    }
}

impl SimplexBackend {
    /// Same engine, but advertising no lazy-callback support. Drivers then use
    /// their re-solve loop instead.
    pub fn without_lazy() -> Self {
        Self { lazy: false, ..Self::default() }
    }
}

impl Backend for SimplexBackend {
    fn name(&self) -> &str {
        if self.lazy {
            "simplex"
        } else {
            "simplex-nolazy"
        }
    }

    fn supports_lazy(&self) -> bool {
        self.lazy
    }

    fn solve_lp(&self, model: &Model) -> Result<SolveResult, SolverError> {
        model.validate()?;
        if model.has_free_integers() {
            return Err(SolverError::FreeIntegers);
        }
        let res = simplex::solve(model, None);
        if let Some(gap) = res.duality_gap() {
            if res.is_optimal() && gap > self.tolerances.dual_tol {
                log::warn!("LP strong duality residual {gap:.3e} above tolerance");
            }
        }
        Ok(res)
    }

    fn solve_mip(
        &self,
        model: &Model,
        opts: &MipOptions,
        lazy: Option<&mut dyn LazyCallback>,
    ) -> Result<SolveResult, SolverError> {
        model.validate()?;
        if !(opts.gap > 0.0) {
            return Err(SolverError::InvalidOption(format!("MIP gap must be positive, got {}", opts.gap)));
        }
        if lazy.is_some() && !self.lazy {
            return Err(SolverError::InvalidOption(format!("backend `{}` has no lazy callbacks", self.name())));
        }
        Ok(branch::branch_and_bound(model, opts, &self.tolerances, lazy))
    }
}

/// Resolves a backend from its configuration name (`solver.backend`).
pub fn backend_by_name(name: &str) -> Result<Box<dyn Backend>, SolverError> {
    match name {
        "simplex" | "default" => Ok(Box::new(SimplexBackend::default())),
        "simplex-nolazy" => Ok(Box::new(SimplexBackend::without_lazy())),
        other => Err(SolverError::UnknownBackend(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bound_lp_reports_unit_dual() {
        let mut m = Model::new();
        let x = m.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let r = m.add_row(vec![(x, 1.0)], Sense::Ge, 3.0);
        let res = SimplexBackend::default().solve_lp(&m).unwrap();
        assert_eq!(res.status, Status::Optimal);
        assert!((res.value(x) - 3.0).abs() < 1e-9);
        assert!((res.dual(r).unwrap() - 1.0).abs() < 1e-9);
        assert!(res.duality_gap().unwrap() < 1e-9);
    }

    #[test]
    fn empty_region_is_infeasible() {
        let mut m = Model::new();
        let x = m.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0);
        m.add_row(vec![(x, 1.0)], Sense::Ge, 1.0);
        m.add_row(vec![(x, 1.0)], Sense::Le, 0.0);
        let res = SimplexBackend::default().solve_lp(&m).unwrap();
        assert_eq!(res.status, Status::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let mut m = Model::new();
        let x = m.add_var(0.0, f64::INFINITY, -1.0);
        let y = m.add_var(0.0, f64::INFINITY, 0.0);
        m.add_row(vec![(x, 1.0), (y, -1.0)], Sense::Le, 2.0);
        let res = SimplexBackend::default().solve_lp(&m).unwrap();
        assert_eq!(res.status, Status::Unbounded);
    }

    #[test]
    fn lp_rejects_free_integers() {
        let mut m = Model::new();
        m.add_binary(1.0);
        let err = SimplexBackend::default().solve_lp(&m).unwrap_err();
        assert!(matches!(err, SolverError::FreeIntegers));
    }

    #[test]
    fn fixed_integers_allow_lp_duals() {
        let mut m = Model::new();
        let y = m.add_binary(5.0);
        let p = m.add_var(0.0, f64::INFINITY, 2.0);
        m.add_row(vec![(p, 1.0), (y, -10.0)], Sense::Le, 0.0);
        let bal = m.add_row(vec![(p, 1.0)], Sense::Eq, 4.0);
        m.fix(y, 1.0);
        let res = SimplexBackend::default().solve_lp(&m).unwrap();
        assert_eq!(res.status, Status::Optimal);
        assert!((res.objective - 13.0).abs() < 1e-9);
        assert!((res.dual(bal).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn binary_bounds_validated() {
        let mut m = Model::new();
        let y = m.add_binary(0.0);
        m.set_bounds(y, 0.0, 2.0);
        assert!(m.validate().is_err());
    }

    #[test]
    fn unknown_backend_name() {
        assert!(backend_by_name("gurobi").is_err());
        assert_eq!(backend_by_name("simplex").unwrap().name(), "simplex");
        assert!(!backend_by_name("simplex-nolazy").unwrap().supports_lazy());
    }
}
