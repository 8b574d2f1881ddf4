//! Data-driven uncertainty set built from the leading principal modes of
//! load and wind history.
//!
//! A scenario is `baseline + Σ_k mode_k · α_k` per RT period, with every
//! stressor `|α_k| ≤ R` and `|Σ_k α_k| ≤ Σ`.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dcopf::Scenario;
use crate::error::{Error, Result};
use crate::system::{HistoryKind, HistoryMatrix, PowerSystem};

const RANK_TOL: f64 = 1e-10;
const NEG_TOL: f64 = 1e-9;

/// Eigen-decomposition of one sample covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalModes {
    /// Sample covariance, denominator `n - 1`.
    pub covariance: Vec<Vec<f64>>,
    /// All eigenvalues, descending.
    pub eigvals: Vec<f64>,
    /// All unit eigenvectors in eigenvalue order; largest-magnitude entry positive.
    pub eigvecs: Vec<Vec<f64>>,
}

impl PrincipalModes {
    pub fn from_history(hist: &HistoryMatrix) -> Self {
        Self::from_rows(hist.rows(), hist.n_cols())
    }

    pub fn from_rows(rows: &[Vec<f64>], dim: usize) -> Self {
        let n = rows.len();
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x / n as f64;
            }
        }
        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        for r in rows {
            for i in 0..dim {
                let di = r[i] - mean[i];
                for j in i..dim {
                    cov[(i, j)] += di * (r[j] - mean[j]);
                }
            }
        }
        let denom = (n.max(2) - 1) as f64;
        for i in 0..dim {
            for j in i..dim {
                cov[(i, j)] /= denom;
                cov[(j, i)] = cov[(i, j)];
            }
        }
        let covariance = (0..dim).map(|i| (0..dim).map(|j| cov[(i, j)]).collect()).collect();
        if dim == 0 {
            return Self { covariance, eigvals: vec![], eigvecs: vec![] };
        }
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let eigvals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let eigvecs = order
            .iter()
            .map(|&k| {
                let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
                orient(&mut v);
                v
            })
            .collect();
        Self { covariance, eigvals, eigvecs }
    }

    pub fn dim(&self) -> usize {
        self.eigvals.len()
    }

    /// Number of eigenvalues above a relative tolerance of the trace.
    pub fn numerical_rank(&self) -> usize {
        let scale = self.eigvals.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        self.eigvals.iter().filter(|&&v| v > RANK_TOL * scale).count()
    }

    /// Share of the eigenvalue total carried by the leading `k` modes.
    pub fn explained_ratio(&self, k: usize) -> f64 {
        let total: f64 = self.eigvals.iter().map(|v| v.max(0.0)).sum();
        if total <= 0.0 {
            return 1.0;
        }
        self.eigvals.iter().take(k).map(|v| v.max(0.0)).sum::<f64>() / total
    }

    /// `Σ_k λ_k q_k q_kᵀ` over all pairs.
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut m = vec![vec![0.0; d]; d];
        for (l, q) in self.eigvals.iter().zip(&self.eigvecs) {
            for i in 0..d {
                for j in 0..d {
                    m[i][j] += l * q[i] * q[j];
                }
            }
        }
        m
    }
}

/// Flips `v` so its largest-magnitude entry is positive, ties to the lowest index.
fn orient(v: &mut [f64]) {
    let max = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if let Some(x) = v.iter().find(|x| x.abs() >= max - 1e-12 * max.max(1.0)) {
        if *x < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// How the bound on the stressor sum is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaRule {
    /// `Σ = factor · R` per kind.
    Multiple(f64),
    /// Explicit bounds.
    Fixed { load: f64, wind: f64 },
}

impl Default for SigmaRule {
    fn default() -> Self {
        SigmaRule::Multiple(3.0)
    }
}

/// One uncertainty kind: modes, stressor bounds and per-period baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct KindSet {
    pub pca: PrincipalModes,
    /// Leading modes used, `k` vectors of entity length.
    pub modes: Vec<Vec<f64>>,
    pub r: f64,
    pub sigma: f64,
    /// `[entity][period]`
    pub baseline: Vec<Vec<f64>>,
}

impl KindSet {
    pub fn k(&self) -> usize {
        self.modes.len()
    }

    fn realize_period(&self, alpha: &[Vec<f64>], t: usize) -> Vec<f64> {
        let col: Vec<f64> = alpha.iter().map(|row| row[t]).collect();
        self.realize_column(&col, t)
    }

    /// Entity values of period `t` for the stressor column `a`.
    fn realize_column(&self, a: &[f64], t: usize) -> Vec<f64> {
        (0..self.baseline.len())
            .map(|i| self.baseline[i][t] + self.modes.iter().zip(a).map(|(q, x)| q[i] * x).sum::<f64>())
            .collect()
    }
}

/// The uncertainty set. One covariance per kind is shared by all RT periods.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySet {
    pub load: KindSet,
    pub wind: KindSet,
    pub n_periods: usize,
}

/// Stressor coefficients `[mode][period]` per kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressorVector {
    pub alpha_d: Vec<Vec<f64>>,
    pub alpha_w: Vec<Vec<f64>>,
}

impl StressorVector {
    pub fn zeros(k_load: usize, k_wind: usize, n_periods: usize) -> Self {
        Self { alpha_d: vec![vec![0.0; n_periods]; k_load], alpha_w: vec![vec![0.0; n_periods]; k_wind] }
    }

    /// Same per-mode coefficients in every period.
    pub fn constant(load: &[f64], wind: &[f64], n_periods: usize) -> Self {
        Self {
            alpha_d: load.iter().map(|&a| vec![a; n_periods]).collect(),
            alpha_w: wind.iter().map(|&a| vec![a; n_periods]).collect(),
        }
    }

    pub fn n_periods(&self) -> usize {
        self.alpha_d.first().or(self.alpha_w.first()).map_or(0, Vec::len)
    }

    /// Stressors of one kind and period as a `k`-vector.
    pub fn column(&self, load: bool, t: usize) -> Vec<f64> {
        let m = if load { &self.alpha_d } else { &self.alpha_w };
        m.iter().map(|row| row[t]).collect()
    }

    pub fn set_column(&mut self, load: bool, t: usize, values: &[f64]) {
        let m = if load { &mut self.alpha_d } else { &mut self.alpha_w };
        for (row, &v) in m.iter_mut().zip(values) {
            row[t] = v;
        }
    }

    /// Re-indexes from `old_tp` to `new_tp` periods per hour; each new period
    /// copies the old period covering the same fraction of the hour.
    pub fn regrid(&self, old_tp: usize, new_tp: usize) -> Self {
        let map = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            m.iter()
                .map(|row| {
                    let hours = row.len() / old_tp;
                    (0..hours * new_tp).map(|t| row[(t / new_tp) * old_tp + (t % new_tp) * old_tp / new_tp]).collect()
                })
                .collect()
        };
        Self { alpha_d: map(&self.alpha_d), alpha_w: map(&self.alpha_w) }
    }

    /// Checks `|α| ≤ R` and `|Σ_k α| ≤ Σ` per kind and period.
    pub fn within(&self, uset: &UncertaintySet, tol: f64) -> bool {
        [(&self.alpha_d, &uset.load), (&self.alpha_w, &uset.wind)].iter().all(|(m, ks)| {
            (0..self.n_periods()).all(|t| {
                let sum: f64 = m.iter().map(|r| r[t]).sum();
                m.iter().all(|r| r[t].abs() <= ks.r + tol) && sum.abs() <= ks.sigma + tol
            })
        })
    }
}

/// Builds the set from histories; `k` is clamped to each kind's dimension.
pub fn build_uncertainty_set(
    load_hist: &HistoryMatrix,
    wind_hist: Option<&HistoryMatrix>,
    sys: &PowerSystem,
    k: usize,
    r_load: f64,
    r_wind: f64,
    sigma_rule: SigmaRule,
) -> Result<UncertaintySet> {
    if k == 0 {
        return Err(Error::InvalidOption("mode count K must be at least 1".into()));
    }
    if !(r_load >= 0.0 && r_wind >= 0.0) {
        return Err(Error::InvalidOption("stressor bounds must be nonnegative".into()));
    }
    let (sigma_load, sigma_wind) = match sigma_rule {
        SigmaRule::Multiple(f) if f >= 0.0 => (f * r_load, f * r_wind),
        SigmaRule::Fixed { load, wind } if load >= 0.0 && wind >= 0.0 => (load, wind),
        _ => return Err(Error::InvalidOption("sigma bounds must be nonnegative".into())),
    };
    if load_hist.n_cols() != sys.n_buses() {
        return Err(Error::Dimension(format!("load history has {} columns, system has {} buses", load_hist.n_cols(), sys.n_buses())));
    }
    let wind_pca = match wind_hist {
        Some(h) if h.n_cols() != sys.n_wind() => {
            return Err(Error::Dimension(format!("wind history has {} columns, system has {} farms", h.n_cols(), sys.n_wind())))
        }
        Some(h) => PrincipalModes::from_history(h),
        None if sys.n_wind() == 0 => PrincipalModes::from_rows(&[], 0),
        None => return Err(Error::InvalidOption("a wind history is required when the case has wind farms".into())),
    };
    let make = |pca: PrincipalModes, kind: HistoryKind, r: f64, sigma: f64, baseline: Vec<Vec<f64>>| {
        let rank = pca.numerical_rank();
        let kk = k.min(rank);
        if kk < k && pca.dim() > 0 {
            // modes without variance would move scenarios along arbitrary directions
            log::warn!(
                "{} covariance has numerical rank {rank} (dimension {}); using {kk} modes instead of {k}",
                kind.name(),
                pca.dim()
            );
        }
        let modes = pca.eigvecs.iter().take(kk).cloned().collect();
        KindSet { pca, modes, r, sigma, baseline }
    };
    Ok(UncertaintySet {
        load: make(PrincipalModes::from_history(load_hist), HistoryKind::Load, r_load, sigma_load, sys.rt_baseline_loads()),
        wind: make(wind_pca, HistoryKind::Wind, r_wind, sigma_wind, sys.rt_baseline_winds()),
        n_periods: sys.time().n_rt_periods(),
    })
}

impl UncertaintySet {
    pub fn zero_stressor(&self) -> StressorVector {
        StressorVector::zeros(self.load.k(), self.wind.k(), self.n_periods)
    }

    /// Same modes and bounds over the baselines of `sys` (e.g. a finer RT grid).
    pub fn rebase(&self, sys: &PowerSystem) -> Result<Self> {
        if sys.n_buses() != self.load.baseline.len() || sys.n_wind() != self.wind.baseline.len() {
            return Err(Error::Dimension("rebase target has a different network".into()));
        }
        let mut out = self.clone();
        out.load.baseline = sys.rt_baseline_loads();
        out.wind.baseline = sys.rt_baseline_winds();
        out.n_periods = sys.time().n_rt_periods();
        Ok(out)
    }

    fn check_alpha(&self, alpha: &StressorVector) -> Result<()> {
        let ok = |m: &Vec<Vec<f64>>, k: usize| m.len() == k && m.iter().all(|r| r.len() == self.n_periods);
        if ok(&alpha.alpha_d, self.load.k()) && ok(&alpha.alpha_w, self.wind.k()) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "stressor must be {}+{} modes over {} periods",
                self.load.k(),
                self.wind.k(),
                self.n_periods
            )))
        }
    }

    fn raw(&self, alpha: &StressorVector) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let build = |ks: &KindSet, a: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            let per: Vec<Vec<f64>> = (0..self.n_periods).map(|t| ks.realize_period(a, t)).collect();
            (0..ks.baseline.len()).map(|i| per.iter().map(|col| col[i]).collect()).collect()
        };
        (build(&self.load, &alpha.alpha_d), build(&self.wind, &alpha.alpha_w))
    }

    /// `baseline + Σ mode·α`; fails if any entry is negative.
    pub fn realize(&self, alpha: &StressorVector, sys: &PowerSystem) -> Result<Scenario> {
        self.check_alpha(alpha)?;
        let (mut d, mut w) = self.raw(alpha);
        for (kind, m, names) in [
            ("load", &mut d, sys.buses().iter().map(|b| b.id.clone()).collect::<Vec<_>>()),
            ("wind", &mut w, sys.wind().iter().map(|w| w.id.clone()).collect()),
        ] {
            for (i, row) in m.iter_mut().enumerate() {
                for (t, v) in row.iter_mut().enumerate() {
                    if *v < -NEG_TOL {
                        return Err(Error::NegativeRealization { kind, name: names[i].clone(), period: t, value: *v });
                    }
                    *v = v.max(0.0);
                }
            }
        }
        Ok(Scenario { d_rt: d, p_cap_rt: w })
    }

    /// `baseline + Σ mode·α` with entries truncated at zero.
    pub fn realize_truncated(&self, alpha: &StressorVector) -> Result<Scenario> {
        self.check_alpha(alpha)?;
        let (mut d, mut w) = self.raw(alpha);
        d.iter_mut().chain(w.iter_mut()).flatten().for_each(|v| *v = v.max(0.0));
        Ok(Scenario { d_rt: d, p_cap_rt: w })
    }

    /// Writes `period,kind,mode,<entity ids...>,eigenvalue`.
    pub fn write_modes_csv(&self, sys: &PowerSystem, path: &Path) -> Result<()> {
        let mut w = crate::export::writer(path)?;
        let err = |e| crate::export::csv_err(path, e);
        let width = sys.n_buses().max(sys.n_wind());
        let mut header = vec!["period".to_string(), "kind".into(), "mode".into()];
        header.extend((0..width).map(|i| format!("c{i}")));
        header.push("eigenvalue".into());
        w.write_record(&header).map_err(err)?;
        for t in 0..self.n_periods {
            for (kind, ks) in [("load", &self.load), ("wind", &self.wind)] {
                for (k, q) in ks.modes.iter().enumerate() {
                    let mut rec = vec![t.to_string(), kind.to_string(), k.to_string()];
                    rec.extend((0..width).map(|i| q.get(i).map_or(String::new(), |x| x.to_string())));
                    rec.push(ks.pca.eigvals[k].to_string());
                    w.write_record(&rec).map_err(err)?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Stressor pattern of one kind: `true` means `-R` for that mode.
pub fn sign_patterns(k: usize, three_mode_load: bool) -> Vec<Vec<bool>> {
    if three_mode_load && k == 3 {
        return vec![vec![false, true, false], vec![false, false, true]];
    }
    (0..1usize << k).map(|bits| (0..k).map(|j| bits >> j & 1 == 1).collect()).collect()
}

/// One adversary grid: the pattern indices and the realized scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub load_pattern: usize,
    pub wind_pattern: usize,
    pub alpha: StressorVector,
    pub scenario: Scenario,
    /// Periods where no stressor adjustment could avoid negative entries and
    /// the realization was truncated at zero instead.
    pub truncated: bool,
}

fn pattern_values(signs: &[bool], r: f64) -> Vec<f64> {
    signs.iter().map(|&neg| if neg { -r } else { r }).collect()
}

/// Moves the last stressor to the closest value in `[-R, R]` keeping all
/// entries of one period nonnegative. Returns false when no such value exists.
fn adjust_last(ks: &KindSet, alpha: &mut [f64], t: usize) -> bool {
    let k = alpha.len();
    if k == 0 {
        return false;
    }
    let last = k - 1;
    let (mut lo, mut hi) = (-ks.r, ks.r);
    for i in 0..ks.baseline.len() {
        let rest = ks.baseline[i][t] + (0..last).map(|j| ks.modes[j][i] * alpha[j]).sum::<f64>();
        let q = ks.modes[last][i];
        // rest + q a >= 0
        if q > 0.0 {
            lo = lo.max(-rest / q);
        } else if q < 0.0 {
            hi = hi.min(-rest / q);
        } else if rest < -NEG_TOL {
            return false;
        }
    }
    if lo > hi + NEG_TOL {
        return false;
    }
    alpha[last] = alpha[last].clamp(lo, hi.max(lo));
    true
}

fn realize_kind(ks: &KindSet, signs: &[bool], n_periods: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, bool) {
    let base = pattern_values(signs, ks.r);
    let mut alpha = vec![vec![0.0; n_periods]; base.len()];
    let mut per_period = Vec::with_capacity(n_periods);
    let mut truncated = false;
    for t in 0..n_periods {
        let mut a = base.clone();
        let mut col = ks.realize_column(&a, t);
        if col.iter().any(|&v| v < -NEG_TOL) {
            if adjust_last(ks, &mut a, t) {
                col = ks.realize_column(&a, t);
            } else {
                truncated = true;
            }
        }
        col.iter_mut().for_each(|v| *v = v.max(0.0));
        for (k, &v) in a.iter().enumerate() {
            alpha[k][t] = v;
        }
        per_period.push(col);
    }
    let by_entity = (0..ks.baseline.len()).map(|i| per_period.iter().map(|c| c[i]).collect()).collect();
    (alpha, by_entity, truncated)
}

fn admissible(signs: &[bool], ks: &KindSet, recipe: bool) -> bool {
    recipe || pattern_values(signs, ks.r).iter().sum::<f64>().abs() <= ks.sigma + NEG_TOL
}

/// Grid combinations: load patterns in listed order, wind patterns in
/// binary-counter order, wind varying fastest. Patterns are shared by all
/// RT periods.
pub fn grid_points(uset: &UncertaintySet) -> Vec<GridPoint> {
    let load_recipe = uset.load.k() == 3;
    let wind_recipe = uset.wind.k() == 3;
    let keep = |ks: &KindSet, recipe: bool, pats: Vec<Vec<bool>>| -> Vec<(usize, Vec<bool>)> {
        let kept: Vec<(usize, Vec<bool>)> =
            pats.into_iter().enumerate().filter(|(_, p)| admissible(p, ks, recipe)).collect();
        if kept.is_empty() {
            log::warn!("no sign pattern satisfies the stressor-sum bound; using the zero stressor");
        }
        kept
    };
    let mut load_pats = keep(&uset.load, load_recipe, sign_patterns(uset.load.k(), true));
    let mut wind_pats = keep(&uset.wind, wind_recipe, sign_patterns(uset.wind.k(), false));
    let zero_kind = |ks: &KindSet| {
        (vec![vec![0.0; uset.n_periods]; ks.k()], ks.baseline.clone(), false)
    };
    if load_pats.is_empty() {
        load_pats.push((usize::MAX, vec![]));
    }
    if wind_pats.is_empty() {
        wind_pats.push((usize::MAX, vec![]));
    }
    let realize = |ks: &KindSet, idx: usize, p: &[bool]| {
        if idx == usize::MAX {
            zero_kind(ks)
        } else {
            realize_kind(ks, p, uset.n_periods)
        }
    };
    let loads: Vec<_> = load_pats.iter().map(|(i, p)| (*i, realize(&uset.load, *i, p))).collect();
    let winds: Vec<_> = wind_pats.iter().map(|(i, p)| (*i, realize(&uset.wind, *i, p))).collect();
    let mut out = Vec::with_capacity(loads.len() * winds.len());
    for (li, (ad, d, td)) in &loads {
        for (wi, (aw, w, tw)) in &winds {
            if *td || *tw {
                log::warn!("grid ({li}, {wi}) truncated at zero: no stressor adjustment keeps it nonnegative");
            }
            out.push(GridPoint {
                load_pattern: *li,
                wind_pattern: *wi,
                alpha: StressorVector { alpha_d: ad.clone(), alpha_w: aw.clone() },
                scenario: Scenario { d_rt: d.clone(), p_cap_rt: w.clone() },
                truncated: *td || *tw,
            });
        }
    }
    out
}
