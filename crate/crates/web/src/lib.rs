//! Browser bindings for three small interactive runs: DA dispatch and
//! prices of a pasted case, principal modes of a pasted history, and the
//! cost/exposure tradeoff as the exposure weight varies.
//!
//! The plain functions are the tested surface; the `#[wasm_bindgen]`
//! wrappers only move JSON across the boundary.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use scuc_core::adversary::{solve_adversary, AdversaryOptions};
use scuc_core::decomposition::{solve_risk_aware, RiskOptions};
use scuc_core::scuc::{da_pricing_run, solve_deterministic};
use scuc_core::solver::{MipOptions, SimplexBackend};
use scuc_core::system::{CaseData, HistoryMatrix, PowerSystem};
use scuc_core::uncertainty::{build_uncertainty_set, PrincipalModes, SigmaRule};

const RAMP_CASE: &str = include_str!("../../../cases/ramp_example.json");
const STRESSED_CASE: &str = include_str!("../../../cases/stressed/case.json");
const STRESSED_HISTORY: &str = include_str!("../../../cases/stressed/load_history.csv");
const SAMPLE_HISTORY: &str = include_str!("../../../cases/three_bus/load_history.csv");

#[derive(Debug, Serialize)]
pub struct DispatchView {
    pub units: Vec<String>,
    pub buses: Vec<String>,
    /// `[unit][hour]`
    pub commitment: Vec<Vec<bool>>,
    /// `[unit][hour]`, MW
    pub p: Vec<Vec<f64>>,
    /// `[bus][hour]`, $/MWh
    pub lmp: Vec<Vec<f64>>,
    pub cost: f64,
    pub payment: f64,
}

#[derive(Debug, Serialize)]
pub struct PcaView {
    pub columns: Vec<String>,
    pub observations: usize,
    pub eigvals: Vec<f64>,
    /// Cumulative explained share for 1..=dim modes.
    pub explained: Vec<f64>,
    /// Leading `k` unit modes.
    pub modes: Vec<Vec<f64>>,
    pub rank: usize,
    /// Sign-pattern corners per period for `k` modes.
    pub corners: usize,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct TradeoffPoint {
    pub rho: f64,
    pub da_cost: f64,
    pub worst_exposure: f64,
    pub objective: f64,
    /// Units committed in any hour.
    pub committed: Vec<String>,
}

fn system(case_json: &str) -> Result<PowerSystem, String> {
    let case: CaseData = serde_json::from_str(case_json).map_err(|e| format!("case JSON: {e}"))?;
    PowerSystem::new(case).map_err(|e| e.to_string())
}

/// Deterministic DA commitment and the prices of its fixed-commitment LP.
pub fn dispatch_case(case_json: &str) -> Result<DispatchView, String> {
    let sys = system(case_json)?;
    let backend = SimplexBackend::default();
    let det = solve_deterministic(&sys, &backend, &MipOptions::default()).map_err(|e| e.to_string())?;
    let priced = da_pricing_run(&sys, &det.schedule, &backend).map_err(|e| e.to_string())?;
    let commitment = (0..sys.n_thermal())
        .map(|g| (0..sys.n_hours()).map(|t| det.schedule.is_on(g, t)).collect())
        .collect();
    Ok(DispatchView {
        units: sys.thermal().iter().map(|g| g.id.clone()).collect(),
        buses: sys.buses().iter().map(|b| b.id.clone()).collect(),
        commitment,
        p: priced.dispatch.p.clone(),
        lmp: priced.lmp.clone(),
        cost: det.dispatch.cost.total,
        payment: priced.total_payment,
    })
}

/// Principal modes of a history CSV whose header names the columns.
pub fn pca_of_history(csv_text: &str, k: usize) -> Result<PcaView, String> {
    let header = csv_text.lines().next().ok_or("history is empty")?;
    let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    let hist = HistoryMatrix::from_csv(csv_text.as_bytes(), "history", &columns).map_err(|e| e.to_string())?;
    if k == 0 || k > columns.len() {
        return Err(format!("k must lie in 1..={}", columns.len()));
    }
    let pca = PrincipalModes::from_history(&hist);
    Ok(PcaView {
        observations: hist.n_obs(),
        explained: (1..=pca.dim()).map(|j| pca.explained_ratio(j)).collect(),
        modes: pca.eigvecs.iter().take(k).cloned().collect(),
        rank: pca.numerical_rank(),
        corners: 1 << k,
        eigvals: pca.eigvals,
        columns,
    })
}

/// Risk-aware solve of the built-in stressed case at each weight.
pub fn risk_tradeoff(rhos: &[f64], r_load: f64) -> Result<Vec<TradeoffPoint>, String> {
    let sys = system(STRESSED_CASE)?;
    let ids: Vec<String> = sys.buses().iter().map(|b| b.id.clone()).collect();
    let hist = HistoryMatrix::from_csv(STRESSED_HISTORY.as_bytes(), "history", &ids).map_err(|e| e.to_string())?;
    let uset = build_uncertainty_set(&hist, None, &sys, 1, r_load, 0.0, SigmaRule::default()).map_err(|e| e.to_string())?;
    let backend = SimplexBackend::default();
    let det = solve_deterministic(&sys, &backend, &MipOptions::default()).map_err(|e| e.to_string())?;
    rhos.iter()
        .map(|&rho| {
            let adversary = AdversaryOptions { workers: 1 };
            let opts = RiskOptions { rho, adversary, ..RiskOptions::default() };
            let sol = solve_risk_aware(&sys, &uset, &det.schedule, &backend, &opts).map_err(|e| e.to_string())?;
            // the zero-weight solve skips the adversary, so exposure is always re-evaluated
            let worst = solve_adversary(&sys, &uset, &sol.schedule, &backend, &adversary).map_err(|e| e.to_string())?;
            let committed = sys
                .thermal()
                .iter()
                .enumerate()
                .filter(|&(g, _)| (0..sys.n_hours()).any(|t| sol.schedule.is_on(g, t)))
                .map(|(_, u)| u.id.clone())
                .collect();
            Ok(TradeoffPoint {
                rho,
                da_cost: sol.da_dispatch.cost.total,
                worst_exposure: worst.worst_exposure,
                objective: sol.da_dispatch.cost.total + rho * worst.worst_exposure,
                committed,
            })
        })
        .collect()
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
        .map(|v| serde_json::to_string(&v).expect("views serialise"))
}

#[wasm_bindgen(js_name = rampExampleCase)]
pub fn ramp_example_case() -> String {
    RAMP_CASE.to_string()
}

#[wasm_bindgen(js_name = sampleHistory)]
pub fn sample_history() -> String {
    SAMPLE_HISTORY.to_string()
}

#[wasm_bindgen(js_name = solveDispatch)]
pub fn solve_dispatch_js(case_json: &str) -> Result<String, JsError> {
    to_js(dispatch_case(case_json))
}

#[wasm_bindgen(js_name = pcaAudit)]
pub fn pca_audit_js(csv_text: &str, k: usize) -> Result<String, JsError> {
    to_js(pca_of_history(csv_text, k))
}

#[wasm_bindgen(js_name = riskTradeoff)]
pub fn risk_tradeoff_js(rhos: Vec<f64>, r_load: f64) -> Result<String, JsError> {
    to_js(risk_tradeoff(&rhos, r_load))
}
