use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scuc_core::decomposition::{CutFamily, DecompositionMode};
use scuc_core::uncertainty::SigmaRule;

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Sampling {
    Uniform,
    /// Cap around the worst-case stressor of the first evaluated schedule.
    Cone {
        #[serde(default = "scuc_core::evaluation::default_cone_angle")]
        angle: f64,
        #[serde(default)]
        joint: bool,
    },
}

/// Every experiment knob. Paths are relative to the config file; flags
/// override keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub case: Option<PathBuf>,
    pub load_history: Option<PathBuf>,
    pub wind_history: Option<PathBuf>,
    pub k: usize,
    pub r_load: f64,
    pub r_wind: f64,
    pub sigma_rule: SigmaRule,
    pub rho: f64,
    pub cut_families: Vec<CutFamily>,
    pub mode: DecompositionMode,
    pub root_cuts: usize,
    pub max_iterations: usize,
    pub flex_window: Option<Vec<usize>>,
    pub voll_da: Option<f64>,
    pub voll_rt: Option<f64>,
    pub gap: f64,
    pub time_limit: Option<f64>,
    pub seed: u64,
    pub workers: usize,
    pub backend: String,
    pub output: PathBuf,
    pub n_samples: usize,
    pub sampling: Sampling,
    /// RT periods per hour for out-of-sample evaluation.
    pub eval_periods_per_hour: Option<usize>,
    pub n_scenarios: usize,
    pub rho_sto: f64,
    pub beta: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            case: None,
            load_history: None,
            wind_history: None,
            k: 3,
            r_load: 0.0,
            r_wind: 0.0,
            sigma_rule: SigmaRule::default(),
            rho: 1.0,
            cut_families: vec![CutFamily::Lbbd],
            mode: DecompositionMode::Iterative,
            root_cuts: 0,
            max_iterations: 1000,
            flex_window: None,
            voll_da: None,
            voll_rt: None,
            gap: 1e-3,
            time_limit: None,
            seed: 0,
            workers: 1,
            backend: "simplex".into(),
            output: PathBuf::from("out"),
            n_samples: 100,
            sampling: Sampling::Uniform,
            eval_periods_per_hour: None,
            n_scenarios: 10,
            rho_sto: 0.0,
            beta: 0.9,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| {
            Failure::input(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.case.as_mut().map(rebase);
        cfg.load_history.as_mut().map(rebase);
        cfg.wind_history.as_mut().map(rebase);
        rebase(&mut cfg.output);
        Ok(cfg)
    }

    pub fn case_path(&self) -> Result<&Path, Failure> {
        self.case.as_deref().ok_or_else(|| Failure::input("no case file given (config `case` or --case)"))
    }

    pub fn load_history_path(&self) -> Result<&Path, Failure> {
        self.load_history
            .as_deref()
            .ok_or_else(|| Failure::input("this command needs a load history (config `load_history` or --load-history)"))
    }

    /// Range checks and existence of every referenced file.
    pub fn validate(&self) -> Result<(), Failure> {
        let bad = |msg: &str| Err(Failure::input(msg.to_string()));
        for p in [&self.case, &self.load_history, &self.wind_history].into_iter().flatten() {
            if !p.is_file() {
                return Err(Failure::input(format!("file not found: {}", p.display())));
            }
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return bad("rho must be a finite nonnegative number");
        }
        if !(self.gap > 0.0 && self.gap < 1.0) {
            return bad("gap must lie in (0, 1)");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !(self.r_load >= 0.0 && self.r_wind >= 0.0) {
            return bad("r_load and r_wind must be nonnegative");
        }
        if self.time_limit.is_some_and(|t| !(t > 0.0)) {
            return bad("time_limit must be positive");
        }
        if self.cut_families.is_empty() {
            return bad("cut_families must not be empty");
        }
        if self.n_samples == 0 || self.n_scenarios == 0 {
            return bad("n_samples and n_scenarios must be positive");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.rho_sto >= 0.0) {
            return bad("rho_sto must be nonnegative");
        }
        if self.eval_periods_per_hour == Some(0) {
            return bad("eval_periods_per_hour must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_resolve_against_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"case": "c.json", "output": "/abs/out", "cut_families": ["no_good", "lbbd"]}"#).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.case.unwrap(), dir.path().join("c.json"));
        assert_eq!(cfg.output, PathBuf::from("/abs/out"));
        assert_eq!(cfg.cut_families, vec![CutFamily::NoGood, CutFamily::Lbbd]);
    }

    #[test]
    fn unknown_keys_and_bad_ranges_are_input_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"rhoo": 1}"#).unwrap();
        assert_eq!(RunConfig::load(&path).unwrap_err().code, 2);
        let cfg = RunConfig { gap: 1.5, ..RunConfig::default() };
        assert_eq!(cfg.validate().unwrap_err().code, 2);
        let cfg = RunConfig { rho: -1.0, ..RunConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
