//! Grid, generator and time-structure data model.
//!
//! [`CaseData`] is the serialisable form of a case file; [`PowerSystem`] is
//! the validated, index-resolved view every solver consumes. A
//! `PowerSystem` is immutable once built.

mod io;

use std::collections::{HashMap, HashSet, VecDeque};
use std::ops::Range;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use io::{load_case, load_history, save_case, HistoryKind, HistoryMatrix};

/// Ramp limit of a thermal unit. `Unbounded` drops every ramping row for
/// the unit, both day-ahead and real-time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ramp {
    Limited(f64),
    Unbounded,
}

impl Ramp {
    pub fn limit(self) -> Option<f64> {
        match self {
            Ramp::Limited(v) => Some(v),
            Ramp::Unbounded => None,
        }
    }
}

impl Serialize for Ramp {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Ramp::Limited(v) => s.serialize_f64(*v),
            Ramp::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for Ramp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Ramp::Limited(v)),
            Raw::Str(s) if s == "unbounded" => Ok(Ramp::Unbounded),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "ramp must be a number or \"unbounded\", got \"{s}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    /// Day-ahead expected load per DA hour (MW).
    pub forecast_load: Vec<f64>,
    /// Real-time baseline per RT period (MW); defaults to the parent hour.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rt_forecast_load: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from_bus: String,
    pub to_bus: String,
    /// Per-unit susceptance.
    pub susceptance: f64,
    /// Thermal limit (MW), applied in both directions.
    pub capacity: f64,
}

/// One affine piece `slope * p + intercept * y` of a convex production cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSegment {
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalGenerator {
    pub id: String,
    pub bus: String,
    pub p_min: f64,
    pub p_max: f64,
    /// Hourly ramp limit (MW/h).
    pub ramp_hourly: Ramp,
    /// Ramp limit per RT period (MW).
    pub ramp_rt: Ramp,
    #[serde(default)]
    pub startup_cost: f64,
    #[serde(default)]
    pub shutdown_cost: f64,
    pub cost_segments: Vec<CostSegment>,
}

impl ThermalGenerator {
    /// Piecewise production cost `max_o(slope * p + intercept)` of a committed unit.
    pub fn production_cost(&self, p: f64) -> f64 {
        self.cost_segments
            .iter()
            .map(|s| s.slope * p + s.intercept)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_slope(&self) -> f64 {
        self.cost_segments.iter().map(|s| s.slope).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindGenerator {
    pub id: String,
    pub bus: String,
    /// DA forecast of available output per DA hour (MW).
    pub forecast_cap: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rt_forecast_cap: Option<Vec<f64>>,
}

/// DA hours are `0..da_hours`. The critical RT window is a contiguous run of
/// hours, each split into `n_tp` periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeStructure {
    pub da_hours: usize,
    pub rt_hours: Vec<usize>,
    pub n_tp: usize,
    /// Hours whose commitment may deviate from the deterministic schedule.
    pub flex_window: Vec<usize>,
}

impl TimeStructure {
    pub fn n_rt_periods(&self) -> usize {
        self.rt_hours.len() * self.n_tp
    }

    /// Parent DA hour of every RT period, in order.
    pub fn rt_period_hours(&self) -> Vec<usize> {
        self.rt_hours
            .iter()
            .flat_map(|&h| std::iter::repeat(h).take(self.n_tp))
            .collect()
    }

    /// RT period indices belonging to the `k`-th RT hour.
    pub fn periods_of_rt_hour(&self, k: usize) -> Range<usize> {
        k * self.n_tp..(k + 1) * self.n_tp
    }

    pub fn is_rt_hour(&self, hour: usize) -> bool {
        self.rt_hours.contains(&hour)
    }

    pub fn is_flex(&self, hour: usize) -> bool {
        self.flex_window.contains(&hour)
    }

    pub fn validate(&self) -> Result<()> {
        if self.da_hours == 0 {
            return Err(Error::Validation("time.da_hours must be at least 1".into()));
        }
        if self.n_tp == 0 {
            return Err(Error::Validation("time.n_tp must be a positive integer".into()));
        }
        if self.rt_hours.is_empty() {
            return Err(Error::Validation("time.rt_hours must not be empty".into()));
        }
        for w in self.rt_hours.windows(2) {
            if w[1] != w[0] + 1 {
                return Err(Error::Validation("time.rt_hours must be ascending consecutive hours".into()));
            }
        }
        if let Some(&h) = self.rt_hours.iter().find(|&&h| h >= self.da_hours) {
            return Err(Error::Validation(format!("time.rt_hours entry {h} is not a DA hour")));
        }
        if self.flex_window.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("time.flex_window must be strictly ascending".into()));
        }
        if let Some(&h) = self.flex_window.iter().find(|&&h| h >= self.da_hours) {
            return Err(Error::Validation(format!("time.flex_window entry {h} is not a DA hour")));
        }
        if let Some(&h) = self.rt_hours.iter().find(|h| !self.flex_window.contains(h)) {
            return Err(Error::Validation(format!("time.flex_window must contain RT hour {h}")));
        }
        Ok(())
    }
}

/// Serialisable case description; see [`load_case`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseData {
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub lines: Vec<Line>,
    pub thermal_generators: Vec<ThermalGenerator>,
    #[serde(default)]
    pub wind_generators: Vec<WindGenerator>,
    pub time: TimeStructure,
    pub voll_da: f64,
    pub voll_rt: f64,
}

/// A validated grid with resolved bus indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSystem {
    case: CaseData,
    bus_index: HashMap<String, usize>,
    line_ends: Vec<(usize, usize)>,
    thermal_bus: Vec<usize>,
    wind_bus: Vec<usize>,
    ref_bus: usize,
}

fn check_series(name: &str, values: &[f64], len: usize) -> Result<()> {
    if values.len() != len {
        return Err(Error::Validation(format!("{name} has {} entries, expected {len}", values.len())));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Validation(format!("{name} must be finite and nonnegative, found {v}")));
    }
    Ok(())
}

fn id_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

impl PowerSystem {
    /// Validates `case`, fills default RT baselines and resolves indices.
    pub fn new(mut case: CaseData) -> Result<Self> {
        let time = &case.time;
        time.validate()?;
        let n_rt = time.n_rt_periods();
        let period_hours = time.rt_period_hours();

        if case.buses.is_empty() {
            return Err(Error::Validation("a case needs at least one bus".into()));
        }
        let mut bus_index = HashMap::new();
        for (i, b) in case.buses.iter().enumerate() {
            if bus_index.insert(b.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate bus id `{}`", b.id)));
            }
        }
        for b in &mut case.buses {
            check_series(&format!("bus `{}` forecast_load", b.id), &b.forecast_load, time.da_hours)?;
            let rt = b
                .rt_forecast_load
                .get_or_insert_with(|| period_hours.iter().map(|&h| b.forecast_load[h]).collect());
            check_series(&format!("bus `{}` rt_forecast_load", b.id), rt, n_rt)?;
        }

        let lookup = |id: &str, what: &str| {
            bus_index
                .get(id)
                .copied()
                .ok_or_else(|| Error::Validation(format!("{what} references unknown bus `{id}`")))
        };

        let mut line_ends = Vec::with_capacity(case.lines.len());
        for (l, line) in case.lines.iter().enumerate() {
            let from = lookup(&line.from_bus, &format!("line {l}"))?;
            let to = lookup(&line.to_bus, &format!("line {l}"))?;
            if from == to {
                return Err(Error::Validation(format!("line {l} connects bus `{}` to itself", line.from_bus)));
            }
            if !(line.susceptance > 0.0) || !line.susceptance.is_finite() {
                return Err(Error::Validation(format!("line {l} susceptance must be positive")));
            }
            if !(line.capacity > 0.0) {
                return Err(Error::Validation(format!("line {l} capacity must be positive")));
            }
            line_ends.push((from, to));
        }

        let mut gen_ids = HashSet::new();
        let mut thermal_bus = Vec::with_capacity(case.thermal_generators.len());
        let mut max_cost = f64::NEG_INFINITY;
        for g in &case.thermal_generators {
            if !gen_ids.insert(g.id.clone()) {
                return Err(Error::Validation(format!("duplicate generator id `{}`", g.id)));
            }
            thermal_bus.push(lookup(&g.bus, &format!("generator `{}`", g.id))?);
            if !(g.p_min >= 0.0 && g.p_min <= g.p_max && g.p_max.is_finite()) {
                return Err(Error::Validation(format!(
                    "generator `{}` needs 0 <= p_min <= p_max (got {} and {})",
                    g.id, g.p_min, g.p_max
                )));
            }
            for (name, r) in [("ramp_hourly", g.ramp_hourly), ("ramp_rt", g.ramp_rt)] {
                if let Ramp::Limited(v) = r {
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(Error::Validation(format!("generator `{}` {name} must be positive", g.id)));
                    }
                }
            }
            if !(g.startup_cost >= 0.0 && g.shutdown_cost >= 0.0) {
                return Err(Error::Validation(format!("generator `{}` has negative startup/shutdown cost", g.id)));
            }
            if g.cost_segments.is_empty() {
                return Err(Error::Validation(format!("generator `{}` has no cost segments", g.id)));
            }
            if g.cost_segments.iter().any(|s| !s.slope.is_finite() || !s.intercept.is_finite()) {
                return Err(Error::Validation(format!("generator `{}` has non-finite cost data", g.id)));
            }
            if g.cost_segments.windows(2).any(|w| w[1].slope < w[0].slope) {
                return Err(Error::Validation(format!(
                    "generator `{}` cost curve is not convex: segment slopes must be nondecreasing",
                    g.id
                )));
            }
            max_cost = max_cost.max(g.max_slope());
        }

        let mut wind_bus = Vec::with_capacity(case.wind_generators.len());
        for w in &mut case.wind_generators {
            if !gen_ids.insert(w.id.clone()) {
                return Err(Error::Validation(format!("duplicate generator id `{}`", w.id)));
            }
            wind_bus.push(lookup(&w.bus, &format!("wind farm `{}`", w.id))?);
            check_series(&format!("wind farm `{}` forecast_cap", w.id), &w.forecast_cap, time.da_hours)?;
            let rt = w
                .rt_forecast_cap
                .get_or_insert_with(|| period_hours.iter().map(|&h| w.forecast_cap[h]).collect());
            check_series(&format!("wind farm `{}` rt_forecast_cap", w.id), rt, n_rt)?;
        }

        if !(case.voll_da.is_finite() && case.voll_rt.is_finite()) {
            return Err(Error::Validation("VOLL values must be finite".into()));
        }
        if !(case.voll_rt > case.voll_da) {
            return Err(Error::Validation("voll_rt must exceed voll_da".into()));
        }
        if max_cost.is_finite() && !(case.voll_da > max_cost) {
            return Err(Error::Validation(format!(
                "voll_da ({}) must exceed every generator marginal cost (max {max_cost})",
                case.voll_da
            )));
        }

        // connectivity
        let n = case.buses.len();
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &line_ends {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Validation(format!("network is not connected: bus `{}` unreachable", case.buses[i].id)));
        }

        let ref_bus = (0..n).min_by(|&a, &b| id_order(&case.buses[a].id, &case.buses[b].id)).unwrap_or(0);

        Ok(Self { case, bus_index, line_ends, thermal_bus, wind_bus, ref_bus })
    }

    pub fn case(&self) -> &CaseData {
        &self.case
    }

    pub fn into_case(self) -> CaseData {
        self.case
    }

    pub fn buses(&self) -> &[Bus] {
        &self.case.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.case.lines
    }

    pub fn thermal(&self) -> &[ThermalGenerator] {
        &self.case.thermal_generators
    }

    pub fn wind(&self) -> &[WindGenerator] {
        &self.case.wind_generators
    }

    pub fn time(&self) -> &TimeStructure {
        &self.case.time
    }

    pub fn voll_da(&self) -> f64 {
        self.case.voll_da
    }

    pub fn voll_rt(&self) -> f64 {
        self.case.voll_rt
    }

    pub fn n_buses(&self) -> usize {
        self.case.buses.len()
    }

    pub fn n_thermal(&self) -> usize {
        self.case.thermal_generators.len()
    }

    pub fn n_wind(&self) -> usize {
        self.case.wind_generators.len()
    }

    pub fn n_hours(&self) -> usize {
        self.case.time.da_hours
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.bus_index.get(id).copied()
    }

    pub fn line_ends(&self, l: usize) -> (usize, usize) {
        self.line_ends[l]
    }

    pub fn thermal_bus(&self, g: usize) -> usize {
        self.thermal_bus[g]
    }

    pub fn wind_bus(&self, w: usize) -> usize {
        self.wind_bus[w]
    }

    /// Bus whose angle is pinned to zero (lowest id).
    pub fn ref_bus(&self) -> usize {
        self.ref_bus
    }

    pub fn da_load(&self, bus: usize, hour: usize) -> f64 {
        self.case.buses[bus].forecast_load[hour]
    }

    pub fn rt_baseline_load(&self, bus: usize, period: usize) -> f64 {
        self.case.buses[bus].rt_forecast_load.as_ref().expect("filled at construction")[period]
    }

    pub fn da_wind(&self, w: usize, hour: usize) -> f64 {
        self.case.wind_generators[w].forecast_cap[hour]
    }

    pub fn rt_baseline_wind(&self, w: usize, period: usize) -> f64 {
        self.case.wind_generators[w].rt_forecast_cap.as_ref().expect("filled at construction")[period]
    }

    /// RT load baselines as `[bus][period]`.
    pub fn rt_baseline_loads(&self) -> Vec<Vec<f64>> {
        (0..self.n_buses())
            .map(|i| (0..self.time().n_rt_periods()).map(|t| self.rt_baseline_load(i, t)).collect())
            .collect()
    }

    /// RT wind baselines as `[farm][period]`.
    pub fn rt_baseline_winds(&self) -> Vec<Vec<f64>> {
        (0..self.n_wind())
            .map(|w| (0..self.time().n_rt_periods()).map(|t| self.rt_baseline_wind(w, t)).collect())
            .collect()
    }

    /// Copy of the system with each RT hour split into `n_tp` periods. Each
    /// new period takes the hour's mean RT baseline.
    pub fn with_rt_resolution(&self, n_tp: usize) -> Result<Self> {
        let mut case = self.case.clone();
        let old = &self.case.time;
        let hour_mean = |series: &[f64], k: usize| {
            let r = old.periods_of_rt_hour(k);
            series[r.clone()].iter().sum::<f64>() / r.len() as f64
        };
        let expand = |series: &[f64]| -> Vec<f64> {
            (0..old.rt_hours.len())
                .flat_map(|k| std::iter::repeat(hour_mean(series, k)).take(n_tp))
                .collect()
        };
        for b in &mut case.buses {
            b.rt_forecast_load = b.rt_forecast_load.as_deref().map(expand);
        }
        for w in &mut case.wind_generators {
            w.rt_forecast_cap = w.rt_forecast_cap.as_deref().map(expand);
        }
        case.time.n_tp = n_tp;
        Self::new(case)
    }

    /// Same system with a different flex window.
    pub fn with_flex_window(&self, flex: Vec<usize>) -> Result<Self> {
        let mut case = self.case.clone();
        case.time.flex_window = flex;
        Self::new(case)
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn thermal(id: &str, bus: &str, p_min: f64, p_max: f64, slope: f64) -> ThermalGenerator {
        ThermalGenerator {
            id: id.into(),
            bus: bus.into(),
            p_min,
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

    /// Three units on one bus, two hours: the binding-ramp LMP example.
    pub fn ramp_example() -> CaseData {
        let mut g3 = thermal("3", "1", 0.0, 50.0, 3.0);
        g3.ramp_rt = Ramp::Limited(1.0);
        CaseData {
            buses: vec![bus("1", &[59.0, 59.0])],
            lines: vec![],
            thermal_generators: vec![thermal("1", "1", 0.0, 50.0, 1.0), thermal("2", "1", 0.0, 10.0, 2.0), g3],
            wind_generators: vec![],
            time: hours(2, &[0, 1]),
            voll_da: 10_000.0,
            voll_rt: 20_000.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn single_bus_two_units_is_trivially_connected() {
        let case = CaseData {
            buses: vec![bus("a", &[10.0])],
            lines: vec![],
            thermal_generators: vec![thermal("g1", "a", 0.0, 20.0, 5.0), thermal("g2", "a", 0.0, 20.0, 7.0)],
            wind_generators: vec![],
            time: hours(1, &[0]),
            voll_da: 1000.0,
            voll_rt: 2000.0,
        };
        let sys = PowerSystem::new(case).unwrap();
        assert_eq!(sys.lines().len(), 0);
        assert_eq!(sys.rt_baseline_load(0, 0), 10.0);
    }

    #[test]
    fn ramp_example_encodes_unbounded_sentinel() {
        let sys = PowerSystem::new(ramp_example()).unwrap();
        let ramps: Vec<Ramp> = sys.thermal().iter().map(|g| g.ramp_rt).collect();
        assert_eq!(ramps, vec![Ramp::Unbounded, Ramp::Unbounded, Ramp::Limited(1.0)]);
        let caps: Vec<f64> = sys.thermal().iter().map(|g| g.p_max).collect();
        assert_eq!(caps, vec![50.0, 10.0, 50.0]);
    }

    #[test]
    fn p_min_above_p_max_rejected() {
        let mut case = ramp_example();
        case.thermal_generators[0].p_min = 60.0;
        let err = PowerSystem::new(case).unwrap_err();
        assert!(err.to_string().contains("p_min <= p_max"), "{err}");
    }

    #[test]
    fn flex_window_outside_horizon_rejected() {
        let mut case = ramp_example();
        case.time.flex_window = vec![0, 1, 2];
        let err = PowerSystem::new(case).unwrap_err();
        assert!(err.to_string().contains("flex_window"), "{err}");
    }

    #[test]
    fn flex_window_must_cover_rt_hours() {
        let mut case = ramp_example();
        case.time.flex_window = vec![0];
        assert!(PowerSystem::new(case).is_err());
    }

    #[test]
    fn nonconvex_cost_rejected() {
        let mut case = ramp_example();
        case.thermal_generators[0].cost_segments =
            vec![CostSegment { slope: 5.0, intercept: 0.0 }, CostSegment { slope: 2.0, intercept: 10.0 }];
        let err = PowerSystem::new(case).unwrap_err();
        assert!(err.to_string().contains("convex"));
    }

    #[test]
    fn disconnected_network_rejected() {
        let mut case = ramp_example();
        case.buses.push(bus("2", &[0.0, 0.0]));
        let err = PowerSystem::new(case).unwrap_err();
        assert!(err.to_string().contains("connected"));
    }

    #[test]
    fn voll_ordering_enforced() {
        let mut case = ramp_example();
        case.voll_rt = case.voll_da;
        assert!(PowerSystem::new(case).is_err());
        let mut case = ramp_example();
        case.voll_da = 2.5;
        assert!(PowerSystem::new(case).is_err());
    }

    #[test]
    fn self_loop_and_unknown_bus_rejected() {
        let mut case = ramp_example();
        case.lines.push(Line { from_bus: "1".into(), to_bus: "1".into(), susceptance: 1.0, capacity: 10.0 });
        assert!(PowerSystem::new(case).is_err());
        let mut case = ramp_example();
        case.lines.push(Line { from_bus: "1".into(), to_bus: "9".into(), susceptance: 1.0, capacity: 10.0 });
        assert!(PowerSystem::new(case).is_err());
    }

    #[test]
    fn reference_bus_is_lowest_numeric_id() {
        let case = CaseData {
            buses: vec![bus("10", &[1.0]), bus("2", &[1.0])],
            lines: vec![Line { from_bus: "10".into(), to_bus: "2".into(), susceptance: 1.0, capacity: 5.0 }],
            thermal_generators: vec![thermal("g", "10", 0.0, 5.0, 1.0)],
            wind_generators: vec![],
            time: hours(1, &[0]),
            voll_da: 100.0,
            voll_rt: 200.0,
        };
        assert_eq!(PowerSystem::new(case).unwrap().ref_bus(), 1);
    }

    #[test]
    fn finer_rt_resolution_holds_hourly_baseline() {
        let sys = PowerSystem::new(ramp_example()).unwrap();
        let fine = sys.with_rt_resolution(12).unwrap();
        assert_eq!(fine.time().n_rt_periods(), 24);
        assert!((0..24).all(|t| fine.rt_baseline_load(0, t) == 59.0));
        assert_eq!(fine.time().rt_period_hours()[12], 1);
    }
}
