//! Day-ahead security-constrained unit commitment.

pub(crate) mod block;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::{write_json, write_series};
use crate::solver::{Backend, MipOptions, Model, SolveResult, Sense, Var};
use crate::system::PowerSystem;
use block::{build_block, Block, BlockSpec, CommitmentTerms, OnOff, RampScale};

/// Binary on/startup/shutdown decisions indexed `[unit][hour]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CommitmentSchedule {
    pub y: Vec<Vec<bool>>,
    pub v: Vec<Vec<bool>>,
    pub w: Vec<Vec<bool>>,
}

impl CommitmentSchedule {
    /// Derives startups and shutdowns from on/off states, all units off before hour 0.
    pub fn from_on_off(y: Vec<Vec<bool>>) -> Self {
        let mut v = Vec::with_capacity(y.len());
        let mut w = Vec::with_capacity(y.len());
        for row in &y {
            let mut prev = false;
            let (mut vr, mut wr) = (Vec::with_capacity(row.len()), Vec::with_capacity(row.len()));
            for &on in row {
                vr.push(on && !prev);
                wr.push(!on && prev);
                prev = on;
            }
            v.push(vr);
            w.push(wr);
        }
        Self { y, v, w }
    }

    pub fn all_on(n_units: usize, n_hours: usize) -> Self {
        Self::from_on_off(vec![vec![true; n_hours]; n_units])
    }

    pub fn n_units(&self) -> usize {
        self.y.len()
    }

    pub fn n_hours(&self) -> usize {
        self.y.first().map_or(0, Vec::len)
    }

    pub fn is_on(&self, unit: usize, hour: usize) -> bool {
        self.y[unit][hour]
    }

    /// True when `v - w = y_t - y_{t-1}` holds everywhere with a cold start.
    pub fn linking_holds(&self) -> bool {
        self.y.iter().zip(&self.v).zip(&self.w).all(|((y, v), w)| {
            let mut prev = false;
            y.iter().zip(v).zip(w).all(|((&on, &s), &d)| {
                let ok = (s as i8 - d as i8) == (on as i8 - prev as i8);
                prev = on;
                ok
            })
        })
    }

    pub fn check_dims(&self, sys: &PowerSystem) -> Result<()> {
        let (g, t) = (sys.n_thermal(), sys.n_hours());
        let ok = |m: &Vec<Vec<bool>>| m.len() == g && m.iter().all(|r| r.len() == t);
        if ok(&self.y) && ok(&self.v) && ok(&self.w) {
            Ok(())
        } else {
            Err(Error::Dimension(format!("commitment schedule must be {g} units x {t} hours")))
        }
    }

    /// On/off states over the RT hours, unit-major; the key of the adversary value.
    pub fn rt_key(&self, sys: &PowerSystem) -> Vec<bool> {
        let hours = &sys.time().rt_hours;
        self.y.iter().flat_map(|row| hours.iter().map(move |&h| row[h])).collect()
    }

    pub(crate) fn terms(&self) -> [Vec<Vec<OnOff>>; 3] {
        let conv = |m: &Vec<Vec<bool>>| m.iter().map(|r| r.iter().map(|&b| OnOff::Const(b)).collect()).collect();
        [conv(&self.y), conv(&self.v), conv(&self.w)]
    }

    /// Writes `unit,hour,y,v,w`.
    pub fn write_csv(&self, sys: &PowerSystem, path: &Path) -> Result<()> {
        let mut w = crate::export::writer(path)?;
        let err = |e| crate::export::csv_err(path, e);
        w.write_record(["unit", "hour", "y", "v", "w"]).map_err(err)?;
        for (g, gen) in sys.thermal().iter().enumerate() {
            for t in 0..self.n_hours() {
                let b = |x: bool| if x { "1" } else { "0" };
                w.write_record([gen.id.as_str(), &t.to_string(), b(self.y[g][t]), b(self.v[g][t]), b(self.w[g][t])])
                    .map_err(err)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads the `unit,hour,y[,v,w]` format; missing v/w are derived from y.
    pub fn read_csv(sys: &PowerSystem, path: &Path) -> Result<Self> {
        let origin = path.display().to_string();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::History { path: origin.clone(), msg: e.to_string() })?;
        let header = rdr.headers().map_err(|e| Error::History { path: origin.clone(), msg: e.to_string() })?.clone();
        let col = |name: &str| header.iter().position(|h| h == name);
        let (Some(cu), Some(ch), Some(cy)) = (col("unit"), col("hour"), col("y")) else {
            return Err(Error::History { path: origin, msg: "schedule needs unit, hour and y columns".into() });
        };
        let (cv, cw) = (col("v"), col("w"));
        let (ng, nt) = (sys.n_thermal(), sys.n_hours());
        let mut y = vec![vec![None; nt]; ng];
        let mut v = vec![vec![false; nt]; ng];
        let mut w = vec![vec![false; nt]; ng];
        for (r, rec) in rdr.records().enumerate() {
            let line = r + 2;
            let rec = rec.map_err(|e| Error::History { path: origin.clone(), msg: e.to_string() })?;
            let perr = |column: usize, msg: String| Error::Parse { path: origin.clone(), line, column: column + 1, msg };
            let unit = rec.get(cu).unwrap_or("");
            let g = sys
                .thermal()
                .iter()
                .position(|gen| gen.id == unit)
                .ok_or_else(|| perr(cu, format!("unknown unit `{unit}`")))?;
            let t: usize = rec
                .get(ch)
                .and_then(|s| s.parse().ok())
                .filter(|&t| t < nt)
                .ok_or_else(|| perr(ch, "hour must be an index below da_hours".into()))?;
            let bit = |c: usize| match rec.get(c) {
                Some("1") => Ok(true),
                Some("0") => Ok(false),
                _ => Err(perr(c, "expected 0 or 1".into())),
            };
            y[g][t] = Some(bit(cy)?);
            if let (Some(cv), Some(cw)) = (cv, cw) {
                v[g][t] = bit(cv)?;
                w[g][t] = bit(cw)?;
            }
        }
        let y: Vec<Vec<bool>> = y
            .into_iter()
            .enumerate()
            .map(|(g, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(t, b)| {
                        b.ok_or_else(|| Error::Dimension(format!("{origin}: no entry for unit {g}, hour {t}")))
                    })
                    .collect::<Result<Vec<bool>>>()
            })
            .collect::<Result<_>>()?;
        let sched = if cv.is_some() && cw.is_some() { Self { y, v, w } } else { Self::from_on_off(y) };
        if !sched.linking_holds() {
            return Err(Error::Validation(format!("{origin}: startup/shutdown columns contradict on/off states")));
        }
        Ok(sched)
    }
}

/// The day-ahead MILP together with handles to its decision variables.
pub struct DaModel {
    pub model: Model,
    pub(crate) y: Vec<Vec<Var>>,
    pub(crate) v: Vec<Vec<Var>>,
    pub(crate) w: Vec<Vec<Var>>,
    pub(crate) block: Block,
}

/// Builds the deterministic day-ahead commitment model.
pub fn build_da_model(sys: &PowerSystem) -> DaModel {
    let mut model = Model::new();
    let n_h = sys.n_hours();
    let mut y = Vec::with_capacity(sys.n_thermal());
    let mut v = Vec::with_capacity(sys.n_thermal());
    let mut w = Vec::with_capacity(sys.n_thermal());
    for gen in sys.thermal() {
        y.push((0..n_h).map(|_| model.add_binary(0.0)).collect::<Vec<_>>());
        v.push((0..n_h).map(|_| model.add_binary(gen.startup_cost)).collect::<Vec<_>>());
        w.push((0..n_h).map(|_| model.add_binary(gen.shutdown_cost)).collect::<Vec<_>>());
    }
    for g in 0..sys.n_thermal() {
        // cold start: no shutdown in hour 0, so v = y there
        model.fix(w[g][0], 0.0);
        model.add_row(vec![(v[g][0], 1.0), (w[g][0], -1.0), (y[g][0], -1.0)], Sense::Eq, 0.0);
        for t in 1..n_h {
            model.add_row(
                vec![(v[g][t], 1.0), (w[g][t], -1.0), (y[g][t], -1.0), (y[g][t - 1], 1.0)],
                Sense::Eq,
                0.0,
            );
        }
    }
    let as_terms = |m: &Vec<Vec<Var>>| -> Vec<Vec<OnOff>> {
        m.iter().map(|r| r.iter().map(|&x| OnOff::Var(x)).collect()).collect()
    };
    let (ty, tv, tw) = (as_terms(&y), as_terms(&v), as_terms(&w));
    let hours: Vec<usize> = (0..n_h).collect();
    let load: Vec<Vec<f64>> = sys.buses().iter().map(|b| b.forecast_load.clone()).collect();
    let wind: Vec<Vec<f64>> = sys.wind().iter().map(|w| w.forecast_cap.clone()).collect();
    let block = build_block(
        &mut model,
        sys,
        &CommitmentTerms { y: &ty, v: &tv, w: &tw },
        &BlockSpec {
            period_hour: &hours,
            load: &load,
            wind_cap: &wind,
            voll: sys.voll_da(),
            ramp: RampScale::Hourly,
            weight: 1.0,
        },
    );
    DaModel { model, y, v, w, block }
}

impl DaModel {
    pub fn y_var(&self, unit: usize, hour: usize) -> Var {
        self.y[unit][hour]
    }

    /// Pins the on/off state only; startups and shutdowns follow from linking.
    pub fn fix_on_off(&mut self, unit: usize, hour: usize, on: bool) {
        self.model.fix(self.y[unit][hour], if on { 1.0 } else { 0.0 });
    }

    /// Pins all commitment variables of the hour-`hour` column of `unit` to `sched`.
    pub fn fix_unit_hour(&mut self, sched: &CommitmentSchedule, unit: usize, hour: usize) {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        self.model.fix(self.y[unit][hour], b(sched.y[unit][hour]));
        self.model.fix(self.v[unit][hour], b(sched.v[unit][hour]));
        if hour > 0 {
            self.model.fix(self.w[unit][hour], b(sched.w[unit][hour]));
        }
    }

    pub fn fix_schedule(&mut self, sched: &CommitmentSchedule) {
        for g in 0..self.y.len() {
            for t in 0..self.y[g].len() {
                self.fix_unit_hour(sched, g, t);
            }
        }
    }

    /// A point satisfying every row for the given schedule, for warm starts.
    pub fn schedule_from(&self, x: &[f64]) -> CommitmentSchedule {
        let r = |m: &Vec<Vec<Var>>| -> Vec<Vec<bool>> {
            m.iter().map(|row| row.iter().map(|v| x[v.index()] > 0.5).collect()).collect()
        };
        CommitmentSchedule { y: r(&self.y), v: r(&self.v), w: r(&self.w) }
    }

    pub fn dispatch_from(&self, sys: &PowerSystem, res: &SolveResult) -> DaDispatch {
        let vals = |m: &Vec<Vec<Var>>| -> Vec<Vec<f64>> {
            m.iter().map(|row| row.iter().map(|&v| res.value(v)).collect()).collect()
        };
        let b = &self.block;
        let p_wind = vals(&b.p_wind);
        let p_curtail = p_wind
            .iter()
            .enumerate()
            .map(|(w, row)| row.iter().enumerate().map(|(t, &p)| (sys.da_wind(w, t) - p).max(0.0)).collect())
            .collect();
        let sched = self.schedule_from(&res.x);
        let cost = cost_breakdown(sys, &sched, &vals(&b.h), &vals(&b.unmet));
        DaDispatch {
            p: vals(&b.p),
            h: vals(&b.h),
            p_wind,
            p_curtail,
            flow: vals(&b.flow),
            theta: vals(&b.theta),
            p_unmet: vals(&b.unmet),
            cost,
        }
    }
}

/// Day-ahead operating point; every matrix is `[entity][hour]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DaDispatch {
    pub p: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub p_wind: Vec<Vec<f64>>,
    pub p_curtail: Vec<Vec<f64>>,
    pub flow: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub p_unmet: Vec<Vec<f64>>,
    pub cost: CostBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub production: f64,
    pub startup: f64,
    pub shutdown: f64,
    pub unmet_load: f64,
    pub total: f64,
}

fn cost_breakdown(sys: &PowerSystem, sched: &CommitmentSchedule, h: &[Vec<f64>], unmet: &[Vec<f64>]) -> CostBreakdown {
    let production: f64 = h.iter().flatten().sum();
    let mut startup = 0.0;
    let mut shutdown = 0.0;
    for (g, gen) in sys.thermal().iter().enumerate() {
        startup += gen.startup_cost * sched.v[g].iter().filter(|&&b| b).count() as f64;
        shutdown += gen.shutdown_cost * sched.w[g].iter().filter(|&&b| b).count() as f64;
    }
    let unmet_load = sys.voll_da() * unmet.iter().flatten().sum::<f64>();
    CostBreakdown { production, startup, shutdown, unmet_load, total: production + startup + shutdown + unmet_load }
}

impl DaDispatch {
    /// One CSV per variable family plus `cost.json`.
    pub fn write_dir(&self, sys: &PowerSystem, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let gens: Vec<String> = sys.thermal().iter().map(|g| g.id.clone()).collect();
        let winds: Vec<String> = sys.wind().iter().map(|g| g.id.clone()).collect();
        let buses: Vec<String> = sys.buses().iter().map(|b| b.id.clone()).collect();
        let lines: Vec<String> = (0..sys.lines().len()).map(|l| l.to_string()).collect();
        write_series(&dir.join("p.csv"), "unit", "hour", &gens, &self.p)?;
        write_series(&dir.join("h.csv"), "unit", "hour", &gens, &self.h)?;
        write_series(&dir.join("p_wind.csv"), "farm", "hour", &winds, &self.p_wind)?;
        write_series(&dir.join("p_curtail.csv"), "farm", "hour", &winds, &self.p_curtail)?;
        write_series(&dir.join("flow.csv"), "line", "hour", &lines, &self.flow)?;
        write_series(&dir.join("theta.csv"), "bus", "hour", &buses, &self.theta)?;
        write_series(&dir.join("p_unmet.csv"), "bus", "hour", &buses, &self.p_unmet)?;
        write_json(&dir.join("cost.json"), &self.cost)
    }
}

#[derive(Debug, Clone)]
pub struct DaSolution {
    pub schedule: CommitmentSchedule,
    pub dispatch: DaDispatch,
    pub mip_gap: Option<f64>,
}

fn require_solution(res: &SolveResult, context: &str) -> Result<()> {
    if res.has_solution() {
        Ok(())
    } else {
        Err(Error::status(res.status, context))
    }
}

/// Solves the deterministic day-ahead SCUC.
pub fn solve_deterministic(sys: &PowerSystem, backend: &dyn Backend, opts: &MipOptions) -> Result<DaSolution> {
    let da = build_da_model(sys);
    let res = backend.solve_mip(&da.model, opts, None)?;
    require_solution(&res, "solving the day-ahead SCUC")?;
    if !res.is_optimal() {
        log::warn!("day-ahead SCUC stopped with status {}; returning incumbent", res.status);
    }
    Ok(DaSolution { schedule: da.schedule_from(&res.x), dispatch: da.dispatch_from(sys, &res), mip_gap: res.mip_gap })
}

/// LMPs and payments from the day-ahead LP with commitment fixed.
#[derive(Debug, Clone, Serialize)]
pub struct DaPricing {
    /// `[bus][hour]`, $/MWh
    pub lmp: Vec<Vec<f64>>,
    /// LMP times forecast load, `[bus][hour]`
    pub payment: Vec<Vec<f64>>,
    pub total_payment: f64,
    pub dispatch: DaDispatch,
}

impl DaPricing {
    /// The dispatch files plus `lmp.csv` and `payment.csv`.
    pub fn write_dir(&self, sys: &PowerSystem, dir: &Path) -> Result<()> {
        self.dispatch.write_dir(sys, dir)?;
        let buses: Vec<String> = sys.buses().iter().map(|b| b.id.clone()).collect();
        write_series(&dir.join("lmp.csv"), "bus", "hour", &buses, &self.lmp)?;
        write_series(&dir.join("payment.csv"), "bus", "hour", &buses, &self.payment)
    }
}

/// Re-solves the DA model as an LP with commitment pinned to `fixed`.
pub fn da_pricing_run(sys: &PowerSystem, fixed: &CommitmentSchedule, backend: &dyn Backend) -> Result<DaPricing> {
    fixed.check_dims(sys)?;
    let mut da = build_da_model(sys);
    da.fix_schedule(fixed);
    let res = backend.solve_lp(&da.model)?;
    if !res.is_optimal() {
        return Err(Error::status(res.status, "pricing run with fixed commitment"));
    }
    let lmp: Vec<Vec<f64>> = da
        .block
        .balance
        .iter()
        .map(|rows| rows.iter().map(|&r| res.dual(r).expect("LP duals")).collect())
        .collect();
    let payment: Vec<Vec<f64>> = lmp
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().map(|(t, l)| l * sys.da_load(i, t)).collect())
        .collect();
    let total_payment = payment.iter().flatten().sum();
    Ok(DaPricing { lmp, payment, total_payment, dispatch: da.dispatch_from(sys, &res) })
}
