//! Network dispatch rows shared by the day-ahead, real-time and
//! scenario models.

use crate::solver::{Model, RowId, Sense, Var};
use crate::system::PowerSystem;

/// Commitment state of one (unit, hour): a decision variable or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum OnOff {
    Var(Var),
    Const(bool),
}

impl OnOff {
    fn value(self) -> Option<f64> {
        match self {
            OnOff::Const(b) => Some(if b { 1.0 } else { 0.0 }),
            OnOff::Var(_) => None,
        }
    }
}

/// Commitment indexed `[unit][hour]` over every DA hour.
pub(crate) struct CommitmentTerms<'a> {
    pub y: &'a [Vec<OnOff>],
    pub v: &'a [Vec<OnOff>],
    pub w: &'a [Vec<OnOff>],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RampScale {
    Hourly,
    RealTime,
}

/// Inputs for one block of consecutive periods.
pub(crate) struct BlockSpec<'a> {
    /// Parent DA hour of each period; consecutive entries differ by 0 or 1.
    pub period_hour: &'a [usize],
    /// `[bus][period]`
    pub load: &'a [Vec<f64>],
    /// `[farm][period]`
    pub wind_cap: &'a [Vec<f64>],
    pub voll: f64,
    pub ramp: RampScale,
    /// Objective multiplier on production and unmet-load costs.
    pub weight: f64,
}

/// Variables and balance rows of a built block, indexed `[entity][period]`.
#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub p: Vec<Vec<Var>>,
    pub h: Vec<Vec<Var>>,
    pub p_wind: Vec<Vec<Var>>,
    pub unmet: Vec<Vec<Var>>,
    pub theta: Vec<Vec<Var>>,
    pub flow: Vec<Vec<Var>>,
    pub balance: Vec<Vec<RowId>>,
}

fn add_term(terms: &mut Vec<(Var, f64)>, rhs: &mut f64, x: OnOff, coef: f64) {
    // moves constant commitment to the right-hand side
    match x {
        OnOff::Var(v) => terms.push((v, coef)),
        OnOff::Const(b) => {
            if b {
                *rhs -= coef;
            }
        }
    }
}

pub(crate) fn build_block(model: &mut Model, sys: &PowerSystem, commit: &CommitmentTerms, spec: &BlockSpec) -> Block {
    let n_per = spec.period_hour.len();
    let n_bus = sys.n_buses();
    let mut p = Vec::with_capacity(sys.n_thermal());
    let mut h = Vec::with_capacity(sys.n_thermal());

    for (g, gen) in sys.thermal().iter().enumerate() {
        let mut pg = Vec::with_capacity(n_per);
        let mut hg = Vec::with_capacity(n_per);
        for &hour in spec.period_hour {
            let y = commit.y[g][hour];
            let (var_p, var_h) = match y.value() {
                Some(on) => (
                    model.add_var(gen.p_min * on, gen.p_max * on, 0.0),
                    model.add_var(f64::NEG_INFINITY, f64::INFINITY, spec.weight),
                ),
                None => (
                    model.add_var(0.0, gen.p_max, 0.0),
                    model.add_var(f64::NEG_INFINITY, f64::INFINITY, spec.weight),
                ),
            };
            if let OnOff::Var(yv) = y {
                model.add_row(vec![(var_p, 1.0), (yv, -gen.p_max)], Sense::Le, 0.0);
                if gen.p_min > 0.0 {
                    model.add_row(vec![(var_p, 1.0), (yv, -gen.p_min)], Sense::Ge, 0.0);
                }
            }
            // h >= slope * p + intercept * y
            for seg in &gen.cost_segments {
                let mut terms = vec![(var_h, 1.0), (var_p, -seg.slope)];
                let mut rhs = 0.0;
                add_term(&mut terms, &mut rhs, y, -seg.intercept);
                model.add_row(terms, Sense::Ge, rhs);
            }
            pg.push(var_p);
            hg.push(var_h);
        }
        p.push(pg);
        h.push(hg);
    }

    for (g, gen) in sys.thermal().iter().enumerate() {
        let limit = match spec.ramp {
            RampScale::Hourly => gen.ramp_hourly.limit(),
            RampScale::RealTime => gen.ramp_rt.limit(),
        };
        let Some(m) = limit else { continue };
        for t in 1..n_per {
            let (a, b) = (spec.period_hour[t - 1], spec.period_hour[t]);
            let (prev, cur) = (p[g][t - 1], p[g][t]);
            let (ya, yb) = (commit.y[g][a], commit.y[g][b]);
            if let (Some(ua), Some(ub)) = (ya.value(), yb.value()) {
                // fixed commitment: full limit only while on in both periods
                let bound = if ua > 0.5 && ub > 0.5 { m } else { gen.p_min };
                model.add_row(vec![(cur, 1.0), (prev, -1.0)], Sense::Le, bound);
                model.add_row(vec![(prev, 1.0), (cur, -1.0)], Sense::Le, bound);
                continue;
            }
            // p_t - p_{t-1} <= M y_{t-1} + Pmin v_t
            let mut terms = vec![(cur, 1.0), (prev, -1.0)];
            let mut rhs = 0.0;
            add_term(&mut terms, &mut rhs, ya, -m);
            if a != b {
                add_term(&mut terms, &mut rhs, commit.v[g][b], -gen.p_min);
            }
            model.add_row(terms, Sense::Le, rhs);
            // p_{t-1} - p_t <= M y_t + Pmin w_t
            let mut terms = vec![(prev, 1.0), (cur, -1.0)];
            let mut rhs = 0.0;
            add_term(&mut terms, &mut rhs, yb, -m);
            if a != b {
                add_term(&mut terms, &mut rhs, commit.w[g][b], -gen.p_min);
            }
            model.add_row(terms, Sense::Le, rhs);
        }
    }

    let p_wind: Vec<Vec<Var>> = spec
        .wind_cap
        .iter()
        .map(|caps| caps.iter().map(|&c| model.add_var(0.0, c, 0.0)).collect())
        .collect();

    let unmet: Vec<Vec<Var>> = (0..n_bus)
        .map(|_| (0..n_per).map(|_| model.add_var(0.0, f64::INFINITY, spec.voll * spec.weight)).collect())
        .collect();

    let ref_bus = sys.ref_bus();
    let theta: Vec<Vec<Var>> = (0..n_bus)
        .map(|i| {
            (0..n_per)
                .map(|_| {
                    if i == ref_bus {
                        model.add_var(0.0, 0.0, 0.0)
                    } else {
                        model.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0)
                    }
                })
                .collect()
        })
        .collect();

    let mut flow = Vec::with_capacity(sys.lines().len());
    for (l, line) in sys.lines().iter().enumerate() {
        let (a, b) = sys.line_ends(l);
        let mut fl = Vec::with_capacity(n_per);
        for t in 0..n_per {
            let f = model.add_var(-line.capacity, line.capacity, 0.0);
            model.add_row(
                vec![(f, 1.0), (theta[a][t], -line.susceptance), (theta[b][t], line.susceptance)],
                Sense::Eq,
                0.0,
            );
            fl.push(f);
        }
        flow.push(fl);
    }

    let mut balance = Vec::with_capacity(n_bus);
    for i in 0..n_bus {
        let mut rows = Vec::with_capacity(n_per);
        for t in 0..n_per {
            let mut terms = vec![(unmet[i][t], 1.0)];
            for g in 0..sys.n_thermal() {
                if sys.thermal_bus(g) == i {
                    terms.push((p[g][t], 1.0));
                }
            }
            for w in 0..sys.n_wind() {
                if sys.wind_bus(w) == i {
                    terms.push((p_wind[w][t], 1.0));
                }
            }
            for (l, fl) in flow.iter().enumerate() {
                let (a, b) = sys.line_ends(l);
                if a == i {
                    terms.push((fl[t], -1.0));
                } else if b == i {
                    terms.push((fl[t], 1.0));
                }
            }
            rows.push(model.add_row(terms, Sense::Eq, spec.load[i][t]));
        }
        balance.push(rows);
    }

    Block { p, h, p_wind, unmet, theta, flow, balance }
}
