use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uncertainty::{StressorVector, UncertaintySet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum SampleMethod {
    /// Fixed-norm directions uniform on a spherical cap around `center`.
    Cone {
        angle: f64,
        center: StressorVector,
        /// One cap over all kinds and periods instead of one per (kind, period).
        #[serde(default)]
        joint: bool,
    },
    /// Independent `U[-R, R]` per mode, kind and period.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    #[serde(flatten)]
    pub method: SampleMethod,
    pub n_samples: usize,
    pub seed: u64,
}

pub fn default_cone_angle() -> f64 {
    std::f64::consts::FRAC_PI_3
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A unit vector orthogonal to the unit vector `u`.
fn orthogonal_direction<R: Rng>(u: &[f64], rng: &mut R) -> Vec<f64> {
    loop {
        let mut g: Vec<f64> = (0..u.len()).map(|_| StandardNormal.sample(rng)).collect();
        let p = dot(&g, u);
        g.iter_mut().zip(u).for_each(|(x, ui)| *x -= p * ui);
        let n = norm(&g);
        if n > 1e-12 {
            g.iter_mut().for_each(|x| *x /= n);
            return g;
        }
    }
}

/// Cosine of the angle to the axis for a point uniform on the cap of
/// half-angle `angle` in dimension `k ≥ 3`; density ∝ (1 - t²)^((k-3)/2).
fn cap_cosine<R: Rng>(k: usize, angle: f64, rng: &mut R) -> f64 {
    let lo = angle.cos();
    if k == 3 {
        return rng.random_range(lo..=1.0);
    }
    let exponent = (k as f64 - 3.0) / 2.0;
    let peak = if lo <= 0.0 { 0.0 } else { lo };
    let max_density = (1.0 - peak * peak).powf(exponent);
    loop {
        let t = rng.random_range(lo..=1.0);
        let accept = (1.0 - t * t).max(0.0).powf(exponent);
        if rng.random::<f64>() * max_density <= accept {
            return t;
        }
    }
}

/// A point at the norm of `center`, uniform on the cap of half-angle `angle` around it.
pub fn sample_cap<R: Rng>(center: &[f64], angle: f64, rng: &mut R) -> Vec<f64> {
    let r = norm(center);
    let k = center.len();
    if angle <= 0.0 || k == 1 {
        return center.to_vec();
    }
    let u: Vec<f64> = center.iter().map(|x| x / r).collect();
    let angle = angle.min(std::f64::consts::PI);
    if k == 2 {
        let phi = rng.random_range(-angle..=angle);
        let (s, c) = phi.sin_cos();
        return vec![r * (c * u[0] - s * u[1]), r * (s * u[0] + c * u[1])];
    }
    let t = cap_cosine(k, angle, rng);
    let v = orthogonal_direction(&u, rng);
    let s = (1.0 - t * t).max(0.0).sqrt();
    u.iter().zip(&v).map(|(a, b)| r * (t * a + s * b)).collect()
}

/// Draws `spec.n_samples` stressors from `uset`.
pub fn sample_stressors(uset: &UncertaintySet, spec: &SampleSpec) -> Result<Vec<StressorVector>> {
    if spec.n_samples == 0 {
        return Err(Error::InvalidOption("n_samples must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_per = uset.n_periods;
    match &spec.method {
        SampleMethod::Uniform => Ok((0..spec.n_samples)
            .map(|_| {
                let mut draw = |k: usize, r: f64| -> Vec<Vec<f64>> {
                    (0..k)
                        .map(|_| (0..n_per).map(|_| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 }).collect())
                        .collect()
                };
                let alpha_d = draw(uset.load.k(), uset.load.r);
                let alpha_w = draw(uset.wind.k(), uset.wind.r);
                StressorVector { alpha_d, alpha_w }
            })
            .collect()),
        SampleMethod::Cone { angle, center, joint } => {
            if !(*angle >= 0.0) {
                return Err(Error::InvalidOption("cone angle must be nonnegative".into()));
            }
            let shape_ok = center.alpha_d.len() == uset.load.k()
                && center.alpha_w.len() == uset.wind.k()
                && center.alpha_d.iter().chain(&center.alpha_w).all(|r| r.len() == n_per);
            if !shape_ok {
                return Err(Error::Dimension("cone center does not match the uncertainty set".into()));
            }
            if *joint {
                let flat: Vec<f64> = center.alpha_d.iter().chain(&center.alpha_w).flatten().copied().collect();
                if norm(&flat) == 0.0 {
                    return Err(Error::InvalidOption("cone sampling needs a nonzero center".into()));
                }
                return Ok((0..spec.n_samples)
                    .map(|_| {
                        let s = sample_cap(&flat, *angle, &mut rng);
                        let mut it = s.into_iter();
                        let mut take = |rows: usize| -> Vec<Vec<f64>> {
                            (0..rows).map(|_| it.by_ref().take(n_per).collect()).collect()
                        };
                        let alpha_d = take(uset.load.k());
                        let alpha_w = take(uset.wind.k());
                        StressorVector { alpha_d, alpha_w }
                    })
                    .collect());
            }
            for (load, k) in [(true, uset.load.k()), (false, uset.wind.k())] {
                if k == 0 {
                    continue;
                }
                for t in 0..n_per {
                    if norm(&center.column(load, t)) == 0.0 {
                        return Err(Error::InvalidOption(format!(
                            "cone sampling needs a nonzero center ({} stressors are zero in period {t})",
                            if load { "load" } else { "wind" }
                        )));
                    }
                }
            }
            Ok((0..spec.n_samples)
                .map(|_| {
                    let mut s = center.clone();
                    for load in [true, false] {
                        if (if load { uset.load.k() } else { uset.wind.k() }) == 0 {
                            continue;
                        }
                        for t in 0..n_per {
                            let col = sample_cap(&center.column(load, t), *angle, &mut rng);
                            s.set_column(load, t, &col);
                        }
                    }
                    s
                })
                .collect())
        }
    }
}
