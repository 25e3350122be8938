//! Nested Monte Carlo for the convolution operator on mean-zero functions:
//! decay rate estimates, the pointwise tail bound and Cesàro against
//! instantaneous averages.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::drift::inner_walk_stats;
use crate::error::{Error, Result};
use crate::par;
use crate::rng::SeedKey;
use crate::space::{ObsFn, Observation, Point, Space};
use crate::stats::{weighted_line_fit, Estimate, RunningStats, Z95};
use crate::step::StepDistribution;

/// A named bounded function of the observation vector.
#[derive(Clone)]
pub struct Observable {
    pub name: String,
    pub f: ObsFn,
}

impl fmt::Debug for Observable {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(out, "Observable({})", self.name)
    }
}

impl Observable {
    pub fn new(name: &str, f: impl Fn(&Observation) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.to_string(),
            f: Arc::new(f),
        }
    }

    /// `min(systole, 1)^p`.
    pub fn systole_power(p: f64) -> Self {
        Self::new(&format!("min(systole,1)^{p}"), move |o| o.systole.min(1.0).powf(p))
    }

    pub fn eval(&self, x: &Point) -> f64 {
        (self.f)(&x.observe())
    }
}

/// An observable together with its reference mean and the L² norm of
/// `f − ∫f`.
#[derive(Debug, Clone)]
pub struct CenteredObservable {
    pub observable: Observable,
    pub mean: Estimate,
    pub norm: f64,
}

pub const MIN_REFERENCE: usize = 10_000;

/// Centre `obs` on a reference sample of at least 10⁴ points.
pub fn centered_observable(obs: Observable, reference: &[Point]) -> Result<CenteredObservable> {
    if reference.len() < MIN_REFERENCE {
        return Err(Error::Precondition(format!(
            "need at least 10⁴ reference points, got {}",
            reference.len()
        )));
    }
    let values = par::map_indexed(reference.len(), |i| obs.eval(&reference[i]));
    let stats: RunningStats = values.into_iter().collect();
    Ok(CenteredObservable {
        observable: obs,
        mean: stats.estimate(),
        norm: stats.std_dev(),
    })
}

/// Independent draws from the reference measure, one stream per point.
pub fn reference_points(space: &Space, n: usize, key: SeedKey) -> Result<Vec<Point>> {
    par::map_indexed(n, |i| space.sample_reference(&mut key.child(i as u64).rng()))
        .into_iter()
        .collect()
}

/// Per-outer-point means `m_{j,n}` and variances `s²_{j,n}`, `n = 0..=n_max`.
struct Nested {
    means: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
}

fn nested_walks(
    obs: &Observable,
    dist: &StepDistribution,
    outer: &[Point],
    n_max: usize,
    n_inner: usize,
    key: SeedKey,
) -> Result<Nested> {
    let f = |p: &Point| obs.eval(p);
    let per = par::map_indexed(outer.len(), |j| {
        inner_walk_stats(&f, dist, &outer[j], n_max, n_inner, key.child(j as u64))
    });
    let mut means = Vec::with_capacity(outer.len());
    let mut vars = Vec::with_capacity(outer.len());
    for p in per {
        let p = p?;
        means.push(p.iter().map(|s| s.mean()).collect());
        vars.push(p.iter().map(|s| s.variance()).collect());
    }
    Ok(Nested { means, vars })
}

/// Estimated `‖π(μ)^n f₀‖²` over a set of outer points, with the inner
/// Monte Carlo variance and the variance of the centring mean removed.
fn squared_norms(nested: &Nested, rows: &[usize], mean: &Estimate, n_inner: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let steps = nested.means[0].len();
    let bias = mean.sigma().powi(2);
    let mut raw = vec![0.0; steps];
    let mut corrected = vec![0.0; steps];
    let mut se = vec![0.0; steps];
    for n in 0..steps {
        let per: RunningStats = rows
            .iter()
            .map(|&j| {
                (nested.means[j][n] - mean.value).powi(2) - nested.vars[j][n] / n_inner as f64 - bias
            })
            .collect();
        let r: RunningStats = rows
            .iter()
            .map(|&j| (nested.means[j][n] - mean.value).powi(2))
            .collect();
        raw[n] = r.mean();
        corrected[n] = per.mean();
        se[n] = per.std_err();
    }
    (raw, corrected, se)
}

fn log_slope(corrected: &[f64], se: &[f64], window: usize) -> Option<f64> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    for n in 1..=window {
        if corrected[n] <= 0.0 {
            return None;
        }
        x.push(n as f64);
        y.push(corrected[n].ln());
        let rel = se[n] / corrected[n];
        w.push(1.0 / (rel * rel).max(1e-12));
    }
    weighted_line_fit(&x, &y, &w).map(|f| f.slope)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayEstimate {
    pub observable: String,
    pub rho_hat: f64,
    /// Jackknife 95% half-width.
    pub ci: f64,
    /// Fit uses `n = 1..=window`.
    pub window: usize,
    pub e2_raw: Vec<f64>,
    pub e2: Vec<f64>,
    pub e2_se: Vec<f64>,
    pub n_outer: usize,
    pub n_inner: usize,
    pub gap: bool,
}

pub const JACKKNIFE_BATCHES: usize = 10;

/// Fit `‖π(μ)^n f₀‖² ≈ C·ρ^{2n}` on the steps where the estimate stands
/// three standard errors above zero.
pub fn decay_estimate(
    f: &CenteredObservable,
    dist: &StepDistribution,
    outer: &[Point],
    n_max: usize,
    n_inner: usize,
    key: SeedKey,
) -> Result<DecayEstimate> {
    if outer.len() < 2 * JACKKNIFE_BATCHES {
        return Err(Error::Precondition(format!(
            "need at least {} outer points",
            2 * JACKKNIFE_BATCHES
        )));
    }
    if n_max < 3 || n_inner < 2 {
        return Err(Error::Precondition("need n_max ≥ 3 and n_inner ≥ 2".into()));
    }
    let nested = nested_walks(&f.observable, dist, outer, n_max, n_inner, key)?;
    let all: Vec<usize> = (0..outer.len()).collect();
    let (raw, e2, se) = squared_norms(&nested, &all, &f.mean, n_inner);
    let window = (1..=n_max)
        .take_while(|&n| e2[n] > 3.0 * se[n])
        .last()
        .unwrap_or(0);
    if window < 3 {
        return Err(Error::NoiseFloor { last_usable: window });
    }
    let slope = log_slope(&e2, &se, window)
        .ok_or_else(|| Error::IllConditioned("decay fit failed".into()))?;
    let rho = (slope / 2.0).exp();
    let mut reps = Vec::with_capacity(JACKKNIFE_BATCHES);
    for b in 0..JACKKNIFE_BATCHES {
        let rows: Vec<usize> = all.iter().copied().filter(|j| j % JACKKNIFE_BATCHES != b).collect();
        let (_, e, s) = squared_norms(&nested, &rows, &f.mean, n_inner);
        let s = log_slope(&e, &s, window)
            .ok_or_else(|| Error::IllConditioned("jackknife replicate has a non-positive norm".into()))?;
        reps.push((s / 2.0).exp());
    }
    let mean = reps.iter().sum::<f64>() / reps.len() as f64;
    let g = JACKKNIFE_BATCHES as f64;
    let var = (g - 1.0) / g * reps.iter().map(|r| (r - mean).powi(2)).sum::<f64>();
    let ci = Z95 * var.sqrt();
    Ok(DecayEstimate {
        observable: f.observable.name.clone(),
        rho_hat: rho,
        ci,
        window,
        e2_raw: raw,
        e2,
        e2_se: se,
        n_outer: outer.len(),
        n_inner,
        gap: rho + ci < 1.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub n: usize,
    pub budget: f64,
    pub flagged_fraction: f64,
    pub sigma: f64,
    pub vacuous: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailBoundReport {
    pub alpha: f64,
    pub rho_hat: f64,
    pub look_ahead: usize,
    pub n_outer: usize,
    pub n_inner: usize,
    pub rows: Vec<TailRow>,
}

/// Settings of the tail-bound experiment.
#[derive(Debug, Clone)]
pub struct TailBoundConfig {
    pub ns: Vec<usize>,
    /// Defaults to `(ρ̂ + 1)/2`.
    pub alpha: Option<f64>,
    /// Each point is checked on `n′ ∈ [n, n + look_ahead]`.
    pub look_ahead: usize,
    pub n_inner: usize,
}

/// For each `n`, the fraction of starting points where some
/// `n′ ∈ [n, n + W]` has `|π̂^{n′}f(x) − ∫f| ≥ α^{n′/2}‖f₀‖ + 3·se`,
/// against the budget `αⁿ/(1 − α)`.
pub fn tail_bound_check(
    f: &CenteredObservable,
    dist: &StepDistribution,
    outer: &[Point],
    rho_hat: f64,
    cfg: &TailBoundConfig,
    key: SeedKey,
) -> Result<TailBoundReport> {
    let alpha = cfg.alpha.unwrap_or((rho_hat + 1.0) / 2.0);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Precondition(format!("alpha {alpha} must lie in (0, 1)")));
    }
    if alpha.sqrt() < rho_hat {
        return Err(Error::AlphaBelowDecay {
            alpha_sqrt: alpha.sqrt(),
            rho: rho_hat,
        });
    }
    if outer.is_empty() || cfg.ns.is_empty() || cfg.n_inner < 2 {
        return Err(Error::Precondition("empty tail-bound experiment".into()));
    }
    let n_max = cfg.ns.iter().max().copied().unwrap_or(0) + cfg.look_ahead;
    let nested = nested_walks(&f.observable, dist, outer, n_max, cfg.n_inner, key)?;
    let rows = cfg
        .ns
        .iter()
        .map(|&n| {
            let flagged = (0..outer.len())
                .filter(|&j| {
                    (n..=n + cfg.look_ahead).any(|k| {
                        let se = (nested.vars[j][k] / cfg.n_inner as f64).sqrt();
                        (nested.means[j][k] - f.mean.value).abs()
                            >= alpha.powf(k as f64 / 2.0) * f.norm + 3.0 * se
                    })
                })
                .count();
            let frac = flagged as f64 / outer.len() as f64;
            let budget = alpha.powi(n as i32) / (1.0 - alpha);
            let p = budget.min(1.0);
            let sigma = (p * (1.0 - p) / outer.len() as f64).sqrt();
            let vacuous = budget >= 1.0;
            TailRow {
                n,
                budget,
                flagged_fraction: frac,
                sigma,
                vacuous,
                pass: vacuous || frac <= budget + 3.0 * sigma,
            }
        })
        .collect();
    Ok(TailBoundReport {
        alpha,
        rho_hat,
        look_ahead: cfg.look_ahead,
        n_outer: outer.len(),
        n_inner: cfg.n_inner,
        rows,
    })
}

/// Instantaneous mean `E f(x_k)` and Cesàro mean `(1/k) Σ_{i<k} E f(x_i)`
/// for `k = 1..=n`, over `walkers` walks from `x0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSeries {
    pub instant: Vec<Estimate>,
    pub cesaro: Vec<f64>,
}

pub fn cesaro_vs_instant(
    obs: &Observable,
    dist: &StepDistribution,
    x0: &Point,
    n: usize,
    walkers: usize,
    key: SeedKey,
) -> Result<ModeSeries> {
    let f = |p: &Point| obs.eval(p);
    let stats = inner_walk_stats(&f, dist, x0, n, walkers, key)?;
    let mut cesaro = Vec::with_capacity(n);
    let mut sum = 0.0;
    for (k, s) in stats.iter().take(n).enumerate() {
        sum += s.mean();
        cesaro.push(sum / (k + 1) as f64);
    }
    Ok(ModeSeries {
        instant: stats[1..].iter().map(|s| s.estimate()).collect(),
        cesaro,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_size_is_enforced() {
        let pts = vec![Point::Lattice(crate::torus::LatticePoint::standard()); 10];
        assert!(centered_observable(Observable::systole_power(1.0), &pts).is_err());
    }

    #[test]
    fn alpha_below_decay_is_rejected() {
        let pts = reference_points(&Space::torus(), MIN_REFERENCE, SeedKey::new(1)).unwrap();
        let f = centered_observable(Observable::systole_power(1.0), &pts).unwrap();
        let dist = StepDistribution::bi_invariant(crate::step::RadialMeasure::atom(1.0));
        let cfg = TailBoundConfig {
            ns: vec![2],
            alpha: Some(0.25),
            look_ahead: 0,
            n_inner: 10,
        };
        let r = tail_bound_check(&f, &dist, &pts[..5], 0.65, &cfg, SeedKey::new(2));
        assert!(matches!(r, Err(Error::AlphaBelowDecay { .. })));
    }
}
