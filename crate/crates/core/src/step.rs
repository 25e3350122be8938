//! Step measures on SL(2,ℝ) in KAK form and their diagnostics.
//!
//! A step is `k′ · a_t · k` with `t` drawn from the radial measure, `k`
//! Haar-distributed on SO(2) and `k′` drawn from the left factor, so every
//! measure built here is right SO(2)-invariant by construction.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng::SeedKey;
use crate::sl2::{reduce_angle, GroupElement, KAKForm};
use crate::stats::{line_fit, Estimate, RunningStats};

/// Default truncation of exponential radial tails, in flow-time units.
pub const DEFAULT_TRUNCATION: f64 = 40.0;

/// The radial measure η on flow times `t ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialMeasure {
    Atom { t: f64 },
    FiniteAtoms { atoms: Vec<(f64, f64)> },
    /// Density ∝ `rate·e^{−rate·t}` on `[0, truncation]`; `None` means untruncated.
    ExponentialTail { rate: f64, truncation: Option<f64> },
    Uniform { min: f64, max: f64 },
}

impl RadialMeasure {
    pub fn atom(t: f64) -> Self {
        RadialMeasure::Atom { t }
    }

    pub fn uniform(min: f64, max: f64) -> Self {
        RadialMeasure::Uniform { min, max }
    }

    pub fn exponential(rate: f64) -> Self {
        RadialMeasure::ExponentialTail {
            rate,
            truncation: Some(DEFAULT_TRUNCATION),
        }
    }

    /// Build from the config representation: a kind name and a flat list of
    /// numbers (`atom: [t]`, `finite_atoms: [t₁, w₁, t₂, w₂, …]`,
    /// `exponential_tail: [rate]` or `[rate, T]` with `T = inf` allowed,
    /// `uniform: [min, max]`).
    pub fn from_params(kind: &str, params: &[f64]) -> Result<Self> {
        let bad = |msg: &str| Err(Error::InvalidDistribution(format!("{kind}: {msg}")));
        let m = match kind {
            "atom" => match params {
                [t] => RadialMeasure::Atom { t: *t },
                _ => return bad("expects [t]"),
            },
            "finite_atoms" => {
                if params.is_empty() || params.len() % 2 != 0 {
                    return bad("expects [t1, w1, t2, w2, ...]");
                }
                RadialMeasure::FiniteAtoms {
                    atoms: params.chunks_exact(2).map(|p| (p[0], p[1])).collect(),
                }
            }
            "exponential_tail" => match params {
                [rate] => RadialMeasure::exponential(*rate),
                [rate, t] => RadialMeasure::ExponentialTail {
                    rate: *rate,
                    truncation: if t.is_infinite() { None } else { Some(*t) },
                },
                _ => return bad("expects [rate] or [rate, truncation]"),
            },
            "uniform" => match params {
                [a, b] => RadialMeasure::Uniform { min: *a, max: *b },
                _ => return bad("expects [min, max]"),
            },
            other => {
                return Err(Error::InvalidDistribution(format!(
                    "unknown radial kind `{other}`"
                )))
            }
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::InvalidDistribution(m));
        match self {
            RadialMeasure::Atom { t } => {
                if !(t.is_finite() && *t >= 0.0) {
                    return err(format!("atom time {t} must be finite and ≥ 0"));
                }
            }
            RadialMeasure::FiniteAtoms { atoms } => {
                if atoms.is_empty() {
                    return err("no atoms".into());
                }
                let mut total = 0.0;
                for &(t, w) in atoms {
                    if !(t.is_finite() && t >= 0.0) || !(w.is_finite() && w >= 0.0) {
                        return err(format!("bad atom ({t}, {w})"));
                    }
                    total += w;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return err(format!("weights sum to {total}, not 1"));
                }
            }
            RadialMeasure::ExponentialTail { rate, truncation } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return err(format!("rate {rate} must be > 0"));
                }
                if let Some(t) = truncation {
                    if !(t.is_finite() && *t > 0.0) {
                        return err(format!("truncation {t} must be > 0"));
                    }
                }
            }
            RadialMeasure::Uniform { min, max } => {
                if !(min.is_finite() && max.is_finite() && *min >= 0.0 && max >= min) {
                    return err(format!("uniform bounds [{min}, {max}] invalid"));
                }
            }
        }
        Ok(())
    }

    /// η({0}).
    pub fn mass_at_zero(&self) -> f64 {
        match self {
            RadialMeasure::Atom { t } => (*t == 0.0) as u8 as f64,
            RadialMeasure::FiniteAtoms { atoms } => {
                atoms.iter().filter(|(t, _)| *t == 0.0).map(|(_, w)| w).sum()
            }
            RadialMeasure::ExponentialTail { .. } => 0.0,
            RadialMeasure::Uniform { min, max } => (*min == 0.0 && *max == 0.0) as u8 as f64,
        }
    }

    /// Number of atoms; continuous measures count as a single component.
    pub fn components(&self) -> usize {
        match self {
            RadialMeasure::FiniteAtoms { atoms } => atoms.len(),
            _ => 1,
        }
    }

    /// Draw `(t, component index)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, usize) {
        match self {
            RadialMeasure::Atom { t } => (*t, 0),
            RadialMeasure::FiniteAtoms { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, &(t, w)) in atoms.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        return (t, i);
                    }
                }
                let last = atoms.len() - 1;
                (atoms[last].0, last)
            }
            RadialMeasure::ExponentialTail { rate, truncation } => {
                let u: f64 = rng.random();
                let span = match truncation {
                    Some(t) => -(-rate * t).exp_m1(),
                    None => 1.0,
                };
                (-(-u * span).ln_1p() / rate, 0)
            }
            RadialMeasure::Uniform { min, max } => {
                let u: f64 = rng.random();
                (min + u * (max - min), 0)
            }
        }
    }

    /// Cumulative distribution function of η.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            RadialMeasure::Atom { t } => (x >= *t) as u8 as f64,
            RadialMeasure::FiniteAtoms { atoms } => {
                atoms.iter().filter(|(t, _)| x >= *t).map(|(_, w)| w).sum()
            }
            RadialMeasure::ExponentialTail { rate, truncation } => {
                if x <= 0.0 {
                    return 0.0;
                }
                let num = -(-rate * x).exp_m1();
                match truncation {
                    Some(t) if x >= *t => 1.0,
                    Some(t) => num / -(-rate * t).exp_m1(),
                    None => num,
                }
            }
            RadialMeasure::Uniform { min, max } => {
                if x < *min {
                    0.0
                } else if x >= *max {
                    1.0
                } else {
                    (x - min) / (max - min)
                }
            }
        }
    }
}

/// Law of the left rotation factor `k′`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LeftFactor {
    /// Haar on SO(2): the bi-invariant case.
    Haar,
    /// One fixed angle per radial component (a single angle for continuous η).
    Fixed { angles: Vec<f64> },
}

/// A right SO(2)-invariant step measure μ = ∫ μ_{K,t} ∗ δ_{a_t} ∗ m_K dη(t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDistribution {
    pub radial: RadialMeasure,
    pub left: LeftFactor,
    pub moment_exponent: f64,
}

impl StepDistribution {
    pub fn new(radial: RadialMeasure, left: LeftFactor, moment_exponent: f64) -> Result<Self> {
        radial.validate()?;
        if let LeftFactor::Fixed { angles } = &left {
            if angles.len() != radial.components() {
                return Err(Error::InvalidDistribution(format!(
                    "left factor has {} angles but the radial measure has {} components",
                    angles.len(),
                    radial.components()
                )));
            }
            if angles.iter().any(|a| !a.is_finite()) {
                return Err(Error::InvalidDistribution("non-finite left angle".into()));
            }
        }
        if !(moment_exponent > 0.0 && moment_exponent < 1.0) {
            return Err(Error::InvalidDistribution(format!(
                "moment exponent {moment_exponent} must lie in (0, 1)"
            )));
        }
        Ok(Self {
            radial,
            left,
            moment_exponent,
        })
    }

    /// SO(2)-bi-invariant measure with the given radial part and δ = 1/2.
    pub fn bi_invariant(radial: RadialMeasure) -> Self {
        Self::new(radial, LeftFactor::Haar, 0.5).expect("valid radial measure")
    }

    pub fn is_bi_invariant(&self) -> bool {
        matches!(self.left, LeftFactor::Haar)
    }

    /// Draw the KAK coordinates of one step.
    pub fn sample_kak<R: Rng + ?Sized>(&self, rng: &mut R) -> KAKForm {
        let (t, idx) = self.radial.sample(rng);
        let theta_post = rng.random::<f64>() * TAU;
        let theta_pre = match &self.left {
            LeftFactor::Haar => rng.random::<f64>() * TAU,
            LeftFactor::Fixed { angles } => reduce_angle(angles[idx]),
        };
        KAKForm {
            theta_pre,
            t,
            theta_post,
        }
    }

    /// One step `k′ · a_t · k` distributed according to μ.
    pub fn sample_step<R: Rng + ?Sized>(&self, rng: &mut R) -> GroupElement {
        self.sample_kak(rng).recompose()
    }

    /// `g_m ⋯ g_1` for independent steps, distributed as μ^{∗m}.
    pub fn sample_convolution_power<R: Rng + ?Sized>(
        &self,
        m: usize,
        rng: &mut R,
    ) -> Result<GroupElement> {
        if m == 0 {
            return Err(Error::Precondition("convolution power needs m ≥ 1".into()));
        }
        let mut acc = self.sample_step(rng);
        for _ in 1..m {
            acc = self.sample_step(rng).compose(&acc)?;
        }
        Ok(acc)
    }

    /// `ln ‖g_m ⋯ g_1‖` computed with rescaling so long products never overflow.
    pub fn sample_log_norm_of_product<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> f64 {
        let mut p = [1.0, 0.0, 0.0, 1.0];
        let mut log_scale = 0.0;
        for _ in 0..m {
            let g = self.sample_step(rng).entries();
            p = [
                g[0] * p[0] + g[1] * p[2],
                g[0] * p[1] + g[1] * p[3],
                g[2] * p[0] + g[3] * p[2],
                g[2] * p[1] + g[3] * p[3],
            ];
            let s = p.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if s > 1e50 || s < 1e-50 {
                p.iter_mut().for_each(|v| *v /= s);
                log_scale += s.ln();
            }
        }
        // Largest singular value of a general 2×2 matrix.
        let frob = p.iter().map(|v| v * v).sum::<f64>();
        let det = (p[0] * p[3] - p[1] * p[2]).abs();
        let disc = (frob * frob - 4.0 * det * det).max(0.0).sqrt();
        0.5 * ((frob + disc) / 2.0).ln() + log_scale
    }
}

/// Monte Carlo estimate of `∫ ‖g‖^δ dμ` with a divergence flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub delta: f64,
    pub estimate: Estimate,
    /// Means over disjoint dyadic blocks of the sample stream.
    pub block_means: Vec<f64>,
    /// Trend of `ln(block mean)` per dyadic block and its standard error.
    pub log_trend: f64,
    pub log_trend_se: f64,
    /// Hill estimate of the tail index of `‖g‖^δ` from the top `√n` values.
    pub tail_index: f64,
    pub likely_infinite: bool,
}

const FIRST_BLOCK: usize = 64;
const MIN_TREND: f64 = 0.05;

/// Monte Carlo mean of `operator_norm(g)^δ` over `n` steps.
///
/// Divergence rule: the samples are cut into disjoint blocks of doubling
/// size. For a finite moment the block means scatter around one value; for
/// an infinite one they grow with the block size. The moment is flagged
/// when `ln(block mean)` increases across the blocks by more than three
/// standard errors of the fitted trend (and by a non-negligible amount),
/// or when the Hill estimate of the tail index of the sampled values is
/// below one by more than two standard errors.
pub fn exponential_moment_estimate(
    dist: &StepDistribution,
    delta: f64,
    n: usize,
    key: SeedKey,
) -> Result<MomentEstimate> {
    if !(delta > 0.0) {
        return Err(Error::Precondition(format!("delta {delta} must be > 0")));
    }
    if n < 1000 {
        return Err(Error::Precondition(format!("need n ≥ 1000 samples, got {n}")));
    }
    let mut rng = key.rng();
    let values: Vec<f64> = (0..n)
        .map(|_| dist.sample_step(&mut rng).operator_norm().powf(delta))
        .collect();
    let overall: RunningStats = values.iter().copied().collect();

    let mut block_means = Vec::new();
    let (mut start, mut len) = (0usize, FIRST_BLOCK);
    while start + len <= n {
        block_means.push(values[start..start + len].iter().sum::<f64>() / len as f64);
        start += len;
        len *= 2;
    }
    let (log_trend, log_trend_se) = if block_means.len() >= 3 {
        let xs: Vec<f64> = (0..block_means.len()).map(|i| i as f64).collect();
        let ys: Vec<f64> = block_means.iter().map(|m| m.ln()).collect();
        match line_fit(&xs, &ys) {
            Some(f) => (f.slope, f.slope_se),
            None => (0.0, 0.0),
        }
    } else {
        (0.0, 0.0)
    };
    let finite_trend = log_trend.is_finite() && log_trend_se.is_finite();
    let tail_index = hill_tail_index(&values);
    let k = (n as f64).sqrt().floor();
    let likely_infinite = !overall.mean().is_finite()
        || (finite_trend && log_trend > MIN_TREND && log_trend > 3.0 * log_trend_se)
        || tail_index * (1.0 + 2.0 / k.sqrt()) < 1.0;
    Ok(MomentEstimate {
        delta,
        estimate: overall.estimate(),
        block_means,
        log_trend,
        log_trend_se,
        tail_index,
        likely_infinite,
    })
}

/// Hill estimator on the largest `⌊√n⌋` values; infinite for a flat top.
fn hill_tail_index(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite() && *x > 0.0).collect();
    let k = (v.len() as f64).sqrt() as usize;
    if k < 2 {
        return f64::INFINITY;
    }
    v.sort_by(|a, b| b.total_cmp(a));
    let base = v[k].ln();
    let mean = v[..k].iter().map(|x| x.ln() - base).sum::<f64>() / k as f64;
    if mean > 0.0 {
        1.0 / mean
    } else {
        f64::INFINITY
    }
}

/// Outcome of the admissibility checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub atom_at_zero: bool,
    pub power: usize,
    pub local_dimension_estimate: f64,
}

/// Two-scale nearest-neighbour dimension estimate of a point cloud in ℝ⁴.
///
/// Nearest-neighbour distances scale like `N^{−1/d}`, so comparing the mean
/// log distance from fixed query points to the full reference set and to a
/// subset of `1/8` of its size gives `d = ln 8 / Δ(mean ln r)`.
pub fn two_scale_dimension(reference: &[[f64; 4]], queries: &[[f64; 4]]) -> f64 {
    const RATIO: usize = 8;
    let sub = &reference[..reference.len() / RATIO];
    let nn = |set: &[[f64; 4]], q: &[f64; 4]| {
        set.iter()
            .map(|p| (0..4).map(|i| (p[i] - q[i]).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    };
    let mut full = 0.0;
    let mut part = 0.0;
    let mut used = 0usize;
    for q in queries {
        let (rf, rs) = (nn(reference, q), nn(sub, q));
        if rf > 0.0 && rs > 0.0 {
            full += rf.ln();
            part += rs.ln();
            used += 1;
        }
    }
    if used == 0 {
        return 0.0;
    }
    let gap = (part - full) / used as f64;
    if gap <= 0.0 {
        return 0.0;
    }
    (RATIO as f64).ln() / gap
}

/// Checks `η({0}) = 0` and estimates the local dimension of μ^{∗k} in the
/// three-dimensional group (≈ 3 once the convolution power is absolutely
/// continuous).
pub fn admissibility_diagnostic(
    dist: &StepDistribution,
    power: usize,
    n: usize,
    key: SeedKey,
) -> Result<AdmissibilityReport> {
    if power == 0 {
        return Err(Error::Precondition("power k must be ≥ 1".into()));
    }
    if n < 800 {
        return Err(Error::Precondition(format!("need n ≥ 800 samples, got {n}")));
    }
    let mut rng = key.rng();
    let queries_n = (n / 20).clamp(50, 500);
    let mut draw = || dist.sample_convolution_power(power, &mut rng).map(|g| g.entries());
    let reference = (0..n).map(|_| draw()).collect::<Result<Vec<_>>>()?;
    let queries = (0..queries_n).map(|_| draw()).collect::<Result<Vec<_>>>()?;
    Ok(AdmissibilityReport {
        atom_at_zero: dist.radial.mass_at_zero() > 0.0,
        power,
        local_dimension_estimate: two_scale_dimension(&reference, &queries),
    })
}

/// Mean of `(1/n) ln ‖g_n ⋯ g_1‖` over independent walkers, with a 95% CI.
pub fn top_lyapunov_estimate(
    dist: &StepDistribution,
    n: usize,
    walkers: usize,
    key: SeedKey,
) -> Result<Estimate> {
    if n < 1000 {
        return Err(Error::Precondition(format!("need n ≥ 1000 steps, got {n}")));
    }
    if walkers < 2 {
        return Err(Error::Precondition("need at least two walkers".into()));
    }
    let per_walker = par::map_indexed(walkers, |w| {
        let mut rng = key.child(w as u64).rng();
        dist.sample_log_norm_of_product(n, &mut rng) / n as f64
    });
    Ok(per_walker.into_iter().collect::<RunningStats>().estimate())
}

/// η̂^{(m)}([0, t₀]): fraction of m-step products with `ln ‖g‖ ≤ t₀`.
pub fn short_excursion_probability(
    dist: &StepDistribution,
    m: usize,
    t0: f64,
    samples: usize,
    key: SeedKey,
) -> f64 {
    let hits: usize = par::map_chunks(samples, 1024, |range| {
        range
            .filter(|&i| {
                let mut rng = key.child(i as u64).rng();
                dist.sample_log_norm_of_product(m, &mut rng) <= t0
            })
            .count()
    })
    .into_iter()
    .sum();
    hits as f64 / samples as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_round_trip_and_errors() {
        assert_eq!(
            RadialMeasure::from_params("atom", &[1.0]).unwrap(),
            RadialMeasure::atom(1.0)
        );
        assert!(RadialMeasure::from_params("atom", &[-1.0]).is_err());
        assert!(RadialMeasure::from_params("finite_atoms", &[1.0, 0.5, 2.0, 0.4]).is_err());
        assert!(RadialMeasure::from_params("finite_atoms", &[1.0, 0.5, 2.0, 0.5]).is_ok());
        assert_eq!(
            RadialMeasure::from_params("exponential_tail", &[1.0, f64::INFINITY]).unwrap(),
            RadialMeasure::ExponentialTail {
                rate: 1.0,
                truncation: None
            }
        );
        assert!(RadialMeasure::from_params("uniform", &[1.0, 0.5]).is_err());
        assert!(RadialMeasure::from_params("gamma", &[1.0]).is_err());
    }

    #[test]
    fn fixed_left_factor_must_match_components() {
        let r = RadialMeasure::FiniteAtoms {
            atoms: vec![(1.0, 0.5), (2.0, 0.5)],
        };
        assert!(StepDistribution::new(r.clone(), LeftFactor::Fixed { angles: vec![0.1] }, 0.5).is_err());
        assert!(StepDistribution::new(r, LeftFactor::Fixed { angles: vec![0.1, 0.2] }, 0.5).is_ok());
        assert!(StepDistribution::new(RadialMeasure::atom(1.0), LeftFactor::Haar, 1.0).is_err());
    }

    #[test]
    fn mass_at_zero() {
        assert_eq!(RadialMeasure::atom(0.0).mass_at_zero(), 1.0);
        assert_eq!(RadialMeasure::atom(0.5).mass_at_zero(), 0.0);
        let r = RadialMeasure::FiniteAtoms {
            atoms: vec![(0.0, 0.25), (2.0, 0.75)],
        };
        assert_eq!(r.mass_at_zero(), 0.25);
    }

    #[test]
    fn truncated_exponential_stays_below_truncation() {
        let r = RadialMeasure::ExponentialTail {
            rate: 0.01,
            truncation: Some(3.0),
        };
        let mut rng = SeedKey::new(1).rng();
        for _ in 0..10_000 {
            let (t, _) = r.sample(&mut rng);
            assert!((0.0..=3.0).contains(&t));
        }
        assert_eq!(r.cdf(3.0), 1.0);
    }

    #[test]
    fn dimension_estimator_on_synthetic_manifolds() {
        // Flat 2-torus embedded in ℝ⁴ as (cos u, sin u, cos v, sin v).
        let mut rng = SeedKey::new(3).rng();
        let mut torus = || {
            let (u, v) = (rng.random::<f64>() * TAU, rng.random::<f64>() * TAU);
            [u.cos(), u.sin(), v.cos(), v.sin()]
        };
        let reference: Vec<_> = (0..16_000).map(|_| torus()).collect();
        let queries: Vec<_> = (0..400).map(|_| torus()).collect();
        let d = two_scale_dimension(&reference, &queries);
        assert!((d - 2.0).abs() < 0.25, "torus dimension {d}");

        let mut rng = SeedKey::new(4).rng();
        let mut cube = || {
            let mut p = [0.0; 4];
            for v in p.iter_mut().take(3) {
                *v = rng.random::<f64>();
            }
            p
        };
        let reference: Vec<_> = (0..16_000).map(|_| cube()).collect();
        let queries: Vec<_> = (0..400).map(|_| {
            let mut q = cube();
            q.iter_mut().take(3).for_each(|v| *v = 0.25 + 0.5 * *v);
            q
        }).collect();
        let d = two_scale_dimension(&reference, &queries);
        assert!((d - 3.0).abs() < 0.35, "cube dimension {d}");
    }
}
