//! Trajectories, the observable dictionary and the empirical-measure
//! comparisons built on it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::drift::{escape_monitor, EscapeTable, TailValue};
use crate::error::{Error, Result};
use crate::markov::Observable;
use crate::par;
use crate::rng::SeedKey;
use crate::sl2::GroupElement;
use crate::space::{Observation, Point, Space};
use crate::stats::RunningStats;
use crate::step::StepDistribution;
use crate::torus::reference_systole_cdf;

/// `n` observations along one walk; record 0 is the start.
pub fn run_walk(dist: &StepDistribution, x0: &Point, n: usize, key: SeedKey) -> Result<Vec<Observation>> {
    let mut rng = key.rng();
    let mut out = Vec::with_capacity(n);
    let mut x = x0.clone();
    for step in 0..n {
        if step > 0 {
            x = x.act(&dist.sample_step(&mut rng)).map_err(|e| Error::AtStep {
                step,
                source: Box::new(e),
            })?;
        }
        out.push(x.observe());
    }
    Ok(out)
}

/// A recorded walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub space: String,
    pub seed: u64,
    pub records: Vec<Observation>,
}

impl Trajectory {
    pub fn run(space: &Space, dist: &StepDistribution, n: usize, key: SeedKey) -> Result<Self> {
        Ok(Self {
            space: space.tag(),
            seed: key.seed(),
            records: run_walk(dist, &space.base_point(), n, key)?,
        })
    }
}

fn bump(u2: f64) -> f64 {
    if u2 < 1.0 {
        (1.0 - 1.0 / (1.0 - u2)).exp()
    } else {
        0.0
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub const BUMP_CENTRES_X: [f64; 4] = [-0.375, -0.125, 0.125, 0.375];
pub const BUMP_CENTRES_Y: [f64; 4] = [0.95, 1.3, 1.8, 2.6];
pub const SECOND_MIN_BANDS: [(f64, f64); 7] = [
    (0.25, 0.5),
    (0.5, 0.75),
    (0.75, 1.0),
    (1.0, 1.25),
    (1.25, 1.6),
    (1.6, 2.5),
    (2.5, 5.0),
];

/// A finite family of bounded observables used to compare measures.
#[derive(Debug, Clone)]
pub struct ObservableDictionary {
    pub members: Vec<Observable>,
}

impl ObservableDictionary {
    /// Systole powers, smooth bumps in the shape coordinates and smoothed
    /// bands of the second minimum.
    pub fn standard() -> Self {
        let mut members = Vec::new();
        for p in [0.5, 1.0, 2.0, 4.0] {
            members.push(Observable::systole_power(p));
        }
        for &yc in &BUMP_CENTRES_Y {
            for &xc in &BUMP_CENTRES_X {
                members.push(Observable::new(&format!("bump({xc},{yc})"), move |o| {
                    let dx = (o.shape_re - xc) / 0.25;
                    let dy = (o.shape_im / yc).ln() / 0.35;
                    bump(dx * dx + dy * dy)
                }));
            }
        }
        for &(a, b) in &SECOND_MIN_BANDS {
            members.push(Observable::new(&format!("band({a},{b})"), move |o| {
                logistic((o.second_min - a) / 0.05) * logistic((b - o.second_min) / 0.05)
            }));
        }
        Self { members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.members.iter().map(|m| m.name.clone()).collect()
    }

    pub fn eval_into(&self, o: &Observation, out: &mut [f64]) {
        for (v, m) in out.iter_mut().zip(&self.members) {
            *v = (m.f)(o);
        }
    }

    pub fn eval(&self, o: &Observation) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        self.eval_into(o, &mut v);
        v
    }
}

/// Integrals of the dictionary members against an empirical measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryMeans {
    pub values: Vec<f64>,
    pub se: Vec<f64>,
    pub count: usize,
}

impl DictionaryMeans {
    /// Largest standard error over the members.
    pub fn noise(&self) -> f64 {
        self.se.iter().copied().fold(0.0, f64::max)
    }
}

/// `max_i |∫f_i dA − ∫f_i dB|`.
pub fn dictionary_distance(a: &DictionaryMeans, b: &DictionaryMeans) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Means over independent observations.
pub fn iid_means(dict: &ObservableDictionary, obs: &[Observation]) -> DictionaryMeans {
    let mut acc = vec![RunningStats::new(); dict.len()];
    let mut buf = vec![0.0; dict.len()];
    for o in obs {
        dict.eval_into(o, &mut buf);
        for (a, v) in acc.iter_mut().zip(&buf) {
            a.push(*v);
        }
    }
    DictionaryMeans {
        values: acc.iter().map(|a| a.mean()).collect(),
        se: acc.iter().map(|a| a.std_err()).collect(),
        count: obs.len(),
    }
}

/// Dictionary means under the reference measure, from `n` independent draws.
pub fn reference_means(
    space: &Space,
    dict: &ObservableDictionary,
    n: usize,
    key: SeedKey,
) -> Result<DictionaryMeans> {
    let chunks = par::map_chunks(n, 4096, |range| -> Result<Vec<RunningStats>> {
        let mut acc = vec![RunningStats::new(); dict.len()];
        let mut buf = vec![0.0; dict.len()];
        for i in range {
            let p = space.sample_reference(&mut key.child(i as u64).rng())?;
            dict.eval_into(&p.observe(), &mut buf);
            for (a, v) in acc.iter_mut().zip(&buf) {
                a.push(*v);
            }
        }
        Ok(acc)
    });
    let mut acc = vec![RunningStats::new(); dict.len()];
    for c in chunks {
        for (a, s) in acc.iter_mut().zip(c?.iter()) {
            a.merge(s);
        }
    }
    Ok(DictionaryMeans {
        values: acc.iter().map(|a| a.mean()).collect(),
        se: acc.iter().map(|a| a.std_err()).collect(),
        count: n,
    })
}

pub const PATH_BATCHES: usize = 32;
const BLOCK: usize = 64;

/// Per-member sums over consecutive blocks of a series of observations.
struct BlockSums {
    sums: Vec<Vec<f64>>,
    partial: Vec<f64>,
    len: usize,
}

impl BlockSums {
    fn new(dict: &ObservableDictionary, obs: &[Observation]) -> Self {
        let d = dict.len();
        let mut sums = vec![Vec::with_capacity(obs.len() / BLOCK + 1); d];
        let mut partial = vec![0.0; d];
        let mut buf = vec![0.0; d];
        for (i, o) in obs.iter().enumerate() {
            dict.eval_into(o, &mut buf);
            for (p, v) in partial.iter_mut().zip(&buf) {
                *p += v;
            }
            if (i + 1) % BLOCK == 0 {
                for (s, p) in sums.iter_mut().zip(partial.iter_mut()) {
                    s.push(*p);
                    *p = 0.0;
                }
            }
        }
        Self {
            sums,
            partial,
            len: obs.len(),
        }
    }

    /// Means over the first `n` observations; `n` is a multiple of the
    /// block size or the full length.
    fn means(&self, n: usize) -> DictionaryMeans {
        let blocks = n / BLOCK;
        let with_partial = n == self.len && n % BLOCK != 0;
        let batches = PATH_BATCHES.min(blocks);
        let per = blocks.checked_div(batches).unwrap_or(0);
        let values = self
            .sums
            .iter()
            .zip(&self.partial)
            .map(|(s, p)| {
                let tot: f64 = s[..blocks].iter().sum::<f64>() + if with_partial { *p } else { 0.0 };
                tot / n.max(1) as f64
            })
            .collect();
        let se = self
            .sums
            .iter()
            .map(|s| {
                if batches < 2 {
                    return 0.0;
                }
                let m: RunningStats = (0..batches)
                    .map(|b| s[b * per..(b + 1) * per].iter().sum::<f64>() / (per * BLOCK) as f64)
                    .collect();
                m.std_err()
            })
            .collect();
        DictionaryMeans { values, se, count: n }
    }
}

/// Time averages along `obs[burn_in..]`, with batch-means standard errors.
pub fn pathwise_empirical(
    dict: &ObservableDictionary,
    obs: &[Observation],
    burn_in: usize,
) -> DictionaryMeans {
    let tail = &obs[burn_in.min(obs.len())..];
    BlockSums::new(dict, tail).means(tail.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: usize,
    pub distance: f64,
    /// Path noise combined with the reference's own error.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwiseReport {
    pub checkpoints: Vec<Checkpoint>,
    pub final_distance: f64,
    /// Each distance is at most the previous one plus twice the larger noise.
    pub monotone: bool,
}

/// Distances of the running time averages to `reference` at dyadic
/// checkpoints `2^k ≥ first` and at the full length.
pub fn pathwise_checkpoints(
    dict: &ObservableDictionary,
    obs: &[Observation],
    reference: &DictionaryMeans,
    first: usize,
) -> PathwiseReport {
    let blocks = BlockSums::new(dict, obs);
    let mut ns = Vec::new();
    let mut n = first.max(BLOCK).next_power_of_two();
    while n < obs.len() {
        ns.push(n);
        n *= 2;
    }
    ns.push(obs.len());
    let ref_noise = reference.noise();
    let checkpoints: Vec<Checkpoint> = ns
        .iter()
        .map(|&n| {
            let m = blocks.means(n);
            Checkpoint {
                n,
                distance: dictionary_distance(&m, reference),
                noise: m.noise().hypot(ref_noise),
            }
        })
        .collect();
    let monotone = checkpoints
        .windows(2)
        .all(|w| w[1].distance <= w[0].distance + 2.0 * w[0].noise.max(w[1].noise));
    PathwiseReport {
        final_distance: checkpoints.last().map_or(f64::NAN, |c| c.distance),
        checkpoints,
        monotone,
    }
}

/// Pooled long-chain estimates standing in for the reference measure
/// where no closed-form sampler exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReference {
    pub chains: usize,
    pub steps: usize,
    pub burn_in: usize,
    pub pooled: DictionaryMeans,
    pub chain_means: Vec<Vec<f64>>,
    pub max_pairwise: f64,
    pub eps_grid: Vec<f64>,
    /// Per chain, the fraction of time with `systole < ε`.
    pub chain_tails: Vec<Vec<f64>>,
}

pub const CHAIN_DISAGREEMENT: f64 = 0.05;
pub const ESCAPE_GRID: [f64; 5] = [0.5, 0.3, 0.2, 0.1, 0.05];

impl BootstrapReference {
    /// Pooled `P(systole < ε)` with the between-chain standard error.
    pub fn tail(&self, eps: f64) -> TailValue {
        let i = self
            .eps_grid
            .iter()
            .position(|&e| e == eps)
            .expect("ε must come from the bootstrap grid");
        let s: RunningStats = self.chain_tails.iter().map(|t| t[i]).collect();
        TailValue {
            value: s.mean(),
            sigma: s.std_err(),
        }
    }
}

/// Run `chains ≥ 4` long walks from small random perturbations
/// `k a_t k′·x0`, `t ~ U(0, 0.1)`, discard the first tenth and pool.
pub fn bootstrap_reference(
    dict: &ObservableDictionary,
    dist: &StepDistribution,
    x0: &Point,
    chains: usize,
    steps: usize,
    key: SeedKey,
) -> Result<BootstrapReference> {
    if chains < 4 {
        return Err(Error::Precondition(format!("need at least 4 chains, got {chains}")));
    }
    let burn_in = steps / 10;
    let runs = par::map_indexed(chains, |c| -> Result<(Vec<f64>, Vec<f64>)> {
        let key = key.child(c as u64);
        let mut rng = key.named("perturb").rng();
        let tau = std::f64::consts::TAU;
        let g = GroupElement::rotation(rng.random::<f64>() * tau)
            .compose(&GroupElement::diag_flow(rng.random::<f64>() * 0.1))?
            .compose(&GroupElement::rotation(rng.random::<f64>() * tau))?;
        let start = x0.act(&g)?;
        let obs = run_walk(dist, &start, burn_in + steps, key.named("walk"))?;
        let means = pathwise_empirical(dict, &obs, burn_in).values;
        let tails = ESCAPE_GRID
            .iter()
            .map(|&e| obs[burn_in..].iter().filter(|o| o.systole < e).count() as f64 / steps as f64)
            .collect();
        Ok((means, tails))
    });
    let mut chain_means = Vec::with_capacity(chains);
    let mut chain_tails = Vec::with_capacity(chains);
    for r in runs {
        let (m, t) = r?;
        chain_means.push(m);
        chain_tails.push(t);
    }
    let as_means = |v: &Vec<f64>| DictionaryMeans {
        values: v.clone(),
        se: vec![0.0; v.len()],
        count: steps,
    };
    let mut max_pairwise: f64 = 0.0;
    for i in 0..chains {
        for j in i + 1..chains {
            max_pairwise =
                max_pairwise.max(dictionary_distance(&as_means(&chain_means[i]), &as_means(&chain_means[j])));
        }
    }
    if max_pairwise > CHAIN_DISAGREEMENT {
        return Err(Error::ChainsDisagree {
            distance: max_pairwise,
            threshold: CHAIN_DISAGREEMENT,
        });
    }
    let pooled_stats: Vec<RunningStats> = (0..dict.len())
        .map(|i| chain_means.iter().map(|m| m[i]).collect())
        .collect();
    Ok(BootstrapReference {
        chains,
        steps,
        burn_in,
        pooled: DictionaryMeans {
            values: pooled_stats.iter().map(|s| s.mean()).collect(),
            se: pooled_stats.iter().map(|s| s.std_err()).collect(),
            count: chains * steps,
        },
        chain_means,
        max_pairwise,
        eps_grid: ESCAPE_GRID.to_vec(),
        chain_tails,
    })
}

/// Escape monitor against the exact tail of the torus reference measure.
pub fn torus_escape(obs: &[Observation]) -> EscapeTable {
    escape_monitor(obs, &ESCAPE_GRID, &|e| TailValue {
        value: reference_systole_cdf(e),
        sigma: 0.0,
    })
}

/// Escape monitor against the bootstrap chains' own tail.
pub fn bootstrap_escape(obs: &[Observation], reference: &BootstrapReference) -> EscapeTable {
    escape_monitor(obs, &reference.eps_grid, &|e| reference.tail(e))
}

/// Ensemble Cesàro and instantaneous laws at step `n`, compared with the
/// reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub n: usize,
    pub walkers: usize,
    pub cesaro: DictionaryMeans,
    pub instant: DictionaryMeans,
    pub cesaro_distance: f64,
    pub instant_distance: f64,
    pub cesaro_noise: f64,
    pub instant_noise: f64,
    /// Instantaneous deviation is at most the Cesàro deviation plus two
    /// combined standard errors.
    pub instant_not_worse: bool,
}

/// `walkers` independent walks of `n` steps from `x0`: the Cesàro law
/// `(1/n) Σ_{k<n} μ^k ∗ δ_x` and the instantaneous law `μ^n ∗ δ_x`.
pub fn ensemble_modes(
    dict: &ObservableDictionary,
    dist: &StepDistribution,
    x0: &Point,
    n: usize,
    walkers: usize,
    reference: &DictionaryMeans,
    key: SeedKey,
) -> Result<ModeComparison> {
    if n == 0 || walkers < 2 {
        return Err(Error::Precondition("need n ≥ 1 and at least two walkers".into()));
    }
    let d = dict.len();
    let chunks = par::map_chunks(walkers, 256, |range| -> Result<(Vec<RunningStats>, Vec<RunningStats>)> {
        let mut ces = vec![RunningStats::new(); d];
        let mut inst = vec![RunningStats::new(); d];
        let mut buf = vec![0.0; d];
        let mut sums = vec![0.0; d];
        for w in range {
            let mut rng = key.child(w as u64).rng();
            let mut x = x0.clone();
            sums.iter_mut().for_each(|s| *s = 0.0);
            for k in 0..=n {
                if k > 0 {
                    x = x.act(&dist.sample_step(&mut rng)).map_err(|e| Error::AtStep {
                        step: k,
                        source: Box::new(e),
                    })?;
                }
                dict.eval_into(&x.observe(), &mut buf);
                if k < n {
                    for (s, v) in sums.iter_mut().zip(&buf) {
                        *s += v;
                    }
                }
            }
            for i in 0..d {
                ces[i].push(sums[i] / n as f64);
                inst[i].push(buf[i]);
            }
        }
        Ok((ces, inst))
    });
    let mut ces = vec![RunningStats::new(); d];
    let mut inst = vec![RunningStats::new(); d];
    for c in chunks {
        let (a, b) = c?;
        for i in 0..d {
            ces[i].merge(&a[i]);
            inst[i].merge(&b[i]);
        }
    }
    let to_means = |acc: &[RunningStats]| DictionaryMeans {
        values: acc.iter().map(|a| a.mean()).collect(),
        se: acc.iter().map(|a| a.std_err()).collect(),
        count: walkers,
    };
    let cesaro = to_means(&ces);
    let instant = to_means(&inst);
    let cesaro_distance = dictionary_distance(&cesaro, reference);
    let instant_distance = dictionary_distance(&instant, reference);
    let cesaro_noise = cesaro.noise().hypot(reference.noise());
    let instant_noise = instant.noise().hypot(reference.noise());
    Ok(ModeComparison {
        n,
        walkers,
        instant_not_worse: instant_distance
            <= cesaro_distance + 2.0 * cesaro_noise.hypot(instant_noise),
        cesaro,
        instant,
        cesaro_distance,
        instant_distance,
        cesaro_noise,
        instant_noise,
    })
}

/// All three modes of convergence from one starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreeModesReport {
    pub space: String,
    /// The start is a fixed point rather than a reference draw.
    pub anecdotal: bool,
    pub ensemble: ModeComparison,
    pub pathwise: PathwiseReport,
    pub pathwise_burned: f64,
    pub escape: EscapeTable,
}

/// Settings of the three-modes experiment.
#[derive(Debug, Clone)]
pub struct ThreeModesConfig {
    pub n: usize,
    pub walkers: usize,
    pub path_steps: usize,
    pub burn_in: usize,
}

pub fn three_modes_report(
    space: &Space,
    dict: &ObservableDictionary,
    dist: &StepDistribution,
    reference: &DictionaryMeans,
    bootstrap: Option<&BootstrapReference>,
    cfg: &ThreeModesConfig,
    key: SeedKey,
) -> Result<ThreeModesReport> {
    let x0 = space.base_point();
    let ensemble = ensemble_modes(dict, dist, &x0, cfg.n, cfg.walkers, reference, key.named("ensemble"))?;
    let path = run_walk(dist, &x0, cfg.path_steps, key.named("path"))?;
    let pathwise = pathwise_checkpoints(dict, &path, reference, 1024);
    let burned = dictionary_distance(&pathwise_empirical(dict, &path, cfg.burn_in), reference);
    let escape = match bootstrap {
        Some(b) => bootstrap_escape(&path, b),
        None => torus_escape(&path),
    };
    Ok(ThreeModesReport {
        space: space.tag(),
        anecdotal: true,
        ensemble,
        pathwise,
        pathwise_burned: burned,
        escape,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dictionary_has_twenty_seven_bounded_members() {
        let d = ObservableDictionary::standard();
        assert_eq!(d.len(), 27);
        let o = Observation {
            systole: 0.7,
            second_min: 1.5,
            shape_re: 0.1,
            shape_im: 1.3,
            frame_angle: 0.0,
            code_hash: 0,
        };
        for v in d.eval(&o) {
            assert!((0.0..=1.0).contains(&v));
        }
        let mut names = d.names();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 27);
    }

    #[test]
    fn distance_is_sup_norm() {
        let a = DictionaryMeans { values: vec![0.1, 0.5], se: vec![0.0; 2], count: 1 };
        let b = DictionaryMeans { values: vec![0.2, 0.2], se: vec![0.0; 2], count: 1 };
        assert!((dictionary_distance(&a, &b) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn walk_starts_at_base() {
        let dist = StepDistribution::bi_invariant(crate::step::RadialMeasure::atom(1.0));
        let x0 = Space::torus().base_point();
        let r = run_walk(&dist, &x0, 5, SeedKey::new(1)).unwrap();
        assert_eq!(r.len(), 5);
        assert_eq!(r[0], x0.observe());
        assert_eq!(r, run_walk(&dist, &x0, 5, SeedKey::new(1)).unwrap());
    }

    #[test]
    fn bootstrap_needs_four_chains() {
        let dist = StepDistribution::bi_invariant(crate::step::RadialMeasure::atom(1.0));
        let d = ObservableDictionary::standard();
        let x0 = Space::torus().base_point();
        assert!(bootstrap_reference(&d, &dist, &x0, 3, 10, SeedKey::new(1)).is_err());
    }
}
