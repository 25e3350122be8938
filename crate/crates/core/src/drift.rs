//! Drift functions, Monte Carlo estimates of the convolution operator and
//! the statistics built on them.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng::SeedKey;
use crate::sl2::GroupElement;
use crate::space::{ObsFn, Observation, Point, Space};
use crate::stats::{batch_means_se, weighted_line_fit, Estimate, RunningStats, Z95};
use crate::step::{exponential_moment_estimate, short_excursion_probability, StepDistribution};
use crate::torus::LatticePoint;

/// Values above this are capped inside regressions.
pub const VALUE_CAP: f64 = 1e12;
const WALK_CHUNK: usize = 64;

/// A function `f ≥ 1` on the walk space.
#[derive(Clone)]
pub enum DriftFunction {
    /// `max(systole^{−s}, 1)`.
    SystolePower { s: f64 },
    /// `f ≡ 1`.
    Constant,
    UserSupplied { name: String, f: ObsFn },
}

impl fmt::Debug for DriftFunction {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(out, "DriftFunction({})", self.name())
    }
}

impl DriftFunction {
    pub fn systole_power(s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Precondition(format!("systole exponent {s} must be > 0")));
        }
        Ok(DriftFunction::SystolePower { s })
    }

    /// A user function; values below one are raised to one.
    pub fn user(name: &str, f: impl Fn(&Observation) -> f64 + Send + Sync + 'static) -> Self {
        DriftFunction::UserSupplied {
            name: name.to_string(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> String {
        match self {
            DriftFunction::SystolePower { s } => format!("systole^-{s}"),
            DriftFunction::Constant => "constant".into(),
            DriftFunction::UserSupplied { name, .. } => name.clone(),
        }
    }

    pub fn value(&self, x: &Point) -> f64 {
        match self {
            DriftFunction::SystolePower { s } => x.systole().powf(-s).max(1.0),
            DriftFunction::Constant => 1.0,
            DriftFunction::UserSupplied { f, .. } => f(&x.observe()).max(1.0),
        }
    }

    pub fn value_obs(&self, o: &Observation) -> f64 {
        match self {
            DriftFunction::SystolePower { s } => o.systole.powf(-s).max(1.0),
            DriftFunction::Constant => 1.0,
            DriftFunction::UserSupplied { f, .. } => f(o).max(1.0),
        }
    }

    /// `(σ, κ)` with `σ^{−1}‖g‖^{−κ} f(x) ≤ f(gx) ≤ σ‖g‖^{κ} f(x)`, when known.
    pub fn sandwich_constants(&self) -> Option<(f64, f64)> {
        match self {
            DriftFunction::SystolePower { s } => Some((1.0, *s)),
            DriftFunction::Constant => Some((1.0, 0.0)),
            DriftFunction::UserSupplied { .. } => None,
        }
    }
}

/// `min(0.5, 0.5 / (s·λ̂))`.
pub fn default_delta(s: f64, lyapunov: f64) -> f64 {
    if lyapunov > 0.0 && s > 0.0 {
        (0.5 / (s * lyapunov)).min(0.5)
    } else {
        0.5
    }
}

/// Per-step statistics of `f` along `n_inner` independent `k`-step walks
/// from `x`; entry `j` covers step `j`.
pub fn inner_walk_stats(
    f: &(dyn Fn(&Point) -> f64 + Sync),
    dist: &StepDistribution,
    x: &Point,
    k: usize,
    n_inner: usize,
    key: SeedKey,
) -> Result<Vec<RunningStats>> {
    let chunks = par::map_chunks(n_inner, WALK_CHUNK, |range| -> Result<Vec<RunningStats>> {
        let mut acc = vec![RunningStats::new(); k + 1];
        for w in range {
            let mut rng = key.child(w as u64).rng();
            let mut p = x.clone();
            acc[0].push(f(&p));
            for (j, slot) in acc.iter_mut().enumerate().skip(1) {
                p = p.act(&dist.sample_step(&mut rng)).map_err(|e| Error::AtStep {
                    step: j,
                    source: Box::new(e),
                })?;
                slot.push(f(&p));
            }
        }
        Ok(acc)
    });
    let mut total = vec![RunningStats::new(); k + 1];
    for c in chunks {
        for (t, s) in total.iter_mut().zip(c?.iter()) {
            t.merge(s);
        }
    }
    Ok(total)
}

/// Monte Carlo estimate of `π(μ)^k f(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovEstimate {
    pub estimate: Estimate,
    /// Some walk reached a point where `f` is infinite.
    pub infinite: bool,
}

pub fn apply_markov(
    f: &(dyn Fn(&Point) -> f64 + Sync),
    dist: &StepDistribution,
    x: &Point,
    k: usize,
    n_inner: usize,
    key: SeedKey,
) -> Result<MarkovEstimate> {
    if k == 0 {
        let v = f(x);
        return Ok(MarkovEstimate {
            estimate: Estimate::exact(v),
            infinite: v.is_infinite(),
        });
    }
    if n_inner < 100 {
        return Err(Error::Precondition(format!("need n_inner ≥ 10², got {n_inner}")));
    }
    let stats = inner_walk_stats(f, dist, x, k, n_inner, key)?;
    let last = stats[k];
    let infinite = !last.mean().is_finite();
    Ok(MarkovEstimate {
        estimate: if infinite {
            Estimate {
                value: f64::INFINITY,
                ci: f64::INFINITY,
            }
        } else {
            last.estimate()
        },
        infinite,
    })
}

/// Something whose drift inequality can be tested: evaluates `V(x)` and
/// an estimate of `π(μ)^{steps} V(x)`.
pub trait DriftTarget: Sync {
    fn label(&self) -> String;
    fn evaluate(
        &self,
        dist: &StepDistribution,
        x: &Point,
        steps: usize,
        n_inner: usize,
        key: SeedKey,
    ) -> Result<(f64, Estimate)>;
}

impl DriftTarget for DriftFunction {
    fn label(&self) -> String {
        self.name()
    }

    fn evaluate(
        &self,
        dist: &StepDistribution,
        x: &Point,
        steps: usize,
        n_inner: usize,
        key: SeedKey,
    ) -> Result<(f64, Estimate)> {
        let f = |p: &Point| self.value(p);
        let img = apply_markov(&f, dist, x, steps, n_inner, key)?;
        Ok((self.value(x), img.estimate))
    }
}

/// How the drift fit was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    Linear,
    /// Through the origin, after the unconstrained intercept came out negative.
    NoIntercept,
    /// `f` constant on the sample: only β is identifiable.
    BetaOnly,
}

/// Fitted constants of `π(μ)V ≤ αV + β` on a sample of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    pub label: String,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    /// 95% half-width of `alpha_hat`.
    pub ci: f64,
    pub beta_ci: f64,
    pub n_points: usize,
    pub n_inner: usize,
    pub steps: usize,
    pub f_range: (f64, f64),
    pub capped: usize,
    pub mode: FitMode,
    pub holds: bool,
}

impl DriftEstimate {
    /// `alpha_hat + 2·ci`, the certified contraction factor.
    pub fn alpha_upper(&self) -> f64 {
        self.alpha_hat + 2.0 * self.ci
    }
}

/// Least-squares fit of `π̂(μ)^{steps}V(x)` against `V(x)` over the
/// points, with slope and intercept constrained to be non-negative. The
/// drift inequality is declared to hold when `α̂ + 2·CI < 1`.
pub fn verify_drift(
    target: &dyn DriftTarget,
    dist: &StepDistribution,
    points: &[Point],
    steps: usize,
    n_inner: usize,
    key: SeedKey,
) -> Result<DriftEstimate> {
    if points.len() < 100 {
        return Err(Error::Precondition(format!(
            "need at least 10² points, got {}",
            points.len()
        )));
    }
    if steps == 0 {
        return Err(Error::Precondition("steps must be ≥ 1".into()));
    }
    let evals = par::map_indexed(points.len(), |i| {
        target.evaluate(dist, &points[i], steps, n_inner, key.child(i as u64))
    });
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    let mut ws = Vec::with_capacity(points.len());
    let mut capped = 0;
    for e in evals {
        let (v, img) = e?;
        if v > VALUE_CAP || img.value > VALUE_CAP || !img.value.is_finite() {
            capped += 1;
        }
        let x = v.min(VALUE_CAP);
        let y = img.value.min(VALUE_CAP);
        let se = img.sigma().max(1e-9 * y.abs()).max(1e-15);
        xs.push(x);
        ys.push(y);
        ws.push(1.0 / (se * se));
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let base = DriftEstimate {
        label: target.label(),
        alpha_hat: 0.0,
        beta_hat: 0.0,
        ci: 0.0,
        beta_ci: 0.0,
        n_points: points.len(),
        n_inner,
        steps,
        f_range: (lo, hi),
        capped,
        mode: FitMode::Linear,
        holds: false,
    };
    if hi - lo <= 1e-12 * hi.abs() {
        let stats: RunningStats = ys.iter().copied().collect();
        let e = stats.estimate();
        return Ok(DriftEstimate {
            beta_hat: e.value,
            beta_ci: e.ci,
            mode: FitMode::BetaOnly,
            ..base
        });
    }
    let bands = {
        let mut b: Vec<i64> = xs.iter().map(|x| x.log2().floor() as i64).collect();
        b.sort_unstable();
        b.dedup();
        b.len()
    };
    if bands < 2 {
        return Err(Error::IllConditioned(format!(
            "all {} points share one dyadic band of f-values [{lo}, {hi}]",
            points.len()
        )));
    }
    let fit = weighted_line_fit(&xs, &ys, &ws)
        .ok_or_else(|| Error::IllConditioned("degenerate regression".into()))?;
    let (alpha, beta, ci, beta_ci, mode) = if fit.slope < 0.0 {
        let sw: f64 = ws.iter().sum();
        let mean = ys.iter().zip(&ws).map(|(y, w)| y * w).sum::<f64>() / sw;
        (0.0, mean, Z95 * fit.slope_se, Z95 / sw.sqrt(), FitMode::Linear)
    } else if fit.intercept < 0.0 {
        let sxx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).zip(&ws).map(|((x, y), w)| w * x * y).sum();
        let a = sxy / sxx;
        let chi2: f64 = xs
            .iter()
            .zip(&ys)
            .zip(&ws)
            .map(|((x, y), w)| w * (y - a * x).powi(2))
            .sum::<f64>()
            / (xs.len() - 1) as f64;
        let se = (chi2.max(1.0) / sxx).sqrt();
        (a, 0.0, Z95 * se, 0.0, FitMode::NoIntercept)
    } else {
        (
            fit.slope,
            fit.intercept,
            Z95 * fit.slope_se,
            Z95 * fit.intercept_se,
            FitMode::Linear,
        )
    };
    Ok(DriftEstimate {
        alpha_hat: alpha,
        beta_hat: beta,
        ci,
        beta_ci,
        mode,
        holds: alpha + 2.0 * ci < 1.0,
        ..base
    })
}

/// `V = Σ_{k<m} α^{δ(m−1−k)/m} π(μ)^k f^δ`, evaluated by Monte Carlo.
#[derive(Debug, Clone)]
pub struct ComposedV {
    pub f: DriftFunction,
    pub m: usize,
    pub alpha: f64,
    pub delta: f64,
    pub weights: Vec<f64>,
}

/// Build `V` from `f`. The exponential moment of order `κ·δ` must be
/// finite; it is checked with a fixed-seed estimate.
pub fn compose_v(
    f: &DriftFunction,
    dist: &StepDistribution,
    m: usize,
    alpha: f64,
    delta: f64,
) -> Result<ComposedV> {
    if m == 0 {
        return Err(Error::Precondition("m must be ≥ 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Precondition(format!("alpha {alpha} must lie in (0, 1)")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Precondition(format!("delta {delta} must lie in (0, 1)")));
    }
    if let Some((_, kappa)) = f.sandwich_constants() {
        if kappa > 0.0 {
            let est = exponential_moment_estimate(
                dist,
                kappa * delta,
                10_000,
                SeedKey::new(0).named("compose-moment"),
            )?;
            if est.likely_infinite {
                return Err(Error::Precondition(format!(
                    "exponential moment of order {} looks infinite",
                    kappa * delta
                )));
            }
        }
    }
    let weights = (0..m)
        .map(|k| alpha.powf(delta * (m - 1 - k) as f64 / m as f64))
        .collect();
    Ok(ComposedV {
        f: f.clone(),
        m,
        alpha,
        delta,
        weights,
    })
}

impl ComposedV {
    /// The contraction factor the construction promises, `α^{δ/m}`.
    pub fn promised_factor(&self) -> f64 {
        self.alpha.powf(self.delta / self.m as f64)
    }

    /// `V(x)` and `π(μ)^{steps}V(x)` from one batch of walks of length
    /// `m − 1 + steps`; each walk contributes one weighted sum to each.
    fn walk_sums(
        &self,
        dist: &StepDistribution,
        x: &Point,
        steps: usize,
        n_inner: usize,
        key: SeedKey,
    ) -> Result<(Estimate, Estimate)> {
        let len = self.m - 1 + steps;
        let fd = |p: &Point| self.f.value(p).powf(self.delta);
        let chunks = par::map_chunks(n_inner, WALK_CHUNK, |range| -> Result<(RunningStats, RunningStats)> {
            let mut v = RunningStats::new();
            let mut img = RunningStats::new();
            let mut vals = vec![0.0; len + 1];
            for w in range {
                let mut rng = key.child(w as u64).rng();
                let mut p = x.clone();
                vals[0] = fd(&p);
                for (j, slot) in vals.iter_mut().enumerate().skip(1) {
                    p = p.act(&dist.sample_step(&mut rng)).map_err(|e| Error::AtStep {
                        step: j,
                        source: Box::new(e),
                    })?;
                    *slot = fd(&p);
                }
                let sv: f64 = self.weights.iter().zip(&vals).map(|(w, f)| w * f).sum();
                let si: f64 = self.weights.iter().zip(&vals[steps..]).map(|(w, f)| w * f).sum();
                v.push(sv);
                img.push(si);
            }
            Ok((v, img))
        });
        let (mut v, mut img) = (RunningStats::new(), RunningStats::new());
        for c in chunks {
            let (a, b) = c?;
            v.merge(&a);
            img.merge(&b);
        }
        Ok((v.estimate(), img.estimate()))
    }

    pub fn value(
        &self,
        dist: &StepDistribution,
        x: &Point,
        n_inner: usize,
        key: SeedKey,
    ) -> Result<Estimate> {
        if self.m == 1 {
            return Ok(Estimate::exact(self.f.value(x).powf(self.delta)));
        }
        Ok(self.walk_sums(dist, x, 1, n_inner, key)?.0)
    }
}

impl DriftTarget for ComposedV {
    fn label(&self) -> String {
        format!("V[{}; m={}, alpha={}, delta={}]", self.f.name(), self.m, self.alpha, self.delta)
    }

    fn evaluate(
        &self,
        dist: &StepDistribution,
        x: &Point,
        steps: usize,
        n_inner: usize,
        key: SeedKey,
    ) -> Result<(f64, Estimate)> {
        let (v, img) = self.walk_sums(dist, x, steps, n_inner, key)?;
        Ok((v.value, img))
    }
}

/// One row of the contraction-horizon scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRow {
    pub m: usize,
    pub alpha_hat: f64,
    pub ci: f64,
    /// η̂^{(m)}([0, t₀]).
    pub short_excursion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub alpha_target: f64,
    pub t0: f64,
    pub rows: Vec<HorizonRow>,
    pub m: Option<usize>,
    pub estimate: Option<DriftEstimate>,
}

/// Parameters of the horizon search besides the drift function and μ.
#[derive(Debug, Clone)]
pub struct HorizonBudget<'a> {
    pub points: &'a [Point],
    pub n_inner: usize,
    pub t0: f64,
    pub excursion_samples: usize,
}

/// Scan `m = 1, 2, …, m_max` until the `m`-step walk certifies
/// `α̂ + 2·CI ≤ alpha_target`; the report is returned either way.
pub fn contraction_scan(
    f: &DriftFunction,
    dist: &StepDistribution,
    alpha_target: f64,
    m_max: usize,
    budget: &HorizonBudget<'_>,
    key: SeedKey,
) -> Result<HorizonReport> {
    if !(alpha_target > 0.0 && alpha_target < 1.0) {
        return Err(Error::Precondition(format!(
            "alpha_target {alpha_target} must lie in (0, 1)"
        )));
    }
    let mut report = HorizonReport {
        alpha_target,
        t0: budget.t0,
        rows: Vec::new(),
        m: None,
        estimate: None,
    };
    for m in 1..=m_max {
        let est = verify_drift(f, dist, budget.points, m, budget.n_inner, key.child(m as u64))?;
        let exc = short_excursion_probability(
            dist,
            m,
            budget.t0,
            budget.excursion_samples,
            key.named("excursion").child(m as u64),
        );
        report.rows.push(HorizonRow {
            m,
            alpha_hat: est.alpha_hat,
            ci: est.ci,
            short_excursion: exc,
        });
        if est.mode != FitMode::BetaOnly && est.alpha_upper() <= alpha_target {
            report.m = Some(m);
            report.estimate = Some(est);
            break;
        }
    }
    Ok(report)
}

/// Smallest `m ≤ m_max` at which the `m`-step walk contracts below
/// `alpha_target`.
pub fn find_contraction_horizon(
    f: &DriftFunction,
    dist: &StepDistribution,
    alpha_target: f64,
    m_max: usize,
    budget: &HorizonBudget<'_>,
    key: SeedKey,
) -> Result<HorizonReport> {
    let r = contraction_scan(f, dist, alpha_target, m_max, budget, key)?;
    match r.m {
        Some(_) => Ok(r),
        None => Err(Error::HorizonNotFound { m_max }),
    }
}

/// Lattices with systole log-uniform in `[systole_min, 1]`, uniform shape
/// real part and frame angle; used to span many dyadic bands of `f`.
pub fn spanning_lattices(systole_min: f64, n: usize, key: SeedKey) -> Result<Vec<Point>> {
    if !(systole_min > 0.0 && systole_min < 1.0) {
        return Err(Error::Precondition(format!(
            "systole_min {systole_min} must lie in (0, 1)"
        )));
    }
    let mut rng = key.rng();
    (0..n)
        .map(|_| {
            let eps = systole_min.powf(rng.random::<f64>());
            let x = rng.random::<f64>() - 0.5;
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            Ok(Point::Lattice(
                LatticePoint::from_shape(x, eps.powi(-2), theta)?.reduce()?,
            ))
        })
        .collect()
}

/// Points spanning `systole ∈ [systole_min, ~1]` on any space: lattices
/// as in [`spanning_lattices`], surfaces as `k a_t k′` images of the base
/// with `t` uniform up to `ln(1/systole_min)`.
pub fn spanning_points(space: &Space, systole_min: f64, n: usize, key: SeedKey) -> Result<Vec<Point>> {
    match space {
        Space::Torus => spanning_lattices(systole_min, n, key),
        Space::Surface { base, .. } => {
            if !(systole_min > 0.0 && systole_min < 1.0) {
                return Err(Error::Precondition(format!(
                    "systole_min {systole_min} must lie in (0, 1)"
                )));
            }
            let t_max = -systole_min.ln();
            let tau = std::f64::consts::TAU;
            par::map_indexed(n, |i| {
                let mut rng = key.child(i as u64).rng();
                let g = GroupElement::rotation(rng.random::<f64>() * tau)
                    .compose(&GroupElement::diag_flow(rng.random::<f64>() * t_max))?
                    .compose(&GroupElement::rotation(rng.random::<f64>() * tau))?;
                Ok(Point::Surface(base.act(&g)?))
            })
            .into_iter()
            .collect()
        }
    }
}

/// One row of the recurrence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceRow {
    pub threshold: f64,
    pub fraction: f64,
    /// `threshold · fraction`.
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceTable {
    pub rows: Vec<RecurrenceRow>,
    /// Smallest `C` with `fraction ≤ C/M` on the whole grid.
    pub c_fit: f64,
    /// Largest over smallest per-threshold `C` (rows with positive fraction).
    pub c_ratio: f64,
    pub stable: bool,
}

pub const RECURRENCE_GRID: [f64; 5] = [2.0, 4.0, 8.0, 16.0, 32.0];

/// Occupation fractions of `{f > M}` along a trajectory.
pub fn recurrence_statistic(
    obs: &[Observation],
    f: &DriftFunction,
    grid: &[f64],
) -> Result<RecurrenceTable> {
    if obs.len() < 10_000 {
        return Err(Error::Precondition(format!(
            "trajectory of length {} is shorter than 10⁴",
            obs.len()
        )));
    }
    let values: Vec<f64> = obs.iter().map(|o| f.value_obs(o)).collect();
    let rows: Vec<RecurrenceRow> = grid
        .iter()
        .map(|&m| {
            let frac = values.iter().filter(|&&v| v > m).count() as f64 / values.len() as f64;
            RecurrenceRow {
                threshold: m,
                fraction: frac,
                c: m * frac,
            }
        })
        .collect();
    let c_fit = rows.iter().map(|r| r.c).fold(0.0, f64::max);
    let positive: Vec<f64> = rows.iter().filter(|r| r.fraction > 0.0).map(|r| r.c).collect();
    let c_ratio = if positive.is_empty() {
        1.0
    } else {
        positive.iter().copied().fold(0.0, f64::max)
            / positive.iter().copied().fold(f64::INFINITY, f64::min)
    };
    Ok(RecurrenceTable {
        rows,
        c_fit,
        c_ratio,
        stable: c_ratio < 2.0,
    })
}

/// Reference tail `P(systole < ε)` with its own standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailValue {
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeRow {
    pub epsilon: f64,
    pub fraction: f64,
    pub reference: f64,
    pub sigma: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeTable {
    pub rows: Vec<EscapeRow>,
    pub no_escape: bool,
}

pub const ESCAPE_BATCHES: usize = 100;

/// Occupation of `{systole < ε}` against the reference tail plus three
/// standard errors (batch means along the path, combined with the
/// reference's own error).
pub fn escape_monitor(
    obs: &[Observation],
    eps_grid: &[f64],
    reference: &dyn Fn(f64) -> TailValue,
) -> EscapeTable {
    let rows: Vec<EscapeRow> = eps_grid
        .iter()
        .map(|&eps| {
            let ind: Vec<f64> = obs.iter().map(|o| (o.systole < eps) as u8 as f64).collect();
            let frac = ind.iter().sum::<f64>() / ind.len().max(1) as f64;
            let path_se = if ind.len() >= 2 * ESCAPE_BATCHES {
                batch_means_se(&ind, ESCAPE_BATCHES)
            } else {
                0.0
            };
            let r = reference(eps);
            let sigma = path_se.hypot(r.sigma);
            EscapeRow {
                epsilon: eps,
                fraction: frac,
                reference: r.value,
                sigma,
                ok: frac <= r.value + 3.0 * sigma,
            }
        })
        .collect();
    let no_escape = rows.iter().all(|r| r.ok);
    EscapeTable { rows, no_escape }
}
