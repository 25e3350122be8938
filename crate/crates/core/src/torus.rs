//! Unit-covolume lattices in the plane, i.e. points of SL(2,ℤ)\SL(2,ℝ)
//! viewed as flat tori with a marked point.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedKey;
use crate::sl2::GroupElement;
use crate::stats::{ks_two_sample, KsResult};
use crate::step::StepDistribution;

/// Swap guard for Lagrange–Gauss reduction.
pub const MAX_SWAPS: usize = 10_000;
/// Retry cap of the shape rejection sampler.
pub const REJECTION_CAP: usize = 1_000_000;

const Y_MIN: f64 = 0.866_025_403_784_438_6; // √3/2

/// A lattice `basis · ℤ²` of covolume one. The columns of `basis` are the
/// basis vectors `v₁ = (a, c)` and `v₂ = (b, d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticePoint {
    basis: GroupElement,
    reduced: bool,
}

impl LatticePoint {
    pub fn new(basis: GroupElement) -> Self {
        Self {
            basis,
            reduced: false,
        }
    }

    /// The square lattice ℤ².
    pub fn standard() -> Self {
        Self {
            basis: GroupElement::identity(),
            reduced: true,
        }
    }

    /// The hexagonal lattice scaled to covolume one.
    pub fn hexagonal() -> Self {
        let l = (2.0 / 3f64.sqrt()).sqrt();
        let b = GroupElement::new(l, 0.5 * l, 0.0, 0.5 * 3f64.sqrt() * l).expect("unit covolume");
        Self::new(b).reduce().expect("hexagonal lattice reduces")
    }

    /// Lattice with shape `x + iy` (upper half-plane) and first basis vector
    /// at angle `theta`: `v₁ = y^{-1/2}·e^{iθ}`, `v₂ = (x + iy)·v₁`.
    pub fn from_shape(x: f64, y: f64, theta: f64) -> Result<Self> {
        if !(y > 0.0 && y.is_finite() && x.is_finite()) {
            return Err(Error::HalfPlane(format!("{x} + {y}i")));
        }
        let s = y.sqrt().recip();
        let (sn, cs) = theta.sin_cos();
        let v1 = [s * cs, s * sn];
        let v2 = [x * v1[0] - y * v1[1], x * v1[1] + y * v1[0]];
        Ok(Self::new(GroupElement::new(v1[0], v2[0], v1[1], v2[1])?))
    }

    pub fn basis(&self) -> GroupElement {
        self.basis
    }

    pub fn is_reduced(&self) -> bool {
        self.reduced
    }

    pub fn vectors(&self) -> ([f64; 2], [f64; 2]) {
        let [a, b, c, d] = self.basis.entries();
        ([a, c], [b, d])
    }

    /// Lagrange–Gauss reduction using only determinant-preserving column
    /// operations, so the result is again an SL(2,ℝ) basis of the same
    /// lattice with `‖v₁‖ ≤ ‖v₂‖` and `|⟨v₁,v₂⟩| ≤ ‖v₁‖²/2`.
    pub fn reduce(&self) -> Result<Self> {
        if self.reduced {
            return Ok(*self);
        }
        let (mut u, mut v) = self.vectors();
        let n2 = |p: [f64; 2]| p[0] * p[0] + p[1] * p[1];
        if n2(u) > n2(v) {
            (u, v) = (v, [-u[0], -u[1]]);
        }
        let mut swaps = 0;
        loop {
            let mu = ((u[0] * v[0] + u[1] * v[1]) / n2(u)).round();
            if mu != 0.0 {
                v = [v[0] - mu * u[0], v[1] - mu * u[1]];
            }
            if n2(v) < n2(u) {
                (u, v) = (v, [-u[0], -u[1]]);
                swaps += 1;
                if swaps > MAX_SWAPS {
                    return Err(Error::ReductionStalled { swaps });
                }
            } else {
                break;
            }
        }
        Ok(Self {
            basis: GroupElement::new(u[0], v[0], u[1], v[1])?,
            reduced: true,
        })
    }

    /// `g·L`, reduced.
    pub fn act(&self, g: &GroupElement) -> Result<Self> {
        Self::new(g.compose(&self.basis)?).reduce()
    }

    /// Length of a shortest nonzero vector.
    pub fn systole(&self) -> f64 {
        let (u, _) = self.reduced_vectors();
        u[0].hypot(u[1])
    }

    /// Second successive minimum.
    pub fn second_min(&self) -> f64 {
        let (_, v) = self.reduced_vectors();
        v[0].hypot(v[1])
    }

    /// The shape `v₂/v₁` in the modular fundamental domain.
    pub fn shape(&self) -> (f64, f64) {
        let (u, v) = self.reduced_vectors();
        let n = u[0] * u[0] + u[1] * u[1];
        let re = (u[0] * v[0] + u[1] * v[1]) / n;
        let im = (u[0] * v[1] - u[1] * v[0]) / n;
        (re, im)
    }

    /// Direction of the shortest vector, modulo π.
    pub fn frame_angle(&self) -> f64 {
        let (u, _) = self.reduced_vectors();
        u[1].atan2(u[0]).rem_euclid(PI)
    }

    fn reduced_vectors(&self) -> ([f64; 2], [f64; 2]) {
        if self.reduced {
            self.vectors()
        } else {
            // Only reachable for hand-built inputs; reduction of a valid
            // basis cannot fail short of pathological conditioning.
            self.reduce().map(|l| l.vectors()).unwrap_or_else(|_| self.vectors())
        }
    }
}

/// Law of the lattice shape used by the reference sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeLaw {
    /// Hyperbolic area `dx dy / y²`: the invariant probability measure.
    HyperbolicArea,
    /// Density `1/y` on `y ≤ 10³`. Not invariant; kept as a negative control.
    InverseY,
}

const INVERSE_Y_MAX: f64 = 1e3;

/// Draw a shape `(x, y)` in the fundamental domain `|x| ≤ 1/2, x² + y² ≥ 1`.
pub fn sample_shape<R: Rng + ?Sized>(law: ShapeLaw, rng: &mut R) -> Result<(f64, f64)> {
    for _ in 0..REJECTION_CAP {
        let x = rng.random::<f64>() - 0.5;
        let u: f64 = rng.random();
        let y = match law {
            // Inverse CDF of y ↦ Y_MIN/y² on [Y_MIN, ∞).
            ShapeLaw::HyperbolicArea => Y_MIN / (1.0 - u),
            ShapeLaw::InverseY => Y_MIN * (INVERSE_Y_MAX / Y_MIN).powf(u),
        };
        if x * x + y * y >= 1.0 {
            return Ok((x, y));
        }
    }
    Err(Error::RejectionCap(REJECTION_CAP))
}

/// A lattice drawn from the invariant probability measure.
pub fn sample_reference<R: Rng + ?Sized>(rng: &mut R) -> Result<LatticePoint> {
    sample_with(ShapeLaw::HyperbolicArea, rng)
}

pub fn sample_with<R: Rng + ?Sized>(law: ShapeLaw, rng: &mut R) -> Result<LatticePoint> {
    let (x, y) = sample_shape(law, rng)?;
    let theta = rng.random::<f64>() * TAU;
    LatticePoint::from_shape(x, y, theta)?.reduce()
}

/// Invariant probability of `{systole < ε}`; exact for `ε ≤ 1`.
pub fn reference_systole_cdf(eps: f64) -> f64 {
    if eps <= 0.0 {
        return 0.0;
    }
    // systole = y^{-1/2}, so {systole < ε} = {y > ε^{-2}}; the domain has
    // full width above y = 1.
    let y = eps.powi(-2);
    if y >= 1.0 {
        return (3.0 / PI) / y;
    }
    // Above the maximal systole (2/√3)^{1/2} the event is everything.
    let y = y.max(Y_MIN);
    // Full width contributes mass 1 above height 1; below it the domain has
    // width 1 − 2√(1 − s²).
    let mut mass = 1.0;
    let n = 2000;
    let h = (1.0 - y) / n as f64;
    for i in 0..n {
        let s = y + (i as f64 + 0.5) * h;
        let half = (0.5 - (1.0 - s * s).max(0.0).sqrt()).max(0.0);
        mass += 2.0 * half * h / (s * s);
    }
    (3.0 / PI) * mass
}

/// Outcome of the stationarity comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub n: usize,
    pub law: ShapeLaw,
    pub systole: KsResult,
    pub second_min: KsResult,
    pub shape_re: KsResult,
    pub shape_im: KsResult,
}

impl StationarityReport {
    pub fn max_distance(&self) -> f64 {
        [self.systole, self.second_min, self.shape_re, self.shape_im]
            .iter()
            .map(|k| k.statistic)
            .fold(0.0, f64::max)
    }
}

/// Compare observables of `n` reference lattices with those of `n`
/// independent reference lattices pushed forward by one step of `dist`.
pub fn stationarity_test(
    dist: &StepDistribution,
    n: usize,
    law: ShapeLaw,
    key: SeedKey,
) -> Result<StationarityReport> {
    if n < 10_000 {
        return Err(Error::Precondition(format!("need n ≥ 10⁴ samples, got {n}")));
    }
    let fresh = {
        let mut rng = key.named("fresh").rng();
        (0..n).map(|_| sample_with(law, &mut rng)).collect::<Result<Vec<_>>>()?
    };
    let pushed = {
        let mut rng = key.named("pushed").rng();
        (0..n)
            .map(|_| {
                let x = sample_with(law, &mut rng)?;
                x.act(&dist.sample_step(&mut rng))
            })
            .collect::<Result<Vec<_>>>()?
    };
    let ks = |f: &dyn Fn(&LatticePoint) -> f64| {
        let a: Vec<f64> = fresh.iter().map(f).collect();
        let b: Vec<f64> = pushed.iter().map(f).collect();
        ks_two_sample(&a, &b)
    };
    Ok(StationarityReport {
        n,
        law,
        systole: ks(&|x| x.systole()),
        second_min: ks(&|x| x.second_min()),
        shape_re: ks(&|x| x.shape().0),
        shape_im: ks(&|x| x.shape().1),
    })
}
