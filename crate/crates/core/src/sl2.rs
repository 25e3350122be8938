//! Exact small-matrix kernel for SL(2,ℝ).

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed deviation of the determinant from 1 before renormalization.
pub const DET_TOLERANCE: f64 = 1e-10;

/// Entries beyond this magnitude are treated as a runaway product.
const ENTRY_LIMIT: f64 = 1e100;

/// Reduce an angle into `[0, 2π)`.
pub fn reduce_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// A real 2×2 matrix of unit determinant, stored row-major.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{:?}, {:?}], [{:?}, {:?}]]", self.a, self.b, self.c, self.d)
    }
}

impl GroupElement {
    /// Build from entries, renormalizing by `1/√det` when `|det − 1| ≤ 1e-10`.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        if ![a, b, c, d].iter().all(|v| v.is_finite()) {
            return Err(Error::Overflow(format!("[[{a}, {b}], [{c}, {d}]]")));
        }
        let det = a * d - b * c;
        if (det - 1.0).abs() > DET_TOLERANCE {
            return Err(Error::Determinant { det });
        }
        Ok(Self::renormalized(a, b, c, d, det))
    }

    fn renormalized(a: f64, b: f64, c: f64, d: f64, det: f64) -> Self {
        // Deviations at the rounding level of the determinant are noise.
        if (det - 1.0).abs() <= 4.0 * f64::EPSILON * ((a * d).abs() + (b * c).abs()) {
            return Self { a, b, c, d };
        }
        let s = det.sqrt().recip();
        Self {
            a: a * s,
            b: b * s,
            c: c * s,
            d: d * s,
        }
    }

    pub const fn identity() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            d: 1.0,
        }
    }

    /// Counterclockwise rotation by `theta`.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = reduce_angle(theta).sin_cos();
        Self { a: c, b: -s, c: s, d: c }
    }

    /// The diagonal flow `a_t = diag(e^t, e^{−t})`.
    pub fn diag_flow(t: f64) -> Self {
        let e = t.exp();
        Self {
            a: e,
            b: 0.0,
            c: 0.0,
            d: e.recip(),
        }
    }

    /// Upper unipotent `[[1, s], [0, 1]]`.
    pub fn shear(s: f64) -> Self {
        Self {
            a: 1.0,
            b: s,
            c: 0.0,
            d: 1.0,
        }
    }

    pub fn entries(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    /// Matrix product `self · other`, determinant renormalized.
    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement> {
        let a = self.a * other.a + self.b * other.c;
        let b = self.a * other.b + self.b * other.d;
        let c = self.c * other.a + self.d * other.c;
        let d = self.c * other.b + self.d * other.d;
        let det = a * d - b * c;
        let finite = [a, b, c, d].iter().all(|v| v.is_finite() && v.abs() < ENTRY_LIMIT);
        if !finite || !(det > 0.0) || !det.is_finite() {
            return Err(Error::Overflow(format!(
                "product [[{a}, {b}], [{c}, {d}]] (det {det})"
            )));
        }
        Ok(Self::renormalized(a, b, c, d, det))
    }

    pub fn inverse(&self) -> GroupElement {
        Self {
            a: self.d,
            b: -self.b,
            c: -self.c,
            d: self.a,
        }
    }

    /// Matrix–vector product.
    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    // Closed-form 2×2 SVD quantities: g = R(φ)·diag(q + r, q − r)·R(θ).
    fn svd_parts(&self) -> (f64, f64, f64, f64) {
        let e = 0.5 * (self.a + self.d);
        let f = 0.5 * (self.a - self.d);
        let g = 0.5 * (self.c + self.b);
        let h = 0.5 * (self.c - self.b);
        let q = e.hypot(h);
        let r = f.hypot(g);
        (q, r, g.atan2(f), h.atan2(e))
    }

    /// Largest singular value; `e^t` for the `t` of the KAK form.
    pub fn operator_norm(&self) -> f64 {
        let (q, r, _, _) = self.svd_parts();
        (q + r).max(1.0)
    }

    /// `g = rotation(theta_pre) · diag_flow(t) · rotation(theta_post)`, `t ≥ 0`.
    pub fn kak_decompose(&self) -> KAKForm {
        let (q, r, a1, a2) = self.svd_parts();
        let sx = q + r;
        let t = if sx > 1.0 { sx.ln() } else { 0.0 };
        if r <= 1e-15 * q {
            return KAKForm {
                theta_pre: reduce_angle(a2),
                t: 0.0,
                theta_post: 0.0,
            };
        }
        KAKForm {
            theta_pre: reduce_angle(0.5 * (a2 + a1)),
            t,
            theta_post: reduce_angle(0.5 * (a2 - a1)),
        }
    }

    /// Möbius action `z ↦ (az + b)/(cz + d)` on the upper half-plane.
    pub fn mobius_act(&self, z: HalfPlanePoint) -> Result<HalfPlanePoint> {
        let (x, y) = (z.re, z.im);
        let dr = self.c * x + self.d;
        let di = self.c * y;
        let den = dr * dr + di * di;
        let re = ((self.a * x + self.b) * dr + self.a * self.c * y * y) / den;
        let im = y * self.det() / den;
        HalfPlanePoint::new(re, im)
    }

    /// Largest entrywise difference.
    pub fn max_entry_diff(&self, other: &GroupElement) -> f64 {
        self.entries()
            .iter()
            .zip(other.entries().iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

impl Default for GroupElement {
    fn default() -> Self {
        Self::identity()
    }
}

/// KAK coordinates of a group element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KAKForm {
    pub theta_pre: f64,
    pub t: f64,
    pub theta_post: f64,
}

impl KAKForm {
    pub fn recompose(&self) -> GroupElement {
        let (s1, c1) = self.theta_pre.sin_cos();
        let (s2, c2) = self.theta_post.sin_cos();
        let (e, ei) = (self.t.exp(), (-self.t).exp());
        // R(θ₁)·diag(e, 1/e)·R(θ₂), expanded.
        let a = e * c1 * c2 - ei * s1 * s2;
        let b = -e * c1 * s2 - ei * s1 * c2;
        let c = e * s1 * c2 + ei * c1 * s2;
        let d = -e * s1 * s2 + ei * c1 * c2;
        let det = a * d - b * c;
        GroupElement::renormalized(a, b, c, d, det)
    }
}

/// A point of the upper half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlanePoint {
    pub re: f64,
    pub im: f64,
}

impl HalfPlanePoint {
    pub fn new(re: f64, im: f64) -> Result<Self> {
        if !(re.is_finite() && im.is_finite() && im > 0.0) {
            return Err(Error::HalfPlane(format!("{re} + {im}i")));
        }
        Ok(Self { re, im })
    }

    pub const fn i() -> Self {
        Self { re: 0.0, im: 1.0 }
    }

    /// Move into the standard fundamental domain `|Re z| ≤ 1/2, |z| ≥ 1`
    /// of the modular group.
    pub fn reduce_to_fundamental_domain(self) -> HalfPlanePoint {
        let (mut x, mut y) = (self.re, self.im);
        for _ in 0..10_000 {
            x -= x.round();
            let r2 = x * x + y * y;
            if r2 >= 1.0 - 1e-15 {
                break;
            }
            x = -x / r2;
            y /= r2;
        }
        HalfPlanePoint { re: x, im: y }
    }

    /// Hyperbolic distance.
    pub fn distance(&self, other: &HalfPlanePoint) -> f64 {
        let dx = self.re - other.re;
        let dy = self.im - other.im;
        let arg = 1.0 + (dx * dx + dy * dy) / (2.0 * self.im * other.im);
        arg.max(1.0).acosh()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(g: &GroupElement, h: &GroupElement, tol: f64) -> bool {
        g.max_entry_diff(h) <= tol
    }

    #[test]
    fn identity_and_group_laws() {
        let g = GroupElement::new(2.0, 3.0, 1.0, 2.0).unwrap();
        assert_eq!(GroupElement::identity().compose(&g).unwrap(), g);
        let r = GroupElement::rotation(0.7)
            .compose(&GroupElement::rotation(6.0))
            .unwrap();
        assert!(close(&r, &GroupElement::rotation(6.7), 1e-14));
        let a = GroupElement::diag_flow(0.3)
            .compose(&GroupElement::diag_flow(1.1))
            .unwrap();
        assert!(close(&a, &GroupElement::diag_flow(1.4), 1e-14));
    }

    #[test]
    fn named_elements() {
        assert_eq!(GroupElement::diag_flow(0.0), GroupElement::identity());
        let minus = GroupElement::rotation(PI);
        assert!(close(&minus, &GroupElement::new(-1.0, 0.0, 0.0, -1.0).unwrap(), 1e-15));
        let two = GroupElement::diag_flow(2f64.ln());
        assert!(close(&two, &GroupElement::new(2.0, 0.0, 0.0, 0.5).unwrap(), 1e-15));
    }

    #[test]
    fn construction_checks() {
        assert!(matches!(
            GroupElement::new(2.0, 0.0, 0.0, 1.0),
            Err(Error::Determinant { .. })
        ));
        assert!(matches!(
            GroupElement::new(f64::NAN, 0.0, 0.0, 1.0),
            Err(Error::Overflow(_))
        ));
        let g = GroupElement::new(1.0 + 1e-11, 0.0, 0.0, 1.0).unwrap();
        assert!((g.det() - 1.0).abs() < 1e-15);
        let big = GroupElement::diag_flow(200.0);
        assert!(matches!(big.compose(&big), Err(Error::Overflow(_))));
    }

    #[test]
    fn kak_examples() {
        let k = GroupElement::identity().kak_decompose();
        assert_eq!((k.theta_pre, k.t, k.theta_post), (0.0, 0.0, 0.0));
        let k = GroupElement::diag_flow(1.5).kak_decompose();
        assert_eq!(k.theta_pre, 0.0);
        assert!((k.t - 1.5).abs() < 1e-14);
        assert_eq!(k.theta_post, 0.0);
        let k = GroupElement::rotation(2.0).kak_decompose();
        assert_eq!(k.t, 0.0);
        assert_eq!(k.theta_post, 0.0);
        assert!((k.theta_pre - 2.0).abs() < 1e-14);
        let g = GroupElement::new(2.0, 3.0, 1.0, 2.0).unwrap();
        assert!(close(&g.kak_decompose().recompose(), &g, 1e-13));
        let k = GroupElement::diag_flow(-1.0).kak_decompose();
        assert!((k.t - 1.0).abs() < 1e-14);
        assert!(close(&k.recompose(), &GroupElement::diag_flow(-1.0), 1e-14));
    }

    #[test]
    fn operator_norms() {
        assert!((GroupElement::rotation(1.234).operator_norm() - 1.0).abs() < 1e-15);
        for t in [0.0, 0.5, 3.0, 20.0] {
            let n = GroupElement::diag_flow(t).operator_norm();
            assert!((n - t.exp()).abs() <= 1e-12 * t.exp().max(1.0));
        }
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((GroupElement::shear(1.0).operator_norm() - golden).abs() < 1e-15);
    }

    #[test]
    fn mobius_examples() {
        let z = HalfPlanePoint::new(0.3, 0.8).unwrap();
        assert_eq!(GroupElement::identity().mobius_act(z).unwrap(), z);
        let w = GroupElement::diag_flow(0.7).mobius_act(HalfPlanePoint::i()).unwrap();
        assert!(w.re.abs() < 1e-15 && (w.im - (1.4f64).exp()).abs() < 1e-13);
        let w = GroupElement::shear(1.0).mobius_act(HalfPlanePoint::i()).unwrap();
        assert_eq!((w.re, w.im), (1.0, 1.0));
    }

    #[test]
    fn half_plane_rejects_and_reduces() {
        assert!(HalfPlanePoint::new(0.0, 0.0).is_err());
        assert!(HalfPlanePoint::new(0.0, -1.0).is_err());
        let z = HalfPlanePoint::new(3.7, 0.01).unwrap().reduce_to_fundamental_domain();
        assert!(z.re.abs() <= 0.5 + 1e-12);
        assert!(z.re * z.re + z.im * z.im >= 1.0 - 1e-12);
    }

    #[test]
    fn angles_reduced() {
        assert_eq!(reduce_angle(-1e-20), 0.0);
        assert!((reduce_angle(-PI) - PI).abs() < 1e-15);
        assert!(reduce_angle(7.0) < TAU);
    }
}
