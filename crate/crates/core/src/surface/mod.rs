//! Translation surfaces stored as triangulations with explicit edge
//! holonomies.
//!
//! Half-edge `h = 3t + i` is the `i`-th side of triangle `t`; the three sides
//! run counter-clockwise and sum to zero. `twin(h)` is the side glued to `h`
//! and carries the opposite vector. Holonomies are kept in fixed point
//! (units of 2⁻⁴⁰) so that closure, gluing and the canonical encoding are
//! exact; only the action of a non-integral matrix rounds.

mod builtin;
mod delaunay;
mod io;
mod saddle;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sl2::GroupElement;

pub use builtin::{builtin, BUILTIN_NAMES};
pub use delaunay::{FLIP_CAP, TIE_TOLERANCE};
pub use saddle::{SaddleConnection, FRONTIER_CAP, MAX_LENGTH};

/// Fixed-point scale of stored holonomies.
pub const SCALE: f64 = (1u64 << 40) as f64;
const FIXED_LIMIT: f64 = (1u64 << 62) as f64;
/// Tolerance on closure and gluing of user-supplied float data.
pub const GLUE_TOLERANCE: f64 = 1e-10;
/// Tolerance on total area.
pub const AREA_TOLERANCE: f64 = 1e-8;
const RENORMALIZE_AT: f64 = 1e-11;

pub(crate) fn to_fixed(x: f64) -> Result<i64> {
    let v = (x * SCALE).round();
    if !v.is_finite() || v.abs() >= FIXED_LIMIT {
        return Err(Error::Overflow(format!("holonomy component {x} out of range")));
    }
    Ok(v as i64)
}

pub(crate) fn to_float(v: [i64; 2]) -> [f64; 2] {
    [v[0] as f64 / SCALE, v[1] as f64 / SCALE]
}

pub(crate) fn cross_fixed(a: [i64; 2], b: [i64; 2]) -> i128 {
    a[0] as i128 * b[1] as i128 - a[1] as i128 * b[0] as i128
}

/// A triangulated translation surface.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TranslationSurface {
    hol: Vec<[i64; 2]>,
    twin: Vec<u32>,
}

/// Per-point observables of a Delaunay-canonical surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceObservables {
    pub systole: f64,
    pub second_min: f64,
    pub shape_re: f64,
    pub shape_im: f64,
    pub frame_angle: f64,
    pub code_hash: u64,
}

#[inline]
pub(crate) fn next(h: usize) -> usize {
    h - h % 3 + (h % 3 + 1) % 3
}

#[inline]
pub(crate) fn prev(h: usize) -> usize {
    h - h % 3 + (h % 3 + 2) % 3
}

impl TranslationSurface {
    /// Build from float holonomies and a gluing involution on half-edges.
    /// Closure and gluing must hold within [`GLUE_TOLERANCE`]; the stored
    /// values are then made exactly consistent.
    pub fn from_parts(hol: &[[f64; 2]], twin: &[usize]) -> Result<Self> {
        let n = hol.len();
        if n == 0 || n % 3 != 0 || twin.len() != n {
            return Err(Error::InvalidSurface(format!(
                "{n} half-edges with {} gluing entries",
                twin.len()
            )));
        }
        for (h, &k) in twin.iter().enumerate() {
            if k >= n || k == h || twin[k] != h {
                return Err(Error::InvalidSurface(format!(
                    "gluing is not a fixed-point-free involution at half-edge {h}"
                )));
            }
            let (a, b) = (hol[h], hol[k]);
            if (a[0] + b[0]).abs() > GLUE_TOLERANCE || (a[1] + b[1]).abs() > GLUE_TOLERANCE {
                return Err(Error::InvalidSurface(format!(
                    "glued half-edges {h} and {k} do not carry opposite vectors"
                )));
            }
        }
        for t in 0..n / 3 {
            let s = [0, 1, 2].map(|i| hol[3 * t + i]);
            let sx = s[0][0] + s[1][0] + s[2][0];
            let sy = s[0][1] + s[1][1] + s[2][1];
            if sx.abs() > GLUE_TOLERANCE || sy.abs() > GLUE_TOLERANCE {
                return Err(Error::InvalidSurface(format!("triangle {t} does not close")));
            }
        }
        let twin32: Vec<u32> = twin.iter().map(|&k| k as u32).collect();
        let fixed = hol
            .iter()
            .map(|v| Ok([to_fixed(v[0])?, to_fixed(v[1])?]))
            .collect::<Result<Vec<_>>>()?;
        let s = Self::closed(twin32, |h| fixed[h])?;
        s.check_orientation()?;
        let area = s.area();
        if (area - 1.0).abs() > AREA_TOLERANCE {
            return Err(Error::InvalidSurface(format!("area {area} is not 1")));
        }
        Ok(s)
    }

    /// Assemble exact holonomies from approximate ones: the edges outside a
    /// spanning tree of the dual graph are taken as given, and the tree
    /// edges are solved from triangle closure by peeling leaves.
    fn closed(twin: Vec<u32>, approx: impl Fn(usize) -> [i64; 2]) -> Result<Self> {
        let n = twin.len();
        let tris = n / 3;
        let mut parent_edge = vec![usize::MAX; tris];
        let mut seen = vec![false; tris];
        let mut order = Vec::with_capacity(tris);
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(t) = queue.pop_front() {
            order.push(t);
            for h in 3 * t..3 * t + 3 {
                let k = twin[h] as usize;
                let u = k / 3;
                if !seen[u] {
                    seen[u] = true;
                    parent_edge[u] = k;
                    queue.push_back(u);
                }
            }
        }
        if order.len() != tris {
            return Err(Error::InvalidSurface("triangulation is not connected".into()));
        }
        let mut tree = vec![false; n];
        for &pe in parent_edge.iter().filter(|&&pe| pe != usize::MAX) {
            tree[pe] = true;
            tree[twin[pe] as usize] = true;
        }
        let mut hol = vec![[0i64; 2]; n];
        for h in 0..n {
            let k = twin[h] as usize;
            if !tree[h] && h < k {
                let v = approx(h);
                hol[h] = v;
                hol[k] = [-v[0], -v[1]];
            }
        }
        for &t in order.iter().skip(1).rev() {
            let pe = parent_edge[t];
            let (a, b) = (hol[next(pe)], hol[prev(pe)]);
            let v = [-(a[0] + b[0]), -(a[1] + b[1])];
            hol[pe] = v;
            hol[twin[pe] as usize] = [-v[0], -v[1]];
        }
        Ok(Self { hol, twin })
    }

    fn check_orientation(&self) -> Result<()> {
        for t in 0..self.num_triangles() {
            if self.signed_area_fixed(t) <= 0 {
                return Err(Error::InvalidSurface(format!(
                    "triangle {t} is not positively oriented"
                )));
            }
        }
        Ok(())
    }

    pub fn num_triangles(&self) -> usize {
        self.hol.len() / 3
    }

    pub fn num_half_edges(&self) -> usize {
        self.hol.len()
    }

    pub fn holonomy(&self, h: usize) -> [f64; 2] {
        to_float(self.hol[h])
    }

    pub(crate) fn holonomy_fixed(&self, h: usize) -> [i64; 2] {
        self.hol[h]
    }

    pub fn twin(&self, h: usize) -> usize {
        self.twin[h] as usize
    }

    /// Twice the signed area of triangle `t`, in squared fixed-point units.
    pub(crate) fn signed_area_fixed(&self, t: usize) -> i128 {
        cross_fixed(self.hol[3 * t], self.hol[3 * t + 1])
    }

    pub fn area(&self) -> f64 {
        let twice: i128 = (0..self.num_triangles()).map(|t| self.signed_area_fixed(t)).sum();
        twice as f64 / (2.0 * SCALE * SCALE)
    }

    /// Edges as one representative half-edge per glued pair.
    pub fn edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.hol.len()).filter(move |&h| h < self.twin[h] as usize)
    }

    /// Apply `g` to every edge vector, without re-triangulating.
    pub fn apply_linear(&self, g: &GroupElement) -> Result<Self> {
        let mut mapped = vec![[0i64; 2]; self.hol.len()];
        for (h, m) in mapped.iter_mut().enumerate() {
            let v = g.apply(self.holonomy(h));
            *m = [to_fixed(v[0])?, to_fixed(v[1])?];
        }
        let mut s = Self::closed(self.twin.clone(), |h| mapped[h])?;
        s.renormalize_area()?;
        Ok(s)
    }

    fn renormalize_area(&mut self) -> Result<()> {
        let area = self.area();
        if (area - 1.0).abs() > RENORMALIZE_AT && area > 0.0 {
            let k = area.sqrt().recip();
            let scaled = (0..self.hol.len())
                .map(|h| {
                    let v = self.holonomy(h);
                    Ok([to_fixed(k * v[0])?, to_fixed(k * v[1])?])
                })
                .collect::<Result<Vec<_>>>()?;
            *self = Self::closed(std::mem::take(&mut self.twin), |h| scaled[h])?;
        }
        Ok(())
    }

    /// `g·s`, Delaunay-canonicalized.
    pub fn act(&self, g: &GroupElement) -> Result<Self> {
        self.apply_linear(g)?.canonicalize()
    }

    /// Shortest Delaunay edge. Requires a Delaunay triangulation.
    pub fn flat_systole(&self) -> SaddleConnection {
        let (v1, _) = self.two_shortest();
        SaddleConnection::new(v1)
    }

    /// Shortest edge, and shortest edge not parallel to it. Ties are broken
    /// by the fixed-point holonomy so the choice is deterministic.
    fn two_shortest(&self) -> ([f64; 2], [f64; 2]) {
        let key = |h: usize| {
            let v = self.hol[h];
            let n2 = v[0] as i128 * v[0] as i128 + v[1] as i128 * v[1] as i128;
            (n2, normalize_sign(v))
        };
        let first = self.edges().min_by_key(|&h| key(h)).expect("surface has edges");
        let u = self.hol[first];
        let second = self
            .edges()
            .filter(|&h| cross_fixed(u, self.hol[h]) != 0)
            .min_by_key(|&h| key(h))
            .expect("a triangle has two non-parallel sides");
        (
            to_float(normalize_sign(u)),
            to_float(normalize_sign(self.hol[second])),
        )
    }

    /// Observables of a Delaunay-canonical surface.
    pub fn observables(&self) -> SurfaceObservables {
        let (v1, mut v2) = self.two_shortest();
        let n1 = v1[0] * v1[0] + v1[1] * v1[1];
        let mut im = (v1[0] * v2[1] - v1[1] * v2[0]) / n1;
        if im < 0.0 {
            v2 = [-v2[0], -v2[1]];
            im = -im;
        }
        let re = (v1[0] * v2[0] + v1[1] * v2[1]) / n1;
        let shape = crate::sl2::HalfPlanePoint { re, im }.reduce_to_fundamental_domain();
        SurfaceObservables {
            systole: n1.sqrt(),
            second_min: v2[0].hypot(v2[1]),
            shape_re: shape.re,
            shape_im: shape.im,
            frame_angle: v1[1].atan2(v1[0]).rem_euclid(std::f64::consts::PI),
            code_hash: self.code_hash(),
        }
    }

    /// Exact encoding: per half-edge the fixed-point holonomy and the twin.
    pub fn encoding(&self) -> Vec<i64> {
        let mut out = Vec::with_capacity(3 * self.hol.len());
        for (v, &k) in self.hol.iter().zip(&self.twin) {
            out.extend_from_slice(&[v[0], v[1], k as i64]);
        }
        out
    }

    pub fn encoding_bytes(&self) -> Vec<u8> {
        self.encoding().iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    /// FNV-1a hash of the encoding.
    pub fn code_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.encoding_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

/// Representative of `±v` with positive first nonzero coordinate.
pub(crate) fn normalize_sign(v: [i64; 2]) -> [i64; 2] {
    if v[0] > 0 || (v[0] == 0 && v[1] > 0) {
        v
    } else {
        [-v[0], -v[1]]
    }
}
