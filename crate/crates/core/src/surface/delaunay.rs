//! Edge flips, the Delaunay condition and canonical relabeling.

use std::collections::VecDeque;
use std::f64::consts::PI;

use super::{cross_fixed, next, normalize_sign, prev, to_float, TranslationSurface};
use crate::error::{Error, Result};

/// Flip-loop guard.
pub const FLIP_CAP: usize = 100_000;
/// Angle defects `α + β − π` within this band are ties.
pub const TIE_TOLERANCE: f64 = 1e-11;
const PERTURBATION: f64 = 1e-6;
const PERTURBED_TIE: f64 = 1e-3 * PERTURBATION;
/// Longest cycle of passes checked for a repeating twist.
const TWIST_LAG: usize = 4;

fn angle(a: [f64; 2], b: [f64; 2]) -> f64 {
    let c = a[0] * b[1] - a[1] * b[0];
    let d = a[0] * b[0] + a[1] * b[1];
    c.abs().atan2(d)
}

fn neg(v: [f64; 2]) -> [f64; 2] {
    [-v[0], -v[1]]
}

/// `α + β − π` for the quad around an edge, from the four outer sides:
/// `e1, e2` follow the edge in its own triangle, `f1, f2` in the twin's.
fn defect(e1: [f64; 2], e2: [f64; 2], f1: [f64; 2], f2: [f64; 2]) -> f64 {
    angle(e2, neg(e1)) + angle(f2, neg(f1)) - PI
}

/// A fixed generic symmetric perturbation `I + ε·[[cos 1, sin 1], [sin 1, −cos 1]]`.
fn perturb(v: [f64; 2]) -> [f64; 2] {
    let (s, c) = 1f64.sin_cos();
    [
        v[0] + PERTURBATION * (c * v[0] + s * v[1]),
        v[1] + PERTURBATION * (s * v[0] - c * v[1]),
    ]
}

impl TranslationSurface {
    fn quad(&self, h: usize) -> (usize, usize, usize, usize) {
        let k = self.twin(h);
        (next(h), prev(h), next(k), prev(k))
    }

    /// Holonomy `R → S` of the diagonal that replaces `h` after a flip.
    fn flipped_diagonal(&self, h: usize) -> [i64; 2] {
        let (_, e2, f1, _) = self.quad(h);
        let (a, b) = (self.hol[e2], self.hol[f1]);
        [a[0] + b[0], a[1] + b[1]]
    }

    /// Whether flipping `h` yields two positively oriented triangles.
    pub fn is_flippable(&self, h: usize) -> bool {
        let (_, e2, _, f2) = self.quad(h);
        let d = self.flipped_diagonal(h);
        cross_fixed(d, self.hol[f2]) > 0 && cross_fixed([-d[0], -d[1]], self.hol[e2]) > 0
    }

    /// Angle defect `α + β − π` of the edge `h`; positive means not Delaunay.
    pub fn delaunay_defect(&self, h: usize) -> f64 {
        let (e1, e2, f1, f2) = self.quad(h);
        defect(
            self.holonomy(e1),
            self.holonomy(e2),
            self.holonomy(f1),
            self.holonomy(f2),
        )
    }

    /// Every edge satisfies `α + β − π ≤ margin`.
    pub fn is_delaunay(&self, margin: f64) -> bool {
        self.edges().all(|h| self.delaunay_defect(h) <= margin)
    }

    /// Deterministic flip decision. Clear cases follow the sign of the
    /// defect; ties are decided on a fixed generic perturbation of the
    /// surface, and exact degeneracy after that by the lexicographic order
    /// of the two diagonals.
    fn should_flip(&self, h: usize) -> bool {
        let d = self.delaunay_defect(h);
        if d < -TIE_TOLERANCE || !self.is_flippable(h) {
            return false;
        }
        if d > TIE_TOLERANCE {
            return true;
        }
        let (e1, e2, f1, f2) = self.quad(h);
        let dp = defect(
            perturb(self.holonomy(e1)),
            perturb(self.holonomy(e2)),
            perturb(self.holonomy(f1)),
            perturb(self.holonomy(f2)),
        );
        if dp.abs() > PERTURBED_TIE {
            return dp > 0.0;
        }
        normalize_sign(self.flipped_diagonal(h)) < normalize_sign(self.hol[h])
    }

    /// Flip the edge of half-edge `h`: the diagonal of the quad formed by
    /// its two triangles is replaced by the other diagonal.
    pub fn flip(&self, h: usize) -> Result<Self> {
        if !self.is_flippable(h) {
            return Err(Error::InvalidSurface(format!(
                "edge {h} does not bound a strictly convex quadrilateral"
            )));
        }
        let mut s = self.clone();
        s.flip_in_place(h);
        Ok(s)
    }

    // Triangle t = [h: P→Q, e1: Q→R, e2: R→P], u = [k: Q→P, f1: P→S, f2: S→Q].
    // Afterwards t = [R→S, f2, e1] and u = [S→R, e2, f1].
    fn flip_in_place(&mut self, h: usize) {
        let k = self.twin(h);
        let (t, u) = (h / 3, k / 3);
        let (e1, e2, f1, f2) = self.quad(h);
        let d = self.flipped_diagonal(h);
        let map = |x: usize| -> usize {
            match x {
                _ if x == f2 => 3 * t + 1,
                _ if x == e1 => 3 * t + 2,
                _ if x == e2 => 3 * u + 1,
                _ if x == f1 => 3 * u + 2,
                _ => x,
            }
        };
        let moved = [e1, e2, f1, f2];
        let old_hol = moved.map(|x| self.hol[x]);
        let old_twin = moved.map(|x| self.twin[x] as usize);
        // Outside half-edges glued to a moved one follow it.
        for &x in &moved {
            let y = self.twin[x] as usize;
            if !moved.contains(&y) {
                self.twin[y] = map(x) as u32;
            }
        }
        for i in 0..4 {
            let dst = map(moved[i]);
            self.hol[dst] = old_hol[i];
            self.twin[dst] = map(old_twin[i]) as u32;
        }
        self.hol[3 * t] = d;
        self.hol[3 * u] = [-d[0], -d[1]];
        self.twin[3 * t] = (3 * u) as u32;
        self.twin[3 * u] = (3 * t) as u32;
    }

    /// Repair triangles whose orientation collapsed under rounding by
    /// flipping their longest side.
    fn repair_orientation(&mut self) -> Result<()> {
        let mut guard = 0;
        while let Some(t) = (0..self.num_triangles()).find(|&t| self.signed_area_fixed(t) <= 0) {
            guard += 1;
            if guard > FLIP_CAP {
                return Err(Error::FlipLoop { flips: guard });
            }
            let longest = (3 * t..3 * t + 3)
                .max_by_key(|&h| {
                    let v = self.hol[h];
                    v[0] as i128 * v[0] as i128 + v[1] as i128 * v[1] as i128
                })
                .expect("three sides");
            if !self.is_flippable(longest) {
                return Err(Error::InvalidSurface(format!(
                    "degenerate triangle {t} cannot be repaired by a flip"
                )));
            }
            self.flip_in_place(longest);
        }
        Ok(())
    }

    /// One sweep over all edges; returns the flipped half-edges in order.
    fn pass(&mut self) -> Vec<usize> {
        let mut list = Vec::new();
        for h in 0..self.num_half_edges() {
            if h < self.twin(h) && self.should_flip(h) {
                self.flip_in_place(h);
                list.push(h);
            }
        }
        list
    }

    /// Flip until every edge passes the Delaunay test; returns the number
    /// of flips, counting those skipped by twist acceleration.
    pub fn make_delaunay(&mut self) -> Result<usize> {
        self.repair_orientation()?;
        let mut executed = 0;
        let mut total = 0;
        let mut history: VecDeque<(Vec<[i64; 2]>, Vec<u32>, Vec<usize>)> = VecDeque::new();
        loop {
            let start = (self.hol.clone(), self.twin.clone());
            let list = self.pass();
            if list.is_empty() {
                return Ok(total);
            }
            executed += list.len();
            total += list.len();
            if executed >= FLIP_CAP {
                return Err(Error::FlipLoop { flips: executed });
            }
            history.push_front((start.0, start.1, list));
            history.truncate(TWIST_LAG);
            for lag in 1..=history.len() {
                if history[lag - 1].1 != self.twin {
                    continue;
                }
                let lists: Vec<Vec<usize>> =
                    history.iter().take(lag).rev().map(|e| e.2.clone()).collect();
                if let Some(skipped) = self.accelerate_twist(&history[lag - 1].0, &lists) {
                    total += skipped;
                    history.clear();
                    break;
                }
            }
        }
    }

    /// The last `lists.len()` passes took `before` to the current holonomies
    /// with unchanged combinatorics. When the change `Δ` is a family of
    /// parallel vectors fixed by those passes, they act as a twist along a
    /// cylinder and `k` further repetitions land exactly on `hol + k·Δ`;
    /// all orientation conditions along the way are affine in `k`. Jumps to
    /// the last `k` at which the passes still reproduce themselves and
    /// returns the number of flips skipped.
    fn accelerate_twist(&mut self, before: &[[i64; 2]], lists: &[Vec<usize>]) -> Option<usize> {
        let delta: Vec<[i64; 2]> = self
            .hol
            .iter()
            .zip(before)
            .map(|(a, b)| [a[0] - b[0], a[1] - b[1]])
            .collect();
        let dir = *delta.iter().find(|d| **d != [0, 0])?;
        if delta.iter().any(|d| cross_fixed(*d, dir) != 0) {
            return None;
        }
        let mut image = Self {
            hol: delta.clone(),
            twin: self.twin.clone(),
        };
        for l in lists {
            for &h in l {
                image.flip_in_place(h);
            }
        }
        if image.hol != delta {
            return None;
        }
        let shifted = |k: i64| -> Option<Self> {
            let mut hol = Vec::with_capacity(delta.len());
            for (a, d) in self.hol.iter().zip(&delta) {
                let x = a[0] as i128 + k as i128 * d[0] as i128;
                let y = a[1] as i128 + k as i128 * d[1] as i128;
                if x.abs() >= 1i128 << 62 || y.abs() >= 1i128 << 62 {
                    return None;
                }
                hol.push([x as i64, y as i64]);
            }
            Some(Self {
                hol,
                twin: self.twin.clone(),
            })
        };
        // Passes from hol + (k−1)Δ reproduce the same flips and end at hol + kΔ.
        let reproduces = |k: i64| -> bool {
            let (Some(mut s), Some(target)) = (shifted(k - 1), shifted(k)) else {
                return false;
            };
            for l in lists {
                if s.pass() != *l {
                    return false;
                }
            }
            s.hol == target.hol
        };
        if !reproduces(1) {
            return None;
        }
        let (mut good, mut bad) = (1i64, 2i64);
        while reproduces(bad) {
            good = bad;
            bad = bad.checked_mul(2)?;
        }
        while bad - good > 1 {
            let mid = good + (bad - good) / 2;
            if reproduces(mid) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        *self = shifted(good)?;
        Some(good as usize * lists.iter().map(Vec::len).sum::<usize>())
    }

    /// Delaunay triangulation with canonical labels: equal surfaces give
    /// identical encodings.
    pub fn canonicalize(&self) -> Result<Self> {
        let mut s = self.clone();
        s.make_delaunay()?;
        Ok(s.canonical_relabel())
    }

    /// Relabel by breadth-first traversal from the half-edge with the
    /// lexicographically least holonomy. When several half-edges share it
    /// the smallest resulting encoding wins.
    pub fn canonical_relabel(&self) -> Self {
        let least = (0..self.num_half_edges())
            .map(|h| self.hol[h])
            .min()
            .expect("surface has half-edges");
        (0..self.num_half_edges())
            .filter(|&h| self.hol[h] == least)
            .map(|h| self.relabel_from(h))
            .min_by(|a, b| a.encoding().cmp(&b.encoding()))
            .expect("at least one candidate")
    }

    fn relabel_from(&self, start: usize) -> Self {
        let tris = self.num_triangles();
        let mut index = vec![usize::MAX; tris];
        let mut offset = vec![0usize; tris];
        let mut queue = VecDeque::new();
        let mut count = 0;
        index[start / 3] = 0;
        offset[start / 3] = start % 3;
        queue.push_back(start / 3);
        count += 1;
        while let Some(t) = queue.pop_front() {
            for s in 0..3 {
                let k = self.twin(3 * t + (offset[t] + s) % 3);
                let u = k / 3;
                if index[u] == usize::MAX {
                    index[u] = count;
                    offset[u] = k % 3;
                    count += 1;
                    queue.push_back(u);
                }
            }
        }
        let new_of = |h: usize| 3 * index[h / 3] + (h % 3 + 3 - offset[h / 3]) % 3;
        let mut hol = vec![[0i64; 2]; self.num_half_edges()];
        let mut twin = vec![0u32; self.num_half_edges()];
        for h in 0..self.num_half_edges() {
            let j = new_of(h);
            hol[j] = self.hol[h];
            twin[j] = new_of(self.twin(h)) as u32;
        }
        Self { hol, twin }
    }

    /// Largest angle defect over all edges.
    pub fn max_defect(&self) -> f64 {
        self.edges()
            .map(|h| self.delaunay_defect(h))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Holonomies of all edges, one per glued pair, sign-normalized.
    pub fn edge_vectors(&self) -> Vec<[f64; 2]> {
        self.edges().map(|h| to_float(normalize_sign(self.hol[h]))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::builtin;
    use crate::sl2::GroupElement;

    #[test]
    fn flip_twice_restores_geometry() {
        let s = builtin("golden_L").unwrap();
        for h in s.edges().collect::<Vec<_>>() {
            if let Ok(f) = s.flip(h) {
                assert!((f.area() - s.area()).abs() < 1e-15);
                let back = f.flip(3 * (h / 3)).unwrap();
                let mut a = back.edge_vectors();
                let mut b = s.edge_vectors();
                a.sort_by(|x, y| x.partial_cmp(y).unwrap());
                b.sort_by(|x, y| x.partial_cmp(y).unwrap());
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn sheared_square_matches_square() {
        let sq = builtin("square_torus").unwrap().canonicalize().unwrap();
        for k in [1.0, 2.0, -3.0] {
            let sh = sq.act(&GroupElement::shear(k)).unwrap();
            assert_eq!(sh.encoding_bytes(), sq.encoding_bytes());
        }
        assert_eq!(sq.canonicalize().unwrap(), sq);
    }

    #[test]
    fn twist_acceleration_matches_plain_flipping() {
        for (name, t, k) in [("square_torus", 3.5, 0.37), ("golden_L", 3.0, 0.61), ("regular_octagon", 3.0, -0.29)] {
            let g = GroupElement::shear(k).compose(&GroupElement::diag_flow(-t)).unwrap();
            let s = builtin(name).unwrap().apply_linear(&g).unwrap();
            let mut fast = s.clone();
            let n = fast.make_delaunay().unwrap();
            let mut slow = s.clone();
            slow.repair_orientation().unwrap();
            let mut m = 0;
            loop {
                let l = slow.pass();
                if l.is_empty() {
                    break;
                }
                m += l.len();
            }
            assert!(n > 100, "{name}: {n} flips");
            assert_eq!(n, m);
            assert_eq!(fast.canonical_relabel(), slow.canonical_relabel());
        }
    }
}
