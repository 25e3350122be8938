//! Saddle connections by unfolding triangles along wedges of directions.

use serde::{Deserialize, Serialize};

use super::{cross_fixed, next, prev, to_float, TranslationSurface, SCALE};
use crate::error::{Error, Result};

/// Cap on processed unfolding states.
pub const FRONTIER_CAP: usize = 1_000_000;
/// Largest supported length bound.
pub const MAX_LENGTH: f64 = 10.0;
const DEDUP_TOLERANCE: f64 = 1e-9;
const COLLINEAR: f64 = 1e-9;

/// A straight segment between cone points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleConnection {
    pub holonomy: [f64; 2],
    pub length: f64,
}

impl SaddleConnection {
    pub fn new(holonomy: [f64; 2]) -> Self {
        Self {
            holonomy,
            length: holonomy[0].hypot(holonomy[1]),
        }
    }
}

fn add(a: [i64; 2], b: [i64; 2]) -> [i64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

/// Distance from the origin to the segment `[a, b]`.
fn segment_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let s = if len2 > 0.0 {
        (-(a[0] * d[0] + a[1] * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (a[0] + s * d[0]).hypot(a[1] + s * d[1])
}

/// Sign of `a × b`, with directions closer than [`COLLINEAR`] radians
/// counted as collinear: rounding must not let a segment squeeze past a
/// cone point it actually hits.
fn strict_side(a: [i64; 2], b: [i64; 2]) -> i32 {
    let c = cross_fixed(a, b) as f64;
    let (fa, fb) = (to_float(a), to_float(b));
    let scale = fa[0].hypot(fa[1]) * fb[0].hypot(fb[1]) * SCALE * SCALE;
    if c.abs() <= COLLINEAR * scale {
        0
    } else if c > 0.0 {
        1
    } else {
        -1
    }
}

/// Unfolding state: the directions strictly between `lo` and `hi` leave
/// the current triangle through half-edge `exit`, whose start sits at `start`
/// in the developed plane (the cone point is the origin).
struct Wedge {
    exit: usize,
    start: [i64; 2],
    lo: [i64; 2],
    hi: [i64; 2],
}

impl TranslationSurface {
    /// All saddle connections of length at most `max_len`, deduplicated by
    /// holonomy and sorted by length, then angle.
    pub fn enumerate_saddle_connections(&self, max_len: f64) -> Result<Vec<SaddleConnection>> {
        if !(max_len > 0.0 && max_len <= MAX_LENGTH) {
            return Err(crate::error::Error::Precondition(format!(
                "length bound {max_len} must lie in (0, {MAX_LENGTH}]"
            )));
        }
        let within = |v: [i64; 2]| {
            let f = to_float(v);
            f[0].hypot(f[1]) <= max_len
        };
        let mut found: Vec<[i64; 2]> = (0..self.num_half_edges())
            .map(|h| self.holonomy_fixed(h))
            .filter(|&v| within(v))
            .collect();

        let mut stack: Vec<Wedge> = (0..self.num_half_edges())
            .map(|h| {
                let a = self.holonomy_fixed(h);
                Wedge {
                    exit: next(h),
                    start: a,
                    lo: a,
                    hi: add(a, self.holonomy_fixed(next(h))),
                }
            })
            .collect();
        let mut processed = 0usize;
        while let Some(w) = stack.pop() {
            processed += 1;
            if processed > FRONTIER_CAP {
                return Err(Error::FrontierCap { cap: FRONTIER_CAP });
            }
            let end = add(w.start, self.holonomy_fixed(w.exit));
            if segment_distance(to_float(w.start), to_float(end)) > max_len {
                continue;
            }
            // Cross into the glued triangle: its sides run end → start → apex → end.
            let k = self.twin(w.exit);
            let apex = add(w.start, self.holonomy_fixed(next(k)));
            let c_lo = strict_side(w.lo, apex);
            let c_hi = strict_side(apex, w.hi);
            if c_lo > 0 && c_hi > 0 {
                if within(apex) {
                    found.push(apex);
                }
                stack.push(Wedge {
                    exit: prev(k),
                    start: apex,
                    lo: apex,
                    hi: w.hi,
                });
                stack.push(Wedge {
                    exit: next(k),
                    start: w.start,
                    lo: w.lo,
                    hi: apex,
                });
            } else if c_lo <= 0 {
                stack.push(Wedge {
                    exit: prev(k),
                    start: apex,
                    ..w
                });
            } else {
                stack.push(Wedge {
                    exit: next(k),
                    ..w
                });
            }
        }

        found.sort_unstable();
        found.dedup();
        let tol = (DEDUP_TOLERANCE * SCALE) as i64;
        let mut kept: Vec<[i64; 2]> = Vec::with_capacity(found.len());
        for v in found {
            let dup = kept
                .iter()
                .rev()
                .take_while(|k| v[0] - k[0] <= tol)
                .any(|k| (v[1] - k[1]).abs() <= tol);
            if !dup {
                kept.push(v);
            }
        }
        let mut out: Vec<SaddleConnection> =
            kept.into_iter().map(|v| SaddleConnection::new(to_float(v))).collect();
        out.sort_by(|a, b| {
            a.length
                .total_cmp(&b.length)
                .then(a.holonomy[1].atan2(a.holonomy[0]).total_cmp(&b.holonomy[1].atan2(b.holonomy[0])))
        });
        Ok(out)
    }
}
