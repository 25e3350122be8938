//! Built-in surfaces: the square torus and two points of the stratum H(2)
//! whose SL(2,ℝ)-orbits are closed.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::TranslationSurface;
use crate::error::{Error, Result};

pub const BUILTIN_NAMES: [&str; 3] = ["square_torus", "golden_L", "regular_octagon"];

/// The named surface, triangulated and scaled to unit area.
pub fn builtin(name: &str) -> Result<TranslationSurface> {
    match name {
        "square_torus" => {
            let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
            from_polygon(&pts, &[[0, 1, 2], [0, 2, 3]], &[((0, 1), (2, 3)), ((1, 2), (3, 0))])
        }
        "golden_L" => {
            let p = (1.0 + 5f64.sqrt()) / 2.0;
            // A φ×φ square with a unit square on top, flush left.
            let pts = [
                [0.0, 0.0],     // A
                [1.0, 0.0],     // B
                [p, 0.0],       // C
                [p, p],         // D
                [1.0, p],       // E
                [1.0, p + 1.0], // F
                [0.0, p + 1.0], // G
                [0.0, p],       // H
            ];
            let tris = [[7, 4, 5], [7, 5, 6], [0, 1, 4], [0, 4, 7], [1, 2, 3], [1, 3, 4]];
            let glue = [((0, 1), (5, 6)), ((1, 2), (3, 4)), ((2, 3), (7, 0)), ((4, 5), (6, 7))];
            from_polygon(&pts, &tris, &glue)
        }
        "regular_octagon" => {
            let pts: Vec<[f64; 2]> = (0..8)
                .map(|k| {
                    let a = PI / 8.0 + k as f64 * PI / 4.0;
                    [a.cos(), a.sin()]
                })
                .collect();
            let tris: Vec<[usize; 3]> = (1..7).map(|k| [0, k, k + 1]).collect();
            let glue: Vec<_> = (0..4).map(|k| ((k, k + 1), (k + 4, (k + 5) % 8))).collect();
            from_polygon(&pts, &tris, &glue)
        }
        other => Err(Error::UnknownSurface(other.to_string())),
    }
}

/// Triangulated polygon with boundary sides glued in pairs. Triangles are
/// counter-clockwise vertex triples; interior sides are matched with their
/// reverses, and each listed pair `(p→q, r→s)` of boundary sides is glued.
fn from_polygon(
    pts: &[[f64; 2]],
    tris: &[[usize; 3]],
    glue: &[((usize, usize), (usize, usize))],
) -> Result<TranslationSurface> {
    let area: f64 = tris
        .iter()
        .map(|t| {
            let (a, b, c) = (pts[t[0]], pts[t[1]], pts[t[2]]);
            0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        })
        .sum();
    let k = area.sqrt().recip();
    let mut side = HashMap::new();
    let mut hol = Vec::with_capacity(3 * tris.len());
    for (t, tri) in tris.iter().enumerate() {
        for i in 0..3 {
            let (p, q) = (tri[i], tri[(i + 1) % 3]);
            side.insert((p, q), 3 * t + i);
            hol.push([k * (pts[q][0] - pts[p][0]), k * (pts[q][1] - pts[p][1])]);
        }
    }
    let mut twin = vec![usize::MAX; hol.len()];
    for (&(p, q), &h) in &side {
        if let Some(&r) = side.get(&(q, p)) {
            twin[h] = r;
        }
    }
    for &(a, b) in glue {
        let missing = || Error::InvalidSurface(format!("glued side {a:?} or {b:?} missing"));
        let ha = *side.get(&a).ok_or_else(missing)?;
        let hb = *side.get(&b).ok_or_else(missing)?;
        twin[ha] = hb;
        twin[hb] = ha;
    }
    TranslationSurface::from_parts(&hol, &twin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_valid() {
        let sq = builtin("square_torus").unwrap();
        assert_eq!(sq.num_triangles(), 2);
        assert!((sq.area() - 1.0).abs() < 1e-12);
        assert!((sq.canonicalize().unwrap().flat_systole().length - 1.0).abs() < 1e-12);
        let l = builtin("golden_L").unwrap();
        assert_eq!(l.num_triangles(), 6);
        assert!((l.area() - 1.0).abs() < 1e-12);
        let o = builtin("regular_octagon").unwrap();
        assert_eq!(o.num_triangles(), 6);
        assert!((o.area() - 1.0).abs() < 1e-12);
        assert!(matches!(builtin("klein_bottle"), Err(Error::UnknownSurface(_))));
    }
}
