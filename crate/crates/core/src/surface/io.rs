//! Line-based text format.
//!
//! ```text
//! triangles 2
//! 1 0 0 1 -1 -1
//! -1 0 0 -1 1 1
//! gluings 3
//! 0 0 1 0
//! ...
//! ```
//!
//! Each triangle line holds the three side vectors `x₀ y₀ x₁ y₁ x₂ y₂`;
//! each gluing line `t i u j` glues side `i` of triangle `t` to side `j` of
//! triangle `u`. Floats are written in shortest round-trip form, so a
//! surface survives a write/read cycle bit for bit.

use std::fmt::Write as _;

use super::TranslationSurface;
use crate::error::{Error, Result};

impl TranslationSurface {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "triangles {}", self.num_triangles());
        for t in 0..self.num_triangles() {
            let v: Vec<String> = (0..3)
                .flat_map(|i| self.holonomy(3 * t + i))
                .map(|x| format!("{x:?}"))
                .collect();
            let _ = writeln!(out, "{}", v.join(" "));
        }
        let edges: Vec<usize> = self.edges().collect();
        let _ = writeln!(out, "gluings {}", edges.len());
        for h in edges {
            let k = self.twin(h);
            let _ = writeln!(out, "{} {} {} {}", h / 3, h % 3, k / 3, k % 3);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let header = |lines: &mut dyn Iterator<Item = (usize, &str)>, word: &str| -> Result<usize> {
            let (no, line) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: format!("missing `{word}` section"),
            })?;
            let mut it = line.split_whitespace();
            if it.next() != Some(word) {
                return Err(Error::Parse {
                    line: no,
                    msg: format!("expected `{word} <count>`"),
                });
            }
            it.next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| Error::Parse {
                    line: no,
                    msg: format!("bad count after `{word}`"),
                })
        };
        let n = header(&mut lines, "triangles")?;
        let mut hol = Vec::with_capacity(3 * n);
        for _ in 0..n {
            let (no, line) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: "too few triangle lines".into(),
            })?;
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|w| w.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: no,
                    msg: e.to_string(),
                })?;
            if v.len() != 6 {
                return Err(Error::Parse {
                    line: no,
                    msg: format!("expected 6 numbers, found {}", v.len()),
                });
            }
            hol.extend([[v[0], v[1]], [v[2], v[3]], [v[4], v[5]]]);
        }
        let m = header(&mut lines, "gluings")?;
        let mut twin = vec![usize::MAX; 3 * n];
        for _ in 0..m {
            let (no, line) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: "too few gluing lines".into(),
            })?;
            let v: Vec<usize> = line
                .split_whitespace()
                .map(|w| w.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: no,
                    msg: e.to_string(),
                })?;
            let bad = |msg: &str| Error::Parse {
                line: no,
                msg: msg.into(),
            };
            if v.len() != 4 {
                return Err(bad("expected `t i u j`"));
            }
            if v[0] >= n || v[2] >= n || v[1] > 2 || v[3] > 2 {
                return Err(bad("side index out of range"));
            }
            let (a, b) = (3 * v[0] + v[1], 3 * v[2] + v[3]);
            if twin[a] != usize::MAX || twin[b] != usize::MAX {
                return Err(bad("side glued twice"));
            }
            twin[a] = b;
            twin[b] = a;
        }
        if let Some((no, _)) = lines.next() {
            return Err(Error::Parse {
                line: no,
                msg: "trailing content".into(),
            });
        }
        if twin.iter().any(|&k| k == usize::MAX) {
            return Err(Error::InvalidSurface("some sides are not glued".into()));
        }
        TranslationSurface::from_parts(&hol, &twin)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{builtin, BUILTIN_NAMES};
    use super::*;
    use crate::sl2::GroupElement;

    #[test]
    fn round_trip_is_exact() {
        for name in BUILTIN_NAMES {
            let s = builtin(name)
                .unwrap()
                .act(&GroupElement::rotation(0.41))
                .unwrap();
            let back = TranslationSurface::from_text(&s.to_text()).unwrap();
            assert_eq!(back.encoding_bytes(), s.encoding_bytes());
        }
    }

    #[test]
    fn parse_errors_name_lines() {
        let err = TranslationSurface::from_text("triangles 1\n1 2 3\n").unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                line: 2,
                msg: "expected 6 numbers, found 3".into()
            }
        );
    }
}
