//! The two walk spaces behind one interface: lattices and translation
//! surfaces.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sl2::GroupElement;
use crate::surface::{builtin, TranslationSurface};
use crate::torus::{self, LatticePoint};

/// What a trajectory records per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub systole: f64,
    pub second_min: f64,
    pub shape_re: f64,
    pub shape_im: f64,
    pub frame_angle: f64,
    /// Hash of the canonical encoding; zero for lattices.
    pub code_hash: u64,
}

/// A real function of the observation vector.
pub type ObsFn = Arc<dyn Fn(&Observation) -> f64 + Send + Sync>;

/// A point of a walk space.
#[derive(Debug, Clone, PartialEq)]
pub enum Point {
    Lattice(LatticePoint),
    Surface(TranslationSurface),
}

impl Point {
    pub fn act(&self, g: &GroupElement) -> Result<Point> {
        Ok(match self {
            Point::Lattice(x) => Point::Lattice(x.act(g)?),
            Point::Surface(s) => Point::Surface(s.act(g)?),
        })
    }

    pub fn systole(&self) -> f64 {
        match self {
            Point::Lattice(x) => x.systole(),
            Point::Surface(s) => s.flat_systole().length,
        }
    }

    pub fn observe(&self) -> Observation {
        match self {
            Point::Lattice(x) => {
                let (re, im) = x.shape();
                Observation {
                    systole: x.systole(),
                    second_min: x.second_min(),
                    shape_re: re,
                    shape_im: im,
                    frame_angle: x.frame_angle(),
                    code_hash: 0,
                }
            }
            Point::Surface(s) => {
                let o = s.observables();
                Observation {
                    systole: o.systole,
                    second_min: o.second_min,
                    shape_re: o.shape_re,
                    shape_im: o.shape_im,
                    frame_angle: o.frame_angle,
                    code_hash: o.code_hash,
                }
            }
        }
    }
}

/// A walk space with its base point.
#[derive(Debug, Clone, PartialEq)]
pub enum Space {
    Torus,
    Surface {
        label: String,
        base: TranslationSurface,
    },
}

impl Space {
    pub fn torus() -> Self {
        Space::Torus
    }

    pub fn builtin_surface(name: &str) -> Result<Self> {
        Self::surface(name, builtin(name)?)
    }

    pub fn surface(label: &str, s: TranslationSurface) -> Result<Self> {
        Ok(Space::Surface {
            label: label.to_string(),
            base: s.canonicalize()?,
        })
    }

    /// `torus` or `surface:<label>`.
    pub fn tag(&self) -> String {
        match self {
            Space::Torus => "torus".into(),
            Space::Surface { label, .. } => format!("surface:{label}"),
        }
    }

    /// ℤ² for the torus, the canonical base surface otherwise.
    pub fn base_point(&self) -> Point {
        match self {
            Space::Torus => Point::Lattice(LatticePoint::standard()),
            Space::Surface { base, .. } => Point::Surface(base.clone()),
        }
    }

    pub fn has_reference(&self) -> bool {
        matches!(self, Space::Torus)
    }

    /// A draw from the invariant probability measure, where a closed-form
    /// sampler exists.
    pub fn sample_reference<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Point> {
        match self {
            Space::Torus => Ok(Point::Lattice(torus::sample_reference(rng)?)),
            Space::Surface { label, .. } => Err(Error::Precondition(format!(
                "no closed-form reference sampler for surface `{label}`"
            ))),
        }
    }
}
