//! Random walks driven by step measures on SL(2,ℝ), acting on the space of
//! unit-covolume lattices and on triangulated translation surfaces, with the
//! Monte Carlo machinery to check drift, recurrence, spectral decay and
//! equidistribution.

pub mod drift;
pub mod equidist;
pub mod error;
pub mod markov;
pub mod par;
pub mod rng;
pub mod sl2;
pub mod space;
pub mod stats;
pub mod step;
pub mod surface;
pub mod torus;

pub use error::{Error, Result};
pub use rng::{RandomStream, SeedKey};
pub use space::{Observation, Point, Space};
pub use sl2::{GroupElement, HalfPlanePoint, KAKForm};
pub use step::{LeftFactor, RadialMeasure, StepDistribution};
