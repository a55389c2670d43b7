//! Random walks conditioned to stay in Weyl chambers of type A, C and D.
//!
//! The crate is organised around the objects of the conditioning problem:
//!
//! - [`chambers`]: chamber geometry and the réduite functions `h^Z`.
//! - [`walk`]: step laws, their moment assumptions, sampled paths and
//!   stopping times.
//! - [`exact`]: lattice dynamic programs giving exact survival
//!   probabilities, restricted expectations and `V^Z`.
//! - [`htransform`]: Monte Carlo estimators of `V^Z`, Doob-transformed
//!   kernels and the alternate type-C transform.
//! - [`asymptotics`]: tail constants, the limiting measure `mu^Z` and
//!   power-law fits of survival curves.

pub mod asymptotics;
pub mod chambers;
pub mod error;
pub mod exact;
pub mod htransform;
pub mod stream;
pub mod walk;

pub use chambers::ChamberType;
pub use error::{Error, Result};
pub use stream::RandomStream;
pub use walk::{Rational, StepDistribution};

/// Schema tag written into every JSON record.
pub const SCHEMA: &str = "weylwalk/1";
