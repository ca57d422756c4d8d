//! Nuclear-norm matrix completion together with executable checks of the
//! concentration inequalities and the golfing dual certificate that certify
//! exact recovery.
//!
//! Modules, bottom up:
//! - [`model`]: low-rank instances, coherence, tangent-space projectors.
//! - [`sampling`]: observation sets and the sampling operator `R_Ω`.
//! - [`bounds`]: tail formulas, operator deviations, Monte-Carlo checks.
//! - [`certificate`]: the golfing construction and optimality verdicts.
//! - [`solver`]: singular value thresholding solver for the completion program.
//! - [`experiment`]: config parsing, phase sweeps and verification suites.

pub mod bounds;
pub mod certificate;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod sampling;
pub mod solver;

pub use error::{Error, Result};
pub use linalg::Matrix;
