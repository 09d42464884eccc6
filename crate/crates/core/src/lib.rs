//! Numerical laboratory for the critical-regime energy of planar edge dislocations.
//!
//! The crate covers the full computational chain: dislocation measures on
//! polygonal domains, the expanding-and-merging ball construction with its merge
//! tree, singular strain fields and their quadrature, annulus self-energy solvers,
//! the relaxed line-tension density, flat norms of atomic measures, the strain
//! surgery that trades circulation conditions for measure-valued curls, and the
//! sweep harness used to probe the asymptotic statements at desk scale.

pub mod annulus;
pub mod ball;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod flat;
pub mod geom;
pub mod io;
pub mod model;
pub mod relax;
pub mod surgery;

pub use error::{Error, Result};
pub use geom::{Mat2, Vec2};
