//! State-feedback eigenstructure assignment for reachable LTI pairs.
//!
//! Any admissible closed-loop Jordan structure (repeated and defective
//! eigenvalues included) is placed through a parametric form with `m * n`
//! real parameters, which is then searched for robust or low-gain feedback.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod eigstructure;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod optimize;
pub mod placement;
pub mod system;

pub use eigstructure::{
    check_admissible, controllability_indices, AdmissibilityReport, EigStructure, EigenGroup,
};
pub use error::{Error, Result};
pub use linalg::{CMat, RMat, ToleranceConfig};
pub use metrics::Metrics;
pub use optimize::{minimize, Method, ObjectiveSpec, OptOptions, OptResult};
pub use placement::{ChainSet, ParameterMatrix, PencilData, PlacementResult, Placer};
pub use system::System;

pub use num_complex::Complex64;
