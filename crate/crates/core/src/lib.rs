//! Binary segmentation and inpainting with a squared-curvature regularizer
//! built from straight triple cliques.
//!
//! The pieces, bottom up:
//!
//! - [`grid`]: images, labelings and data terms.
//! - [`neighborhood`]: clique orientations, lengths and weights.
//! - [`energy`]: the curvature energy and its pairwise pseudo-boolean form.
//! - [`maxflow`]: exact min-cut for submodular energies.
//! - [`optimizer`]: trust-region descent, ICM and exhaustive search.
//! - [`geometry`]: closed-form fired areas and the circle experiment.
//! - [`io`]: PGM/PNG reading and writing.

pub mod energy;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod maxflow;
pub mod neighborhood;
pub mod optimizer;

pub use energy::{
    assemble_energy, curvature_energy, decompose_clique, delta_indicator, response_map, QpbBuilder,
    QpbEnergy, ResponseMap,
};
pub use error::{Error, Result};
pub use grid::{gaussian_data_term, GridLabeling, ImageGrid, UnaryField};
pub use maxflow::minimize_submodular;
pub use neighborhood::{CliqueFamily, NeighborhoodMode, NeighborhoodSystem};
pub use optimizer::{brute_force, icm, lsa_tr, OptimizerReport, TrustRegionParams};
