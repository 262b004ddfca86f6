//! Discrete Sobolev and Wiener p-capacities, the first Dirichlet eigenvalue of
//! the p-Laplacian, and capacitary inradius estimates on uniform grids.

pub mod calculus;
pub mod capacity;
pub mod eigen;
pub mod experiments;
pub mod geometry;
pub mod inradius;
pub mod report;
pub mod solver;

pub use calculus::{gradient, lp_norm, rayleigh_quotient, ScalarField, VectorField};
pub use capacity::{capacity, CapacityEstimate, CapacityKind};
pub use eigen::{principal_rayleigh, EigenEstimate, EigenOptions};
pub use geometry::{rasterize, CellMask, DomainSpec, Grid, MaskKind, Shape};
pub use inradius::{strict_inradius, InradiusReport, SearchOptions};
pub use report::{Flag, Report};
pub use solver::{LinearSolver, Method, SolverOptions, SolverStats};
