//! Time-discrete image metamorphosis.
//!
//! Images live on uniform nodal grids over the unit square. A single
//! matching functional measures the cost of deforming one image into the
//! next; summing it along a chain of images gives a discrete path energy
//! whose minimizers are discrete geodesics. Geodesic interpolation in turn
//! drives a de Casteljau recursion that evaluates Bézier curves of images.

pub mod bezier;
mod cg;
pub mod deformation;
pub mod error;
pub mod geodesic;
pub mod grid;
pub mod matching;
pub mod oracle;
pub mod scenes;
mod sine;
mod space;

pub use bezier::{bezier_curve, de_casteljau_evaluate, piecewise_geodesic, BezierCurve, BezierJob, SolveRecord};
pub use deformation::{
    compose_motion_path, dirichlet_energy, identity, laplacian_energy, matching_energy, matching_gradient,
    min_jacobian_determinant, warp_image, DeformationField, EnergyBreakdown, MatchingParams,
};
pub use error::{Error, Result};
pub use geodesic::{
    interpolate, material_derivative, optimal_images_given_deformations, path_energy, solve_geodesic, DiscretePath,
    GeodesicSettings, GeodesicSolution, OuterRecord,
};
pub use grid::{
    l2_distance, linear_blend, max_pyramid_depth, prolongate, restrict, sample_bilinear, trapezoid_weights,
    GridPyramid, ImageGrid,
};
pub use matching::{register_pair, register_pair_multilevel, Registration, RegistrationSettings};
