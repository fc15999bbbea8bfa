//! Semi-discrete transport from a uniform density to a point cloud.

mod power;
mod solution;
mod solver;

pub use power::{EdgeTag, PowerCell};
pub use solution::{piece_displacement_moments, second_difference, Interpolant, MapPiece, PotentialPair};
pub use solver::{solve_semidiscrete, SolverSettings};

use crate::geometry::{Domain, Point};
use power::SiteGrid;

/// Result of [`solve_semidiscrete`]. Targets are the merged, reduced cloud;
/// `target_index[k]` is the merged index of input point `k`.
#[derive(Clone, Debug)]
pub struct TransportSolution {
    pub domain: Domain,
    pub density: f64,
    pub targets: Vec<Point>,
    pub masses: Vec<f64>,
    pub target_index: Vec<usize>,
    pub weights: Vec<f64>,
    pub cells: Vec<PowerCell>,
    pub cell_masses: Vec<f64>,
    pub cost: f64,
    /// A posteriori bound on the cost error from the mass residual.
    pub cost_bound: f64,
    pub iterations: usize,
    /// `max_i |cell mass - target mass| / mean target mass`.
    pub max_residual: f64,
    pub(crate) grid: SiteGrid,
    pub(crate) max_radius: f64,
    pub(crate) max_weight: f64,
}
