//! Quadratic optimal transport between Lebesgue measure and point clouds on
//! squares, balls and flat tori, together with the multiscale diagnostics used
//! to study the optimal matching of a Poisson point process.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: domains, the periodic metric, dyadic ladders, seeded random
//!   streams and exact polygon / polygon-disk integration.
//! * [`sampler`]: Poisson and fixed-count point configurations.
//! * [`assign`]: the exact discrete oracle (network simplex and Jonker-Volgenant).
//! * [`semidiscrete`]: Laguerre-cell solver (damped Newton) and the map, potential
//!   and interpolation queries built on its solution.
//! * [`multiscale`]: data-term scans, the minimal radius and the shift.
//! * [`harmonic`]: least-squares harmonic-gradient fits of the displacement.
//! * [`campanato`]: the affine renormalisation iteration.
//! * [`ensemble`]: seeded Monte Carlo driver, scaling fits and tail tables.

pub mod assign;
pub mod campanato;
pub mod ensemble;
mod error;
pub mod geometry;
pub mod harmonic;
pub mod multiscale;
pub mod sampler;
pub mod semidiscrete;

pub use error::{Error, Result};
pub use geometry::{dist_per, Domain, DyadicLadder, Mat2, PerMetric, Point, RngStream};
pub use sampler::PointConfiguration;
pub use semidiscrete::{solve_semidiscrete, SolverSettings, TransportSolution};
pub use campanato::{CampanatoSettings, CampanatoTrace};
pub use ensemble::{EnsembleConfig, RunRecord};
