//! Shared inputs for the benchmarks.

use matchlab_core::geometry::RngStream;
use matchlab_core::sampler::sample_poisson;
use matchlab_core::PointConfiguration;

/// Poisson configuration on the torus of side `side`.
pub fn torus_poisson(side: f64, seed: u64) -> PointConfiguration {
    sample_poisson(side, RngStream::new(seed, 0)).and_then(|mu| mu.periodize()).expect("valid side")
}
