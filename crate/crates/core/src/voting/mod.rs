//! Candidate generation, accumulation and the coarse-to-fine estimator.

mod candidates;
mod grid;
mod pipeline;
mod sphere;

pub use candidates::{
    center_candidates, circle_frame, orientation_candidates, CircleTable, ConeTables, PairFrame,
};
pub use grid::VoteGrid;
pub use pipeline::{
    disambiguate, disambiguation_scores, orthogonalize, Backtrace, Detection, OrientationVotes,
    PoseEstimate, StageTimings, Voter,
};
pub use sphere::{OrientationHistogram, SphereLattice};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Knobs of the voting pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct VotingConfig<T: Real> {
    /// Candidates per circle and per cone.
    pub k_circle: usize,
    /// Edge of a center-grid voxel, meters.
    pub grid_resolution: T,
    /// Target spacing of the orientation lattice, degrees.
    pub orientation_resolution: f64,
    /// Back-trace radius around the voted center, meters.
    pub epsilon: T,
    pub n_pairs: usize,
    pub seed: u64,
    /// Vote orientation and scale only with pairs that back-trace to the
    /// winning center.
    pub coarse_to_fine: bool,
    /// Resolve the antipodal orientation peak with the flip statistics.
    pub disambiguate: bool,
    /// Take orientation peaks on neighbor-smoothed counts.
    pub cap_smoothing: bool,
    /// Sample each orientation cone at a fixed arc spacing (`ceil(K sin θ)`
    /// candidates) rather than `K` candidates whatever its size.
    pub uniform_arc: bool,
}

impl<T: Real> Default for VotingConfig<T> {
    fn default() -> Self {
        let grid_resolution = lit(0.004);
        VotingConfig {
            k_circle: 72,
            grid_resolution,
            orientation_resolution: 1.5,
            epsilon: grid_resolution * lit(3.0),
            n_pairs: 100_000,
            seed: 0,
            coarse_to_fine: true,
            disambiguate: true,
            cap_smoothing: false,
            uniform_arc: true,
        }
    }
}

impl<T: Real> VotingConfig<T> {
    /// Default configuration at the given grid resolution, with
    /// `epsilon = 3 × resolution`.
    pub fn with_grid_resolution(grid_resolution: T) -> Self {
        VotingConfig {
            grid_resolution,
            epsilon: grid_resolution * lit(3.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_circle == 0 {
            return Err(Error::invalid("k_circle", "must be positive"));
        }
        if !(self.grid_resolution > T::zero()) {
            return Err(Error::invalid("grid_resolution", "must be positive"));
        }
        if !(self.orientation_resolution > 0.0) {
            return Err(Error::invalid("orientation_resolution", "must be positive"));
        }
        if !(self.epsilon > T::zero()) {
            return Err(Error::invalid("epsilon", "must be positive"));
        }
        if self.n_pairs == 0 {
            return Err(Error::invalid("n_pairs", "must be positive"));
        }
        Ok(())
    }
}
