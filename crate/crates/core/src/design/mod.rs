//! Skeleton-set selection.
//!
//! * space filling ([`select_sfe`], [`select_sfs`]): point swapping on the
//!   coverage criterion over a pairwise distance matrix;
//! * minimax ([`select_mnx`]) and maximum entropy ([`select_ent`]):
//!   simulated annealing on Monte Carlo criteria, with chains cached per
//!   grid point so revisited candidates reuse their draws;
//! * sequential ([`select_seq`]): greedily add the worst-estimated target.

mod anneal;
mod cache;
mod coverage;
mod criteria;
mod select;
mod split;

pub use anneal::{simulated_annealing, temperature, AnnealOptions};
pub use cache::{CachedChain, ChainCache, PilotConfig};
pub use coverage::{coverage_criterion, farthest_point_start, point_swap, CoverageCriterion, SwapOptions};
pub use criteria::{EntropyCriterion, MinimaxCriterion, MinimaxObjective};
pub use select::{select_ent, select_mnx, select_nis, select_seq, select_sfe, select_sfs, SearchConfig};
pub use split::{optimal_split, SplitChoice};

use crate::error::Result;
use crate::family::{SampleBank, SkeletonSet};

/// A skeleton criterion; lower is better.
pub trait DesignCriterion: Sync {
    fn evaluate(&self, skeleton: &SkeletonSet) -> Result<f64>;

    /// Draws backing the evaluation of `skeleton`, if the criterion samples.
    fn samples_for(&self, _skeleton: &SkeletonSet) -> Result<Option<SampleBank>> {
        Ok(None)
    }
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub skeleton: SkeletonSet,
    pub criterion_value: f64,
    /// `(iteration, criterion value)` of the current set; iteration 0 is the start.
    pub trace: Vec<(usize, f64)>,
    pub samples_used: Option<SampleBank>,
}
