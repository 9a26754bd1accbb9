use rand::Rng;

use super::coverage::{skeleton_from, validate_selection};
use super::{DesignCriterion, SelectionResult};
use crate::error::{input, Result};
use crate::streams::{derive_seed, rng_from_seed, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealOptions {
    /// Initial temperature `T₀`.
    pub t0: f64,
    /// Iterations per temperature block.
    pub block: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for AnnealOptions {
    fn default() -> Self {
        Self { t0: 10.0, block: 10, max_iter: 250, seed: 0 }
    }
}

/// `T_i = T₀ / ln(⌊(i−1)/B⌋·B + e)` for iteration `i ≥ 1`.
pub fn temperature(i: usize, t0: f64, block: usize) -> f64 {
    let b = block.max(1);
    let step = (i.saturating_sub(1) / b * b) as f64;
    t0 / (step + std::f64::consts::E).ln()
}

/// Simulated annealing over `k`-subsets of `0..grid_len` containing `fixed`.
///
/// Each iteration swaps a random non-fixed member for a random non-member;
/// a worse candidate is accepted with probability `exp(−Δ/T_i)`. Returns the
/// best set visited. The reference is `fixed[0]`, or the smallest index of
/// the set when nothing is fixed.
pub fn simulated_annealing(
    grid_len: usize,
    k: usize,
    criterion: &dyn DesignCriterion,
    fixed: &[usize],
    initial: &[usize],
    opts: &AnnealOptions,
) -> Result<SelectionResult> {
    validate_selection(grid_len, k, fixed)?;
    if initial.len() != k || fixed.iter().any(|f| !initial.contains(f)) {
        return input("initial set must have k points and contain every fixed point");
    }
    if initial.iter().any(|&i| i >= grid_len) {
        return input("initial set lies outside the grid");
    }
    let mut uniq = initial.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    if uniq.len() != k {
        return input("initial set has repeated points");
    }
    if !(opts.t0 > 0.0) {
        return input("initial temperature must be positive");
    }

    let reference_of = |set: &[usize]| fixed.first().copied().unwrap_or_else(|| *set.iter().min().expect("k ≥ 1"));
    let score = |set: &[usize]| -> Result<f64> {
        let sk = skeleton_from(set, reference_of(set))?;
        criterion.evaluate(&sk).map_err(|e| e.context(format!("candidate {:?}", sk.sorted_indices())))
    };

    let mut current = uniq;
    let mut current_value = score(&current)?;
    let mut best = (current.clone(), current_value);
    let mut trace = vec![(0, current_value)];

    let movable: Vec<usize> = (0..k).filter(|&p| !fixed.contains(&current[p])).collect();
    if !movable.is_empty() && k < grid_len {
        let mut rng = rng_from_seed(derive_seed(opts.seed, &[Stream::Anneal as u64]));
        for i in 1..=opts.max_iter {
            let out: Vec<usize> = (0..grid_len).filter(|c| !current.contains(c)).collect();
            let pos = movable[rng.random_range(0..movable.len())];
            let incoming = out[rng.random_range(0..out.len())];
            let mut cand = current.clone();
            cand[pos] = incoming;
            let value = score(&cand)?;
            // always draw, so the stream does not depend on the comparison
            let r: f64 = rng.random();
            let t = temperature(i, opts.t0, opts.block);
            let accept = value <= current_value || r < (-(value - current_value) / t).exp();
            if accept {
                current = cand;
                current_value = value;
                if value < best.1 {
                    best = (current.clone(), value);
                }
            }
            trace.push((i, current_value));
        }
    }

    let skeleton = skeleton_from(&best.0, reference_of(&best.0))?;
    let samples_used = criterion.samples_for(&skeleton)?;
    Ok(SelectionResult { skeleton, criterion_value: best.1, trace, samples_used })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::SkeletonSet;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct SumCriterion {
        calls: AtomicUsize,
    }
    impl DesignCriterion for SumCriterion {
        fn evaluate(&self, s: &SkeletonSet) -> Result<f64> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            Ok(s.indices().iter().map(|&i| (i as f64 - 7.3).powi(2)).sum())
        }
    }

    fn sum() -> SumCriterion {
        SumCriterion { calls: AtomicUsize::new(0) }
    }

    #[test]
    fn schedule_steps_by_block() {
        let e = std::f64::consts::E;
        assert!((temperature(1, 10.0, 10) - 10.0).abs() < 1e-12);
        assert_eq!(temperature(1, 10.0, 10), temperature(10, 10.0, 10));
        assert!((temperature(11, 10.0, 10) - 10.0 / (10.0 + e).ln()).abs() < 1e-12);
        assert!(temperature(21, 10.0, 10) < temperature(11, 10.0, 10));
    }

    #[test]
    fn finds_minimum_and_returns_best_of_trace() {
        let c = sum();
        let opts = AnnealOptions { max_iter: 400, ..Default::default() };
        let r = simulated_annealing(20, 3, &c, &[], &[0, 1, 2], &opts).unwrap();
        assert_eq!(r.skeleton.sorted_indices(), vec![6, 7, 8]);
        let trace_min = r.trace.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
        assert_eq!(r.criterion_value, trace_min);
        assert_eq!(r.trace.len(), 401);
    }

    #[test]
    fn reproducible_and_respects_fixed() {
        let opts = AnnealOptions { max_iter: 50, seed: 9, ..Default::default() };
        let a = simulated_annealing(15, 4, &sum(), &[14], &[14, 0, 1, 2], &opts).unwrap();
        let b = simulated_annealing(15, 4, &sum(), &[14], &[14, 0, 1, 2], &opts).unwrap();
        assert_eq!(a.trace, b.trace);
        assert!(a.skeleton.indices().contains(&14));
        assert_eq!(a.skeleton.reference(), 14);
    }

    #[test]
    fn whole_grid_has_no_moves() {
        let c = sum();
        let r = simulated_annealing(4, 4, &c, &[], &[3, 2, 1, 0], &AnnealOptions::default()).unwrap();
        assert_eq!(r.skeleton.sorted_indices(), vec![0, 1, 2, 3]);
        assert_eq!(r.trace.len(), 1);
        assert_eq!(c.calls.load(Ordering::Relaxed), 1);
    }

    #[test]
    fn rejects_bad_initial_set() {
        assert!(simulated_annealing(10, 2, &sum(), &[5], &[0, 1], &AnnealOptions::default()).is_err());
        assert!(simulated_annealing(10, 2, &sum(), &[], &[1, 1], &AnnealOptions::default()).is_err());
    }
}
