use super::anneal::{simulated_annealing, AnnealOptions};
use super::cache::{ChainCache, PilotConfig};
use super::coverage::{point_swap, skeleton_from, SwapOptions};
use super::criteria::{EntropyCriterion, MinimaxCriterion, MinimaxObjective};
use super::SelectionResult;
use crate::divergence::{clamp_distances, pairwise_divergence_matrix, DivergenceMethod, SamplerConfig};
use crate::error::{input, Result};
use crate::family::{FamilyGrid, SkeletonSet};
use crate::mcse::LagWindow;

/// Settings shared by the sampling-based searches (MNX, ENT, SEQ).
#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub pilot: PilotConfig,
    pub window: LagWindow,
    pub anneal: AnnealOptions,
    /// Annealing start; defaults to the SFE set.
    pub initial: Option<Vec<usize>>,
    /// Total budget `M` for the minimax split.
    pub budget: usize,
    pub objective: MinimaxObjective,
    /// Scale `V̂` by `d̂_i d̂_j` in the entropy criterion.
    pub scaled: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            pilot: PilotConfig::default(),
            window: LagWindow::default(),
            anneal: AnnealOptions::default(),
            initial: None,
            budget: 4000,
            objective: MinimaxObjective::RelSeU,
            scaled: true,
        }
    }
}

fn check_index(grid: &FamilyGrid, i: usize) -> Result<()> {
    if i >= grid.len() {
        return input(format!("reference {i} is outside a grid of {} points", grid.len()));
    }
    Ok(())
}

/// Naive IS: the reference alone.
pub fn select_nis(grid: &FamilyGrid, reference: usize) -> Result<SelectionResult> {
    check_index(grid, reference)?;
    Ok(SelectionResult {
        skeleton: SkeletonSet::equal(vec![reference], reference)?,
        criterion_value: f64::NAN,
        trace: Vec::new(),
        samples_used: None,
    })
}

/// Space filling on scaled Euclidean distances.
pub fn select_sfe(grid: &FamilyGrid, k: usize, fixed: &[usize]) -> Result<SelectionResult> {
    let dist = pairwise_divergence_matrix(grid, DivergenceMethod::Euclidean, &SamplerConfig::default())?;
    point_swap(&dist, k, fixed, &SwapOptions::default())
}

/// Space filling on Monte Carlo symmetric KL divergences.
pub fn select_sfs(grid: &FamilyGrid, k: usize, fixed: &[usize], sampler: &SamplerConfig) -> Result<SelectionResult> {
    let dist = pairwise_divergence_matrix(grid, DivergenceMethod::MonteCarlo, sampler)?;
    point_swap(&clamp_distances(&dist), k, fixed, &SwapOptions::default())
}

fn anneal_start(grid: &FamilyGrid, k: usize, reference: usize, cfg: &SearchConfig) -> Result<Vec<usize>> {
    match &cfg.initial {
        Some(init) => Ok(init.clone()),
        None => Ok(select_sfe(grid, k, &[reference])?.skeleton.sorted_indices()),
    }
}

/// Minimax: annealing on `min_N max_ξ RelSE(ξ, N, M − N)`.
pub fn select_mnx(grid: &FamilyGrid, k: usize, reference: usize, cfg: &SearchConfig) -> Result<SelectionResult> {
    check_index(grid, reference)?;
    let start = anneal_start(grid, k, reference, cfg)?;
    let crit = MinimaxCriterion::new(ChainCache::new(grid, cfg.pilot), cfg.budget, cfg.window, cfg.objective.clone());
    simulated_annealing(grid.len(), k, &crit, &[reference], &start, &cfg.anneal)
}

/// Maximum entropy: annealing on `−log det U` from stage-1 chains.
pub fn select_ent(grid: &FamilyGrid, k: usize, reference: usize, cfg: &SearchConfig) -> Result<SelectionResult> {
    check_index(grid, reference)?;
    let start = anneal_start(grid, k, reference, cfg)?;
    let crit = EntropyCriterion::new(ChainCache::new(grid, cfg.pilot), cfg.window, cfg.scaled);
    simulated_annealing(grid.len(), k, &crit, &[reference], &start, &cfg.anneal)
}

/// Sequential: starting from `{reference}`, add the grid point with the
/// largest `σ̂_u/û` under the current set, `k − 1` times. The trace holds
/// that maximum before each addition; the final value is the maximum over
/// the whole grid for the returned set.
pub fn select_seq(grid: &FamilyGrid, k: usize, reference: usize, cfg: &SearchConfig) -> Result<SelectionResult> {
    check_index(grid, reference)?;
    if k == 0 || k > grid.len() {
        return input(format!("cannot choose {k} of {} grid points", grid.len()));
    }
    let crit = MinimaxCriterion::new(ChainCache::new(grid, cfg.pilot), cfg.budget, cfg.window, MinimaxObjective::RelSeU);
    let scores = |set: &[usize]| -> Result<(SkeletonSet, Vec<f64>)> {
        let sk = skeleton_from(set, reference)?;
        let terms = crit.terms(&sk)?;
        let ratio = terms.n_over_big_n();
        let v = terms.v();
        let s = terms
            .targets
            .iter()
            .map(|t| if t.u_hat > 0.0 { t.scaled_sigma2_u(v, ratio).max(0.0).sqrt() / t.u_hat } else { f64::INFINITY })
            .collect();
        Ok((sk, s))
    };
    let worst = |s: &[f64]| s.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut set = vec![reference];
    let mut trace = Vec::new();
    loop {
        let (sk, s) = scores(&set)?;
        if set.len() == k {
            let samples_used = Some(crit.cache().bank(&sk, true)?);
            return Ok(SelectionResult { skeleton: sk, criterion_value: worst(&s), trace, samples_used });
        }
        let next = (0..grid.len())
            .filter(|i| !set.contains(i))
            .fold(None, |best: Option<(usize, f64)>, i| match best {
                Some((_, b)) if b >= s[i] => best,
                _ => Some((i, s[i])),
            })
            .expect("k ≤ grid size");
        trace.push((set.len() - 1, next.1));
        set.push(next.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::DesignCriterion;
    use crate::models::GaussianFamily;
    use std::sync::Arc;

    fn grid(points: &[(f64, f64)]) -> FamilyGrid {
        FamilyGrid::new(Arc::new(GaussianFamily), points.iter().map(|&(m, s)| vec![m, s]).collect()).unwrap()
    }

    fn small_cfg() -> SearchConfig {
        SearchConfig {
            pilot: PilotConfig { stage1: 600, stage2: 600, burnin: 50, seed: 3 },
            anneal: AnnealOptions { max_iter: 15, ..Default::default() },
            budget: 2000,
            ..Default::default()
        }
    }

    #[test]
    fn nis_and_seq_k1_are_the_reference() {
        let g = grid(&[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0)]);
        assert_eq!(select_nis(&g, 1).unwrap().skeleton.indices(), &[1]);
        let r = select_seq(&g, 1, 1, &small_cfg()).unwrap();
        assert_eq!(r.skeleton.indices(), &[1]);
        assert!(r.trace.is_empty());
        assert!(select_nis(&g, 5).is_err());
    }

    #[test]
    fn seq_adds_the_far_end_first() {
        let pts: Vec<(f64, f64)> = (0..7).map(|i| (i as f64, 1.0)).collect();
        let g = grid(&pts);
        let r = select_seq(&g, 2, 0, &small_cfg()).unwrap();
        assert_eq!(r.skeleton.sorted_indices(), vec![0, 6]);
        let again = select_seq(&g, 2, 0, &small_cfg()).unwrap();
        assert_eq!(r.trace, again.trace);
        assert_eq!(r.criterion_value, again.criterion_value);
    }

    #[test]
    fn entropy_prefers_separated_proposals() {
        let g = grid(&[(0.0, 1.0), (0.02, 1.0), (2.0, 1.0)]);
        let crit = EntropyCriterion::new(ChainCache::new(&g, small_cfg().pilot), LagWindow::default(), true);
        let far = crit.evaluate(&SkeletonSet::equal(vec![0, 2], 0).unwrap()).unwrap();
        let near = crit.evaluate(&SkeletonSet::equal(vec![0, 1], 0).unwrap()).unwrap();
        assert!(far.is_finite());
        assert!(far < near, "far {far} near {near}");
        assert_eq!(crit.evaluate(&SkeletonSet::equal(vec![2], 2).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn mnx_and_ent_keep_reference_and_reproduce() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (i as f64 * 0.8, 1.0)).collect();
        let g = grid(&pts);
        let cfg = small_cfg();
        let a = select_mnx(&g, 3, 2, &cfg).unwrap();
        let b = select_mnx(&g, 3, 2, &cfg).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.skeleton.reference(), 2);
        let best = a.trace.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
        assert_eq!(a.criterion_value, best);
        assert!(a.samples_used.is_some());
        let e = select_ent(&g, 3, 2, &cfg).unwrap();
        assert!(e.skeleton.indices().contains(&2));
        assert!(e.criterion_value.is_finite());
    }
}
