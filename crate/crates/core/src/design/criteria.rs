use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;

use super::cache::ChainCache;
use super::split::optimal_split;
use super::DesignCriterion;
use crate::error::{Error, Result};
use crate::exec;
use crate::family::{LogWeightTable, SampleBank, SkeletonSet};
use crate::linalg::log_det_spd;
use crate::mcse::{rel_se_from, rl_covariance_tables, LagWindow};
use crate::profile::{skeleton_terms, SkeletonTerms};
use crate::rlogistic::{fit_tables, FitOptions};

/// What the minimax search keeps small over the grid.
#[derive(Clone)]
pub enum MinimaxObjective {
    /// Relative SE of `û`.
    RelSeU,
    /// Standard error of `η̂` for the given `f`.
    SeEta(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for MinimaxObjective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::RelSeU => f.write_str("RelSeU"),
            Self::SeEta(_) => f.write_str("SeEta(..)"),
        }
    }
}

type Memo = Mutex<HashMap<Vec<u64>, f64>>;

fn memo_key(skeleton: &SkeletonSet) -> Vec<u64> {
    skeleton.indices().iter().map(|&i| i as u64).chain(skeleton.weights().iter().map(|w| w.to_bits())).collect()
}

fn memoized(memo: &Memo, skeleton: &SkeletonSet, f: impl FnOnce() -> Result<f64>) -> Result<f64> {
    let key = memo_key(skeleton);
    if let Some(v) = memo.lock().expect("memo poisoned").get(&key) {
        return Ok(*v);
    }
    let v = f()?;
    memo.lock().expect("memo poisoned").insert(key, v);
    Ok(v)
}

fn member_tables<'c>(
    cache: &'c ChainCache<'_>,
    skeleton: &SkeletonSet,
    stage2: bool,
) -> Result<(Vec<&'c LogWeightTable>, Vec<&'c LogWeightTable>)> {
    let idx = skeleton.indices();
    let s1 = exec::try_map_range(idx.len(), |p| cache.stage1(idx[p]).map(|c| &c.table))?;
    let s2 = if stage2 { exec::try_map_range(idx.len(), |p| cache.stage2(idx[p]).map(|c| &c.table))? } else { Vec::new() };
    Ok((s1, s2))
}

/// `min_N max_ξ RelSE(ξ, N, M − N)` from pilot chains at the skeleton points.
pub struct MinimaxCriterion<'a> {
    cache: ChainCache<'a>,
    budget: usize,
    window: LagWindow,
    fit: FitOptions,
    objective: MinimaxObjective,
    memo: Memo,
}

impl<'a> MinimaxCriterion<'a> {
    pub fn new(cache: ChainCache<'a>, budget: usize, window: LagWindow, objective: MinimaxObjective) -> Self {
        Self { cache, budget, window, fit: FitOptions::default(), objective, memo: Mutex::new(HashMap::new()) }
    }
    pub fn cache(&self) -> &ChainCache<'a> {
        &self.cache
    }

    /// Fit and per-target terms on the pilot chains of `skeleton`.
    pub fn terms(&self, skeleton: &SkeletonSet) -> Result<SkeletonTerms> {
        let (s1, s2) = member_tables(&self.cache, skeleton, true)?;
        let targets: Vec<usize> = (0..self.cache.grid().len()).collect();
        let f = match &self.objective {
            MinimaxObjective::RelSeU => None,
            MinimaxObjective::SeEta(f) => Some(
                skeleton
                    .indices()
                    .iter()
                    .map(|&i| Ok(self.cache.stage2(i)?.chain.draws.rows().map(|x| f(x)).collect()))
                    .collect::<Result<Vec<Vec<f64>>>>()?,
            ),
        };
        skeleton_terms(skeleton, &s1, &s2, &targets, f.as_deref(), &self.window, self.fit)
    }

    fn compute(&self, skeleton: &SkeletonSet) -> Result<f64> {
        let terms = self.terms(skeleton)?;
        let v = terms.v();
        let (ups1, ups2, us): (Vec<f64>, Vec<f64>, Vec<f64>) = match &self.objective {
            MinimaxObjective::RelSeU => terms
                .targets
                .iter()
                .map(|t| (t.upsilon1_sq(v).max(0.0).sqrt(), t.tau2.max(0.0).sqrt(), t.u_hat))
                .fold((vec![], vec![], vec![]), push3),
            MinimaxObjective::SeEta(_) => terms
                .targets
                .iter()
                .map(|t| {
                    let e = t.eta.as_ref().expect("f values attached");
                    let first = v.map_or(0.0, |v| (e.e.transpose() * v * &e.e)[(0, 0)]);
                    (first.max(0.0).sqrt(), t.rho().unwrap_or(0.0).max(0.0).sqrt(), 1.0)
                })
                .fold((vec![], vec![], vec![]), push3),
        };
        if skeleton.k() == 1 {
            let worst = ups2
                .iter()
                .zip(&us)
                .map(|(&b, &u)| rel_se_from(0.0, b, u, 0, self.budget))
                .fold(f64::NEG_INFINITY, f64::max);
            return Ok(worst);
        }
        Ok(optimal_split(self.budget, skeleton.k(), &ups1, &ups2, &us)?.value)
    }
}

fn push3(mut acc: (Vec<f64>, Vec<f64>, Vec<f64>), x: (f64, f64, f64)) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    acc.0.push(x.0);
    acc.1.push(x.1);
    acc.2.push(x.2);
    acc
}

impl DesignCriterion for MinimaxCriterion<'_> {
    fn evaluate(&self, skeleton: &SkeletonSet) -> Result<f64> {
        memoized(&self.memo, skeleton, || self.compute(skeleton))
    }
    fn samples_for(&self, skeleton: &SkeletonSet) -> Result<Option<SampleBank>> {
        self.cache.bank(skeleton, true).map(Some)
    }
}

/// `−log det U` with `U_ij = V̂_ij/(d̂_i d̂_j)` (or `−log det V̂` unscaled),
/// from stage-1 chains only; singular matrices score `+∞`.
pub struct EntropyCriterion<'a> {
    cache: ChainCache<'a>,
    window: LagWindow,
    fit: FitOptions,
    scaled: bool,
    memo: Memo,
}

impl<'a> EntropyCriterion<'a> {
    pub fn new(cache: ChainCache<'a>, window: LagWindow, scaled: bool) -> Self {
        Self { cache, window, fit: FitOptions::default(), scaled, memo: Mutex::new(HashMap::new()) }
    }
    pub fn cache(&self) -> &ChainCache<'a> {
        &self.cache
    }

    /// The matrix whose log determinant is maximized.
    pub fn information_matrix(&self, skeleton: &SkeletonSet) -> Result<DMatrix<f64>> {
        let (s1, _) = member_tables(&self.cache, skeleton, false)?;
        let cols = skeleton.indices();
        let tables: Vec<LogWeightTable> = s1.iter().map(|t| t.select_columns(cols)).collect();
        let a = skeleton.weights();
        let fit = fit_tables(&tables, a, self.fit)?;
        let cov = rl_covariance_tables(&tables, a, &fit, &self.window)?;
        let d = &fit.d_hat;
        Ok(if self.scaled { DMatrix::from_fn(cov.v.nrows(), cov.v.ncols(), |i, j| cov.v[(i, j)] / (d[i + 1] * d[j + 1])) } else { cov.v })
    }

    fn compute(&self, skeleton: &SkeletonSet) -> Result<f64> {
        if skeleton.k() < 2 {
            return Ok(0.0);
        }
        match self.information_matrix(skeleton) {
            Ok(u) => Ok(log_det_spd(&u).map_or(f64::INFINITY, |ld| -ld)),
            Err(Error::Numerical(_)) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    }
}

impl DesignCriterion for EntropyCriterion<'_> {
    fn evaluate(&self, skeleton: &SkeletonSet) -> Result<f64> {
        memoized(&self.memo, skeleton, || self.compute(skeleton))
    }
    fn samples_for(&self, skeleton: &SkeletonSet) -> Result<Option<SampleBank>> {
        self.cache.bank(skeleton, false).map(Some)
    }
}
