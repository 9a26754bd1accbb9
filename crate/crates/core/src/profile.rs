//! Two-stage estimation over every target of a grid.
//!
//! A pilot run sizes the stage-1/stage-2 split, fresh chains are drawn for
//! the final estimates, and each grid point gets `log û`, its standard error
//! and relative SE (plus `η̂` when an `f` is supplied).

use crate::design::{optimal_split, PilotConfig, SplitChoice};
use crate::error::{input, Result};
use crate::exec;
use crate::family::{FamilyGrid, LogWeightTable, SampleBank, SkeletonSet};
use crate::gis::{ISWeights, MixtureEval, ScalarFn};
use crate::mcse::{rl_covariance_tables, target_terms, LagWindow, RLCovariance, TargetTerms};
use crate::rlogistic::{fit_tables, FitOptions, RLFit};
use crate::streams::Stream;

/// Fit, covariance and per-target terms for one skeleton.
#[derive(Debug, Clone)]
pub struct SkeletonTerms {
    pub fit: Option<RLFit>,
    pub cov: Option<RLCovariance>,
    pub targets: Vec<TargetTerms>,
    pub stage1_total: usize,
    pub stage2_total: usize,
}

impl SkeletonTerms {
    pub fn v(&self) -> Option<&nalgebra::DMatrix<f64>> {
        self.cov.as_ref().map(|c| &c.v)
    }
    pub fn n_over_big_n(&self) -> f64 {
        if self.stage1_total == 0 {
            0.0
        } else {
            self.stage2_total as f64 / self.stage1_total as f64
        }
    }
}

/// Computes [`SkeletonTerms`] from log-weight tables whose columns cover the
/// whole grid (`stage1[l]`, `stage2[l]` hold chain `l`'s draws). Targets are
/// grid indices; `f` values, if any, are aligned with the stage-2 chains.
pub fn skeleton_terms(
    skeleton: &SkeletonSet,
    stage1: &[&LogWeightTable],
    stage2: &[&LogWeightTable],
    targets: &[usize],
    f: Option<&[Vec<f64>]>,
    window: &LagWindow,
    fit_opts: FitOptions,
) -> Result<SkeletonTerms> {
    let k = skeleton.k();
    let a = skeleton.weights();
    let cols = skeleton.indices();
    if stage2.len() != k || (k > 1 && stage1.len() != k) {
        return input("one chain per skeleton member is required in each stage");
    }
    let (fit, cov, d) = if k > 1 {
        let s1: Vec<LogWeightTable> = stage1.iter().map(|t| t.select_columns(cols)).collect();
        let fit = fit_tables(&s1, a, fit_opts)?;
        let cov = rl_covariance_tables(&s1, a, &fit, window)?;
        let d = fit.d_hat.clone();
        (Some(fit), Some(cov), d)
    } else {
        (None, None, vec![1.0])
    };
    let s2: Vec<LogWeightTable> = stage2.iter().map(|t| t.select_columns(cols)).collect();
    let mix = MixtureEval::from_tables(&s2, a, &d)?;
    let terms = exec::try_map_range(targets.len(), |t| {
        let log_nu: Vec<Vec<f64>> = stage2.iter().map(|tab| tab.column(targets[t])).collect();
        let mut w = ISWeights::from_log_target(&mix, &log_nu)?;
        if let Some(f) = f {
            w = w.with_f(f.to_vec())?;
        }
        target_terms(&w, &mix, window).map_err(|e| e.context(format!("target {}", targets[t])))
    })?;
    let stage1_total = if k > 1 { stage1.iter().map(|t| t.nrows()).sum() } else { 0 };
    Ok(SkeletonTerms {
        fit,
        cov,
        targets: terms,
        stage1_total,
        stage2_total: stage2.iter().map(|t| t.nrows()).sum(),
    })
}

/// Evaluates every grid density at every draw of each chain.
pub fn grid_tables(grid: &FamilyGrid, chains: &[crate::family::ChainSample]) -> Result<Vec<LogWeightTable>> {
    let refs: Vec<&dyn crate::family::UnnormalizedDensity> = grid.densities().iter().map(|d| d.as_ref()).collect();
    exec::map(chains, |c| LogWeightTable::evaluate(&c.draws, &refs)).into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRow {
    pub xi: Vec<f64>,
    pub log_u_hat: f64,
    /// `σ̂_u/√n`, on the scale of `û`.
    pub se_u: f64,
    /// `σ̂_u/(√n û)`.
    pub rel_se: f64,
    pub eta_hat: Option<f64>,
    pub se_eta: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Profile {
    pub rows: Vec<ProfileRow>,
    pub skeleton: SkeletonSet,
    pub split: SplitChoice,
    pub fit: Option<RLFit>,
}

impl Profile {
    pub fn max_rel_se(&self) -> f64 {
        self.rows.iter().map(|r| r.rel_se).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateConfig {
    /// Total draws `M = N + n` across all proposals for the final run.
    pub budget: usize,
    /// Pilot chains used to choose the split (ignored for one proposal).
    pub pilot: PilotConfig,
    pub window: LagWindow,
    pub fit: FitOptions,
}

/// Rows for `terms` computed from final chains of total sizes `N` and `n`.
pub fn profile_rows(grid: &FamilyGrid, terms: &SkeletonTerms) -> Vec<ProfileRow> {
    let n = terms.stage2_total as f64;
    terms
        .targets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let s2 = t.scaled_sigma2_u(terms.v(), terms.n_over_big_n()).max(0.0);
            let sd = s2.sqrt() / n.sqrt();
            let eta_hat = t.eta.as_ref().map(|e| e.eta_hat);
            let se_eta = t.sigma2_eta(terms.v(), terms.n_over_big_n()).map(|s| (s.max(0.0) / n).sqrt());
            ProfileRow {
                xi: grid.point(i).to_vec(),
                log_u_hat: t.u_hat.ln() + t.log_scale,
                se_u: (sd.ln() + t.log_scale).exp(),
                rel_se: if t.u_hat > 0.0 { sd / t.u_hat } else { f64::INFINITY },
                eta_hat,
                se_eta,
            }
        })
        .collect()
}

/// Pilot → split → final two-stage estimate of every grid target.
pub fn estimate_profile(
    grid: &FamilyGrid,
    skeleton: &SkeletonSet,
    cfg: &EstimateConfig,
    f: Option<ScalarFn<'_>>,
) -> Result<Profile> {
    let k = skeleton.k();
    if let Some(&bad) = skeleton.indices().iter().find(|&&i| i >= grid.len()) {
        return input(format!("skeleton index {bad} is outside the grid of {} points", grid.len()));
    }
    let targets: Vec<usize> = (0..grid.len()).collect();
    let split = if k == 1 {
        if cfg.budget == 0 {
            return input("budget must be positive");
        }
        SplitChoice { big_n: 0, n: cfg.budget, value: f64::NAN }
    } else {
        let p = &cfg.pilot;
        let pilot = SampleBank::generate(grid, skeleton.clone(), p.stage1, p.stage2, p.burnin, p.seed)?;
        let t1 = grid_tables(grid, &pilot.stage1)?;
        let t2 = grid_tables(grid, &pilot.stage2)?;
        let terms = skeleton_terms(
            skeleton,
            &t1.iter().collect::<Vec<_>>(),
            &t2.iter().collect::<Vec<_>>(),
            &targets,
            None,
            &cfg.window,
            cfg.fit,
        )
        .map_err(|e| e.context("pilot run"))?;
        let ups1: Vec<f64> = terms.targets.iter().map(|t| t.upsilon1_sq(terms.v()).max(0.0).sqrt()).collect();
        let ups2: Vec<f64> = terms.targets.iter().map(|t| t.tau2.max(0.0).sqrt()).collect();
        let us: Vec<f64> = terms.targets.iter().map(|t| t.u_hat).collect();
        optimal_split(cfg.budget, k, &ups1, &ups2, &us)?
    };
    let per1 = split.big_n / k;
    let per2 = split.n / k;
    let bank = SampleBank::generate_with_streams(
        grid,
        skeleton.clone(),
        (per1, Stream::FinalStage1),
        (per2, Stream::FinalStage2),
        cfg.pilot.burnin,
        cfg.pilot.seed,
    )?;
    let t1 = grid_tables(grid, &bank.stage1)?;
    let t2 = grid_tables(grid, &bank.stage2)?;
    let fv = f.map(|f| bank.stage2.iter().map(|c| c.draws.rows().map(f).collect::<Vec<f64>>()).collect::<Vec<_>>());
    let terms = skeleton_terms(
        skeleton,
        &t1.iter().collect::<Vec<_>>(),
        &t2.iter().collect::<Vec<_>>(),
        &targets,
        fv.as_deref(),
        &cfg.window,
        cfg.fit,
    )?;
    Ok(Profile { rows: profile_rows(grid, &terms), skeleton: skeleton.clone(), split, fit: terms.fit })
}
