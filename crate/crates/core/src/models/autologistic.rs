use std::sync::Arc;

use rand::Rng;

use crate::error::{input, Result};
use crate::family::{ChainKind, ChainSample, DensityRef, Draws, Family, Support, UnnormalizedDensity};
use crate::streams::rng_from_seed;

/// Largest lattice for which the normalizer is enumerated exactly.
pub const MAX_EXACT_SITES: usize = 20;

const NEIGHBORS: usize = 4;

/// Centered autologistic model on a `rows × cols` torus with four nearest
/// neighbours per site.
#[derive(Debug, Clone, PartialEq)]
pub struct AutologisticModel {
    rows: usize,
    cols: usize,
    gamma: f64,
    kappa: f64,
    neighbors: Arc<Vec<[usize; NEIGHBORS]>>,
}

fn torus_neighbors(rows: usize, cols: usize) -> Vec<[usize; NEIGHBORS]> {
    let mut nb = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let up = ((r + rows - 1) % rows) * cols + c;
            let down = ((r + 1) % rows) * cols + c;
            let left = r * cols + (c + cols - 1) % cols;
            let right = r * cols + (c + 1) % cols;
            nb.push([up, down, left, right]);
        }
    }
    nb
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl AutologisticModel {
    pub fn new(rows: usize, cols: usize, gamma: f64, kappa: f64) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return input(format!("torus must be at least 2x2, got {rows}x{cols}"));
        }
        if !(kappa > 0.0 && kappa < 1.0) {
            return input(format!("kappa must lie in (0, 1), got {kappa}"));
        }
        if !gamma.is_finite() {
            return input("gamma must be finite");
        }
        Ok(Self { rows, cols, gamma, kappa, neighbors: Arc::new(torus_neighbors(rows, cols)) })
    }

    /// Same lattice, different parameters (shares the neighbour table).
    pub fn with_params(&self, gamma: f64, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 1.0) || !gamma.is_finite() {
            return input(format!("invalid autologistic parameters ({gamma}, {kappa})"));
        }
        Ok(Self { gamma, kappa, ..self.clone() })
    }

    pub fn sites(&self) -> usize {
        self.rows * self.cols
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn neighbors(&self, site: usize) -> &[usize; NEIGHBORS] {
        &self.neighbors[site]
    }

    fn conditional_logit(&self, state: &[f64], site: usize) -> f64 {
        let s: f64 = self.neighbors[site].iter().map(|&j| state[j] - self.kappa).sum();
        logit(self.kappa) + self.gamma / NEIGHBORS as f64 * s
    }
}

/// `P(x_site = 1 | rest)` under the centered parameterization.
pub fn autologistic_conditional_p(model: &AutologisticModel, state: &[f64], site: usize) -> f64 {
    let eta = model.conditional_logit(state, site);
    1.0 / (1.0 + (-eta).exp())
}

/// `(logit κ − γκ) Σ x_i + (γ / 2w) Σ_i Σ_{j ∈ nb(i)} x_i x_j`.
pub fn autologistic_log_pmf_unnormalized(model: &AutologisticModel, state: &[f64]) -> f64 {
    let mut ones = 0.0;
    let mut pairs = 0.0;
    for (i, &xi) in state.iter().enumerate() {
        if xi != 0.0 {
            ones += xi;
            pairs += xi * model.neighbors[i].iter().map(|&j| state[j]).sum::<f64>();
        }
    }
    let w = NEIGHBORS as f64;
    (logit(model.kappa) - model.gamma * model.kappa) * ones + model.gamma / (2.0 * w) * pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScanOrder {
    /// Row-major sweep over every site.
    #[default]
    Systematic,
    /// `m` uniformly chosen single-site updates per sweep.
    Random,
}

/// Single-site Gibbs sampler. One stored row per sweep after `burnin` sweeps;
/// the initial state is iid Bernoulli(κ).
pub fn autologistic_gibbs(
    model: &AutologisticModel,
    n: usize,
    burnin: usize,
    seed: u64,
    scan: ScanOrder,
) -> ChainSample {
    let m = model.sites();
    let mut rng = rng_from_seed(seed);
    let mut state: Vec<f64> =
        (0..m).map(|_| if rng.random::<f64>() < model.kappa { 1.0 } else { 0.0 }).collect();
    let mut data = Vec::with_capacity(n * m);
    let update = |state: &mut Vec<f64>, site: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        let p = autologistic_conditional_p(model, state, site);
        state[site] = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
    };
    for sweep in 0..burnin + n {
        match scan {
            ScanOrder::Systematic => {
                for site in 0..m {
                    update(&mut state, site, &mut rng);
                }
            }
            ScanOrder::Random => {
                for _ in 0..m {
                    let site = rng.random_range(0..m);
                    update(&mut state, site, &mut rng);
                }
            }
        }
        if sweep >= burnin {
            data.extend_from_slice(&state);
        }
    }
    ChainSample {
        draws: Draws::new(n, m, data).expect("sized buffer"),
        proposal_index: 0,
        kind: ChainKind::Markov,
        seed,
        burnin_discarded: burnin,
    }
}

/// `log θ(γ, κ)` by enumeration of all `2^m` states (`m ≤ 20`).
pub fn autologistic_exact_log_z(model: &AutologisticModel) -> Result<f64> {
    let m = model.sites();
    if m > MAX_EXACT_SITES {
        return input(format!("exact normalizer needs at most {MAX_EXACT_SITES} sites, got {m}"));
    }
    let mut state = vec![0.0; m];
    let (mut run_max, mut run_sum) = (f64::NEG_INFINITY, 0.0f64);
    for bits in 0u32..(1u32 << m) {
        for (s, v) in state.iter_mut().enumerate() {
            *v = f64::from((bits >> s) & 1);
        }
        let lp = autologistic_log_pmf_unnormalized(model, &state);
        if lp > run_max {
            run_sum = run_sum * (run_max - lp).exp() + 1.0;
            run_max = lp;
        } else {
            run_sum += (lp - run_max).exp();
        }
    }
    Ok(run_max + run_sum.ln())
}

/// One member of the autologistic family as an [`UnnormalizedDensity`].
#[derive(Debug, Clone)]
pub struct AutologisticDensity {
    model: AutologisticModel,
    label: Vec<f64>,
}

impl AutologisticDensity {
    pub fn new(model: AutologisticModel, label: Vec<f64>) -> Self {
        Self { model, label }
    }
    pub fn model(&self) -> &AutologisticModel {
        &self.model
    }
}

impl UnnormalizedDensity for AutologisticDensity {
    fn dim(&self) -> usize {
        self.model.sites()
    }
    fn support(&self) -> Support {
        Support::BinaryLattice
    }
    fn log_weight(&self, x: &[f64]) -> f64 {
        if x.iter().any(|&v| v != 0.0 && v != 1.0) {
            return f64::NEG_INFINITY;
        }
        autologistic_log_pmf_unnormalized(&self.model, x)
    }
    fn label(&self) -> &[f64] {
        &self.label
    }
}

/// Which model parameters a grid point carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamLayout {
    /// `ξ = (γ)` with κ held fixed.
    Gamma { kappa: f64 },
    /// `ξ = (γ, κ)`.
    GammaKappa,
}

#[derive(Debug, Clone)]
pub struct AutologisticFamily {
    base: AutologisticModel,
    layout: ParamLayout,
    scan: ScanOrder,
}

impl AutologisticFamily {
    pub fn new(rows: usize, cols: usize, layout: ParamLayout) -> Result<Self> {
        let kappa = match layout {
            ParamLayout::Gamma { kappa } => kappa,
            ParamLayout::GammaKappa => 0.5,
        };
        Ok(Self { base: AutologisticModel::new(rows, cols, 0.0, kappa)?, layout, scan: ScanOrder::Systematic })
    }

    pub fn with_scan(mut self, scan: ScanOrder) -> Self {
        self.scan = scan;
        self
    }

    pub fn model(&self, xi: &[f64]) -> Result<AutologisticModel> {
        match (self.layout, xi) {
            (ParamLayout::Gamma { kappa }, [g]) => self.base.with_params(*g, kappa),
            (ParamLayout::GammaKappa, [g, k]) => self.base.with_params(*g, *k),
            _ => input(format!("parameter point {xi:?} does not match layout {:?}", self.layout)),
        }
    }
}

impl Family for AutologisticFamily {
    fn name(&self) -> &str {
        "autologistic"
    }
    fn param_dim(&self) -> usize {
        match self.layout {
            ParamLayout::Gamma { .. } => 1,
            ParamLayout::GammaKappa => 2,
        }
    }
    fn density(&self, xi: &[f64]) -> Result<DensityRef> {
        Ok(Arc::new(AutologisticDensity::new(self.model(xi)?, xi.to_vec())))
    }
    fn sample(&self, xi: &[f64], n: usize, burnin: usize, seed: u64) -> Result<ChainSample> {
        Ok(autologistic_gibbs(&self.model(xi)?, n, burnin, seed, self.scan))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_state(m: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        (0..m).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn conditional_examples() {
        let m = AutologisticModel::new(3, 3, 0.0, 0.3).unwrap();
        let s = random_state(9, 1);
        for site in 0..9 {
            assert_relative_eq!(autologistic_conditional_p(&m, &s, site), 0.3, epsilon = 1e-14);
        }
        let m = AutologisticModel::new(3, 3, 4.0, 0.5).unwrap();
        let ones = vec![1.0; 9];
        let p = autologistic_conditional_p(&m, &ones, 4);
        assert_relative_eq!(p, 1.0 / (1.0 + (-2.0f64).exp()), epsilon = 1e-14);
        assert_relative_eq!(p, 0.8807970779778823, epsilon = 1e-12);
        let zeros = vec![0.0; 9];
        assert_relative_eq!(autologistic_conditional_p(&m, &zeros, 4), 1.0 - p, epsilon = 1e-14);
    }

    #[test]
    fn log_pmf_examples() {
        let m = AutologisticModel::new(3, 3, 1.3, 0.3).unwrap();
        assert_eq!(autologistic_log_pmf_unnormalized(&m, &[0.0; 9]), 0.0);
        let m0 = AutologisticModel::new(3, 3, 0.0, 0.3).unwrap();
        let s = random_state(9, 5);
        let ones: f64 = s.iter().sum();
        assert_relative_eq!(autologistic_log_pmf_unnormalized(&m0, &s), logit(0.3) * ones, epsilon = 1e-13);
    }

    #[test]
    fn joint_and_conditional_agree_on_every_site() {
        // flipping a site must reproduce the conditional log-odds
        for (g, k) in [(1.7, 0.5), (-2.3, 0.2), (4.0, 0.9)] {
            let m = AutologisticModel::new(3, 3, g, k).unwrap();
            for bits in 0u32..512 {
                let s: Vec<f64> = (0..9).map(|i| f64::from((bits >> i) & 1)).collect();
                for site in 0..9 {
                    let (mut on, mut off) = (s.clone(), s.clone());
                    on[site] = 1.0;
                    off[site] = 0.0;
                    let delta = autologistic_log_pmf_unnormalized(&m, &on)
                        - autologistic_log_pmf_unnormalized(&m, &off);
                    let p = autologistic_conditional_p(&m, &s, site);
                    assert_relative_eq!(delta, (p / (1.0 - p)).ln(), epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn exact_log_z_factorizes_at_zero_dependence() {
        for kappa in [0.1, 0.5, 0.77] {
            let m = AutologisticModel::new(3, 3, 0.0, kappa).unwrap();
            let expected = 9.0 * (1.0 / (1.0 - kappa)).ln();
            assert_relative_eq!(autologistic_exact_log_z(&m).unwrap(), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn exact_log_z_matches_hand_sum_on_2x2() {
        // independent 16-term sum written out from the edge structure:
        // on a 2x2 torus each site lists both other-row/col sites twice
        let m = AutologisticModel::new(2, 2, 1.0, 0.5).unwrap();
        let mut total = 0.0;
        for bits in 0u32..16 {
            let x: Vec<f64> = (0..4).map(|i| f64::from((bits >> i) & 1)).collect();
            let ones: f64 = x.iter().sum();
            // site layout: 0 1 / 2 3; neighbours of 0 are {2,2,1,1}
            let pairs = 2.0 * (x[0] * x[1] + x[0] * x[2] + x[1] * x[3] + x[2] * x[3]) * 2.0;
            total += ((0.0 - 0.5) * ones + 1.0 / 8.0 * pairs).exp();
        }
        assert_relative_eq!(autologistic_exact_log_z(&m).unwrap(), total.ln(), epsilon = 1e-12);
        assert!(autologistic_exact_log_z(&AutologisticModel::new(5, 5, 0.0, 0.5).unwrap()).is_err());
    }

    #[test]
    fn log_z_is_continuous_in_gamma() {
        let vals: Vec<f64> = (0..=40)
            .map(|i| {
                let g = -4.0 + 0.2 * f64::from(i);
                autologistic_exact_log_z(&AutologisticModel::new(3, 3, g, 0.5).unwrap()).unwrap()
            })
            .collect();
        for w in vals.windows(2) {
            assert!((w[1] - w[0]).abs() < 1.0);
        }
    }

    #[test]
    fn gibbs_independent_case() {
        let m = AutologisticModel::new(4, 4, 0.0, 0.3).unwrap();
        let chain = autologistic_gibbs(&m, 4000, 50, 17, ScanOrder::Systematic);
        let total = chain.draws.as_slice().len() as f64;
        let mean: f64 = chain.draws.as_slice().iter().sum::<f64>() / total;
        let se = (0.3f64 * 0.7 / total).sqrt();
        assert!((mean - 0.3).abs() < 4.0 * se, "mean {mean}");

        let m = AutologisticModel::new(3, 3, 0.0, 0.5).unwrap();
        let chain = autologistic_gibbs(&m, 20000, 0, 3, ScanOrder::Systematic);
        let x = chain.draws.column(4);
        let mu = x.iter().sum::<f64>() / x.len() as f64;
        let c0: f64 = x.iter().map(|v| (v - mu).powi(2)).sum();
        let c1: f64 = x.windows(2).map(|w| (w[0] - mu) * (w[1] - mu)).sum();
        assert!((c1 / c0).abs() < 4.0 / (x.len() as f64).sqrt());
    }

    #[test]
    fn gibbs_reproducible() {
        let m = AutologisticModel::new(3, 3, 1.0, 0.5).unwrap();
        let a = autologistic_gibbs(&m, 100, 10, 99, ScanOrder::Systematic);
        let b = autologistic_gibbs(&m, 100, 10, 99, ScanOrder::Systematic);
        assert_eq!(a, b);
        let c = autologistic_gibbs(&m, 100, 10, 99, ScanOrder::Random);
        assert_eq!(c, autologistic_gibbs(&m, 100, 10, 99, ScanOrder::Random));
    }
}
