//! Symmetric Kullback–Leibler divergence between family members.
//!
//! `SKLD(π₁, π₂) = E_{π₁}[log ν₁/ν₂] − E_{π₂}[log ν₁/ν₂]`; the unknown
//! normalizers cancel. Two estimators: Monte Carlo over draws from each
//! density, and a second-order Laplace expansion around each mode with
//! finite-difference derivatives.

use nalgebra::{DMatrix, DVector};

use crate::error::{input, Error, Result};
use crate::exec;
use crate::family::{checked_log_weight, describe, ChainSample, FamilyGrid, Support, UnnormalizedDensity};
use crate::mcse::{sv_scalar, LagWindow, MIN_SV_ROWS};
use crate::streams::Stream;

fn log_ratio_series(d1: &dyn UnnormalizedDensity, d2: &dyn UnnormalizedDensity, s: &ChainSample) -> Result<Vec<f64>> {
    s.draws
        .rows()
        .map(|x| {
            let (g, h) = (checked_log_weight(d1, x)?, checked_log_weight(d2, x)?);
            if g.is_infinite() || h.is_infinite() {
                return Err(Error::Support(format!(
                    "log ratio of {} and {} undefined at a sampled point",
                    describe(d1),
                    describe(d2)
                )));
            }
            Ok(g - h)
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Monte Carlo SKLD from `s1 ~ π₁` and `s2 ~ π₂`.
pub fn skld_mc(
    d1: &dyn UnnormalizedDensity,
    d2: &dyn UnnormalizedDensity,
    s1: &ChainSample,
    s2: &ChainSample,
) -> Result<f64> {
    if s1.is_empty() || s2.is_empty() {
        return input("SKLD needs draws from both densities");
    }
    Ok(mean(&log_ratio_series(d1, d2, s1)?) - mean(&log_ratio_series(d1, d2, s2)?))
}

/// Monte Carlo SKLD with its standard error (spectral variance of each
/// log-ratio series, so Markov draws are handled).
pub fn skld_mc_with_se(
    d1: &dyn UnnormalizedDensity,
    d2: &dyn UnnormalizedDensity,
    s1: &ChainSample,
    s2: &ChainSample,
    window: &LagWindow,
) -> Result<(f64, f64)> {
    if s1.len() < MIN_SV_ROWS || s2.len() < MIN_SV_ROWS {
        return input(format!("SKLD standard error needs at least {MIN_SV_ROWS} draws per density"));
    }
    let r1 = log_ratio_series(d1, d2, s1)?;
    let r2 = log_ratio_series(d1, d2, s2)?;
    let var = sv_scalar(&r1, window)? / r1.len() as f64 + sv_scalar(&r2, window)? / r2.len() as f64;
    Ok((mean(&r1) - mean(&r2), var.max(0.0).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LaplaceOrder {
    First,
    #[default]
    Second,
}

type Objective<'a> = dyn Fn(&[f64]) -> f64 + 'a;

fn grad_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + x.abs())
}
fn hess_step(x: f64) -> f64 {
    f64::EPSILON.powf(0.25) * (1.0 + x.abs())
}
fn third_step(x: f64) -> f64 {
    f64::EPSILON.powf(0.2) * (1.0 + x.abs())
}

fn shifted(x: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut y = x.to_vec();
    for &(i, h) in moves {
        y[i] += h;
    }
    y
}

fn fd_gradient(f: &Objective<'_>, x: &[f64]) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let h = grad_step(x[i]);
        (f(&shifted(x, &[(i, h)])) - f(&shifted(x, &[(i, -h)]))) / (2.0 * h)
    })
}

fn fd_hessian(f: &Objective<'_>, x: &[f64]) -> DMatrix<f64> {
    let r = x.len();
    let h: Vec<f64> = x.iter().map(|&v| hess_step(v)).collect();
    let f0 = f(x);
    let mut m = DMatrix::zeros(r, r);
    for i in 0..r {
        let fp = f(&shifted(x, &[(i, h[i])]));
        let fm = f(&shifted(x, &[(i, -h[i])]));
        m[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let pp = f(&shifted(x, &[(i, h[i]), (j, h[j])]));
            let pm = f(&shifted(x, &[(i, h[i]), (j, -h[j])]));
            let mp = f(&shifted(x, &[(i, -h[i]), (j, h[j])]));
            let mm = f(&shifted(x, &[(i, -h[i]), (j, -h[j])]));
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// `T[d](b, c) = ∂³f/∂x_b∂x_c∂x_d` by central differencing of the Hessian.
fn fd_third(f: &Objective<'_>, x: &[f64]) -> Vec<DMatrix<f64>> {
    (0..x.len())
        .map(|d| {
            let h = third_step(x[d]);
            (fd_hessian(f, &shifted(x, &[(d, h)])) - fd_hessian(f, &shifted(x, &[(d, -h)]))) / (2.0 * h)
        })
        .collect()
}

const MODE_MAX_ITER: usize = 500;

/// Maximizes `f` from `start`: BFGS on finite-difference gradients with
/// backtracking, then Newton polishing on the finite-difference Hessian.
pub fn find_mode(f: &Objective<'_>, start: &[f64]) -> Result<Vec<f64>> {
    let neg = |x: &[f64]| -f(x);
    let r = start.len();
    let mut x = DVector::from_column_slice(start);
    let mut fx = neg(x.as_slice());
    if !fx.is_finite() {
        return Err(Error::Optimization("log density is not finite at the starting point".into()));
    }
    let mut g = fd_gradient(&neg, x.as_slice());
    let mut hinv = DMatrix::<f64>::identity(r, r);
    let tol = |fx: f64| 1e-9 * (1.0 + fx.abs());
    for _ in 0..MODE_MAX_ITER {
        if g.amax() <= tol(fx) {
            break;
        }
        let mut p = -(&hinv * &g);
        if p.dot(&g) >= 0.0 {
            hinv = DMatrix::identity(r, r);
            p = -g.clone();
        }
        let slope = p.dot(&g);
        let mut t = 1.0;
        let mut moved = None;
        for _ in 0..60 {
            let xn = &x + &p * t;
            let fnew = neg(xn.as_slice());
            if fnew.is_finite() && fnew <= fx + 1e-4 * t * slope {
                moved = Some((xn, fnew));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = moved else { break };
        let gn = fd_gradient(&neg, xn.as_slice());
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let id = DMatrix::<f64>::identity(r, r);
            let left = &id - &s * y.transpose() * rho;
            let right = &id - &y * s.transpose() * rho;
            hinv = &left * &hinv * &right + &s * s.transpose() * rho;
        }
        x = xn;
        fx = fnew;
        g = gn;
    }
    for _ in 0..20 {
        let h = fd_hessian(&neg, x.as_slice());
        let Some(ch) = h.clone().cholesky() else { break };
        let step = ch.solve(&g);
        let xn = &x - step;
        let fnew = neg(xn.as_slice());
        if !(fnew.is_finite() && fnew <= fx + tol(fx)) {
            break;
        }
        let gn = fd_gradient(&neg, xn.as_slice());
        let done = gn.amax() >= g.amax();
        if gn.amax() <= g.amax() {
            x = xn;
            fx = fnew;
            g = gn;
        }
        if done || g.amax() <= 1e-14 * (1.0 + fx.abs()) {
            break;
        }
    }
    if !(g.amax() <= 1e-6 * (1.0 + fx.abs()) / (1.0 + x.amax())) {
        return Err(Error::Optimization(format!("mode search stalled with gradient norm {:.3e}", g.amax())));
    }
    Ok(x.iter().copied().collect())
}

fn mode_of(d: &dyn UnnormalizedDensity) -> Result<Vec<f64>> {
    if d.support() != Support::ContinuousVector {
        return input(format!("Laplace SKLD needs a continuous support, {} is discrete", describe(d)));
    }
    let start = d.mode_hint().unwrap_or_else(|| vec![0.0; d.dim()]);
    find_mode(&|x: &[f64]| d.log_weight(x), &start)
}

/// `E_G[J]` to second order around the mode `m` of `G`.
fn laplace_expectation(j: &Objective<'_>, g: &Objective<'_>, m: &[f64], order: LaplaceOrder) -> Result<f64> {
    let j0 = j(m);
    if order == LaplaceOrder::First {
        return Ok(j0);
    }
    let r = m.len();
    let gh = fd_hessian(g, m);
    let ginv = gh.clone().try_inverse().filter(|inv| inv.iter().all(|v| v.is_finite())).ok_or_else(|| {
        Error::Numerical(format!("singular Hessian of the log density at the mode {m:?}"))
    })?;
    if gh.clone().symmetric_eigen().eigenvalues.iter().any(|&e| e >= 0.0) {
        return Err(Error::Numerical(format!("Hessian at {m:?} is not negative definite")));
    }
    let jg = fd_gradient(j, m);
    let jh = fd_hessian(j, m);
    let g3 = fd_third(g, m);
    let mut third = 0.0;
    for a in 0..r {
        for b in 0..r {
            for c in 0..r {
                for d in 0..r {
                    third += jg[a] * g3[d][(b, c)] * ginv[(a, b)] * ginv[(c, d)];
                }
            }
        }
    }
    let second = jh.component_mul(&ginv).sum();
    Ok(j0 + 0.5 * third - 0.5 * second)
}

fn skld_laplace_at(
    d1: &dyn UnnormalizedDensity,
    d2: &dyn UnnormalizedDensity,
    m1: &[f64],
    m2: &[f64],
    order: LaplaceOrder,
) -> Result<f64> {
    let g = |x: &[f64]| d1.log_weight(x);
    let h = |x: &[f64]| d2.log_weight(x);
    let j = |x: &[f64]| d1.log_weight(x) - d2.log_weight(x);
    let v = laplace_expectation(&j, &g, m1, order)? - laplace_expectation(&j, &h, m2, order)?;
    if !v.is_finite() {
        return Err(Error::Numerical(format!("non-finite Laplace SKLD for {} and {}", describe(d1), describe(d2))));
    }
    Ok(v)
}

/// Modified Laplace approximation of the SKLD.
pub fn skld_laplace(d1: &dyn UnnormalizedDensity, d2: &dyn UnnormalizedDensity, order: LaplaceOrder) -> Result<f64> {
    if d1.dim() != d2.dim() {
        return input("densities differ in dimension");
    }
    skld_laplace_at(d1, d2, &mode_of(d1)?, &mode_of(d2)?, order)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceMethod {
    MonteCarlo,
    Laplace(LaplaceOrder),
    /// Distance between min–max scaled parameter points.
    Euclidean,
}

/// Draw budget for Monte Carlo divergences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub draws: usize,
    pub burnin: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { draws: 3000, burnin: 400, seed: 0 }
    }
}

/// Symmetric `|Ξ| × |Ξ|` matrix of divergences with zero diagonal. Monte
/// Carlo entries are reported raw and may dip slightly below zero.
pub fn pairwise_divergence_matrix(
    grid: &FamilyGrid,
    method: DivergenceMethod,
    sampler: &SamplerConfig,
) -> Result<DMatrix<f64>> {
    let m = grid.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let values: Vec<f64> = match method {
        DivergenceMethod::Euclidean => {
            let pts: Vec<Vec<f64>> = (0..m).map(|i| grid.scaled_point(i)).collect();
            pairs
                .iter()
                .map(|&(i, j)| pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                .collect()
        }
        DivergenceMethod::Laplace(order) => {
            let modes = exec::try_map_range(m, |i| mode_of(grid.density(i).as_ref()))?;
            exec::try_map_range(pairs.len(), |p| {
                let (i, j) = pairs[p];
                skld_laplace_at(grid.density(i).as_ref(), grid.density(j).as_ref(), &modes[i], &modes[j], order)
            })?
        }
        DivergenceMethod::MonteCarlo => {
            if sampler.draws == 0 {
                return input("Monte Carlo divergences need a positive draw count");
            }
            let chains = exec::try_map_range(m, |i| {
                grid.sample_point(i, sampler.draws, sampler.burnin, sampler.seed, Stream::Divergence)
            })?;
            // mean of log ν_j over the draws of density i
            let means: Vec<Vec<f64>> = exec::try_map_range(m, |i| {
                let mut acc = vec![0.0; m];
                for x in chains[i].draws.rows() {
                    for (j, a) in acc.iter_mut().enumerate() {
                        let v = checked_log_weight(grid.density(j).as_ref(), x)?;
                        if v.is_infinite() {
                            return Err(Error::Support(format!(
                                "{} vanishes at a draw from {}",
                                describe(grid.density(j).as_ref()),
                                describe(grid.density(i).as_ref())
                            )));
                        }
                        *a += v;
                    }
                }
                Ok(acc.into_iter().map(|a| a / chains[i].len() as f64).collect())
            })?;
            pairs.iter().map(|&(i, j)| (means[i][i] - means[i][j]) - (means[j][i] - means[j][j])).collect()
        }
    };
    let mut out = DMatrix::zeros(m, m);
    for (&(i, j), v) in pairs.iter().zip(values) {
        out[(i, j)] = v;
        out[(j, i)] = v;
    }
    Ok(out)
}

/// Distances for design use: negative Monte Carlo noise clamped to zero.
pub fn clamp_distances(dist: &DMatrix<f64>) -> DMatrix<f64> {
    dist.map(|v| v.max(0.0))
}
