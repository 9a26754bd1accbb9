//! Reverse logistic regression for the proposal normalizer ratios.
//!
//! The pooled stage-1 draws are treated as multinomially labelled by the
//! proposal they came from. Maximizing the log quasi-likelihood
//! `ℓ_N(ζ) = Σ_l a_l (N/N_l) Σ_i log p_l(X_i^(l), ζ)` over the sum-zero
//! hyperplane gives `ζ̂`, and `d̂ = g(ζ̂)` with `d̂_j = exp(ζ̂_1 − ζ̂_j)·a_j/a_1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{input, Error, Result};
use crate::exec;
use crate::family::{checked_log_weight, describe, LogWeightTable, SampleBank, UnnormalizedDensity};
use crate::linalg::pinv_symmetric;

/// Draws per parallel work unit when accumulating over chains.
const CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct RLFit {
    /// Sum-zero maximizer of the quasi-likelihood.
    pub zeta_hat: Vec<f64>,
    /// Normalizer ratios `c_j / c_1`, `d̂_1 = 1`.
    pub d_hat: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// ∞-norm of the gradient of `ℓ_N/N` at `ζ̂`.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200 }
    }
}

/// Writes `log p_l(x, ζ)` into `out` given the row `log φ_l(x)`.
fn log_membership_row(log_phi: &[f64], zeta: &[f64], out: &mut [f64]) -> Option<()> {
    let mut m = f64::NEG_INFINITY;
    for ((o, &lp), &z) in out.iter_mut().zip(log_phi).zip(zeta) {
        *o = lp + z;
        m = m.max(*o);
    }
    if !m.is_finite() {
        return None;
    }
    let lse = m + out.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    out.iter_mut().for_each(|v| *v -= lse);
    Some(())
}

/// Probability that `x` belongs to each proposal under `ζ`.
pub fn membership_probs(
    x: &[f64],
    densities: &[&dyn UnnormalizedDensity],
    zeta: &[f64],
) -> Result<Vec<f64>> {
    if zeta.len() != densities.len() {
        return input(format!("{} zeta entries for {} densities", zeta.len(), densities.len()));
    }
    if zeta.iter().any(|z| !z.is_finite()) {
        return input("zeta must be finite");
    }
    let log_phi = densities.iter().map(|d| checked_log_weight(*d, x)).collect::<Result<Vec<_>>>()?;
    let mut out = vec![0.0; zeta.len()];
    log_membership_row(&log_phi, zeta, &mut out).ok_or_else(|| Error::Evaluation {
        density: densities.iter().map(|d| describe(*d)).collect::<Vec<_>>().join(","),
        reason: "every density vanishes at the point".into(),
    })?;
    Ok(out.into_iter().map(f64::exp).collect())
}

/// Evaluates the skeleton densities at every stage-1 draw.
pub fn stage1_tables(bank: &SampleBank) -> Result<Vec<LogWeightTable>> {
    let refs = bank.density_refs();
    bank.stage1.iter().map(|c| LogWeightTable::evaluate(&c.draws, &refs)).collect()
}

/// Evaluates the skeleton densities at every stage-2 draw.
pub fn stage2_tables(bank: &SampleBank) -> Result<Vec<LogWeightTable>> {
    let refs = bank.density_refs();
    bank.stage2.iter().map(|c| LogWeightTable::evaluate(&c.draws, &refs)).collect()
}

/// Value, gradient and `B̂` of `ℓ_N(ζ)/N`, accumulated over all chains.
pub(crate) struct QuasiTerms {
    pub value: f64,
    pub grad: DVector<f64>,
    pub b: DMatrix<f64>,
}

fn validate_tables(tables: &[LogWeightTable], a: &[f64]) -> Result<usize> {
    let k = a.len();
    if tables.len() != k {
        return input(format!("{} stage-1 chains for {k} weights", tables.len()));
    }
    if let Some(l) = tables.iter().position(|t| t.nrows() == 0) {
        return input(format!("stage-1 chain {l} is empty"));
    }
    if tables.iter().any(|t| t.ncols() != k) {
        return input("stage-1 log-weight tables must have one column per proposal");
    }
    if a.iter().any(|&v| !(v > 0.0)) {
        return input("mixing weights must be positive");
    }
    Ok(k)
}

pub(crate) fn quasi_terms(
    zeta: &[f64],
    tables: &[LogWeightTable],
    a: &[f64],
    with_hessian: bool,
) -> Result<QuasiTerms> {
    let k = validate_tables(tables, a)?;
    let units: Vec<(usize, usize)> = tables
        .iter()
        .enumerate()
        .flat_map(|(l, t)| (0..t.nrows()).step_by(CHUNK).map(move |s| (l, s)))
        .collect();
    let partials = exec::map(&units, |&(l, start)| -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let t = &tables[l];
        let end = (start + CHUNK).min(t.nrows());
        let mut lp = vec![0.0; k];
        let mut value = 0.0;
        let mut psum = vec![0.0; k];
        let mut ppsum = if with_hessian { vec![0.0; k * k] } else { Vec::new() };
        for i in start..end {
            log_membership_row(t.row(i), zeta, &mut lp).ok_or_else(|| Error::Evaluation {
                density: format!("stage-1 chain {l}"),
                reason: format!("zero total mixture weight at draw {i}"),
            })?;
            value += lp[l];
            for r in 0..k {
                let pr = lp[r].exp();
                psum[r] += pr;
                if with_hessian {
                    for s in 0..=r {
                        ppsum[r * k + s] += pr * lp[s].exp();
                    }
                }
            }
        }
        Ok((value, psum, ppsum))
    });

    let mut value = 0.0;
    let mut grad = DVector::from_column_slice(a);
    let mut b = DMatrix::zeros(k, k);
    let mut chain_value = vec![0.0; k];
    let mut chain_p = vec![vec![0.0; k]; k];
    let mut chain_pp = vec![vec![0.0; k * k]; k];
    for (&(l, _), part) in units.iter().zip(partials) {
        let (v, ps, pps) = part?;
        chain_value[l] += v;
        for r in 0..k {
            chain_p[l][r] += ps[r];
        }
        if with_hessian {
            for (acc, x) in chain_pp[l].iter_mut().zip(&pps) {
                *acc += x;
            }
        }
    }
    for l in 0..k {
        let nl = tables[l].nrows() as f64;
        value += a[l] * chain_value[l] / nl;
        for r in 0..k {
            let mean_p = chain_p[l][r] / nl;
            grad[r] -= a[l] * mean_p;
            if with_hessian {
                b[(r, r)] += a[l] * mean_p;
                for s in 0..=r {
                    let v = a[l] * chain_pp[l][r * k + s] / nl;
                    b[(r, s)] -= v;
                    if s != r {
                        b[(s, r)] -= v;
                    }
                }
            }
        }
    }
    Ok(QuasiTerms { value, grad, b })
}

/// `ℓ_N(ζ)` over pre-evaluated stage-1 tables.
pub fn quasi_loglik_tables(zeta: &[f64], tables: &[LogWeightTable], a: &[f64]) -> Result<f64> {
    if zeta.len() != a.len() {
        return input("zeta and weights differ in length");
    }
    let n: usize = tables.iter().map(LogWeightTable::nrows).sum();
    Ok(quasi_terms(zeta, tables, a, false)?.value * n as f64)
}

/// Log quasi-likelihood `ℓ_N(ζ)` of the bank's stage-1 draws.
pub fn quasi_loglik(zeta: &[f64], bank: &SampleBank) -> Result<f64> {
    quasi_loglik_tables(zeta, &stage1_tables(bank)?, bank.skeleton.weights())
}

/// Maps `ζ` to `d` (length `k`, `d_1 = 1`).
pub fn zeta_to_d(zeta: &[f64], a: &[f64]) -> Result<Vec<f64>> {
    if zeta.len() != a.len() || zeta.is_empty() {
        return input("zeta and weights differ in length");
    }
    if zeta.iter().chain(a).any(|v| !v.is_finite()) || a.iter().any(|&v| !(v > 0.0)) {
        return input("zeta must be finite and weights positive");
    }
    let mut d: Vec<f64> = zeta.iter().zip(a).map(|(z, aj)| (zeta[0] - z).exp() * aj / a[0]).collect();
    d[0] = 1.0;
    Ok(d)
}

/// Newton–Raphson with step halving on the reduced coordinates
/// `ζ_k = −Σ_{j<k} ζ_j`, started at `ζ = 0`.
pub fn fit_tables(tables: &[LogWeightTable], a: &[f64], opts: FitOptions) -> Result<RLFit> {
    let k = validate_tables(tables, a)?;
    if k < 2 {
        return input("reverse logistic regression needs at least two proposals");
    }
    let mut zeta = vec![0.0; k];
    let mut terms = quasi_terms(&zeta, tables, a, true)?;
    if !terms.value.is_finite() {
        return input("quasi-likelihood is not finite at the starting point");
    }
    let reduce = |g: &DVector<f64>| DVector::from_fn(k - 1, |j, _| g[j] - g[k - 1]);
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let gnorm = terms.grad.amax();
        if gnorm <= opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;
        // reduced Hessian of −ℓ/N: Pᵀ B P
        let b = &terms.b;
        let h = DMatrix::from_fn(k - 1, k - 1, |r, s| {
            b[(r, s)] - b[(r, k - 1)] - b[(k - 1, s)] + b[(k - 1, k - 1)]
        });
        let g = reduce(&terms.grad);
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => pinv_symmetric(&h)? * &g,
        };
        let full = |t: f64| -> Vec<f64> {
            let mut z: Vec<f64> = (0..k - 1).map(|j| zeta[j] + t * step[j]).collect();
            let tail: f64 = z.iter().sum();
            z.push(-tail);
            z
        };
        // near the optimum the change in value drops below rounding; allow a few ulps
        let slack = 8.0 * f64::EPSILON * (1.0 + terms.value.abs());
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = full(t);
            let ct = quasi_terms(&cand, tables, a, true)?;
            if ct.value.is_finite() && ct.value >= terms.value - slack {
                accepted = Some((cand, ct));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((z, ct)) => {
                zeta = z;
                terms = ct;
            }
            // no ascent direction left at working precision
            None => break,
        }
    }
    let d_hat = zeta_to_d(&zeta, a)?;
    Ok(RLFit { zeta_hat: zeta, d_hat, converged, iterations, grad_norm: terms.grad.amax() })
}

/// Fits `ζ̂` and `d̂` from the bank's stage-1 chains.
pub fn fit_reverse_logistic(bank: &SampleBank, opts: FitOptions) -> Result<RLFit> {
    if bank.k() < 2 {
        return input("reverse logistic regression needs at least two proposals");
    }
    if bank.stage1.len() != bank.k() || bank.stage1.iter().any(|c| c.is_empty()) {
        return input("every proposal needs a nonempty stage-1 chain");
    }
    fit_tables(&stage1_tables(bank)?, bank.skeleton.weights(), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{FnDensity, SkeletonSet, Support};
    use crate::testutil;
    use approx::assert_relative_eq;

    fn flat(label: f64) -> FnDensity {
        FnDensity::new(1, Support::ContinuousVector, vec![label], |_| 0.0)
    }

    #[test]
    fn membership_examples() {
        let (d1, d2, d3) = (flat(1.0), flat(2.0), flat(3.0));
        let p = membership_probs(&[0.0], &[&d1, &d2, &d3], &[0.0; 3]).unwrap();
        p.iter().for_each(|v| assert_relative_eq!(*v, 1.0 / 3.0, epsilon = 1e-15));

        let l3 = 3f64.ln();
        let p = membership_probs(&[0.0], &[&d1, &d2], &[l3, -l3]).unwrap();
        assert_relative_eq!(p[0], 0.9, epsilon = 1e-15);
        assert_relative_eq!(p[1], 0.1, epsilon = 1e-15);

        let zero = FnDensity::new(1, Support::ContinuousVector, vec![0.0], |_| f64::NEG_INFINITY);
        let p = membership_probs(&[0.0], &[&d1, &zero], &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
        assert!(membership_probs(&[0.0], &[&zero, &zero], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn zeta_to_d_examples() {
        let a = [0.2, 0.3, 0.5];
        let la: Vec<f64> = a.iter().map(|v: &f64| v.ln()).collect();
        let mean = la.iter().sum::<f64>() / 3.0;
        let z: Vec<f64> = la.iter().map(|v| v - mean).collect();
        zeta_to_d(&z, &a).unwrap().iter().for_each(|v| assert_relative_eq!(*v, 1.0, epsilon = 1e-14));

        let d = zeta_to_d(&[0.5, -0.5], &[0.5, 0.5]).unwrap();
        assert_relative_eq!(d[1], std::f64::consts::E, epsilon = 1e-15);

        let d = zeta_to_d(&[0.1, 0.4, -0.5], &a).unwrap();
        let dp = zeta_to_d(&[0.1, -0.5, 0.4], &[0.2, 0.5, 0.3]).unwrap();
        assert_eq!(d[1], dp[2]);
        assert_eq!(d[2], dp[1]);
    }

    fn gaussian_bank(means: &[f64], sds: &[f64], n: usize, seed: u64) -> SampleBank {
        let pts: Vec<(f64, f64)> = means.iter().copied().zip(sds.iter().copied()).collect();
        testutil::gaussian_bank(&pts, n, seed)
    }

    #[test]
    fn quasi_loglik_identical_and_shift() {
        let bank = testutil::identical_bank(3, vec![1.0 / 3.0; 3], 50, 1);
        let v = quasi_loglik(&[0.0, 0.0, 0.0], &bank).unwrap();
        assert_relative_eq!(v, 150.0 * (1.0f64 / 3.0).ln(), epsilon = 1e-10);

        let bank = gaussian_bank(&[0.0, 1.0], &[1.0, 1.0], 200, 2);
        let z = [0.3, -0.3];
        let base = quasi_loglik(&z, &bank).unwrap();
        let shifted = quasi_loglik(&[0.3 + 7.3, -0.3 + 7.3], &bank).unwrap();
        assert_relative_eq!(base, shifted, max_relative = 1e-12);
    }

    #[test]
    fn quasi_loglik_matches_direct_summation() {
        let bank = gaussian_bank(&[0.0, 1.0], &[1.0, 1.0], 300, 5);
        let zeta = [0.2, -0.2];
        let refs = bank.density_refs();
        let n_total = bank.stage1_total() as f64;
        let mut direct = 0.0;
        for (l, chain) in bank.stage1.iter().enumerate() {
            let nl = chain.len() as f64;
            for x in chain.draws.rows() {
                let w: Vec<f64> = refs.iter().zip(&zeta).map(|(d, z)| (d.log_weight(x) + z).exp()).collect();
                let p = w[l] / w.iter().sum::<f64>();
                direct += 0.5 * n_total / nl * p.ln();
            }
        }
        assert_relative_eq!(quasi_loglik(&zeta, &bank).unwrap(), direct, max_relative = 1e-12);
    }

    #[test]
    fn identical_densities_fit_exactly() {
        let mut bank = testutil::identical_bank(2, vec![0.5, 0.5], 100, 7);
        let fit = fit_reverse_logistic(&bank, FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.d_hat, vec![1.0, 1.0]);

        // unequal a: closed-form maximizer ζ_l = log a_l − mean(log a)
        bank.skeleton = SkeletonSet::new(vec![0, 1], 0, vec![0.3, 0.7]).unwrap();
        let fit = fit_reverse_logistic(&bank, FitOptions::default()).unwrap();
        assert!(fit.converged);
        fit.d_hat.iter().for_each(|v| assert_relative_eq!(*v, 1.0, epsilon = 1e-12));
        let la = [0.3f64.ln(), 0.7f64.ln()];
        let m = (la[0] + la[1]) / 2.0;
        assert_relative_eq!(fit.zeta_hat[0], la[0] - m, epsilon = 1e-10);
        assert!(fit.zeta_hat.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn two_gaussians_recover_known_ratio() {
        let bank = gaussian_bank(&[0.0, 0.0], &[1.0, 2.0], 10_000, 11);
        let fit = fit_reverse_logistic(&bank, FitOptions::default()).unwrap();
        assert!(fit.converged && fit.grad_norm <= 1e-10);
        assert_eq!(fit.d_hat[0], 1.0);
        assert!((fit.d_hat[1] - 2.0).abs() < 0.1, "d2 = {}", fit.d_hat[1]);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let bank = gaussian_bank(&[0.0], &[1.0], 10, 1);
        assert!(matches!(fit_reverse_logistic(&bank, FitOptions::default()), Err(Error::Input(_))));
    }

    #[test]
    fn within_chain_permutation_and_common_scaling() {
        let bank = gaussian_bank(&[0.0, 1.5, 3.0], &[1.0, 1.0, 1.0], 500, 13);
        let base = fit_reverse_logistic(&bank, FitOptions::default()).unwrap();
        let mut permuted = bank.clone();
        for c in &mut permuted.stage1 {
            let n = c.len();
            let perm: Vec<usize> = (0..n).map(|i| (i * 7919 + 13) % n).collect();
            c.draws = c.draws.permuted(&perm);
        }
        let p = fit_reverse_logistic(&permuted, FitOptions::default()).unwrap();
        for (a, b) in base.zeta_hat.iter().zip(&p.zeta_hat) {
            assert!((a - b).abs() <= 1e-10);
        }
        // every φ scaled by e^4 leaves ζ̂ unchanged
        let tables = stage1_tables(&bank).unwrap();
        let shifted: Vec<LogWeightTable> = tables
            .iter()
            .map(|t| {
                let vals = (0..t.nrows()).flat_map(|i| t.row(i).iter().map(|v| v + 4.0).collect::<Vec<_>>()).collect();
                LogWeightTable::new(t.nrows(), t.ncols(), vals).unwrap()
            })
            .collect();
        let s = fit_tables(&shifted, bank.skeleton.weights(), FitOptions::default()).unwrap();
        for (a, b) in base.zeta_hat.iter().zip(&s.zeta_hat) {
            assert!((a - b).abs() <= 1e-10);
        }
    }
}
