//! Spectral-variance standard errors for `d̂`, `û` and `η̂`.
//!
//! Per-target quantities are computed on the scaled weights of
//! [`ISWeights`]; `û`, `ĉ` and `σ̂_u` scale with `exp(log_scale)`, `τ̂²` with
//! its square, while `η̂`, `ê`, `ρ̂` and RelSE are scale free.

use nalgebra::{DMatrix, DVector};

use crate::error::{input, Error, Result};
use crate::exec;
use crate::gis::{f_values, target_log_values, ISWeights, MixtureEval, ScalarFn};
use crate::linalg::{pinv_symmetric, spectral_norm_symmetric, symmetrize};
use crate::rlogistic::{quasi_terms, stage1_tables, RLFit};
use crate::family::{LogWeightTable, SampleBank, UnnormalizedDensity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowKind {
    #[default]
    TukeyHanning,
    Bartlett,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Truncation {
    /// `b_n = ⌊√n⌋`.
    #[default]
    SqrtN,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LagWindow {
    pub kind: WindowKind,
    pub truncation: Truncation,
}

impl LagWindow {
    pub fn tukey_hanning() -> Self {
        Self { kind: WindowKind::TukeyHanning, truncation: Truncation::SqrtN }
    }
    pub fn bartlett() -> Self {
        Self { kind: WindowKind::Bartlett, truncation: Truncation::SqrtN }
    }
    pub fn with_truncation(self, truncation: Truncation) -> Self {
        Self { truncation, ..self }
    }

    /// Truncation point for a series of length `n` (at least 1).
    pub fn truncation_for(&self, n: usize) -> usize {
        let b = match self.truncation {
            Truncation::SqrtN => (n as f64).sqrt().floor() as usize,
            Truncation::Fixed(b) => b,
        };
        b.clamp(1, n.max(1))
    }

    /// `w(j)` for truncation `b`; zero once `|j| ≥ b`.
    pub fn weight(&self, j: isize, b: usize) -> f64 {
        let j = j.unsigned_abs();
        if j >= b {
            return 0.0;
        }
        let x = j as f64 / b as f64;
        match self.kind {
            WindowKind::TukeyHanning => 0.5 * (1.0 + (std::f64::consts::PI * x).cos()),
            WindowKind::Bartlett => 1.0 - x,
        }
    }
}

pub const MIN_SV_ROWS: usize = 4;

/// SV estimate for `n` rows of `p`-vectors stored row-major.
fn sv_rowmajor(data: &[f64], n: usize, p: usize, window: &LagWindow) -> Result<DMatrix<f64>> {
    if n < MIN_SV_ROWS {
        return input(format!("spectral variance needs at least {MIN_SV_ROWS} rows, got {n}"));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite value in spectral-variance input".into()));
    }
    let mut mean = vec![0.0; p];
    for row in data.chunks_exact(p) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let z: Vec<f64> = data.chunks_exact(p).flat_map(|row| row.iter().zip(&mean).map(|(v, m)| v - m)).collect();

    let b = window.truncation_for(n);
    let lags = exec::map_range(b, |j| {
        let mut g = vec![0.0; p * p];
        for t in j..n {
            let (zt, zs) = (&z[t * p..(t + 1) * p], &z[(t - j) * p..(t - j + 1) * p]);
            for r in 0..p {
                let zr = zt[r];
                for s in 0..p {
                    g[r * p + s] += zr * zs[s];
                }
            }
        }
        g
    });
    let mut out = DMatrix::zeros(p, p);
    for (j, g) in lags.iter().enumerate() {
        let w = window.weight(j as isize, b);
        for r in 0..p {
            for s in 0..p {
                let v = g[r * p + s] / n as f64;
                if j == 0 {
                    out[(r, s)] += v;
                } else {
                    out[(r, s)] += w * v;
                    out[(s, r)] += w * v;
                }
            }
        }
    }
    Ok(symmetrize(&out))
}

/// `Σ_{|j|<b} w(j) γ(j)` with `γ(j)` the mean-centred lag-`j` autocovariance
/// (divisor `n`) of the rows of `z`; rows are time ordered.
pub fn sv_matrix(z: &DMatrix<f64>, window: &LagWindow) -> Result<DMatrix<f64>> {
    let (n, p) = z.shape();
    let data: Vec<f64> = (0..n).flat_map(|i| (0..p).map(move |j| z[(i, j)])).collect();
    sv_rowmajor(&data, n, p, window)
}

/// SV estimate for several aligned series, one per column of the result.
pub fn sv_columns(series: &[&[f64]], window: &LagWindow) -> Result<DMatrix<f64>> {
    let p = series.len();
    let n = series.first().map_or(0, |s| s.len());
    if p == 0 || series.iter().any(|s| s.len() != n) {
        return input("series must be nonempty and of equal length");
    }
    let data: Vec<f64> = (0..n).flat_map(|i| series.iter().map(move |s| s[i])).collect();
    sv_rowmajor(&data, n, p, window)
}

pub fn sv_scalar(xs: &[f64], window: &LagWindow) -> Result<f64> {
    Ok(sv_rowmajor(xs, xs.len(), 1, window)?[(0, 0)])
}

/// Estimated covariance pieces for the reverse logistic estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct RLCovariance {
    pub b: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub u: DMatrix<f64>,
    /// Asymptotic covariance of `√N (d̂_{2..k} − d_{2..k})`.
    pub v: DMatrix<f64>,
    pub d_jacobian: DMatrix<f64>,
}

/// `∂d/∂ζ`: first row `(d_2..d_k)`, then `−diag(d_2..d_k)`.
pub fn d_jacobian(d_hat: &[f64]) -> DMatrix<f64> {
    let k = d_hat.len();
    DMatrix::from_fn(k, k.saturating_sub(1), |r, c| {
        if r == 0 {
            d_hat[c + 1]
        } else if r == c + 1 {
            -d_hat[c + 1]
        } else {
            0.0
        }
    })
}

/// Covariance of the fit from pre-evaluated stage-1 tables (chain order = skeleton order).
pub fn rl_covariance_tables(
    tables: &[LogWeightTable],
    a: &[f64],
    fit: &RLFit,
    window: &LagWindow,
) -> Result<RLCovariance> {
    let k = a.len();
    if fit.zeta_hat.len() != k || fit.d_hat.len() != k {
        return input("fit does not match the number of proposals");
    }
    let terms = quasi_terms(&fit.zeta_hat, tables, a, true)?;
    let b = symmetrize(&terms.b);
    let n_total: usize = tables.iter().map(LogWeightTable::nrows).sum();

    let sigmas = exec::map(tables, |t| -> Result<DMatrix<f64>> {
        let mut z = Vec::with_capacity(t.nrows() * k);
        for i in 0..t.nrows() {
            let row = t.row(i);
            let m = row.iter().zip(&fit.zeta_hat).map(|(p, z)| p + z).fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().zip(&fit.zeta_hat).map(|(p, z)| (p + z - m).exp()).sum();
            z.extend(row.iter().zip(&fit.zeta_hat).map(|(p, zz)| (p + zz - m).exp() / s));
        }
        sv_rowmajor(&z, t.nrows(), k, window)
    });
    let mut omega = DMatrix::zeros(k, k);
    for (l, s) in sigmas.into_iter().enumerate() {
        omega += s? * (n_total as f64 / tables[l].nrows() as f64 * a[l] * a[l]);
    }
    let omega = symmetrize(&omega);

    let bp = pinv_symmetric(&b)?;
    let resid = (&b * &bp * &b - &b).amax();
    let scale = spectral_norm_symmetric(&b).max(f64::MIN_POSITIVE);
    if resid > 1e-8 * scale.max(1.0) {
        return Err(Error::Numerical(format!(
            "pseudo-inverse of B̂ failed: ‖B B⁺ B − B‖ = {resid:.3e}, ‖B‖ = {scale:.3e}"
        )));
    }
    let u = symmetrize(&(&bp * &omega * &bp));
    let d_jac = d_jacobian(&fit.d_hat);
    let v = symmetrize(&(d_jac.transpose() * &u * &d_jac));
    Ok(RLCovariance { b, omega, u, v, d_jacobian: d_jac })
}

pub fn rl_covariance(bank: &SampleBank, fit: &RLFit, window: &LagWindow) -> Result<RLCovariance> {
    rl_covariance_tables(&stage1_tables(bank)?, bank.skeleton.weights(), fit, window)
}

/// Per-target ingredients of the two-stage variances, on the scaled weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTerms {
    pub log_scale: f64,
    pub u_hat: f64,
    pub c: DVector<f64>,
    pub tau2: f64,
    pub eta: Option<EtaTerms>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtaTerms {
    pub v_hat: f64,
    pub eta_hat: f64,
    pub e: DVector<f64>,
    pub gamma: DMatrix<f64>,
}

/// Chain weights `a_l² n/n_l` combining per-chain SV estimates.
fn chain_factors(a: &[f64], sizes: &[usize]) -> Vec<f64> {
    let n: usize = sizes.iter().sum();
    a.iter().zip(sizes).map(|(a, &nl)| a * a * n as f64 / nl as f64).collect()
}

pub fn target_terms(w: &ISWeights, mix: &MixtureEval, window: &LagWindow) -> Result<TargetTerms> {
    let k = mix.k();
    if w.chain_sizes() != mix.chain_sizes() {
        return input("weights and mixture come from different samples");
    }
    let a = mix.a();
    let d = mix.d();
    let mut c = DVector::<f64>::zeros(k - 1);
    let mut fc = DVector::<f64>::zeros(k - 1);
    for l in 0..k {
        let u = w.u(l);
        let f = w.f(l);
        let nl = u.len() as f64;
        let mut cl = vec![0.0; k - 1];
        let mut fcl = vec![0.0; k - 1];
        for (i, &ui) in u.iter().enumerate() {
            if ui == 0.0 {
                continue;
            }
            let fu = f.map_or(0.0, |f| f[i] * ui);
            for j in 1..k {
                let r = mix.responsibility(l, i, j) / d[j];
                cl[j - 1] += ui * r;
                fcl[j - 1] += fu * r;
            }
        }
        for j in 0..k - 1 {
            c[j] += a[l] / nl * cl[j];
            fc[j] += a[l] / nl * fcl[j];
        }
    }
    let factors = chain_factors(a, &w.chain_sizes());
    let u_hat = w.scaled_u_hat();

    let eta = match w.f(0) {
        None => None,
        Some(_) => {
            if !(u_hat > 0.0) {
                return Err(Error::Degenerate("û = 0: the target puts no mass on any stage-2 draw".into()));
            }
            let v_hat = w.scaled_v_hat().unwrap_or(0.0);
            let eta_hat = v_hat / u_hat;
            let e = DVector::from_fn(k - 1, |j, _| fc[j] / u_hat - c[j] * eta_hat / u_hat);
            let mut gamma = DMatrix::zeros(2, 2);
            for l in 0..k {
                let v = w.v(l).unwrap_or_default();
                gamma += sv_columns(&[&v, w.u(l)], window)? * factors[l];
            }
            Some(EtaTerms { v_hat, eta_hat, e, gamma: symmetrize(&gamma) })
        }
    };
    let tau2 = match &eta {
        Some(et) => et.gamma[(1, 1)],
        None => {
            let mut t = 0.0;
            for l in 0..k {
                t += factors[l] * sv_scalar(w.u(l), window)?;
            }
            t
        }
    };
    Ok(TargetTerms { log_scale: w.log_scale(), u_hat, c, tau2, eta })
}

fn quad(x: &DVector<f64>, v: &DMatrix<f64>) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        (x.transpose() * v * x)[(0, 0)]
    }
}

impl TargetTerms {
    /// `υ̂₁² = ĉᵀV̂ĉ` (scaled); zero for a single proposal.
    pub fn upsilon1_sq(&self, v: Option<&DMatrix<f64>>) -> f64 {
        v.map_or(0.0, |v| quad(&self.c, v))
    }
    /// `σ̂²_u / exp(2·log_scale)`; `n_over_big_n` is `n/N`.
    pub fn scaled_sigma2_u(&self, v: Option<&DMatrix<f64>>, n_over_big_n: f64) -> f64 {
        (n_over_big_n * self.upsilon1_sq(v)).max(0.0) + self.tau2
    }
    pub fn sigma2_u(&self, v: Option<&DMatrix<f64>>, n_over_big_n: f64) -> f64 {
        self.scaled_sigma2_u(v, n_over_big_n) * (2.0 * self.log_scale).exp()
    }
    /// `ρ̂ = ∇hᵀ Γ̂ ∇h`, written as `(Γ₁₁ − 2η̂Γ₁₂ + η̂²Γ₂₂)/û²`.
    pub fn rho(&self) -> Option<f64> {
        let et = self.eta.as_ref()?;
        let g = &et.gamma;
        let h = et.eta_hat;
        Some((g[(0, 0)] - 2.0 * h * g[(0, 1)] + h * h * g[(1, 1)]) / (self.u_hat * self.u_hat))
    }
    pub fn sigma2_eta(&self, v: Option<&DMatrix<f64>>, n_over_big_n: f64) -> Option<f64> {
        let et = self.eta.as_ref()?;
        let first = v.map_or(0.0, |v| quad(&et.e, v));
        Some(n_over_big_n * first + self.rho()?)
    }
    /// `(υ̂₁/√N + υ̂₂/√n)/û`.
    pub fn rel_se(&self, v: Option<&DMatrix<f64>>, big_n: usize, n: usize) -> f64 {
        rel_se_from(self.upsilon1_sq(v).max(0.0).sqrt(), self.tau2.max(0.0).sqrt(), self.u_hat, big_n, n)
    }
}

/// RelSE from its ingredients; `N = 0` drops the stage-1 term (single proposal).
pub fn rel_se_from(upsilon1: f64, upsilon2: f64, u_hat: f64, big_n: usize, n: usize) -> f64 {
    let first = if big_n == 0 { 0.0 } else { upsilon1 / (big_n as f64).sqrt() };
    let second = if n == 0 { f64::INFINITY } else { upsilon2 / (n as f64).sqrt() };
    if !(u_hat > 0.0) {
        return f64::INFINITY;
    }
    (first + second) / u_hat
}

fn terms_for(
    f: Option<ScalarFn<'_>>,
    target: &dyn UnnormalizedDensity,
    bank: &SampleBank,
    d: &[f64],
    window: &LagWindow,
) -> Result<TargetTerms> {
    let mix = MixtureEval::new(bank, d)?;
    let mut w = ISWeights::from_log_target(&mix, &target_log_values(target, bank)?)?;
    if let Some(f) = f {
        w = w.with_f(f_values(f, bank))?;
    }
    target_terms(&w, &mix, window)
}

fn n_over_big_n(bank: &SampleBank) -> f64 {
    let big_n = bank.stage1_total();
    if big_n == 0 {
        0.0
    } else {
        bank.stage2_total() as f64 / big_n as f64
    }
}

pub fn c_hat(target: &dyn UnnormalizedDensity, bank: &SampleBank, d: &[f64]) -> Result<Vec<f64>> {
    let t = terms_for(None, target, bank, d, &LagWindow::default())?;
    let s = t.log_scale.exp();
    Ok(t.c.iter().map(|c| c * s).collect())
}

pub fn e_hat(f: ScalarFn<'_>, target: &dyn UnnormalizedDensity, bank: &SampleBank, d: &[f64]) -> Result<Vec<f64>> {
    let t = terms_for(Some(f), target, bank, d, &LagWindow::default())?;
    Ok(t.eta.map(|e| e.e.iter().copied().collect()).unwrap_or_default())
}

pub fn tau2_hat(target: &dyn UnnormalizedDensity, bank: &SampleBank, d: &[f64], window: &LagWindow) -> Result<f64> {
    let t = terms_for(None, target, bank, d, window)?;
    Ok(t.tau2 * (2.0 * t.log_scale).exp())
}

/// `Γ̂ = Σ_l (a_l² n/n_l) Γ̂_l` on the pairs `(v_i, u_i)`.
pub fn gamma_hat(
    f: ScalarFn<'_>,
    target: &dyn UnnormalizedDensity,
    bank: &SampleBank,
    d: &[f64],
    window: &LagWindow,
) -> Result<DMatrix<f64>> {
    let t = terms_for(Some(f), target, bank, d, window)?;
    let s = (2.0 * t.log_scale).exp();
    Ok(t.eta.map(|e| e.gamma * s).unwrap_or_else(|| DMatrix::zeros(2, 2)))
}

/// `(n/N)ĉᵀV̂ĉ + τ̂²`; with a single proposal only `τ̂²` remains.
pub fn sigma2_u_hat(
    target: &dyn UnnormalizedDensity,
    bank: &SampleBank,
    fit: Option<&RLFit>,
    rlcov: Option<&RLCovariance>,
    window: &LagWindow,
) -> Result<f64> {
    let d = fit.map_or_else(|| vec![1.0; bank.k()], |f| f.d_hat.clone());
    let t = terms_for(None, target, bank, &d, window)?;
    Ok(t.sigma2_u(rlcov.map(|c| &c.v), n_over_big_n(bank)))
}

pub fn sigma2_eta_hat(
    f: ScalarFn<'_>,
    target: &dyn UnnormalizedDensity,
    bank: &SampleBank,
    fit: Option<&RLFit>,
    rlcov: Option<&RLCovariance>,
    window: &LagWindow,
) -> Result<f64> {
    let d = fit.map_or_else(|| vec![1.0; bank.k()], |f| f.d_hat.clone());
    let t = terms_for(Some(f), target, bank, &d, window)?;
    Ok(t.sigma2_eta(rlcov.map(|c| &c.v), n_over_big_n(bank)).unwrap_or(0.0))
}

pub fn rel_se(
    target: &dyn UnnormalizedDensity,
    bank: &SampleBank,
    fit: Option<&RLFit>,
    rlcov: Option<&RLCovariance>,
    window: &LagWindow,
    big_n: usize,
    n: usize,
) -> Result<f64> {
    let d = fit.map_or_else(|| vec![1.0; bank.k()], |f| f.d_hat.clone());
    let t = terms_for(None, target, bank, &d, window)?;
    Ok(t.rel_se(rlcov.map(|c| &c.v), big_n, n))
}

/// Multiplies entry `(i, j)` of a block-structured matrix by
/// `exp(s_i + s_j)` where `s` repeats every `scales.len()` rows.
fn unscale(m: DMatrix<f64>, scales: &[f64]) -> DMatrix<f64> {
    let p = scales.len();
    let (r, c) = m.shape();
    DMatrix::from_fn(r, c, |i, j| m[(i, j)] * (scales[i % p] + scales[j % p]).exp())
}

/// Scaled `Σ_l (a_l² n/n_l) T̂_l` across several targets on the same draws.
pub fn t_hat_scaled(weights: &[ISWeights], window: &LagWindow) -> Result<DMatrix<f64>> {
    let Some(first) = weights.first() else { return input("no targets") };
    let sizes = first.chain_sizes();
    if weights.iter().any(|w| w.chain_sizes() != sizes) {
        return input("targets evaluated on different samples");
    }
    let factors = chain_factors(first.a(), &sizes);
    let mut t = DMatrix::zeros(weights.len(), weights.len());
    for (l, fac) in factors.iter().enumerate() {
        let series: Vec<&[f64]> = weights.iter().map(|w| w.u(l)).collect();
        t += sv_columns(&series, window)? * *fac;
    }
    Ok(symmetrize(&t))
}

/// Scaled `Σ_l (a_l² n/n_l) Λ̂_l` on the stacked vector `(v_π…, u_π…)`.
pub fn lambda_hat_scaled(weights: &[ISWeights], window: &LagWindow) -> Result<DMatrix<f64>> {
    let Some(first) = weights.first() else { return input("no targets") };
    let sizes = first.chain_sizes();
    if weights.iter().any(|w| w.chain_sizes() != sizes || w.f(0).is_none()) {
        return input("targets must share samples and carry f values");
    }
    let factors = chain_factors(first.a(), &sizes);
    let p = weights.len();
    let mut lam = DMatrix::zeros(2 * p, 2 * p);
    for (l, fac) in factors.iter().enumerate() {
        let vs: Vec<Vec<f64>> = weights.iter().map(|w| w.v(l).unwrap_or_default()).collect();
        let mut series: Vec<&[f64]> = vs.iter().map(Vec::as_slice).collect();
        series.extend(weights.iter().map(|w| w.u(l)));
        lam += sv_columns(&series, window)? * *fac;
    }
    Ok(symmetrize(&lam))
}

/// `ρ̂ = ∇h Λ̂ ∇hᵀ` with `∇h = [diag(1/û), diag(−v̂/û²)]`, from scaled inputs.
pub fn rho_from_lambda(lambda_scaled: &DMatrix<f64>, weights: &[ISWeights]) -> Result<DMatrix<f64>> {
    let p = weights.len();
    let mut g = DMatrix::zeros(p, 2 * p);
    for (i, w) in weights.iter().enumerate() {
        let u = w.scaled_u_hat();
        if !(u > 0.0) {
            return Err(Error::Degenerate(format!("û = 0 for target {i}")));
        }
        let eta = w.eta_hat()?;
        g[(i, i)] = 1.0 / u;
        g[(i, p + i)] = -eta / u;
    }
    Ok(symmetrize(&(&g * lambda_scaled * g.transpose())))
}

fn weights_for(
    f: Option<ScalarFn<'_>>,
    targets: &[&dyn UnnormalizedDensity],
    bank: &SampleBank,
    d: &[f64],
) -> Result<(MixtureEval, Vec<ISWeights>)> {
    let mix = MixtureEval::new(bank, d)?;
    let fv = f.map(|f| f_values(f, bank));
    let ws = targets
        .iter()
        .map(|t| {
            let w = ISWeights::from_log_target(&mix, &target_log_values(*t, bank)?)?;
            match &fv {
                Some(fv) => w.with_f(fv.clone()),
                None => Ok(w),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((mix, ws))
}

/// `Σ_l (a_l² n/n_l) T̂_l` over `targets`.
pub fn t_hat(
    targets: &[&dyn UnnormalizedDensity],
    bank: &SampleBank,
    d: &[f64],
    window: &LagWindow,
) -> Result<DMatrix<f64>> {
    let (_, ws) = weights_for(None, targets, bank, d)?;
    let scales: Vec<f64> = ws.iter().map(ISWeights::log_scale).collect();
    Ok(unscale(t_hat_scaled(&ws, window)?, &scales))
}

/// Scaled `(n/N) Ĉ V̂ Ĉᵀ + Σ_l (a_l² n/n_l) T̂_l`.
pub fn joint_sigma22_scaled(
    weights: &[ISWeights],
    mix: &MixtureEval,
    v: Option<&DMatrix<f64>>,
    n_over_big_n: f64,
    window: &LagWindow,
) -> Result<DMatrix<f64>> {
    let mut s = t_hat_scaled(weights, window)?;
    if let Some(v) = v {
        let rows = weights
            .iter()
            .map(|w| target_terms(w, mix, window).map(|t| t.c))
            .collect::<Result<Vec<_>>>()?;
        let c = DMatrix::from_fn(weights.len(), mix.k() - 1, |i, j| rows[i][j]);
        s += (&c * v * c.transpose()) * n_over_big_n;
    }
    Ok(symmetrize(&s))
}

pub fn joint_sigma22(
    targets: &[&dyn UnnormalizedDensity],
    bank: &SampleBank,
    fit: Option<&RLFit>,
    rlcov: Option<&RLCovariance>,
    window: &LagWindow,
) -> Result<DMatrix<f64>> {
    let d = fit.map_or_else(|| vec![1.0; bank.k()], |f| f.d_hat.clone());
    let (mix, ws) = weights_for(None, targets, bank, &d)?;
    let scales: Vec<f64> = ws.iter().map(ISWeights::log_scale).collect();
    let s = joint_sigma22_scaled(&ws, &mix, rlcov.map(|c| &c.v), n_over_big_n(bank), window)?;
    Ok(unscale(s, &scales))
}

pub fn lambda_hat(
    f: ScalarFn<'_>,
    targets: &[&dyn UnnormalizedDensity],
    bank: &SampleBank,
    d: &[f64],
    window: &LagWindow,
) -> Result<DMatrix<f64>> {
    let (_, ws) = weights_for(Some(f), targets, bank, d)?;
    let scales: Vec<f64> = ws.iter().map(ISWeights::log_scale).collect();
    Ok(unscale(lambda_hat_scaled(&ws, window)?, &scales))
}

pub fn rho_vec_hat(
    f: ScalarFn<'_>,
    targets: &[&dyn UnnormalizedDensity],
    bank: &SampleBank,
    d: &[f64],
    window: &LagWindow,
) -> Result<DMatrix<f64>> {
    let (_, ws) = weights_for(Some(f), targets, bank, d)?;
    rho_from_lambda(&lambda_hat_scaled(&ws, window)?, &ws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use crate::models::GaussianDensity;
    use crate::rlogistic::{fit_reverse_logistic, FitOptions};
    use crate::streams::rng_from_seed;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, StandardNormal};

    fn ar1(n: usize, rho: f64, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        let sd = (1.0 - rho * rho).sqrt();
        let mut x: f64 = StandardNormal.sample(&mut rng);
        (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                x = rho * x + sd * e;
                x
            })
            .collect()
    }

    #[test]
    fn window_shapes() {
        let th = LagWindow::tukey_hanning();
        assert_eq!(th.weight(0, 10), 1.0);
        assert_eq!(th.weight(3, 10), th.weight(-3, 10));
        assert_eq!(th.weight(10, 10), 0.0);
        assert_relative_eq!(th.weight(5, 10), 0.5, epsilon = 1e-15);
        assert_relative_eq!(LagWindow::bartlett().weight(5, 10), 0.5, epsilon = 1e-15);
        assert_eq!(th.truncation_for(65_536), 256);
        assert_eq!(th.truncation_for(99), 9);
    }

    #[test]
    fn sv_constant_and_short() {
        assert_eq!(sv_scalar(&[2.5; 100], &LagWindow::default()).unwrap(), 0.0);
        assert!(sv_scalar(&[1.0, 2.0, 3.0], &LagWindow::default()).is_err());
    }

    #[test]
    fn sv_lag_zero_is_biased_covariance() {
        let x = ar1(500, 0.0, 3);
        let y: Vec<f64> = x.iter().map(|v| v * 0.5 + 1.0).collect();
        let w = LagWindow::default().with_truncation(Truncation::Fixed(1));
        let s = sv_columns(&[&x, &y], &w).unwrap();
        let mx = x.iter().sum::<f64>() / 500.0;
        let my = y.iter().sum::<f64>() / 500.0;
        let cxy = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / 500.0;
        let cxx = x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / 500.0;
        assert_relative_eq!(s[(0, 1)], cxy, max_relative = 1e-12);
        assert_relative_eq!(s[(0, 0)], cxx, max_relative = 1e-12);
    }

    #[test]
    fn sv_matches_direct_lag_sum() {
        let x = ar1(64, 0.6, 5);
        let w = LagWindow::bartlett();
        let n = 64.0;
        let m = x.iter().sum::<f64>() / n;
        let mut direct = 0.0;
        for j in -7isize..=7 {
            let mut g = 0.0;
            for i in 0..64isize {
                let t = i + j;
                if (0..64).contains(&t) {
                    g += (x[i as usize] - m) * (x[t as usize] - m);
                }
            }
            direct += w.weight(j, 8) * g / n;
        }
        assert_relative_eq!(sv_scalar(&x, &w).unwrap(), direct, max_relative = 1e-12);
    }

    #[test]
    fn sv_ar1_and_iid() {
        let v = sv_scalar(&ar1(1 << 16, 0.5, 7), &LagWindow::default()).unwrap();
        assert!((v - 3.0).abs() < 0.45, "{v}");
        let v = sv_scalar(&ar1(1 << 16, 0.0, 8), &LagWindow::default()).unwrap();
        assert!(v > 0.9 && v < 1.1, "{v}");
    }

    #[test]
    fn d_jacobian_structure() {
        let d = d_jacobian(&[1.0, 2.0, 3.0]);
        let expect = DMatrix::from_row_slice(3, 2, &[2.0, 3.0, -2.0, 0.0, 0.0, -3.0]);
        assert_eq!(d, expect);
    }

    use crate::testutil::{gaussian_bank, identical_bank};

    #[test]
    fn identical_densities_are_degenerate() {
        let b = identical_bank(2, vec![0.5, 0.5], 300, 1);
        let fit = fit_reverse_logistic(&b, FitOptions::default()).unwrap();
        let cov = rl_covariance(&b, &fit, &LagWindow::default()).unwrap();
        for r in 0..2 {
            assert!(cov.b.row(r).sum().abs() < 1e-15);
        }
        assert!(cov.omega.amax() < 1e-20);
        assert!(cov.v.amax() < 1e-20);
        let c = c_hat(b.densities[0].as_ref(), &b, &fit.d_hat).unwrap();
        assert_relative_eq!(c[0], 0.5, epsilon = 1e-14);
        let s = sigma2_u_hat(b.densities[0].as_ref(), &b, Some(&fit), Some(&cov), &LagWindow::default()).unwrap();
        assert!(s.abs() < 1e-20);
        let r = rel_se(b.densities[0].as_ref(), &b, Some(&fit), Some(&cov), &LagWindow::default(), 600, 600).unwrap();
        assert!(r.abs() < 1e-10);
    }

    #[test]
    fn c_and_e_match_direct_summation() {
        let b = gaussian_bank(&[(0.0, 1.0), (1.0, 1.3), (2.0, 0.9)], 200, 2);
        let d = [1.0, 1.3, 0.9];
        let t = GaussianDensity::new(0.8, 1.1).unwrap();
        let f = |x: &[f64]| x[0];
        let (mut c_direct, mut fc_direct, mut u_direct, mut v_direct) = (vec![0.0; 2], vec![0.0; 2], 0.0, 0.0);
        let a = 1.0 / 3.0;
        for chain in &b.stage2 {
            for x in chain.draws.rows() {
                let phi: Vec<f64> = b.densities.iter().map(|p| p.log_weight(x).exp()).collect();
                let den: f64 = (0..3).map(|s| a * phi[s] / d[s]).sum();
                let nu = t.log_weight(x).exp();
                u_direct += a / 200.0 * nu / den;
                v_direct += a / 200.0 * x[0] * nu / den;
                for j in 1..3 {
                    let term = a * a * nu * phi[j] / (den * den * d[j] * d[j]) / 200.0;
                    c_direct[j - 1] += term;
                    fc_direct[j - 1] += x[0] * term;
                }
            }
        }
        let c = c_hat(&t, &b, &d).unwrap();
        let e = e_hat(&f, &t, &b, &d).unwrap();
        let eta = v_direct / u_direct;
        for j in 0..2 {
            assert_relative_eq!(c[j], c_direct[j], max_relative = 1e-11);
            let ed = fc_direct[j] / u_direct - c_direct[j] * eta / u_direct;
            assert_relative_eq!(e[j], ed, max_relative = 1e-9, epsilon = 1e-13);
        }
        let one = |_: &[f64]| 1.0;
        assert!(e_hat(&one, &t, &b, &d).unwrap().iter().all(|&v| v == 0.0));
        let g = gamma_hat(&one, &t, &b, &d, &LagWindow::default()).unwrap();
        assert!(g.iter().all(|&v| v == g[(0, 0)]));
    }

    #[test]
    fn single_proposal_reductions() {
        let b = gaussian_bank(&[(0.0, 1.0)], 400, 4);
        let t = GaussianDensity::new(0.2, 1.0).unwrap();
        assert!(c_hat(&t, &b, &[1.0]).unwrap().is_empty());
        let s = sigma2_u_hat(&t, &b, None, None, &LagWindow::default()).unwrap();
        let tau = tau2_hat(&t, &b, &[1.0], &LagWindow::default()).unwrap();
        assert_eq!(s, tau);

        let id = |x: &[f64]| x[0];
        let s_eta = sigma2_eta_hat(&id, b.densities[0].as_ref(), &b, None, None, &LagWindow::default()).unwrap();
        let sv = sv_scalar(&b.stage2[0].draws.column(0), &LagWindow::default()).unwrap();
        assert_relative_eq!(s_eta, sv, max_relative = 1e-10);
    }

    #[test]
    fn joint_matrices_are_consistent() {
        let b = gaussian_bank(&[(0.0, 1.0), (1.5, 1.2), (3.0, 1.0)], 1500, 6);
        let fit = fit_reverse_logistic(&b, FitOptions::default()).unwrap();
        let w = LagWindow::default();
        let cov = rl_covariance(&b, &fit, &w).unwrap();
        let tol = -1e-8 * spectral_norm_symmetric(&cov.v);
        assert!(min_eigenvalue(&cov.v) >= tol);
        let bbb = &cov.b * pinv_symmetric(&cov.b).unwrap() * &cov.b;
        assert!((bbb - &cov.b).amax() < 1e-8);

        let targets: Vec<GaussianDensity> =
            [0.5, 1.0, 2.2, 2.9].iter().map(|&m| GaussianDensity::new(m, 1.1).unwrap()).collect();
        let refs: Vec<&dyn UnnormalizedDensity> = targets.iter().map(|t| t as &dyn UnnormalizedDensity).collect();
        let s22 = joint_sigma22(&refs, &b, Some(&fit), Some(&cov), &w).unwrap();
        assert_eq!(s22, s22.transpose());
        assert!(min_eigenvalue(&s22) >= -1e-8 * spectral_norm_symmetric(&s22));
        for (i, t) in refs.iter().enumerate() {
            let s = sigma2_u_hat(*t, &b, Some(&fit), Some(&cov), &w).unwrap();
            assert_relative_eq!(s22[(i, i)], s, max_relative = 1e-10);
        }

        let f = |x: &[f64]| x[0] * x[0];
        let lam = lambda_hat(&f, &refs, &b, &fit.d_hat, &w).unwrap();
        assert_eq!(lam, lam.transpose());
        let rho = rho_vec_hat(&f, &refs, &b, &fit.d_hat, &w).unwrap();
        for (i, t) in refs.iter().enumerate() {
            let terms = terms_for(Some(&f), *t, &b, &fit.d_hat, &w).unwrap();
            assert_relative_eq!(rho[(i, i)], terms.rho().unwrap(), max_relative = 1e-10);
        }
        let one = |_: &[f64]| 1.0;
        let rho1 = rho_vec_hat(&one, &refs, &b, &fit.d_hat, &w).unwrap();
        assert!(rho1.amax() < 1e-12 * lam.amax().max(1.0));
        let s = sigma2_eta_hat(&one, refs[1], &b, Some(&fit), Some(&cov), &w).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn rel_se_scales_with_budget() {
        let r1 = rel_se_from(0.7, 1.3, 2.0, 1000, 4000);
        let r2 = rel_se_from(0.7, 1.3, 2.0, 2000, 8000);
        assert_relative_eq!(r1 / r2, 2f64.sqrt(), max_relative = 1e-14);
    }
}
