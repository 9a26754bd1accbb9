//! Generalized importance sampling estimates over the stage-2 draws.
//!
//! For a target kernel `ν`, `u(x) = ν(x) / Σ_j a_j φ_j(x)/d_j` and
//! `û = Σ_l (a_l/n_l) Σ_i u(X_i^(l))` estimates `θ/c_1`. Weights are kept
//! relative to `exp(log_scale)` so that lattice models with hundreds of
//! sites never overflow; every estimator downstream is homogeneous in `ν`.

use crate::error::{input, Error, Result};
use crate::exec;
use crate::family::{
    checked_log_weight, describe, log_mixture_row, LogWeightTable, SampleBank, UnnormalizedDensity,
};

/// Scalar function of a state, e.g. the `f` in `E_π f`.
pub type ScalarFn<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

#[derive(Debug, Clone)]
struct ChainMixture {
    log_denom: Vec<f64>,
    /// Row-major `n_l × k` responsibilities `(a_j φ_j/d_j) / Σ_s a_s φ_s/d_s`.
    resp: Vec<f64>,
}

/// The mixture denominator evaluated once at every stage-2 draw, shared by
/// all targets.
#[derive(Debug, Clone)]
pub struct MixtureEval {
    a: Vec<f64>,
    d: Vec<f64>,
    chains: Vec<ChainMixture>,
}

impl MixtureEval {
    pub fn new(bank: &SampleBank, d: &[f64]) -> Result<Self> {
        if bank.stage2.len() != bank.k() || bank.stage2.iter().any(|c| c.is_empty()) {
            return input("every proposal needs a nonempty stage-2 chain");
        }
        let refs = bank.density_refs();
        let tables = exec::map(&bank.stage2, |c| LogWeightTable::evaluate(&c.draws, &refs))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Self::from_tables(&tables, bank.skeleton.weights(), d)
    }

    /// `tables[l]` holds `log φ_j` (columns in skeleton order) at chain `l`'s draws.
    pub fn from_tables(tables: &[LogWeightTable], a: &[f64], d: &[f64]) -> Result<Self> {
        let k = a.len();
        if d.len() != k || tables.len() != k {
            return input(format!("{} chains and {} ratios for {k} weights", tables.len(), d.len()));
        }
        if a.iter().chain(d).any(|&v| !(v > 0.0 && v.is_finite())) {
            return input("mixing weights and normalizer ratios must be positive and finite");
        }
        if let Some(l) = tables.iter().position(|t| t.ncols() != k || t.nrows() == 0) {
            return input(format!("stage-2 table {l} is empty or has the wrong width"));
        }
        let log_a: Vec<f64> = a.iter().map(|v| v.ln()).collect();
        let log_d: Vec<f64> = d.iter().map(|v| v.ln()).collect();
        let chains = exec::map(tables, |t| {
            let n = t.nrows();
            let mut log_denom = Vec::with_capacity(n);
            let mut resp = Vec::with_capacity(n * k);
            for i in 0..n {
                let row = t.row(i);
                let ld = log_mixture_row(row, &log_a, &log_d);
                log_denom.push(ld);
                for j in 0..k {
                    let r = if ld == f64::NEG_INFINITY { 0.0 } else { (row[j] + log_a[j] - log_d[j] - ld).exp() };
                    resp.push(r);
                }
            }
            ChainMixture { log_denom, resp }
        });
        Ok(Self { a: a.to_vec(), d: d.to_vec(), chains })
    }

    pub fn k(&self) -> usize {
        self.a.len()
    }
    pub fn a(&self) -> &[f64] {
        &self.a
    }
    pub fn d(&self) -> &[f64] {
        &self.d
    }
    pub fn chain_sizes(&self) -> Vec<usize> {
        self.chains.iter().map(|c| c.log_denom.len()).collect()
    }
    pub fn total(&self) -> usize {
        self.chains.iter().map(|c| c.log_denom.len()).sum()
    }
    pub fn log_denominator(&self, l: usize, i: usize) -> f64 {
        self.chains[l].log_denom[i]
    }
    /// Share of the mixture carried by proposal `j` at draw `i` of chain `l`.
    pub fn responsibility(&self, l: usize, i: usize, j: usize) -> f64 {
        self.chains[l].resp[i * self.k() + j]
    }
}

/// Per-chain weights `u_i / exp(log_scale)` in temporal order, and
/// optionally the matching `f(X_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ISWeights {
    a: Vec<f64>,
    log_scale: f64,
    u: Vec<Vec<f64>>,
    f: Option<Vec<Vec<f64>>>,
}

impl ISWeights {
    /// Builds weights from `log ν` at every stage-2 draw.
    pub fn from_log_target(mix: &MixtureEval, log_nu: &[Vec<f64>]) -> Result<Self> {
        let sizes = mix.chain_sizes();
        if log_nu.len() != sizes.len() || log_nu.iter().zip(&sizes).any(|(v, &n)| v.len() != n) {
            return input("target values do not align with the stage-2 chains");
        }
        let mut log_u: Vec<Vec<f64>> = Vec::with_capacity(sizes.len());
        for (l, ln) in log_nu.iter().enumerate() {
            let mut row = Vec::with_capacity(ln.len());
            for (i, &v) in ln.iter().enumerate() {
                if v.is_nan() {
                    return Err(Error::Evaluation { density: "target".into(), reason: format!("NaN at draw {i} of chain {l}") });
                }
                let ld = mix.log_denominator(l, i);
                if v == f64::NEG_INFINITY {
                    row.push(f64::NEG_INFINITY);
                } else if ld == f64::NEG_INFINITY || v == f64::INFINITY {
                    return Err(Error::Support(format!(
                        "target is positive at draw {i} of chain {l} where every proposal vanishes"
                    )));
                } else {
                    row.push(v - ld);
                }
            }
            log_u.push(row);
        }
        let m = log_u.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_scale = if m.is_finite() { m } else { 0.0 };
        let u = log_u.into_iter().map(|r| r.into_iter().map(|v| (v - log_scale).exp()).collect()).collect();
        Ok(Self { a: mix.a.clone(), log_scale, u, f: None })
    }

    /// Attaches `f(X_i)` values aligned with the weights.
    pub fn with_f(mut self, f: Vec<Vec<f64>>) -> Result<Self> {
        if f.len() != self.u.len() || f.iter().zip(&self.u).any(|(a, b)| a.len() != b.len()) {
            return input("f values do not align with the stage-2 chains");
        }
        if f.iter().flatten().any(|v| !v.is_finite()) {
            return input("f must be finite at every stage-2 draw");
        }
        self.f = Some(f);
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.u.len()
    }
    pub fn a(&self) -> &[f64] {
        &self.a
    }
    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }
    pub fn chain_sizes(&self) -> Vec<usize> {
        self.u.iter().map(Vec::len).collect()
    }
    pub fn total(&self) -> usize {
        self.u.iter().map(Vec::len).sum()
    }
    /// Scaled weights of chain `l`.
    pub fn u(&self, l: usize) -> &[f64] {
        &self.u[l]
    }
    pub fn f(&self, l: usize) -> Option<&[f64]> {
        self.f.as_ref().map(|f| f[l].as_slice())
    }
    /// Scaled `f·u` of chain `l`.
    pub fn v(&self, l: usize) -> Option<Vec<f64>> {
        self.f(l).map(|f| f.iter().zip(&self.u[l]).map(|(f, u)| f * u).collect())
    }

    fn weighted_mean(&self, per_chain: impl Fn(usize) -> f64) -> f64 {
        (0..self.k()).map(|l| self.a[l] * per_chain(l) / self.u[l].len() as f64).sum()
    }

    /// `û / exp(log_scale)`.
    pub fn scaled_u_hat(&self) -> f64 {
        self.weighted_mean(|l| self.u[l].iter().sum())
    }
    /// `v̂ / exp(log_scale)`; `None` without `f`.
    pub fn scaled_v_hat(&self) -> Option<f64> {
        let f = self.f.as_ref()?;
        Some(self.weighted_mean(|l| f[l].iter().zip(&self.u[l]).map(|(f, u)| f * u).sum()))
    }
    pub fn log_u_hat(&self) -> f64 {
        self.scaled_u_hat().ln() + self.log_scale
    }
    pub fn u_hat(&self) -> f64 {
        self.log_u_hat().exp()
    }
    pub fn eta_hat(&self) -> Result<f64> {
        let v = self.scaled_v_hat().ok_or_else(|| Error::Input("no f values attached".into()))?;
        let u = self.scaled_u_hat();
        if !(u > 0.0) {
            return Err(Error::Degenerate("û = 0: the target puts no mass on any stage-2 draw".into()));
        }
        Ok(v / u)
    }
}

/// `log ν` at every stage-2 draw of the bank.
pub fn target_log_values(target: &dyn UnnormalizedDensity, bank: &SampleBank) -> Result<Vec<Vec<f64>>> {
    exec::map(&bank.stage2, |c| c.draws.rows().map(|x| checked_log_weight(target, x)).collect::<Result<Vec<_>>>())
        .into_iter()
        .collect::<Result<Vec<_>>>()
        .map_err(|e| match e {
            Error::Evaluation { reason, .. } => Error::Evaluation { density: describe(target), reason },
            other => other,
        })
}

/// `f` at every stage-2 draw of the bank.
pub fn f_values(f: ScalarFn<'_>, bank: &SampleBank) -> Vec<Vec<f64>> {
    bank.stage2.iter().map(|c| c.draws.rows().map(f).collect()).collect()
}

pub fn is_weights(target: &dyn UnnormalizedDensity, bank: &SampleBank, d: &[f64]) -> Result<ISWeights> {
    let mix = MixtureEval::new(bank, d)?;
    ISWeights::from_log_target(&mix, &target_log_values(target, bank)?)
}

pub fn u_hat(target: &dyn UnnormalizedDensity, bank: &SampleBank, d: &[f64]) -> Result<f64> {
    Ok(is_weights(target, bank, d)?.u_hat())
}

pub fn log_u_hat(target: &dyn UnnormalizedDensity, bank: &SampleBank, d: &[f64]) -> Result<f64> {
    Ok(is_weights(target, bank, d)?.log_u_hat())
}

pub fn v_hat(f: ScalarFn<'_>, target: &dyn UnnormalizedDensity, bank: &SampleBank, d: &[f64]) -> Result<f64> {
    let w = is_weights(target, bank, d)?.with_f(f_values(f, bank))?;
    Ok(w.scaled_v_hat().unwrap_or(0.0) * w.log_scale().exp())
}

pub fn eta_hat(f: ScalarFn<'_>, target: &dyn UnnormalizedDensity, bank: &SampleBank, d: &[f64]) -> Result<f64> {
    is_weights(target, bank, d)?.with_f(f_values(f, bank))?.eta_hat()
}
