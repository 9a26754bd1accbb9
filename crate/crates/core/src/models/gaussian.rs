use std::f64::consts::PI;
use std::sync::Arc;

use rand_distr::{Distribution, Normal};

use crate::error::{input, Result};
use crate::family::{ChainKind, ChainSample, DensityRef, Draws, Family, Support, UnnormalizedDensity};
use crate::streams::rng_from_seed;

/// Univariate Gaussian kernel `exp(−(x − mean)² / (2 sd²))`; the normalizer
/// `sd·√(2π)` is deliberately left out.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDensity {
    mean: f64,
    sd: f64,
    label: Vec<f64>,
}

impl GaussianDensity {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0) || !mean.is_finite() || !sd.is_finite() {
            return input(format!("invalid Gaussian parameters mean={mean} sd={sd}"));
        }
        Ok(Self { mean, sd, label: vec![mean, sd] })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }
    pub fn sd(&self) -> f64 {
        self.sd
    }

    /// The omitted normalizer.
    pub fn normalizer(&self) -> f64 {
        self.sd * (2.0 * PI).sqrt()
    }
}

impl UnnormalizedDensity for GaussianDensity {
    fn dim(&self) -> usize {
        1
    }
    fn support(&self) -> Support {
        Support::ContinuousVector
    }
    fn log_weight(&self, x: &[f64]) -> f64 {
        let z = (x[0] - self.mean) / self.sd;
        -0.5 * z * z
    }
    fn label(&self) -> &[f64] {
        &self.label
    }
    fn mode_hint(&self) -> Option<Vec<f64>> {
        Some(vec![self.mean])
    }
}

/// Family of Gaussian kernels indexed by `ξ = (mean, sd)` with an exact iid sampler.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianFamily;

impl GaussianFamily {
    fn parse(xi: &[f64]) -> Result<GaussianDensity> {
        match xi {
            [m, s] => GaussianDensity::new(*m, *s),
            _ => input(format!("Gaussian parameter point must be (mean, sd), got {xi:?}")),
        }
    }

    /// `c(ξ_num) / c(ξ_den)`.
    pub fn normalizer_ratio(num: &[f64], den: &[f64]) -> Result<f64> {
        Ok(Self::parse(num)?.normalizer() / Self::parse(den)?.normalizer())
    }
}

impl Family for GaussianFamily {
    fn name(&self) -> &str {
        "gaussian"
    }
    fn param_dim(&self) -> usize {
        2
    }
    fn density(&self, xi: &[f64]) -> Result<DensityRef> {
        Ok(Arc::new(Self::parse(xi)?))
    }
    fn sample(&self, xi: &[f64], n: usize, _burnin: usize, seed: u64) -> Result<ChainSample> {
        let g = Self::parse(xi)?;
        let normal = Normal::new(g.mean, g.sd).expect("validated parameters");
        let mut rng = rng_from_seed(seed);
        let xs: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        Ok(ChainSample {
            draws: Draws::from_scalars(&xs),
            proposal_index: 0,
            kind: ChainKind::Iid,
            seed,
            burnin_discarded: 0,
        })
    }
}
