use std::f64::consts::PI;
use std::sync::Arc;

use rand_distr::{Distribution, StudentT};
use statrs::function::gamma::ln_gamma;

use crate::error::{input, Result};
use crate::family::{ChainKind, ChainSample, DensityRef, Draws, Family, Support, UnnormalizedDensity};
use crate::streams::rng_from_seed;

/// Student-t kernel `(1 + x²/ν)^{−(ν+1)/2}` indexed by its degrees of freedom.
/// Small `ν` members are far apart while large ones nearly coincide, which
/// makes this family a cheap stand-in for df-indexed posterior families.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentTDensity {
    df: f64,
    label: Vec<f64>,
}

impl StudentTDensity {
    pub fn new(df: f64) -> Result<Self> {
        if !(df > 0.0) || !df.is_finite() {
            return input(format!("degrees of freedom must be positive, got {df}"));
        }
        Ok(Self { df, label: vec![df] })
    }

    /// `log ∫ (1 + x²/ν)^{−(ν+1)/2} dx`.
    pub fn log_normalizer(&self) -> f64 {
        let v = self.df;
        0.5 * (v * PI).ln() + ln_gamma(v / 2.0) - ln_gamma((v + 1.0) / 2.0)
    }
}

impl UnnormalizedDensity for StudentTDensity {
    fn dim(&self) -> usize {
        1
    }
    fn support(&self) -> Support {
        Support::ContinuousVector
    }
    fn log_weight(&self, x: &[f64]) -> f64 {
        -(self.df + 1.0) / 2.0 * (x[0] * x[0] / self.df).ln_1p()
    }
    fn label(&self) -> &[f64] {
        &self.label
    }
    fn mode_hint(&self) -> Option<Vec<f64>> {
        Some(vec![0.0])
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StudentTFamily;

impl StudentTFamily {
    fn parse(xi: &[f64]) -> Result<StudentTDensity> {
        match xi {
            [v] => StudentTDensity::new(*v),
            _ => input(format!("Student-t parameter point must be (df), got {xi:?}")),
        }
    }

    pub fn log_normalizer_ratio(num: &[f64], den: &[f64]) -> Result<f64> {
        Ok(Self::parse(num)?.log_normalizer() - Self::parse(den)?.log_normalizer())
    }
}

impl Family for StudentTFamily {
    fn name(&self) -> &str {
        "student_t"
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn density(&self, xi: &[f64]) -> Result<DensityRef> {
        Ok(Arc::new(Self::parse(xi)?))
    }
    fn sample(&self, xi: &[f64], n: usize, _burnin: usize, seed: u64) -> Result<ChainSample> {
        let t = Self::parse(xi)?;
        let dist = StudentT::new(t.df).expect("validated df");
        let mut rng = rng_from_seed(seed);
        let xs: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        Ok(ChainSample {
            draws: Draws::from_scalars(&xs),
            proposal_index: 0,
            kind: ChainKind::Iid,
            seed,
            burnin_discarded: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cauchy_normalizer() {
        // df = 1 is the Cauchy kernel 1/(1+x²), integral π
        let t = StudentTDensity::new(1.0).unwrap();
        assert_relative_eq!(t.log_normalizer(), PI.ln(), epsilon = 1e-12);
        // large df approaches the Gaussian normalizer √(2π)
        let t = StudentTDensity::new(1e6).unwrap();
        assert_relative_eq!(t.log_normalizer(), (2.0 * PI).sqrt().ln(), epsilon = 1e-6);
    }
}
