//! Sample banks shared by unit tests.

use std::sync::Arc;

use crate::family::{ChainSample, DensityRef, Family, FamilyGrid, SampleBank, SkeletonSet};
use crate::models::{GaussianDensity, GaussianFamily};

/// Bank over distinct Gaussian `(mean, sd)` points with equal weights.
pub fn gaussian_bank(points: &[(f64, f64)], n: usize, seed: u64) -> SampleBank {
    let pts = points.iter().map(|&(m, s)| vec![m, s]).collect();
    let grid = FamilyGrid::new(Arc::new(GaussianFamily), pts).unwrap();
    let sk = SkeletonSet::equal((0..points.len()).collect(), 0).unwrap();
    SampleBank::generate(&grid, sk, n, n, 0, seed).unwrap()
}

/// `k` copies of the N(0,1) kernel as proposals, each with its own chains.
pub fn identical_bank(k: usize, weights: Vec<f64>, n: usize, seed: u64) -> SampleBank {
    let density: DensityRef = Arc::new(GaussianDensity::new(0.0, 1.0).unwrap());
    let chain = |l: usize, stage: u64| -> ChainSample {
        let mut c = GaussianFamily.sample(&[0.0, 1.0], n, 0, seed ^ (stage << 32) ^ l as u64).unwrap();
        c.proposal_index = l;
        c
    };
    SampleBank::new(
        SkeletonSet::new((0..k).collect(), 0, weights).unwrap(),
        vec![density; k],
        (0..k).map(|l| chain(l, 1)).collect(),
        (0..k).map(|l| chain(l, 2)).collect(),
    )
    .unwrap()
}
