//! Replication checks of the standard errors on a two-Gaussian bank.

use std::sync::Arc;

use gisdesign::mcse::LagWindow;
use gisdesign::models::{GaussianDensity, GaussianFamily};
use gisdesign::profile::{grid_tables, skeleton_terms};
use gisdesign::rlogistic::FitOptions;
use gisdesign::{FamilyGrid, SampleBank, SkeletonSet};

const REPS: u64 = 200;
const SIZE: usize = 1000;

fn grid() -> FamilyGrid {
    let pts = vec![vec![0.0, 1.0], vec![1.0, 1.5], vec![0.5, 2.0]];
    FamilyGrid::new(Arc::new(GaussianFamily), pts).unwrap()
}

struct Rep {
    d2: f64,
    v11: f64,
    u: f64,
    se_u: f64,
}

fn replicate(grid: &FamilyGrid, seed: u64) -> Rep {
    let sk = SkeletonSet::equal(vec![0, 1], 0).unwrap();
    let bank = SampleBank::generate(grid, sk.clone(), SIZE, SIZE, 0, seed).unwrap();
    let t1 = grid_tables(grid, &bank.stage1).unwrap();
    let t2 = grid_tables(grid, &bank.stage2).unwrap();
    let terms = skeleton_terms(
        &sk,
        &t1.iter().collect::<Vec<_>>(),
        &t2.iter().collect::<Vec<_>>(),
        &[2],
        None,
        &LagWindow::default(),
        FitOptions::default(),
    )
    .unwrap();
    let t = &terms.targets[0];
    let s = t.log_scale.exp();
    let sigma = t.scaled_sigma2_u(terms.v(), terms.n_over_big_n()).sqrt() * s;
    Rep {
        d2: terms.fit.as_ref().unwrap().d_hat[1],
        v11: terms.v().unwrap()[(0, 0)],
        u: t.u_hat * s,
        se_u: sigma / (terms.stage2_total as f64).sqrt(),
    }
}

fn reps() -> Vec<Rep> {
    let g = grid();
    (0..REPS).map(|r| replicate(&g, 500 + r)).collect()
}

#[test]
fn u_hat_interval_coverage() {
    let truth = GaussianDensity::new(0.5, 2.0).unwrap().normalizer() / GaussianDensity::new(0.0, 1.0).unwrap().normalizer();
    let hits = reps().iter().filter(|r| (r.u - truth).abs() <= 2.0 * r.se_u).count();
    let cover = hits as f64 / REPS as f64;
    assert!((0.88..=0.995).contains(&cover), "coverage {cover}");
}

#[test]
fn rl_variance_matches_replication_spread() {
    let rs = reps();
    let big_n = (2 * SIZE) as f64;
    let mean = rs.iter().map(|r| r.d2).sum::<f64>() / REPS as f64;
    let emp = rs.iter().map(|r| (r.d2 - mean).powi(2)).sum::<f64>() / (REPS - 1) as f64 * big_n;
    let avg_v = rs.iter().map(|r| r.v11).sum::<f64>() / REPS as f64;
    let ratio = avg_v / emp;
    assert!((0.5..=2.0).contains(&ratio), "V̂₁₁ {avg_v} vs empirical {emp}");
}
