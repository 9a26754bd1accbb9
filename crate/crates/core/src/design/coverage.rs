use nalgebra::DMatrix;

use super::{DesignCriterion, SelectionResult};
use crate::error::{input, Result};
use crate::family::SkeletonSet;

fn check_distances(dist: &DMatrix<f64>) -> Result<()> {
    if !dist.is_square() {
        return input("distance matrix must be square");
    }
    if dist.iter().any(|v| v.is_nan() || *v < 0.0) {
        return input("distances must be nonnegative");
    }
    Ok(())
}

/// Log-sum-exp of `scale·log x` over the positive entries, all divided by `scale`.
fn log_power_mean(logs: impl Iterator<Item = f64>, power: f64) -> f64 {
    let terms: Vec<f64> = logs.filter(|v| *v > f64::NEG_INFINITY).map(|v| power * v).collect();
    if terms.is_empty() {
        return f64::NEG_INFINITY;
    }
    crate::linalg::log_sum_exp(&terms) / power
}

/// `log Ψ`; `−∞` when every target is a skeleton member.
fn log_coverage(dist: &DMatrix<f64>, set: &[usize], p: f64, p_tilde: f64) -> f64 {
    let psi = (0..dist.nrows()).map(|pi| {
        if set.iter().any(|&q| dist[(pi, q)] == 0.0) {
            f64::NEG_INFINITY
        } else {
            log_power_mean(set.iter().map(|&q| dist[(pi, q)].ln()), p)
        }
    });
    log_power_mean(psi, p_tilde)
}

/// `Ψ = (Σ_π ψ_p(q, π)^p̃)^{1/p̃}` with `ψ_p(q, π) = (Σ_q Υ(π, q)^p)^{1/p}`;
/// a target at distance zero from the skeleton contributes `ψ = 0`.
pub fn coverage_criterion(dist: &DMatrix<f64>, indices: &[usize], p: f64, p_tilde: f64) -> Result<f64> {
    check_distances(dist)?;
    if !(p < 0.0 && p_tilde > 0.0) {
        return input("coverage exponents need p < 0 < p̃");
    }
    if indices.is_empty() || indices.iter().any(|&i| i >= dist.nrows()) {
        return input("skeleton indices must be nonempty and inside the grid");
    }
    Ok(log_coverage(dist, indices, p, p_tilde).exp())
}

#[derive(Debug, Clone)]
pub struct CoverageCriterion {
    pub dist: DMatrix<f64>,
    pub p: f64,
    pub p_tilde: f64,
}

impl DesignCriterion for CoverageCriterion {
    fn evaluate(&self, skeleton: &SkeletonSet) -> Result<f64> {
        coverage_criterion(&self.dist, skeleton.indices(), self.p, self.p_tilde)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapOptions {
    pub p: f64,
    pub p_tilde: f64,
    /// Starting set (must contain `fixed`); farthest-point greedy otherwise.
    pub initial: Option<Vec<usize>>,
}

impl Default for SwapOptions {
    fn default() -> Self {
        Self { p: -30.0, p_tilde: 30.0, initial: None }
    }
}

/// Greedy start: `fixed` (or the grid's most central point) extended by
/// repeatedly adding the point farthest from the current set; ties go to
/// the lowest index.
pub fn farthest_point_start(dist: &DMatrix<f64>, k: usize, fixed: &[usize]) -> Vec<usize> {
    let m = dist.nrows();
    let mut set: Vec<usize> = fixed.to_vec();
    if set.is_empty() && k > 0 {
        let center = (0..m)
            .min_by(|&a, &b| {
                let ra = dist.row(a).max();
                let rb = dist.row(b).max();
                ra.total_cmp(&rb).then(a.cmp(&b))
            })
            .unwrap_or(0);
        set.push(center);
    }
    while set.len() < k {
        let next = (0..m)
            .filter(|i| !set.contains(i))
            .map(|i| (i, set.iter().map(|&s| dist[(i, s)]).fold(f64::INFINITY, f64::min)))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        match next {
            Some((i, _)) => set.push(i),
            None => break,
        }
    }
    set
}

pub(crate) fn validate_selection(m: usize, k: usize, fixed: &[usize]) -> Result<()> {
    if k == 0 || k > m {
        return input(format!("cannot choose {k} of {m} grid points"));
    }
    if fixed.len() > k || fixed.iter().any(|&i| i >= m) {
        return input("fixed points must be inside the grid and no more than k");
    }
    let mut f = fixed.to_vec();
    f.sort_unstable();
    f.dedup();
    if f.len() != fixed.len() {
        return input("fixed points must be distinct");
    }
    Ok(())
}

pub(crate) fn skeleton_from(set: &[usize], reference: usize) -> Result<SkeletonSet> {
    let mut sorted = set.to_vec();
    sorted.sort_unstable();
    SkeletonSet::equal(sorted, reference)
}

/// Point-swapping search: every non-fixed member in turn is replaced by the
/// outside point giving the largest strict drop in `Ψ`, until a full pass
/// changes nothing. The reference is `fixed[0]`, or the smallest selected
/// index when nothing is fixed.
pub fn point_swap(dist: &DMatrix<f64>, k: usize, fixed: &[usize], opts: &SwapOptions) -> Result<SelectionResult> {
    check_distances(dist)?;
    let m = dist.nrows();
    validate_selection(m, k, fixed)?;
    if !(opts.p < 0.0 && opts.p_tilde > 0.0) {
        return input("coverage exponents need p < 0 < p̃");
    }
    let mut set = match &opts.initial {
        Some(init) => {
            let mut s = init.clone();
            s.sort_unstable();
            s.dedup();
            if s.len() != k || s.iter().any(|&i| i >= m) || fixed.iter().any(|f| !s.contains(f)) {
                return input("initial set must hold k distinct grid points including the fixed ones");
            }
            init.clone()
        }
        None => farthest_point_start(dist, k, fixed),
    };
    let score = |s: &[usize]| log_coverage(dist, s, opts.p, opts.p_tilde);
    let mut current = score(&set);
    let mut trace = vec![(0, current.exp())];
    let mut iteration = 0;
    loop {
        let mut changed = false;
        for pos in 0..k {
            if fixed.contains(&set[pos]) {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for cand in 0..m {
                if set.contains(&cand) {
                    continue;
                }
                let mut trial = set.clone();
                trial[pos] = cand;
                let v = score(&trial);
                if best.is_none_or(|(_, bv)| v < bv) {
                    best = Some((cand, v));
                }
            }
            if let Some((cand, v)) = best {
                if v < current {
                    set[pos] = cand;
                    current = v;
                    changed = true;
                    iteration += 1;
                    trace.push((iteration, current.exp()));
                }
            }
        }
        if !changed {
            break;
        }
    }
    let reference = fixed.first().copied().unwrap_or_else(|| *set.iter().min().unwrap_or(&0));
    Ok(SelectionResult { skeleton: skeleton_from(&set, reference)?, criterion_value: current.exp(), trace, samples_used: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn line(xs: &[f64]) -> DMatrix<f64> {
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s = if hi > lo { hi - lo } else { 1.0 };
        DMatrix::from_fn(xs.len(), xs.len(), |i, j| (xs[i] - xs[j]).abs() / s)
    }

    #[test]
    fn full_skeleton_has_zero_coverage() {
        let d = line(&[1.0, 2.0, 3.0]);
        assert_eq!(coverage_criterion(&d, &[0, 1, 2], -30.0, 30.0).unwrap(), 0.0);
    }

    #[test]
    fn coverage_is_near_max_min_distance() {
        let d = DMatrix::from_fn(3, 3, |i, j| (i as f64 - j as f64).abs());
        let v = coverage_criterion(&d, &[0, 2], -30.0, 30.0).unwrap();
        // ψ for the middle point is 2^{-1/30}
        assert_relative_eq!(v, 2f64.powf(-1.0 / 30.0), max_relative = 1e-14);
        assert!((v - 1.0).abs() < 0.05);
        let doubled = coverage_criterion(&(d * 2.0), &[0, 2], -30.0, 30.0).unwrap();
        assert_relative_eq!(doubled, 2.0 * v, max_relative = 1e-13);
    }

    #[test]
    fn negative_distances_rejected() {
        let mut d = DMatrix::zeros(2, 2);
        d[(0, 1)] = -1.0;
        assert!(coverage_criterion(&d, &[0], -30.0, 30.0).is_err());
    }

    #[test]
    fn full_selection_is_identity() {
        let d = line(&[0.0, 1.0, 2.0, 5.0]);
        let r = point_swap(&d, 4, &[1], &SwapOptions::default()).unwrap();
        assert_eq!(r.skeleton.sorted_indices(), vec![0, 1, 2, 3]);
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.skeleton.reference(), 1);
    }

    #[test]
    fn one_dimensional_swap_reproduces_known_set() {
        let xs: Vec<f64> = (1..=200).map(|i| i as f64 / 10.0).collect();
        let d = line(&xs);
        let fixed = [99]; // ξ = 10
        let r = point_swap(&d, 5, &fixed, &SwapOptions::default()).unwrap();
        let chosen: Vec<f64> = r.skeleton.sorted_indices().iter().map(|&i| xs[i]).collect();
        for (c, e) in chosen.iter().zip([2.0, 6.0, 10.0, 14.0, 18.0]) {
            assert_relative_eq!(*c, e, epsilon = 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn swap_never_increases_the_criterion(
            pts in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 8..20),
            k in 2usize..5,
            start_seed in 0usize..1000,
        ) {
            let m = pts.len();
            let d = DMatrix::from_fn(m, m, |i, j| ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt());
            let init: Vec<usize> = (0..k).map(|i| (start_seed + i * 7) % m).collect();
            let mut uniq = init.clone();
            uniq.sort_unstable();
            uniq.dedup();
            prop_assume!(uniq.len() == k);
            let before = coverage_criterion(&d, &init, -30.0, 30.0).unwrap();
            let r = point_swap(&d, k, &[init[0]], &SwapOptions { initial: Some(init.clone()), ..Default::default() }).unwrap();
            prop_assert!(r.criterion_value <= before * (1.0 + 1e-12));
            for w in r.trace.windows(2) {
                prop_assert!(w[1].1 < w[0].1);
            }
            prop_assert!(r.skeleton.indices().contains(&init[0]));
        }
    }
}
