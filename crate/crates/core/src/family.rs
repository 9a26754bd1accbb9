//! Core data model: unnormalized densities, parametric grids, chains,
//! skeleton sets and two-stage sample banks.

use std::fmt;
use std::sync::Arc;

use crate::error::{input, Error, Result};
use crate::exec;
use crate::linalg::log_sum_exp;
use crate::streams::{chain_seed, Stream};

/// State space a density lives on. Lattice states are stored as 0/1 reals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    ContinuousVector,
    BinaryLattice,
}

/// A density `φ` known up to its normalizing constant.
///
/// `log_weight` returns `log φ(x)`, which may be `-∞` outside the support but
/// must never be NaN. Implementations must be deterministic.
pub trait UnnormalizedDensity: Send + Sync {
    fn dim(&self) -> usize;
    fn support(&self) -> Support;
    fn log_weight(&self, x: &[f64]) -> f64;
    /// Parameter point this density was built from.
    fn label(&self) -> &[f64];
    /// Starting point for mode searches on continuous supports.
    fn mode_hint(&self) -> Option<Vec<f64>> {
        None
    }
}

pub type DensityRef = Arc<dyn UnnormalizedDensity>;

pub(crate) fn describe(d: &dyn UnnormalizedDensity) -> String {
    format!("{:?}", d.label())
}

/// `log φ(x)` with dimension and NaN checks.
pub fn checked_log_weight(d: &dyn UnnormalizedDensity, x: &[f64]) -> Result<f64> {
    if x.len() != d.dim() {
        return input(format!(
            "point of dimension {} passed to density {} of dimension {}",
            x.len(),
            describe(d),
            d.dim()
        ));
    }
    let v = d.log_weight(x);
    if v.is_nan() {
        return Err(Error::Evaluation { density: describe(d), reason: "log weight is NaN".into() });
    }
    Ok(v)
}

/// Closure-backed density, handy for user-defined families and tests.
#[derive(Clone)]
pub struct FnDensity {
    dim: usize,
    support: Support,
    label: Vec<f64>,
    mode_hint: Option<Vec<f64>>,
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl FnDensity {
    pub fn new(
        dim: usize,
        support: Support,
        label: Vec<f64>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { dim, support, label, mode_hint: None, f: Arc::new(f) }
    }

    pub fn with_mode_hint(mut self, hint: Vec<f64>) -> Self {
        self.mode_hint = Some(hint);
        self
    }
}

impl fmt::Debug for FnDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnDensity").field("dim", &self.dim).field("label", &self.label).finish()
    }
}

impl UnnormalizedDensity for FnDensity {
    fn dim(&self) -> usize {
        self.dim
    }
    fn support(&self) -> Support {
        self.support
    }
    fn log_weight(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn label(&self) -> &[f64] {
        &self.label
    }
    fn mode_hint(&self) -> Option<Vec<f64>> {
        self.mode_hint.clone()
    }
}

/// Row-major matrix of draws; rows are in temporal order.
#[derive(Debug, Clone, PartialEq)]
pub struct Draws {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Draws {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return input(format!("draws buffer has {} values, expected {rows}x{cols}", data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return input("ragged rows in draws");
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    /// Single-coordinate draws.
    pub fn from_scalars(xs: &[f64]) -> Self {
        Self { rows: xs.len(), cols: 1, data: xs.to_vec() }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }
    pub fn ncols(&self) -> usize {
        self.cols
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Draws reordered so that row `i` of the output is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &p in perm {
            data.extend_from_slice(self.row(p));
        }
        Self { rows: perm.len(), cols: self.cols, data }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainKind {
    Iid,
    Markov,
}

/// Draws from one proposal, together with what is needed to regenerate them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSample {
    pub draws: Draws,
    pub proposal_index: usize,
    pub kind: ChainKind,
    pub seed: u64,
    pub burnin_discarded: usize,
}

impl ChainSample {
    pub fn len(&self) -> usize {
        self.draws.nrows()
    }
    pub fn is_empty(&self) -> bool {
        self.draws.nrows() == 0
    }
}

/// A parametric family `ξ ↦ φ_ξ` with a sampler for each member.
pub trait Family: Send + Sync {
    fn name(&self) -> &str;
    /// Number of coordinates of a parameter point.
    fn param_dim(&self) -> usize;
    fn density(&self, xi: &[f64]) -> Result<DensityRef>;
    /// Draw `n` states from the normalized member at `xi` after discarding
    /// `burnin` states (ignored by exact samplers).
    fn sample(&self, xi: &[f64], n: usize, burnin: usize, seed: u64) -> Result<ChainSample>;
}

/// Ordered finite parameter set. Grid order is the canonical order of every
/// vector or matrix indexed by targets.
#[derive(Clone)]
pub struct FamilyGrid {
    points: Vec<Vec<f64>>,
    family: Arc<dyn Family>,
    scaling: Vec<(f64, f64)>,
    densities: Vec<DensityRef>,
}

impl fmt::Debug for FamilyGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FamilyGrid")
            .field("family", &self.family.name())
            .field("points", &self.points)
            .finish()
    }
}

impl FamilyGrid {
    pub fn new(family: Arc<dyn Family>, points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return input("grid has no points");
        }
        let p = family.param_dim();
        if let Some(bad) = points.iter().position(|xi| xi.len() != p) {
            return input(format!("grid point {bad} has {} coordinates, expected {p}", points[bad].len()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return input("grid contains non-finite coordinates");
        }
        for i in 0..points.len() {
            for j in 0..i {
                if points[i] == points[j] {
                    return input(format!("grid points {j} and {i} coincide"));
                }
            }
        }
        let scaling = (0..p)
            .map(|c| {
                let lo = points.iter().map(|x| x[c]).fold(f64::INFINITY, f64::min);
                let hi = points.iter().map(|x| x[c]).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            })
            .collect();
        let densities = points.iter().map(|xi| family.density(xi)).collect::<Result<Vec<_>>>()?;
        let dim = densities[0].dim();
        if densities.iter().any(|d| d.dim() != dim) {
            return input("grid densities do not share a state dimension");
        }
        Ok(Self { points, family, scaling, densities })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }
    pub fn family(&self) -> &Arc<dyn Family> {
        &self.family
    }
    pub fn scaling(&self) -> &[(f64, f64)] {
        &self.scaling
    }
    pub fn density(&self, i: usize) -> &DensityRef {
        &self.densities[i]
    }
    pub fn densities(&self) -> &[DensityRef] {
        &self.densities
    }
    pub fn state_dim(&self) -> usize {
        self.densities[0].dim()
    }

    /// Point `i` with every coordinate min-max scaled to `[0, 1]`
    /// (constant coordinates map to 0).
    pub fn scaled_point(&self, i: usize) -> Vec<f64> {
        self.points[i]
            .iter()
            .zip(&self.scaling)
            .map(|(&v, &(lo, hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
            .collect()
    }

    /// Index of the grid point within `tol` (max-norm) of `xi`.
    pub fn index_of(&self, xi: &[f64], tol: f64) -> Option<usize> {
        self.points.iter().position(|p| {
            p.len() == xi.len() && p.iter().zip(xi).all(|(a, b)| (a - b).abs() <= tol)
        })
    }

    /// Draw one chain for grid point `i` from the `(stream, i)` seed stream.
    pub fn sample_point(
        &self,
        i: usize,
        n: usize,
        burnin: usize,
        master_seed: u64,
        stream: Stream,
    ) -> Result<ChainSample> {
        let seed = chain_seed(master_seed, stream, i);
        self.family.sample(&self.points[i], n, burnin, seed)
    }
}

/// `k` distinct grid indices used as proposals, the reference `q₁`, and the
/// mixing weights `a`. The reference is always stored at position 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSet {
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl SkeletonSet {
    /// Builds a skeleton; `reference` is moved to the front (carrying its weight).
    pub fn new(indices: Vec<usize>, reference: usize, weights: Vec<f64>) -> Result<Self> {
        if indices.is_empty() {
            return input("skeleton must contain at least one index");
        }
        if weights.len() != indices.len() {
            return input(format!("{} weights for {} skeleton indices", weights.len(), indices.len()));
        }
        let mut seen = indices.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != indices.len() {
            return input("skeleton indices must be distinct");
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return input("skeleton weights must be positive");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return input(format!("skeleton weights sum to {total}, expected 1"));
        }
        let Some(pos) = indices.iter().position(|&i| i == reference) else {
            return input(format!("reference {reference} is not in the skeleton"));
        };
        let (mut indices, mut weights) = (indices, weights);
        indices.swap(0, pos);
        weights.swap(0, pos);
        Ok(Self { indices, weights })
    }

    /// Equal weights `1/k`.
    pub fn equal(indices: Vec<usize>, reference: usize) -> Result<Self> {
        let k = indices.len();
        Self::new(indices, reference, vec![1.0 / k as f64; k])
    }

    /// Weights proportional to per-proposal sample sizes.
    pub fn proportional(indices: Vec<usize>, reference: usize, sizes: &[usize]) -> Result<Self> {
        let total: usize = sizes.iter().sum();
        if sizes.len() != indices.len() || total == 0 {
            return input("sample sizes do not match skeleton");
        }
        let w = sizes.iter().map(|&s| s as f64 / total as f64).collect();
        Self::new(indices, reference, w)
    }

    pub fn k(&self) -> usize {
        self.indices.len()
    }
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
    pub fn reference(&self) -> usize {
        self.indices[0]
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    /// Indices in ascending order (for reporting).
    pub fn sorted_indices(&self) -> Vec<usize> {
        let mut v = self.indices.clone();
        v.sort_unstable();
        v
    }
}

/// Stage-1 chains (for the normalizer ratios) and independent stage-2 chains
/// (for the importance sampling estimates), aligned with the skeleton.
#[derive(Clone)]
pub struct SampleBank {
    pub skeleton: SkeletonSet,
    pub densities: Vec<DensityRef>,
    pub stage1: Vec<ChainSample>,
    pub stage2: Vec<ChainSample>,
}

impl fmt::Debug for SampleBank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampleBank")
            .field("skeleton", &self.skeleton)
            .field("stage1_sizes", &self.stage1.iter().map(ChainSample::len).collect::<Vec<_>>())
            .field("stage2_sizes", &self.stage2.iter().map(ChainSample::len).collect::<Vec<_>>())
            .finish()
    }
}

impl SampleBank {
    pub fn new(
        skeleton: SkeletonSet,
        densities: Vec<DensityRef>,
        stage1: Vec<ChainSample>,
        stage2: Vec<ChainSample>,
    ) -> Result<Self> {
        let k = skeleton.k();
        if densities.len() != k {
            return input(format!("{} densities for a skeleton of size {k}", densities.len()));
        }
        if stage1.len() != k && !stage1.is_empty() {
            return input(format!("{} stage-1 chains for a skeleton of size {k}", stage1.len()));
        }
        if stage2.len() != k && !stage2.is_empty() {
            return input(format!("{} stage-2 chains for a skeleton of size {k}", stage2.len()));
        }
        let dim = densities[0].dim();
        for c in stage1.iter().chain(&stage2) {
            if c.draws.ncols() != dim {
                return input(format!("chain of dimension {} for densities of dimension {dim}", c.draws.ncols()));
            }
        }
        Ok(Self { skeleton, densities, stage1, stage2 })
    }

    /// Samples every skeleton member of `grid`: stage 1 from
    /// [`Stream::Stage1`] and stage 2 from [`Stream::Stage2`], seeded by grid index.
    pub fn generate(
        grid: &FamilyGrid,
        skeleton: SkeletonSet,
        stage1_size: usize,
        stage2_size: usize,
        burnin: usize,
        master_seed: u64,
    ) -> Result<Self> {
        Self::generate_with_streams(
            grid,
            skeleton,
            (stage1_size, Stream::Stage1),
            (stage2_size, Stream::Stage2),
            burnin,
            master_seed,
        )
    }

    pub fn generate_with_streams(
        grid: &FamilyGrid,
        skeleton: SkeletonSet,
        stage1: (usize, Stream),
        stage2: (usize, Stream),
        burnin: usize,
        master_seed: u64,
    ) -> Result<Self> {
        if stage1.1 == stage2.1 && stage1.0 > 0 && stage2.0 > 0 {
            return input("stage 1 and stage 2 must use distinct seed streams");
        }
        let idx = skeleton.indices().to_vec();
        if let Some(&bad) = idx.iter().find(|&&i| i >= grid.len()) {
            return input(format!("skeleton index {bad} outside grid of size {}", grid.len()));
        }
        let draw = |(size, stream): (usize, Stream)| -> Result<Vec<ChainSample>> {
            if size == 0 {
                return Ok(Vec::new());
            }
            exec::try_map_range(idx.len(), |pos| {
                let mut c = grid.sample_point(idx[pos], size, burnin, master_seed, stream)?;
                c.proposal_index = pos;
                Ok(c)
            })
        };
        let s1 = draw(stage1)?;
        let s2 = draw(stage2)?;
        let densities = idx.iter().map(|&i| grid.density(i).clone()).collect();
        Self::new(skeleton, densities, s1, s2)
    }

    pub fn k(&self) -> usize {
        self.skeleton.k()
    }
    pub fn stage1_sizes(&self) -> Vec<usize> {
        self.stage1.iter().map(ChainSample::len).collect()
    }
    pub fn stage2_sizes(&self) -> Vec<usize> {
        self.stage2.iter().map(ChainSample::len).collect()
    }
    pub fn stage1_total(&self) -> usize {
        self.stage1_sizes().iter().sum()
    }
    pub fn stage2_total(&self) -> usize {
        self.stage2_sizes().iter().sum()
    }
    pub fn density_refs(&self) -> Vec<&dyn UnnormalizedDensity> {
        self.densities.iter().map(|d| d.as_ref()).collect()
    }
}

/// Row-major table of `log φ_j(X_i)`: one row per draw, one column per density.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWeightTable {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl LogWeightTable {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return input("log-weight table size mismatch");
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Evaluation { density: "table".into(), reason: "NaN log weight".into() });
        }
        Ok(Self { rows, cols, values })
    }

    /// Evaluates every density at every draw.
    pub fn evaluate(draws: &Draws, densities: &[&dyn UnnormalizedDensity]) -> Result<Self> {
        let cols = densities.len();
        let mut values = Vec::with_capacity(draws.nrows() * cols);
        for x in draws.rows() {
            for d in densities {
                values.push(checked_log_weight(*d, x)?);
            }
        }
        Ok(Self { rows: draws.nrows(), cols, values })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }
    pub fn ncols(&self) -> usize {
        self.cols
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.rows * cols.len());
        for i in 0..self.rows {
            let r = self.row(i);
            values.extend(cols.iter().map(|&c| r[c]));
        }
        Self { rows: self.rows, cols: cols.len(), values }
    }
}

/// `log Σ_j exp(log a_j + log φ_j − log d_j)` for one row of log weights.
pub(crate) fn log_mixture_row(log_phi: &[f64], log_a: &[f64], log_d: &[f64]) -> f64 {
    let m = log_phi
        .iter()
        .zip(log_a)
        .zip(log_d)
        .map(|((p, a), d)| p + a - d)
        .fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = log_phi
        .iter()
        .zip(log_a)
        .zip(log_d)
        .map(|((p, a), d)| (p + a - d - m).exp())
        .sum();
    m + s.ln()
}

/// Log of the mixture denominator `Σ_j a_j φ_j(x)/d_j`, via log-sum-exp.
pub fn log_mixture_denominator(
    x: &[f64],
    densities: &[&dyn UnnormalizedDensity],
    a: &[f64],
    d: &[f64],
) -> Result<f64> {
    let k = densities.len();
    if a.len() != k || d.len() != k {
        return input(format!("mixture of {k} densities with {} weights and {} ratios", a.len(), d.len()));
    }
    if d.iter().any(|&v| !(v > 0.0)) || a.iter().any(|&v| !(v > 0.0)) {
        return input("mixture weights and normalizer ratios must be positive");
    }
    let terms = densities
        .iter()
        .zip(a)
        .zip(d)
        .map(|((den, &aj), &dj)| Ok(checked_log_weight(*den, x)? + aj.ln() - dj.ln()))
        .collect::<Result<Vec<_>>>()?;
    Ok(log_sum_exp(&terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn constant(level: f64) -> FnDensity {
        FnDensity::new(1, Support::ContinuousVector, vec![level], move |_| level)
    }

    #[test]
    fn single_term() {
        let d = constant(0.0);
        let v = log_mixture_denominator(&[0.3], &[&d], &[1.0], &[1.0]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn identical_densities() {
        let (d1, d2) = (constant(2.5), constant(2.5));
        let v = log_mixture_denominator(&[0.0], &[&d1, &d2], &[0.5, 0.5], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(v, 2.5, epsilon = 1e-15);
    }

    #[test]
    fn unequal_ratios() {
        let (d1, d2) = (constant(0.0), constant(0.0));
        let v = log_mixture_denominator(&[0.0], &[&d1, &d2], &[0.5, 0.5], &[1.0, 2.0]).unwrap();
        assert_relative_eq!(v, 0.75f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(v, -0.28768207245178085, epsilon = 1e-12);
    }

    #[test]
    fn errors() {
        let d = constant(0.0);
        assert!(matches!(
            log_mixture_denominator(&[0.0, 1.0], &[&d], &[1.0], &[1.0]),
            Err(Error::Input(_))
        ));
        let nan = FnDensity::new(1, Support::ContinuousVector, vec![9.0], |_| f64::NAN);
        match log_mixture_denominator(&[0.0], &[&d, &nan], &[0.5, 0.5], &[1.0, 1.0]) {
            Err(Error::Evaluation { density, .. }) => assert!(density.contains('9')),
            other => panic!("unexpected {other:?}"),
        }
        let zero = FnDensity::new(1, Support::ContinuousVector, vec![0.0], |_| f64::NEG_INFINITY);
        let v = log_mixture_denominator(&[0.0], &[&zero, &zero], &[0.5, 0.5], &[1.0, 1.0]).unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
    }

    #[test]
    fn skeleton_moves_reference_to_front() {
        let s = SkeletonSet::new(vec![4, 7, 2], 7, vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(s.indices(), &[7, 4, 2]);
        assert_eq!(s.weights(), &[0.3, 0.2, 0.5]);
        assert!(SkeletonSet::new(vec![1, 1], 1, vec![0.5, 0.5]).is_err());
        assert!(SkeletonSet::new(vec![1, 2], 3, vec![0.5, 0.5]).is_err());
        assert!(SkeletonSet::new(vec![1, 2], 1, vec![0.6, 0.5]).is_err());
    }

    proptest! {
        #[test]
        fn denominator_permutation_and_shift(
            logs in proptest::collection::vec(-30.0f64..30.0, 1..6),
            raw_a in proptest::collection::vec(0.1f64..1.0, 6),
            ds in proptest::collection::vec(0.1f64..10.0, 6),
            shift in -50.0f64..50.0,
            rot in 0usize..6,
        ) {
            let k = logs.len();
            let total: f64 = raw_a[..k].iter().sum();
            let a: Vec<f64> = raw_a[..k].iter().map(|v| v / total).collect();
            let d = &ds[..k];
            let dens: Vec<FnDensity> = logs.iter().map(|&l| constant(l)).collect();
            let refs: Vec<&dyn UnnormalizedDensity> = dens.iter().map(|x| x as &dyn UnnormalizedDensity).collect();
            let base = log_mixture_denominator(&[0.0], &refs, &a, d).unwrap();
            prop_assert!(base.is_finite());

            let r = rot % k;
            let perm: Vec<usize> = (0..k).map(|i| (i + r) % k).collect();
            let prefs: Vec<&dyn UnnormalizedDensity> = perm.iter().map(|&i| refs[i]).collect();
            let pa: Vec<f64> = perm.iter().map(|&i| a[i]).collect();
            let pd: Vec<f64> = perm.iter().map(|&i| d[i]).collect();
            let permuted = log_mixture_denominator(&[0.0], &prefs, &pa, &pd).unwrap();
            prop_assert!((permuted - base).abs() <= 1e-12 * (1.0 + base.abs()));

            let shifted: Vec<FnDensity> = logs.iter().map(|&l| constant(l + shift)).collect();
            let srefs: Vec<&dyn UnnormalizedDensity> = shifted.iter().map(|x| x as &dyn UnnormalizedDensity).collect();
            let s = log_mixture_denominator(&[0.0], &srefs, &a, d).unwrap();
            prop_assert!((s - base - shift).abs() <= 1e-11 * (1.0 + base.abs() + shift.abs()));
        }
    }
}
