use std::sync::OnceLock;

use crate::error::Result;
use crate::family::{ChainSample, FamilyGrid, LogWeightTable, SampleBank, SkeletonSet, UnnormalizedDensity};
use crate::streams::Stream;

/// Per-proposal chain sizes for criterion evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PilotConfig {
    pub stage1: usize,
    pub stage2: usize,
    pub burnin: usize,
    pub seed: u64,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self { stage1: 2000, stage2: 2000, burnin: 400, seed: 0 }
    }
}

/// A chain at one grid point with every grid density evaluated at its draws.
#[derive(Debug, Clone)]
pub struct CachedChain {
    pub chain: ChainSample,
    pub table: LogWeightTable,
}

/// Lazily drawn stage-1 and stage-2 chains keyed by grid index. A chain is
/// generated at most once, from the stream of its stage and grid index, so
/// the cache contents never depend on the order of requests.
pub struct ChainCache<'a> {
    grid: &'a FamilyGrid,
    config: PilotConfig,
    stage1: Vec<OnceLock<Result<CachedChain>>>,
    stage2: Vec<OnceLock<Result<CachedChain>>>,
}

impl<'a> ChainCache<'a> {
    pub fn new(grid: &'a FamilyGrid, config: PilotConfig) -> Self {
        let cells = || (0..grid.len()).map(|_| OnceLock::new()).collect();
        Self { grid, config, stage1: cells(), stage2: cells() }
    }

    pub fn grid(&self) -> &'a FamilyGrid {
        self.grid
    }
    pub fn config(&self) -> &PilotConfig {
        &self.config
    }

    fn fill(&self, index: usize, size: usize, stream: Stream) -> Result<CachedChain> {
        let chain = self.grid.sample_point(index, size, self.config.burnin, self.config.seed, stream)?;
        let refs: Vec<&dyn UnnormalizedDensity> = self.grid.densities().iter().map(|d| d.as_ref()).collect();
        let table = LogWeightTable::evaluate(&chain.draws, &refs)?;
        Ok(CachedChain { chain, table })
    }

    pub fn stage1(&self, index: usize) -> Result<&CachedChain> {
        self.stage1[index]
            .get_or_init(|| self.fill(index, self.config.stage1, Stream::Stage1))
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn stage2(&self, index: usize) -> Result<&CachedChain> {
        self.stage2[index]
            .get_or_init(|| self.fill(index, self.config.stage2, Stream::Stage2))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Number of grid points with a stage-1 chain drawn so far.
    pub fn stage1_drawn(&self) -> usize {
        self.stage1.iter().filter(|c| c.get().is_some()).count()
    }

    /// Bank of the cached chains for `skeleton` (stage 2 optional).
    pub fn bank(&self, skeleton: &SkeletonSet, with_stage2: bool) -> Result<SampleBank> {
        let relabel = |c: &CachedChain, pos: usize| {
            let mut chain = c.chain.clone();
            chain.proposal_index = pos;
            chain
        };
        let idx = skeleton.indices();
        let s1 = idx.iter().enumerate().map(|(p, &i)| Ok(relabel(self.stage1(i)?, p))).collect::<Result<Vec<_>>>()?;
        let s2 = if with_stage2 {
            idx.iter().enumerate().map(|(p, &i)| Ok(relabel(self.stage2(i)?, p))).collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let densities = idx.iter().map(|&i| self.grid.density(i).clone()).collect();
        SampleBank::new(skeleton.clone(), densities, s1, s2)
    }
}
