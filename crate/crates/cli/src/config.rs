//! Experiment configuration (TOML). See `docs/config.md` for the schema.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use gisdesign::design::{AnnealOptions, MinimaxObjective, PilotConfig, SearchConfig};
use gisdesign::divergence::SamplerConfig;
use gisdesign::mcse::{LagWindow, Truncation, WindowKind};
use gisdesign::models::{AutologisticFamily, GaussianFamily, ParamLayout, ScanOrder, StudentTFamily};
use gisdesign::{Family, FamilyGrid};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default)]
    pub window: WindowConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Gaussian,
    StudentT,
    Autologistic {
        rows: usize,
        cols: usize,
        /// Fixed κ; omit to put κ in the grid as a second coordinate.
        kappa: Option<f64>,
        #[serde(default)]
        scan: Scan,
    },
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scan {
    #[default]
    Systematic,
    Random,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Explicit points.
    pub points: Option<Vec<Vec<f64>>>,
    /// Regular axes; the grid is their product with the first axis slowest.
    pub axes: Option<Vec<Axis>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Nis,
    Sfe,
    Sfs,
    Seq,
    Mnx,
    Ent,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Nis => "nis",
            Method::Sfe => "sfe",
            Method::Sfs => "sfs",
            Method::Seq => "seq",
            Method::Mnx => "mnx",
            Method::Ent => "ent",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    RelSe,
    SeEta,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub method: Method,
    pub k: usize,
    /// Grid index of the reference point.
    pub reference: Option<usize>,
    /// Reference given by its coordinates instead.
    pub reference_point: Option<Vec<f64>>,
    pub fixed: Vec<usize>,
    pub initial: Option<Vec<usize>>,
    pub pilot_stage1: usize,
    pub pilot_stage2: usize,
    pub burnin: usize,
    pub budget: usize,
    pub t0: f64,
    pub block: usize,
    pub max_iter: usize,
    pub divergence_draws: usize,
    pub divergence_burnin: usize,
    pub objective: Objective,
    /// `f` for the `se_eta` objective.
    pub f: Option<String>,
    pub scaled: bool,
}

impl Default for DesignConfig {
    fn default() -> Self {
        let pilot = PilotConfig::default();
        let anneal = AnnealOptions::default();
        let sampler = SamplerConfig::default();
        Self {
            method: Method::Nis,
            k: 1,
            reference: None,
            reference_point: None,
            fixed: Vec::new(),
            initial: None,
            pilot_stage1: pilot.stage1,
            pilot_stage2: pilot.stage2,
            burnin: pilot.burnin,
            budget: 4000,
            t0: anneal.t0,
            block: anneal.block,
            max_iter: anneal.max_iter,
            divergence_draws: sampler.draws,
            divergence_burnin: sampler.burnin,
            objective: Objective::RelSe,
            f: None,
            scaled: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    /// Total draws `M` over both stages and all proposals.
    pub budget: usize,
    pub pilot_stage1: usize,
    pub pilot_stage2: usize,
    pub burnin: usize,
    /// Name of a registered `f` for `η̂` columns.
    pub f: Option<String>,
}

impl Default for EstimateSection {
    fn default() -> Self {
        let pilot = PilotConfig::default();
        Self { budget: 100_000, pilot_stage1: pilot.stage1, pilot_stage2: pilot.stage2, burnin: pilot.burnin, f: None }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub kind: Kind,
    /// Fixed truncation point; `⌊√n⌋` when absent.
    pub truncation: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    #[default]
    TukeyHanning,
    Bartlett,
}

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Named functions of the state available for `η̂`.
pub fn registered_f(name: &str) -> Result<ScalarFn> {
    Ok(match name {
        "coord0" => Arc::new(|x: &[f64]| x[0]),
        "sum" => Arc::new(|x: &[f64]| x.iter().sum()),
        "mean" => Arc::new(|x: &[f64]| x.iter().sum::<f64>() / x.len() as f64),
        "sumsq" => Arc::new(|x: &[f64]| x.iter().map(|v| v * v).sum()),
        other => bail!("unknown f `{other}` (expected one of coord0, sum, mean, sumsq)"),
    })
}

/// Tidy `start + i·step` so that decimal grids print as written.
fn tidy(v: f64) -> f64 {
    let r = (v * 1e10).round() / 1e10;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn family(&self) -> Result<Arc<dyn Family>> {
        Ok(match &self.model {
            ModelConfig::Gaussian => Arc::new(GaussianFamily),
            ModelConfig::StudentT => Arc::new(StudentTFamily),
            ModelConfig::Autologistic { rows, cols, kappa, scan } => {
                let layout = match kappa {
                    Some(kappa) => ParamLayout::Gamma { kappa: *kappa },
                    None => ParamLayout::GammaKappa,
                };
                let scan = match scan {
                    Scan::Systematic => ScanOrder::Systematic,
                    Scan::Random => ScanOrder::Random,
                };
                Arc::new(AutologisticFamily::new(*rows, *cols, layout)?.with_scan(scan))
            }
        })
    }

    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        match (&self.grid.points, &self.grid.axes) {
            (Some(p), None) => Ok(p.clone()),
            (None, Some(axes)) => {
                let mut out: Vec<Vec<f64>> = vec![Vec::new()];
                for (a, axis) in axes.iter().enumerate() {
                    if !(axis.step > 0.0) || axis.stop < axis.start {
                        bail!("grid.axes[{a}]: need step > 0 and stop ≥ start");
                    }
                    let count = ((axis.stop - axis.start) / axis.step + 1e-9).floor() as usize + 1;
                    let values: Vec<f64> = (0..count).map(|i| tidy(axis.start + i as f64 * axis.step)).collect();
                    out = out
                        .into_iter()
                        .flat_map(|p| values.iter().map(move |&v| [p.clone(), vec![v]].concat()))
                        .collect();
                }
                Ok(out)
            }
            _ => bail!("grid: give exactly one of `points` or `axes`"),
        }
    }

    pub fn grid(&self) -> Result<FamilyGrid> {
        FamilyGrid::new(self.family()?, self.points()?).context("building grid")
    }

    pub fn reference(&self, grid: &FamilyGrid) -> Result<usize> {
        match (&self.design.reference, &self.design.reference_point) {
            (Some(i), None) if *i < grid.len() => Ok(*i),
            (Some(i), None) => bail!("design.reference = {i} is outside the grid of {} points", grid.len()),
            (None, Some(p)) => grid
                .index_of(p, 1e-9)
                .with_context(|| format!("design.reference_point {p:?} is not a grid point")),
            (None, None) => Ok(self.design.fixed.first().copied().unwrap_or(0)),
            (Some(_), Some(_)) => bail!("design: give at most one of `reference` and `reference_point`"),
        }
    }

    pub fn window(&self) -> LagWindow {
        let w = match self.window.kind {
            Kind::TukeyHanning => LagWindow { kind: WindowKind::TukeyHanning, truncation: Truncation::SqrtN },
            Kind::Bartlett => LagWindow { kind: WindowKind::Bartlett, truncation: Truncation::SqrtN },
        };
        match self.window.truncation {
            Some(b) => w.with_truncation(Truncation::Fixed(b)),
            None => w,
        }
    }

    pub fn design_pilot(&self) -> PilotConfig {
        let d = &self.design;
        PilotConfig { stage1: d.pilot_stage1, stage2: d.pilot_stage2, burnin: d.burnin, seed: self.seed }
    }

    pub fn estimate_pilot(&self) -> PilotConfig {
        let e = &self.estimate;
        PilotConfig { stage1: e.pilot_stage1, stage2: e.pilot_stage2, burnin: e.burnin, seed: self.seed }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig { draws: self.design.divergence_draws, burnin: self.design.divergence_burnin, seed: self.seed }
    }

    pub fn search(&self) -> Result<SearchConfig> {
        let d = &self.design;
        let objective = match d.objective {
            Objective::RelSe => MinimaxObjective::RelSeU,
            Objective::SeEta => {
                let name = d.f.as_deref().context("design.objective = \"se_eta\" needs design.f")?;
                MinimaxObjective::SeEta(registered_f(name)?)
            }
        };
        Ok(SearchConfig {
            pilot: self.design_pilot(),
            window: self.window(),
            anneal: AnnealOptions { t0: d.t0, block: d.block, max_iter: d.max_iter, seed: self.seed },
            initial: d.initial.clone(),
            budget: d.budget,
            objective,
            scaled: d.scaled,
        })
    }
}
