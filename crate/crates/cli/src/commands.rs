use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use gisdesign::design::{select_ent, select_mnx, select_nis, select_seq, select_sfe, select_sfs, SelectionResult};
use gisdesign::profile::{estimate_profile, EstimateConfig, Profile};
use gisdesign::rlogistic::FitOptions;
use gisdesign::{FamilyGrid, SkeletonSet};

use crate::config::{registered_f, Config, Method};

/// On-disk skeleton produced by `select`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonFile {
    pub method: String,
    pub seed: u64,
    pub reference: usize,
    /// Grid indices, reference first.
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub criterion_value: f64,
}

impl SkeletonFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading skeleton {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing skeleton {}", path.display()))
    }

    /// The skeleton on `grid`, checking that every stored point matches.
    pub fn skeleton(&self, grid: &FamilyGrid) -> Result<SkeletonSet> {
        ensure!(self.indices.len() == self.points.len(), "skeleton lists {} indices but {} points", self.indices.len(), self.points.len());
        for (&i, p) in self.indices.iter().zip(&self.points) {
            ensure!(i < grid.len(), "skeleton index {i} is outside the grid of {} points", grid.len());
            let q = grid.point(i);
            let same = q.len() == p.len() && q.iter().zip(p).all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            ensure!(same, "skeleton point {p:?} does not match grid point {i} = {q:?}");
        }
        Ok(SkeletonSet::new(self.indices.clone(), self.reference, self.weights.clone())?)
    }
}

fn run_selection(cfg: &Config, grid: &FamilyGrid) -> Result<SelectionResult> {
    let d = &cfg.design;
    let reference = cfg.reference(grid)?;
    let mut fixed = d.fixed.clone();
    if !fixed.contains(&reference) {
        fixed.insert(0, reference);
    } else {
        fixed.retain(|&i| i != reference);
        fixed.insert(0, reference);
    }
    let result = match d.method {
        Method::Nis => select_nis(grid, reference),
        Method::Sfe => select_sfe(grid, d.k, &fixed),
        Method::Sfs => select_sfs(grid, d.k, &fixed, &cfg.sampler()),
        Method::Seq => select_seq(grid, d.k, reference, &cfg.search()?),
        Method::Mnx => select_mnx(grid, d.k, reference, &cfg.search()?),
        Method::Ent => select_ent(grid, d.k, reference, &cfg.search()?),
    };
    result.with_context(|| format!("running {} selection", d.method.name()))
}

/// `select`: writes `skeleton.toml` and `trace.csv` into `out`.
pub fn select(cfg: &Config, out: &Path) -> Result<PathBuf> {
    let grid = cfg.grid()?;
    let r = run_selection(cfg, &grid)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let sk = &r.skeleton;
    let file = SkeletonFile {
        method: cfg.design.method.name().to_string(),
        seed: cfg.seed,
        reference: sk.reference(),
        indices: sk.indices().to_vec(),
        weights: sk.weights().to_vec(),
        points: sk.indices().iter().map(|&i| grid.point(i).to_vec()).collect(),
        criterion_value: r.criterion_value,
    };
    let path = out.join("skeleton.toml");
    fs::write(&path, toml::to_string(&file)?).with_context(|| format!("writing {}", path.display()))?;

    let mut w = csv::Writer::from_path(out.join("trace.csv"))?;
    w.write_record(["iteration", "value"])?;
    for (i, v) in &r.trace {
        w.write_record([i.to_string(), format!("{v:.16e}")])?;
    }
    w.flush()?;
    Ok(path)
}

pub fn profile_header(p: usize, with_eta: bool) -> Vec<String> {
    let mut h: Vec<String> = (1..=p).map(|i| format!("xi_{i}")).collect();
    h.extend(["log_u_hat", "se_u", "rel_se"].map(String::from));
    if with_eta {
        h.extend(["eta_hat", "se_eta"].map(String::from));
    }
    h
}

fn write_profile(profile: &Profile, path: &Path) -> Result<()> {
    let p = profile.rows.first().map_or(0, |r| r.xi.len());
    let with_eta = profile.rows.iter().any(|r| r.eta_hat.is_some());
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(profile_header(p, with_eta))?;
    let fmt = |v: f64| format!("{v:.16e}");
    for r in &profile.rows {
        let mut rec: Vec<String> = r.xi.iter().map(|&v| fmt(v)).collect();
        rec.extend([fmt(r.log_u_hat), fmt(r.se_u), fmt(r.rel_se)]);
        if with_eta {
            rec.push(fmt(r.eta_hat.unwrap_or(f64::NAN)));
            rec.push(fmt(r.se_eta.unwrap_or(f64::NAN)));
        }
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `estimate`: two-stage estimation over the grid, written as a profile CSV.
pub fn estimate(cfg: &Config, skeleton: &Path, out: &Path) -> Result<Profile> {
    let grid = cfg.grid()?;
    let sk = SkeletonFile::load(skeleton)?.skeleton(&grid)?;
    let est = EstimateConfig {
        budget: cfg.estimate.budget,
        pilot: cfg.estimate_pilot(),
        window: cfg.window(),
        fit: FitOptions::default(),
    };
    let f = cfg.estimate.f.as_deref().map(registered_f).transpose()?;
    let profile = estimate_profile(&grid, &sk, &est, f.as_deref().map(|f| f as _)).context("estimating profile")?;
    write_profile(&profile, out)?;
    Ok(profile)
}

/// A profile as read back from CSV.
#[derive(Debug, Clone)]
pub struct ProfileTable {
    pub xi: Vec<Vec<f64>>,
    pub rel_se: Vec<f64>,
}

pub fn read_profile(path: &Path) -> Result<ProfileTable> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening profile {}", path.display()))?;
    let header = r.headers()?.clone();
    let p = header.iter().take_while(|h| h.starts_with("xi_")).count();
    let col = header.iter().position(|h| h == "rel_se").with_context(|| format!("{}: no rel_se column", path.display()))?;
    let mut t = ProfileTable { xi: Vec::new(), rel_se: Vec::new() };
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |j: usize| -> Result<f64> {
            rec.get(j)
                .with_context(|| format!("{} row {}: missing column {j}", path.display(), line + 2))?
                .parse::<f64>()
                .with_context(|| format!("{} row {}: bad number", path.display(), line + 2))
        };
        t.xi.push((0..p).map(num).collect::<Result<_>>()?);
        t.rel_se.push(num(col)?);
    }
    if t.rel_se.is_empty() {
        bail!("{}: empty profile", path.display());
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub name: String,
    pub max_rel_se: f64,
    pub argmax: Vec<f64>,
    pub mean_rel_se: f64,
}

pub fn summarize(name: &str, t: &ProfileTable) -> Summary {
    let (imax, max) = t.rel_se.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    Summary {
        name: name.to_string(),
        max_rel_se: max,
        argmax: t.xi[imax].clone(),
        mean_rel_se: t.rel_se.iter().sum::<f64>() / t.rel_se.len() as f64,
    }
}

/// `compare`: one CSV row per profile; `ratio` is max RelSE over that of the first.
pub fn compare(paths: &[PathBuf], out: Option<&Path>) -> Result<Vec<Summary>> {
    ensure!(!paths.is_empty(), "compare needs at least one profile");
    let sums: Vec<Summary> =
        paths.iter().map(|p| Ok(summarize(&p.display().to_string(), &read_profile(p)?))).collect::<Result<_>>()?;
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(["profile", "max_rel_se", "argmax_xi", "mean_rel_se", "ratio_to_first"])?;
    let first = sums[0].max_rel_se;
    for s in &sums {
        let arg: Vec<String> = s.argmax.iter().map(|v| v.to_string()).collect();
        w.write_record([
            s.name.clone(),
            format!("{:.16e}", s.max_rel_se),
            arg.join(" "),
            format!("{:.16e}", s.mean_rel_se),
            format!("{:.16e}", s.max_rel_se / first),
        ])?;
    }
    let bytes = w.into_inner()?;
    match out {
        Some(path) => fs::write(path, &bytes).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{}", String::from_utf8(bytes)?),
    }
    Ok(sums)
}
