//! Run configuration: a sectioned TOML file merged with command-line overrides.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use snowcount::counting::SliceConvention;
use snowcount::ifs_geometry::{p_max, DomainKind};

/// Output encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// Versioned JSON report.
    Json,
    /// Plot-ready CSV.
    Csv,
}

/// A real number written either as a decimal or as a fraction `a/b`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Real {
    /// Plain number.
    Number(f64),
    /// Text such as `"1/3"`.
    Text(String),
}

impl Real {
    fn resolve(&self) -> Result<f64, String> {
        match self {
            Real::Number(x) => Ok(*x),
            Real::Text(s) => parse_real(s),
        }
    }
}

/// Parses a decimal or a fraction `a/b`.
pub fn parse_real(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let bad = || format!("`{s}` is neither a number nor a fraction a/b");
    match s.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            Ok(a / b)
        }
        None => s.parse().map_err(|_| bad()),
    }
}

/// `[domain]` section.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    kind: Option<String>,
    p: Option<Real>,
    level: Option<i64>,
}

/// `[scale]` section.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSection {
    epsilon: Option<f64>,
    k: Option<i64>,
}

/// `[bounds]` section.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    t_min: Option<f64>,
    t_max: Option<f64>,
    t_steps: Option<i64>,
    convention: Option<String>,
}

/// `[solver]` section.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    grid: Option<i64>,
    seed: Option<u64>,
    trials: Option<i64>,
    samples: Option<i64>,
}

/// `[output]` section.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    out: Option<PathBuf>,
    format: Option<Format>,
}

/// The configuration file layout.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    domain: DomainSection,
    #[serde(default)]
    scale: ScaleSection,
    #[serde(default)]
    bounds: BoundsSection,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    output: OutputSection,
}

impl ConfigFile {
    /// Reads and parses a configuration file.
    pub fn load(path: &Path) -> Result<Self, Vec<String>> {
        let text = std::fs::read_to_string(path).map_err(|e| vec![format!("config {}: {e}", path.display())])?;
        toml::from_str(&text).map_err(|e| vec![format!("config {}: {}", path.display(), e.message())])
    }
}

/// Flags shared by every command; each one overrides the configuration file.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    /// Configuration file (TOML with sections domain, scale, bounds, solver, output).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base polygon: K (triangle) or R (square).
    #[arg(long, global = true)]
    pub kind: Option<String>,
    /// IFS ratio, as a decimal or a fraction such as 1/3.
    #[arg(long, global = true, value_parser = parse_real, allow_hyphen_values = true)]
    pub p: Option<f64>,
    /// Polygon refinement level.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub level: Option<i64>,
    /// Tube width.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub epsilon: Option<f64>,
    /// Generation index (cover, verify) or finest dyadic level (whitney).
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub k: Option<i64>,
    /// Smallest spectral parameter of the bound sweep.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub t_min: Option<f64>,
    /// Largest spectral parameter of the bound sweep.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub t_max: Option<f64>,
    /// Number of log-spaced sweep points.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub t_steps: Option<i64>,
    /// Slice convention of the absolute bound: published or tight.
    #[arg(long, global = true)]
    pub convention: Option<String>,
    /// Grid cells across the reference length of each eigenvalue problem.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub grid: Option<i64>,
    /// Random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Random trial fields per element in the Poincaré check.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub trials: Option<i64>,
    /// Monte Carlo points for the cover multiplicity check.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub samples: Option<i64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output encoding.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

/// Tube scale requested either directly or through a generation index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Explicit `ε`.
    Epsilon(f64),
    /// Generation index.
    K(i64),
}

/// Fully resolved and validated parameters.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    /// Base polygon.
    pub kind: DomainKind,
    /// IFS ratio.
    pub p: f64,
    /// Polygon level, if fixed by the user.
    pub level: Option<u32>,
    /// Tube scale, if given.
    pub scale: Option<Scale>,
    /// Bound sweep start.
    pub t_min: f64,
    /// Bound sweep end.
    pub t_max: f64,
    /// Bound sweep points.
    pub t_steps: usize,
    /// Slice convention.
    pub convention: SliceConvention,
    /// Grid resolution.
    pub grid: usize,
    /// Seed.
    pub seed: u64,
    /// Poincaré trials.
    pub trials: usize,
    /// Multiplicity samples.
    pub samples: usize,
    /// Output path.
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Output format.
    pub format: Format,
}

/// Largest polygon level accepted.
pub const MAX_LEVEL: i64 = 11;

impl RunConfig {
    /// Merges file and flags (flags win) and validates every parameter.
    ///
    /// Returns the merged configuration, with defaults standing in for
    /// invalid entries, together with every violation found.
    pub fn resolve(file: ConfigFile, o: &Overrides) -> (RunConfig, Vec<String>) {
        let mut bad = Vec::new();
        let kind = match o.kind.clone().or(file.domain.kind).as_deref().unwrap_or("K") {
            "K" | "k" | "triangle" => DomainKind::TriangleK,
            "R" | "r" | "square" => DomainKind::SquareR,
            other => {
                bad.push(format!("kind: expected K or R, got `{other}`"));
                DomainKind::TriangleK
            }
        };
        let p = match o.p.map(Ok).or_else(|| file.domain.p.map(|r| r.resolve())).unwrap_or(Ok(1.0 / 3.0)) {
            Ok(p) => p,
            Err(e) => {
                bad.push(format!("p: {e}"));
                1.0 / 3.0
            }
        };
        if !(p > 0.25 && p < p_max()) {
            bad.push(format!("p: must lie in (1/4, (√3−1)/2) = (0.25, {:.6}), got {p}", p_max()));
        }
        let level = o.level.or(file.domain.level);
        if let Some(l) = level {
            if !(0..=MAX_LEVEL).contains(&l) {
                bad.push(format!("level: must lie in 0..={MAX_LEVEL}, got {l}"));
            }
        }
        let level = level.filter(|l| (0..=MAX_LEVEL).contains(l));
        let epsilon = o.epsilon.or(if o.k.is_some() { None } else { file.scale.epsilon });
        let k = o.k.or(if o.epsilon.is_some() { None } else { file.scale.k });
        if let Some(e) = epsilon {
            if !(e > 0.0 && e.is_finite()) {
                bad.push(format!("epsilon: must be positive and finite, got {e}"));
            }
        }
        let scale = match (epsilon, k) {
            (Some(_), Some(_)) => {
                bad.push("scale: give either epsilon or k, not both".into());
                None
            }
            (Some(e), None) => Some(Scale::Epsilon(e)),
            (None, Some(k)) => Some(Scale::K(k)),
            (None, None) => None,
        };
        let t_min = o.t_min.or(file.bounds.t_min).unwrap_or(0.1);
        let t_max = o.t_max.or(file.bounds.t_max).unwrap_or(1e4);
        let t_steps = o.t_steps.or(file.bounds.t_steps).unwrap_or(41);
        if !(t_min > 0.0 && t_min.is_finite()) {
            bad.push(format!("t_min: must be positive and finite, got {t_min}"));
        }
        if !(t_max.is_finite() && t_max >= t_min) {
            bad.push(format!("t_max: must be finite and at least t_min = {t_min}, got {t_max}"));
        }
        if !(1..=100_000).contains(&t_steps) {
            bad.push(format!("t_steps: must lie in 1..=100000, got {t_steps}"));
        }
        let convention = match o.convention.clone().or(file.bounds.convention).as_deref().unwrap_or("published") {
            "published" => SliceConvention::Published,
            "tight" => SliceConvention::Tight,
            other => {
                bad.push(format!("convention: expected published or tight, got `{other}`"));
                SliceConvention::Published
            }
        };
        let grid = o.grid.or(file.solver.grid).unwrap_or(32);
        if !(4..=512).contains(&grid) {
            bad.push(format!("grid: must lie in 4..=512, got {grid}"));
        }
        let trials = o.trials.or(file.solver.trials).unwrap_or(100);
        if !(1..=10_000).contains(&trials) {
            bad.push(format!("trials: must lie in 1..=10000, got {trials}"));
        }
        let samples = o.samples.or(file.solver.samples).unwrap_or(20_000);
        if !(1..=10_000_000).contains(&samples) {
            bad.push(format!("samples: must lie in 1..=10000000, got {samples}"));
        }
        let seed = o.seed.or(file.solver.seed).unwrap_or(1);
        let out = o.out.clone().or(file.output.out);
        let format = o.format.or(file.output.format).unwrap_or(Format::Json);
        let cfg = RunConfig {
            kind,
            p,
            level: level.map(|l| l as u32),
            scale,
            t_min,
            t_max,
            t_steps: t_steps.max(1) as usize,
            convention,
            grid: grid.max(4) as usize,
            seed,
            trials: trials.max(1) as usize,
            samples: samples.max(1) as usize,
            out,
            format,
        };
        (cfg, bad)
    }
}

impl RunConfig {
    /// Preconditions that depend on the command, listed all at once.
    pub fn check_for(&self, command: &str) -> Vec<String> {
        let mut bad = Vec::new();
        let ledger = matches!(command, "cover" | "constants" | "bounds");
        if ledger && self.kind == DomainKind::TriangleK && !snowcount::constants::is_classic(self.p) {
            bad.push(format!("p: {command} on K(p) needs p = 1/3, got {}; use kind R for other p", self.p));
        }
        match (command, self.scale) {
            ("whitney", Some(Scale::Epsilon(_))) => bad.push("scale: whitney takes k (finest dyadic level), not epsilon".into()),
            ("whitney", Some(Scale::K(k))) if !(-4..=14).contains(&k) => {
                bad.push(format!("k: must lie in -4..=14 for whitney, got {k}"))
            }
            ("cover" | "verify", Some(Scale::K(k))) if !(1..=12).contains(&k) => {
                bad.push(format!("k: must lie in 1..=12 for {command}, got {k}"))
            }
            _ => {}
        }
        bad
    }
}
