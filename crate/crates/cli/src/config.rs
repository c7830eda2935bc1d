//! Run configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use maghelm_core::estimates::{EstimateKind, SobolevWeight, SweepGrid};
use maghelm_core::farfield::SpectralRule;
use maghelm_core::identities::MultiplierSpec;
use maghelm_core::potentials::{build_example, PotentialKind, PotentialSpec};
use maghelm_core::source::SourceSpec;
use maghelm_core::{ProblemSpec, Sign};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve,
    Identity,
    Estimates,
    Hardy,
    Farfield,
    Spectral,
    Evolve,
    Report,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Identity => "identity",
            Command::Estimates => "estimates",
            Command::Hardy => "hardy",
            Command::Farfield => "farfield",
            Command::Spectral => "spectral",
            Command::Evolve => "evolve",
            Command::Report => "report",
        }
    }
}

fn default_lambda() -> f64 {
    1.0
}
fn default_r_min() -> f64 {
    1e-3
}
fn default_r_max() -> f64 {
    64.0
}
fn default_cutoff() -> u32 {
    4
}
fn default_sign() -> Sign {
    Sign::Plus
}

/// Problem parameters with the library defaults filled in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub d: u32,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_sign")]
    pub sign: Sign,
    #[serde(default = "default_r_min")]
    pub r_min: f64,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    #[serde(default = "default_cutoff")]
    pub mode_cutoff: u32,
}

impl ProblemConfig {
    pub fn spec(&self) -> ProblemSpec {
        ProblemSpec::new(self.d, self.lambda, self.epsilon)
            .with_sign(self.sign)
            .with_truncation(self.r_min, self.r_max)
            .with_cutoff(self.mode_cutoff)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    #[default]
    Fd,
    Green,
    Both,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    #[serde(default)]
    pub solver: SolverChoice,
    /// Node target of the graded mesh; the library default when absent.
    pub nodes: Option<usize>,
    /// Largest relative L² gap between the two solvers when `solver = both`.
    #[serde(default = "SolveSection::default_tolerance")]
    pub tolerance: f64,
}

impl SolveSection {
    fn default_tolerance() -> f64 {
        1e-4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityChoice {
    #[default]
    Key,
    Alpha1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitySection {
    #[serde(default)]
    pub identity: IdentityChoice,
    #[serde(default = "IdentitySection::default_multiplier")]
    pub multiplier: MultiplierSpec,
    #[serde(default = "IdentitySection::default_nodes")]
    pub nodes: Vec<usize>,
    /// Bound on the relative residual at the finest mesh.
    #[serde(default = "IdentitySection::default_tolerance")]
    pub tolerance: f64,
    /// Required residual reduction per mesh doubling.
    #[serde(default = "IdentitySection::default_reduction")]
    pub min_reduction: f64,
}

impl IdentitySection {
    fn default_multiplier() -> MultiplierSpec {
        MultiplierSpec::Quadratic
    }
    fn default_nodes() -> Vec<usize> {
        vec![1024, 2048, 4096]
    }
    fn default_tolerance() -> f64 {
        1e-5
    }
    fn default_reduction() -> f64 {
        3.0
    }
}

impl Default for IdentitySection {
    fn default() -> Self {
        IdentitySection {
            identity: IdentityChoice::Key,
            multiplier: Self::default_multiplier(),
            nodes: Self::default_nodes(),
            tolerance: Self::default_tolerance(),
            min_reduction: Self::default_reduction(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatesSection {
    pub kinds: Vec<EstimateKind>,
    pub grid: SweepGrid,
    #[serde(default = "EstimatesSection::default_r0")]
    pub r0: f64,
    #[serde(default)]
    pub lambda0: f64,
    pub weight: Option<SobolevWeight>,
    /// Extra seeded random sources appended to `f`.
    #[serde(default)]
    pub random_sources: usize,
    /// Bound on `max ratio / min ratio` per kind and source.
    pub max_dispersion: Option<f64>,
    /// Also sweep the operator norm of `|x|⁻¹R|x|⁻¹`.
    #[serde(default)]
    pub operator_norm: bool,
}

impl EstimatesSection {
    fn default_r0() -> f64 {
        2.0
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardySection {
    /// Geometric mesh `[r_min, r_max]` with `nodes` points; the wide default when absent.
    pub mesh: Option<(f64, f64, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarfieldSection {
    /// Sampling radii; a dyadic window below `r_max` when absent.
    pub radii: Option<Vec<f64>>,
    #[serde(default = "FarfieldSection::default_window")]
    pub window: usize,
    #[serde(default = "FarfieldSection::default_tolerance")]
    pub tolerance: f64,
}

impl FarfieldSection {
    fn default_window() -> usize {
        8
    }
    fn default_tolerance() -> f64 {
        1e-3
    }
}

impl Default for FarfieldSection {
    fn default() -> Self {
        FarfieldSection { radii: None, window: Self::default_window(), tolerance: Self::default_tolerance() }
    }
}

/// `count` log-spaced values in `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl LogGrid {
    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.min],
            n => (0..n).map(|j| self.min * (self.max / self.min).powf(j as f64 / (n - 1) as f64)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaGrid {
    Explicit(Vec<f64>),
    Log(LogGrid),
}

impl LambdaGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            LambdaGrid::Explicit(v) => v.clone(),
            LambdaGrid::Log(g) => g.values(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSection {
    pub lambdas: LambdaGrid,
    #[serde(default = "SpectralSection::default_rule")]
    pub rule: SpectralRule,
    #[serde(default = "SpectralSection::default_tolerance")]
    pub tolerance: f64,
}

impl SpectralSection {
    fn default_rule() -> SpectralRule {
        SpectralRule::SimpsonLog
    }
    fn default_tolerance() -> f64 {
        1e-2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSection {
    pub weight: SobolevWeight,
    pub horizons: Vec<f64>,
    #[serde(default)]
    pub forced: bool,
    #[serde(default = "EvolveSection::default_nodes")]
    pub nodes: usize,
    /// Bound on `(I(T) − I(T/2))/I(T/2)` at the largest horizon (free evolution only).
    #[serde(default = "EvolveSection::default_increment")]
    pub max_increment: f64,
}

impl EvolveSection {
    fn default_nodes() -> usize {
        1024
    }
    fn default_increment() -> f64 {
        0.1
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    /// Earlier `summary.json` files whose reports are merged.
    pub inputs: Vec<PathBuf>,
}

/// One run, parsed from a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must match the command given on the command line when present.
    pub command: Option<Command>,
    pub problem: ProblemConfig,
    #[serde(default = "RunConfig::free")]
    pub potential: PotentialKind,
    pub f: SourceSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
    pub solve: Option<SolveSection>,
    pub identity: Option<IdentitySection>,
    pub estimates: Option<EstimatesSection>,
    pub hardy: Option<HardySection>,
    pub farfield: Option<FarfieldSection>,
    pub spectral: Option<SpectralSection>,
    pub evolve: Option<EvolveSection>,
    pub report: Option<ReportSection>,
}

impl RunConfig {
    fn free() -> PotentialKind {
        PotentialKind::Free
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn potential_spec(&self) -> Result<PotentialSpec, CliError> {
        Ok(build_example(self.potential.clone(), self.problem.d)?)
    }

    /// Hex SHA-256 of the canonical JSON form (output location excluded).
    pub fn spec_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Resolves the command and checks that its section is present.
    pub fn resolve(mut self, cli: Command, seed: Option<u64>) -> Result<Self, CliError> {
        if let Some(c) = self.command {
            if c != cli {
                return Err(CliError::Config(format!(
                    "config is for `{}` but `{}` was requested",
                    c.as_str(),
                    cli.as_str()
                )));
            }
        }
        self.command = Some(cli);
        if let Some(s) = seed {
            self.seed = s;
        }
        let missing = match cli {
            Command::Estimates => self.estimates.is_none(),
            Command::Spectral => self.spectral.is_none(),
            Command::Evolve => self.evolve.is_none(),
            Command::Report => self.report.is_none(),
            _ => false,
        };
        if missing {
            return Err(CliError::Config(format!("missing `{}` section", cli.as_str())));
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "problem": {"d": 3, "lambda": 1.0, "epsilon": 0.1},
        "f": {"kind": "radial", "profile": {"shape": "annulus", "inner": 1.0, "outer": 2.0}}
    }"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.problem.spec(), ProblemSpec::new(3, 1.0, 0.1));
        assert_eq!(c.potential, PotentialKind::Free);
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replacen("\"d\": 3", "\"d\": 3, \"lamda\": 2", 1);
        assert!(matches!(RunConfig::parse(&bad), Err(CliError::Config(_))));
        let bad = MINIMAL.replacen("{\n", "{\"extra\": 1,\n", 1);
        assert!(RunConfig::parse(&bad).is_err());
    }

    #[test]
    fn hash_ignores_output_and_tracks_parameters() {
        let a = RunConfig::parse(MINIMAL).unwrap();
        let b = RunConfig { output: Some("elsewhere".into()), ..a.clone() };
        assert_eq!(a.spec_hash(), b.spec_hash());
        assert_eq!(a.spec_hash().len(), 64);
        let c = RunConfig { seed: 1, ..a.clone() };
        assert_ne!(a.spec_hash(), c.spec_hash());
    }

    #[test]
    fn command_mismatch_and_missing_section() {
        let c = RunConfig { command: Some(Command::Hardy), ..RunConfig::parse(MINIMAL).unwrap() };
        assert!(c.clone().resolve(Command::Solve, None).is_err());
        assert_eq!(c.clone().resolve(Command::Hardy, Some(9)).unwrap().seed, 9);
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert!(c.resolve(Command::Spectral, None).is_err());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = LogGrid { min: 0.01, max: 100.0, count: 5 }.values();
        assert_eq!(g.len(), 5);
        assert!((g[2] - 1.0).abs() < 1e-12 && (g[4] - 100.0).abs() < 1e-10);
        assert!(LogGrid { min: 1.0, max: 2.0, count: 0 }.values().is_empty());
    }
}
