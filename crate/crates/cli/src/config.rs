//! Experiment configuration files.
//!
//! A config names its experiment `kind` and carries the parameters in a table
//! of the same name:
//!
//! ```toml
//! kind = "outage_sweep"
//! seed = 7
//!
//! [outage_sweep]
//! topology = "topologies/diamond.toml"
//! rate = 1.0
//! ks = [0, 1, 2]
//! snr_db = { start = 0.0, stop = 20.0, step = 2.0 }
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use coopsim_core::macemu::MacPolicy;
use coopsim_core::netsim::Strategy;
use coopsim_core::outage::{Normalization, DEFAULT_MC_SAMPLES, DEFAULT_QUADRATURE_REL_TOL};
use coopsim_core::selection::PolicyParams;

use crate::error::{line_of, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    OutageSweep,
    FixedModes,
    AdaptiveCompare,
    Ensemble,
    MacCompare,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::OutageSweep,
        ExperimentKind::FixedModes,
        ExperimentKind::AdaptiveCompare,
        ExperimentKind::Ensemble,
        ExperimentKind::MacCompare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::OutageSweep => "outage_sweep",
            ExperimentKind::FixedModes => "fixed_modes",
            ExperimentKind::AdaptiveCompare => "adaptive_compare",
            ExperimentKind::Ensemble => "ensemble",
            ExperimentKind::MacCompare => "mac_compare",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            ExperimentKind::OutageSweep => "best-k subnetwork outage over an SNR grid",
            ExperimentKind::FixedModes => "FER of every fixed mode and strategy over a topology schedule",
            ExperimentKind::AdaptiveCompare => "SPA and baseline policies over a topology schedule",
            ExperimentKind::Ensemble => "policies replayed over a randomized time-varying ensemble",
            ExperimentKind::MacCompare => "cooperative MAC delivery against genie-aided routing",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SnrGrid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl SnrGrid {
    /// Grid points; a range includes `stop` when it lies on the grid.
    pub fn points(&self) -> Vec<f64> {
        match *self {
            SnrGrid::List(ref v) => v.clone(),
            SnrGrid::Range { start, stop, step } => {
                if step.is_nan() || step <= 0.0 || stop < start {
                    return Vec::new();
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                (0..=n).map(|i| start + i as f64 * step).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    #[default]
    Analytic,
    MonteCarlo,
}

fn default_samples() -> usize {
    DEFAULT_MC_SAMPLES
}
fn default_rel_tol() -> f64 {
    DEFAULT_QUADRATURE_REL_TOL
}
fn default_normalization() -> Normalization {
    Normalization::PerNode
}
fn default_strategy() -> Strategy {
    Strategy::Diqif
}
fn default_strategies() -> Vec<Strategy> {
    vec![Strategy::Dt, Strategy::Dif, Strategy::Diqif]
}
fn default_policies() -> Vec<String> {
    ["DT", "BRUTE", "RandPick", "PWR2", "NRNM", "WRNM", "SPA"].map(String::from).to_vec()
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutageSweepConfig {
    pub topology: PathBuf,
    pub rate: f64,
    pub ks: Vec<usize>,
    pub snr_db: SnrGrid,
    #[serde(default = "default_normalization")]
    pub normalization: Normalization,
    #[serde(default)]
    pub method: MethodName,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedModesConfig {
    pub schedule: PathBuf,
    pub rate: f64,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    /// Mode labels such as `R1` or `R1R2`, or `DT`; all modes plus DT when
    /// omitted.
    #[serde(default)]
    pub modes: Option<Vec<String>>,
    /// Also write one frame trace per (strategy, mode).
    #[serde(default)]
    pub traces: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveCompareConfig {
    pub schedule: PathBuf,
    pub rate: f64,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default = "default_policies")]
    pub policies: Vec<String>,
    #[serde(default)]
    pub params: PolicyParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Topology files to record a dataset from.
    #[serde(default)]
    pub topologies: Vec<PathBuf>,
    /// A previously written dataset CSV, used instead of `topologies`.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default = "default_frames")]
    pub frames_per_topology: usize,
    #[serde(default = "default_ensemble_samples")]
    pub samples: usize,
    #[serde(default = "default_transitions")]
    pub transitions: usize,
    #[serde(default = "default_segment_len")]
    pub segment_len: usize,
    #[serde(default = "default_ensemble_policies")]
    pub policies: Vec<String>,
    #[serde(default = "default_true")]
    pub oracle: bool,
    #[serde(default)]
    pub memory_sizes: Vec<usize>,
    #[serde(default)]
    pub params: PolicyParams,
}

fn default_frames() -> usize {
    860
}
fn default_ensemble_samples() -> usize {
    200
}
fn default_transitions() -> usize {
    4
}
fn default_segment_len() -> usize {
    172
}
fn default_ensemble_policies() -> Vec<String> {
    ["BRUTE", "RandPick", "PWR2", "NRNM", "WRNM", "SPA"].map(String::from).to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacCompareConfig {
    /// Topology file; the built-in relay-limited scenario when omitted.
    #[serde(default)]
    pub topology: Option<PathBuf>,
    /// Required with `topology`; overrides the built-in scenario's rate.
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default = "default_packets")]
    pub packets: usize,
    #[serde(default = "default_policy")]
    pub policy: String,
    #[serde(default)]
    pub params: PolicyParams,
    #[serde(default)]
    pub mac: MacPolicy,
}

fn default_packets() -> usize {
    2000
}
fn default_policy() -> String {
    "SPA".into()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    OutageSweep(OutageSweepConfig),
    FixedModes(FixedModesConfig),
    AdaptiveCompare(AdaptiveCompareConfig),
    Ensemble(EnsembleConfig),
    MacCompare(MacCompareConfig),
}

impl Experiment {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            Experiment::OutageSweep(_) => ExperimentKind::OutageSweep,
            Experiment::FixedModes(_) => ExperimentKind::FixedModes,
            Experiment::AdaptiveCompare(_) => ExperimentKind::AdaptiveCompare,
            Experiment::Ensemble(_) => ExperimentKind::Ensemble,
            Experiment::MacCompare(_) => ExperimentKind::MacCompare,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: String,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    out_dir: Option<PathBuf>,
    outage_sweep: Option<OutageSweepConfig>,
    fixed_modes: Option<FixedModesConfig>,
    adaptive_compare: Option<AdaptiveCompareConfig>,
    ensemble: Option<EnsembleConfig>,
    mac_compare: Option<MacCompareConfig>,
}

/// A parsed config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub path: PathBuf,
    /// Directory relative input paths resolve against.
    pub base_dir: PathBuf,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub experiment: Experiment,
}

pub fn parse_config(path: &Path, text: &str) -> CliResult<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        CliError::parse(path, line, e.message().trim().to_string())
    })?;
    let kind_line = text
        .lines()
        .position(|l| l.trim_start().starts_with("kind") && l.contains('='))
        .map(|i| i + 1);
    let kind = ExperimentKind::from_name(&raw.kind).ok_or_else(|| {
        let known: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
        CliError::parse(path, kind_line, format!("unknown experiment kind `{}` for key `kind` (expected one of {})", raw.kind, known.join(", ")))
    })?;
    let missing = || CliError::parse(path, kind_line, format!("kind `{kind}` needs a [{kind}] table"));
    let experiment = match kind {
        ExperimentKind::OutageSweep => Experiment::OutageSweep(raw.outage_sweep.ok_or_else(missing)?),
        ExperimentKind::FixedModes => Experiment::FixedModes(raw.fixed_modes.ok_or_else(missing)?),
        ExperimentKind::AdaptiveCompare => Experiment::AdaptiveCompare(raw.adaptive_compare.ok_or_else(missing)?),
        ExperimentKind::Ensemble => Experiment::Ensemble(raw.ensemble.ok_or_else(missing)?),
        ExperimentKind::MacCompare => Experiment::MacCompare(raw.mac_compare.ok_or_else(missing)?),
    };
    Ok(ExperimentConfig {
        path: path.to_path_buf(),
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        seed: raw.seed,
        out_dir: raw.out_dir,
        experiment,
    })
}

pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(path, &text)
}
