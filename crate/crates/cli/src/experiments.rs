//! Validation and execution of experiments.
//!
//! [`prepare`] loads every referenced file and runs all parameter checks
//! without simulating anything; [`execute`] runs a prepared experiment and
//! returns its output files in memory.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use coopsim_core::ensemble::{
    evaluate_on_ensemble, make_ensemble, memory_sweep, oracle_on_ensemble, record_dataset, write_samples_csv, EnsembleResult,
    ModeDataset,
};
use coopsim_core::macemu::{compare_coop_vs_genie, write_packets, MacScenario};
use coopsim_core::netsim::{
    enumerate_modes, mode_label, parse_mode_label, run_fixed, trace_records, write_trace, Mode, ScheduleRunner, TraceRecord,
};
use coopsim_core::outage::{outage_sweep, subset_label, OutageMethod, OutageQuery};
use coopsim_core::rng::{derive_seed, stream};
use coopsim_core::selection::{run_policy, Policy, PolicyRunLog};
use coopsim_core::topology::{parse_schedule, parse_topology, FrameChannels, ScheduledNetwork, Topology};

use crate::config::{
    AdaptiveCompareConfig, EnsembleConfig, Experiment, FixedModesConfig, MacCompareConfig, MethodName, OutageSweepConfig,
};
use crate::error::{CliError, CliResult};

/// Seed labels; each purpose draws from its own derived seed.
const CHANNELS: u64 = 1;
const POLICY: u64 = 2;
const SAMPLES: u64 = 3;
const MONTE_CARLO: u64 = 4;

/// One output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// An experiment whose inputs are loaded and whose parameters are valid.
pub enum Prepared {
    OutageSweep { cfg: OutageSweepConfig, topology: Topology, grid: Vec<f64> },
    FixedModes { cfg: FixedModesConfig, net: ScheduledNetwork, modes: Vec<Option<Mode>> },
    AdaptiveCompare { cfg: AdaptiveCompareConfig, net: ScheduledNetwork, policies: Vec<Policy> },
    Ensemble { cfg: EnsembleConfig, source: DatasetSource, policies: Vec<Policy> },
    MacCompare { cfg: MacCompareConfig, scenario: MacScenario, policy: Policy },
}

pub enum DatasetSource {
    Record { topologies: Vec<Topology>, rate: f64 },
    Recorded(ModeDataset),
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read(base: &Path, p: &Path) -> CliResult<(PathBuf, String)> {
    let full = resolve(base, p);
    let text = std::fs::read_to_string(&full).map_err(|e| CliError::io(&full, e))?;
    Ok((full, text))
}

fn load_topology(base: &Path, p: &Path) -> CliResult<Topology> {
    let (full, text) = read(base, p)?;
    parse_topology(&text).map_err(|e| CliError::validation(&full, "topology", e))
}

fn load_schedule(base: &Path, p: &Path) -> CliResult<ScheduledNetwork> {
    let (full, text) = read(base, p)?;
    parse_schedule(&text).map_err(|e| CliError::validation(&full, "schedule", e))
}

fn check_rate(cfg: &Path, block: &str, rate: f64) -> CliResult<()> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(CliError::validation(cfg, block, format!("rate must be > 0, got {rate}")));
    }
    Ok(())
}

fn mode_labels(n_relays: usize) -> Vec<String> {
    enumerate_modes(n_relays).into_iter().map(|m| mode_label(Some(m))).collect()
}

fn parse_policies(cfg: &Path, names: &[String], labels: &[String]) -> CliResult<Vec<Policy>> {
    if names.is_empty() {
        return Err(CliError::validation(cfg, "policies", "at least one policy required"));
    }
    names.iter().map(|n| Policy::parse(n, labels).map_err(|e| CliError::selection(cfg, e))).collect()
}

/// Load inputs and validate everything; `cfg_path` names the config in
/// diagnostics and `base` anchors relative paths.
pub fn prepare(experiment: &Experiment, cfg_path: &Path, base: &Path) -> CliResult<Prepared> {
    match experiment {
        Experiment::OutageSweep(c) => {
            const B: &str = "outage_sweep";
            let topology = load_topology(base, &c.topology)?;
            let grid = c.snr_db.points();
            if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CliError::validation(cfg_path, B, "snr_db must be a non-empty ascending grid"));
            }
            if c.ks.is_empty() {
                return Err(CliError::validation(cfg_path, B, "ks must not be empty"));
            }
            if let Some(k) = c.ks.iter().find(|&&k| k > topology.n_relays) {
                return Err(CliError::validation(cfg_path, B, format!("k = {k} exceeds the {} relays", topology.n_relays)));
            }
            OutageQuery::new(c.rate, vec![])
                .with_samples(c.samples)
                .with_rel_tol(c.rel_tol)
                .validate(&topology)
                .map_err(|e| CliError::validation(cfg_path, B, e))?;
            if c.method == MethodName::MonteCarlo && c.samples < 100 {
                return Err(CliError::validation(cfg_path, B, "samples must be >= 100"));
            }
            Ok(Prepared::OutageSweep { cfg: c.clone(), topology, grid })
        }
        Experiment::FixedModes(c) => {
            const B: &str = "fixed_modes";
            check_rate(cfg_path, B, c.rate)?;
            let net = load_schedule(base, &c.schedule)?;
            let modes = match &c.modes {
                None => std::iter::once(None).chain(enumerate_modes(net.n_relays()).into_iter().map(Some)).collect(),
                Some(labels) => labels
                    .iter()
                    .map(|l| {
                        let m = parse_mode_label(l).map_err(|e| CliError::validation(cfg_path, B, e))?;
                        if m.is_some_and(|m| !m.is_valid_for(net.n_relays())) {
                            return Err(CliError::validation(cfg_path, B, format!("mode {l} needs more than {} relays", net.n_relays())));
                        }
                        Ok(m)
                    })
                    .collect::<CliResult<Vec<_>>>()?,
            };
            if c.strategies.is_empty() || modes.is_empty() {
                return Err(CliError::validation(cfg_path, B, "strategies and modes must not be empty"));
            }
            Ok(Prepared::FixedModes { cfg: c.clone(), net, modes })
        }
        Experiment::AdaptiveCompare(c) => {
            check_rate(cfg_path, "adaptive_compare", c.rate)?;
            let net = load_schedule(base, &c.schedule)?;
            let n_modes = enumerate_modes(net.n_relays()).len();
            c.params.validate(n_modes).map_err(|e| CliError::selection(cfg_path, e))?;
            let policies = parse_policies(cfg_path, &c.policies, &mode_labels(net.n_relays()))?;
            Ok(Prepared::AdaptiveCompare { cfg: c.clone(), net, policies })
        }
        Experiment::Ensemble(c) => {
            const B: &str = "ensemble";
            let source = match (&c.dataset, c.topologies.is_empty()) {
                (Some(p), true) => {
                    let (full, text) = read(base, p)?;
                    let d = ModeDataset::read_csv(text.as_bytes()).map_err(|e| CliError::validation(&full, "dataset", e))?;
                    DatasetSource::Recorded(d)
                }
                (None, false) => {
                    let rate = c.rate.ok_or_else(|| CliError::validation(cfg_path, B, "rate is required when recording from topologies"))?;
                    check_rate(cfg_path, B, rate)?;
                    let topologies = c.topologies.iter().map(|p| load_topology(base, p)).collect::<CliResult<Vec<_>>>()?;
                    if topologies.iter().any(|t| t.n_relays != topologies[0].n_relays) {
                        return Err(CliError::validation(cfg_path, B, "all topologies need the same number of relays"));
                    }
                    if c.frames_per_topology == 0 {
                        return Err(CliError::validation(cfg_path, B, "frames_per_topology must be >= 1"));
                    }
                    DatasetSource::Record { topologies, rate }
                }
                _ => return Err(CliError::validation(cfg_path, B, "give exactly one of `topologies` or `dataset`")),
            };
            let (labels, frames) = match &source {
                DatasetSource::Record { topologies, .. } => (mode_labels(topologies[0].n_relays), c.frames_per_topology),
                DatasetSource::Recorded(d) => (d.modes.clone(), d.frames),
            };
            if c.samples == 0 {
                return Err(CliError::validation(cfg_path, B, "samples must be >= 1"));
            }
            if c.segment_len == 0 || c.segment_len > frames {
                return Err(CliError::validation(cfg_path, B, format!("segment_len must lie in [1, {frames}]")));
            }
            c.params.validate(labels.len()).map_err(|e| CliError::selection(cfg_path, e))?;
            if let Some(r) = c.memory_sizes.iter().find(|&&r| r == 0 || r > labels.len()) {
                return Err(CliError::validation(cfg_path, "SpaParams", format!("memory size {r} outside [1, {}]", labels.len())));
            }
            let policies = parse_policies(cfg_path, &c.policies, &labels)?;
            Ok(Prepared::Ensemble { cfg: c.clone(), source, policies })
        }
        Experiment::MacCompare(c) => {
            const B: &str = "mac_compare";
            c.mac.validate().map_err(|e| CliError::validation(cfg_path, "MacPolicy", e))?;
            if c.packets == 0 {
                return Err(CliError::validation(cfg_path, B, "packets must be >= 1"));
            }
            let scenario = match &c.topology {
                Some(p) => {
                    let rate = c.rate.ok_or_else(|| CliError::validation(cfg_path, B, "rate is required with a topology"))?;
                    MacScenario { topology: load_topology(base, p)?, rate, strategy: c.strategy, packets: c.packets, seed: 0 }
                }
                None => {
                    let mut s = MacScenario::relay_limited(c.packets, 0);
                    s.strategy = c.strategy;
                    if let Some(r) = c.rate {
                        s.rate = r;
                    }
                    s
                }
            };
            check_rate(cfg_path, B, scenario.rate)?;
            let labels = mode_labels(scenario.topology.n_relays);
            c.params.validate(labels.len()).map_err(|e| CliError::selection(cfg_path, e))?;
            let policy = Policy::parse(&c.policy, &labels).map_err(|e| CliError::selection(cfg_path, e))?;
            Ok(Prepared::MacCompare { cfg: c.clone(), scenario, policy })
        }
    }
}

impl Prepared {
    /// One-line description of the work `execute` would do.
    pub fn summary(&self) -> String {
        match self {
            Prepared::OutageSweep { cfg, topology, grid } => format!(
                "outage sweep on {} ({} relays): {} SNR points x k in {:?}, {:?} method",
                topology.label,
                topology.n_relays,
                grid.len(),
                cfg.ks,
                cfg.method
            ),
            Prepared::FixedModes { cfg, net, modes } => format!(
                "{} strategies x {} modes over {} frames",
                cfg.strategies.len(),
                modes.len(),
                net.total_frames()
            ),
            Prepared::AdaptiveCompare { net, policies, .. } => {
                format!("{} policies over {} frames ({} relays)", policies.len(), net.total_frames(), net.n_relays())
            }
            Prepared::Ensemble { cfg, source, policies } => {
                let src = match source {
                    DatasetSource::Record { topologies, .. } => {
                        format!("record {} topologies x {} frames", topologies.len(), cfg.frames_per_topology)
                    }
                    DatasetSource::Recorded(d) => format!("dataset of {} topologies x {} frames", d.topologies.len(), d.frames),
                };
                format!(
                    "{src}; {} samples of {} segments x {} frames; {} policies",
                    cfg.samples,
                    cfg.transitions + 1,
                    cfg.segment_len,
                    policies.len()
                )
            }
            Prepared::MacCompare { scenario, policy, .. } => format!(
                "{} packets on {} at rate {}: {policy} with cooperative MAC vs genie routing",
                scenario.packets, scenario.topology.label, scenario.rate
            ),
        }
    }
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(coopsim_core::Error::from)?;
    }
    w.into_inner().map_err(|e| coopsim_core::Error::Format(e.to_string()).into())
}

fn with_buffer(f: impl FnOnce(&mut Vec<u8>) -> coopsim_core::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// File-name friendly policy label.
pub fn policy_slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect::<String>()
        .trim_matches('_')
        .to_string()
}

#[derive(Serialize)]
struct OutageRow {
    snr_db: f64,
    k: usize,
    subset: String,
    outage: f64,
    method: &'static str,
}

#[derive(Serialize)]
struct FixedRow {
    strategy: String,
    mode: String,
    frames: usize,
    errors: usize,
    fer: f64,
}

#[derive(Serialize)]
struct RunLogRow<'a> {
    frame_index: usize,
    mode: &'a str,
    category: u8,
    phase: &'static str,
    cumulative_switches: usize,
}

#[derive(Serialize)]
struct PolicySummaryRow {
    policy: String,
    frames: usize,
    errors: usize,
    fer: f64,
    switches: usize,
    triggers: usize,
    learn_calls: usize,
    learning_frames: usize,
}

#[derive(Serialize)]
struct EnsembleSummaryRow {
    policy: String,
    avg_fer: f64,
    fer_std_error: f64,
    avg_switches: f64,
    switches_std_error: f64,
}

#[derive(Serialize)]
struct EnsembleSampleRow<'a> {
    policy: &'a str,
    sample: usize,
    frames: usize,
    errors: usize,
    fer: f64,
    switches: usize,
}

#[derive(Serialize)]
struct MacSummaryRow {
    system: &'static str,
    packets: usize,
    delivered: usize,
    drop_rate: f64,
    throughput_bps: f64,
    mean_delay_us: f64,
}

/// Run-log CSV: `frame_index, mode, category, phase, cumulative_switches`.
pub fn run_log_csv(log: &PolicyRunLog, labels: &[String]) -> CliResult<Vec<u8>> {
    let cumulative = log.cumulative_switches();
    csv_bytes(log.frames.iter().enumerate().map(|(i, f)| RunLogRow {
        frame_index: i,
        mode: f.mode.map_or("DT", |m| labels[m].as_str()),
        category: f.category.code(),
        phase: match f.phase {
            coopsim_core::selection::Phase::Operating => "operating",
            coopsim_core::selection::Phase::Learning => "learning",
        },
        cumulative_switches: cumulative[i],
    }))
}

fn summary_row(label: String, log: &PolicyRunLog) -> PolicySummaryRow {
    PolicySummaryRow {
        policy: label,
        frames: log.len(),
        errors: log.errors(),
        fer: log.fer(),
        switches: log.switches(),
        triggers: log.triggers.len(),
        learn_calls: log.learn_calls.len(),
        learning_frames: log.learning_frames(),
    }
}

fn ensemble_summary(label: String, r: &EnsembleResult) -> EnsembleSummaryRow {
    EnsembleSummaryRow {
        policy: label,
        avg_fer: r.avg_fer,
        fer_std_error: r.fer_std_error,
        avg_switches: r.avg_switches,
        switches_std_error: r.switches_std_error,
    }
}

/// Run a prepared experiment.
pub fn execute(p: &Prepared, seed: u64) -> CliResult<Vec<Artifact>> {
    let art = |name: &str, bytes: Vec<u8>| Artifact { name: name.to_string(), bytes };
    match p {
        Prepared::OutageSweep { cfg, topology, grid } => {
            let method = match cfg.method {
                MethodName::Analytic => OutageMethod::Analytic { rel_tol: cfg.rel_tol },
                MethodName::MonteCarlo => OutageMethod::MonteCarlo { samples: cfg.samples, seed: derive_seed(seed, MONTE_CARLO) },
            };
            let rows = outage_sweep(topology, &cfg.ks, cfg.rate, grid, cfg.normalization, &method)
                .map_err(coopsim_core::Error::from)?;
            let name = method.name();
            let bytes = csv_bytes(rows.iter().map(|r| OutageRow {
                snr_db: r.snr_db,
                k: r.k,
                subset: subset_label(&r.subset),
                outage: r.outage,
                method: name,
            }))?;
            Ok(vec![art("outage_sweep.csv", bytes)])
        }
        Prepared::FixedModes { cfg, net, modes } => {
            let channels = FrameChannels::new(derive_seed(seed, CHANNELS));
            let jobs: Vec<_> = cfg.strategies.iter().flat_map(|&s| modes.iter().map(move |&m| (s, m))).collect();
            let results = jobs
                .par_iter()
                .map(|&(s, m)| run_fixed(net, m, s, cfg.rate, &channels).map(|o| (s, m, o)))
                .collect::<coopsim_core::Result<Vec<_>>>()?;
            let mut out = Vec::new();
            let mut rows = Vec::new();
            for (s, m, outcomes) in &results {
                let errors = outcomes.iter().filter(|o| o.category.is_error()).count();
                rows.push(FixedRow {
                    strategy: s.to_string(),
                    mode: mode_label(*m),
                    frames: outcomes.len(),
                    errors,
                    fer: errors as f64 / outcomes.len().max(1) as f64,
                });
                if cfg.traces {
                    let records: Vec<TraceRecord> = trace_records(net, outcomes)?;
                    let name = format!("trace_{}_{}.csv", policy_slug(&s.to_string()), policy_slug(&mode_label(*m)));
                    out.push(art(&name, with_buffer(|b| write_trace(b, &records))?));
                }
            }
            out.insert(0, art("fixed_modes.csv", csv_bytes(rows)?));
            Ok(out)
        }
        Prepared::AdaptiveCompare { cfg, net, policies } => {
            let channels = FrameChannels::new(derive_seed(seed, CHANNELS));
            let labels = mode_labels(net.n_relays());
            let logs = policies
                .par_iter()
                .enumerate()
                .map(|(i, &policy)| {
                    let mut runner = ScheduleRunner::new(net, cfg.strategy, cfg.rate, channels);
                    run_policy(policy, &mut runner, labels.len(), &cfg.params, &mut stream(derive_seed(seed, POLICY), i as u64))
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(coopsim_core::Error::from)?;
            let mut out = vec![art(
                "adaptive_summary.csv",
                csv_bytes(policies.iter().zip(&logs).map(|(p, l)| summary_row(p.label(&labels), l)))?,
            )];
            for (p, log) in policies.iter().zip(&logs) {
                out.push(art(&format!("runlog_{}.csv", policy_slug(&p.label(&labels))), run_log_csv(log, &labels)?));
            }
            Ok(out)
        }
        Prepared::Ensemble { cfg, source, policies } => {
            let recorded;
            let d = match source {
                DatasetSource::Recorded(d) => d,
                DatasetSource::Record { topologies, rate } => {
                    recorded = record_dataset(topologies, cfg.strategy, *rate, cfg.frames_per_topology, derive_seed(seed, CHANNELS))?;
                    &recorded
                }
            };
            let samples = make_ensemble(d, cfg.samples, cfg.transitions, cfg.segment_len, derive_seed(seed, SAMPLES))
                .map_err(coopsim_core::Error::from)?;
            let mut results = Vec::new();
            for (i, &policy) in policies.iter().enumerate() {
                let r = evaluate_on_ensemble(policy, &samples, d, &cfg.params, derive_seed(derive_seed(seed, POLICY), i as u64))?;
                results.push((policy.label(&d.modes), r));
            }
            if cfg.oracle {
                results.push(("Oracle".to_string(), oracle_on_ensemble(&samples, d).map_err(coopsim_core::Error::from)?));
            }
            let mut out = vec![
                art("dataset.csv", with_buffer(|b| d.write_csv(b))?),
                art("samples.csv", with_buffer(|b| write_samples_csv(b, d, &samples))?),
                art("ensemble_summary.csv", csv_bytes(results.iter().map(|(l, r)| ensemble_summary(l.clone(), r)))?),
                art(
                    "ensemble_samples.csv",
                    csv_bytes(results.iter().flat_map(|(l, r)| {
                        r.rows.iter().map(move |m| EnsembleSampleRow {
                            policy: l,
                            sample: m.sample,
                            frames: m.frames,
                            errors: m.errors,
                            fer: m.fer,
                            switches: m.switches,
                        })
                    }))?,
                ),
            ];
            if !cfg.memory_sizes.is_empty() {
                let rows = memory_sweep(d, &samples, &cfg.memory_sizes, &cfg.params, derive_seed(seed, POLICY))?;
                out.push(art("memory_sweep.csv", csv_bytes(rows)?));
            }
            Ok(out)
        }
        Prepared::MacCompare { cfg, scenario, policy } => {
            let mut scenario = scenario.clone();
            scenario.seed = derive_seed(seed, CHANNELS);
            let rep = compare_coop_vs_genie(&scenario, *policy, &cfg.params, &cfg.mac, &mut stream(derive_seed(seed, POLICY), 0))?;
            let labels = mode_labels(scenario.topology.n_relays);
            let summary = |system, r: &[coopsim_core::macemu::PacketResult], drop_rate, throughput_bps| MacSummaryRow {
                system,
                packets: r.len(),
                delivered: r.iter().filter(|p| p.delivered).count(),
                drop_rate,
                throughput_bps,
                mean_delay_us: r.iter().map(|p| p.total_delay_us as f64).sum::<f64>() / r.len().max(1) as f64,
            };
            let trace: Vec<TraceRecord> = rep
                .coop_log
                .frames
                .iter()
                .enumerate()
                .map(|(i, f)| TraceRecord {
                    frame_index: i,
                    topology_id: scenario.topology.label.clone(),
                    mode: f.mode.map_or("DT".to_string(), |m| labels[m].clone()),
                    category: f.category.code(),
                })
                .collect();
            Ok(vec![
                art(
                    "mac_summary.csv",
                    csv_bytes([
                        summary("coop", &rep.coop, rep.coop_drop_rate, rep.coop_throughput),
                        summary("genie", &rep.genie, rep.genie_drop_rate, rep.genie_throughput),
                    ])?,
                ),
                art("mac_coop.csv", with_buffer(|b| write_packets(b, &rep.coop))?),
                art("mac_genie.csv", with_buffer(|b| write_packets(b, &rep.genie))?),
                art("mac_coop_trace.csv", with_buffer(|b| write_trace(b, &trace))?),
                art("mac_paths.csv", with_buffer(|b| scenario.path_traces(&cfg.mac).write_csv(b))?),
            ])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(policy_slug("Fixed(R1R2)"), "fixed_r1r2");
        assert_eq!(policy_slug("SPA"), "spa");
    }
}
