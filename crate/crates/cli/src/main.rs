use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use coopsim::config::{AdaptiveCompareConfig, EnsembleConfig, MethodName, OutageSweepConfig, SnrGrid};
use coopsim::error::{CliError, CliResult};
use coopsim::output::{write_file, write_outputs};
use coopsim::{execute, load_config, prepare, Experiment, ExperimentKind, DEFAULT_SEED};
use coopsim_core::macemu::{coop_mac_deliver_labeled, drop_rate, genie_route, throughput_proxy, write_packets, MacPolicy, PathTraces};
use coopsim_core::netsim::{read_categories, Strategy};
use coopsim_core::outage::Normalization;
use coopsim_core::selection::PolicyParams;

#[derive(Parser)]
#[command(name = "coopsim", version, about = "Cooperative relay network simulator")]
struct Cli {
    /// Master seed; overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides the config's out_dir.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Best-k subnetwork outage over an SNR grid.
    Outage(OutageArgs),
    /// Run policies over a topology schedule.
    Run(RunArgs),
    /// Replay policies over a randomized ensemble.
    Ensemble(EnsembleArgs),
    /// Cooperative MAC and genie routing over recorded traces.
    Mac(MacArgs),
    /// Check a config file and its inputs without running it.
    Validate { config: PathBuf },
    /// Run the experiment described by a config file.
    Experiment { config: PathBuf },
    /// List the experiment kinds.
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Analytic,
    MonteCarlo,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormalizationArg {
    PerNode,
    TotalPower,
}

#[derive(Args)]
struct OutageArgs {
    /// Topology file whose link SNRs are relative gains.
    topology: PathBuf,
    #[arg(long)]
    rate: f64,
    /// Subnetwork sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    k: Vec<usize>,
    /// SNR points in dB, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,5,10,15,20")]
    snr_db: Vec<f64>,
    #[arg(long, value_enum, default_value = "analytic")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "per-node")]
    normalization: NormalizationArg,
    #[arg(long, default_value_t = coopsim_core::outage::DEFAULT_MC_SAMPLES)]
    samples: usize,
    /// Write the sweep table here instead of the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PolicyOpts {
    /// Policies, comma separated (e.g. SPA,NRNM,Fixed(R1)).
    #[arg(long, visible_alias = "policy", value_delimiter = ',', default_value = "SPA")]
    policies: Vec<String>,
    #[arg(long, default_value = "DIQIF")]
    strategy: Strategy,
    /// TOML file with policy parameters (`[spa]` table, `measure_frames`).
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    rate: f64,
    #[command(flatten)]
    policy: PolicyOpts,
    /// Write the run log of a single policy here instead of the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnsembleArgs {
    /// Topology files to record a dataset from.
    #[arg(long, num_args = 1.., conflicts_with = "dataset")]
    topology: Vec<PathBuf>,
    /// Previously written dataset CSV.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, default_value_t = 860)]
    frames: usize,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 4)]
    transitions: usize,
    #[arg(long, default_value_t = 172)]
    segment_len: usize,
    #[command(flatten)]
    policy: PolicyOpts,
    /// Write the per-policy summary here instead of the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MacArgs {
    /// Frame trace (a `category` column, optional `mode`) for the cooperative MAC.
    #[arg(long)]
    coop_trace: Option<PathBuf>,
    /// Per-hop attempt outcomes (path, hop, packet, attempt, success).
    #[arg(long)]
    path_traces: Option<PathBuf>,
    /// Cooperative retransmission cap.
    #[arg(long)]
    max_retx: Option<u32>,
    /// Per-link retransmission cap for genie routing.
    #[arg(long)]
    max_retx_per_link: Option<u32>,
    /// Cooperative MAC packet results.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Genie routing packet results.
    #[arg(long)]
    genie_out: Option<PathBuf>,
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn cmdline() -> PathBuf {
    PathBuf::from("<command line>")
}

fn load_params(path: Option<&Path>) -> CliResult<PolicyParams> {
    let Some(p) = path else { return Ok(PolicyParams::default()) };
    let text = read_text(p)?;
    toml::from_str(&text).map_err(|e| {
        let line = e.span().map(|s| coopsim::error::line_of(&text, s.start));
        CliError::parse(p, line, e.message().trim().to_string())
    })
}

/// Where a run's files go: a directory with every artifact and the manifest,
/// or a single file holding the first artifact whose name starts with the
/// given prefix.
enum Target {
    Dir(PathBuf),
    File(PathBuf, &'static str),
}

fn run_experiment(experiment: &Experiment, cfg_path: &Path, base: &Path, seed: u64, target: Target) -> CliResult<()> {
    let prepared = prepare(experiment, cfg_path, base)?;
    let artifacts = execute(&prepared, seed)?;
    match target {
        Target::Dir(dir) => {
            write_outputs(&dir, experiment, cfg_path, seed, &artifacts)?;
            for a in &artifacts {
                println!("{}", dir.join(&a.name).display());
            }
        }
        Target::File(path, prefix) => {
            let a = artifacts
                .iter()
                .find(|a| a.name.starts_with(prefix))
                .expect("every experiment writes its primary table");
            write_file(&path, &a.bytes)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn default_out(kind: ExperimentKind) -> PathBuf {
    Path::new("out").join(kind.name())
}

fn mac(args: &MacArgs) -> CliResult<()> {
    if args.coop_trace.is_none() && args.path_traces.is_none() {
        return Err(CliError::validation(&cmdline(), "mac", "give --coop-trace, --path-traces or both"));
    }
    let mut policy = MacPolicy::default();
    if let Some(n) = args.max_retx {
        policy.max_retx_coop = n;
    }
    if let Some(n) = args.max_retx_per_link {
        policy.max_retx_per_link = n;
    }
    policy.validate().map_err(|e| CliError::validation(&cmdline(), "MacPolicy", e))?;
    let report = |name: &str, r: &[coopsim_core::macemu::PacketResult]| {
        println!(
            "{name}: packets={} drop_rate={:.6} throughput_bps={:.1}",
            r.len(),
            drop_rate(r),
            throughput_proxy(r, &policy)
        );
    };
    let emit = |out: Option<&PathBuf>, r: &[coopsim_core::macemu::PacketResult]| -> CliResult<()> {
        if let Some(p) = out {
            let mut buf = Vec::new();
            write_packets(&mut buf, r)?;
            write_file(p, &buf)?;
        }
        Ok(())
    };
    if let Some(p) = &args.coop_trace {
        let trace = read_categories(read_text(p)?.as_bytes()).map_err(|e| CliError::validation(p, "trace", e))?;
        let labelled = trace.into_iter().map(|(c, m)| (c, m.unwrap_or_else(|| "coop".into())));
        let r = coop_mac_deliver_labeled(labelled, &policy).map_err(|e| CliError::validation(p, "trace", e))?;
        report("coop", &r);
        emit(args.out.as_ref(), &r)?;
    }
    if let Some(p) = &args.path_traces {
        let paths = PathTraces::read_csv(read_text(p)?.as_bytes()).map_err(|e| CliError::validation(p, "path_traces", e))?;
        let r = genie_route(&paths, &policy).map_err(|e| CliError::validation(p, "path_traces", e))?;
        report("genie", &r);
        emit(args.genie_out.as_ref(), &r)?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let here = Path::new(".");
    let target = |out: Option<PathBuf>, prefix, kind| match (out, cli.out_dir.clone()) {
        (Some(file), _) => Target::File(file, prefix),
        (None, dir) => Target::Dir(dir.unwrap_or_else(|| default_out(kind))),
    };
    match cli.command {
        Command::List => {
            for k in ExperimentKind::ALL {
                println!("{:<18} {}", k.name(), k.describe());
            }
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            let prepared = prepare(&cfg.experiment, &cfg.path, &cfg.base_dir)?;
            println!("ok: {}: {}", cfg.experiment.kind(), prepared.summary());
            Ok(())
        }
        Command::Experiment { config } => {
            let cfg = load_config(&config)?;
            let seed = cli.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
            let out = cli
                .out_dir
                .clone()
                .or(cfg.out_dir.clone())
                .unwrap_or_else(|| default_out(cfg.experiment.kind()));
            run_experiment(&cfg.experiment, &cfg.path, &cfg.base_dir, seed, Target::Dir(out))
        }
        Command::Outage(a) => {
            let exp = Experiment::OutageSweep(OutageSweepConfig {
                topology: a.topology,
                rate: a.rate,
                ks: a.k,
                snr_db: SnrGrid::List(a.snr_db),
                normalization: match a.normalization {
                    NormalizationArg::PerNode => Normalization::PerNode,
                    NormalizationArg::TotalPower => Normalization::TotalPower,
                },
                method: match a.method {
                    MethodArg::Analytic => MethodName::Analytic,
                    MethodArg::MonteCarlo => MethodName::MonteCarlo,
                },
                samples: a.samples,
                rel_tol: coopsim_core::outage::DEFAULT_QUADRATURE_REL_TOL,
            });
            run_experiment(&exp, &cmdline(), here, seed, target(a.out, "outage_sweep", ExperimentKind::OutageSweep))
        }
        Command::Run(a) => {
            if a.out.is_some() && a.policy.policies.len() != 1 {
                return Err(CliError::validation(&cmdline(), "policies", "--out takes exactly one policy; use --out-dir for several"));
            }
            let exp = Experiment::AdaptiveCompare(AdaptiveCompareConfig {
                schedule: a.schedule,
                rate: a.rate,
                strategy: a.policy.strategy,
                policies: a.policy.policies,
                params: load_params(a.policy.params.as_deref())?,
            });
            run_experiment(&exp, &cmdline(), here, seed, target(a.out, "runlog_", ExperimentKind::AdaptiveCompare))
        }
        Command::Ensemble(a) => {
            let exp = Experiment::Ensemble(EnsembleConfig {
                topologies: a.topology,
                dataset: a.dataset,
                strategy: a.policy.strategy,
                rate: a.rate,
                frames_per_topology: a.frames,
                samples: a.samples,
                transitions: a.transitions,
                segment_len: a.segment_len,
                policies: a.policy.policies,
                oracle: true,
                memory_sizes: vec![],
                params: load_params(a.policy.params.as_deref())?,
            });
            run_experiment(&exp, &cmdline(), here, seed, target(a.out, "ensemble_summary", ExperimentKind::Ensemble))
        }
        Command::Mac(a) => mac(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(3);
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
