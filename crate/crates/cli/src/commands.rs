//! The `rashomon` subcommands. Exit codes: 0 success, 1 usage error,
//! 2 data/format error, 3 experiment failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use rashomon_core::experiments::{
    assemble_run, confabulation_report, correlation_report, hypothesis1, EnsembleRun,
    ExperimentDatasets, ExperimentError, PoolMode,
};
use rashomon_core::multiplicity::{self, MultiplicityError, PmMode};
use rashomon_core::nn::{train_variant, NetworkSpec, Regime, TrainingStrategy};
use rashomon_core::svcca::{svcca_correlations, svcca_similarity, SvccaError};
use rashomon_core::{ActivationMatrix, SvccaConfig};
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::exit_codes;
use crate::idx::{save_idx, IdxError};
use crate::mtx::{read_matrix, MtxError};
use crate::report::{emit_reports, fmt_sig9, ReportBundle, ReportError, DEFAULT_REPORT_TAP};
use crate::rundir::{load_runs, save_runs, NetworkMeta, RunDirError};

#[derive(Parser, Debug)]
#[command(
    name = "rashomon",
    version,
    about = "Measure representational and predictive multiplicity across risk-equivalent model ensembles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset and write it as IDX files.
    GenData(GenDataArgs),
    /// Train all seeds of one strategy into a run directory.
    Train(TrainArgs),
    /// Run a full regime sweep into a run directory.
    Sweep(SweepArgs),
    /// Compare two MTX1 activation files with SVCCA.
    Svcca(SvccaArgs),
    /// Predictive multiplicity per strategy over a run directory.
    Pm(PmArgs),
    /// Representational multiplicity per strategy over a run directory.
    Rm(RmArgs),
    /// Top confabulators (most diversely classified samples).
    Confab(ConfabArgs),
    /// Subset-RM vs subset-PM irreducibility report.
    Hyp1(Hyp1Args),
    /// Assemble the CSV/JSON report bundle from a run directory.
    Report(ReportArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    LearningRate,
    BatchSize,
}

#[derive(Args, Debug)]
pub struct ConfigArgs {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in configuration scale (used when --config is absent).
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: Preset,
    /// Regime for the paper preset grid.
    #[arg(long, value_enum, default_value = "learning-rate")]
    pub regime: RegimeArg,
    /// Override the dataset seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the SVCCA variance fraction (default 0.99).
    #[arg(long)]
    pub variance_fraction: Option<f64>,
    /// Override the SVCCA top-T (default 20).
    #[arg(long)]
    pub top_t: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<Config, CommandError> {
        let mut cfg = match &self.config {
            Some(path) => Config::load(path)?,
            None => match self.preset {
                Preset::Desk => Config::desk(),
                Preset::Paper => Config::paper(match self.regime {
                    RegimeArg::LearningRate => Regime::LearningRate,
                    RegimeArg::BatchSize => Regime::BatchSize,
                }),
            },
        };
        if let Some(seed) = self.seed {
            cfg.dataset.seed = seed;
        }
        if let Some(vf) = self.variance_fraction {
            cfg.svcca.variance_fraction = vf;
        }
        if let Some(t) = self.top_t {
            cfg.svcca.top_t = t;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output directory for the IDX files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Strategy label to train (e.g. "lr-0.003"); optional when the
    /// configuration defines exactly one strategy.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Run directory to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Run directory to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SvccaArgs {
    /// First activation matrix (MTX1, neurons x samples).
    pub left: PathBuf,
    /// Second activation matrix (MTX1, neurons x samples).
    pub right: PathBuf,
    #[arg(long, default_value_t = 0.99)]
    pub variance_fraction: f64,
    #[arg(long, default_value_t = 20)]
    pub top_t: usize,
}

#[derive(Args, Debug)]
pub struct PmArgs {
    /// Run directory produced by `train` or `sweep`.
    #[arg(long)]
    pub run: PathBuf,
    /// Restrict to one strategy label.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Evaluation set: "iid" or an OOD transform name.
    #[arg(long, default_value = "iid")]
    pub set: String,
    /// Treat predictions as numeric class labels instead of probability
    /// vectors (comparison mode).
    #[arg(long)]
    pub label_mode: bool,
}

#[derive(Args, Debug)]
pub struct RmArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub strategy: Option<String>,
    /// Tap point to compare (default fc1).
    #[arg(long, default_value = DEFAULT_REPORT_TAP)]
    pub tap: String,
    #[arg(long)]
    pub variance_fraction: Option<f64>,
    #[arg(long)]
    pub top_t: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum PoolArg {
    Pooled,
    PerStrategy,
}

#[derive(Args, Debug)]
pub struct ConfabArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Number of top confabulators to list.
    #[arg(long, default_value_t = 16)]
    pub top: usize,
    #[arg(long, value_enum, default_value = "pooled")]
    pub pool: PoolArg,
}

#[derive(Args, Debug)]
pub struct Hyp1Args {
    #[arg(long)]
    pub run: PathBuf,
    /// Low-PM subset size (default min(1000, N/4)).
    #[arg(long)]
    pub subset_size: Option<usize>,
    #[arg(long, default_value = DEFAULT_REPORT_TAP)]
    pub tap: String,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Output directory for report.csv and summary.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub subset_size: Option<usize>,
}

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mtx(#[from] MtxError),
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error(transparent)]
    RunDir(#[from] RunDirError),
    #[error("svcca: {0}")]
    Svcca(#[from] SvccaError),
    #[error("metric: {0}")]
    Multiplicity(#[from] MultiplicityError),
    #[error("experiment: {0}")]
    Experiment(#[from] ExperimentError),
    #[error("report: {0}")]
    Report(ReportError),
    #[error("{0}")]
    Nn(#[from] rashomon_core::nn::NnError),
}

impl From<ReportError> for CommandError {
    fn from(e: ReportError) -> Self {
        CommandError::Report(e)
    }
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Usage(_) => exit_codes::USAGE,
            CommandError::Config(_)
            | CommandError::Mtx(_)
            | CommandError::Idx(_)
            | CommandError::RunDir(_)
            | CommandError::Svcca(_) => exit_codes::DATA,
            CommandError::Report(ReportError::Experiment(_)) => exit_codes::EXPERIMENT,
            CommandError::Report(_) => exit_codes::DATA,
            CommandError::Multiplicity(_) | CommandError::Experiment(_) | CommandError::Nn(_) => {
                exit_codes::EXPERIMENT
            }
        }
    }
}

pub fn execute(command: Command) -> Result<(), CommandError> {
    match command {
        Command::GenData(args) => gen_data(args),
        Command::Train(args) => train(args),
        Command::Sweep(args) => sweep(args),
        Command::Svcca(args) => svcca(args),
        Command::Pm(args) => pm_command(args),
        Command::Rm(args) => rm_command(args),
        Command::Confab(args) => confab(args),
        Command::Hyp1(args) => hyp1_command(args),
        Command::Report(args) => report(args),
    }
}

fn gen_data(args: GenDataArgs) -> Result<(), CommandError> {
    let cfg = args.config.resolve()?;
    let data = cfg.build_datasets()?;
    std::fs::create_dir_all(&args.out).map_err(|source| {
        CommandError::RunDir(RunDirError::Io {
            path: args.out.clone(),
            source,
        })
    })?;
    let files = [
        ("train-images.idx", "train-labels.idx", &data.train),
        ("test-images.idx", "test-labels.idx", &data.test),
    ];
    for (images, labels, ds) in files {
        save_idx(ds, &args.out.join(images), &args.out.join(labels))?;
        println!(
            "{} {} samples={} fingerprint={}",
            images,
            labels,
            ds.samples,
            rashomon_core::data::fingerprint_hex(ds.fingerprint)
        );
    }
    Ok(())
}

/// Trains every seed of a strategy, variants in parallel. Outcomes are
/// collected in seed order, so results are byte-identical to a sequential
/// run regardless of worker count.
pub fn run_strategy_parallel(
    strategy: &TrainingStrategy,
    spec: &NetworkSpec,
    data: &ExperimentDatasets,
) -> Result<EnsembleRun, CommandError> {
    let outcomes: Vec<_> = strategy
        .seeds
        .par_iter()
        .map(|&seed| {
            (
                seed,
                train_variant(strategy, seed, spec, &data.train, &data.test),
            )
        })
        .collect();
    Ok(assemble_run(strategy.clone(), outcomes, data)?)
}

fn network_meta(cfg: &Config, data: &ExperimentDatasets) -> NetworkMeta {
    NetworkMeta {
        preset: cfg.network.preset.clone(),
        channels: data.test.channels,
        height: data.test.height,
        width: data.test.width,
        classes: data.test.classes,
    }
}

fn save_run_dir(
    out: &Path,
    cfg: &Config,
    data: &ExperimentDatasets,
    spec: &NetworkSpec,
    runs: &[EnsembleRun],
) -> Result<(), CommandError> {
    let taps: Vec<String> = spec.taps().iter().map(|(name, _)| name.clone()).collect();
    let ood_fps: Vec<(String, u64)> = data
        .ood
        .iter()
        .map(|(name, ds)| (name.clone(), ds.fingerprint))
        .collect();
    save_runs(
        out,
        runs,
        &network_meta(cfg, data),
        &cfg.svcca_config(),
        data.test.samples,
        &taps,
        &ood_fps,
    )?;
    Ok(())
}

fn train(args: TrainArgs) -> Result<(), CommandError> {
    let cfg = args.config.resolve()?;
    let strategies = cfg.build_strategies()?;
    let strategy = match &args.strategy {
        Some(label) => strategies
            .iter()
            .find(|s| &s.label() == label)
            .cloned()
            .ok_or_else(|| {
                let known: Vec<String> = strategies.iter().map(|s| s.label()).collect();
                CommandError::Usage(format!(
                    "unknown strategy '{label}'; configured: {}",
                    known.join(", ")
                ))
            })?,
        None if strategies.len() == 1 => strategies[0].clone(),
        None => {
            let known: Vec<String> = strategies.iter().map(|s| s.label()).collect();
            return Err(CommandError::Usage(format!(
                "--strategy required; configured: {}",
                known.join(", ")
            )));
        }
    };

    let data = cfg.build_datasets()?;
    let spec = cfg.build_network()?;
    let run = run_strategy_parallel(&strategy, &spec, &data)?;
    report_failures(std::slice::from_ref(&run));
    save_run_dir(&args.out, &cfg, &data, &spec, std::slice::from_ref(&run))?;
    println!(
        "{}: {} variants, mean accuracy {}",
        run.label(),
        run.variants.len(),
        fmt_sig9(rashomon_core::linalg::mean(&run.accuracies()))
    );
    if run.variants.is_empty() {
        return Err(CommandError::Experiment(ExperimentError::NoUsableRuns {
            reason: format!("all seeds of '{}' failed", run.label()),
        }));
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), CommandError> {
    let cfg = args.config.resolve()?;
    let strategies = cfg.build_strategies()?;
    let data = cfg.build_datasets()?;
    let spec = cfg.build_network()?;

    let mut runs = Vec::with_capacity(strategies.len());
    for strategy in &strategies {
        let run = run_strategy_parallel(strategy, &spec, &data)?;
        println!(
            "{}: {}/{} variants in band",
            run.label(),
            run.variants.len(),
            strategy.seeds.len()
        );
        runs.push(run);
    }
    report_failures(&runs);
    save_run_dir(&args.out, &cfg, &data, &spec, &runs)?;

    if runs.iter().all(|r| r.variants.is_empty()) {
        return Err(CommandError::Experiment(ExperimentError::NoUsableRuns {
            reason: "every strategy failed".into(),
        }));
    }
    Ok(())
}

fn report_failures(runs: &[EnsembleRun]) {
    for run in runs {
        for (seed, reason) in &run.failed {
            eprintln!("warning: {} seed {seed}: {reason}", run.label());
        }
    }
}

fn svcca(args: SvccaArgs) -> Result<(), CommandError> {
    let left = read_matrix(&args.left)?;
    let right = read_matrix(&args.right)?;
    // External matrices carry no dataset fingerprint; sample alignment is
    // asserted by the caller, so both sides get the same neutral tag.
    let z1 = ActivationMatrix::new("left", left, 0)?;
    let z2 = ActivationMatrix::new("right", right, 0)?;
    let spectrum = svcca_correlations(&z1, &z2, args.variance_fraction)?;
    let similarity = svcca_similarity(&spectrum, args.top_t)?;
    println!("k1 {}", spectrum.k1);
    println!("k2 {}", spectrum.k2);
    println!("rank_deficient {}", spectrum.rank_deficient);
    let rendered: Vec<String> = spectrum.correlations.iter().map(|&c| fmt_sig9(c)).collect();
    println!("correlations {}", rendered.join(" "));
    println!("similarity {}", fmt_sig9(similarity));
    Ok(())
}

fn select_runs<'r>(
    runs: &'r [EnsembleRun],
    strategy: &Option<String>,
) -> Result<Vec<&'r EnsembleRun>, CommandError> {
    match strategy {
        None => Ok(runs.iter().collect()),
        Some(label) => {
            let run = runs.iter().find(|r| &r.label() == label).ok_or_else(|| {
                let known: Vec<String> = runs.iter().map(|r| r.label()).collect();
                CommandError::Usage(format!(
                    "unknown strategy '{label}'; run directory has: {}",
                    known.join(", ")
                ))
            })?;
            Ok(vec![run])
        }
    }
}

fn pm_command(args: PmArgs) -> Result<(), CommandError> {
    let loaded = load_runs(&args.run)?;
    let mode = if args.label_mode {
        PmMode::Labels
    } else {
        PmMode::Probabilities
    };
    for run in select_runs(&loaded.runs, &args.strategy)? {
        let table = if args.set == "iid" {
            run.iid()?
        } else {
            run.ood(&args.set)
                .ok_or_else(|| CommandError::Usage(format!("unknown set '{}'", args.set)))?
        };
        let value = multiplicity::pm_mode(table, None, mode)?;
        println!("{} {} {}", run.label(), args.set, fmt_sig9(value));
    }
    Ok(())
}

fn rm_command(args: RmArgs) -> Result<(), CommandError> {
    let loaded = load_runs(&args.run)?;
    let mut cfg = loaded.meta.svcca_config();
    if let Some(vf) = args.variance_fraction {
        cfg.variance_fraction = vf;
    }
    if let Some(t) = args.top_t {
        cfg.top_t = t;
    }
    for run in select_runs(&loaded.runs, &args.strategy)? {
        let svcca = run.mean_svcca(&args.tap, &cfg)?;
        println!(
            "{} {} rm {} svcca {}",
            run.label(),
            args.tap,
            fmt_sig9(-svcca),
            fmt_sig9(svcca)
        );
    }
    Ok(())
}

fn confab(args: ConfabArgs) -> Result<(), CommandError> {
    let loaded = load_runs(&args.run)?;
    let mode = match args.pool {
        PoolArg::Pooled => PoolMode::Pooled,
        PoolArg::PerStrategy => PoolMode::PerStrategy,
    };
    let report = confabulation_report(&loaded.runs, mode, args.top)?;
    for group in &report.groups {
        println!(
            "group {} degenerate={} truncated={}",
            group.label, group.degenerate, group.truncated
        );
        for (entry, &pm) in group.entries.iter().zip(&group.entry_pm) {
            let hist: Vec<String> = entry
                .label_histogram
                .iter()
                .map(|c| c.to_string())
                .collect();
            println!(
                "  sample {} score {} pm {} labels {}",
                entry.sample_index,
                fmt_sig9(entry.score),
                fmt_sig9(pm),
                hist.join("/")
            );
        }
    }
    Ok(())
}

fn hyp1_command(args: Hyp1Args) -> Result<(), CommandError> {
    let loaded = load_runs(&args.run)?;
    let samples = loaded.meta.test_samples;
    let subset = args
        .subset_size
        .unwrap_or_else(|| (samples / 4).clamp(2, 1000));
    let report = hypothesis1(&loaded.runs, &args.tap, subset, &loaded.meta.svcca_config())?;
    println!(
        "verdict {} mean_e_rm {} mean_e_pm {}",
        report.verdict,
        fmt_sig9(report.mean_e_rm),
        fmt_sig9(report.mean_e_pm)
    );
    println!(
        "pcc rm_sub~pm_full {} pm_sub~pm_full {}",
        report
            .pcc_rm_sub_vs_pm_full
            .map_or("undefined".to_string(), fmt_sig9),
        report
            .pcc_pm_sub_vs_pm_full
            .map_or("undefined".to_string(), fmt_sig9)
    );
    for row in &report.per_strategy {
        println!(
            "  {} rm_sub {} pm_sub {} pm_full {} e_rm {} e_pm {}",
            row.label,
            fmt_sig9(row.rm_sub),
            fmt_sig9(row.pm_sub),
            fmt_sig9(row.pm_full),
            fmt_sig9(row.e_rm),
            fmt_sig9(row.e_pm)
        );
    }
    for (label, reason) in &report.excluded {
        println!("  excluded {label}: {reason}");
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), CommandError> {
    let loaded = load_runs(&args.run)?;
    let complete: Vec<EnsembleRun> = loaded
        .runs
        .into_iter()
        .filter(|r| !r.variants.is_empty())
        .collect();
    let ood_names: Vec<String> = loaded.meta.ood.iter().map(|o| o.name.clone()).collect();
    let bundle = ReportBundle::from_runs(
        &complete,
        &loaded.meta.taps,
        &ood_names,
        &loaded.meta.svcca_config(),
        args.subset_size,
    )?;
    let files = emit_reports(&bundle, &args.out)?;
    for file in files {
        println!("{}", file.display());
    }
    Ok(())
}

// Additional PCC access for scripts: the report command embeds the full
// table, but expose it for tests as well.
pub fn pcc_table(
    runs: &[EnsembleRun],
    tap: &str,
    cfg: &SvccaConfig,
) -> Result<Vec<(String, Option<f64>)>, CommandError> {
    let report = correlation_report(runs, tap, None, cfg)?;
    Ok(report
        .rows
        .into_iter()
        .map(|row| (row.transform, row.pcc))
        .collect())
}
