//! Experiment orchestration: strategy runs (K seed-varied variants inside
//! one risk band), hyperparameter-regime sweeps, the subset-RM vs
//! subset-PM irreducibility report, PCC correlation tables, and
//! confabulation listings.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use core::fmt;

use crate::data::{DataError, Dataset};
use crate::linalg::{pearson, LinalgError};
use crate::multiplicity::{self, ConfabulationEntry, MultiplicityError, PredictionTable};
use crate::nn::{
    train_variant, NetworkSpec, NnError, Regime, StoppingPolicy, TrainingStrategy, VariantResult,
};
use crate::svcca::{ActivationMatrix, SvccaConfig, SvccaError};

pub use crate::nn::EvalPoint;

/// The datasets one experiment runs against: a training split, the
/// held-out evaluation split, and named OOD variants of the latter.
#[derive(Debug, Clone)]
pub struct ExperimentDatasets {
    pub train: Dataset,
    pub test: Dataset,
    pub ood: Vec<(String, Dataset)>,
}

impl ExperimentDatasets {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        for (name, ds) in &self.ood {
            if ds.samples != self.test.samples || ds.classes != self.test.classes {
                return Err(ExperimentError::DatasetMismatch {
                    detail: format!("ood set '{name}' does not match the test split"),
                });
            }
        }
        if self.train.classes != self.test.classes {
            return Err(ExperimentError::DatasetMismatch {
                detail: String::from("train and test class counts differ"),
            });
        }
        Ok(())
    }
}

/// K trained variants of one strategy, with pooled prediction tables for
/// the i.i.d. test set and each OOD set.
///
/// A run is *incomplete* when some seeds failed (band never reached,
/// non-finite loss); the failures are listed and the tables cover the
/// surviving variants only.
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub strategy: TrainingStrategy,
    pub variants: Vec<VariantResult>,
    pub iid_table: Option<PredictionTable>,
    pub ood_tables: Vec<(String, PredictionTable)>,
    pub failed: Vec<(u64, String)>,
    pub test_fingerprint: u64,
}

impl EnsembleRun {
    pub fn label(&self) -> String {
        self.strategy.label()
    }

    pub fn is_complete(&self) -> bool {
        self.failed.is_empty()
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.variants.iter().map(|v| v.accuracy).collect()
    }

    pub fn iid(&self) -> Result<&PredictionTable, ExperimentError> {
        self.iid_table
            .as_ref()
            .ok_or_else(|| ExperimentError::NoUsableRuns {
                reason: format!("run '{}' has no surviving variants", self.label()),
            })
    }

    pub fn ood(&self, name: &str) -> Option<&PredictionTable> {
        self.ood_tables
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    /// The tap's activation matrix from every variant, in seed order.
    pub fn tap_matrices(&self, tap: &str) -> Result<Vec<&ActivationMatrix>, ExperimentError> {
        self.variants
            .iter()
            .map(|v| {
                v.taps
                    .iter()
                    .find(|(name, _)| name == tap)
                    .map(|(_, m)| m)
                    .ok_or(ExperimentError::TapMissing {
                        tap: tap.to_string(),
                        seed: v.seed,
                    })
            })
            .collect()
    }

    /// Mean pairwise SVCCA similarity at a tap over the full test set.
    pub fn mean_svcca(&self, tap: &str, cfg: &SvccaConfig) -> Result<f64, ExperimentError> {
        let taps: Vec<ActivationMatrix> = self.tap_matrices(tap)?.into_iter().cloned().collect();
        Ok(multiplicity::mean_pairwise_svcca(&taps, cfg)?)
    }
}

/// Trains every seed of a strategy (sequentially) and assembles the run.
pub fn run_strategy(
    strategy: &TrainingStrategy,
    spec: &NetworkSpec,
    data: &ExperimentDatasets,
) -> Result<EnsembleRun, ExperimentError> {
    validate_strategy(strategy)?;
    data.validate()?;
    let outcomes: Vec<(u64, Result<VariantResult, NnError>)> = strategy
        .seeds
        .iter()
        .map(|&seed| {
            (
                seed,
                train_variant(strategy, seed, spec, &data.train, &data.test),
            )
        })
        .collect();
    assemble_run(strategy.clone(), outcomes, data)
}

fn validate_strategy(strategy: &TrainingStrategy) -> Result<(), ExperimentError> {
    strategy.validate().map_err(|e| match e {
        NnError::InvalidHyper { name: "seeds" } => ExperimentError::DuplicateSeeds,
        other => ExperimentError::Nn(other),
    })
}

/// Builds an `EnsembleRun` from per-seed training outcomes. Pseudo-max
/// strategies reselect each surviving variant's checkpoint at the highest
/// accuracy reached by at least `min(5, K)` seeds, then recapture
/// predictions and activations at that checkpoint.
///
/// Callers that train variants concurrently feed the outcomes here in
/// seed-list order, which keeps results independent of scheduling.
pub fn assemble_run(
    strategy: TrainingStrategy,
    outcomes: Vec<(u64, Result<VariantResult, NnError>)>,
    data: &ExperimentDatasets,
) -> Result<EnsembleRun, ExperimentError> {
    let mut variants = Vec::new();
    let mut failed: Vec<(u64, String)> = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(v) => variants.push(v),
            Err(e) => failed.push((seed, format!("{e}"))),
        }
    }

    if matches!(strategy.stopping, StoppingPolicy::PseudoMax) && !variants.is_empty() {
        let level = pseudo_max_level(&variants);
        let mut kept = Vec::with_capacity(variants.len());
        for mut variant in variants {
            if variant.accuracy < level {
                failed.push((
                    variant.seed,
                    format!(
                        "below pseudo-max level {level:.4} (best {:.4})",
                        variant.accuracy
                    ),
                ));
                continue;
            }
            // First record at or above the level is the first crossing.
            let (point, model) = variant
                .records
                .iter()
                .find(|(p, _)| p.accuracy >= level)
                .cloned()
                .expect("a record >= level exists when the running max reached it");
            let (predictions, taps) =
                crate::nn::capture_at(&model, &data.test).map_err(ExperimentError::Nn)?;
            variant.accuracy = point.accuracy;
            variant.steps = point.step;
            variant.model = model;
            variant.predictions = predictions;
            variant.taps = taps;
            kept.push(variant);
        }
        variants = kept;
    }

    let iid_table = if variants.is_empty() {
        None
    } else {
        let mats: Vec<_> = variants.iter().map(|v| v.predictions.clone()).collect();
        Some(PredictionTable::from_variant_matrices(
            &mats,
            data.test.fingerprint,
        )?)
    };

    let mut ood_tables = Vec::with_capacity(data.ood.len());
    if !variants.is_empty() {
        for (name, ds) in &data.ood {
            let mats: Vec<_> = variants
                .iter()
                .map(|v| v.model.predict_probs(ds))
                .collect::<Result<_, _>>()
                .map_err(ExperimentError::Nn)?;
            ood_tables.push((
                name.clone(),
                PredictionTable::from_variant_matrices(&mats, ds.fingerprint)?,
            ));
        }
    }

    Ok(EnsembleRun {
        strategy,
        variants,
        iid_table,
        ood_tables,
        failed,
        test_fingerprint: data.test.fingerprint,
    })
}

/// Highest accuracy reached by at least `min(5, K)` of the K variants.
fn pseudo_max_level(variants: &[VariantResult]) -> f64 {
    let mut best: Vec<f64> = variants.iter().map(|v| v.accuracy).collect();
    best.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let needed = best.len().min(5);
    best[needed - 1]
}

/// The values a sweep walks over; the non-swept hyperparameter keeps the
/// base strategy's value.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepValues {
    LearningRate(Vec<f64>),
    BatchSize(Vec<usize>),
}

impl SweepValues {
    pub fn regime(&self) -> Regime {
        match self {
            SweepValues::LearningRate(_) => Regime::LearningRate,
            SweepValues::BatchSize(_) => Regime::BatchSize,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepValues::LearningRate(v) => v.len(),
            SweepValues::BatchSize(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.is_empty() {
            return Err(ExperimentError::EmptyValues);
        }
        let distinct = match self {
            SweepValues::LearningRate(v) => {
                let mut s = v.clone();
                s.sort_by(|a, b| a.partial_cmp(b).unwrap());
                s.windows(2).all(|w| w[0] != w[1]) && v.iter().all(|x| x.is_finite() && *x > 0.0)
            }
            SweepValues::BatchSize(v) => {
                let mut s = v.clone();
                s.sort_unstable();
                s.windows(2).all(|w| w[0] != w[1]) && v.iter().all(|&x| x > 0)
            }
        };
        if !distinct {
            return Err(ExperimentError::DuplicateValues);
        }
        Ok(())
    }

    /// The strategy for the idx-th swept value.
    pub fn strategy(&self, base: &TrainingStrategy, idx: usize) -> TrainingStrategy {
        let mut s = base.clone();
        s.regime = self.regime();
        match self {
            SweepValues::LearningRate(v) => s.learning_rate = v[idx],
            SweepValues::BatchSize(v) => s.batch_size = v[idx],
        }
        s
    }
}

/// Runs of one regime sweep; per-value failures are reported without
/// aborting the remaining values.
#[derive(Debug)]
pub struct SweepResult {
    pub runs: Vec<EnsembleRun>,
    pub failures: Vec<(String, String)>,
}

pub fn sweep_regime(
    values: &SweepValues,
    base: &TrainingStrategy,
    spec: &NetworkSpec,
    data: &ExperimentDatasets,
) -> Result<SweepResult, ExperimentError> {
    values.validate()?;
    let mut runs = Vec::with_capacity(values.len());
    let mut failures = Vec::new();
    for idx in 0..values.len() {
        let strategy = values.strategy(base, idx);
        let label = strategy.label();
        match run_strategy(&strategy, spec, data) {
            Ok(run) => runs.push(run),
            Err(e) => failures.push((label, format!("{e}"))),
        }
    }
    Ok(SweepResult { runs, failures })
}

// ── Hypothesis-1 irreducibility report ──────────────────────────────

/// Per-strategy measurements entering the irreducibility comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyp1Strategy {
    pub label: String,
    /// Mean pairwise SVCCA similarity on the low-PM subset (|RM|).
    pub rm_sub: f64,
    pub pm_sub: f64,
    pub pm_full: f64,
    pub e_rm: f64,
    pub e_pm: f64,
}

/// Outcome of the subset-RM vs subset-PM comparison.
///
/// Each series is scaled by its maximum over the included runs (so the
/// scaled series have maximum exactly 1); the errors compare the scaled
/// subset measures against scaled full-set PM, and the verdict holds when
/// subset RM is the better predictor on average.
#[derive(Debug, Clone)]
pub struct Hyp1Report {
    pub tap: String,
    pub subset_size: usize,
    pub per_strategy: Vec<Hyp1Strategy>,
    pub excluded: Vec<(String, String)>,
    /// Scale denominators: `c = 1/scale_rm` etc. Zero means the whole
    /// series was zero and scaling left it at zero.
    pub scale_rm: f64,
    pub scale_pm_full: f64,
    pub scale_pm_sub: f64,
    pub mean_e_rm: f64,
    pub mean_e_pm: f64,
    /// `E[e_rm] < E[e_pm]`: subset RM predicted full-set PM better.
    pub verdict: bool,
    /// Correlation of the raw series (positive rescaling leaves PCC
    /// unchanged, so raw and scaled agree). `None` when undefined.
    pub pcc_rm_sub_vs_pm_full: Option<f64>,
    pub pcc_pm_sub_vs_pm_full: Option<f64>,
}

/// Indices of the `subset_size` samples with the smallest per-sample PM,
/// ties broken toward the lower index. A pure function of the PM values:
/// activations never enter the selection.
pub fn select_low_pm_subset(per_sample_pm: &[f64], subset_size: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..per_sample_pm.len()).collect();
    order.sort_by(|&a, &b| {
        per_sample_pm[a]
            .total_cmp(&per_sample_pm[b])
            .then(a.cmp(&b))
    });
    order.truncate(subset_size);
    order
}

pub fn hypothesis1(
    runs: &[EnsembleRun],
    tap: &str,
    subset_size: usize,
    cfg: &SvccaConfig,
) -> Result<Hyp1Report, ExperimentError> {
    if runs.len() < 2 {
        return Err(ExperimentError::NeedRuns {
            needed: 2,
            found: runs.len(),
        });
    }
    if subset_size < 2 {
        return Err(ExperimentError::SubsetTooSmall {
            requested: subset_size,
        });
    }

    let mut rows: Vec<Hyp1Strategy> = Vec::new();
    let mut excluded: Vec<(String, String)> = Vec::new();
    for run in runs {
        let label = run.label();
        let table = match run.iid() {
            Ok(t) => t,
            Err(_) => {
                excluded.push((label, String::from("no surviving variants")));
                continue;
            }
        };
        if table.variants() < 2 {
            excluded.push((label, String::from("fewer than 2 variants")));
            continue;
        }
        if subset_size > table.samples() {
            return Err(ExperimentError::SubsetTooLarge {
                requested: subset_size,
                samples: table.samples(),
            });
        }
        let pm_values = multiplicity::per_sample_pm(table)?;
        let pm_full = multiplicity::pm(table, None)?;
        if pm_full == 0.0 {
            excluded.push((label, String::from("PM is zero on the full set")));
            continue;
        }
        let subset = select_low_pm_subset(&pm_values, subset_size);
        let pm_sub = multiplicity::pm(table, Some(&subset))?;

        let taps = run.tap_matrices(tap)?;
        let restricted: Vec<ActivationMatrix> = taps
            .into_iter()
            .map(|m| m.select_samples(&subset))
            .collect::<Result<_, _>>()?;
        let rm_sub = multiplicity::mean_pairwise_svcca(&restricted, cfg)?;

        rows.push(Hyp1Strategy {
            label,
            rm_sub,
            pm_sub,
            pm_full,
            e_rm: 0.0,
            e_pm: 0.0,
        });
    }

    if rows.len() < 2 {
        return Err(ExperimentError::NoUsableRuns {
            reason: format!(
                "{} of {} runs usable after exclusions",
                rows.len(),
                runs.len()
            ),
        });
    }

    let max_of = |f: fn(&Hyp1Strategy) -> f64| rows.iter().map(f).fold(0.0f64, f64::max);
    let scale_rm = max_of(|r| r.rm_sub);
    let scale_pm_full = max_of(|r| r.pm_full);
    let scale_pm_sub = max_of(|r| r.pm_sub);
    let scaled = |v: f64, scale: f64| if scale > 0.0 { v / scale } else { 0.0 };

    for row in &mut rows {
        row.e_rm = (scaled(row.rm_sub, scale_rm) - scaled(row.pm_full, scale_pm_full)).abs();
        row.e_pm = (scaled(row.pm_sub, scale_pm_sub) - scaled(row.pm_full, scale_pm_full)).abs();
    }
    let mean_e_rm = rows.iter().map(|r| r.e_rm).sum::<f64>() / rows.len() as f64;
    let mean_e_pm = rows.iter().map(|r| r.e_pm).sum::<f64>() / rows.len() as f64;

    let rm_series: Vec<f64> = rows.iter().map(|r| r.rm_sub).collect();
    let pm_sub_series: Vec<f64> = rows.iter().map(|r| r.pm_sub).collect();
    let pm_full_series: Vec<f64> = rows.iter().map(|r| r.pm_full).collect();

    Ok(Hyp1Report {
        tap: tap.to_string(),
        subset_size,
        excluded,
        scale_rm,
        scale_pm_full,
        scale_pm_sub,
        mean_e_rm,
        mean_e_pm,
        verdict: mean_e_rm < mean_e_pm,
        pcc_rm_sub_vs_pm_full: pearson(&rm_series, &pm_full_series).ok(),
        pcc_pm_sub_vs_pm_full: pearson(&pm_sub_series, &pm_full_series).ok(),
        per_strategy: rows,
    })
}

// ── Correlation report ──────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    pub transform: String,
    /// Pearson correlation of per-strategy SVCCA vs PM on this set;
    /// `None` marks an undefined (constant-series) entry.
    pub pcc: Option<f64>,
}

/// PCC table between per-strategy SVCCA similarity at one tap and PM on
/// the i.i.d. and OOD sets, plus the SVCCA spread across strategies.
#[derive(Debug, Clone)]
pub struct CorrelationReport {
    pub tap: String,
    pub svcca_per_strategy: Vec<(String, f64)>,
    pub rows: Vec<CorrelationRow>,
    /// max - min SVCCA across strategies.
    pub delta_svcca: f64,
}

pub fn correlation_report(
    runs: &[EnsembleRun],
    tap: &str,
    transforms: Option<&[String]>,
    cfg: &SvccaConfig,
) -> Result<CorrelationReport, ExperimentError> {
    if runs.len() < 3 {
        return Err(ExperimentError::NeedRuns {
            needed: 3,
            found: runs.len(),
        });
    }

    let mut svcca_values = Vec::with_capacity(runs.len());
    let mut svcca_per_strategy = Vec::with_capacity(runs.len());
    for run in runs {
        let value = run.mean_svcca(tap, cfg)?;
        svcca_values.push(value);
        svcca_per_strategy.push((run.label(), value));
    }

    let names: Vec<String> = match transforms {
        Some(list) => list.to_vec(),
        None => {
            let mut names: Vec<String> = alloc::vec![String::from("iid")];
            names.extend(runs[0].ood_tables.iter().map(|(n, _)| n.clone()));
            names
        }
    };

    let mut rows = Vec::with_capacity(names.len());
    for name in &names {
        let mut pm_series = Vec::with_capacity(runs.len());
        for run in runs {
            let table = if name == "iid" {
                run.iid()?
            } else {
                run.ood(name).ok_or(ExperimentError::TransformMissing {
                    name: name.clone(),
                    label: run.label(),
                })?
            };
            pm_series.push(multiplicity::pm(table, None)?);
        }
        let pcc = match pearson(&svcca_values, &pm_series) {
            Ok(v) => Some(v),
            Err(LinalgError::ConstantInput { .. }) => None,
            Err(e) => return Err(ExperimentError::Linalg(e)),
        };
        rows.push(CorrelationRow {
            transform: name.clone(),
            pcc,
        });
    }

    let max = svcca_values
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let min = svcca_values.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    Ok(CorrelationReport {
        tap: tap.to_string(),
        svcca_per_strategy,
        rows,
        delta_svcca: max - min,
    })
}

// ── Confabulation report ────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    /// All variants of all runs pooled into one ensemble.
    Pooled,
    /// One listing per strategy.
    PerStrategy,
}

#[derive(Debug, Clone)]
pub struct ConfabGroup {
    pub label: String,
    /// Top entries, highest diversity first.
    pub entries: Vec<ConfabulationEntry>,
    /// Per-sample PM for the listed entries (the tie-break key).
    pub entry_pm: Vec<f64>,
    pub truncated: bool,
    /// All scores were zero: the ensembles agree everywhere.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct ConfabulationReport {
    pub top_n: usize,
    pub groups: Vec<ConfabGroup>,
}

pub fn confabulation_report(
    runs: &[EnsembleRun],
    pool: PoolMode,
    top_n: usize,
) -> Result<ConfabulationReport, ExperimentError> {
    if runs.is_empty() {
        return Err(ExperimentError::NeedRuns {
            needed: 1,
            found: 0,
        });
    }
    let mut groups = Vec::new();
    match pool {
        PoolMode::Pooled => {
            let tables: Vec<&PredictionTable> =
                runs.iter().map(|r| r.iid()).collect::<Result<_, _>>()?;
            let merged = PredictionTable::merge(&tables)?;
            groups.push(confab_group(String::from("pooled"), &merged, top_n)?);
        }
        PoolMode::PerStrategy => {
            for run in runs {
                groups.push(confab_group(run.label(), run.iid()?, top_n)?);
            }
        }
    }
    Ok(ConfabulationReport { top_n, groups })
}

fn confab_group(
    label: String,
    table: &PredictionTable,
    top_n: usize,
) -> Result<ConfabGroup, ExperimentError> {
    let entries = multiplicity::confabulation_scores(table)?;
    let pm_values = multiplicity::per_sample_pm(table)?;
    let top = multiplicity::top_confabulators(&entries, &pm_values, top_n)?;
    let degenerate = entries.iter().all(|e| e.score == 0.0);
    let picked: Vec<ConfabulationEntry> = top.indices.iter().map(|&i| entries[i].clone()).collect();
    let entry_pm: Vec<f64> = top.indices.iter().map(|&i| pm_values[i]).collect();
    Ok(ConfabGroup {
        label,
        entries: picked,
        entry_pm,
        truncated: top.truncated,
        degenerate,
    })
}

// ── Presets ─────────────────────────────────────────────────────────

/// Named experiment scales. `Paper` is the full published grid (7 values
/// per regime, 10 seeds); `Desk` shrinks it to 3 learning rates and 3
/// seeds so the whole pipeline runs on a laptop in minutes.
pub mod presets {
    use alloc::vec;
    use alloc::vec::Vec;

    pub fn paper_learning_rates() -> Vec<f64> {
        vec![0.003, 0.002, 0.001, 0.0003, 0.0001, 0.00003, 0.00001]
    }

    pub fn paper_batch_sizes() -> Vec<usize> {
        vec![8, 16, 32, 64, 128, 256, 512]
    }

    /// Fixed batch size while sweeping learning rate.
    pub const LR_REGIME_BATCH_SIZE: usize = 64;
    /// Fixed learning rate while sweeping batch size.
    pub const BS_REGIME_LEARNING_RATE: f64 = 0.0001;

    pub fn paper_seeds() -> Vec<u64> {
        (1..=10).collect()
    }

    pub fn desk_learning_rates() -> Vec<f64> {
        vec![0.003, 0.0003, 0.00003]
    }

    pub fn desk_seeds() -> Vec<u64> {
        vec![1, 2, 3]
    }
}

// ── Errors ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentError {
    DuplicateSeeds,
    EmptyValues,
    DuplicateValues,
    NeedRuns { needed: usize, found: usize },
    NoUsableRuns { reason: String },
    TapMissing { tap: String, seed: u64 },
    TransformMissing { name: String, label: String },
    SubsetTooLarge { requested: usize, samples: usize },
    SubsetTooSmall { requested: usize },
    DatasetMismatch { detail: String },
    Nn(NnError),
    Multiplicity(MultiplicityError),
    Svcca(SvccaError),
    Linalg(LinalgError),
    Data(DataError),
}

impl From<MultiplicityError> for ExperimentError {
    fn from(e: MultiplicityError) -> Self {
        ExperimentError::Multiplicity(e)
    }
}

impl From<SvccaError> for ExperimentError {
    fn from(e: SvccaError) -> Self {
        ExperimentError::Svcca(e)
    }
}

impl From<DataError> for ExperimentError {
    fn from(e: DataError) -> Self {
        ExperimentError::Data(e)
    }
}

impl From<LinalgError> for ExperimentError {
    fn from(e: LinalgError) -> Self {
        ExperimentError::Linalg(e)
    }
}

impl fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExperimentError::DuplicateSeeds => write!(f, "strategy seeds must be distinct"),
            ExperimentError::EmptyValues => write!(f, "sweep value list is empty"),
            ExperimentError::DuplicateValues => {
                write!(f, "sweep values must be distinct and positive")
            }
            ExperimentError::NeedRuns { needed, found } => {
                write!(f, "need at least {needed} runs, got {found}")
            }
            ExperimentError::NoUsableRuns { reason } => write!(f, "no usable runs: {reason}"),
            ExperimentError::TapMissing { tap, seed } => {
                write!(f, "variant (seed {seed}) carries no tap '{tap}'")
            }
            ExperimentError::TransformMissing { name, label } => {
                write!(f, "run '{label}' has no OOD table '{name}'")
            }
            ExperimentError::SubsetTooLarge { requested, samples } => {
                write!(f, "subset size {requested} exceeds sample count {samples}")
            }
            ExperimentError::SubsetTooSmall { requested } => {
                write!(f, "subset size {requested} is below the minimum of 2")
            }
            ExperimentError::DatasetMismatch { detail } => write!(f, "{detail}"),
            ExperimentError::Nn(e) => write!(f, "{e}"),
            ExperimentError::Multiplicity(e) => write!(f, "{e}"),
            ExperimentError::Svcca(e) => write!(f, "{e}"),
            ExperimentError::Linalg(e) => write!(f, "{e}"),
            ExperimentError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ExperimentError {}
