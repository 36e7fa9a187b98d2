//! Run-directory persistence. One directory per strategy, one per seed:
//!
//! ```text
//! out/
//!   run.json                  experiment metadata (network, svcca, fingerprints)
//!   lr-0.003/
//!     strategy.json           hyperparameters, seeds, failures
//!     seed-1/
//!       meta.json             accuracy, steps, evaluation history
//!       checkpoint.mtx1       1 x P flattened parameters
//!       predictions.mtx1      N x C test-set probabilities
//!       tap-cnn.mtx1          M x N activations per tap point
//!       tap-fc1.mtx1
//!       ood-x-flip.mtx1       N x C probabilities per OOD transform
//! ```
//!
//! Everything re-loadable: the metric subcommands (`pm`, `rm`, `confab`,
//! `hyp1`, `report`) operate on these files alone.

use std::fs;
use std::path::{Path, PathBuf};

use rashomon_core::data::fingerprint_hex;
use rashomon_core::experiments::EnsembleRun;
use rashomon_core::multiplicity::{PredictionTable, RiskBand};
use rashomon_core::nn::{
    EvalPoint, Model, NetworkSpec, Regime, StoppingPolicy, TrainingStrategy, VariantResult,
};
use rashomon_core::{ActivationMatrix, Matrix, SvccaConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mtx::{read_matrix, write_matrix, MtxError};

#[derive(Debug, Error)]
pub enum RunDirError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Mtx(#[from] MtxError),
    #[error("run directory: {0}")]
    Invalid(String),
    #[error("core: {0}")]
    Core(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunDirError + '_ {
    move |source| RunDirError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkMeta {
    pub preset: String,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
}

impl NetworkMeta {
    pub fn build(&self) -> Result<NetworkSpec, RunDirError> {
        let spec = match self.preset.as_str() {
            "desk" => NetworkSpec::desk(self.channels, self.height, self.width, self.classes),
            "full" => NetworkSpec::full(self.channels, self.height, self.width, self.classes),
            other => {
                return Err(RunDirError::Invalid(format!(
                    "unknown network preset '{other}'"
                )))
            }
        };
        spec.map_err(|e| RunDirError::Core(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub version: u32,
    pub network: NetworkMeta,
    pub variance_fraction: f64,
    pub top_t: usize,
    pub test_fingerprint: String,
    pub test_samples: usize,
    pub classes: usize,
    pub taps: Vec<String>,
    pub ood: Vec<OodMeta>,
    pub strategies: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OodMeta {
    pub name: String,
    pub fingerprint: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoppingMeta {
    pub mode: String,
    pub target: Option<f64>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyMeta {
    pub label: String,
    pub regime: String,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    pub stopping: StoppingMeta,
    pub max_epochs: usize,
    pub failed: Vec<FailureMeta>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailureMeta {
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantMeta {
    pub seed: u64,
    pub accuracy: f64,
    pub steps: usize,
    pub epochs: usize,
    pub history: Vec<(usize, f64)>,
}

impl RunMeta {
    pub fn svcca_config(&self) -> SvccaConfig {
        SvccaConfig {
            variance_fraction: self.variance_fraction,
            top_t: self.top_t,
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunDirError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| RunDirError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, RunDirError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| RunDirError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_fingerprint(hex: &str) -> Result<u64, RunDirError> {
    u64::from_str_radix(hex, 16)
        .map_err(|_| RunDirError::Invalid(format!("bad fingerprint '{hex}'")))
}

fn stopping_meta(policy: &StoppingPolicy) -> StoppingMeta {
    match policy {
        StoppingPolicy::RiskBand(band) => StoppingMeta {
            mode: "risk-band".into(),
            target: Some(band.target_accuracy),
            epsilon: Some(band.epsilon),
        },
        StoppingPolicy::PseudoMax => StoppingMeta {
            mode: "pseudo-max".into(),
            target: None,
            epsilon: None,
        },
    }
}

fn stopping_from_meta(meta: &StoppingMeta) -> Result<StoppingPolicy, RunDirError> {
    match meta.mode.as_str() {
        "pseudo-max" => Ok(StoppingPolicy::PseudoMax),
        "risk-band" => {
            let (target, epsilon) = (
                meta.target
                    .ok_or_else(|| RunDirError::Invalid("risk band missing target".into()))?,
                meta.epsilon
                    .ok_or_else(|| RunDirError::Invalid("risk band missing epsilon".into()))?,
            );
            Ok(StoppingPolicy::RiskBand(
                RiskBand::new(target, epsilon).map_err(|e| RunDirError::Core(e.to_string()))?,
            ))
        }
        other => Err(RunDirError::Invalid(format!(
            "unknown stopping mode '{other}'"
        ))),
    }
}

fn regime_name(regime: Regime) -> String {
    regime.name().to_string()
}

fn regime_from_name(name: &str) -> Result<Regime, RunDirError> {
    match name {
        "learning-rate" => Ok(Regime::LearningRate),
        "batch-size" => Ok(Regime::BatchSize),
        other => Err(RunDirError::Invalid(format!("unknown regime '{other}'"))),
    }
}

/// Writes `run.json` plus one directory per strategy.
pub fn save_runs(
    out: &Path,
    runs: &[EnsembleRun],
    network: &NetworkMeta,
    cfg: &SvccaConfig,
    test_samples: usize,
    taps: &[String],
    ood_fingerprints: &[(String, u64)],
) -> Result<(), RunDirError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let test_fingerprint = runs
        .first()
        .map(|r| r.test_fingerprint)
        .ok_or_else(|| RunDirError::Invalid("no runs to save".into()))?;

    let meta = RunMeta {
        version: 1,
        network: network.clone(),
        variance_fraction: cfg.variance_fraction,
        top_t: cfg.top_t,
        test_fingerprint: fingerprint_hex(test_fingerprint),
        test_samples,
        classes: network.classes,
        taps: taps.to_vec(),
        ood: ood_fingerprints
            .iter()
            .map(|(name, fp)| OodMeta {
                name: name.clone(),
                fingerprint: fingerprint_hex(*fp),
            })
            .collect(),
        strategies: runs.iter().map(|r| r.label()).collect(),
    };
    write_json(&out.join("run.json"), &meta)?;

    for run in runs {
        save_strategy(out, run)?;
    }
    Ok(())
}

fn save_strategy(out: &Path, run: &EnsembleRun) -> Result<(), RunDirError> {
    let dir = out.join(run.label());
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let meta = StrategyMeta {
        label: run.label(),
        regime: regime_name(run.strategy.regime),
        learning_rate: run.strategy.learning_rate,
        batch_size: run.strategy.batch_size,
        seeds: run.strategy.seeds.clone(),
        stopping: stopping_meta(&run.strategy.stopping),
        max_epochs: run.strategy.max_epochs,
        failed: run
            .failed
            .iter()
            .map(|(seed, reason)| FailureMeta {
                seed: *seed,
                reason: reason.clone(),
            })
            .collect(),
    };
    write_json(&dir.join("strategy.json"), &meta)?;

    for variant in &run.variants {
        let vdir = dir.join(format!("seed-{}", variant.seed));
        fs::create_dir_all(&vdir).map_err(io_err(&vdir))?;
        write_json(
            &vdir.join("meta.json"),
            &VariantMeta {
                seed: variant.seed,
                accuracy: variant.accuracy,
                steps: variant.steps,
                epochs: variant.epochs,
                history: variant
                    .history
                    .iter()
                    .map(|p| (p.step, p.accuracy))
                    .collect(),
            },
        )?;
        let flat = variant.model.to_flat();
        let checkpoint =
            Matrix::new(1, flat.len(), flat).map_err(|e| RunDirError::Core(e.to_string()))?;
        write_matrix(&checkpoint, &vdir.join("checkpoint.mtx1"))?;
        write_matrix(&variant.predictions, &vdir.join("predictions.mtx1"))?;
        for (name, tap) in &variant.taps {
            write_matrix(&tap.values, &vdir.join(format!("tap-{name}.mtx1")))?;
        }
        for (name, table) in &run.ood_tables {
            let k = run
                .variants
                .iter()
                .position(|v| v.seed == variant.seed)
                .unwrap();
            let probs = table_slice(table, k)?;
            write_matrix(&probs, &vdir.join(format!("ood-{name}.mtx1")))?;
        }
    }
    Ok(())
}

fn table_slice(table: &PredictionTable, variant: usize) -> Result<Matrix, RunDirError> {
    let mut data = Vec::with_capacity(table.samples() * table.classes());
    for n in 0..table.samples() {
        for c in 0..table.classes() {
            data.push(table.prob(variant, n, c));
        }
    }
    Matrix::new(table.samples(), table.classes(), data)
        .map_err(|e| RunDirError::Core(e.to_string()))
}

pub struct LoadedRuns {
    pub meta: RunMeta,
    pub runs: Vec<EnsembleRun>,
}

/// Reads a run directory back into memory.
pub fn load_runs(dir: &Path) -> Result<LoadedRuns, RunDirError> {
    let meta: RunMeta = read_json(&dir.join("run.json"))?;
    let spec = meta.network.build()?;
    let test_fp = parse_fingerprint(&meta.test_fingerprint)?;

    let mut runs = Vec::with_capacity(meta.strategies.len());
    for label in &meta.strategies {
        let sdir = dir.join(label);
        let smeta: StrategyMeta = read_json(&sdir.join("strategy.json"))?;
        let strategy = TrainingStrategy {
            regime: regime_from_name(&smeta.regime)?,
            learning_rate: smeta.learning_rate,
            batch_size: smeta.batch_size,
            seeds: smeta.seeds.clone(),
            stopping: stopping_from_meta(&smeta.stopping)?,
            max_epochs: smeta.max_epochs,
        };

        let failed: Vec<(u64, String)> = smeta
            .failed
            .iter()
            .map(|f| (f.seed, f.reason.clone()))
            .collect();
        let failed_seeds: Vec<u64> = failed.iter().map(|(s, _)| *s).collect();

        let mut variants = Vec::new();
        for &seed in smeta.seeds.iter().filter(|s| !failed_seeds.contains(s)) {
            let vdir = sdir.join(format!("seed-{seed}"));
            let vmeta: VariantMeta = read_json(&vdir.join("meta.json"))?;
            let checkpoint = read_matrix(&vdir.join("checkpoint.mtx1"))?;
            let model = Model::from_flat(&spec, checkpoint.data())
                .map_err(|e| RunDirError::Core(e.to_string()))?;
            let predictions = read_matrix(&vdir.join("predictions.mtx1"))?;
            let taps = meta
                .taps
                .iter()
                .map(|name| {
                    let values = read_matrix(&vdir.join(format!("tap-{name}.mtx1")))?;
                    let act = ActivationMatrix::new(name.clone(), values, test_fp)
                        .map_err(|e| RunDirError::Core(e.to_string()))?;
                    Ok((name.clone(), act))
                })
                .collect::<Result<Vec<_>, RunDirError>>()?;
            variants.push(VariantResult {
                seed,
                accuracy: vmeta.accuracy,
                steps: vmeta.steps,
                epochs: vmeta.epochs,
                model,
                predictions,
                taps,
                history: vmeta
                    .history
                    .iter()
                    .map(|&(step, accuracy)| EvalPoint { step, accuracy })
                    .collect(),
                records: Vec::new(),
            });
        }

        let iid_table = if variants.is_empty() {
            None
        } else {
            let mats: Vec<_> = variants.iter().map(|v| v.predictions.clone()).collect();
            Some(
                PredictionTable::from_variant_matrices(&mats, test_fp)
                    .map_err(|e| RunDirError::Core(e.to_string()))?,
            )
        };

        let mut ood_tables = Vec::new();
        if !variants.is_empty() {
            for ood in &meta.ood {
                let fp = parse_fingerprint(&ood.fingerprint)?;
                let mats: Vec<Matrix> = variants
                    .iter()
                    .map(|v| {
                        read_matrix(
                            &sdir
                                .join(format!("seed-{}", v.seed))
                                .join(format!("ood-{}.mtx1", ood.name)),
                        )
                    })
                    .collect::<Result<_, _>>()?;
                ood_tables.push((
                    ood.name.clone(),
                    PredictionTable::from_variant_matrices(&mats, fp)
                        .map_err(|e| RunDirError::Core(e.to_string()))?,
                ));
            }
        }

        runs.push(EnsembleRun {
            strategy,
            variants,
            iid_table,
            ood_tables,
            failed,
            test_fingerprint: test_fp,
        });
    }
    Ok(LoadedRuns { meta, runs })
}
