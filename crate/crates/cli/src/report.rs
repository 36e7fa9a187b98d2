//! Report emission: one CSV row per strategy (regime value, accuracy,
//! SVCCA per tap, PM on the i.i.d. and OOD sets) plus a JSON summary
//! carrying the PCC table, the irreducibility verdict, and the top
//! confabulators. Output is deterministic: fixed column order, fixed file
//! names, and numbers serialized with 9 significant digits.

use std::fs;
use std::path::{Path, PathBuf};

use rashomon_core::experiments::{
    confabulation_report, correlation_report, hypothesis1, ConfabulationReport, CorrelationReport,
    EnsembleRun, ExperimentError, Hyp1Report, PoolMode,
};
use rashomon_core::linalg::{mean, sample_std};
use rashomon_core::multiplicity::pm;
use rashomon_core::nn::Regime;
use rashomon_core::SvccaConfig;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
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
    Experiment(#[from] ExperimentError),
}

/// One CSV row.
#[derive(Debug, Clone)]
pub struct StrategyRow {
    pub label: String,
    pub regime: String,
    pub value: String,
    pub variants: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub svcca: Vec<f64>,
    pub pm_iid: f64,
    pub pm_ood: Vec<f64>,
}

/// Everything `emit_reports` serializes.
#[derive(Debug)]
pub struct ReportBundle {
    pub svcca_cfg: SvccaConfig,
    pub taps: Vec<String>,
    pub ood_names: Vec<String>,
    pub rows: Vec<StrategyRow>,
    pub pcc: Vec<CorrelationReport>,
    pub hyp1: Option<Hyp1Report>,
    pub confabulation: Option<ConfabulationReport>,
}

/// Default tap for the PCC and irreducibility summaries.
pub const DEFAULT_REPORT_TAP: &str = "fc1";
pub const DEFAULT_TOP_N: usize = 16;

impl ReportBundle {
    /// Assembles the full bundle from completed runs. The PCC table needs
    /// three runs and the irreducibility report two; with fewer runs those
    /// sections are omitted rather than failing the bundle.
    pub fn from_runs(
        runs: &[EnsembleRun],
        taps: &[String],
        ood_names: &[String],
        cfg: &SvccaConfig,
        subset_size: Option<usize>,
    ) -> Result<ReportBundle, ReportError> {
        let mut rows = Vec::with_capacity(runs.len());
        for run in runs {
            let accuracies = run.accuracies();
            let mut svcca = Vec::with_capacity(taps.len());
            for tap in taps {
                svcca.push(run.mean_svcca(tap, cfg)?);
            }
            let table = run.iid()?;
            let pm_iid = pm(table, None).map_err(ExperimentError::from)?;
            let mut pm_ood = Vec::with_capacity(ood_names.len());
            for name in ood_names {
                let ood = run
                    .ood(name)
                    .ok_or_else(|| ExperimentError::TransformMissing {
                        name: name.clone(),
                        label: run.label(),
                    })?;
                pm_ood.push(pm(ood, None).map_err(ExperimentError::from)?);
            }
            rows.push(StrategyRow {
                label: run.label(),
                regime: run.strategy.regime.name().to_string(),
                value: regime_value(run),
                variants: run.variants.len(),
                accuracy_mean: mean(&accuracies),
                accuracy_std: sample_std(&accuracies),
                svcca,
                pm_iid,
                pm_ood,
            });
        }

        let pcc = if runs.len() >= 3 {
            taps.iter()
                .map(|tap| correlation_report(runs, tap, None, cfg))
                .collect::<Result<Vec<_>, _>>()?
        } else {
            Vec::new()
        };

        let hyp1 = if runs.len() >= 2 {
            let samples = runs
                .iter()
                .filter_map(|r| r.iid_table.as_ref().map(|t| t.samples()))
                .min()
                .unwrap_or(0);
            let size = subset_size.unwrap_or_else(|| (samples / 4).clamp(2, 1000));
            match hypothesis1(runs, DEFAULT_REPORT_TAP, size, cfg) {
                Ok(report) => Some(report),
                // Degenerate data (all runs excluded) is not a bundle error.
                Err(ExperimentError::NoUsableRuns { .. }) => None,
                Err(e) => return Err(e.into()),
            }
        } else {
            None
        };

        let confabulation = if runs.is_empty() {
            None
        } else {
            Some(confabulation_report(runs, PoolMode::Pooled, DEFAULT_TOP_N)?)
        };

        Ok(ReportBundle {
            svcca_cfg: *cfg,
            taps: taps.to_vec(),
            ood_names: ood_names.to_vec(),
            rows,
            pcc,
            hyp1,
            confabulation,
        })
    }
}

fn regime_value(run: &EnsembleRun) -> String {
    match run.strategy.regime {
        Regime::LearningRate => fmt_sig9(run.strategy.learning_rate),
        Regime::BatchSize => run.strategy.batch_size.to_string(),
    }
}

/// Writes `report.csv` and `summary.json`; returns the emitted paths.
/// Identical bundles produce identical bytes.
pub fn emit_reports(bundle: &ReportBundle, out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let csv_path = out_dir.join("report.csv");
    fs::write(&csv_path, render_csv(bundle)).map_err(|source| ReportError::Io {
        path: csv_path.clone(),
        source,
    })?;

    let json_path = out_dir.join("summary.json");
    let summary = render_summary(bundle);
    let text = serde_json::to_string_pretty(&summary).map_err(|source| ReportError::Json {
        path: json_path.clone(),
        source,
    })?;
    fs::write(&json_path, text + "\n").map_err(|source| ReportError::Io {
        path: json_path.clone(),
        source,
    })?;
    Ok(vec![csv_path, json_path])
}

/// CSV schema (see `docs/reports.md`):
/// `strategy,regime,value,variants,accuracy_mean,accuracy_std,
///  svcca_<tap>...,pm_iid,pm_<transform>...`
pub fn render_csv(bundle: &ReportBundle) -> String {
    let mut header = vec![
        "strategy".to_string(),
        "regime".to_string(),
        "value".to_string(),
        "variants".to_string(),
        "accuracy_mean".to_string(),
        "accuracy_std".to_string(),
    ];
    header.extend(bundle.taps.iter().map(|t| format!("svcca_{t}")));
    header.push("pm_iid".to_string());
    header.extend(bundle.ood_names.iter().map(|n| format!("pm_{n}")));

    let mut out = header.join(",") + "\n";
    for row in &bundle.rows {
        let mut fields = vec![
            row.label.clone(),
            row.regime.clone(),
            row.value.clone(),
            row.variants.to_string(),
            fmt_sig9(row.accuracy_mean),
            fmt_sig9(row.accuracy_std),
        ];
        fields.extend(row.svcca.iter().map(|&v| fmt_sig9(v)));
        fields.push(fmt_sig9(row.pm_iid));
        fields.extend(row.pm_ood.iter().map(|&v| fmt_sig9(v)));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

// ── JSON summary ────────────────────────────────────────────────────

#[derive(Serialize)]
struct Summary {
    svcca: SvccaSummary,
    strategies: Vec<StrategySummary>,
    pcc: Vec<PccSummary>,
    hyp1: Option<Hyp1Summary>,
    confabulation: Option<ConfabSummary>,
}

#[derive(Serialize)]
struct SvccaSummary {
    variance_fraction: f64,
    top_t: usize,
}

#[derive(Serialize)]
struct StrategySummary {
    strategy: String,
    regime: String,
    value: String,
    variants: usize,
    accuracy_mean: f64,
    accuracy_std: f64,
    svcca: Vec<TapValue>,
    pm_iid: f64,
    pm_ood: Vec<NamedValue>,
}

#[derive(Serialize)]
struct TapValue {
    tap: String,
    value: f64,
}

#[derive(Serialize)]
struct NamedValue {
    name: String,
    value: f64,
}

#[derive(Serialize)]
struct PccSummary {
    tap: String,
    delta_svcca: f64,
    rows: Vec<PccRow>,
    svcca_per_strategy: Vec<NamedValue>,
}

#[derive(Serialize)]
struct PccRow {
    transform: String,
    pcc: Option<f64>,
}

#[derive(Serialize)]
struct Hyp1Summary {
    tap: String,
    subset_size: usize,
    mean_e_rm: f64,
    mean_e_pm: f64,
    verdict: bool,
    scale_rm: f64,
    scale_pm_full: f64,
    scale_pm_sub: f64,
    pcc_rm_sub_vs_pm_full: Option<f64>,
    pcc_pm_sub_vs_pm_full: Option<f64>,
    per_strategy: Vec<Hyp1Row>,
    excluded: Vec<ExcludedRun>,
}

#[derive(Serialize)]
struct Hyp1Row {
    strategy: String,
    rm_sub: f64,
    pm_sub: f64,
    pm_full: f64,
    e_rm: f64,
    e_pm: f64,
}

#[derive(Serialize)]
struct ExcludedRun {
    strategy: String,
    reason: String,
}

#[derive(Serialize)]
struct ConfabSummary {
    top_n: usize,
    groups: Vec<ConfabGroupSummary>,
}

#[derive(Serialize)]
struct ConfabGroupSummary {
    label: String,
    degenerate: bool,
    truncated: bool,
    entries: Vec<ConfabEntrySummary>,
}

#[derive(Serialize)]
struct ConfabEntrySummary {
    sample_index: usize,
    score: f64,
    per_sample_pm: f64,
    distinct_labels: usize,
    histogram: Vec<usize>,
}

fn render_summary(bundle: &ReportBundle) -> Summary {
    Summary {
        svcca: SvccaSummary {
            variance_fraction: round_sig9(bundle.svcca_cfg.variance_fraction),
            top_t: bundle.svcca_cfg.top_t,
        },
        strategies: bundle
            .rows
            .iter()
            .map(|row| StrategySummary {
                strategy: row.label.clone(),
                regime: row.regime.clone(),
                value: row.value.clone(),
                variants: row.variants,
                accuracy_mean: round_sig9(row.accuracy_mean),
                accuracy_std: round_sig9(row.accuracy_std),
                svcca: bundle
                    .taps
                    .iter()
                    .zip(&row.svcca)
                    .map(|(tap, &value)| TapValue {
                        tap: tap.clone(),
                        value: round_sig9(value),
                    })
                    .collect(),
                pm_iid: round_sig9(row.pm_iid),
                pm_ood: bundle
                    .ood_names
                    .iter()
                    .zip(&row.pm_ood)
                    .map(|(name, &value)| NamedValue {
                        name: name.clone(),
                        value: round_sig9(value),
                    })
                    .collect(),
            })
            .collect(),
        pcc: bundle
            .pcc
            .iter()
            .map(|report| PccSummary {
                tap: report.tap.clone(),
                delta_svcca: round_sig9(report.delta_svcca),
                rows: report
                    .rows
                    .iter()
                    .map(|r| PccRow {
                        transform: r.transform.clone(),
                        pcc: r.pcc.map(round_sig9),
                    })
                    .collect(),
                svcca_per_strategy: report
                    .svcca_per_strategy
                    .iter()
                    .map(|(name, value)| NamedValue {
                        name: name.clone(),
                        value: round_sig9(*value),
                    })
                    .collect(),
            })
            .collect(),
        hyp1: bundle.hyp1.as_ref().map(|h| Hyp1Summary {
            tap: h.tap.clone(),
            subset_size: h.subset_size,
            mean_e_rm: round_sig9(h.mean_e_rm),
            mean_e_pm: round_sig9(h.mean_e_pm),
            verdict: h.verdict,
            scale_rm: round_sig9(h.scale_rm),
            scale_pm_full: round_sig9(h.scale_pm_full),
            scale_pm_sub: round_sig9(h.scale_pm_sub),
            pcc_rm_sub_vs_pm_full: h.pcc_rm_sub_vs_pm_full.map(round_sig9),
            pcc_pm_sub_vs_pm_full: h.pcc_pm_sub_vs_pm_full.map(round_sig9),
            per_strategy: h
                .per_strategy
                .iter()
                .map(|r| Hyp1Row {
                    strategy: r.label.clone(),
                    rm_sub: round_sig9(r.rm_sub),
                    pm_sub: round_sig9(r.pm_sub),
                    pm_full: round_sig9(r.pm_full),
                    e_rm: round_sig9(r.e_rm),
                    e_pm: round_sig9(r.e_pm),
                })
                .collect(),
            excluded: h
                .excluded
                .iter()
                .map(|(strategy, reason)| ExcludedRun {
                    strategy: strategy.clone(),
                    reason: reason.clone(),
                })
                .collect(),
        }),
        confabulation: bundle.confabulation.as_ref().map(|c| ConfabSummary {
            top_n: c.top_n,
            groups: c
                .groups
                .iter()
                .map(|g| ConfabGroupSummary {
                    label: g.label.clone(),
                    degenerate: g.degenerate,
                    truncated: g.truncated,
                    entries: g
                        .entries
                        .iter()
                        .zip(&g.entry_pm)
                        .map(|(e, &pm)| ConfabEntrySummary {
                            sample_index: e.sample_index,
                            score: round_sig9(e.score),
                            per_sample_pm: round_sig9(pm),
                            distinct_labels: e.distinct_labels(),
                            histogram: e.label_histogram.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }),
    }
}

/// Formats with 9 significant digits, plain decimal for moderate
/// exponents and scientific notation otherwise.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..9).contains(&exp) {
        let places = (8 - exp).max(0) as usize;
        format!("{x:.places$}")
    } else {
        format!("{x:.8e}")
    }
}

/// Rounds to 9 significant digits (for JSON number fields).
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let exp = x.abs().log10().floor() as i32;
    let factor = 10f64.powi(8 - exp);
    (x * factor).round() / factor
}
