//! End-to-end pass through the public API: synthesize data, train a small
//! ensemble, and push the results through every metric.

use rashomon_core::data::{generate_synthetic, Split, SyntheticSpec};
use rashomon_core::experiments::{
    confabulation_report, hypothesis1, run_strategy, select_low_pm_subset, ExperimentDatasets,
    PoolMode,
};
use rashomon_core::multiplicity::{
    confabulation_scores, per_sample_pm, pm, rm_ensemble, top_confabulators,
};
use rashomon_core::nn::{NetworkSpec, Regime, StoppingPolicy, TrainingStrategy};
use rashomon_core::ood::{apply_ood_transform, OodTransform};
use rashomon_core::SvccaConfig;

fn datasets() -> ExperimentDatasets {
    let spec = SyntheticSpec {
        classes: 3,
        samples: 300,
        image_size: 10,
        noise: 1.0,
    };
    let train = generate_synthetic(&spec, 51, Split::Train).unwrap();
    let test = generate_synthetic(
        &SyntheticSpec {
            samples: 120,
            ..spec
        },
        52,
        Split::Test,
    )
    .unwrap();
    let flipped = apply_ood_transform(&test, &OodTransform::XFlip { prob: 0.9 }, 9).unwrap();
    ExperimentDatasets {
        train,
        test,
        ood: vec![("x-flip".into(), flipped)],
    }
}

#[test]
fn trained_ensemble_supports_all_metrics() {
    let data = datasets();
    let net = NetworkSpec::desk(1, 10, 10, 3).unwrap();
    let strategy = TrainingStrategy {
        regime: Regime::LearningRate,
        learning_rate: 0.002,
        batch_size: 30,
        seeds: vec![1, 2, 3],
        stopping: StoppingPolicy::PseudoMax,
        max_epochs: 5,
    };
    let run = run_strategy(&strategy, &net, &data).unwrap();
    assert!(run.is_complete());
    assert_eq!(run.variants.len(), 3);

    // PM: non-negative, zero only for identical ensembles.
    let table = run.iid().unwrap();
    let pm_iid = pm(table, None).unwrap();
    assert!(
        pm_iid > 0.0,
        "independently seeded variants must disagree somewhere"
    );
    let per_sample = per_sample_pm(table).unwrap();
    assert_eq!(per_sample.len(), 120);
    assert!(per_sample.iter().all(|&v| v >= 0.0));

    // OOD PM computed over the same variants.
    let ood_pm = pm(run.ood("x-flip").unwrap(), None).unwrap();
    assert!(ood_pm > 0.0);

    // RM from the tapped activations, for both default taps.
    let cfg = SvccaConfig::default();
    for tap in ["cnn", "fc1"] {
        let taps: Vec<_> = run
            .tap_matrices(tap)
            .unwrap()
            .into_iter()
            .cloned()
            .collect();
        let rm = rm_ensemble(&taps, &cfg).unwrap();
        assert!((-1.0..=0.0).contains(&rm), "{tap}: rm {rm}");
        // Trained-from-different-seeds variants are neither identical nor
        // unrelated.
        assert!(rm < -0.05 && rm > -0.999, "{tap}: rm {rm}");
    }

    // Confabulators: scores recomputable, ordering deterministic.
    let entries = confabulation_scores(table).unwrap();
    let top = top_confabulators(&entries, &per_sample, 10).unwrap();
    assert_eq!(top.indices.len(), 10);
    assert!(!top.truncated);
    let report = confabulation_report(std::slice::from_ref(&run), PoolMode::Pooled, 10).unwrap();
    assert_eq!(report.groups[0].entries.len(), 10);
    assert_eq!(report.groups[0].entries[0].sample_index, top.indices[0]);

    // Low-PM subset selection is a pure function of the PM vector.
    let subset = select_low_pm_subset(&per_sample, 30);
    assert_eq!(subset.len(), 30);
    let max_in_subset = subset.iter().map(|&i| per_sample[i]).fold(0.0f64, f64::max);
    let min_outside = (0..120)
        .filter(|i| !subset.contains(i))
        .map(|i| per_sample[i])
        .fold(f64::INFINITY, f64::min);
    assert!(max_in_subset <= min_outside);
}

#[test]
fn hypothesis1_runs_on_trained_ensembles() {
    let data = datasets();
    let net = NetworkSpec::desk(1, 10, 10, 3).unwrap();
    let mut runs = Vec::new();
    for (i, lr) in [0.003, 0.0008].into_iter().enumerate() {
        let strategy = TrainingStrategy {
            regime: Regime::LearningRate,
            learning_rate: lr,
            batch_size: 30,
            seeds: vec![1, 2],
            stopping: StoppingPolicy::PseudoMax,
            max_epochs: 3 + i,
        };
        runs.push(run_strategy(&strategy, &net, &data).unwrap());
    }
    let report = hypothesis1(&runs, "fc1", 30, &SvccaConfig::default()).unwrap();
    assert_eq!(report.per_strategy.len(), 2);
    assert!(report.scale_pm_full > 0.0);
    // Scaled series peak at exactly 1.
    let max_pm = report
        .per_strategy
        .iter()
        .map(|r| r.pm_full / report.scale_pm_full)
        .fold(0.0f64, f64::max);
    assert_eq!(max_pm, 1.0);
}
