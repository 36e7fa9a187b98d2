use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::model::{check_dataset, cross_entropy, cross_entropy_grad, softmax_rows, Model};
use super::{NetworkSpec, NnError};
use crate::data::Dataset;
use crate::linalg::Matrix;
use crate::math;
use crate::multiplicity::RiskBand;
use crate::rng;
use crate::svcca::ActivationMatrix;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Which hyperparameter a strategy belongs to when swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    LearningRate,
    BatchSize,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::LearningRate => "learning-rate",
            Regime::BatchSize => "batch-size",
        }
    }
}

/// When a variant stops training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingPolicy {
    /// Halt at the first evaluation inside the accuracy window.
    RiskBand(RiskBand),
    /// Train to the epoch budget, checkpointing accuracy records; the
    /// ensemble layer later selects checkpoints at the pseudo-max level.
    PseudoMax,
}

/// One hyperparameter configuration: the regime being varied, the fixed
/// values, the seed list, and the stopping policy.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingStrategy {
    pub regime: Regime,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    pub stopping: StoppingPolicy,
    pub max_epochs: usize,
}

impl TrainingStrategy {
    /// Human-readable strategy label, e.g. `lr-0.003` or `bs-64`.
    pub fn label(&self) -> String {
        match self.regime {
            Regime::LearningRate => format!("lr-{}", self.learning_rate),
            Regime::BatchSize => format!("bs-{}", self.batch_size),
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(NnError::InvalidHyper {
                name: "learning_rate",
            });
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidHyper { name: "batch_size" });
        }
        if self.max_epochs == 0 {
            return Err(NnError::InvalidHyper { name: "max_epochs" });
        }
        if self.seeds.is_empty() {
            return Err(NnError::InvalidHyper { name: "seeds" });
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(NnError::InvalidHyper { name: "seeds" });
        }
        Ok(())
    }
}

/// Adam moment estimates, aligned to the model's parameter layout.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(model: &Model) -> Self {
        AdamState {
            m_w: model.weights().iter().map(|w| vec![0.0; w.len()]).collect(),
            v_w: model.weights().iter().map(|w| vec![0.0; w.len()]).collect(),
            m_b: model.biases().iter().map(|b| vec![0.0; b.len()]).collect(),
            v_b: model.biases().iter().map(|b| vec![0.0; b.len()]).collect(),
            t: 0,
        }
    }

    #[inline]
    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// Bias-corrected Adam update on one parameter tensor.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
) {
    let bc1 = 1.0 - libm_powi(ADAM_BETA1, t);
    let bc2 = 1.0 - libm_powi(ADAM_BETA2, t);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (math::sqrt(v_hat) + ADAM_EPS);
    }
}

// beta^t by repeated squaring; avoids powf in no_std builds.
fn libm_powi(base: f64, mut exp: u64) -> f64 {
    let mut acc = 1.0;
    let mut b = base;
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= b;
        }
        b *= b;
        exp >>= 1;
    }
    acc
}

/// One optimization step: forward, softmax cross-entropy, backward, Adam.
/// Returns the batch loss; a non-finite loss aborts the variant.
pub fn train_step(
    model: &mut Model,
    adam: &mut AdamState,
    images: &[f64],
    labels: &[usize],
    lr: f64,
    step: usize,
) -> Result<f64, NnError> {
    let batch = labels.len();
    let classes = model.spec().output_dim();
    let fp = model.forward(images, batch)?;
    let probs = softmax_rows(fp.logits(), batch, classes);
    let loss = cross_entropy(&probs, labels, classes);
    if !loss.is_finite() {
        return Err(NnError::NonFiniteLoss { step });
    }
    let d_logits = cross_entropy_grad(&probs, labels, classes);
    let grads = model.backward(images, &fp, &d_logits);

    adam.t += 1;
    let t = adam.t;
    let (weights, biases) = model.params_mut();
    for i in 0..weights.len() {
        adam_update(
            &mut weights[i],
            &grads.weights[i],
            &mut adam.m_w[i],
            &mut adam.v_w[i],
            t,
            lr,
        );
        adam_update(
            &mut biases[i],
            &grads.biases[i],
            &mut adam.m_b[i],
            &mut adam.v_b[i],
            t,
            lr,
        );
    }
    Ok(loss)
}

/// Fraction of argmax-correct predictions over the dataset.
pub fn evaluate_accuracy(model: &Model, ds: &Dataset) -> Result<f64, NnError> {
    check_dataset(model.spec(), ds)?;
    let predicted = model.predict_labels(ds)?;
    let correct = predicted
        .iter()
        .zip(&ds.labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / ds.samples as f64)
}

/// One test-set evaluation during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub step: usize,
    pub accuracy: f64,
}

/// A trained variant at its stopping checkpoint: test-set predictions,
/// tapped activations, and (in pseudo-max mode) the accuracy-record
/// checkpoints the ensemble layer reselects from.
#[derive(Debug, Clone)]
pub struct VariantResult {
    pub seed: u64,
    pub accuracy: f64,
    pub steps: usize,
    pub epochs: usize,
    pub model: Model,
    /// Test-set probabilities, `N x C`.
    pub predictions: Matrix,
    pub taps: Vec<(String, ActivationMatrix)>,
    pub history: Vec<EvalPoint>,
    /// Running-max checkpoints (pseudo-max mode only). Any "first eval with
    /// accuracy >= level" is one of these, so they suffice for reselection.
    pub records: Vec<(EvalPoint, Model)>,
}

/// Trains one seed of a strategy to its stopping point.
///
/// Fully deterministic: `(spec, strategy, seed, dataset fingerprints)` fix
/// the result bit-exactly. Mini-batches are reshuffled each epoch from a
/// seed-derived stream; evaluation happens at every epoch end, plus every
/// 200 steps for batch sizes of 256 and up so large-batch runs can hit a
/// risk band between epochs.
pub fn train_variant(
    strategy: &TrainingStrategy,
    seed: u64,
    spec: &NetworkSpec,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<VariantResult, NnError> {
    strategy.validate()?;
    check_dataset(spec, train_set)?;
    check_dataset(spec, test_set)?;
    if spec.output_dim() != train_set.classes || train_set.classes != test_set.classes {
        return Err(NnError::ClassMismatch {
            network: spec.output_dim(),
            dataset: train_set.classes,
        });
    }

    let mut model = Model::init(spec, seed);
    let mut adam = AdamState::new(&model);
    let mut shuffle_rng = rng::stream(seed, rng::TAG_SHUFFLE);
    let stride = train_set.pixels_per_sample();
    let mid_epoch_evals = strategy.batch_size >= 256;

    let mut history: Vec<EvalPoint> = Vec::new();
    let mut records: Vec<(EvalPoint, Model)> = Vec::new();
    let mut best = 0.0f64;
    let mut step = 0usize;
    let mut indices: Vec<usize> = (0..train_set.samples).collect();

    let mut batch_images = vec![0.0; strategy.batch_size * stride];
    let mut batch_labels = vec![0usize; strategy.batch_size];

    for epoch in 0..strategy.max_epochs {
        indices.shuffle(&mut shuffle_rng);
        for chunk in indices.chunks(strategy.batch_size) {
            for (slot, &sample) in chunk.iter().enumerate() {
                batch_images[slot * stride..(slot + 1) * stride]
                    .copy_from_slice(train_set.image(sample));
                batch_labels[slot] = train_set.labels[sample];
            }
            train_step(
                &mut model,
                &mut adam,
                &batch_images[..chunk.len() * stride],
                &batch_labels[..chunk.len()],
                strategy.learning_rate,
                step,
            )?;
            step += 1;

            if mid_epoch_evals && step.is_multiple_of(200) {
                let acc = evaluate_accuracy(&model, test_set)?;
                history.push(EvalPoint {
                    step,
                    accuracy: acc,
                });
                match strategy.stopping {
                    StoppingPolicy::RiskBand(band) if band.contains(acc) => {
                        return finish(
                            model,
                            seed,
                            acc,
                            step,
                            epoch + 1,
                            history,
                            records,
                            test_set,
                        );
                    }
                    _ => {}
                }
                if acc > best {
                    best = acc;
                    if matches!(strategy.stopping, StoppingPolicy::PseudoMax) {
                        records.push((
                            EvalPoint {
                                step,
                                accuracy: acc,
                            },
                            model.clone(),
                        ));
                    }
                }
            }
        }

        // Epoch-end evaluation (skip if a mid-epoch eval just ran here).
        if history.last().map(|p| p.step) != Some(step) {
            let acc = evaluate_accuracy(&model, test_set)?;
            history.push(EvalPoint {
                step,
                accuracy: acc,
            });
            match strategy.stopping {
                StoppingPolicy::RiskBand(band) if band.contains(acc) => {
                    return finish(
                        model,
                        seed,
                        acc,
                        step,
                        epoch + 1,
                        history,
                        records,
                        test_set,
                    );
                }
                _ => {}
            }
            if acc > best {
                best = acc;
                if matches!(strategy.stopping, StoppingPolicy::PseudoMax) {
                    records.push((
                        EvalPoint {
                            step,
                            accuracy: acc,
                        },
                        model.clone(),
                    ));
                }
            }
        }
    }

    match strategy.stopping {
        StoppingPolicy::RiskBand(_) => Err(NnError::TargetUnreachable { best }),
        StoppingPolicy::PseudoMax => {
            // Best-of-converged: the last record is the first evaluation
            // that achieved this variant's maximum accuracy.
            let (point, checkpoint) = records
                .last()
                .cloned()
                .ok_or(NnError::TargetUnreachable { best })?;
            let epochs = strategy.max_epochs;
            finish(
                checkpoint,
                seed,
                point.accuracy,
                point.step,
                epochs,
                history,
                records,
                test_set,
            )
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    model: Model,
    seed: u64,
    accuracy: f64,
    steps: usize,
    epochs: usize,
    history: Vec<EvalPoint>,
    records: Vec<(EvalPoint, Model)>,
    test_set: &Dataset,
) -> Result<VariantResult, NnError> {
    let predictions = model.predict_probs(test_set)?;
    let taps = model.capture_taps(test_set)?;
    Ok(VariantResult {
        seed,
        accuracy,
        steps,
        epochs,
        model,
        predictions,
        taps,
        history,
        records,
    })
}

/// Re-captures predictions and taps for a checkpoint selected after
/// training (pseudo-max reselection).
pub(crate) fn capture_at(
    model: &Model,
    test_set: &Dataset,
) -> Result<(Matrix, Vec<(String, ActivationMatrix)>), NnError> {
    Ok((
        model.predict_probs(test_set)?,
        model.capture_taps(test_set)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, Split, SyntheticSpec};
    use crate::nn::LayerSpec;
    use rand::Rng;

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut params = [0.4, -0.2];
        let grads = [0.0, 0.0];
        let mut m = [0.0, 0.0];
        let mut v = [0.0, 0.0];
        adam_update(&mut params, &grads, &mut m, &mut v, 1, 0.001);
        assert_eq!(params, [0.4, -0.2]);
    }

    #[test]
    fn adam_first_step_hand_value() {
        // Scalar parameter, gradient 1.0, first bias-corrected step:
        // m_hat = v_hat = 1, update = -lr / (1 + eps).
        let mut params = [0.0];
        let mut m = [0.0];
        let mut v = [0.0];
        adam_update(&mut params, &[1.0], &mut m, &mut v, 1, 0.001);
        let expected = -0.001 / (1.0 + ADAM_EPS);
        assert!(
            (params[0] - expected).abs() < 1e-15,
            "{} vs {expected}",
            params[0]
        );
    }

    fn grad_check_spec() -> NetworkSpec {
        NetworkSpec::new(
            1,
            6,
            6,
            vec![
                LayerSpec::Conv2d {
                    in_channels: 1,
                    out_channels: 3,
                    kernel: 3,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool2x2,
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 12,
                    outputs: 5,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    inputs: 5,
                    outputs: 3,
                },
            ],
        )
        .unwrap()
    }

    fn batch_loss(model: &Model, images: &[f64], labels: &[usize]) -> f64 {
        let fp = model.forward(images, labels.len()).unwrap();
        let probs = softmax_rows(fp.logits(), labels.len(), 3);
        cross_entropy(&probs, labels, 3)
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let spec = grad_check_spec();
        let model = Model::init(&spec, 17);
        let mut stream = crate::rng::stream(18, 0x31);
        let batch = 2;
        let images: Vec<f64> = (0..batch * 36).map(|_| stream.gen::<f64>()).collect();
        let labels = vec![0usize, 2];

        let fp = model.forward(&images, batch).unwrap();
        let probs = softmax_rows(fp.logits(), batch, 3);
        let d_logits = cross_entropy_grad(&probs, &labels, 3);
        let grads = model.backward(&images, &fp, &d_logits);

        let h = 1e-5;
        for layer in 0..spec.layers().len() {
            let n = model.weights()[layer].len();
            if n == 0 {
                continue;
            }
            // 20 coordinates per parameterized layer (or all, if fewer).
            for probe in 0..20.min(n) {
                let idx = if n <= 20 {
                    probe
                } else {
                    (stream.gen::<u64>() as usize) % n
                };
                let mut plus = model.clone();
                plus.params_mut().0[layer][idx] += h;
                let mut minus = model.clone();
                minus.params_mut().0[layer][idx] -= h;
                let numeric = (batch_loss(&plus, &images, &labels)
                    - batch_loss(&minus, &images, &labels))
                    / (2.0 * h);
                let analytic = grads.weights[layer][idx];
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8);
                assert!(
                    rel < 1e-4,
                    "layer {layer} weight {idx}: numeric {numeric} vs analytic {analytic}"
                );
            }
            for idx in 0..model.biases()[layer].len().min(5) {
                let mut plus = model.clone();
                plus.params_mut().1[layer][idx] += h;
                let mut minus = model.clone();
                minus.params_mut().1[layer][idx] -= h;
                let numeric = (batch_loss(&plus, &images, &labels)
                    - batch_loss(&minus, &images, &labels))
                    / (2.0 * h);
                let analytic = grads.biases[layer][idx];
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8);
                assert!(
                    rel < 1e-4,
                    "layer {layer} bias {idx}: numeric {numeric} vs analytic {analytic}"
                );
            }
        }
    }

    fn blob_strategy(stopping: StoppingPolicy, max_epochs: usize) -> TrainingStrategy {
        TrainingStrategy {
            regime: Regime::LearningRate,
            learning_rate: 0.002,
            batch_size: 16,
            seeds: vec![1],
            stopping,
            max_epochs,
        }
    }

    fn blob_data(noise: f64, samples: usize, seed: u64) -> (Dataset, Dataset) {
        let spec = SyntheticSpec {
            classes: 2,
            samples,
            image_size: 10,
            noise,
        };
        let train = generate_synthetic(&spec, seed, Split::Train).unwrap();
        let test = generate_synthetic(
            &SyntheticSpec {
                samples: samples / 2,
                ..spec
            },
            seed + 1,
            Split::Test,
        )
        .unwrap();
        (train, test)
    }

    #[test]
    fn risk_band_halts_inside_window() {
        let (train, test) = blob_data(1.0, 360, 41);
        let spec = NetworkSpec::desk(1, 10, 10, 2).unwrap();
        let band = RiskBand::new(0.95, 0.02).unwrap();
        let mut strategy = blob_strategy(StoppingPolicy::RiskBand(band), 60);
        strategy.learning_rate = 0.001;
        let result = train_variant(&strategy, 1, &spec, &train, &test).unwrap();
        assert!(
            result.accuracy > 0.93 && result.accuracy < 0.97,
            "stopped at {}",
            result.accuracy
        );
        assert!(result.records.is_empty());
    }

    #[test]
    fn training_is_bit_deterministic() {
        let (train, test) = blob_data(0.8, 200, 42);
        let spec = NetworkSpec::desk(1, 10, 10, 2).unwrap();
        let strategy = blob_strategy(StoppingPolicy::PseudoMax, 4);
        let a = train_variant(&strategy, 7, &spec, &train, &test).unwrap();
        let b = train_variant(&strategy, 7, &spec, &train, &test).unwrap();
        assert_eq!(a.model.to_flat(), b.model.to_flat());
        assert_eq!(a.predictions.data(), b.predictions.data());
        assert_eq!(a.accuracy, b.accuracy);
        assert_eq!(a.taps[0].1.values.data(), b.taps[0].1.values.data());
    }

    #[test]
    fn unreachable_target_reports_best() {
        let (train, test) = blob_data(1.8, 120, 43);
        let spec = NetworkSpec::desk(1, 10, 10, 2).unwrap();
        let band = RiskBand::new(0.999, 0.0005).unwrap();
        let strategy = blob_strategy(StoppingPolicy::RiskBand(band), 2);
        match train_variant(&strategy, 3, &spec, &train, &test) {
            Err(NnError::TargetUnreachable { best }) => assert!(best < 0.999),
            other => panic!("expected TargetUnreachable, got {other:?}"),
        }
    }

    #[test]
    fn pseudo_max_keeps_accuracy_records() {
        let (train, test) = blob_data(0.9, 200, 44);
        let spec = NetworkSpec::desk(1, 10, 10, 2).unwrap();
        let strategy = blob_strategy(StoppingPolicy::PseudoMax, 6);
        let result = train_variant(&strategy, 5, &spec, &train, &test).unwrap();
        assert!(!result.records.is_empty());
        // Records are strictly increasing in accuracy.
        for w in result.records.windows(2) {
            assert!(w[1].0.accuracy > w[0].0.accuracy);
        }
        let max_hist = result
            .history
            .iter()
            .map(|p| p.accuracy)
            .fold(0.0f64, f64::max);
        assert_eq!(result.accuracy, max_hist);
    }

    #[test]
    fn constant_classifier_accuracy_is_class_share() {
        let spec = NetworkSpec::new(
            1,
            2,
            2,
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 4,
                    outputs: 4,
                },
            ],
        )
        .unwrap();
        let mut model = Model::init(&spec, 1);
        for w in model.params_mut().0.iter_mut() {
            for v in w.iter_mut() {
                *v = 0.0;
            }
        }
        model.params_mut().1[1][2] = 5.0; // always predicts class 2

        // Balanced 4-class data, 40 samples.
        let images = vec![0.5; 40 * 4];
        let labels: Vec<usize> = (0..40).map(|n| n % 4).collect();
        let ds = Dataset::new(images, labels, 1, 2, 2, 4, Split::Test).unwrap();
        assert_eq!(evaluate_accuracy(&model, &ds).unwrap(), 0.25);
    }

    #[test]
    fn perfect_classifier_scores_one() {
        let spec = NetworkSpec::new(
            1,
            2,
            2,
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 4,
                    outputs: 2,
                },
            ],
        )
        .unwrap();
        let mut model = Model::init(&spec, 1);
        model.params_mut().0[1].copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let images = vec![
            1.0, 0.0, 0.0, 0.0, // class 0
            0.0, 1.0, 0.0, 0.0, // class 1
        ];
        let ds = Dataset::new(images, vec![0, 1], 1, 2, 2, 2, Split::Test).unwrap();
        assert_eq!(evaluate_accuracy(&model, &ds).unwrap(), 1.0);
    }

    #[test]
    fn empty_dataset_rejected() {
        let spec = NetworkSpec::desk(1, 10, 10, 2).unwrap();
        let model = Model::init(&spec, 1);
        let ds = Dataset::new(vec![], vec![], 1, 10, 10, 2, Split::Test).unwrap();
        assert!(matches!(
            evaluate_accuracy(&model, &ds),
            Err(NnError::EmptyDataset)
        ));
    }

    #[test]
    fn strategy_validation() {
        let mut s = blob_strategy(StoppingPolicy::PseudoMax, 3);
        s.seeds = vec![1, 2, 2];
        assert!(matches!(
            s.validate(),
            Err(NnError::InvalidHyper { name: "seeds" })
        ));
        let mut s = blob_strategy(StoppingPolicy::PseudoMax, 3);
        s.learning_rate = 0.0;
        assert!(s.validate().is_err());
    }
}
