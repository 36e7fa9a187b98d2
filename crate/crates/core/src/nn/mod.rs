//! Desk-scale supervised trainer: dense and small 2-D convolutional
//! networks with ReLU, 2x2 max-pooling, softmax cross-entropy, and Adam.
//!
//! Training is bit-deterministic: the network spec, strategy, seed, and
//! dataset fingerprint fix every checkpoint, prediction, and tapped
//! activation exactly, no matter how runs are scheduled. Variants stop
//! either at a risk band (first evaluation inside the accuracy window) or
//! in pseudo-max mode (train to the epoch budget, checkpointing accuracy
//! records along the way).

mod model;
mod train;

pub use model::{cross_entropy, cross_entropy_grad, softmax_rows, ForwardPass, Gradients, Model};
pub(crate) use train::capture_at;
pub use train::{
    evaluate_accuracy, train_variant, AdamState, EvalPoint, Regime, StoppingPolicy,
    TrainingStrategy, VariantResult, ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use core::fmt;

use crate::linalg::LinalgError;
use crate::multiplicity::MultiplicityError;

/// One network layer; shapes must compose from the declared input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// Valid-padding, stride-1 square convolution.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    Relu,
    MaxPool2x2,
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl LayerSpec {
    fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool2x2 => "maxpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
        }
    }
}

/// Shape of the data flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Image {
                channels,
                height,
                width,
            } => channels * height * width,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A validated network architecture plus its activation tap points.
///
/// Default taps: `cnn` on the output of the last convolution and `fc1` on
/// the output of the first dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    input: Shape,
    layers: Vec<LayerSpec>,
    /// Shape after each layer.
    shapes: Vec<Shape>,
    taps: Vec<(String, usize)>,
}

impl NetworkSpec {
    pub fn new(
        input_channels: usize,
        input_height: usize,
        input_width: usize,
        layers: Vec<LayerSpec>,
    ) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::EmptyNetwork);
        }
        let input = Shape::Image {
            channels: input_channels,
            height: input_height,
            width: input_width,
        };
        if input.is_empty() {
            return Err(NnError::EmptyNetwork);
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut current = input;
        for (idx, layer) in layers.iter().enumerate() {
            current = compose(current, layer).map_err(|detail| NnError::ShapeMismatch {
                layer: idx,
                kind: layer.kind(),
                detail,
            })?;
            shapes.push(current);
        }
        if !matches!(current, Shape::Flat(_)) {
            return Err(NnError::ShapeMismatch {
                layer: layers.len() - 1,
                kind: layers.last().unwrap().kind(),
                detail: String::from("network must end in a dense (flat) output"),
            });
        }

        let mut taps = Vec::new();
        if let Some(idx) = layers
            .iter()
            .rposition(|l| matches!(l, LayerSpec::Conv2d { .. }))
        {
            taps.push((String::from("cnn"), idx));
        }
        if let Some(idx) = layers
            .iter()
            .position(|l| matches!(l, LayerSpec::Dense { .. }))
        {
            taps.push((String::from("fc1"), idx));
        }
        if taps.is_empty() {
            return Err(NnError::NoTapPoints);
        }
        Ok(NetworkSpec {
            input,
            layers,
            shapes,
            taps,
        })
    }

    /// Small two-conv architecture sized for laptop-speed sweeps. The dense
    /// input width is inferred from the shape chain.
    pub fn desk(
        input_channels: usize,
        input_height: usize,
        input_width: usize,
        classes: usize,
    ) -> Result<Self, NnError> {
        Self::conv_stack(
            input_channels,
            input_height,
            input_width,
            classes,
            &[(8, 3, true), (16, 3, true)],
            64,
        )
    }

    /// Four-conv architecture with a 512-wide head; the full-scale layout
    /// for users with the compute to run it.
    pub fn full(
        input_channels: usize,
        input_height: usize,
        input_width: usize,
        classes: usize,
    ) -> Result<Self, NnError> {
        Self::conv_stack(
            input_channels,
            input_height,
            input_width,
            classes,
            &[(48, 3, true), (96, 3, true), (80, 3, false), (96, 3, false)],
            512,
        )
    }

    /// conv/relu[/maxpool] blocks, flatten, then a two-layer dense head.
    fn conv_stack(
        input_channels: usize,
        input_height: usize,
        input_width: usize,
        classes: usize,
        convs: &[(usize, usize, bool)],
        hidden: usize,
    ) -> Result<Self, NnError> {
        let mut layers = Vec::new();
        let mut channels = input_channels;
        let mut shape = Shape::Image {
            channels,
            height: input_height,
            width: input_width,
        };
        for &(out_channels, kernel, pool) in convs {
            let conv = LayerSpec::Conv2d {
                in_channels: channels,
                out_channels,
                kernel,
            };
            shape = compose(shape, &conv).map_err(|detail| NnError::ShapeMismatch {
                layer: layers.len(),
                kind: "conv2d",
                detail,
            })?;
            layers.push(conv);
            layers.push(LayerSpec::Relu);
            if pool {
                shape = compose(shape, &LayerSpec::MaxPool2x2).map_err(|detail| {
                    NnError::ShapeMismatch {
                        layer: layers.len(),
                        kind: "maxpool",
                        detail,
                    }
                })?;
                layers.push(LayerSpec::MaxPool2x2);
            }
            channels = out_channels;
        }
        layers.push(LayerSpec::Flatten);
        let flat = shape.len();
        layers.push(LayerSpec::Dense {
            inputs: flat,
            outputs: hidden,
        });
        layers.push(LayerSpec::Dense {
            inputs: hidden,
            outputs: classes,
        });
        NetworkSpec::new(input_channels, input_height, input_width, layers)
    }

    /// Adds a named tap on the output of the given layer.
    pub fn with_tap(mut self, name: impl Into<String>, layer: usize) -> Result<Self, NnError> {
        let name = name.into();
        if layer >= self.layers.len() {
            return Err(NnError::BadTap { name });
        }
        self.taps.push((name, layer));
        Ok(self)
    }

    #[inline]
    pub fn input(&self) -> Shape {
        self.input
    }

    #[inline]
    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Shape of the data after layer `idx`.
    #[inline]
    pub fn shape_after(&self, idx: usize) -> Shape {
        self.shapes[idx]
    }

    #[inline]
    pub fn taps(&self) -> &[(String, usize)] {
        &self.taps
    }

    /// Width of the final (logit) layer.
    pub fn output_dim(&self) -> usize {
        self.shapes.last().unwrap().len()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match *l {
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                } => out_channels * in_channels * kernel * kernel + out_channels,
                LayerSpec::Dense { inputs, outputs } => outputs * inputs + outputs,
                _ => 0,
            })
            .sum()
    }
}

fn compose(shape: Shape, layer: &LayerSpec) -> Result<Shape, String> {
    match (*layer, shape) {
        (
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
            },
            Shape::Image {
                channels,
                height,
                width,
            },
        ) => {
            if in_channels != channels {
                return Err(format!(
                    "expects {in_channels} input channels, data has {channels}"
                ));
            }
            if kernel == 0 || out_channels == 0 {
                return Err(String::from("kernel and out_channels must be positive"));
            }
            if height < kernel || width < kernel {
                return Err(format!(
                    "kernel {kernel} larger than {height}x{width} input"
                ));
            }
            Ok(Shape::Image {
                channels: out_channels,
                height: height - kernel + 1,
                width: width - kernel + 1,
            })
        }
        (LayerSpec::Conv2d { .. }, Shape::Flat(_)) => {
            Err(String::from("conv2d needs image-shaped input"))
        }
        (LayerSpec::Relu, s) => Ok(s),
        (
            LayerSpec::MaxPool2x2,
            Shape::Image {
                channels,
                height,
                width,
            },
        ) => {
            if height < 2 || width < 2 {
                return Err(format!("cannot pool a {height}x{width} image"));
            }
            Ok(Shape::Image {
                channels,
                height: height / 2,
                width: width / 2,
            })
        }
        (LayerSpec::MaxPool2x2, Shape::Flat(_)) => {
            Err(String::from("maxpool needs image-shaped input"))
        }
        (LayerSpec::Flatten, s @ Shape::Image { .. }) => Ok(Shape::Flat(s.len())),
        (LayerSpec::Flatten, Shape::Flat(_)) => Err(String::from("input is already flat")),
        (LayerSpec::Dense { inputs, outputs }, s) => {
            if outputs == 0 {
                return Err(String::from("dense outputs must be positive"));
            }
            if s.len() != inputs || matches!(s, Shape::Image { .. }) {
                return Err(format!(
                    "dense expects flat input of width {inputs}, data is {} wide",
                    s.len()
                ));
            }
            Ok(Shape::Flat(outputs))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NnError {
    EmptyNetwork,
    ShapeMismatch {
        layer: usize,
        kind: &'static str,
        detail: String,
    },
    NoTapPoints,
    BadTap {
        name: String,
    },
    EmptyDataset,
    ClassMismatch {
        network: usize,
        dataset: usize,
    },
    InputMismatch {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    InvalidHyper {
        name: &'static str,
    },
    NonFiniteLoss {
        step: usize,
    },
    TargetUnreachable {
        best: f64,
    },
    BadCheckpoint {
        expected: usize,
        found: usize,
    },
    Linalg(LinalgError),
    Multiplicity(MultiplicityError),
}

impl From<LinalgError> for NnError {
    fn from(e: LinalgError) -> Self {
        NnError::Linalg(e)
    }
}

impl From<MultiplicityError> for NnError {
    fn from(e: MultiplicityError) -> Self {
        NnError::Multiplicity(e)
    }
}

impl fmt::Display for NnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NnError::EmptyNetwork => write!(f, "network needs a non-empty layer list and input"),
            NnError::ShapeMismatch {
                layer,
                kind,
                detail,
            } => write!(f, "layer {layer} ({kind}): {detail}"),
            NnError::NoTapPoints => write!(f, "network exposes no tap points"),
            NnError::BadTap { name } => write!(f, "tap '{name}' points at no layer"),
            NnError::EmptyDataset => write!(f, "dataset is empty"),
            NnError::ClassMismatch { network, dataset } => write!(
                f,
                "network emits {network} classes but dataset has {dataset}"
            ),
            NnError::InputMismatch { expected, found } => write!(
                f,
                "input shape mismatch: network wants {}x{}x{}, dataset is {}x{}x{}",
                expected.0, expected.1, expected.2, found.0, found.1, found.2
            ),
            NnError::InvalidHyper { name } => write!(f, "invalid hyperparameter: {name}"),
            NnError::NonFiniteLoss { step } => {
                write!(f, "non-finite loss at step {step}; variant aborted")
            }
            NnError::TargetUnreachable { best } => write!(
                f,
                "target accuracy unreachable within the epoch budget (best {best:.4})"
            ),
            NnError::BadCheckpoint { expected, found } => write!(
                f,
                "checkpoint has {found} parameters, network needs {expected}"
            ),
            NnError::Linalg(e) => write!(f, "{e}"),
            NnError::Multiplicity(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for NnError {}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn desk_spec_composes() {
        let spec = NetworkSpec::desk(1, 14, 14, 3).unwrap();
        assert_eq!(spec.output_dim(), 3);
        // conv(1,8,3) -> 12x12, pool -> 6x6, conv(8,16,3) -> 4x4, pool -> 2x2
        let (cnn_idx, fc1_idx) = (
            spec.taps().iter().find(|(n, _)| n == "cnn").unwrap().1,
            spec.taps().iter().find(|(n, _)| n == "fc1").unwrap().1,
        );
        assert_eq!(spec.shape_after(cnn_idx).len(), 16 * 4 * 4);
        assert_eq!(spec.shape_after(fc1_idx).len(), 64);
    }

    #[test]
    fn full_spec_matches_reference_widths() {
        // 28x28 grayscale: the conv stack ends at 1x1x96, head 96 -> 512 -> 10.
        let spec = NetworkSpec::full(1, 28, 28, 10).unwrap();
        let flat_idx = spec
            .layers()
            .iter()
            .position(|l| matches!(l, LayerSpec::Flatten))
            .unwrap();
        assert_eq!(spec.shape_after(flat_idx), Shape::Flat(96));

        // 32x32 RGB: flatten width 384.
        let spec = NetworkSpec::full(3, 32, 32, 9).unwrap();
        let flat_idx = spec
            .layers()
            .iter()
            .position(|l| matches!(l, LayerSpec::Flatten))
            .unwrap();
        assert_eq!(spec.shape_after(flat_idx), Shape::Flat(384));
    }

    #[test]
    fn shape_errors_name_the_layer() {
        let err = NetworkSpec::new(
            1,
            8,
            8,
            vec![
                LayerSpec::Conv2d {
                    in_channels: 2, // wrong: input has 1 channel
                    out_channels: 4,
                    kernel: 3,
                },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 10,
                    outputs: 2,
                },
            ],
        )
        .unwrap_err();
        assert!(matches!(
            err,
            NnError::ShapeMismatch {
                layer: 0,
                kind: "conv2d",
                ..
            }
        ));

        let err = NetworkSpec::new(
            1,
            8,
            8,
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 99,
                    outputs: 2,
                },
            ],
        )
        .unwrap_err();
        assert!(matches!(
            err,
            NnError::ShapeMismatch {
                layer: 1,
                kind: "dense",
                ..
            }
        ));
    }

    #[test]
    fn default_taps_point_at_conv_and_dense() {
        let spec = NetworkSpec::desk(1, 12, 12, 2).unwrap();
        let names: Vec<&str> = spec.taps().iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["cnn", "fc1"]);
        let cnn = spec.taps()[0].1;
        assert!(matches!(spec.layers()[cnn], LayerSpec::Conv2d { .. }));
        let fc1 = spec.taps()[1].1;
        assert!(matches!(spec.layers()[fc1], LayerSpec::Dense { .. }));
    }
}
