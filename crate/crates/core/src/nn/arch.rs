//! Layer manifests for the two shipped networks.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    /// 32×32 patch → scalar μ.
    RegressorV1,
    /// 64×64 patch → (p_gaussian, p_poisson).
    ClassifierV1,
}

impl Architecture {
    pub fn tag(self) -> &'static str {
        match self {
            Architecture::RegressorV1 => "regressor_v1",
            Architecture::ClassifierV1 => "classifier_v1",
        }
    }

    pub fn input_size(self) -> usize {
        match self {
            Architecture::RegressorV1 => 32,
            Architecture::ClassifierV1 => 64,
        }
    }

    pub fn layers(self) -> Vec<LayerSpec> {
        use LayerSpec::*;
        let block = |i: usize, cin: usize, cout: usize, k: usize| {
            vec![
                Conv {
                    name: format!("conv{i}"),
                    in_channels: cin,
                    out_channels: cout,
                    kernel: k,
                    pad: k / 2,
                },
                BatchNorm {
                    name: format!("bn{i}"),
                    channels: cout,
                },
                Relu,
                MaxPool2,
            ]
        };
        let fc = |i: usize, inputs: usize, outputs: usize| FullyConnected {
            name: format!("fc{i}"),
            inputs,
            outputs,
        };
        match self {
            Architecture::RegressorV1 => {
                let mut l = Vec::new();
                l.extend(block(1, 1, 64, 5));
                l.extend(block(2, 64, 128, 5));
                l.extend(block(3, 128, 256, 3));
                l.extend(block(4, 256, 512, 3));
                l.extend([
                    Flatten,
                    fc(1, 2048, 512),
                    Relu,
                    Dropout,
                    fc(2, 512, 128),
                    Relu,
                    Dropout,
                    fc(3, 128, 1),
                ]);
                l
            }
            Architecture::ClassifierV1 => {
                let mut l = Vec::new();
                l.extend(block(1, 1, 32, 5));
                l.extend(block(2, 32, 64, 5));
                l.extend(block(3, 64, 128, 3));
                l.extend([Flatten, fc(1, 8192, 2048), Relu, fc(2, 2048, 2), Softmax]);
                l
            }
        }
    }

    /// Output shape after every layer, starting from `(1, n, n)`.
    pub fn output_shapes(self) -> Vec<Vec<usize>> {
        let n = self.input_size();
        let mut shape = vec![1, n, n];
        self.layers()
            .iter()
            .map(|layer| {
                shape = layer.output_shape(&shape);
                shape.clone()
            })
            .collect()
    }

    /// Expected `(name, shape)` of every stored tensor, in file order.
    pub fn manifest(self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for layer in self.layers() {
            match layer {
                LayerSpec::Conv {
                    name,
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => {
                    out.push((
                        format!("{name}.weight"),
                        vec![out_channels, in_channels, kernel, kernel],
                    ));
                    out.push((format!("{name}.bias"), vec![out_channels]));
                }
                LayerSpec::BatchNorm { name, channels } => {
                    for field in BN_FIELDS {
                        out.push((format!("{name}.{field}"), vec![channels]));
                    }
                    out.push((format!("{name}.eps"), vec![1]));
                }
                LayerSpec::FullyConnected {
                    name,
                    inputs,
                    outputs,
                } => {
                    out.push((format!("{name}.weight"), vec![outputs, inputs]));
                    out.push((format!("{name}.bias"), vec![outputs]));
                }
                _ => {}
            }
        }
        out
    }

    /// Trainable parameters: convolution and dense weights and biases plus
    /// batch-norm scale and shift. Running statistics and epsilons excluded.
    pub fn parameter_count(self) -> usize {
        self.manifest()
            .iter()
            .filter(|(name, _)| is_trainable(name))
            .map(|(_, shape)| shape.iter().product::<usize>())
            .sum()
    }
}

pub(crate) const BN_FIELDS: [&str; 4] = ["weight", "bias", "running_mean", "running_var"];

pub(crate) fn is_trainable(name: &str) -> bool {
    !(name.ends_with(".running_mean") || name.ends_with(".running_var") || name.ends_with(".eps"))
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regressor_v1" => Ok(Architecture::RegressorV1),
            "classifier_v1" => Ok(Architecture::ClassifierV1),
            other => Err(Error::Argument(format!(
                "unknown architecture tag `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Conv {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        pad: usize,
    },
    BatchNorm {
        name: String,
        channels: usize,
    },
    Relu,
    MaxPool2,
    Flatten,
    FullyConnected {
        name: String,
        inputs: usize,
        outputs: usize,
    },
    /// Identity at inference.
    Dropout,
    Softmax,
}

impl LayerSpec {
    pub fn output_shape(&self, input: &[usize]) -> Vec<usize> {
        match self {
            LayerSpec::Conv {
                out_channels,
                kernel,
                pad,
                ..
            } => vec![
                *out_channels,
                input[1] + 2 * pad + 1 - kernel,
                input[2] + 2 * pad + 1 - kernel,
            ],
            LayerSpec::MaxPool2 => vec![input[0], input[1] / 2, input[2] / 2],
            LayerSpec::Flatten => vec![input.iter().product()],
            LayerSpec::FullyConnected { outputs, .. } => vec![*outputs],
            _ => input.to_vec(),
        }
    }
}
