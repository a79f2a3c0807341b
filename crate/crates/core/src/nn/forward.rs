//! `f32` forward pass over a validated weight bundle.

use super::arch::{Architecture, LayerSpec};
use super::weights::WeightBundle;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Op {
    Conv {
        /// `(out, in·k·k)` row-major, matching the im2col row order.
        weight: Vec<f32>,
        bias: Vec<f32>,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        pad: usize,
    },
    BatchNorm {
        mean: Vec<f32>,
        /// `sqrt(running_var + eps)`.
        std: Vec<f32>,
        gamma: Vec<f32>,
        beta: Vec<f32>,
    },
    Relu,
    MaxPool2,
    Flatten,
    Dense {
        weight: Vec<f32>,
        bias: Vec<f32>,
        inputs: usize,
        outputs: usize,
    },
    Identity,
}

/// A ready-to-run network. Immutable, so it can be shared across threads.
#[derive(Debug, Clone)]
pub struct Network {
    arch: Architecture,
    ops: Vec<Op>,
    shapes: Vec<Vec<usize>>,
}

fn tensor(bundle: &WeightBundle, name: &str) -> Result<Vec<f32>> {
    bundle
        .get(name)
        .map(|t| t.data.clone())
        .ok_or_else(|| Error::Argument(format!("missing tensor `{name}`")))
}

impl Network {
    pub fn new(bundle: &WeightBundle) -> Result<Self> {
        bundle.validate()?;
        let arch = bundle.architecture();
        let mut ops = Vec::new();
        for layer in arch.layers() {
            ops.push(match layer {
                LayerSpec::Conv {
                    name,
                    in_channels,
                    out_channels,
                    kernel,
                    pad,
                } => Op::Conv {
                    weight: tensor(bundle, &format!("{name}.weight"))?,
                    bias: tensor(bundle, &format!("{name}.bias"))?,
                    in_channels,
                    out_channels,
                    kernel,
                    pad,
                },
                LayerSpec::BatchNorm { name, .. } => {
                    let eps = tensor(bundle, &format!("{name}.eps"))?[0];
                    let var = tensor(bundle, &format!("{name}.running_var"))?;
                    Op::BatchNorm {
                        mean: tensor(bundle, &format!("{name}.running_mean"))?,
                        std: var.iter().map(|v| (v + eps).sqrt()).collect(),
                        gamma: tensor(bundle, &format!("{name}.weight"))?,
                        beta: tensor(bundle, &format!("{name}.bias"))?,
                    }
                }
                LayerSpec::Relu => Op::Relu,
                LayerSpec::MaxPool2 => Op::MaxPool2,
                LayerSpec::Flatten => Op::Flatten,
                LayerSpec::FullyConnected {
                    name,
                    inputs,
                    outputs,
                } => Op::Dense {
                    weight: tensor(bundle, &format!("{name}.weight"))?,
                    bias: tensor(bundle, &format!("{name}.bias"))?,
                    inputs,
                    outputs,
                },
                // softmax is applied by the caller in f64
                LayerSpec::Dropout | LayerSpec::Softmax => Op::Identity,
            });
        }
        Ok(Self {
            arch,
            ops,
            shapes: arch.output_shapes(),
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    /// Runs the network on a row-major `n×n` single-channel input and returns
    /// the final layer's raw outputs (logits for the classifier).
    pub fn forward(&self, input: &[f32]) -> Result<Vec<f32>> {
        self.run(input, None)
    }

    /// Like [`Network::forward`], also returning every layer's output shape.
    pub fn forward_traced(&self, input: &[f32]) -> Result<(Vec<f32>, Vec<Vec<usize>>)> {
        let mut trace = Vec::with_capacity(self.ops.len());
        let out = self.run(input, Some(&mut trace))?;
        Ok((out, trace))
    }

    fn run(&self, input: &[f32], mut trace: Option<&mut Vec<Vec<usize>>>) -> Result<Vec<f32>> {
        let n = self.arch.input_size();
        if input.len() != n * n {
            return Err(Error::Argument(format!(
                "{} expects a {n}x{n} input, got {} values",
                self.arch,
                input.len()
            )));
        }
        let mut shape = vec![1, n, n];
        let mut x = input.to_vec();
        let mut scratch = Vec::new();
        for (op, expected) in self.ops.iter().zip(&self.shapes) {
            x = apply(op, x, &mut shape, &mut scratch);
            debug_assert_eq!(&shape, expected, "layer output shape drifted from manifest");
            if let Some(t) = trace.as_deref_mut() {
                t.push(shape.clone());
            }
        }
        Ok(x)
    }
}

fn apply(op: &Op, x: Vec<f32>, shape: &mut Vec<usize>, scratch: &mut Vec<f32>) -> Vec<f32> {
    match op {
        Op::Conv {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            pad,
        } => {
            let (h, w) = (shape[1], shape[2]);
            let oh = h + 2 * pad + 1 - kernel;
            let ow = w + 2 * pad + 1 - kernel;
            let out = conv2d(
                &x,
                *in_channels,
                h,
                w,
                weight,
                bias,
                *out_channels,
                *kernel,
                *pad,
                scratch,
            );
            *shape = vec![*out_channels, oh, ow];
            out
        }
        Op::BatchNorm {
            mean,
            std,
            gamma,
            beta,
        } => {
            let plane = shape[1] * shape[2];
            let mut x = x;
            for (c, chunk) in x.chunks_exact_mut(plane).enumerate() {
                for v in chunk {
                    *v = (*v - mean[c]) / std[c] * gamma[c] + beta[c];
                }
            }
            x
        }
        Op::Relu => x.into_iter().map(|v| v.max(0.0)).collect(),
        Op::MaxPool2 => {
            let (c, h, w) = (shape[0], shape[1], shape[2]);
            let (oh, ow) = (h / 2, w / 2);
            let mut out = vec![0.0; c * oh * ow];
            for ch in 0..c {
                let src = &x[ch * h * w..(ch + 1) * h * w];
                for r in 0..oh {
                    for q in 0..ow {
                        let i = 2 * r * w + 2 * q;
                        out[(ch * oh + r) * ow + q] =
                            src[i].max(src[i + 1]).max(src[i + w]).max(src[i + w + 1]);
                    }
                }
            }
            *shape = vec![c, oh, ow];
            out
        }
        Op::Flatten => {
            *shape = vec![x.len()];
            x
        }
        Op::Dense {
            weight,
            bias,
            inputs,
            outputs,
        } => {
            let out: Vec<f32> = (0..*outputs)
                .map(|o| {
                    let row = &weight[o * inputs..(o + 1) * inputs];
                    row.iter().zip(&x).map(|(a, b)| a * b).sum::<f32>() + bias[o]
                })
                .collect();
            *shape = vec![*outputs];
            out
        }
        Op::Identity => x,
    }
}

/// Zero-padded 2-D convolution via im2col and a single SGEMM.
#[allow(clippy::too_many_arguments)]
fn conv2d(
    x: &[f32],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f32],
    bias: &[f32],
    cout: usize,
    k: usize,
    pad: usize,
    col: &mut Vec<f32>,
) -> Vec<f32> {
    let oh = h + 2 * pad + 1 - k;
    let ow = w + 2 * pad + 1 - k;
    let n = oh * ow;
    let depth = cin * k * k;
    col.clear();
    col.resize(depth * n, 0.0);
    for c in 0..cin {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((c * k + ky) * k + kx) * n..][..n];
                for y in 0..oh {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for xo in 0..ow {
                        let sx = xo as isize + kx as isize - pad as isize;
                        if sx >= 0 && sx < w as isize {
                            row[y * ow + xo] = src[sx as usize];
                        }
                    }
                }
            }
        }
    }
    let mut out = vec![0.0f32; cout * n];
    for (o, chunk) in out.chunks_exact_mut(n).enumerate() {
        chunk.fill(bias[o]);
    }
    // SAFETY: slices cover m×k, k×n and m×n with the given row-major strides.
    unsafe {
        matrixmultiply::sgemm(
            cout,
            depth,
            n,
            1.0,
            weight.as_ptr(),
            depth as isize,
            1,
            col.as_ptr(),
            n as isize,
            1,
            1.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    out
}
