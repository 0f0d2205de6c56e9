//! A fixed chain of linear blocks with cached forward passes and exact
//! reverse-mode gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    batchnorm_backward, batchnorm_forward, dropout_backward, dropout_forward, linear_backward,
    linear_forward, relu, relu_backward, BatchNormCache, BatchNormLayer, DropoutLayer,
    LinearLayer, Mode,
};
use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Linear -> BatchNorm -> ReLU -> Dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBlock {
    pub linear: LinearLayer,
    pub norm: BatchNormLayer,
    pub dropout: DropoutLayer,
}

impl LinearBlock {
    pub fn new(linear: LinearLayer, norm: BatchNormLayer, dropout: DropoutLayer) -> Result<Self> {
        if norm.features() != linear.outputs() {
            return Err(Error::shape(format!(
                "batchnorm has {} features but linear layer emits {}",
                norm.features(),
                linear.outputs()
            )));
        }
        norm.validate()?;
        Ok(LinearBlock {
            linear,
            norm,
            dropout,
        })
    }

    pub fn init<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        dropout_p: f64,
        rng: &mut R,
    ) -> Result<Self> {
        LinearBlock::new(
            LinearLayer::init(inputs, outputs, rng),
            BatchNormLayer::new(outputs),
            DropoutLayer::new(dropout_p)?,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Stage {
    Block(LinearBlock),
    /// A bare linear layer, used as the output projection.
    Linear(LinearLayer),
}

impl Stage {
    fn linear(&self) -> &LinearLayer {
        match self {
            Stage::Block(b) => &b.linear,
            Stage::Linear(l) => l,
        }
    }

    pub fn inputs(&self) -> usize {
        self.linear().inputs()
    }

    pub fn outputs(&self) -> usize {
        self.linear().outputs()
    }
}

#[derive(Debug, Clone)]
enum StageCache {
    Block {
        input: Matrix,
        pre_norm: Matrix,
        norm: Option<BatchNormCache>,
        normalized_out: Matrix,
        mask: Matrix,
    },
    Linear {
        input: Matrix,
    },
}

/// Activations recorded by [`Network::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: Mode,
    stages: Vec<StageCache>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StageGrads {
    Block {
        weights: Matrix,
        bias: Vec<f64>,
        gamma: Vec<f64>,
        beta: Vec<f64>,
    },
    Linear {
        weights: Matrix,
        bias: Vec<f64>,
    },
}

/// Parameter gradients in the same order as [`Network::parameters_mut`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub stages: Vec<StageGrads>,
}

impl Gradients {
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for s in &self.stages {
            match s {
                StageGrads::Block {
                    weights,
                    bias,
                    gamma,
                    beta,
                } => {
                    out.push(weights.as_slice());
                    out.push(bias.as_slice());
                    out.push(gamma.as_slice());
                    out.push(beta.as_slice());
                }
                StageGrads::Linear { weights, bias } => {
                    out.push(weights.as_slice());
                    out.push(bias.as_slice());
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    stages: Vec<Stage>,
}

impl Network {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::config("a network needs at least one stage"));
        }
        for (i, pair) in stages.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::shape(format!(
                    "stage {i} emits {} values but stage {} expects {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        Ok(Network { stages })
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn inputs(&self) -> usize {
        self.stages[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.stages[self.stages.len() - 1].outputs()
    }

    /// Number of linear layers, counting the ones inside blocks.
    pub fn linear_layer_count(&self) -> usize {
        self.stages.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.stages
            .iter()
            .map(|s| match s {
                Stage::Block(b) => {
                    b.linear.weights.as_slice().len() + b.linear.bias.len() + 2 * b.norm.features()
                }
                Stage::Linear(l) => l.weights.as_slice().len() + l.bias.len(),
            })
            .sum()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for s in &mut self.stages {
            match s {
                Stage::Block(b) => {
                    out.push(b.linear.weights.as_mut_slice());
                    out.push(b.linear.bias.as_mut_slice());
                    out.push(b.norm.gamma.as_mut_slice());
                    out.push(b.norm.beta.as_mut_slice());
                }
                Stage::Linear(l) => {
                    out.push(l.weights.as_mut_slice());
                    out.push(l.bias.as_mut_slice());
                }
            }
        }
        out
    }

    /// Forward pass recording activations. Training mode updates batchnorm
    /// running statistics and draws dropout masks from `rng`.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        x: &Matrix,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Matrix, ForwardCache)> {
        let mut caches = Vec::with_capacity(self.stages.len());
        let mut current = x.clone();
        for stage in &mut self.stages {
            match stage {
                Stage::Block(b) => {
                    let z = linear_forward(&current, &b.linear)?;
                    let (n, norm_cache) = batchnorm_forward(&z, &mut b.norm, mode)?;
                    let a = relu(&n);
                    let (d, mask) = dropout_forward(&a, &b.dropout, mode, rng);
                    caches.push(StageCache::Block {
                        input: current,
                        pre_norm: z,
                        norm: norm_cache,
                        normalized_out: n,
                        mask,
                    });
                    current = d;
                }
                Stage::Linear(l) => {
                    let y = linear_forward(&current, l)?;
                    caches.push(StageCache::Linear { input: current });
                    current = y;
                }
            }
        }
        Ok((
            current,
            ForwardCache {
                mode,
                stages: caches,
            },
        ))
    }

    /// Deterministic inference pass; leaves the network untouched.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.inputs() {
            return Err(Error::shape(format!(
                "network expects {} inputs, got {}",
                self.inputs(),
                x.cols()
            )));
        }
        let mut current = x.clone();
        for stage in &self.stages {
            current = match stage {
                Stage::Block(b) => {
                    let z = linear_forward(&current, &b.linear)?;
                    // inference batchnorm reads but never writes the layer
                    let mut norm = b.norm.clone();
                    let (n, _) = batchnorm_forward(&z, &mut norm, Mode::Inference)?;
                    relu(&n)
                }
                Stage::Linear(l) => linear_forward(&current, l)?,
            };
        }
        Ok(current)
    }

    /// Reverse pass from the gradient of a scalar objective with respect to
    /// the network output. Returns parameter gradients and the input gradient.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Matrix) -> Result<(Gradients, Matrix)> {
        if cache.stages.len() != self.stages.len() {
            return Err(Error::shape("forward cache does not belong to this network"));
        }
        let mut grads = Vec::with_capacity(self.stages.len());
        let mut g = grad_out.clone();
        for (stage, sc) in self.stages.iter().zip(&cache.stages).rev() {
            match (stage, sc) {
                (
                    Stage::Block(b),
                    StageCache::Block {
                        input,
                        pre_norm,
                        norm,
                        normalized_out,
                        mask,
                    },
                ) => {
                    let g_act = dropout_backward(&b.dropout, mask, &g)?;
                    let g_norm = relu_backward(normalized_out, &g_act)?;
                    let (norm_grads, g_lin) = match (cache.mode, norm) {
                        (Mode::Training, Some(nc)) => {
                            let (ng, gi) = batchnorm_backward(&b.norm, nc, &g_norm)?;
                            ((ng.gamma, ng.beta), gi)
                        }
                        (Mode::Inference, None) => inference_norm_backward(&b.norm, pre_norm, &g_norm),
                        _ => return Err(Error::shape("missing batchnorm cache")),
                    };
                    let (lg, gi) = linear_backward(input, &b.linear, &g_lin)?;
                    grads.push(StageGrads::Block {
                        weights: lg.weights,
                        bias: lg.bias,
                        gamma: norm_grads.0,
                        beta: norm_grads.1,
                    });
                    g = gi;
                }
                (Stage::Linear(l), StageCache::Linear { input }) => {
                    let (lg, gi) = linear_backward(input, l, &g)?;
                    grads.push(StageGrads::Linear {
                        weights: lg.weights,
                        bias: lg.bias,
                    });
                    g = gi;
                }
                _ => return Err(Error::shape("forward cache does not match stage kinds")),
            }
        }
        grads.reverse();
        Ok((Gradients { stages: grads }, g))
    }
}

/// Batchnorm with frozen running statistics is an affine map per feature.
fn inference_norm_backward(
    norm: &BatchNormLayer,
    pre_norm: &Matrix,
    grad: &Matrix,
) -> ((Vec<f64>, Vec<f64>), Matrix) {
    let features = norm.features();
    let inv_std: Vec<f64> = norm
        .running_var
        .iter()
        .map(|v| 1.0 / (v + norm.eps).sqrt())
        .collect();
    let mut dgamma = vec![0.0; features];
    let mut dbeta = vec![0.0; features];
    let mut gi = grad.clone();
    for i in 0..grad.rows() {
        let z = pre_norm.row(i);
        let g = grad.row(i);
        let row = gi.row_mut(i);
        for j in 0..features {
            let xhat = (z[j] - norm.running_mean[j]) * inv_std[j];
            dgamma[j] += g[j] * xhat;
            dbeta[j] += g[j];
            row[j] = g[j] * norm.gamma[j] * inv_std[j];
        }
    }
    ((dgamma, dbeta), gi)
}
