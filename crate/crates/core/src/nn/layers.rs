//! The layers making up a linear block: Linear, BatchNorm, ReLU and Dropout.
//!
//! Each layer exposes a forward pass and, where it has state or parameters,
//! an exact reverse-mode backward pass driven by values cached in the forward.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const DEFAULT_BN_EPS: f64 = 1e-5;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.1;

/// Whether normalization and dropout use batch statistics and random masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Training,
    Inference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLayer {
    /// out x in
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LinearLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::shape(format!(
                "bias of length {} does not match {} output rows",
                bias.len(),
                weights.rows()
            )));
        }
        if !weights.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::validation("linear layer has non-finite parameters"));
        }
        Ok(LinearLayer { weights, bias })
    }

    /// Glorot-uniform weights in ±sqrt(6/(fan_in+fan_out)), zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (inputs + outputs) as f64).sqrt();
        let data = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        LinearLayer {
            weights: Matrix::from_vec(outputs, inputs, data).expect("sized by construction"),
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }
}

/// `y[b] = W x[b] + bias` for every row of the batch.
pub fn linear_forward(x: &Matrix, layer: &LinearLayer) -> Result<Matrix> {
    if x.cols() != layer.inputs() {
        return Err(Error::shape(format!(
            "linear layer expects {} inputs, got {}",
            layer.inputs(),
            x.cols()
        )));
    }
    let mut y = x.matmul_transposed(&layer.weights)?;
    let cols = y.cols();
    for (i, v) in y.as_mut_slice().iter_mut().enumerate() {
        *v += layer.bias[i % cols];
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Returns parameter gradients and the gradient with respect to the input.
pub fn linear_backward(
    x: &Matrix,
    layer: &LinearLayer,
    grad_out: &Matrix,
) -> Result<(LinearGrads, Matrix)> {
    if grad_out.cols() != layer.outputs() || grad_out.rows() != x.rows() {
        return Err(Error::shape("upstream gradient does not match linear output"));
    }
    let weights = grad_out.transposed_matmul(x)?;
    let bias = grad_out.column_sums();
    let grad_in = grad_out.matmul(&layer.weights)?;
    Ok((LinearGrads { weights, bias }, grad_in))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormLayer {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNormLayer {
    pub fn new(features: usize) -> Self {
        BatchNormLayer {
            gamma: vec![1.0; features],
            beta: vec![0.0; features],
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            eps: DEFAULT_BN_EPS,
            momentum: DEFAULT_BN_MOMENTUM,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.features();
        if self.beta.len() != n || self.running_mean.len() != n || self.running_var.len() != n {
            return Err(Error::shape("batchnorm vectors have inconsistent lengths"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("batchnorm eps must be positive"));
        }
        if !(self.momentum > 0.0 && self.momentum < 1.0) {
            return Err(Error::config("batchnorm momentum must lie in (0, 1)"));
        }
        if self.running_var.iter().any(|v| *v < 0.0) {
            return Err(Error::validation("batchnorm running variance is negative"));
        }
        Ok(())
    }
}

/// Values the training-mode backward pass needs.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub normalized: Matrix,
    pub inv_std: Vec<f64>,
}

/// Forward pass. In Training mode the running statistics are updated with the
/// unbiased batch variance, while normalization itself uses the biased one.
pub fn batchnorm_forward(
    x: &Matrix,
    layer: &mut BatchNormLayer,
    mode: Mode,
) -> Result<(Matrix, Option<BatchNormCache>)> {
    let features = layer.features();
    if x.cols() != features {
        return Err(Error::shape(format!(
            "batchnorm expects {features} features, got {}",
            x.cols()
        )));
    }
    match mode {
        Mode::Inference => {
            let inv_std: Vec<f64> = layer
                .running_var
                .iter()
                .map(|v| 1.0 / (v + layer.eps).sqrt())
                .collect();
            let mut y = x.clone();
            for i in 0..y.rows() {
                for (j, v) in y.row_mut(i).iter_mut().enumerate() {
                    *v = (*v - layer.running_mean[j]) * inv_std[j] * layer.gamma[j] + layer.beta[j];
                }
            }
            Ok((y, None))
        }
        Mode::Training => {
            let n = x.rows();
            if n < 2 {
                return Err(Error::shape(
                    "training-mode batchnorm needs a batch of at least 2 rows",
                ));
            }
            let nf = n as f64;
            let mean: Vec<f64> = x.column_sums().into_iter().map(|s| s / nf).collect();
            let mut var = vec![0.0; features];
            for row in x.iter_rows() {
                for ((acc, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    let d = v - m;
                    *acc += d * d;
                }
            }
            for v in var.iter_mut() {
                *v /= nf;
            }
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + layer.eps).sqrt()).collect();

            let mut normalized = x.clone();
            let mut y = x.clone();
            for i in 0..n {
                let nr = normalized.row_mut(i);
                for j in 0..features {
                    nr[j] = (nr[j] - mean[j]) * inv_std[j];
                }
                let yr = y.row_mut(i);
                for j in 0..features {
                    yr[j] = normalized.get(i, j) * layer.gamma[j] + layer.beta[j];
                }
            }

            let m = layer.momentum;
            let unbias = nf / (nf - 1.0);
            for j in 0..features {
                layer.running_mean[j] = (1.0 - m) * layer.running_mean[j] + m * mean[j];
                layer.running_var[j] = (1.0 - m) * layer.running_var[j] + m * var[j] * unbias;
            }
            Ok((y, Some(BatchNormCache { normalized, inv_std })))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrads {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Backward pass of training-mode batch normalization.
pub fn batchnorm_backward(
    layer: &BatchNormLayer,
    cache: &BatchNormCache,
    grad_out: &Matrix,
) -> Result<(BatchNormGrads, Matrix)> {
    let (n, features) = grad_out.shape();
    if cache.normalized.shape() != (n, features) {
        return Err(Error::shape("upstream gradient does not match batchnorm cache"));
    }
    let nf = n as f64;
    let mut dgamma = vec![0.0; features];
    let mut dbeta = vec![0.0; features];
    for i in 0..n {
        let g = grad_out.row(i);
        let xh = cache.normalized.row(i);
        for j in 0..features {
            dgamma[j] += g[j] * xh[j];
            dbeta[j] += g[j];
        }
    }
    // dx = gamma * inv_std / N * (N*dy - sum(dy) - xhat * sum(dy*xhat))
    let mut grad_in = Matrix::zeros(n, features);
    for i in 0..n {
        let g = grad_out.row(i);
        let xh = cache.normalized.row(i);
        let out = grad_in.row_mut(i);
        for j in 0..features {
            out[j] = layer.gamma[j] * cache.inv_std[j] / nf
                * (nf * g[j] - dbeta[j] - xh[j] * dgamma[j]);
        }
    }
    Ok((
        BatchNormGrads {
            gamma: dgamma,
            beta: dbeta,
        },
        grad_in,
    ))
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| v.max(0.0))
}

/// Gradient gate of ReLU: passes where the pre-activation is strictly positive.
pub fn relu_backward(pre_activation: &Matrix, grad_out: &Matrix) -> Result<Matrix> {
    if pre_activation.shape() != grad_out.shape() {
        return Err(Error::shape("relu gradient shape mismatch"));
    }
    let data = pre_activation
        .as_slice()
        .iter()
        .zip(grad_out.as_slice())
        .map(|(&z, &g)| if z > 0.0 { g } else { 0.0 })
        .collect();
    Matrix::from_vec(grad_out.rows(), grad_out.cols(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutLayer {
    drop_probability: f64,
}

impl DropoutLayer {
    pub fn new(drop_probability: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&drop_probability) {
            return Err(Error::config(format!(
                "dropout probability must lie in [0, 1), got {drop_probability}"
            )));
        }
        Ok(DropoutLayer { drop_probability })
    }

    pub fn probability(&self) -> f64 {
        self.drop_probability
    }
}

/// Inverted dropout. The returned mask holds 1.0 for kept entries and 0.0 for
/// dropped ones; kept entries are scaled by `1/(1-p)` in the output.
pub fn dropout_forward<R: Rng + ?Sized>(
    x: &Matrix,
    layer: &DropoutLayer,
    mode: Mode,
    rng: &mut R,
) -> (Matrix, Matrix) {
    let p = layer.drop_probability;
    if mode == Mode::Inference || p == 0.0 {
        return (x.clone(), x.map(|_| 1.0));
    }
    let scale = 1.0 / (1.0 - p);
    let mut mask = Matrix::zeros(x.rows(), x.cols());
    let mut y = Matrix::zeros(x.rows(), x.cols());
    for ((m, out), v) in mask
        .as_mut_slice()
        .iter_mut()
        .zip(y.as_mut_slice())
        .zip(x.as_slice())
    {
        if rng.random::<f64>() >= p {
            *m = 1.0;
            *out = v * scale;
        }
    }
    (y, mask)
}

pub fn dropout_backward(layer: &DropoutLayer, mask: &Matrix, grad_out: &Matrix) -> Result<Matrix> {
    if mask.shape() != grad_out.shape() {
        return Err(Error::shape("dropout mask does not match gradient"));
    }
    let scale = 1.0 / (1.0 - layer.drop_probability);
    let data = mask
        .as_slice()
        .iter()
        .zip(grad_out.as_slice())
        .map(|(&m, &g)| if m != 0.0 { g * scale } else { 0.0 })
        .collect();
    Matrix::from_vec(grad_out.rows(), grad_out.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn linear_identity_and_hand_values() {
        let x = m(&[&[1.0, 2.0]]);
        let id = LinearLayer::new(Matrix::identity(2), vec![0.0, 0.0]).unwrap();
        assert_eq!(linear_forward(&x, &id).unwrap(), x);

        let layer = LinearLayer::new(m(&[&[1.0, 1.0], &[0.0, 1.0]]), vec![1.0, 0.0]).unwrap();
        // dot products: [1+2+1, 0+2+0]
        assert_eq!(linear_forward(&x, &layer).unwrap(), m(&[&[4.0, 2.0]]));

        let wide = m(&[&[1.0, 2.0, 3.0]]);
        assert!(matches!(linear_forward(&wide, &layer), Err(Error::Shape(_))));
    }

    #[test]
    fn init_respects_glorot_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = LinearLayer::init(10, 6, &mut rng);
        let bound = (6.0f64 / 16.0).sqrt();
        assert!(layer.weights.as_slice().iter().all(|w| w.abs() <= bound));
        assert!(layer.bias.iter().all(|b| *b == 0.0));
    }

    #[test]
    fn batchnorm_training_cases() {
        let mut bn = BatchNormLayer::new(2);
        bn.beta = vec![0.5, -3.0];
        let x = m(&[&[7.0, 1.0], &[7.0, 1.0], &[7.0, 1.0]]);
        let (y, _) = batchnorm_forward(&x, &mut bn, Mode::Training).unwrap();
        for row in y.iter_rows() {
            assert_eq!(row, &[0.5, -3.0]);
        }

        // mean 1, biased var 1 -> (x-1)/sqrt(1+eps)
        let mut bn = BatchNormLayer::new(1);
        let (y, _) = batchnorm_forward(&m(&[&[0.0], &[2.0]]), &mut bn, Mode::Training).unwrap();
        let expect = 1.0 / (1.0 + DEFAULT_BN_EPS).sqrt();
        assert!((y.get(0, 0) + expect).abs() < 1e-15);
        assert!((y.get(1, 0) - expect).abs() < 1e-15);
        // running stats move by momentum toward (mean 1, unbiased var 2)
        assert!((bn.running_mean[0] - 0.1).abs() < 1e-15);
        assert!((bn.running_var[0] - (0.9 + 0.1 * 2.0)).abs() < 1e-15);

        let mut bn = BatchNormLayer::new(1);
        assert!(batchnorm_forward(&m(&[&[1.0]]), &mut bn, Mode::Training).is_err());
    }

    #[test]
    fn batchnorm_inference_identity_statistics() {
        let mut bn = BatchNormLayer::new(3);
        let x = m(&[&[1.0, -2.0, 3.5], &[0.0, 4.0, -1.0]]);
        let (y, cache) = batchnorm_forward(&x, &mut bn, Mode::Inference).unwrap();
        assert!(cache.is_none());
        for (a, b) in y.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b).abs() <= b.abs() * 1e-5);
        }
        assert_eq!(bn, BatchNormLayer::new(3));
    }

    #[test]
    fn relu_cases() {
        assert_eq!(relu(&m(&[&[-1.0, 0.0, 2.0]])), m(&[&[0.0, 0.0, 2.0]]));
        let pos = m(&[&[0.0, 1.5, 3.0]]);
        assert_eq!(relu(&pos), pos);
        assert_eq!(relu(&m(&[&[-1.0, -0.1]])), m(&[&[0.0, 0.0]]));
        let g = relu_backward(&m(&[&[-0.5, 2.0]]), &m(&[&[7.0, 7.0]])).unwrap();
        assert_eq!(g, m(&[&[0.0, 7.0]]));
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = m(&[&[1.0, 2.0, 3.0]]);
        let none = DropoutLayer::new(0.0).unwrap();
        let (y, mask) = dropout_forward(&x, &none, Mode::Training, &mut rng);
        assert_eq!(y, x);
        assert!(mask.as_slice().iter().all(|v| *v == 1.0));

        let half = DropoutLayer::new(0.5).unwrap();
        let (y, _) = dropout_forward(&x, &half, Mode::Inference, &mut rng);
        assert_eq!(y, x);

        assert!(DropoutLayer::new(1.0).is_err());
        assert!(DropoutLayer::new(-0.1).is_err());
    }

    #[test]
    fn dropout_empirical_rate_and_reproducibility() {
        let layer = DropoutLayer::new(0.5).unwrap();
        let x = Matrix::from_vec(100, 1000, vec![1.0; 100_000]).unwrap();
        let (y, mask) = dropout_forward(&x, &layer, Mode::Training, &mut ChaCha8Rng::seed_from_u64(5));
        let dropped = mask.as_slice().iter().filter(|v| **v == 0.0).count() as f64 / 1e5;
        assert!((dropped - 0.5).abs() < 0.01, "dropped fraction {dropped}");
        assert!(y
            .as_slice()
            .iter()
            .all(|v| *v == 0.0 || (*v - 2.0).abs() < 1e-15));

        let (_, again) = dropout_forward(&x, &layer, Mode::Training, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(mask, again);

        let g = Matrix::from_vec(100, 1000, vec![1.0; 100_000]).unwrap();
        let back = dropout_backward(&layer, &mask, &g).unwrap();
        for (b, m) in back.as_slice().iter().zip(mask.as_slice()) {
            assert_eq!(*b == 0.0, *m == 0.0);
        }
    }
}
