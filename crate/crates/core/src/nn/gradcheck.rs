//! Central finite-difference verification of [`Network::backward`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::Mode;
use super::loss::{l1_loss, l1_loss_grad};
use super::matrix::Matrix;
use super::network::{Network, Stage};
use crate::error::{Error, Result};

/// Denominator floor: gradient entries below this magnitude are compared on an
/// absolute scale, since central differences carry roughly `eps * L / h`
/// (about 1e-11 here) of round-off even where the exact gradient is zero.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub parameters_checked: usize,
    /// (tensor index, entry index) of the worst disagreement
    pub worst: (usize, usize),
}

/// `|a - n| / max(|a|, |n|, RELATIVE_ERROR_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// L1 target sitting one unit away from every output entry, alternating in
/// sign, so perturbations of size `h` never cross a kink of the loss.
fn offset_target(output: &Matrix) -> Matrix {
    let mut t = output.clone();
    for (k, v) in t.as_mut_slice().iter_mut().enumerate() {
        *v += if k % 2 == 0 { 1.0 } else { -1.0 };
    }
    t
}

fn training_loss(net: &mut Network, batch: &Matrix, target: &Matrix) -> Result<f64> {
    // dropout is off, so the generator is never consulted
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (out, _) = net.forward(batch, Mode::Training, &mut rng)?;
    l1_loss(&out, target)
}

/// Compares analytic gradients of the training-mode L1 objective with central
/// differences `(L(p+h) - L(p-h)) / 2h` over every parameter.
pub fn gradient_check(network: &Network, batch: &Matrix, h: f64) -> Result<GradCheckReport> {
    if !(h > 0.0) {
        return Err(Error::config("finite-difference step must be positive"));
    }
    for stage in network.stages() {
        if let Stage::Block(b) = stage {
            if b.dropout.probability() != 0.0 {
                return Err(Error::config(
                    "gradient check requires dropout probability 0",
                ));
            }
        }
    }

    let mut net = network.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (out, cache) = net.forward(batch, Mode::Training, &mut rng)?;
    let target = offset_target(&out);
    let upstream = l1_loss_grad(&out, &target)?;
    let (grads, _) = net.backward(&cache, &upstream)?;
    let analytic: Vec<Vec<f64>> = grads.tensors().into_iter().map(|t| t.to_vec()).collect();

    let mut net = network.clone();
    let shapes: Vec<usize> = net.parameters_mut().iter().map(|p| p.len()).collect();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        parameters_checked: 0,
        worst: (0, 0),
    };
    for (t, &len) in shapes.iter().enumerate() {
        for i in 0..len {
            let original = net.parameters_mut()[t][i];
            net.parameters_mut()[t][i] = original + h;
            let plus = training_loss(&mut net, batch, &target)?;
            net.parameters_mut()[t][i] = original - h;
            let minus = training_loss(&mut net, batch, &target)?;
            net.parameters_mut()[t][i] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(analytic[t][i], numeric);
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = (t, i);
            }
            report.parameters_checked += 1;
        }
    }
    Ok(report)
}
