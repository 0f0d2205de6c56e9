use super::matrix::Matrix;
use crate::error::{Error, Result};

fn check_shapes(pred: &Matrix, target: &Matrix) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(format!(
            "prediction {:?} and target {:?} differ in shape",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(())
}

/// Mean absolute elementwise difference.
pub fn l1_loss(pred: &Matrix, target: &Matrix) -> Result<f64> {
    check_shapes(pred, target)?;
    let n = pred.as_slice().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(sum / n as f64)
}

/// Gradient of [`l1_loss`] with respect to `pred`; the subgradient at a tie is 0.
pub fn l1_loss_grad(pred: &Matrix, target: &Matrix) -> Result<Matrix> {
    check_shapes(pred, target)?;
    let n = pred.as_slice().len().max(1) as f64;
    let data = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| {
            if p > t {
                1.0 / n
            } else if p < t {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Matrix::from_vec(pred.rows(), pred.cols(), data)
}

/// Per-row mean absolute difference, the same reduction as the loss.
pub fn row_l1(pred: &Matrix, target: &Matrix) -> Result<Vec<f64>> {
    check_shapes(pred, target)?;
    let width = pred.cols().max(1) as f64;
    Ok(pred
        .iter_rows()
        .zip(target.iter_rows())
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>() / width)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(v: &[f64]) -> Matrix {
        Matrix::from_rows(&[v]).unwrap()
    }

    #[test]
    fn hand_values() {
        let a = row(&[1.0, 3.0]);
        assert_eq!(l1_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(l1_loss(&a, &row(&[2.0, 2.0])).unwrap(), 1.0);
        assert!(l1_loss(&a, &row(&[1.0])).is_err());
        let g = l1_loss_grad(&row(&[1.0, 3.0, 2.0]), &row(&[2.0, 2.0, 2.0])).unwrap();
        assert_eq!(g.as_slice(), &[-1.0 / 3.0, 1.0 / 3.0, 0.0]);
    }

    proptest! {
        #[test]
        fn nonnegative_zero_iff_equal_and_homogeneous(
            p in prop::collection::vec(-10.0f64..10.0, 1..20),
            shift in prop::collection::vec(-10.0f64..10.0, 20),
            c in -5.0f64..5.0,
        ) {
            let t: Vec<f64> = p.iter().zip(&shift).map(|(a, b)| a + b).collect();
            let (pm, tm) = (row(&p), row(&t));
            let loss = l1_loss(&pm, &tm).unwrap();
            prop_assert!(loss >= 0.0);
            prop_assert_eq!(loss == 0.0, p == t);
            let scaled = l1_loss(&pm.map(|v| v * c), &tm.map(|v| v * c)).unwrap();
            prop_assert!((scaled - c.abs() * loss).abs() <= 1e-9 * (1.0 + loss.abs()));
        }
    }
}
