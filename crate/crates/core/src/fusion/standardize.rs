use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_STD_FLOOR: f64 = 1e-6;

/// Per-dimension z-scoring fitted on training vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation, already floored.
    pub std: Vec<f64>,
    pub floor: f64,
}

impl Standardizer {
    pub fn fit(vectors: &[Vec<f64>], floor: f64) -> Result<Self> {
        if vectors.len() < 2 {
            return Err(Error::validation(format!(
                "standardizer needs at least 2 training vectors, got {}",
                vectors.len()
            )));
        }
        if !(floor > 0.0) {
            return Err(Error::config("standard deviation floor must be positive"));
        }
        let width = vectors[0].len();
        if vectors.iter().any(|v| v.len() != width) {
            return Err(Error::shape("training vectors differ in width"));
        }
        let n = vectors.len() as f64;
        let mut mean = vec![0.0; width];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for v in vectors {
            for ((s, x), m) in var.iter_mut().zip(v).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt().max(floor)).collect();
        Ok(Standardizer { mean, std, floor })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v)?;
        Ok(v.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect())
    }

    pub fn invert(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v)?;
        Ok(v.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((z, m), s)| z * s + m)
            .collect())
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.width() {
            return Err(Error::shape(format!(
                "standardizer fitted on width {}, got {}",
                self.width(),
                v.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_moments() {
        let s = Standardizer::fit(&[vec![0.0], vec![2.0]], DEFAULT_STD_FLOOR).unwrap();
        assert_eq!(s.mean, vec![1.0]);
        assert_eq!(s.std, vec![1.0]);
        assert_eq!(s.apply(&[3.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn constant_dimension_is_floored() {
        let s = Standardizer::fit(&[vec![4.0, 1.0], vec![4.0, 3.0]], DEFAULT_STD_FLOOR).unwrap();
        assert_eq!(s.std[0], DEFAULT_STD_FLOOR);
        assert_eq!(s.apply(&[4.0, 2.0]).unwrap()[0], 0.0);
        assert!(Standardizer::fit(&[vec![1.0]], DEFAULT_STD_FLOOR).is_err());
        assert!(s.apply(&[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn centred_and_invertible(
            data in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 4), 2..40),
        ) {
            let s = Standardizer::fit(&data, DEFAULT_STD_FLOOR).unwrap();
            let z: Vec<Vec<f64>> = data.iter().map(|v| s.apply(v).unwrap()).collect();
            for j in 0..4 {
                let m: f64 = z.iter().map(|v| v[j]).sum::<f64>() / z.len() as f64;
                prop_assert!(m.abs() < 1e-9);
            }
            for (v, zv) in data.iter().zip(&z) {
                let back = s.invert(zv).unwrap();
                for (j, (a, b)) in back.iter().zip(v).enumerate() {
                    if s.std[j] > s.floor {
                        prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
                    }
                }
            }
        }
    }
}
