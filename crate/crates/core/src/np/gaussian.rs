use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Factorized Gaussian given by per-dimension means and standard deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianDiag {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl GaussianDiag {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::shape(
                "gaussian",
                format!("mean has {} entries, std has {}", mean.len(), std.len()),
            ));
        }
        if mean.iter().any(|m| !m.is_finite()) || std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::numerical("gaussian needs finite means and positive stds"));
        }
        Ok(GaussianDiag { mean, std })
    }

    pub fn standard(dim: usize) -> Self {
        GaussianDiag {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Reparameterized draw `mean + std * eta`.
    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.std)
            .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    pub fn log_prob(&self, x: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.std)
            .zip(x)
            .map(|((m, s), x)| {
                let u = (x - m) / s;
                -0.5 * u * u - s.ln() - 0.5 * LN_2PI
            })
            .sum()
    }

    pub fn entropy(&self) -> f64 {
        self.std.iter().map(|s| 0.5 * (1.0 + LN_2PI) + s.ln()).sum()
    }

    /// Concatenates independent blocks into one distribution.
    pub fn concat(parts: &[GaussianDiag]) -> GaussianDiag {
        GaussianDiag {
            mean: parts.iter().flat_map(|p| p.mean.iter().copied()).collect(),
            std: parts.iter().flat_map(|p| p.std.iter().copied()).collect(),
        }
    }
}

/// Closed-form `KL(q ‖ p)` between factorized Gaussians.
pub fn kl_diag_gaussian(q: &GaussianDiag, p: &GaussianDiag) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::shape("kl", format!("dimensions {} and {}", q.dim(), p.dim())));
    }
    let kl: f64 = (0..q.dim())
        .map(|j| {
            let (qs, ps) = (q.std[j], p.std[j]);
            let dm = q.mean[j] - p.mean[j];
            (ps / qs).ln() + (qs * qs + dm * dm) / (2.0 * ps * ps) - 0.5
        })
        .sum();
    Ok(kl.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_closed_forms() {
        let p = GaussianDiag::standard(1);
        let q = GaussianDiag::new(vec![1.0], vec![1.0]).unwrap();
        assert_eq!(kl_diag_gaussian(&q, &p).unwrap(), 0.5);
        assert_eq!(kl_diag_gaussian(&q, &q).unwrap(), 0.0);
        assert!(kl_diag_gaussian(&q, &GaussianDiag::standard(2)).is_err());
    }

    #[test]
    fn entropy_and_log_prob_agree_with_formulas() {
        let g = GaussianDiag::new(vec![0.0, 3.0], vec![1.0, 2.0]).unwrap();
        let h = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() * 2.0 + 2f64.ln();
        assert!((g.entropy() - h).abs() < 1e-12);
        let lp = -LN_2PI - 2f64.ln();
        assert!((g.log_prob(&[0.0, 3.0]) - lp).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_std() {
        assert!(GaussianDiag::new(vec![0.0], vec![0.0]).is_err());
    }
}
