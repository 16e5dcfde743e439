use serde::{Deserialize, Serialize};

use super::latent::LatentModel;
use crate::error::{Error, Result};
use crate::np::kl_diag_gaussian;
use crate::rng::Rng;

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_terms(terms: &[f64]) -> Self {
        let n = terms.len() as f64;
        let value = terms.iter().sum::<f64>() / n;
        let var = if terms.len() > 1 {
            terms.iter().map(|t| (t - value).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Estimate {
            value,
            stderr: (var / n).sqrt(),
            samples: terms.len(),
        }
    }
}

/// Latent information gain `E_x̂ KL(q(z | x̂, θ, S) ‖ q(z | S))`.
///
/// Draws `n_z` latents from the prior, `n_x` observations from the
/// likelihood of each, re-encodes every observation and averages the
/// closed-form KLs.
pub fn latent_information_gain<M: LatentModel + ?Sized>(
    model: &M,
    theta: &[f64],
    n_z: usize,
    n_x: usize,
    rng: &mut Rng,
) -> Result<Estimate> {
    if n_z == 0 || n_x == 0 {
        return Err(Error::validation("LIG needs at least one latent and one observation draw"));
    }
    let prior = model.prior();
    let zs: Vec<Vec<f64>> = (0..n_z).map(|_| prior.sample(rng)).collect();
    let liks = model.likelihoods(theta, &zs)?;
    let xs: Vec<Vec<f64>> = liks
        .iter()
        .flat_map(|l| (0..n_x).map(|_| l.sample(rng)).collect::<Vec<_>>())
        .collect();
    let posts = model.posteriors(theta, &xs)?;
    let terms = posts
        .iter()
        .map(|q| kl_diag_gaussian(q, prior))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Estimate::from_terms(&terms))
}

fn log_mean_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + (v.iter().map(|x| (x - m).exp()).sum::<f64>() / v.len() as f64).ln()
}

/// Nested Monte Carlo expected information gain
/// `(1/N) Σ_n [log p(x̂_n | z_n) − log (1/M) Σ_m p(x̂_n | z_m)]`
/// with `z_n, z_m` from the prior and `x̂_n ~ p(x | z_n)`.
pub fn eig_nested_mc<M: LatentModel + ?Sized>(
    model: &M,
    theta: &[f64],
    outer: usize,
    inner: usize,
    rng: &mut Rng,
) -> Result<Estimate> {
    if inner < 2 || outer < 1 {
        return Err(Error::validation("nested MC needs N >= 1 and M >= 2"));
    }
    let prior = model.prior();
    let zo: Vec<Vec<f64>> = (0..outer).map(|_| prior.sample(rng)).collect();
    let lo = model.likelihoods(theta, &zo)?;
    let xs: Vec<Vec<f64>> = lo.iter().map(|l| l.sample(rng)).collect();
    let zi: Vec<Vec<f64>> = (0..inner).map(|_| prior.sample(rng)).collect();
    let li = model.likelihoods(theta, &zi)?;
    let mut inner_lp = vec![0.0; inner];
    let terms: Vec<f64> = xs
        .iter()
        .zip(&lo)
        .map(|(x, l)| {
            for (v, lm) in inner_lp.iter_mut().zip(&li) {
                *v = lm.log_prob(x);
            }
            l.log_prob(x) - log_mean_exp(&inner_lp)
        })
        .collect();
    if terms.iter().any(|t| !t.is_finite()) {
        return Err(Error::numerical("nested MC produced a non-finite term"));
    }
    Ok(Estimate::from_terms(&terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::ConjugateModel;
    use crate::rng::from_seed;

    #[test]
    fn log_mean_exp_is_stable() {
        let v = [-1000.0, -1000.0];
        assert!((log_mean_exp(&v) + 1000.0).abs() < 1e-12);
    }

    #[test]
    fn lig_of_exact_model_is_mutual_information() {
        let m = ConjugateModel::new(1, 1.0, 0.5).unwrap();
        let e = latent_information_gain(&m, &[1.0], 2000, 1, &mut from_seed(3)).unwrap();
        // The KL of an exact conjugate posterior has a χ²-shaped spread; 4 SE.
        assert!((e.value - m.mutual_information(&[1.0])).abs() < 4.0 * e.stderr);
    }

    #[test]
    fn inner_sample_count_is_checked() {
        let m = ConjugateModel::new(1, 1.0, 0.5).unwrap();
        assert!(eig_nested_mc(&m, &[1.0], 10, 1, &mut from_seed(0)).is_err());
    }
}
