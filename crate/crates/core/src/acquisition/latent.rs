use crate::error::{Error, Result};
use crate::np::{Context, GaussianDiag, TrainedSurrogate};

/// A latent-variable predictive model as seen by the information-gain
/// estimators: a prior over `z`, a Gaussian likelihood `p(x | z, θ)`, and a
/// posterior after one more observation.
pub trait LatentModel: Sync {
    fn prior(&self) -> &GaussianDiag;

    /// Posterior over `z` after observing each `x` at `theta`.
    fn posteriors(&self, theta: &[f64], xs: &[Vec<f64>]) -> Result<Vec<GaussianDiag>>;

    /// `p(x | z, theta)` for each latent sample.
    fn likelihoods(&self, theta: &[f64], zs: &[Vec<f64>]) -> Result<Vec<GaussianDiag>>;
}

/// A trained surrogate together with its current context. `theta` is in raw
/// units; observations are in normalized units.
pub struct SurrogateModel<'a> {
    pub surrogate: &'a TrainedSurrogate,
    pub context: &'a Context,
}

impl<'a> SurrogateModel<'a> {
    pub fn new(surrogate: &'a TrainedSurrogate, context: &'a Context) -> Result<Self> {
        if surrogate.steps == 0 {
            return Err(Error::validation("surrogate has not been trained"));
        }
        Ok(SurrogateModel { surrogate, context })
    }
}

impl LatentModel for SurrogateModel<'_> {
    fn prior(&self) -> &GaussianDiag {
        &self.context.prior
    }

    fn posteriors(&self, theta: &[f64], xs: &[Vec<f64>]) -> Result<Vec<GaussianDiag>> {
        let th = self.surrogate.normalize_theta(theta);
        self.surrogate.posteriors(self.context, &th, xs)
    }

    fn likelihoods(&self, theta: &[f64], zs: &[Vec<f64>]) -> Result<Vec<GaussianDiag>> {
        let th = self.surrogate.normalize_theta(theta);
        let std = self.surrogate.obs_std();
        self.surrogate
            .decode_means(&th, zs)?
            .into_iter()
            .map(|m| GaussianDiag::new(m, std.clone()))
            .collect()
    }
}

/// Linear-Gaussian channel `x_j = θ_j z_j + noise`, `z ~ N(0, σ_z² I)`,
/// noise `N(0, σ_x²)`. Posteriors are exact, so every information estimator
/// has the closed-form target `Σ_j ½ ln(1 + θ_j² σ_z² / σ_x²)`.
#[derive(Clone, Debug)]
pub struct ConjugateModel {
    pub sigma_z: f64,
    pub sigma_x: f64,
    prior: GaussianDiag,
}

impl ConjugateModel {
    pub fn new(dim: usize, sigma_z: f64, sigma_x: f64) -> Result<Self> {
        if !(sigma_z > 0.0 && sigma_x > 0.0) || dim == 0 {
            return Err(Error::validation("conjugate model needs positive scales and dim >= 1"));
        }
        Ok(ConjugateModel {
            sigma_z,
            sigma_x,
            prior: GaussianDiag::new(vec![0.0; dim], vec![sigma_z; dim])?,
        })
    }

    pub fn mutual_information(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .map(|g| 0.5 * (1.0 + g * g * self.sigma_z * self.sigma_z / (self.sigma_x * self.sigma_x)).ln())
            .sum()
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.prior.dim() {
            return Err(Error::shape("conjugate", format!("θ has {} entries", theta.len())));
        }
        Ok(())
    }
}

impl LatentModel for ConjugateModel {
    fn prior(&self) -> &GaussianDiag {
        &self.prior
    }

    fn posteriors(&self, theta: &[f64], xs: &[Vec<f64>]) -> Result<Vec<GaussianDiag>> {
        self.check(theta)?;
        let (vz, vx) = (self.sigma_z * self.sigma_z, self.sigma_x * self.sigma_x);
        xs.iter()
            .map(|x| {
                let prec: Vec<f64> = theta.iter().map(|g| 1.0 / vz + g * g / vx).collect();
                let mean = theta.iter().zip(x).zip(&prec).map(|((g, x), p)| g * x / vx / p).collect();
                GaussianDiag::new(mean, prec.iter().map(|p| p.recip().sqrt()).collect())
            })
            .collect()
    }

    fn likelihoods(&self, theta: &[f64], zs: &[Vec<f64>]) -> Result<Vec<GaussianDiag>> {
        self.check(theta)?;
        zs.iter()
            .map(|z| {
                GaussianDiag::new(
                    theta.iter().zip(z).map(|(g, z)| g * z).collect(),
                    vec![self.sigma_x; theta.len()],
                )
            })
            .collect()
    }
}
