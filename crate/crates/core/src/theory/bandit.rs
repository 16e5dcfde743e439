use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Greedy,
    Random,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Greedy => "greedy",
            Policy::Random => "random",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Policy::Greedy),
            "random" => Ok(Policy::Random),
            _ => Err(Error::validation(format!("unknown policy '{s}'"))),
        }
    }
}

fn normal_vector(rng: &mut Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

/// Posterior state of `X = ⟨φ(θ), z*⟩ + ε`, `φ(θ) = Ψθ / ‖Ψθ‖`, with
/// precision `V_k = mI + Σ φφᵀ` and `b_k = Σ X φ`.
#[derive(Clone, Debug)]
pub struct LinearBanditState {
    pub d: usize,
    pub m: f64,
    pub sigma: f64,
    pub psi: DMatrix<f64>,
    pub z_star: DVector<f64>,
    pub v: DMatrix<f64>,
    pub b: DVector<f64>,
    pub k: usize,
}

impl LinearBanditState {
    /// Standard normal `Ψ` and `z*` uniform on the unit sphere.
    pub fn random(d: usize, m: f64, sigma: f64, rng: &mut Rng) -> Result<Self> {
        let psi = DMatrix::from_fn(d, d, |_, _| rng.sample(StandardNormal));
        let z = normal_vector(rng, d);
        let norm = z.norm();
        Self::with_parts(psi, z / norm, m, sigma)
    }

    pub fn with_parts(psi: DMatrix<f64>, z_star: DVector<f64>, m: f64, sigma: f64) -> Result<Self> {
        let d = z_star.len();
        if d == 0 || psi.shape() != (d, d) {
            return Err(Error::validation("Ψ must be d×d with d = dim(z*) >= 1"));
        }
        if !(m > 0.0) || !(sigma >= 0.0) {
            return Err(Error::validation("need m > 0 and σ >= 0"));
        }
        Ok(LinearBanditState {
            d,
            m,
            sigma,
            psi,
            z_star,
            v: DMatrix::identity(d, d) * m,
            b: DVector::zeros(d),
            k: 0,
        })
    }

    pub fn feature(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let f = &self.psi * theta;
        let n = f.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::validation("θ maps to a zero feature"));
        }
        Ok(f / n)
    }

    /// Adds one observation at `θ` with noise `σ·η`, `η` drawn from `rng`.
    pub fn observe(&mut self, theta: &DVector<f64>, rng: &mut Rng) -> Result<()> {
        let eta: f64 = rng.sample(StandardNormal);
        self.observe_with_noise(theta, self.sigma * eta)
    }

    pub fn observe_with_noise(&mut self, theta: &DVector<f64>, noise: f64) -> Result<()> {
        let phi = self.feature(theta)?;
        let x = phi.dot(&self.z_star) + noise;
        self.v.ger(1.0, &phi, &phi, 1.0);
        self.b.axpy(x, &phi, 1.0);
        self.k += 1;
        Ok(())
    }

    /// Posterior mean `ẑ = V⁻¹ b`.
    pub fn estimate(&self) -> Result<DVector<f64>> {
        let chol = self
            .v
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numerical("V is not positive definite"))?;
        Ok(chol.solve(&self.b))
    }

    pub fn error(&self) -> Result<f64> {
        Ok((self.estimate()? - &self.z_star).norm())
    }

    /// Eigenvector of the smallest eigenvalue of `V`; among eigenvalues
    /// equal to within `1e-12·max(1, |λ|)` the lowest index wins.
    pub fn smallest_eigenvector(&self) -> DVector<f64> {
        let eig = SymmetricEigen::new(self.v.clone());
        let vals = &eig.eigenvalues;
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let tol = 1e-12 * min.abs().max(1.0);
        let idx = vals.iter().position(|v| *v <= min + tol).expect("nonempty");
        eig.eigenvectors.column(idx).into_owned()
    }

    /// Greedy choice in closed form: the direction of least posterior
    /// precision, pulled back through `Ψ⁻¹` and normalized.
    pub fn select_greedy(&self) -> Result<DVector<f64>> {
        let phi = self.smallest_eigenvector();
        let theta = self
            .psi
            .clone()
            .lu()
            .solve(&phi)
            .ok_or_else(|| Error::numerical("Ψ is singular"))?;
        let n = theta.norm();
        Ok(theta / n)
    }

    /// Index of the candidate maximizing the predictive variance
    /// `φᵀ V⁻² φ`; ties go to the lowest index.
    pub fn select_greedy_among(&self, candidates: &[DVector<f64>]) -> Result<usize> {
        if candidates.is_empty() {
            return Err(Error::validation("no candidates"));
        }
        let chol = self
            .v
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numerical("V is not positive definite"))?;
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, c) in candidates.iter().enumerate() {
            let phi = self.feature(c)?;
            let w = chol.solve(&phi);
            let s = w.norm_squared();
            if s > best.0 {
                best = (s, i);
            }
        }
        Ok(best.1)
    }

    pub fn select_random(&self, rng: &mut Rng) -> DVector<f64> {
        normal_vector(rng, self.d)
    }

    /// `ẑ + σ V⁻¹ η` with `η ~ N(0, I)`.
    pub fn posterior_sample(&self, rng: &mut Rng) -> Result<DVector<f64>> {
        let chol = self
            .v
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numerical("V is not positive definite"))?;
        let eta = normal_vector(rng, self.d);
        Ok(chol.solve(&self.b) + chol.solve(&eta) * self.sigma)
    }
}
