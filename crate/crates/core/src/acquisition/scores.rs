use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::info::{latent_information_gain, Estimate};
use super::latent::SurrogateModel;
use crate::error::{Error, Result};
use crate::np::{Context, TrainedSurrogate};
use crate::rng::{purpose, stream};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Acquisition {
    Lig,
    MeanStd,
    MaxEnt,
    Random,
}

impl Acquisition {
    pub const ALL: [Acquisition; 4] = [Acquisition::Lig, Acquisition::MeanStd, Acquisition::MaxEnt, Acquisition::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Acquisition::Lig => "lig",
            Acquisition::MeanStd => "meanstd",
            Acquisition::MaxEnt => "maxent",
            Acquisition::Random => "random",
        }
    }
}

impl fmt::Display for Acquisition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Acquisition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Acquisition::ALL
            .into_iter()
            .find(|a| a.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::validation(format!("unknown acquisition '{s}' (expected lig, meanstd, maxent or random)")))
    }
}

/// Score of one candidate scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionScore {
    pub round: usize,
    pub scenario_id: usize,
    pub acquisition: Acquisition,
    pub score: f64,
    pub stderr: Option<f64>,
    pub n_samples: usize,
}

/// Sample count and latent draws used when scoring.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSettings {
    /// Latent draws for predictions and for LIG.
    pub n_z: usize,
    /// Observation draws per latent for LIG.
    pub n_x: usize,
    pub ridge: f64,
}

impl Default for ScoreSettings {
    fn default() -> Self {
        ScoreSettings {
            n_z: 30,
            n_x: 1,
            ridge: DEFAULT_RIDGE,
        }
    }
}

fn check_samples(samples: &[Vec<f64>]) -> Result<usize> {
    if samples.len() < 2 {
        return Err(Error::validation("at least two sampled trajectories are required"));
    }
    let dim = samples[0].len();
    if dim == 0 || samples.iter().any(|s| s.len() != dim) {
        return Err(Error::shape("scores", "samples must share a nonzero length"));
    }
    Ok(dim)
}

/// Average over coordinates of the across-sample standard deviation
/// (`n − 1` denominator).
pub fn mean_std(samples: &[Vec<f64>]) -> Result<f64> {
    let dim = check_samples(samples)?;
    let n = samples.len() as f64;
    let mut total = 0.0;
    for j in 0..dim {
        let m = samples.iter().map(|s| s[j]).sum::<f64>() / n;
        let v = samples.iter().map(|s| (s[j] - m).powi(2)).sum::<f64>() / (n - 1.0);
        total += v.sqrt();
    }
    Ok(total / dim as f64)
}

/// Sample covariance (`n − 1` denominator) as a `dim × dim` matrix.
pub fn sample_covariance(samples: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let dim = check_samples(samples)?;
    let n = samples.len();
    let x = DMatrix::from_fn(n, dim, |i, j| samples[i][j]);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, dim, |i, j| x[(i, j)] - mean[j]);
    Ok(centered.transpose() * &centered / (n as f64 - 1.0))
}

/// Gaussian differential entropy `½ ln|Σ| + (D/2)(1 + ln 2π)` of a
/// covariance matrix, via Cholesky.
pub fn gaussian_entropy(cov: &DMatrix<f64>) -> Result<f64> {
    let d = cov.nrows();
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("covariance is not positive definite"))?;
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    if !logdet.is_finite() {
        return Err(Error::numerical("non-finite log-determinant"));
    }
    Ok(0.5 * logdet + 0.5 * d as f64 * (1.0 + LN_2PI))
}

/// Entropy of a Gaussian fitted to the samples, with `ridge·I` added to the
/// sample covariance.
pub fn max_entropy(samples: &[Vec<f64>], ridge: f64) -> Result<f64> {
    if !(ridge >= 0.0) {
        return Err(Error::validation("ridge must be nonnegative"));
    }
    let mut cov = sample_covariance(samples)?;
    for i in 0..cov.nrows() {
        cov[(i, i)] += ridge;
    }
    gaussian_entropy(&cov)
}

/// Uniform(0, 1) score from a stream keyed by `(round, scenario_id)`.
pub fn random_score(seed: u64, round: usize, scenario_id: usize) -> f64 {
    stream(seed, &[purpose::RANDOM_SCORE, round as u64, scenario_id as u64]).random::<f64>()
}

/// Scores every candidate `(id, raw θ)` in parallel. Each candidate draws
/// from its own stream keyed by `(round, id)`, so the result does not depend
/// on candidate order or thread scheduling.
pub fn score_candidates(
    acquisition: Acquisition,
    surrogate: &TrainedSurrogate,
    context: &Context,
    candidates: &[(usize, Vec<f64>)],
    round: usize,
    seed: u64,
    settings: &ScoreSettings,
) -> Result<Vec<AcquisitionScore>> {
    let model = if acquisition == Acquisition::Lig {
        Some(SurrogateModel::new(surrogate, context)?)
    } else {
        None
    };
    candidates
        .par_iter()
        .map(|(id, theta)| {
            let mut rng = stream(seed, &[purpose::ACQUIRE, round as u64, *id as u64]);
            let (score, stderr, n) = match acquisition {
                Acquisition::Random => (random_score(seed, round, *id), None, 1),
                Acquisition::Lig => {
                    let e: Estimate = latent_information_gain(model.as_ref().unwrap(), theta, settings.n_z, settings.n_x, &mut rng)?;
                    (e.value, Some(e.stderr), e.samples)
                }
                Acquisition::MeanStd | Acquisition::MaxEnt => {
                    let p = surrogate.predict(context, theta, settings.n_z, &mut rng)?;
                    let s = if acquisition == Acquisition::MeanStd {
                        mean_std(&p.samples)?
                    } else {
                        max_entropy(&p.samples, settings.ridge)?
                    };
                    (s, None, settings.n_z)
                }
            };
            if !score.is_finite() {
                return Err(Error::numerical(format!("non-finite {acquisition} score for scenario {id}")));
            }
            Ok(AcquisitionScore {
                round,
                scenario_id: *id,
                acquisition,
                score,
                stderr,
                n_samples: n,
            })
        })
        .collect()
}

/// Ids of the `b` best scores; ties go to the lowest scenario id.
pub fn top_b(scores: &[AcquisitionScore], b: usize) -> Vec<usize> {
    let mut order: Vec<&AcquisitionScore> = scores.iter().collect();
    order.sort_by(|a, c| c.score.total_cmp(&a.score).then(a.scenario_id.cmp(&c.scenario_id)));
    order.into_iter().take(b).map(|s| s.scenario_id).collect()
}

pub const SCORE_CSV_HEADER: [&str; 6] = ["round", "scenario_id", "acquisition", "score", "stderr", "n_samples"];

pub fn write_scores_csv<W: Write>(out: W, scores: &[AcquisitionScore], header: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    if header {
        w.write_record(SCORE_CSV_HEADER)?;
    }
    for s in scores {
        w.write_record([
            s.round.to_string(),
            s.scenario_id.to_string(),
            s.acquisition.to_string(),
            format!("{:e}", s.score),
            s.stderr.map_or(String::new(), |e| format!("{e:e}")),
            s.n_samples.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
