//! Acquisition functions and information estimators: Mean STD, Max Entropy,
//! latent information gain, nested Monte Carlo EIG, a Kozachenko–Leonenko
//! entropy estimator and a keyed random baseline.

mod info;
mod knn;
mod latent;
mod scores;

pub use crate::np::kl_diag_gaussian;
pub use info::{eig_nested_mc, latent_information_gain, Estimate};
pub use knn::{kozachenko_leonenko_entropy, kth_neighbor_distances};
pub use latent::{ConjugateModel, LatentModel, SurrogateModel};
pub use scores::{
    gaussian_entropy, max_entropy, mean_std, random_score, sample_covariance, score_candidates, top_b,
    write_scores_csv, Acquisition, AcquisitionScore, ScoreSettings, DEFAULT_RIDGE, SCORE_CSV_HEADER,
};
