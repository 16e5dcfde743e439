//! Neural-process surrogates: a global-latent NP and a spatiotemporal NP
//! with graph-diffusion recurrent encoder and decoder, trained on the
//! negative ELBO.

mod gaussian;
pub mod layers;
mod net;
mod normalizer;
mod stnp;
mod surrogate;

pub use gaussian::{kl_diag_gaussian, GaussianDiag};
pub use net::{kl_on_tape, ModelKind, NpArchitecture, NpNet, ObsNoise, ProcessNet, STD_FLOOR};
pub use normalizer::Normalizer;
pub use stnp::StnpNet;
pub use surrogate::{
    choose_context, Context, Net, Prediction, Sample, TrainConfig, TrainReport, TrainedSurrogate,
    SURROGATE_FORMAT_VERSION,
};
