//! Noise schedule, DDIM sampling and the denoiser contract.

mod checkpoint;
mod ddim;
mod denoiser;
mod normalize;
mod prior;
mod schedule;
mod toy;
mod train;

pub use checkpoint::{
    checkpoint_from_json, checkpoint_to_json, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION,
};
pub(crate) use ddim::check_eps;
pub use ddim::{ddim_reconstruct, ddim_step, forward_diffuse, predict_x0, sample, sample_flat};
pub use denoiser::{
    grad_to_latent, grad_wrt_embedding, to_positions, ConditionEmbedding, Denoiser, DenoiserVjp,
    PinnedDenoiser,
};
pub use normalize::Normalizer;
pub use prior::GaussianPrior;
pub use schedule::{
    make_schedule, NoiseSchedule, StepIndices, DEFAULT_BETA_MAX, DEFAULT_BETA_MIN, DEFAULT_STEPS,
};
pub use toy::{time_features, ToyDenoiser, ToyParams, ToyShape, TIME_FEATURES};
pub use train::{eps_mse, train_denoiser, TrainedModel, TrainingConfig, TrainingSet};
