//! Laban-movement guided diffusion sampling for motion generation.
//!
//! The crate is organised bottom-up:
//!
//! - [`motion`]: joint-position motions, smoothed finite-difference kinematics,
//!   the differentiable Weight/Time/Flow/Shape feature series and the relative
//!   Laban loss with its exact gradient.
//! - [`diffusion`]: noise schedule, forward diffusion, deterministic DDIM
//!   sampling, the [`diffusion::Denoiser`] contract and a small trainable
//!   fully connected denoiser with a learned condition-embedding table.
//! - [`guidance`]: tag-to-scale mapping, Adam, the two-step guided generation
//!   pipeline and the raw-frame / classifier-guidance baselines.
//! - [`eval`]: relative-change matrices, diagonality, a diversity proxy and
//!   baseline-vs-guided feature comparisons.
//! - [`synthetic`]: procedural labelled motion corpus.
//! - [`gradcheck`]: finite-difference checks of the analytic gradients.
//! - [`cli`]: the command implementations behind the `laban-guide` binary.

pub mod cli;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod guidance;
pub mod io;
pub mod motion;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
