//! Exponential-integrator samplers for diffusion models.
//!
//! The crate covers the variance-preserving noise schedules and their log-SNR
//! reparameterization ([`schedule`]), the prediction-model contract with
//! guidance and thresholding wrappers ([`models`]), deterministic samplers
//! (DDIM, DPM-Solver-2, DPM-Solver++(2S) and (2M), in [`ode`]), the
//! diffusion-SDE samplers ([`sde`]), a linear-Gaussian oracle with a
//! high-accuracy reference integrator ([`oracle`]), and the study driver used by
//! the `dpm-harness` binary ([`harness`]).

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]
pub mod error;
pub mod harness;
pub mod models;
pub mod ode;
pub mod oracle;
pub mod quadrature;
pub mod schedule;
pub mod sde;
mod vecops;

pub use error::{Error, Result};
pub use models::{FnModel, Parameterization, PredictionModel};
pub use schedule::{GridKind, IntermediatePlacement, NoiseSchedule, TimeGrid};
