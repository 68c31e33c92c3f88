//! Image reconstruction with an untrained convolutional generator fitted
//! in the Fourier domain.
//!
//! The pieces compose bottom-up: [`Tensor`] and the reverse-mode [`Tape`],
//! the DFT and radial band tooling in [`spectral`], the encoder-decoder in
//! [`generator`], forward operators and noise in [`degrade`], losses in
//! [`objective`], the training loop in [`optimize`] and post-hoc analysis
//! in [`diagnostics`]. [`io`] and [`experiment`] handle images on disk and
//! end-to-end runs.

pub mod autodiff;
pub mod degrade;
pub mod diagnostics;
mod error;
pub mod generator;
pub mod objective;
pub mod optimize;
pub mod rng;
pub mod spectral;
mod tensor;
pub mod io;
pub mod experiment;

pub use autodiff::{backward, Gradients, LinearMap, Tape, Var};
pub use degrade::{corrupt, DegradationOp, NoiseModel, Observation};
pub use error::{Error, Result};
pub use generator::{GeneratorConfig, GeneratorState};
pub use objective::{LossKind, LossSpec};
pub use optimize::{run, OptimizerConfig, OptimizerKind, RunRecord, RunSpec};
pub use rng::Rng;
pub use spectral::{dft2, idft2, BandMask, Normalization, Spectrum};
pub use tensor::Tensor;
