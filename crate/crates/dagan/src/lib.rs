//! Desk-scale data-augmentation GAN: dataset plumbing, the
//! image-conditioned generator and Wasserstein critic, gradient-penalty
//! training, and the two downstream harnesses (vanilla classifier and
//! one-shot matcher).
//!
//! Numeric kernels and autodiff live in [`dagan_nn`]; this crate owns
//! model wiring, data handling, and experiment protocol. Model code is
//! generic over the scalar type — train in `f32`, gradient-check in
//! `f64` — with concrete aliases exported at the crate root.

pub mod classifier;
pub mod critic;
pub mod data;
mod error;
pub mod generator;
pub mod matchnet;
pub mod trainer;

pub use classifier::{Classifier, Classifier32, Classifier64, ClassifierSpec};
pub use critic::{Critic, Critic32, Critic64, CriticSpec};
pub use error::{Error, Result};
pub use generator::{sample_z, Generator, Generator32, Generator64, GeneratorSpec};
pub use matchnet::{Matchnet, Matchnet32};
pub use trainer::{DaganConfig, TrainConfig, TrainReport};
