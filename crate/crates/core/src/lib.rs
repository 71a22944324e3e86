//! Score-based MIMO channel estimation.
//!
//! Implements a variance-exploding score-based generative channel estimator
//! for pilot-based MIMO systems: noise-schedule construction, an iterative
//! SNR-informed denoising estimator, step-skipping acceleration down to a
//! single-step denoiser, classical (LS / sample-covariance LMMSE) and
//! Gaussian-mixture baselines, and an NMSE evaluation harness.
//!
//! The crate is organized as a library; `examples/` contains one runnable
//! program per major capability and `src/bin/sbmce.rs` is a thin CLI wrapper
//! (`gen-data`, `train`, `sweep`, `estimate`) driven by a TOML config.

pub mod channel;
pub mod cli;
pub mod config;
pub mod container;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod numerics;
pub mod schedule;
pub mod scorenet;
pub mod training;

pub use error::{Error, Result};
