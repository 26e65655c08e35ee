//! Finite-size fluctuations in neural field models.
//!
//! The crate follows one chain of approximations: a population jump process
//! ([`jumpchain`]), its mean-field limit ([`meanfield`]), the diffusion and
//! traveling-wave-linearized SDEs ([`diffusion`]), and finally the stochastic
//! neural field equation with spatially correlated noise ([`noise`], [`spde`]).
//! [`harness`] runs the numerical certification experiments on top.

pub mod config;
pub mod conv;
pub mod diffusion;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod jumpchain;
pub mod linalg;
pub mod meanfield;
pub mod model;
pub mod noise;
pub mod rng;
pub mod spde;
pub mod stats;
pub mod table;
pub mod wave;

pub use error::{Error, Result};
