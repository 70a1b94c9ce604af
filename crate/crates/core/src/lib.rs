//! Core of the haptic lab: tissue plants, Koopman/EDMD models, the force
//! rendering pipeline, a Bayesian observer, voxel proxy contact, a small FEM
//! kernel and the study harness.
//!
//! Everything here is `no_std` with `alloc`; file formats, the CLI, the
//! statistics and the parallel campaign live in the `haptolab` crate.
#![cfg_attr(not(any(test, feature = "std")), no_std)]
extern crate alloc;

pub mod contact;
pub mod dynamics;
pub mod error;
pub mod fem;
pub mod harness;
pub mod koopman;
pub mod percept;
pub mod render;

pub use error::{Error, Result};
