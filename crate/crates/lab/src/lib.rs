//! Study campaign, statistics, file formats and command-line front end for
//! the haptic rendering lab.  The numerical models live in `haptolab-core`;
//! this crate adds everything that needs `std`: threads, files, wall-clock
//! timing and the distribution functions behind p-values.

pub mod campaign;
pub mod checks;
pub mod config;
pub mod error;
pub mod formats;
pub mod plots;
pub mod stats;

pub use error::{Error, Result};
