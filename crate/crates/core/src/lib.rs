//! Transfer operators for partial maps on intervals and graph shifts: exact
//! dynamics, truncated crossed-product representations, core spectra,
//! dynamical verdicts, conformal measures and Renault-Deaconu groupoids.

#![allow(clippy::needless_range_loop, clippy::type_complexity)]

pub mod bundled;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod groupoid;
pub mod interval;
pub mod rational;
pub mod spec_file;
pub mod spectra;
pub mod thermo;
pub mod rep;
pub mod transfer;
pub mod verdicts;

pub use dynamics::{Model, PartialSystem, Point, Potential, SetDesc};
pub use error::{Error, Result};
pub use rational::Q;
