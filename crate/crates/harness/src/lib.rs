//! Experiment harness around `sosp-core`: synthetic data, full-batch Adam,
//! boundary statistics of trained points, fixture construction, JSON I/O,
//! the oracle suite and the `sosp` command line.

pub mod adam;
pub mod cli;
pub mod construct;
pub mod datagen;
pub mod fixtures;
pub mod io;
pub mod stats;
pub mod suite;
