//! Experiment harness around the solver crate: config parsing, synthetic
//! problem generators, trace persistence and empirical rate verification.

pub mod config;
pub mod experiment;
pub mod rate;
pub mod synth;
pub mod trace_io;
