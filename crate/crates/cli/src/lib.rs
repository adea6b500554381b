//! Experiment runner for task-relevant free-energy bounds: JSON config in,
//! CSV sweep table and SVG plot out.

pub mod config;
pub mod experiment;
pub mod oracle;
pub mod pipeline;
pub mod plot;
