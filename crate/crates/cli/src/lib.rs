//! Experiment driver for low n-rank tensor completion: configuration
//! layering, the synthetic/step-size/image runners, and the built-in test
//! image.

pub mod config;
pub mod experiments;
pub mod testimage;
