pub mod agent;
pub mod canon;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod record;
pub mod rng;
pub mod stats;
pub mod svg;
pub mod widget;
pub mod wire;
