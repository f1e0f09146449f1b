pub mod error;
pub mod geometry;
pub mod linalg;
pub mod network;
pub mod problem;
pub mod engine;
pub mod metrics;
pub mod harness;
