pub mod config;
pub mod eval;
pub mod events;
pub mod features;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod pose;
pub mod signal;
pub mod synth;
