//! Compression of large identified load-model datasets into a few
//! representative load models (RLMs).
//!
//! The pipeline simulates each composite load model's post-fault response
//! (PFR) under a small fault suite, measures model similarity as the squared
//! distance between response curves, and clusters in two stages: temporally
//! per bus, then spatially across buses with static and dynamic components
//! clustered separately. Validation replays faults with the compressed
//! models and scores fitting degrees against the originals.

pub mod datagen;
pub mod distance;
pub mod error;
pub mod fdc;
pub mod hierarchy;
pub mod io;
pub mod load_model;
pub mod pfr;
pub mod pipeline;
pub mod validation;

pub use error::{Error, Result};
