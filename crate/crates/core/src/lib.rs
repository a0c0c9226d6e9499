//! Gaze-target prediction toolkit.
//!
//! The pipeline runs from scripted social scenes ([`scenario`]) and a
//! synthetic attention policy ([`oracle`]) through eye-tracker preprocessing
//! ([`preprocess`]) to two sequence classifiers ([`models`]), grouped
//! cross-validation ([`eval`]), gaze statistics ([`stats`]) and a streaming
//! head-pose controller ([`controller`]).

pub mod controller;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod models;
pub mod oracle;
pub mod preprocess;
pub mod scenario;
pub mod stats;
pub mod types;

pub use error::{GazeError, Result};
