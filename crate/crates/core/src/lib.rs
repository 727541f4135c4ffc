//! Multi-task human body reconstruction from mmWave radar point clouds.
//!
//! The crate is organized bottom-up:
//!
//! * [`autodiff`]: reverse-mode differentiation, layers, Adam, checkpoints
//! * [`body`]: procedural SMPL-style body model, 6D rotations, geodesic distance
//! * [`radar`]: synthetic radar sequences, dataset files, diagnostics
//! * [`net`]: feature extractor, translation predictor, skeleton-aware estimator, losses
//! * [`harness`]: training, evaluation metrics, experiment checkpoints

pub mod autodiff;
pub mod body;
pub mod harness;
pub mod net;
pub mod radar;
