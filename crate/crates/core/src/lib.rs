//! Multi-object tracking by detection with temporal-correlation appearance scoring.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] boxes, IoU, detector score fusion and NMS
//! * [`kalman`] constant-velocity box filter
//! * [`appearance`] embeddings, EMA templates and dense correlation heatmaps
//! * [`training`] object selection, pairing, Gaussian targets and the logistic-MSE loss
//! * [`assignment`] optimal linear assignment with gating
//! * [`tracker`] the three-stage association cascade and track lifecycle
//! * [`metrics`] CLEAR, IDF1 and HOTA
//! * [`sim`] deterministic synthetic scenes and the evaluation harness
//! * [`io`] and [`config`] file formats and key=value configuration
//! * [`commands`] the workflows behind the `tcb` binary

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod appearance;
pub mod assignment;
pub mod commands;
pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod kalman;
pub mod metrics;
pub mod sim;
pub mod tracker;
pub mod training;

pub use error::{Error, Result};
