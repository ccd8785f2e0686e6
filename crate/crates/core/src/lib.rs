//! Simulation of a delay-compensating learning controller for a soft robotic arm.
//!
//! A six-channel first-order nonlinear plant with a fixed input delay is driven
//! by a super-twisting sliding-mode controller. A learned predictor (online
//! sparse Gaussian-process regression over Legendre-compressed or raw input
//! history) estimates the pose change across the delay so the controller can
//! act on the predicted, undelayed error. The harness reproduces a
//! spiral-into-circle tracking protocol, scores XY tracking and modeling RMS,
//! and runs the statistical comparison across predictor variants and gain
//! conditions.

pub mod controller;
pub mod error;
pub mod harness;
pub mod krlst;
pub mod ldn;
pub mod plant;
pub mod predictor;

pub use error::{Error, Result};
