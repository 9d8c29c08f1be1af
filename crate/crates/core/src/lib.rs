//! Lesion localization by a deep Q-network agent that walks along a
//! radiologist's gaze plot, plus a supervised keypoint-regression baseline
//! and exact tabular solvers used as ground truth.

pub mod data;
pub mod dqn;
pub mod env;
pub mod error;
pub mod eval;
pub mod nn;
pub mod oracle;
pub mod replay;
pub mod sdl;

pub use error::{Error, Result};
