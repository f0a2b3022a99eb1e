//! Off-policy evaluation for non-stationary episodic decision processes.
//!
//! The crate simulates sequences of related POMDPs whose episode-to-episode
//! change may be exogenous (passive), driven by the agent's own actions
//! (active), or both (hybrid). Interaction data logged under a behavior
//! policy is turned into per-episode importance-sampling statistics, and a
//! target policy's future performance is forecast with an importance-weighted
//! two-stage instrument-variable auto-regression (`OPEN`), alongside the
//! WIS, sliding-window WIS, naive AR and Fourier weighted-least-squares
//! baselines.
//!
//! Module map:
//!
//! - [`envs`]: the four benchmark domains and their meta-transitions.
//! - [`policies`]: tabular / mixture / preset policies with exact probabilities.
//! - [`estimators`]: PDIS, IS ratios, WIS/SWIS, instruments and regression targets.
//! - [`regress`]: weighted least squares, the two-stage IV fit and Pro-WLS.
//! - [`forecast`]: auto-regressive rollout and the unified predictor.
//! - [`harness`]: data collection, clone-based ground truth, sweeps and ablations.
//! - [`plot`]: deterministic SVG rendering of sweep summaries and the demo.

pub mod envs;
pub mod error;
pub mod estimators;
pub mod forecast;
pub mod harness;
pub mod plot;
pub mod policies;
pub mod regress;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
