//! Elliptical episodic exploration bonuses and the machinery around them:
//! inverse-covariance tracking, feature encoders, baseline bonuses,
//! contextual gridworlds, an advantage actor-critic learner and evaluation
//! tools.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod bonus;
pub mod config;
pub mod ellipse;
pub mod env;
pub mod error;
pub mod nn;
pub mod record;
pub mod rng;
pub mod stats;
pub mod trainer;

pub use ellipse::{eigen_bonus, oracle_inverse, EllipticalTracker, FeatureVector};
pub use error::{Error, Result};
