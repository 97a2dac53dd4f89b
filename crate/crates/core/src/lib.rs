//! Uncertainty-driven boundary cutting in a synthetic two-medium world.
//!
//! A scooping motion is encoded as a dynamic movement primitive, executed
//! by a planar arm through pulp and peel, and corrected online from a
//! logistic-regression estimate of Pr(peel) computed from joint torques.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod control;
pub mod dmp;
pub mod format;
pub mod harness;
pub mod world;
