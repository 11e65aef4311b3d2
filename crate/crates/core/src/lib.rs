//! Attention-drift diagnostics for adapted vision transformers.
//!
//! The crate reads attention and feature dumps exported from a vision
//! tower, measures how concentrated CLS-to-patch attention is, compares runs
//! against a pretrained baseline, and aggregates a dataset x method x
//! learning-rate x seed experiment grid into summary tables.
//!
//! * [`dump`]: binary dump formats and JSON run records
//! * [`metrics`]: entropy, ERF@0.95, Gini, head diversity, patch-to-patch entropy, drift
//! * [`rollout`]: attention rollout across depth
//! * [`cka`]: linear CKA between layerwise features
//! * [`stats`]: Welch/paired t, correlations, permutation tests, Holm correction
//! * [`aggregate`]: run matrix, seed summaries, heatmaps and table emission

// `!(x > y)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod cka;
pub mod dump;
pub mod metrics;
pub mod rollout;
pub mod stats;
