//! Semi-supervised binary classification with angular latent-distance
//! learning.
//!
//! The pipeline has two stages:
//!
//! 1. An encoder is trained on matched / unmatched pairs built from the few
//!    labeled samples so that same-class latents sit at angular distance 0
//!    and cross-class latents at distance 1 ([`training::train_bal`]).
//! 2. A classifier is trained on the frozen latents: first on the labeled
//!    samples, then on the unlabeled samples against on-the-fly labels that
//!    compare each latent with `k` random anchors per class
//!    ([`training::train_sbc`]).
//!
//! [`experiment`] wires both stages (and the labeled-only baselines) into a
//! stratified cross-validation harness with a JSON metrics report.

pub mod data;
pub mod eval;
pub mod experiment;
pub mod geometry;
pub mod label;
pub mod network;
pub mod pairing;
pub mod seed;
pub mod training;

pub use label::{Label, LabelState};
