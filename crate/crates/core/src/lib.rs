//! Semantic-query data sourcing over a shared random access channel.
//!
//! An edge server broadcasts a low-dimensional query vector; devices project
//! their observations onto the same subspace, compare against the query, and
//! transmit over a slotted random access uplink (ALOHA or irregular
//! repetition slotted ALOHA with successive interference cancellation) only
//! when the matching score clears a threshold. This crate provides:
//!
//! * [`sensing`] — the Gaussian-mixture sensing world: class centroids,
//!   feature sampling, relevancy scoring, fusion, and MAP classification.
//! * [`query`] — orthonormal projection design (Fisher LDA), query/key
//!   encoding, and the matching score.
//! * [`channel`] — downlink outage, exact frame simulation with successive
//!   interference cancellation, and closed-form/approximate uplink error
//!   probabilities.
//! * [`analysis`] — closed-form missed-detection / false-alarm statistics,
//!   transmission-rate mapping, the threshold optimality residual and
//!   solvers, and empirical score calibration.
//! * [`experiment`] — end-to-end Monte Carlo of the full protocol, metric
//!   estimation, benchmark schemes, and parameter sweeps.
//! * [`special`] — the scalar special functions backing the closed forms.

pub mod analysis;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod query;
pub mod sensing;
pub mod special;

pub use error::{Error, Result};
