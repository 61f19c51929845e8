//! Physical-layer recovery of two partially overlapping packets at a single
//! receiver.
//!
//! The library models flat Rayleigh fading as independent per-user AR(1)
//! (Gauss-Markov) processes, frames BPSK payloads with a shared preamble,
//! length header, and periodic pilots, detects the start of a second packet
//! by preamble cross-correlation, and recovers both payloads with a
//! Gaussian-mixture forward/backward detector over the joint channel state
//! ([`bp`]). Conventional pilot-based, interference-aware MMSE, and
//! genie-aided receivers ([`baselines`]) plus an LDPC code ([`ldpc`]) and a
//! Monte Carlo experiment harness ([`harness`]) support the accompanying
//! benchmark binary.

pub mod baselines;
pub mod bp;
pub mod channel;
pub mod detect;
pub mod error;
pub mod framing;
pub mod gauss;
pub mod harness;
pub mod ldpc;
pub mod seeds;

pub use error::{Error, Result};
