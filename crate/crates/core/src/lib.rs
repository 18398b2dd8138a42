//! Behavioral simulator of a memristor-based binarized neural network
//! accelerator powered directly by a miniature solar cell.
//!
//! The crate is organised bottom-up:
//!
//! * [`device`]: single memristors (forming, complementary programming,
//!   lognormal resistance variability).
//! * [`tile`]: the 64x64 2T2R bit-cell array and the XNOR-augmented
//!   differential sense read.
//! * [`pipeline`]: the pipelined popcount/threshold inference engine and the
//!   pure-functional reference it must agree with.
//! * [`fault`]: supply-dependent error profiles, sensing-margin laws and the
//!   weak-cell policy.
//! * [`mapper`]: decomposition of arbitrary fully-connected BNNs into
//!   58-input blocks with majority voting.
//! * [`power`]: single-diode solar cell, chip load, operating point and the
//!   energy/efficiency accounting.
//! * [`harness`]: configuration, datasets, experiments and report emission.

pub mod binary;
pub mod device;
pub mod fault;
pub mod harness;
pub mod mapper;
pub mod pipeline;
pub mod power;
pub mod rng;
pub mod tile;

pub use binary::{Binary, BinaryMatrix};
pub use rng::SimRng;
