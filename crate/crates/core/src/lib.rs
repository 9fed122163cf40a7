//! Quantum circuit Born machines on a dense statevector simulator.
//!
//! The crate is `no_std` and needs only `alloc`. Enable the `parallel`
//! feature to evaluate parameter-shift gradients on a rayon pool.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod baseline;
pub mod born;
pub mod circuits;
pub mod data;
pub mod dist;
pub mod error;
pub mod metrics;
pub mod noise;
pub mod optimize;
pub mod sim;

pub use born::{BornModel, ConditionEncoder};
pub use circuits::{CircuitSpec, CorrelationBlockChoice};
pub use dist::DiscreteDistribution;
pub use error::{Error, Result};
pub use metrics::KernelConfig;
pub use sim::{Gate, StateVector};
