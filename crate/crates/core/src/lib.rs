//! Functional simulator, compiler and cost model for a comparator-based
//! processing-in-SRAM accelerator running approximate local binary pattern
//! networks near an image sensor.
//!
//! The crate has two halves that are checked against each other:
//!
//! - [`net`] is the golden integer model of the network.
//! - [`sensor`], [`subarray`], [`isa`], [`mapper`] and [`dpu`] model the
//!   hardware, and [`pipeline`] chains them into an inference path whose
//!   trace feeds the [`perf`] model.

pub mod net;
pub mod sensor;
pub mod subarray;
pub mod isa;
pub mod dpu;
pub mod mapper;
pub mod perf;
pub mod config;
pub mod pipeline;
pub mod synth;
