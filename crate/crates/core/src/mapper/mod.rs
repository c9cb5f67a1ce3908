//! Data layout and program generation for the sub-arrays.
//!
//! LBP layers are mapped bit-transposed: every column holds one
//! (pixel, pivot) pair, pixel bits in the P region and a replicated copy of
//! the pivot in the C region, MSB at the lowest row. The controller then runs
//! the MSB-first mismatch search over those rows. MLP layers are mapped as
//! bit slices in the W and I regions and reduced by the DPU.

mod lbp;
mod mlp;

pub use lbp::{build_layout, load_lbp_tile, run_inmem_lbp, InMemLbp, MappingPlan};
pub use mlp::{bit_slice, compile_mlp_layer, execute_mlp, unslice, BitSliceTensor, MlpPlan, MlpTile};

use std::ops::Range;

use thiserror::Error;

use crate::dpu::DpuError;
use crate::isa::{Executor, Helpers, IsaError, Program, TraceEvent};
use crate::subarray::{SubArray, VoltageModel};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MapError {
    #[error("capacity exceeded: {0}")]
    CapacityExceeded(String),
    #[error("plan mismatch: {0}")]
    PlanMismatch(String),
    #[error("value {value} does not fit {width} bits")]
    WidthTooSmall { value: u64, width: u32 },
    #[error(transparent)]
    Isa(#[from] IsaError),
    #[error(transparent)]
    Dpu(#[from] DpuError),
}

pub type Result<T, E = MapError> = std::result::Result<T, E>;

/// Fixed row partition of a sub-array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionLayout;

impl RegionLayout {
    pub const PIXEL: Range<usize> = 0..64;
    pub const PIVOT: Range<usize> = 64..128;
    pub const RESERVED: Range<usize> = 128..192;
    pub const WEIGHT: Range<usize> = 192..224;
    pub const INPUT: Range<usize> = 224..256;

    pub const HELPERS: Helpers = Helpers { zero: [128, 129], ones: 130 };
    pub const RESULT_ROW: usize = 131;
    pub const LBP_ROW: usize = 132;
    /// Reserved rows free for MLP partial products.
    pub const SCRATCH: Range<usize> = 133..192;
}

/// One sub-array with its executor and the events it has produced.
#[derive(Debug, Clone)]
pub struct Lane {
    pub sa: SubArray,
    pub exec: Executor,
    pub events: Vec<TraceEvent>,
}

impl Lane {
    /// A sub-array with its helper rows initialised.
    pub fn new(id: u32, model: VoltageModel) -> Result<Self> {
        let mut lane =
            Lane { sa: SubArray::new(model), exec: Executor::new(id, RegionLayout::HELPERS), events: Vec::new() };
        for instr in Program::helper_preamble(RegionLayout::HELPERS) {
            let ev = lane.exec.execute(&mut lane.sa, &instr)?;
            lane.events.extend(ev);
        }
        Ok(lane)
    }

    pub fn id(&self) -> u32 {
        self.exec.sub_array
    }

    pub fn set_layer(&mut self, layer: Option<u32>) {
        self.exec.layer = layer;
    }
}

/// Round-robin assignment of `items` work items to `lanes` sub-arrays;
/// entry `k` lists the items lane `k` runs, in order.
pub fn round_robin(items: usize, lanes: usize) -> Vec<Vec<usize>> {
    assert!(lanes > 0, "at least one sub-array");
    let mut out = vec![Vec::new(); lanes];
    for i in 0..items {
        out[i % lanes].push(i);
    }
    out
}

/// Splits `n` columns into chunks of at most `width`.
pub fn chunks(n: usize, width: usize) -> Vec<Range<usize>> {
    (0..n).step_by(width.max(1)).map(|s| s..(s + width).min(n)).collect()
}
