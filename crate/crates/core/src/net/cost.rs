use std::ops::{Add, AddAssign, Mul};

use serde::{Deserialize, Serialize};

use super::{ApproxConfig, LbpLayer, NetError, Result};

/// Memory reads, pixel-to-pivot comparisons and memory writes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpCount {
    pub reads: u64,
    pub comparisons: u64,
    pub writes: u64,
}

impl OpCount {
    pub fn new(reads: u64, comparisons: u64, writes: u64) -> Self {
        OpCount { reads, comparisons, writes }
    }

    pub fn total(&self) -> u64 {
        self.reads + self.comparisons + self.writes
    }

    /// Componentwise `<=`.
    pub fn dominated_by(&self, other: &OpCount) -> bool {
        self.reads <= other.reads && self.comparisons <= other.comparisons && self.writes <= other.writes
    }
}

impl Add for OpCount {
    type Output = OpCount;

    fn add(self, rhs: OpCount) -> OpCount {
        OpCount::new(self.reads + rhs.reads, self.comparisons + rhs.comparisons, self.writes + rhs.writes)
    }
}

impl AddAssign for OpCount {
    fn add_assign(&mut self, rhs: OpCount) {
        *self = *self + rhs;
    }
}

impl Mul<u64> for OpCount {
    type Output = OpCount;

    fn mul(self, k: u64) -> OpCount {
        OpCount::new(self.reads * k, self.comparisons * k, self.writes * k)
    }
}

/// Operations for one output pixel of an exact LBP layer. `e` counts kernel
/// elements (samples plus pivot), `ch` input channels, `m` projection entries.
pub fn count_ops_lbpnet(e: u64, ch: u64, m: u64) -> OpCount {
    OpCount {
        reads: e * ch + m,
        comparisons: (e - 1) * ch,
        writes: (e - 1) * ch + m,
    }
}

/// Operations for one output pixel with `apx` approximated bits.
pub fn count_ops_aplbp(e: u64, ch: u64, m: u64, apx: u64) -> Result<OpCount> {
    let max = (e.saturating_sub(1)).min(m);
    if e == 0 || apx > max {
        return Err(NetError::ApxOutOfRange { apx: apx as u32, max: max as u32 });
    }
    Ok(OpCount {
        reads: (e - apx) * ch + m - apx,
        comparisons: (e - apx - 1) * ch,
        writes: (e - apx - 1) * ch + m - apx,
    })
}

/// Closed-form per-pixel count for every output channel of `layer`, summed.
/// Kernels in one output channel must share their element count.
pub fn op_count_for_layer(layer: &LbpLayer, cfg: ApproxConfig) -> Result<OpCount> {
    let mut total = OpCount::default();
    for out in &layer.outputs {
        let e = out.kernels.first().map(|k| k.elements()).unwrap_or(1) as u64;
        if out.kernels.iter().any(|k| k.elements() as u64 != e) {
            return Err(NetError::ShapeMismatch("kernels of one output differ in element count".into()));
        }
        let m = u64::from(out.projection.width());
        total += count_ops_aplbp(e, out.kernels.len() as u64, m, u64::from(cfg.apx))?;
    }
    Ok(total)
}

/// Ap-LBP over CNN hardware cost for a single kernel and ifmap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRatios {
    pub multiplication: f64,
    pub compute: f64,
    pub memory: f64,
}

pub fn cost_ratios(e: u64, apx: u64, r: u64, s: u64, m: u64, p: u64, q: u64) -> CostRatios {
    let rs = (r * s) as f64;
    let compute = (e - apx) as f64 / rs;
    CostRatios {
        multiplication: 0.0,
        compute,
        memory: compute + (m - apx) as f64 / ((p * q) as f64 * rs),
    }
}
