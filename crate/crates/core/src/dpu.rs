//! Digital processing unit shared by the banks: bitcount, shift-accumulate,
//! activation/quantisation, plus the pooling and normalisation steps of the
//! classifier head.

use thiserror::Error;

use crate::isa::{EventClass, TraceEvent};
use crate::net::{BatchNorm, FeatureMap};
use crate::subarray::Row;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DpuError {
    #[error("accumulator overflow")]
    Overflow,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T, E = DpuError> = std::result::Result<T, E>;

pub fn bitcount(v: &Row) -> u32 {
    v.count_ones()
}

/// `acc + count * 2^(m+n)`, checked.
pub fn shift_accumulate(acc: i64, count: u64, m: u32, n: u32) -> Result<i64> {
    let shift = m.checked_add(n).filter(|&s| s < 63).ok_or(DpuError::Overflow)?;
    let term = i64::try_from(count).ok().and_then(|c| c.checked_mul(1i64 << shift)).ok_or(DpuError::Overflow)?;
    acc.checked_add(term).ok_or(DpuError::Overflow)
}

/// Shifted ReLU by `theta`, clamped to `bits` unsigned bits.
pub fn activate_quantize(x: u64, theta: u64, bits: u32) -> u64 {
    assert!((1..=63).contains(&bits), "bits must be in 1..=63");
    x.saturating_sub(theta).min((1u64 << bits) - 1)
}

/// Event-emitting wrapper used by the simulated pipeline.
#[derive(Debug, Default, Clone)]
pub struct Dpu {
    pub layer: Option<u32>,
    cycle: u64,
    events: Vec<TraceEvent>,
}

impl Dpu {
    pub fn new() -> Self {
        Dpu::default()
    }

    /// Records an event on the shared unit without computing anything.
    pub fn record(&mut self, op: &str, size: u32, class: EventClass) {
        self.events.push(TraceEvent::new(self.cycle, None, op, size, class).with_layer(self.layer));
        self.cycle += 1;
    }

    pub fn take_events(&mut self) -> Vec<TraceEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    /// Popcount over the first `width` columns.
    pub fn bitcount(&mut self, v: &Row, width: usize) -> u32 {
        self.record("bitcount", width as u32, EventClass::DpuBitcount);
        bitcount(&(*v & Row::prefix(width)))
    }

    pub fn shift_accumulate(&mut self, acc: i64, count: u64, m: u32, n: u32) -> Result<i64> {
        self.record("shift_add", 1, EventClass::DpuShiftAdd);
        shift_accumulate(acc, count, m, n)
    }

    pub fn activate(&mut self, op: &str, xs: &[u64], theta: u64, bits: u32) -> Vec<u64> {
        self.record(op, xs.len() as u32, EventClass::DpuActivation);
        xs.iter().map(|&x| activate_quantize(x, theta, bits)).collect()
    }

    /// Non-overlapping average pooling, rounding half up.
    pub fn avg_pool(&mut self, fm: &FeatureMap, window: usize) -> Result<FeatureMap> {
        if window == 0 || window > fm.height() || window > fm.width() {
            return Err(DpuError::Shape(format!("pool window {window} for a {}x{} map", fm.height(), fm.width())));
        }
        let (oh, ow) = (fm.height() / window, fm.width() / window);
        let area = (window * window) as i64;
        let mut data = Vec::with_capacity(fm.channels() * oh * ow);
        for c in 0..fm.channels() {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = 0i64;
                    for dy in 0..window {
                        for dx in 0..window {
                            acc = shift_accumulate(acc, u64::from(fm.get(c, y * window + dy, x * window + dx)), 0, 0)?;
                        }
                    }
                    self.record("pool", (window * window) as u32, EventClass::DpuShiftAdd);
                    data.push(((acc + area / 2) / area) as u32);
                }
            }
        }
        FeatureMap::new(fm.channels(), oh, ow, fm.bits(), data).map_err(|e| DpuError::Shape(e.to_string()))
    }

    /// Q16 affine normalisation.
    pub fn batch_norm(&mut self, xs: &[u64], bn: &BatchNorm) -> Result<Vec<i64>> {
        if bn.gamma.len() != xs.len() || bn.beta.len() != xs.len() {
            return Err(DpuError::Shape(format!("batch norm over {} values", xs.len())));
        }
        self.record("batch_norm", xs.len() as u32, EventClass::DpuShiftAdd);
        xs.iter()
            .zip(bn.gamma.iter().zip(&bn.beta))
            .map(|(&x, (&g, &b))| {
                let x = i64::try_from(x).map_err(|_| DpuError::Overflow)?;
                g.checked_mul(x).and_then(|p| p.checked_add(b)).ok_or(DpuError::Overflow)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_product_shift() {
        assert_eq!(shift_accumulate(0, 1, 2, 1), Ok(0b1000));
        assert_eq!(shift_accumulate(17, 0, 5, 5), Ok(17));
        assert_eq!(shift_accumulate(i64::MAX - 1, 4, 0, 0), Err(DpuError::Overflow));
        assert_eq!(shift_accumulate(0, 1, 40, 40), Err(DpuError::Overflow));
    }

    #[test]
    fn bitcount_extremes() {
        assert_eq!(bitcount(&Row::ZERO), 0);
        assert_eq!(bitcount(&Row::ONES), 256);
        let mut d = Dpu::new();
        assert_eq!(d.bitcount(&Row::ONES, 10), 10);
        assert_eq!(d.events().len(), 1);
    }

    #[test]
    fn activation_clamps() {
        assert_eq!(activate_quantize(3, 5, 4), 0);
        assert_eq!(activate_quantize(5, 5, 4), 0);
        assert_eq!(activate_quantize(1 << 40, 5, 4), 15);
        assert_eq!(activate_quantize(12, 5, 4), 7);
    }

    #[test]
    fn pool_and_norm_match_reference() {
        let fm = FeatureMap::new(2, 4, 4, 8, (0..32).map(|v| v * 7 % 256).collect()).unwrap();
        let mut d = Dpu::new();
        assert_eq!(d.avg_pool(&fm, 2).unwrap(), crate::net::avg_pool(&fm, 2).unwrap());
        let bn = BatchNorm { gamma: vec![3, -2], beta: vec![5, 1 << 20] };
        assert_eq!(d.batch_norm(&[4, 9], &bn).unwrap(), crate::net::batch_norm(&[4, 9], &bn).unwrap());
    }
}
