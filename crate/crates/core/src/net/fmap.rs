use serde::{Deserialize, Serialize};

use super::{NetError, Result};

/// Multi-channel 2-D map of unsigned fixed-point activations, stored
/// `[channel][row][col]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawFeatureMap", into = "RawFeatureMap")]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    bits: u32,
    data: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct RawFeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    bits: u32,
    data: Vec<u32>,
}

impl TryFrom<RawFeatureMap> for FeatureMap {
    type Error = NetError;

    fn try_from(raw: RawFeatureMap) -> Result<Self> {
        FeatureMap::new(raw.channels, raw.height, raw.width, raw.bits, raw.data)
    }
}

impl From<FeatureMap> for RawFeatureMap {
    fn from(fm: FeatureMap) -> Self {
        RawFeatureMap {
            channels: fm.channels,
            height: fm.height,
            width: fm.width,
            bits: fm.bits,
            data: fm.data,
        }
    }
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, bits: u32, data: Vec<u32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(NetError::InvalidFeatureMap(format!(
                "dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if bits == 0 || bits > 32 {
            return Err(NetError::InvalidFeatureMap(format!("bit width {bits} not in 1..=32")));
        }
        if data.len() != channels * height * width {
            return Err(NetError::InvalidFeatureMap(format!(
                "data length {} != {channels}*{height}*{width}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| u64::from(v) >= 1u64 << bits) {
            return Err(NetError::InvalidFeatureMap(format!("value {v} does not fit in {bits} bits")));
        }
        Ok(FeatureMap { channels, height, width, bits, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize, bits: u32) -> Result<Self> {
        Self::new(channels, height, width, bits, vec![0; channels * height * width])
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u32> {
        self.data
    }

    pub fn max_value(&self) -> u32 {
        if self.bits == 32 {
            u32::MAX
        } else {
            (1u32 << self.bits) - 1
        }
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> u32 {
        self.data[self.index(c, y, x)]
    }

    /// Reads with implicit zero padding outside the map.
    #[inline]
    pub fn get_padded(&self, c: usize, y: isize, x: isize) -> u32 {
        if y < 0 || x < 0 || y as usize >= self.height || x as usize >= self.width {
            0
        } else {
            self.get(c, y as usize, x as usize)
        }
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: u32) -> Result<()> {
        if u64::from(v) > u64::from(self.max_value()) {
            return Err(NetError::InvalidFeatureMap(format!("value {v} does not fit in {} bits", self.bits)));
        }
        let i = self.index(c, y, x);
        self.data[i] = v;
        Ok(())
    }

    pub fn channel(&self, c: usize) -> &[u32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    /// Stacks `self`'s channels in front of `other`'s. Spatial sizes must agree.
    pub fn concat_channels(&self, other: &FeatureMap) -> Result<FeatureMap> {
        if self.height != other.height || self.width != other.width {
            return Err(NetError::ShapeMismatch(format!(
                "cannot join {}x{} with {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        FeatureMap::new(
            self.channels + other.channels,
            self.height,
            self.width,
            self.bits.max(other.bits),
            data,
        )
    }
}
