//! Image ingestion and the sensor-side approximation: pixels are rescaled to
//! the accelerator width and their `apx` least significant bits are never
//! converted.
//!
//! Two container formats are supported, both bit-exact:
//!
//! - IDX (big-endian, as used by MNIST): magic `0x00000803` for `u8` image
//!   stacks and `0x00000801` for `u8` label vectors.
//! - Binary PGM (`P5`), `maxval <= 65535`; two-byte samples are big-endian.

use std::path::Path;

use thiserror::Error;

use crate::net::{FeatureMap, NetError};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("bad IDX magic number {0:#010x}")]
    BadMagic(u32),
    #[error("truncated input: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("apx={apx} must be below the pixel width {bits}")]
    ApxOutOfRange { apx: u32, bits: u32 },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SensorError> = std::result::Result<T, E>;

/// Post-ADC grayscale frame at its native bit depth.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawImage {
    height: usize,
    width: usize,
    depth: u32,
    samples: Vec<u16>,
}

impl RawImage {
    pub fn new(height: usize, width: usize, depth: u32, samples: Vec<u16>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(SensorError::InvalidImage("empty image".into()));
        }
        if depth == 0 || depth > 16 {
            return Err(SensorError::InvalidImage(format!("depth {depth} not in 1..=16")));
        }
        if samples.len() != height * width {
            return Err(SensorError::InvalidImage(format!(
                "{} samples for {height}x{width}",
                samples.len()
            )));
        }
        if let Some(s) = samples.iter().find(|&&s| u32::from(s) >= 1 << depth) {
            return Err(SensorError::InvalidImage(format!("sample {s} exceeds {depth} bits")));
        }
        Ok(RawImage { height, width, depth, samples })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn samples(&self) -> &[u16] {
        &self.samples
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdxData {
    Images(Vec<RawImage>),
    Labels(Vec<u8>),
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(SensorError::Truncated { needed: at + 4, found: bytes.len() })
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    let magic = be_u32(bytes, 0)?;
    match magic {
        IDX_IMAGES_MAGIC => {
            let count = be_u32(bytes, 4)? as usize;
            let rows = be_u32(bytes, 8)? as usize;
            let cols = be_u32(bytes, 12)? as usize;
            let px = rows * cols;
            if px == 0 {
                return Err(SensorError::InvalidImage(format!("IDX images of {rows}x{cols}")));
            }
            let needed = 16 + count * px;
            if bytes.len() < needed {
                return Err(SensorError::Truncated { needed, found: bytes.len() });
            }
            bytes[16..needed]
                .chunks_exact(px)
                .take(count)
                .map(|chunk| RawImage::new(rows, cols, 8, chunk.iter().map(|&b| u16::from(b)).collect()))
                .collect::<Result<Vec<_>>>()
                .map(IdxData::Images)
        }
        IDX_LABELS_MAGIC => {
            let count = be_u32(bytes, 4)? as usize;
            let needed = 8 + count;
            if bytes.len() < needed {
                return Err(SensorError::Truncated { needed, found: bytes.len() });
            }
            Ok(IdxData::Labels(bytes[8..needed].to_vec()))
        }
        other => Err(SensorError::BadMagic(other)),
    }
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxData> {
    parse_idx(&std::fs::read(path)?)
}

/// Loads an IDX image stack, rejecting label files.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Vec<RawImage>> {
    match load_idx(path)? {
        IdxData::Images(images) => Ok(images),
        IdxData::Labels(_) => Err(SensorError::UnsupportedFormat("expected an IDX image file, got labels".into())),
    }
}

/// Encodes 8-bit images of identical geometry as an IDX image stack.
pub fn encode_idx_images(images: &[RawImage]) -> Result<Vec<u8>> {
    let (rows, cols) = images.first().map_or((0, 0), |im| (im.height, im.width));
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    for im in images {
        if (im.height, im.width) != (rows, cols) || im.depth > 8 {
            return Err(SensorError::UnsupportedFormat("IDX stacks need same-size 8-bit images".into()));
        }
        out.extend(im.samples.iter().map(|&s| s as u8));
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Reads one whitespace-delimited header token, skipping `#` comments.
fn pgm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(SensorError::Truncated { needed: *pos + 1, found: bytes.len() }),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    Ok(&bytes[start..*pos])
}

fn pgm_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = pgm_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| SensorError::UnsupportedFormat(format!("bad PGM {what}")))
}

pub fn parse_pgm(bytes: &[u8]) -> Result<RawImage> {
    let mut pos = 0;
    if pgm_token(bytes, &mut pos)? != b"P5" {
        return Err(SensorError::UnsupportedFormat("only binary PGM (P5) is supported".into()));
    }
    let width = pgm_number(bytes, &mut pos, "width")?;
    let height = pgm_number(bytes, &mut pos, "height")?;
    let maxval = pgm_number(bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(SensorError::UnsupportedFormat(format!("maxval {maxval} not in 1..=65535")));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(SensorError::Truncated { needed: pos + 1, found: bytes.len() });
    }
    pos += 1;
    let wide = maxval > 255;
    let needed = pos + width * height * if wide { 2 } else { 1 };
    if bytes.len() < needed {
        return Err(SensorError::Truncated { needed, found: bytes.len() });
    }
    let raster = &bytes[pos..needed];
    let samples: Vec<u16> = if wide {
        raster.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect()
    } else {
        raster.iter().map(|&b| u16::from(b)).collect()
    };
    if samples.iter().any(|&s| usize::from(s) > maxval) {
        return Err(SensorError::UnsupportedFormat("sample exceeds maxval".into()));
    }
    let depth = usize::BITS - maxval.leading_zeros();
    RawImage::new(height, width, depth, samples)
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<RawImage> {
    parse_pgm(&std::fs::read(path)?)
}

/// Encodes with `maxval = 2^depth - 1`.
pub fn encode_pgm(img: &RawImage) -> Vec<u8> {
    let maxval = (1u32 << img.depth) - 1;
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, maxval).into_bytes();
    if maxval > 255 {
        out.extend(img.samples.iter().flat_map(|s| s.to_be_bytes()));
    } else {
        out.extend(img.samples.iter().map(|&s| s as u8));
    }
    out
}

/// Rescales `img` to `bits` by dropping (or appending) low-order bits, then
/// forces the `apx` lowest bits to zero. The result is a one-channel map.
pub fn quantize_skip(img: &RawImage, bits: u32, apx: u32) -> Result<FeatureMap> {
    if bits == 0 || bits > 16 {
        return Err(SensorError::UnsupportedFormat(format!("pixel width {bits} not in 1..=16")));
    }
    if apx >= bits {
        return Err(SensorError::ApxOutOfRange { apx, bits });
    }
    let mask = !((1u32 << apx) - 1);
    let data = img
        .samples
        .iter()
        .map(|&s| {
            let s = u32::from(s);
            let v = if img.depth >= bits { s >> (img.depth - bits) } else { s << (bits - img.depth) };
            v & mask
        })
        .collect();
    Ok(FeatureMap::new(1, img.height, img.width, bits, data)?)
}

/// Bits actually converted by the ADC for one frame.
pub fn converted_bits(img: &RawImage, bits: u32, apx: u32) -> u64 {
    (img.samples.len() as u64) * u64::from(bits.saturating_sub(apx))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Vec<u8> {
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 4, 0, 0, 0, 2, 0, 0, 0, 2];
        bytes.extend(0u8..16);
        bytes
    }

    #[test]
    fn idx_fixture() {
        let IdxData::Images(images) = parse_idx(&fixture()).unwrap() else { panic!("expected images") };
        assert_eq!(images.len(), 4);
        assert!(images.iter().all(|im| im.samples().len() == 4));
        assert_eq!(images[1].samples(), &[4, 5, 6, 7]);
    }

    #[test]
    fn idx_truncated() {
        let bytes = fixture();
        assert!(matches!(parse_idx(&bytes[..20]), Err(SensorError::Truncated { .. })));
        assert!(matches!(parse_idx(&bytes[..3]), Err(SensorError::Truncated { .. })));
    }

    #[test]
    fn idx_bad_magic() {
        let mut bytes = fixture();
        bytes[3] = 9;
        assert!(matches!(parse_idx(&bytes), Err(SensorError::BadMagic(0x809))));
    }

    #[test]
    fn idx_labels() {
        let bytes = encode_idx_labels(&[3, 1, 4]);
        assert_eq!(parse_idx(&bytes).unwrap(), IdxData::Labels(vec![3, 1, 4]));
    }

    #[test]
    fn pgm_fixture_with_comment() {
        let mut bytes = b"P5\n# a comment\n2 2\n255\n".to_vec();
        bytes.extend([10, 20, 30, 40]);
        let img = parse_pgm(&bytes).unwrap();
        assert_eq!((img.height(), img.width(), img.depth()), (2, 2, 8));
        assert_eq!(img.samples(), &[10, 20, 30, 40]);
    }

    #[test]
    fn pgm_wide_and_truncated() {
        let img = RawImage::new(1, 2, 12, vec![4095, 7]).unwrap();
        let bytes = encode_pgm(&img);
        assert_eq!(parse_pgm(&bytes).unwrap(), img);
        assert!(matches!(parse_pgm(&bytes[..bytes.len() - 1]), Err(SensorError::Truncated { .. })));
    }

    #[test]
    fn pgm_rejects_ascii() {
        assert!(matches!(parse_pgm(b"P2\n1 1\n255\n0"), Err(SensorError::UnsupportedFormat(_))));
    }

    #[test]
    fn quantize_masks_low_bits() {
        let img = RawImage::new(1, 1, 8, vec![0b1011_0111]).unwrap();
        assert_eq!(quantize_skip(&img, 8, 2).unwrap().data(), &[0b1011_0100]);
        assert_eq!(quantize_skip(&img, 8, 0).unwrap().data(), &[0b1011_0111]);
        assert!(matches!(quantize_skip(&img, 8, 8), Err(SensorError::ApxOutOfRange { .. })));
    }

    #[test]
    fn quantize_rescales_by_truncation() {
        let img = RawImage::new(1, 2, 12, vec![0xABC, 0x00F]).unwrap();
        assert_eq!(quantize_skip(&img, 8, 0).unwrap().data(), &[0xAB, 0x00]);
        let img = RawImage::new(1, 1, 4, vec![0xF]).unwrap();
        assert_eq!(quantize_skip(&img, 8, 0).unwrap().data(), &[0xF0]);
    }
}
