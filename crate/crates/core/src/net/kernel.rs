use serde::{Deserialize, Serialize};

use super::{NetError, Result};

/// A (row, col) offset inside an `extent x extent` window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tap(pub usize, pub usize);

impl Tap {
    pub fn row(self) -> usize {
        self.0
    }

    pub fn col(self) -> usize {
        self.1
    }
}

/// Trained LBP sampling pattern: which window positions are compared with
/// the pivot, and which bit of the code each comparison lands in.
///
/// `skipped` is the number of low code bits removed by approximation. For an
/// unpruned kernel it is 0 and `significance` is a permutation of
/// `0..samples.len()`; after [`apply_pac`] it covers `skipped..code_bits()`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawKernel", into = "RawKernel")]
pub struct LbpKernel {
    extent: usize,
    pivot: Tap,
    samples: Vec<Tap>,
    significance: Vec<u32>,
    skipped: u32,
}

#[derive(Serialize, Deserialize)]
struct RawKernel {
    extent: usize,
    pivot: Tap,
    samples: Vec<Tap>,
    significance: Vec<u32>,
    #[serde(default, skip_serializing_if = "is_zero")]
    skipped: u32,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

impl TryFrom<RawKernel> for LbpKernel {
    type Error = NetError;

    fn try_from(raw: RawKernel) -> Result<Self> {
        LbpKernel::with_skipped(raw.extent, raw.pivot, raw.samples, raw.significance, raw.skipped)
    }
}

impl From<LbpKernel> for RawKernel {
    fn from(k: LbpKernel) -> Self {
        RawKernel {
            extent: k.extent,
            pivot: k.pivot,
            samples: k.samples,
            significance: k.significance,
            skipped: k.skipped,
        }
    }
}

impl LbpKernel {
    pub fn new(extent: usize, pivot: Tap, samples: Vec<Tap>, significance: Vec<u32>) -> Result<Self> {
        Self::with_skipped(extent, pivot, samples, significance, 0)
    }

    fn with_skipped(
        extent: usize,
        pivot: Tap,
        samples: Vec<Tap>,
        significance: Vec<u32>,
        skipped: u32,
    ) -> Result<Self> {
        if extent == 0 {
            return Err(NetError::InvalidKernel("extent must be positive".into()));
        }
        let in_window = |t: Tap| t.0 < extent && t.1 < extent;
        if !in_window(pivot) {
            return Err(NetError::InvalidKernel(format!("pivot {pivot:?} outside {extent}x{extent} window")));
        }
        if let Some(t) = samples.iter().find(|&&t| !in_window(t)) {
            return Err(NetError::InvalidKernel(format!("sample {t:?} outside {extent}x{extent} window")));
        }
        if samples.contains(&pivot) {
            return Err(NetError::InvalidKernel("pivot must not be a sample".into()));
        }
        if significance.len() != samples.len() {
            return Err(NetError::InvalidKernel(format!(
                "{} significances for {} samples",
                significance.len(),
                samples.len()
            )));
        }
        let mut seen = vec![false; samples.len()];
        for &s in &significance {
            let slot = s
                .checked_sub(skipped)
                .map(|i| i as usize)
                .filter(|&i| i < samples.len())
                .ok_or_else(|| {
                    NetError::InvalidKernel(format!(
                        "significance {s} outside {skipped}..{}",
                        skipped as usize + samples.len()
                    ))
                })?;
            if std::mem::replace(&mut seen[slot], true) {
                return Err(NetError::InvalidKernel(format!("significance {s} assigned twice")));
            }
        }
        if skipped as usize + samples.len() > 32 {
            return Err(NetError::InvalidKernel("codes wider than 32 bits are not supported".into()));
        }
        Ok(LbpKernel { extent, pivot, samples, significance, skipped })
    }

    /// The classic 3x3 pattern: centre pivot, eight neighbours, bit `n` for
    /// the n-th neighbour clockwise from the top-left corner.
    pub fn ring3() -> Self {
        let samples = vec![Tap(0, 0), Tap(0, 1), Tap(0, 2), Tap(1, 2), Tap(2, 2), Tap(2, 1), Tap(2, 0), Tap(1, 0)];
        LbpKernel::new(3, Tap(1, 1), samples, (0..8).collect()).expect("ring3 is valid")
    }

    pub fn extent(&self) -> usize {
        self.extent
    }

    pub fn pivot(&self) -> Tap {
        self.pivot
    }

    pub fn samples(&self) -> &[Tap] {
        &self.samples
    }

    pub fn significance(&self) -> &[u32] {
        &self.significance
    }

    pub fn skipped(&self) -> u32 {
        self.skipped
    }

    /// Width of the code this kernel produces, including pruned low bits.
    pub fn code_bits(&self) -> u32 {
        self.skipped + self.samples.len() as u32
    }

    /// Kernel elements as counted by the op-count formulas: samples plus pivot.
    pub fn elements(&self) -> usize {
        self.samples.len() + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProjectionEntry {
    /// Source input channel.
    pub channel: usize,
    /// Code bit (sample significance) read from that channel's LBP response.
    pub bit: u32,
    /// Bit of the fused output this comparison is written to.
    pub out_bit: u32,
}

/// Channel-fusion table: copies individual comparison bits from the
/// per-channel LBP responses into fixed positions of an `width`-bit output.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawProjection", into = "RawProjection")]
pub struct ProjectionMap {
    entries: Vec<ProjectionEntry>,
    skipped: u32,
}

#[derive(Serialize, Deserialize)]
struct RawProjection {
    entries: Vec<ProjectionEntry>,
    #[serde(default, skip_serializing_if = "is_zero")]
    skipped: u32,
}

impl TryFrom<RawProjection> for ProjectionMap {
    type Error = NetError;

    fn try_from(raw: RawProjection) -> Result<Self> {
        ProjectionMap::with_skipped(raw.entries, raw.skipped)
    }
}

impl From<ProjectionMap> for RawProjection {
    fn from(p: ProjectionMap) -> Self {
        RawProjection { entries: p.entries, skipped: p.skipped }
    }
}

impl ProjectionMap {
    pub fn new(entries: Vec<ProjectionEntry>) -> Result<Self> {
        Self::with_skipped(entries, 0)
    }

    fn with_skipped(entries: Vec<ProjectionEntry>, skipped: u32) -> Result<Self> {
        let width = skipped as usize + entries.len();
        if width > 32 {
            return Err(NetError::InvalidProjection(format!("fused width {width} exceeds 32 bits")));
        }
        let mut seen = vec![false; entries.len()];
        for e in &entries {
            let slot = e
                .out_bit
                .checked_sub(skipped)
                .map(|i| i as usize)
                .filter(|&i| i < entries.len())
                .ok_or_else(|| {
                    NetError::InvalidProjection(format!("out_bit {} outside {skipped}..{width}", e.out_bit))
                })?;
            if std::mem::replace(&mut seen[slot], true) {
                return Err(NetError::InvalidProjection(format!("out_bit {} assigned twice", e.out_bit)));
            }
        }
        Ok(ProjectionMap { entries, skipped })
    }

    pub fn entries(&self) -> &[ProjectionEntry] {
        &self.entries
    }

    pub fn skipped(&self) -> u32 {
        self.skipped
    }

    /// `m`: width of the fused output code.
    pub fn width(&self) -> u32 {
        self.skipped + self.entries.len() as u32
    }

    /// Checks every entry against the kernels it reads from.
    pub fn validate_against(&self, kernels: &[LbpKernel]) -> Result<()> {
        for e in &self.entries {
            let k = kernels.get(e.channel).ok_or_else(|| {
                NetError::InvalidProjection(format!("entry reads channel {} of {}", e.channel, kernels.len()))
            })?;
            if e.bit >= k.code_bits() {
                return Err(NetError::InvalidProjection(format!(
                    "entry reads bit {} of a {}-bit code",
                    e.bit,
                    k.code_bits()
                )));
            }
        }
        Ok(())
    }
}

/// Number of approximated low bits, shared by comparisons and fusion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ApproxConfig {
    pub apx: u32,
}

impl ApproxConfig {
    pub fn new(apx: u32) -> Self {
        ApproxConfig { apx }
    }

    pub fn check(&self, kernel: &LbpKernel, proj: &ProjectionMap) -> Result<()> {
        let max = kernel.code_bits().min(proj.width());
        if self.apx > max {
            return Err(NetError::ApxOutOfRange { apx: self.apx, max });
        }
        Ok(())
    }
}

/// LBP code of a row-major `extent x extent` patch. A sample contributes its
/// significance bit when it is greater than or equal to the pivot.
pub fn lbp_encode(patch: &[u32], kernel: &LbpKernel) -> Result<u32> {
    let f = kernel.extent;
    if patch.len() != f * f {
        return Err(NetError::ShapeMismatch(format!("patch of {} pixels for a {f}x{f} kernel", patch.len())));
    }
    let pivot = patch[kernel.pivot.0 * f + kernel.pivot.1];
    Ok(kernel
        .samples
        .iter()
        .zip(&kernel.significance)
        .filter(|(t, _)| patch[t.0 * f + t.1] >= pivot)
        .fold(0u32, |code, (_, &sig)| code | 1 << sig))
}

/// Removes the `apx` lowest-significance comparisons from `kernel` and the
/// `apx` lowest output bits from `proj`. Pruned bits read as zero.
pub fn apply_pac(kernel: &LbpKernel, proj: &ProjectionMap, cfg: ApproxConfig) -> Result<(LbpKernel, ProjectionMap)> {
    cfg.check(kernel, proj)?;
    Ok((prune_kernel(kernel, cfg.apx), prune_projection(proj, cfg.apx)))
}

pub(crate) fn prune_kernel(kernel: &LbpKernel, apx: u32) -> LbpKernel {
    let keep: Vec<usize> = (0..kernel.samples.len()).filter(|&i| kernel.significance[i] >= apx).collect();
    LbpKernel {
        extent: kernel.extent,
        pivot: kernel.pivot,
        samples: keep.iter().map(|&i| kernel.samples[i]).collect(),
        significance: keep.iter().map(|&i| kernel.significance[i]).collect(),
        skipped: kernel.skipped.max(apx.min(kernel.code_bits())),
    }
}

pub(crate) fn prune_projection(proj: &ProjectionMap, apx: u32) -> ProjectionMap {
    ProjectionMap {
        entries: proj.entries.iter().copied().filter(|e| e.out_bit >= apx).collect(),
        skipped: proj.skipped.max(apx.min(proj.width())),
    }
}
