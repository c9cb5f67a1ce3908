use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    avg_pool, batch_norm, lbp_layer_forward, mlp_forward, ApproxConfig, BatchNorm, FeatureMap, LbpLayer, MlpLayer,
    NetError, Result,
};

/// Version written to and required from network documents.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    #[serde(default = "default_bits")]
    pub bits: u32,
}

fn default_bits() -> u32 {
    8
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Lbp(LbpLayer),
    AvgPool { window: usize },
    Mlp(MlpLayer),
    BatchNorm(BatchNorm),
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Lbp(_) => "lbp",
            LayerSpec::AvgPool { .. } => "avg_pool",
            LayerSpec::Mlp(_) => "mlp",
            LayerSpec::BatchNorm(_) => "batch_norm",
        }
    }
}

/// A complete network document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub format_version: u32,
    pub input: InputGeometry,
    #[serde(default)]
    pub apx: u32,
    pub layers: Vec<LayerSpec>,
}

/// The value flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Map { channels: usize, height: usize, width: usize, bits: u32 },
    Vector { len: usize },
    Scores { len: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Activation {
    Map(FeatureMap),
    Vector(Vec<u64>),
    Scores(Vec<i64>),
}

impl Activation {
    pub fn as_map(&self) -> Option<&FeatureMap> {
        match self {
            Activation::Map(fm) => Some(fm),
            _ => None,
        }
    }

    /// Map values flattened in `[c][y][x]` order, or the vector itself.
    pub fn flatten(&self) -> Option<Vec<u64>> {
        match self {
            Activation::Map(fm) => Some(fm.data().iter().map(|&v| u64::from(v)).collect()),
            Activation::Vector(v) => Some(v.clone()),
            Activation::Scores(_) => None,
        }
    }
}

impl NetworkSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: NetworkSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network spec serializes")
    }

    pub fn approx(&self) -> ApproxConfig {
        ApproxConfig::new(self.apx)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(NetError::UnsupportedVersion { found: self.format_version, expected: FORMAT_VERSION });
        }
        self.shapes()?;
        self.check_apx(self.approx())
    }

    /// Rejects an approximation degree some LBP output cannot support.
    pub fn check_apx(&self, cfg: ApproxConfig) -> Result<()> {
        if cfg.apx >= self.input.bits {
            return Err(NetError::ApxOutOfRange { apx: cfg.apx, max: self.input.bits - 1 });
        }
        for layer in &self.layers {
            if let LayerSpec::Lbp(l) = layer {
                for out in &l.outputs {
                    out.pruned(cfg)?;
                }
            }
        }
        Ok(())
    }

    /// Output shape of every layer, checking that they compose.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let g = self.input;
        if g.channels == 0 || g.height == 0 || g.width == 0 || g.bits == 0 || g.bits > 16 {
            return Err(NetError::InvalidSpec(format!("bad input geometry {g:?}")));
        }
        let mut shape = Shape::Map { channels: g.channels, height: g.height, width: g.width, bits: g.bits };
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let err = |msg: &str| NetError::InvalidSpec(format!("layer {i} ({}): {msg}", layer.kind()));
            shape = match (layer, shape) {
                (LayerSpec::Lbp(l), Shape::Map { channels, height, width, bits }) => {
                    l.validate(channels)?;
                    l.padding(height, width)?;
                    let out_bits = l.output_bits(bits);
                    if out_bits > 32 {
                        return Err(err("codes wider than 32 bits"));
                    }
                    Shape::Map { channels: l.output_channels(channels), height, width, bits: out_bits }
                }
                (LayerSpec::AvgPool { window }, Shape::Map { channels, height, width, bits }) => {
                    if *window == 0 || *window > height || *window > width {
                        return Err(err("pool window does not fit the map"));
                    }
                    Shape::Map { channels, height: height / window, width: width / window, bits }
                }
                (LayerSpec::Mlp(m), Shape::Map { channels, height, width, .. }) => {
                    m.validate(channels * height * width)?;
                    Shape::Vector { len: m.outputs() }
                }
                (LayerSpec::Mlp(m), Shape::Vector { len }) => {
                    m.validate(len)?;
                    Shape::Vector { len: m.outputs() }
                }
                (LayerSpec::BatchNorm(bn), Shape::Vector { len }) => {
                    bn.validate(len)?;
                    Shape::Scores { len }
                }
                (_, Shape::Scores { .. }) => return Err(err("nothing may follow batch norm")),
                (_, prev) => return Err(err(&format!("cannot consume {prev:?}"))),
            };
            shapes.push(shape);
        }
        Ok(shapes)
    }
}

/// Reference forward pass. Returns the output of every layer in order.
pub fn forward(spec: &NetworkSpec, input: &FeatureMap, cfg: ApproxConfig) -> Result<Vec<Activation>> {
    let g = spec.input;
    if (input.channels(), input.height(), input.width()) != (g.channels, g.height, g.width) {
        return Err(NetError::ShapeMismatch(format!(
            "input {}x{}x{} does not match spec {}x{}x{}",
            input.channels(),
            input.height(),
            input.width(),
            g.channels,
            g.height,
            g.width
        )));
    }
    let mut current = Activation::Map(input.clone());
    let mut outputs = Vec::with_capacity(spec.layers.len());
    for layer in &spec.layers {
        let next = match (layer, &current) {
            (LayerSpec::Lbp(l), Activation::Map(fm)) => Activation::Map(lbp_layer_forward(fm, l, cfg)?),
            (LayerSpec::AvgPool { window }, Activation::Map(fm)) => Activation::Map(avg_pool(fm, *window)?),
            (LayerSpec::Mlp(m), a @ (Activation::Map(_) | Activation::Vector(_))) => {
                Activation::Vector(mlp_forward(&a.flatten().expect("map or vector"), m)?)
            }
            (LayerSpec::BatchNorm(bn), Activation::Vector(v)) => Activation::Scores(batch_norm(v, bn)?),
            (l, _) => return Err(NetError::InvalidSpec(format!("{} layer cannot consume its input", l.kind()))),
        };
        outputs.push(next.clone());
        current = next;
    }
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{LbpKernel, LbpOutput, ProjectionEntry, ProjectionMap};

    fn small_spec() -> NetworkSpec {
        let projection =
            ProjectionMap::new((0..4).map(|i| ProjectionEntry { channel: 0, bit: i + 4, out_bit: i }).collect())
                .unwrap();
        NetworkSpec {
            format_version: FORMAT_VERSION,
            input: InputGeometry { channels: 1, height: 4, width: 4, bits: 8 },
            apx: 1,
            layers: vec![
                LayerSpec::Lbp(LbpLayer {
                    outputs: vec![LbpOutput { kernels: vec![LbpKernel::ring3()], projection }],
                    theta: None,
                    joint: true,
                }),
                LayerSpec::AvgPool { window: 2 },
                LayerSpec::Mlp(MlpLayer { weights: vec![vec![1; 8]; 3], weight_bits: 2, act_bits: 4, shift: 0 }),
                LayerSpec::Mlp(MlpLayer { weights: vec![vec![2; 3]; 2], weight_bits: 2, act_bits: 4, shift: 1 }),
                LayerSpec::BatchNorm(BatchNorm::identity(2)),
            ],
        }
    }

    #[test]
    fn shapes_chain() {
        let shapes = small_spec().shapes().unwrap();
        assert_eq!(shapes[0], Shape::Map { channels: 2, height: 4, width: 4, bits: 8 });
        assert_eq!(shapes[1], Shape::Map { channels: 2, height: 2, width: 2, bits: 8 });
        assert_eq!(shapes[4], Shape::Scores { len: 2 });
    }

    #[test]
    fn json_round_trip() {
        let spec = small_spec();
        let back = NetworkSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn version_is_checked() {
        let mut spec = small_spec();
        spec.format_version = 7;
        assert!(matches!(spec.validate(), Err(NetError::UnsupportedVersion { found: 7, .. })));
    }

    #[test]
    fn mismatched_mlp_is_rejected() {
        let mut spec = small_spec();
        spec.layers[2] = LayerSpec::Mlp(MlpLayer { weights: vec![vec![1; 5]], weight_bits: 2, act_bits: 4, shift: 0 });
        assert!(spec.validate().is_err());
    }

    #[test]
    fn forward_runs() {
        let spec = small_spec();
        let fm = FeatureMap::new(1, 4, 4, 8, (0..16).map(|v| v * 10).collect()).unwrap();
        let outs = forward(&spec, &fm, spec.approx()).unwrap();
        assert_eq!(outs.len(), 5);
        assert!(matches!(outs[4], Activation::Scores(ref s) if s.len() == 2));
    }
}
