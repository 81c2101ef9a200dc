//! Dual-network intermediate representation.
//!
//! A [`DualNetwork`] holds one [`NetworkSpec`] per modality. Each network is
//! an ordered list of blocks; the block index is the "level" used by fusion
//! distance and location. Only shapes and counts are modeled, no tensors.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const FUSENET_VGG16: &str = include_str!("../presets/fusenet_vgg16.json");
const TINY2: &str = include_str!("../presets/tiny2.json");

/// Names accepted by [`builtin_preset`].
pub const PRESET_NAMES: [&str; 2] = ["fusenet_vgg16", "tiny2"];

#[derive(Debug, Error)]
pub enum NetError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("layer '{layer_id}': {rule}")]
    Invariant { layer_id: String, rule: String },
    #[error("network: {0}")]
    Structure(String),
    #[error("unknown preset '{0}' (expected one of: fusenet_vgg16, tiny2)")]
    UnknownPreset(String),
}

impl NetError {
    fn invariant(layer_id: &str, rule: impl Into<String>) -> Self {
        NetError::Invariant {
            layer_id: layer_id.to_string(),
            rule: rule.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Rgb,
    Depth,
}

impl Modality {
    pub fn other(self) -> Self {
        match self {
            Modality::Rgb => Modality::Depth,
            Modality::Depth => Modality::Rgb,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::Depth => "depth",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Pool,
    Upsample,
    Fc,
}

/// Feature-map shape as (channels, height, width).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: u64,
    pub height: u64,
    pub width: u64,
}

impl Shape {
    pub fn new(channels: u64, height: u64, width: u64) -> Self {
        Shape {
            channels,
            height,
            width,
        }
    }

    pub fn words(&self) -> u64 {
        self.channels * self.height * self.width
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub id: String,
    pub kind: LayerKind,
    pub in_channels: u64,
    pub out_channels: u64,
    pub in_height: u64,
    pub in_width: u64,
    pub kernel_h: u64,
    pub kernel_w: u64,
    pub stride: u64,
    pub padding: u64,
}

fn sliding_extent(input: u64, padding: u64, kernel: u64, stride: u64) -> Option<u64> {
    let padded = input + 2 * padding;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

impl LayerSpec {
    pub fn input_shape(&self) -> Shape {
        Shape::new(self.in_channels, self.in_height, self.in_width)
    }

    /// Output shape of a layer that passed [`LayerSpec::validate`].
    pub fn output_shape(&self) -> Shape {
        match self.kind {
            LayerKind::Conv | LayerKind::Pool => Shape::new(
                self.out_channels,
                sliding_extent(self.in_height, self.padding, self.kernel_h, self.stride)
                    .unwrap_or(0),
                sliding_extent(self.in_width, self.padding, self.kernel_w, self.stride)
                    .unwrap_or(0),
            ),
            LayerKind::Upsample => {
                Shape::new(self.out_channels, self.in_height * 2, self.in_width * 2)
            }
            LayerKind::Fc => Shape::new(self.out_channels, 1, 1),
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let positive = [
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
            ("in_height", self.in_height),
            ("in_width", self.in_width),
            ("kernel_h", self.kernel_h),
            ("kernel_w", self.kernel_w),
            ("stride", self.stride),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(NetError::invariant(&self.id, format!("{name} must be positive")));
            }
        }
        match self.kind {
            LayerKind::Conv | LayerKind::Pool => {
                let h = sliding_extent(self.in_height, self.padding, self.kernel_h, self.stride);
                let w = sliding_extent(self.in_width, self.padding, self.kernel_w, self.stride);
                if h.is_none() || w.is_none() {
                    return Err(NetError::invariant(
                        &self.id,
                        "kernel larger than padded input (output size < 1)",
                    ));
                }
            }
            LayerKind::Fc => {
                if self.kernel_h != 1 || self.kernel_w != 1 {
                    return Err(NetError::invariant(&self.id, "fc layers require a 1x1 kernel"));
                }
            }
            LayerKind::Upsample => {}
        }
        if matches!(self.kind, LayerKind::Pool | LayerKind::Upsample)
            && self.in_channels != self.out_channels
        {
            return Err(NetError::invariant(
                &self.id,
                format!(
                    "{:?} layers require in_channels = out_channels ({} != {})",
                    self.kind, self.in_channels, self.out_channels
                )
                .to_lowercase(),
            ));
        }
        Ok(())
    }
}

/// Output shape of a single layer.
pub fn output_shape(layer: &LayerSpec) -> Shape {
    layer.output_shape()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub modality: Modality,
    pub blocks: Vec<Vec<LayerSpec>>,
}

impl NetworkSpec {
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.blocks.iter().flatten()
    }

    /// Layers paired with their block level.
    pub fn layers_with_level(&self) -> impl Iterator<Item = (usize, &LayerSpec)> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(level, block)| block.iter().map(move |l| (level, l)))
    }

    pub fn first_layer(&self, level: usize) -> Option<&LayerSpec> {
        self.blocks.get(level).and_then(|b| b.first())
    }

    pub fn last_layer(&self, level: usize) -> Option<&LayerSpec> {
        self.blocks.get(level).and_then(|b| b.last())
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.blocks.is_empty() {
            return Err(NetError::Structure(format!(
                "{} network has no blocks",
                self.modality
            )));
        }
        if let Some(level) = self.blocks.iter().position(|b| b.is_empty()) {
            return Err(NetError::Structure(format!(
                "{} block {level} is empty",
                self.modality
            )));
        }
        let mut seen = HashSet::new();
        let mut prev: Option<&LayerSpec> = None;
        for layer in self.layers() {
            if !seen.insert(layer.id.as_str()) {
                return Err(NetError::invariant(&layer.id, "duplicate layer id"));
            }
            layer.validate()?;
            if let Some(p) = prev {
                let out = p.output_shape();
                if out.channels != layer.in_channels {
                    return Err(NetError::invariant(
                        &layer.id,
                        format!(
                            "channel mismatch: declares in_channels={} but predecessor '{}' emits {}",
                            layer.in_channels, p.id, out.channels
                        ),
                    ));
                }
                if out.height != layer.in_height || out.width != layer.in_width {
                    return Err(NetError::invariant(
                        &layer.id,
                        format!(
                            "spatial mismatch: declares {}x{} but predecessor '{}' emits {}x{}",
                            layer.in_height, layer.in_width, p.id, out.height, out.width
                        ),
                    ));
                }
            }
            prev = Some(layer);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualNetwork {
    pub rgb: NetworkSpec,
    pub depth: NetworkSpec,
}

impl DualNetwork {
    pub fn new(rgb: NetworkSpec, depth: NetworkSpec) -> Result<Self, NetError> {
        let nets = DualNetwork { rgb, depth };
        nets.validate()?;
        Ok(nets)
    }

    pub fn get(&self, modality: Modality) -> &NetworkSpec {
        match modality {
            Modality::Rgb => &self.rgb,
            Modality::Depth => &self.depth,
        }
    }

    /// Number of levels (identical for both modalities).
    pub fn block_count(&self) -> usize {
        self.rgb.block_count()
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.rgb.modality != Modality::Rgb || self.depth.modality != Modality::Depth {
            return Err(NetError::Structure("modality tags do not match their slots".into()));
        }
        self.rgb.validate()?;
        self.depth.validate()?;
        if self.rgb.block_count() != self.depth.block_count() {
            return Err(NetError::Structure(format!(
                "block counts differ: rgb has {}, depth has {}",
                self.rgb.block_count(),
                self.depth.block_count()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = DualNetworkDoc {
            rgb: NetworkDoc {
                blocks: self.rgb.blocks.clone(),
            },
            depth: NetworkDoc {
                blocks: self.depth.blocks.clone(),
            },
        };
        serde_json::to_string_pretty(&doc).expect("network serialization is infallible")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    blocks: Vec<Vec<LayerSpec>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DualNetworkDoc {
    rgb: NetworkDoc,
    depth: NetworkDoc,
}

/// Parses and validates a dual-network JSON document.
pub fn parse_dual_network(text: &str) -> Result<DualNetwork, NetError> {
    let doc: DualNetworkDoc = serde_json::from_str(text).map_err(|e| NetError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    DualNetwork::new(
        NetworkSpec {
            modality: Modality::Rgb,
            blocks: doc.rgb.blocks,
        },
        NetworkSpec {
            modality: Modality::Depth,
            blocks: doc.depth.blocks,
        },
    )
}

/// Built-in networks.
///
/// `fusenet_vgg16` is a VGG16-style encoder (5 blocks) mirrored by a 5-block
/// upsample+conv decoder per modality at 224x224; the RGB input has 3
/// channels, depth has 1. `tiny2` is two single-conv blocks per modality at
/// 8x8, small enough to enumerate by hand.
pub fn builtin_preset(name: &str) -> Result<DualNetwork, NetError> {
    let text = match name {
        "fusenet_vgg16" => FUSENET_VGG16,
        "tiny2" => TINY2,
        other => return Err(NetError::UnknownPreset(other.to_string())),
    };
    parse_dual_network(text)
}
