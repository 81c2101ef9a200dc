//! Closed-form MAC, parameter and storage accounting.
//!
//! One word is one 32-bit value. MACs count multiply-accumulates only: bias
//! additions, pooling comparisons and upsample copies are excluded.

use std::iter::Sum;
use std::ops::Add;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuselink::{Deployment, FuseLink};
use crate::netspec::{DualNetwork, LayerKind, LayerSpec};
use crate::simulator::{ArchConfig, ArchMode, BufferSizes};

pub const WORD_BYTES: u64 = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CostError {
    #[error("link '{0}' does not resolve against the network")]
    UnresolvableLink(String),
    #[error("buffer '{0}' has zero size")]
    ZeroBuffer(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CostReport {
    pub macs: u64,
    pub params: u64,
    pub activation_words: u64,
    pub weight_words: u64,
}

impl Add for CostReport {
    type Output = CostReport;

    fn add(self, rhs: CostReport) -> CostReport {
        CostReport {
            macs: self.macs + rhs.macs,
            params: self.params + rhs.params,
            activation_words: self.activation_words + rhs.activation_words,
            weight_words: self.weight_words + rhs.weight_words,
        }
    }
}

impl Sum for CostReport {
    fn sum<I: Iterator<Item = CostReport>>(iter: I) -> CostReport {
        iter.fold(CostReport::default(), Add::add)
    }
}

pub fn layer_cost(layer: &LayerSpec) -> CostReport {
    let out = layer.output_shape();
    let (macs, params) = match layer.kind {
        LayerKind::Conv => {
            let taps = layer.in_channels * layer.kernel_h * layer.kernel_w;
            (
                out.words() * taps,
                taps * layer.out_channels + layer.out_channels,
            )
        }
        LayerKind::Fc => (
            layer.in_channels * layer.out_channels,
            layer.in_channels * layer.out_channels + layer.out_channels,
        ),
        LayerKind::Pool | LayerKind::Upsample => (0, 0),
    };
    CostReport {
        macs,
        params,
        activation_words: out.words(),
        weight_words: params,
    }
}

/// Cost of a fuseFilter, evaluated as a conv at the passive layer's input
/// resolution. `activation_words` is the partial-sum tensor that crosses the
/// fuseLink buffer.
pub fn link_cost(link: &FuseLink, nets: &DualNetwork) -> Result<CostReport, CostError> {
    let passive = link
        .passive_layer(nets)
        .filter(|_| link.active_layer(nets).is_some())
        .ok_or_else(|| CostError::UnresolvableLink(link.id.clone()))?;
    let f = &link.filter;
    let plane = passive.in_height * passive.in_width;
    let params = f.param_count();
    Ok(CostReport {
        macs: f.c_output * plane * f.c_input * f.w * f.h,
        params,
        activation_words: f.c_output * plane,
        weight_words: params,
    })
}

/// Layers of both networks plus every link of `dep`.
pub fn deployment_cost(nets: &DualNetwork, dep: &Deployment) -> Result<CostReport, CostError> {
    let layers: CostReport = nets
        .rgb
        .layers()
        .chain(nets.depth.layers())
        .map(layer_cost)
        .sum();
    let links = dep
        .links
        .iter()
        .map(|l| link_cost(l, nets))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(layers + links.into_iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayBuffers {
    pub input_buffer_words: u64,
    pub weight_buffer_words: u64,
    pub output_buffer_words: u64,
}

impl ArrayBuffers {
    fn total(&self) -> u64 {
        self.input_buffer_words + self.weight_buffer_words + self.output_buffer_words
    }
}

impl From<BufferSizes> for ArrayBuffers {
    fn from(b: BufferSizes) -> Self {
        ArrayBuffers {
            input_buffer_words: b.input_words,
            weight_buffer_words: b.weight_words,
            output_buffer_words: b.output_words,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageReport {
    pub arrays: Vec<ArrayBuffers>,
    pub fuselink_buffer_words: Vec<u64>,
    pub total_words: u64,
    pub overhead_vs_baseline: f64,
}

fn check_buffers(b: &BufferSizes, which: [&'static str; 3]) -> Result<(), CostError> {
    for (size, name) in [b.input_words, b.weight_words, b.output_words].into_iter().zip(which) {
        if size == 0 {
            return Err(CostError::ZeroBuffer(name));
        }
    }
    Ok(())
}

/// On-chip storage for `arch`, with overhead relative to the monolithic
/// baseline buffers of the same configuration.
///
/// The split architecture carries a full input/weight/output buffer set per
/// half plus one fuseLink buffer per half.
pub fn storage_footprint(arch: &ArchConfig) -> Result<StorageReport, CostError> {
    check_buffers(
        &arch.baseline_buffers,
        ["baseline input", "baseline weight", "baseline output"],
    )?;
    let baseline = ArrayBuffers::from(arch.baseline_buffers);
    let baseline_total = baseline.total();
    let (arrays, fuselink) = match arch.mode {
        ArchMode::BaselineSequential => (vec![baseline], Vec::new()),
        ArchMode::FuseMultitasking => {
            check_buffers(&arch.half_buffers, ["half input", "half weight", "half output"])?;
            let half = ArrayBuffers::from(arch.half_buffers);
            (vec![half, half], vec![arch.fuselink_buffer_words; 2])
        }
    };
    let total_words =
        arrays.iter().map(ArrayBuffers::total).sum::<u64>() + fuselink.iter().sum::<u64>();
    Ok(StorageReport {
        overhead_vs_baseline: (total_words as f64 - baseline_total as f64) / baseline_total as f64,
        arrays,
        fuselink_buffer_words: fuselink,
        total_words,
    })
}
