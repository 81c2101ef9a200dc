//! Hypernetwork gating of fuseLinks.
//!
//! The hypernetwork is `conv3x3 (stride 1, pad 1) -> ReLU -> global average
//! pool -> flatten -> FC -> sigmoid`, producing one score per link. Links
//! whose score is at least the threshold are kept; kept links contribute in
//! full. Weights are either seeded or loaded; there is no training here.

use std::io::{self, Read, Write};

use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView3, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuselink::Deployment;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"A3HN";
pub const WEIGHTS_VERSION: u32 = 1;
const HEADER_BYTES: usize = 32;

/// Largest and smallest f64 strictly inside (0, 1) that gate scores are
/// clamped to, so saturated sigmoids still compare below 1 and above 0.
const SCORE_MAX: f64 = 1.0 - f64::EPSILON / 2.0;
const SCORE_MIN: f64 = f64::MIN_POSITIVE;

#[derive(Debug, Error)]
pub enum GateError {
    #[error("hypernetwork dimension '{0}' must be positive")]
    ZeroDim(&'static str),
    #[error("input shape {got:?} does not match hypernetwork input {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("gate vector has {got} scores but the deployment has {expected} links")]
    LinkCountMismatch { expected: usize, got: usize },
    #[error("gate link ids do not match the deployment link ids")]
    IdMismatch,
    #[error("threshold {0} is outside [0, 1]")]
    BadThreshold(f64),
    #[error("thresholds must be ascending ({prev} then {next})")]
    UnsortedThresholds { prev: f64, next: f64 },
    #[error("weights file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Input frame geometry: channels x height x width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for InputSpec {
    /// RGB plus depth, downsampled to 32x32.
    fn default() -> Self {
        InputSpec {
            channels: 4,
            height: 32,
            width: 32,
        }
    }
}

impl InputSpec {
    fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperNet {
    /// `[k_out, k_in, 3, 3]`
    pub conv_weights: Array4<f64>,
    pub conv_bias: Array1<f64>,
    /// `[links, k_out]`
    pub fc_weights: Array2<f64>,
    pub fc_bias: Array1<f64>,
    pub input_spec: InputSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(th: f64) -> Result<Self, GateError> {
        if (0.0..=1.0).contains(&th) {
            Ok(Threshold(th))
        } else {
            Err(GateError::BadThreshold(th))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Threshold {
    type Error = GateError;

    fn try_from(v: f64) -> Result<Self, GateError> {
        Threshold::new(v)
    }
}

impl From<Threshold> for f64 {
    fn from(t: Threshold) -> f64 {
        t.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateVector {
    pub link_ids: Vec<String>,
    pub scores: Vec<f64>,
}

impl GateVector {
    pub fn new(link_ids: Vec<String>, scores: Vec<f64>) -> Result<Self, GateError> {
        if link_ids.len() != scores.len() {
            return Err(GateError::LinkCountMismatch {
                expected: link_ids.len(),
                got: scores.len(),
            });
        }
        Ok(GateVector { link_ids, scores })
    }

    /// `link_id,score` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["link_id", "score"]).expect("in-memory write");
        for (id, score) in self.link_ids.iter().zip(&self.scores) {
            w.write_record([id.as_str(), &score.to_string()]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

fn sigmoid(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(SCORE_MIN, SCORE_MAX)
}

impl HyperNet {
    /// Seeded initialization. Draws from ChaCha8 in the order conv weights,
    /// conv bias, FC weights, FC bias, each uniform in [-0.5, 0.5].
    pub fn init(seed: u64, num_links: usize, input_spec: InputSpec, k_out: usize) -> Result<Self, GateError> {
        if num_links == 0 {
            return Err(GateError::ZeroDim("num_links"));
        }
        if k_out == 0 {
            return Err(GateError::ZeroDim("k_out"));
        }
        check_spec(&input_spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || rng.gen_range(-0.5..=0.5);
        let k_in = input_spec.channels;
        let conv_weights = Array4::from_shape_simple_fn((k_out, k_in, 3, 3), &mut draw);
        let conv_bias = Array1::from_shape_simple_fn(k_out, &mut draw);
        let fc_weights = Array2::from_shape_simple_fn((num_links, k_out), &mut draw);
        let fc_bias = Array1::from_shape_simple_fn(num_links, &mut draw);
        Ok(HyperNet {
            conv_weights,
            conv_bias,
            fc_weights,
            fc_bias,
            input_spec,
        })
    }

    /// A hypernetwork with every weight and bias zero.
    pub fn zeros(num_links: usize, input_spec: InputSpec, k_out: usize) -> Self {
        HyperNet {
            conv_weights: Array4::zeros((k_out, input_spec.channels, 3, 3)),
            conv_bias: Array1::zeros(k_out),
            fc_weights: Array2::zeros((num_links, k_out)),
            fc_bias: Array1::zeros(num_links),
            input_spec,
        }
    }

    pub fn num_links(&self) -> usize {
        self.fc_bias.len()
    }

    pub fn k_out(&self) -> usize {
        self.conv_bias.len()
    }

    /// Raw per-link scores in (0, 1).
    pub fn forward(&self, input: ArrayView3<f64>) -> Result<Vec<f64>, GateError> {
        let (c, h, w) = input.dim();
        if (c, h, w) != self.input_spec.dims() {
            return Err(GateError::ShapeMismatch {
                expected: self.input_spec.dims(),
                got: (c, h, w),
            });
        }
        let mut padded = Array3::<f64>::zeros((c, h + 2, w + 2));
        padded.slice_mut(s![.., 1..h + 1, 1..w + 1]).assign(&input);

        let pooled: Array1<f64> = self
            .conv_weights
            .outer_iter()
            .zip(self.conv_bias.iter())
            .map(|(kernel, &bias)| {
                let mut acc = 0.0;
                for window in padded.windows((c, 3, 3)) {
                    let pre = Zip::from(&window).and(&kernel).fold(bias, |sum, &x, &k| sum + x * k);
                    acc += pre.max(0.0);
                }
                acc / (h * w) as f64
            })
            .collect();

        let logits = self.fc_weights.dot(&pooled) + &self.fc_bias;
        Ok(logits.iter().map(|&z| sigmoid(z)).collect())
    }

    /// Scores bound to the links of `dep`, in deployment order.
    pub fn gates(&self, input: ArrayView3<f64>, dep: &Deployment) -> Result<GateVector, GateError> {
        if dep.links.len() != self.num_links() {
            return Err(GateError::LinkCountMismatch {
                expected: dep.links.len(),
                got: self.num_links(),
            });
        }
        GateVector::new(dep.link_ids(), self.forward(input)?)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), GateError> {
        let mut header = [0u8; HEADER_BYTES];
        header[..4].copy_from_slice(WEIGHTS_MAGIC);
        let fields = [
            WEIGHTS_VERSION,
            self.input_spec.channels as u32,
            self.k_out() as u32,
            self.input_spec.height as u32,
            self.input_spec.width as u32,
            self.num_links() as u32,
        ];
        for (i, v) in fields.iter().enumerate() {
            header[4 + 4 * i..8 + 4 * i].copy_from_slice(&v.to_le_bytes());
        }
        out.write_all(&header)?;
        let arrays = self
            .conv_weights
            .iter()
            .chain(self.conv_bias.iter())
            .chain(self.fc_weights.iter())
            .chain(self.fc_bias.iter());
        for v in arrays {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, GateError> {
        let mut header = [0u8; HEADER_BYTES];
        input.read_exact(&mut header)?;
        if &header[..4] != WEIGHTS_MAGIC {
            return Err(GateError::Format("bad magic".into()));
        }
        let field = |i: usize| {
            u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize
        };
        if field(0) as u32 != WEIGHTS_VERSION {
            return Err(GateError::Format(format!("unsupported version {}", field(0))));
        }
        let (k_in, k_out, height, width, links) = (field(1), field(2), field(3), field(4), field(5));
        let input_spec = InputSpec {
            channels: k_in,
            height,
            width,
        };
        check_spec(&input_spec)?;
        if k_out == 0 || links == 0 {
            return Err(GateError::ZeroDim(if k_out == 0 { "k_out" } else { "num_links" }));
        }
        let mut body = Vec::new();
        input.read_to_end(&mut body)?;
        let expected = k_out * k_in * 9 + k_out + links * k_out + links;
        if body.len() != expected * 8 {
            return Err(GateError::Format(format!(
                "expected {expected} weights, found {} bytes",
                body.len()
            )));
        }
        let mut values = body
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")));
        let mut take = |n: usize| values.by_ref().take(n).collect::<Vec<_>>();
        let conv_weights = Array4::from_shape_vec((k_out, k_in, 3, 3), take(k_out * k_in * 9))
            .map_err(|e| GateError::Format(e.to_string()))?;
        let conv_bias = Array1::from_vec(take(k_out));
        let fc_weights = Array2::from_shape_vec((links, k_out), take(links * k_out))
            .map_err(|e| GateError::Format(e.to_string()))?;
        let fc_bias = Array1::from_vec(take(links));
        let hn = HyperNet {
            conv_weights,
            conv_bias,
            fc_weights,
            fc_bias,
            input_spec,
        };
        if !hn.all_finite() {
            return Err(GateError::Format("non-finite weight".into()));
        }
        Ok(hn)
    }

    fn all_finite(&self) -> bool {
        self.conv_weights
            .iter()
            .chain(self.conv_bias.iter())
            .chain(self.fc_weights.iter())
            .chain(self.fc_bias.iter())
            .all(|v| v.is_finite())
    }
}

fn check_spec(spec: &InputSpec) -> Result<(), GateError> {
    for (name, v) in [("k_in", spec.channels), ("height", spec.height), ("width", spec.width)] {
        if v == 0 {
            return Err(GateError::ZeroDim(name));
        }
    }
    Ok(())
}

/// Seeded stand-in camera/depth frame with values uniform in [0, 1).
pub fn synthetic_input(seed: u64, spec: InputSpec) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f4a3);
    Array3::from_shape_simple_fn(spec.dims(), || rng.gen::<f64>())
}

/// Frame file: `{"shape": [c, h, w], "data": [...]}` in row-major order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameDoc {
    pub shape: [usize; 3],
    pub data: Vec<f64>,
}

impl FrameDoc {
    pub fn into_array(self) -> Result<Array3<f64>, GateError> {
        let [c, h, w] = self.shape;
        Array3::from_shape_vec((c, h, w), self.data).map_err(|e| GateError::Format(e.to_string()))
    }
}

/// Keeps exactly the links whose score is at least `th`.
pub fn prune(dep: &Deployment, gates: &GateVector, th: Threshold) -> Result<Deployment, GateError> {
    check_ids(dep, gates)?;
    let links = dep
        .links
        .iter()
        .zip(&gates.scores)
        .filter(|(_, &score)| score >= th.value())
        .map(|(link, _)| link.clone())
        .collect();
    Ok(Deployment::new(format!("{}@th{}", dep.name, th.value()), links))
}

fn check_ids(dep: &Deployment, gates: &GateVector) -> Result<(), GateError> {
    if dep.links.len() != gates.scores.len() {
        return Err(GateError::LinkCountMismatch {
            expected: dep.links.len(),
            got: gates.scores.len(),
        });
    }
    if dep.links.iter().zip(&gates.link_ids).any(|(l, id)| &l.id != id) {
        return Err(GateError::IdMismatch);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub th: f64,
    pub kept_count: usize,
    pub kept_link_ids: Vec<String>,
}

pub fn threshold_sweep(
    dep: &Deployment,
    gates: &GateVector,
    ths: &[Threshold],
) -> Result<Vec<SweepRow>, GateError> {
    check_ascending(ths)?;
    ths.iter()
        .map(|&th| {
            let kept = prune(dep, gates, th)?;
            Ok(SweepRow {
                th: th.value(),
                kept_count: kept.links.len(),
                kept_link_ids: kept.link_ids(),
            })
        })
        .collect()
}

pub fn check_ascending(ths: &[Threshold]) -> Result<(), GateError> {
    match ths.windows(2).find(|w| w[1] < w[0]) {
        Some(w) => Err(GateError::UnsortedThresholds {
            prev: w[0].value(),
            next: w[1].value(),
        }),
        None => Ok(()),
    }
}
