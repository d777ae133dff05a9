//! Minimal PointNet-style group encoder with three per-keypoint heads.
//!
//! Each group member row (relative position scaled by the group radius,
//! color, normal) passes through a shared two-layer MLP; the group is
//! max-pooled; the pooled feature, concatenated with the keypoint's own
//! coordinates, feeds three independent heads (class logits, 27 offsets,
//! confidence logit).

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::targets::Offsets;
use crate::error::{Error, Result};
use crate::geometry::{Vec3, CONTROL_POINT_COUNT};
use crate::pointcloud::{GroupedSample, FEATURE_DIM};

pub const OFFSET_DIM: usize = CONTROL_POINT_COUNT * 3;
/// Width appended to the pooled feature: the keypoint position.
pub const POSITION_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkShape {
    /// Number of classes `c`, background included.
    pub classes: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub hidden3: usize,
}

impl Default for NetworkShape {
    fn default() -> Self {
        Self {
            classes: 2,
            hidden1: 32,
            hidden2: 128,
            hidden3: 64,
        }
    }
}

impl NetworkShape {
    /// `(name, rows = out, cols = in)` for every layer, in storage order.
    pub fn layer_shapes(&self) -> Vec<(&'static str, usize, usize)> {
        let head_in = self.hidden2 + POSITION_DIM;
        vec![
            ("point1", self.hidden1, FEATURE_DIM),
            ("point2", self.hidden2, self.hidden1),
            ("seg_hidden", self.hidden3, head_in),
            ("seg_out", self.classes, self.hidden3),
            ("reg_hidden", self.hidden3, head_in),
            ("reg_out", OFFSET_DIM, self.hidden3),
            ("conf_hidden", self.hidden3, head_in),
            ("conf_out", 1, self.hidden3),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.hidden1 == 0 || self.hidden2 == 0 || self.hidden3 == 0 {
            return Err(Error::invalid(format!(
                "invalid network shape {self:?}: need classes ≥ 2 and non-zero widths"
            )));
        }
        Ok(())
    }

    /// Width of one output row: offsets, class probabilities, confidence.
    pub fn output_width(&self) -> usize {
        OFFSET_DIM + self.classes + 1
    }
}

pub(crate) const POINT1: usize = 0;
pub(crate) const POINT2: usize = 1;
pub(crate) const SEG: usize = 2;
pub(crate) const REG: usize = 4;
pub(crate) const CONF: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    /// `out × in`.
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    fn zeros(name: &str, rows: usize, cols: usize) -> Self {
        Self {
            name: name.to_string(),
            weight: DMatrix::zeros(rows, cols),
            bias: DVector::zeros(rows),
        }
    }

    fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// All learnable parameters. The same container holds gradients and
/// optimizer velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub shape: NetworkShape,
    pub layers: Vec<Layer>,
}

impl EncoderParams {
    pub fn zeros(shape: NetworkShape) -> Self {
        let layers = shape
            .layer_shapes()
            .into_iter()
            .map(|(name, r, c)| Layer::zeros(name, r, c))
            .collect();
        Self { shape, layers }
    }

    /// He-normal hidden layers, `N(0, 1/fan_in)` output layers, zero biases.
    pub fn init(shape: NetworkShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros(shape);
        for layer in &mut params.layers {
            let fan_in = layer.weight.ncols() as f64;
            let gain = if layer.name.ends_with("_out") { 1.0 } else { 2.0 };
            let dist = Normal::new(0.0, (gain / fan_in).sqrt()).expect("positive std");
            for v in layer.weight.iter_mut() {
                *v = dist.sample(&mut rng);
            }
        }
        Ok(params)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::len).sum()
    }

    fn locate(&self, mut i: usize) -> (usize, bool, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            if i < layer.weight.len() {
                return (l, true, i);
            }
            i -= layer.weight.len();
            if i < layer.bias.len() {
                return (l, false, i);
            }
            i -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Flat parameter access (weights then bias, layer by layer).
    pub fn get(&self, i: usize) -> f64 {
        let (l, w, j) = self.locate(i);
        if w {
            self.layers[l].weight[j]
        } else {
            self.layers[l].bias[j]
        }
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let (l, w, j) = self.locate(i);
        if w {
            self.layers[l].weight[j] = value;
        } else {
            self.layers[l].bias[j] = value;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &EncoderParams, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight * scale;
            a.bias += &b.bias * scale;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weight *= s;
            l.bias *= s;
        }
    }

    /// Per-layer shape differences against `shape`, empty when compatible.
    pub fn shape_diff(&self, shape: &NetworkShape) -> Vec<String> {
        let expected = shape.layer_shapes();
        let mut diffs = Vec::new();
        if expected.len() != self.layers.len() {
            diffs.push(format!(
                "layer count: expected {}, found {}",
                expected.len(),
                self.layers.len()
            ));
        }
        for ((name, r, c), layer) in expected.iter().zip(&self.layers) {
            let found = (layer.weight.nrows(), layer.weight.ncols());
            if *name != layer.name || found != (*r, *c) {
                diffs.push(format!(
                    "{name}: expected {r}×{c}, found {} {}×{}",
                    layer.name, found.0, found.1
                ));
            }
        }
        diffs
    }
}

/// Per-keypoint network output.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub classes: usize,
    /// `K × classes`, row-major; each row sums to 1.
    pub class_probs: Vec<f64>,
    pub offsets: Vec<Offsets>,
    pub confidence: Vec<f64>,
}

impl Prediction {
    pub fn num_keypoints(&self) -> usize {
        self.offsets.len()
    }

    pub fn probs(&self, k: usize) -> &[f64] {
        &self.class_probs[k * self.classes..(k + 1) * self.classes]
    }

    /// Most probable class; lowest class id on ties.
    pub fn argmax_class(&self, k: usize) -> u32 {
        let mut best = 0;
        for (c, &p) in self.probs(k).iter().enumerate() {
            if p > self.probs(k)[best] {
                best = c;
            }
        }
        best as u32
    }

    /// The `K × (27 + c + 1)` output tensor, row-major: offsets, class
    /// probabilities, confidence.
    pub fn to_tensor(&self) -> DMatrix<f64> {
        let width = OFFSET_DIM + self.classes + 1;
        DMatrix::from_fn(self.num_keypoints(), width, |k, j| {
            if j < OFFSET_DIM {
                self.offsets[k][j / 3][j % 3]
            } else if j < OFFSET_DIM + self.classes {
                self.probs(k)[j - OFFSET_DIM]
            } else {
                self.confidence[k]
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_keypoints();
        if self.class_probs.len() != k * self.classes || self.confidence.len() != k {
            return Err(Error::invalid("prediction arrays have inconsistent lengths"));
        }
        Ok(())
    }
}

/// Intermediate activations kept for the backward pass.
pub(crate) struct ForwardCache {
    pub input: DMatrix<f64>,
    pub h1: DMatrix<f64>,
    pub h2: DMatrix<f64>,
    /// Winning group row per `(keypoint, channel)`.
    pub argmax: DMatrix<usize>,
    pub head_input: DMatrix<f64>,
    pub head_hidden: [DMatrix<f64>; 3],
    pub logits: DMatrix<f64>,
    pub offsets: DMatrix<f64>,
    pub conf_logit: DVector<f64>,
}

fn dense(x: &DMatrix<f64>, layer: &Layer) -> DMatrix<f64> {
    let mut out = x * layer.weight.transpose();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(layer.bias[j]);
    }
    out
}

fn relu_inplace(m: &mut DMatrix<f64>) {
    m.iter_mut().for_each(|v| *v = v.max(0.0));
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_row(logits: &DMatrix<f64>, k: usize) -> Vec<f64> {
    let row: Vec<f64> = logits.row(k).iter().copied().collect();
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn check_sample(params: &EncoderParams, sample: &GroupedSample) -> Result<()> {
    let k = sample.num_keypoints();
    if sample.group_size == 0
        || sample.features.len() != k * sample.group_size * FEATURE_DIM
        || sample.keypoint_positions.len() != k
    {
        return Err(Error::invalid(format!(
            "grouped sample has {} values for {k} keypoints × {} members × {FEATURE_DIM}",
            sample.features.len(),
            sample.group_size
        )));
    }
    if !(sample.group_radius > 0.0) {
        return Err(Error::invalid("grouped sample has a non-positive radius"));
    }
    let diffs = params.shape_diff(&params.shape);
    if !diffs.is_empty() {
        return Err(Error::invalid(format!("parameter shapes: {}", diffs.join("; "))));
    }
    Ok(())
}

pub(crate) fn forward_cached(params: &EncoderParams, sample: &GroupedSample) -> Result<ForwardCache> {
    check_sample(params, sample)?;
    let k = sample.num_keypoints();
    let g = sample.group_size;
    let rows = k * g;
    let inv_r = 1.0 / sample.group_radius;
    let input = DMatrix::from_fn(rows, FEATURE_DIM, |r, c| {
        let v = sample.features[r * FEATURE_DIM + c];
        if c < 3 {
            v * inv_r
        } else {
            v
        }
    });

    let mut h1 = dense(&input, &params.layers[POINT1]);
    relu_inplace(&mut h1);
    let mut h2 = dense(&h1, &params.layers[POINT2]);
    relu_inplace(&mut h2);

    let width = params.shape.hidden2;
    let mut head_input = DMatrix::zeros(k, width + POSITION_DIM);
    let mut argmax = DMatrix::from_element(k, width, 0usize);
    for j in 0..width {
        let col = h2.column(j);
        for kp in 0..k {
            let base = kp * g;
            let mut best = base;
            for r in base + 1..base + g {
                if col[r] > col[best] {
                    best = r;
                }
            }
            argmax[(kp, j)] = best;
            head_input[(kp, j)] = col[best];
        }
    }
    for (kp, p) in sample.keypoint_positions.iter().enumerate() {
        for a in 0..POSITION_DIM {
            head_input[(kp, width + a)] = p[a];
        }
    }

    let hidden = |l: usize| {
        let mut h = dense(&head_input, &params.layers[l]);
        relu_inplace(&mut h);
        h
    };
    let head_hidden = [hidden(SEG), hidden(REG), hidden(CONF)];
    let logits = dense(&head_hidden[0], &params.layers[SEG + 1]);
    let offsets = dense(&head_hidden[1], &params.layers[REG + 1]);
    let conf_logit = dense(&head_hidden[2], &params.layers[CONF + 1]).column(0).into_owned();

    Ok(ForwardCache {
        input,
        h1,
        h2,
        argmax,
        head_input,
        head_hidden,
        logits,
        offsets,
        conf_logit,
    })
}

pub(crate) fn prediction_from_cache(params: &EncoderParams, cache: &ForwardCache) -> Prediction {
    let k = cache.logits.nrows();
    let classes = params.shape.classes;
    let mut class_probs = Vec::with_capacity(k * classes);
    let mut offsets = Vec::with_capacity(k);
    for kp in 0..k {
        class_probs.extend(softmax_row(&cache.logits, kp));
        offsets.push(std::array::from_fn(|c| {
            Vec3::new(
                cache.offsets[(kp, 3 * c)],
                cache.offsets[(kp, 3 * c + 1)],
                cache.offsets[(kp, 3 * c + 2)],
            )
        }));
    }
    Prediction {
        classes,
        class_probs,
        offsets,
        confidence: cache.conf_logit.iter().map(|&z| sigmoid(z)).collect(),
    }
}

/// Runs the network on every keypoint of `sample`.
pub fn forward(params: &EncoderParams, sample: &GroupedSample) -> Result<Prediction> {
    let cache = forward_cached(params, sample)?;
    Ok(prediction_from_cache(params, &cache))
}
