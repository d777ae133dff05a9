use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::network::{
    forward_cached, prediction_from_cache, sigmoid, EncoderParams, ForwardCache, Layer, Prediction, CONF, OFFSET_DIM,
    POINT1, POINT2, REG, SEG,
};
use super::targets::{confidence_target, mean_offset_error, ConfidenceParams, KeypointTargets};
use crate::error::{Error, Result};
use crate::pointcloud::{GroupedSample, BACKGROUND_CLASS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub seg: f64,
    pub reg: f64,
    pub conf: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            seg: 1.0,
            reg: 1.0,
            conf: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.seg, self.reg, self.conf];
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("loss weights must be finite and non-negative"));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(Error::invalid("loss weights must not all be zero"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub weights: LossWeights,
    /// SmoothL1 transition point, meters.
    pub smooth_l1_beta: f64,
    pub confidence: ConfidenceParams,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            smooth_l1_beta: 1.0,
            confidence: ConfidenceParams::default(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.confidence.validate()?;
        if !(self.smooth_l1_beta > 0.0) {
            return Err(Error::invalid("smooth_l1_beta must be positive"));
        }
        Ok(())
    }
}

/// Unweighted loss terms and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub seg: f64,
    pub reg: f64,
    pub conf: f64,
}

impl LossParts {
    pub fn is_finite(&self) -> bool {
        [self.total, self.seg, self.reg, self.conf]
            .iter()
            .all(|v| v.is_finite())
    }
}

pub fn smooth_l1(d: f64, beta: f64) -> f64 {
    if d.abs() < beta {
        0.5 * d * d / beta
    } else {
        d.abs() - 0.5 * beta
    }
}

fn smooth_l1_grad(d: f64, beta: f64) -> f64 {
    if d.abs() < beta {
        d / beta
    } else {
        d.signum()
    }
}

fn check_targets(pred: &Prediction, targets: &KeypointTargets) -> Result<()> {
    pred.validate()?;
    targets.validate()?;
    if targets.len() != pred.num_keypoints() {
        return Err(Error::invalid(format!(
            "{} targets for {} predicted keypoints",
            targets.len(),
            pred.num_keypoints()
        )));
    }
    if let Some(&c) = targets.class_labels.iter().find(|&&c| c as usize >= pred.classes) {
        return Err(Error::invalid(format!(
            "class label {c} out of range for {} classes",
            pred.classes
        )));
    }
    Ok(())
}

/// Confidence target for keypoint `k`: frozen if given, otherwise derived
/// from the current offset error.
fn conf_target(pred: &Prediction, targets: &KeypointTargets, k: usize, cp: &ConfidenceParams) -> f64 {
    match (&targets.confidence, &targets.offsets[k]) {
        (Some(c), _) => c[k],
        (None, Some(gt)) => confidence_target(mean_offset_error(&pred.offsets[k], gt), cp),
        (None, None) => 0.0,
    }
}

/// Cross-entropy over all keypoints, SmoothL1 offset and squared confidence
/// errors over positive keypoints only.
pub fn multitask_loss(pred: &Prediction, targets: &KeypointTargets, cfg: &LossConfig) -> Result<LossParts> {
    check_targets(pred, targets)?;
    let k_total = pred.num_keypoints();
    if k_total == 0 {
        return Ok(LossParts::default());
    }
    let mut seg = 0.0;
    let mut reg = 0.0;
    let mut conf = 0.0;
    let mut positives = 0usize;
    for k in 0..k_total {
        let label = targets.class_labels[k];
        seg -= pred.probs(k)[label as usize].max(f64::MIN_POSITIVE).ln();
        if label == BACKGROUND_CLASS {
            continue;
        }
        positives += 1;
        let gt = targets.offsets[k].as_ref().expect("validated");
        for (p, g) in pred.offsets[k].iter().zip(gt) {
            for a in 0..3 {
                reg += smooth_l1(p[a] - g[a], cfg.smooth_l1_beta);
            }
        }
        let t = conf_target(pred, targets, k, &cfg.confidence);
        conf += (pred.confidence[k] - t).powi(2);
    }
    seg /= k_total as f64;
    if positives > 0 {
        reg /= positives as f64;
        conf /= positives as f64;
    }
    let w = &cfg.weights;
    Ok(LossParts {
        total: w.seg * seg + w.reg * reg + w.conf * conf,
        seg,
        reg,
        conf,
    })
}

fn dense_backward(layer: &Layer, input: &DMatrix<f64>, d_out: &DMatrix<f64>, grad: &mut Layer) -> DMatrix<f64> {
    grad.weight += d_out.transpose() * input;
    for (j, col) in d_out.column_iter().enumerate() {
        grad.bias[j] += col.sum();
    }
    d_out * &layer.weight
}

fn relu_mask(d: &mut DMatrix<f64>, activation: &DMatrix<f64>) {
    d.zip_apply(activation, |g, a| {
        if a <= 0.0 {
            *g = 0.0
        }
    });
}

fn output_gradients(
    pred: &Prediction,
    cache: &ForwardCache,
    targets: &KeypointTargets,
    cfg: &LossConfig,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let k_total = pred.num_keypoints();
    let classes = pred.classes;
    let positives = targets.positives();
    let w = &cfg.weights;
    let mut d_logits = DMatrix::zeros(k_total, classes);
    let mut d_offsets = DMatrix::zeros(k_total, OFFSET_DIM);
    let mut d_conf = DMatrix::zeros(k_total, 1);
    let seg_scale = w.seg / k_total as f64;
    let pos_scale = if positives > 0 { 1.0 / positives as f64 } else { 0.0 };
    for k in 0..k_total {
        let label = targets.class_labels[k] as usize;
        for c in 0..classes {
            let onehot = if c == label { 1.0 } else { 0.0 };
            d_logits[(k, c)] = seg_scale * (pred.probs(k)[c] - onehot);
        }
        let Some(gt) = &targets.offsets[k] else { continue };
        if label == BACKGROUND_CLASS as usize {
            continue;
        }
        for j in 0..OFFSET_DIM {
            let d = cache.offsets[(k, j)] - gt[j / 3][j % 3];
            d_offsets[(k, j)] = w.reg * pos_scale * smooth_l1_grad(d, cfg.smooth_l1_beta);
        }
        let s = sigmoid(cache.conf_logit[k]);
        let t = conf_target(pred, targets, k, &cfg.confidence);
        d_conf[(k, 0)] = w.conf * pos_scale * 2.0 * (s - t) * s * (1.0 - s);
    }
    (d_logits, d_offsets, d_conf)
}

/// Loss and analytic gradient of the loss with respect to every parameter.
///
/// Confidence targets are treated as constants. Max-pool gradients route to
/// the winning group member, the lowest row on ties.
pub fn backward(
    params: &EncoderParams,
    sample: &GroupedSample,
    targets: &KeypointTargets,
    cfg: &LossConfig,
) -> Result<(LossParts, EncoderParams)> {
    let cache = forward_cached(params, sample)?;
    let pred = prediction_from_cache(params, &cache);
    let parts = multitask_loss(&pred, targets, cfg)?;
    let mut grad = EncoderParams::zeros(params.shape);
    if pred.num_keypoints() == 0 {
        return Ok((parts, grad));
    }

    let (d_logits, d_offsets, d_conf) = output_gradients(&pred, &cache, targets, cfg);
    let mut d_head_input = DMatrix::zeros(cache.head_input.nrows(), cache.head_input.ncols());
    for (h, (base, d_out)) in [(SEG, d_logits), (REG, d_offsets), (CONF, d_conf)]
        .into_iter()
        .enumerate()
    {
        let hidden = &cache.head_hidden[h];
        let mut d_hidden = dense_backward(&params.layers[base + 1], hidden, &d_out, &mut grad.layers[base + 1]);
        relu_mask(&mut d_hidden, hidden);
        d_head_input += dense_backward(
            &params.layers[base],
            &cache.head_input,
            &d_hidden,
            &mut grad.layers[base],
        );
    }

    let width = params.shape.hidden2;
    let mut d_h2 = DMatrix::zeros(cache.h2.nrows(), width);
    for kp in 0..cache.argmax.nrows() {
        for j in 0..width {
            d_h2[(cache.argmax[(kp, j)], j)] += d_head_input[(kp, j)];
        }
    }
    relu_mask(&mut d_h2, &cache.h2);
    let mut d_h1 = dense_backward(&params.layers[POINT2], &cache.h1, &d_h2, &mut grad.layers[POINT2]);
    relu_mask(&mut d_h1, &cache.h1);
    dense_backward(&params.layers[POINT1], &cache.input, &d_h1, &mut grad.layers[POINT1]);
    Ok((parts, grad))
}

/// Total loss of the network on one sample.
pub fn sample_loss(
    params: &EncoderParams,
    sample: &GroupedSample,
    targets: &KeypointTargets,
    cfg: &LossConfig,
) -> Result<LossParts> {
    let pred = super::network::forward(params, sample)?;
    multitask_loss(&pred, targets, cfg)
}

/// Gradient-check statistic: `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central finite difference of the total loss along flat parameter `i`.
pub fn numeric_gradient(
    params: &EncoderParams,
    sample: &GroupedSample,
    targets: &KeypointTargets,
    cfg: &LossConfig,
    i: usize,
    step: f64,
) -> Result<f64> {
    let mut p = params.clone();
    let x = p.get(i);
    p.set(i, x + step);
    let plus = sample_loss(&p, sample, targets, cfg)?.total;
    p.set(i, x - step);
    let minus = sample_loss(&p, sample, targets, cfg)?.total;
    Ok((plus - minus) / (2.0 * step))
}
