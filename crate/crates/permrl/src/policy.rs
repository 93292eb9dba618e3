//! Permutation-invariant policy network.
//!
//! Every entity's observation row is pushed through the same recurrent
//! encoder (single-layer tanh cell), the final hidden state is concatenated
//! with the entity's previous allocation fraction and scored by a shared
//! dense head, and the per-entity scores go through a softmax. Sharing the
//! parameters across entities is what makes the network permutation
//! invariant: reordering rows reorders scores, and softmax acts elementwise
//! on them.
//!
//! Gradients are computed in-module by reverse-mode accumulation through the
//! softmax, the scoring head, and the full recurrent rollout (no truncation
//! within a window).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::Allocation;
use crate::state::StateMatrix;

/// How a [`StateMatrix`] row is laid out for the encoder.
///
/// A row is `[prev_weight?] ++ channel_0[0..steps] ++ channel_1[0..steps] ++ …`
/// (channel-block order). The encoder consumes `steps` feature vectors of
/// width `channels`; `prev_weight` feeds the scoring head only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub has_prev_weight: bool,
    pub channels: usize,
    pub steps: usize,
}

impl StateLayout {
    pub fn row_width(&self) -> usize {
        usize::from(self.has_prev_weight) + self.channels * self.steps
    }

    fn prev_weight(&self, row: &[f64]) -> f64 {
        if self.has_prev_weight {
            row[0]
        } else {
            0.0
        }
    }

    /// Feature value of `channel` at `step`.
    fn feature(&self, row: &[f64], step: usize, channel: usize) -> f64 {
        row[usize::from(self.has_prev_weight) + channel * self.steps + step]
    }
}

/// Shared-across-entities network parameters.
///
/// Matrices are stored row-major and flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub hidden_size: usize,
    pub channels: usize,
    /// hidden × channels
    pub encoder_input: Vec<f64>,
    /// hidden × hidden
    pub encoder_recurrent: Vec<f64>,
    /// hidden
    pub encoder_bias: Vec<f64>,
    /// hidden + 1; the extra slot consumes the previous allocation fraction
    pub score_weights: Vec<f64>,
    pub score_bias: f64,
}

impl PolicyParams {
    pub fn zeros(hidden_size: usize, channels: usize) -> Self {
        PolicyParams {
            hidden_size,
            channels,
            encoder_input: vec![0.0; hidden_size * channels],
            encoder_recurrent: vec![0.0; hidden_size * hidden_size],
            encoder_bias: vec![0.0; hidden_size],
            score_weights: vec![0.0; hidden_size + 1],
            score_bias: 0.0,
        }
    }

    /// Applies one ascent step `θ += eta · g`.
    pub fn apply_step(&mut self, g: &PolicyGradient, eta: f64) {
        for (p, d) in self.encoder_input.iter_mut().zip(&g.encoder_input) {
            *p += eta * d;
        }
        for (p, d) in self.encoder_recurrent.iter_mut().zip(&g.encoder_recurrent) {
            *p += eta * d;
        }
        for (p, d) in self.encoder_bias.iter_mut().zip(&g.encoder_bias) {
            *p += eta * d;
        }
        for (p, d) in self.score_weights.iter_mut().zip(&g.score_weights) {
            *p += eta * d;
        }
        self.score_bias += eta * g.score_bias;
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, t) in [
            ("encoder_input", &self.encoder_input),
            ("encoder_recurrent", &self.encoder_recurrent),
            ("encoder_bias", &self.encoder_bias),
            ("score_weights", &self.score_weights),
        ] {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite values in {name}")));
            }
        }
        if !self.score_bias.is_finite() {
            return Err(Error::Numeric("non-finite values in score_bias".into()));
        }
        Ok(())
    }

    fn w_in(&self, h: usize, c: usize) -> f64 {
        self.encoder_input[h * self.channels + c]
    }

    fn w_rec(&self, h: usize, j: usize) -> f64 {
        self.encoder_recurrent[h * self.hidden_size + j]
    }
}

/// Gradient of an objective with respect to [`PolicyParams`], same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradient {
    pub encoder_input: Vec<f64>,
    pub encoder_recurrent: Vec<f64>,
    pub encoder_bias: Vec<f64>,
    pub score_weights: Vec<f64>,
    pub score_bias: f64,
}

impl PolicyGradient {
    pub fn zeros(params: &PolicyParams) -> Self {
        PolicyGradient {
            encoder_input: vec![0.0; params.encoder_input.len()],
            encoder_recurrent: vec![0.0; params.encoder_recurrent.len()],
            encoder_bias: vec![0.0; params.encoder_bias.len()],
            score_weights: vec![0.0; params.score_weights.len()],
            score_bias: 0.0,
        }
    }

    pub fn scale(&mut self, k: f64) {
        for v in self
            .encoder_input
            .iter_mut()
            .chain(self.encoder_recurrent.iter_mut())
            .chain(self.encoder_bias.iter_mut())
            .chain(self.score_weights.iter_mut())
        {
            *v *= k;
        }
        self.score_bias *= k;
    }

    pub fn l2_norm(&self) -> f64 {
        let sq: f64 = self
            .encoder_input
            .iter()
            .chain(self.encoder_recurrent.iter())
            .chain(self.encoder_bias.iter())
            .chain(self.score_weights.iter())
            .map(|v| v * v)
            .sum::<f64>()
            + self.score_bias * self.score_bias;
        sq.sqrt()
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, t) in [
            ("encoder_input", &self.encoder_input),
            ("encoder_recurrent", &self.encoder_recurrent),
            ("encoder_bias", &self.encoder_bias),
            ("score_weights", &self.score_weights),
        ] {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient in {name}")));
            }
        }
        if !self.score_bias.is_finite() {
            return Err(Error::Numeric("non-finite gradient in score_bias".into()));
        }
        Ok(())
    }
}

fn check_row(params: &PolicyParams, layout: &StateLayout, row: &[f64]) -> Result<()> {
    if layout.channels != params.channels {
        return Err(Error::Dimension {
            what: "layout channels",
            expected: params.channels,
            got: layout.channels,
        });
    }
    if row.len() != layout.row_width() {
        return Err(Error::Dimension {
            what: "state row width",
            expected: layout.row_width(),
            got: row.len(),
        });
    }
    Ok(())
}

/// Runs the recurrent encoder over one entity row.
///
/// Returns the hidden state after every step (`steps × hidden`).
fn encode(params: &PolicyParams, layout: &StateLayout, row: &[f64]) -> Vec<Vec<f64>> {
    let hid = params.hidden_size;
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(layout.steps);
    let mut prev = vec![0.0; hid];
    for s in 0..layout.steps {
        let mut h = vec![0.0; hid];
        for k in 0..hid {
            let mut z = params.encoder_bias[k];
            for c in 0..layout.channels {
                z += params.w_in(k, c) * layout.feature(row, s, c);
            }
            for j in 0..hid {
                z += params.w_rec(k, j) * prev[j];
            }
            h[k] = z.tanh();
        }
        prev = h.clone();
        states.push(h);
    }
    states
}

fn score_from_hidden(params: &PolicyParams, final_hidden: &[f64], prev_weight: f64) -> f64 {
    let hid = params.hidden_size;
    let mut score = params.score_bias + params.score_weights[hid] * prev_weight;
    for k in 0..hid {
        score += params.score_weights[k] * final_hidden[k];
    }
    score
}

/// Deterministic scalar score for one entity.
pub fn score_entity(
    params: &PolicyParams,
    layout: &StateLayout,
    window: &[f64],
    prev_weight: f64,
) -> Result<f64> {
    check_row(params, layout, window)?;
    let states = encode(params, layout, window);
    let zero;
    let last = match states.last() {
        Some(h) => h.as_slice(),
        None => {
            zero = vec![0.0; params.hidden_size];
            &zero
        }
    };
    Ok(score_from_hidden(params, last, prev_weight))
}

/// Per-entity forward pass with intermediate activations retained.
pub struct ForwardTrace {
    /// entity → step → hidden state
    pub hidden: Vec<Vec<Vec<f64>>>,
    pub scores: Vec<f64>,
    pub allocation: Allocation,
}

/// Scores all entities and softmaxes into an allocation.
pub fn forward(params: &PolicyParams, layout: &StateLayout, x: &StateMatrix) -> Result<Allocation> {
    Ok(forward_traced(params, layout, x)?.allocation)
}

pub fn forward_traced(
    params: &PolicyParams,
    layout: &StateLayout,
    x: &StateMatrix,
) -> Result<ForwardTrace> {
    let m = x.entity_count();
    let mut hidden = Vec::with_capacity(m);
    let mut scores = Vec::with_capacity(m);
    for i in 0..m {
        let row = x.row(i);
        check_row(params, layout, row)?;
        let states = encode(params, layout, row);
        let score = if let Some(last) = states.last() {
            score_from_hidden(params, last, layout.prev_weight(row))
        } else {
            score_from_hidden(params, &vec![0.0; params.hidden_size], layout.prev_weight(row))
        };
        if !score.is_finite() {
            return Err(Error::Numeric(format!("non-finite score for entity {i}")));
        }
        hidden.push(states);
        scores.push(score);
    }
    // Softmax with max-subtraction, renormalized once.
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let allocation = Allocation::from_unnormalized(exps)?;
    Ok(ForwardTrace {
        hidden,
        scores,
        allocation,
    })
}

/// Differentiable per-step objective: given the minibatch index and the
/// policy's allocation, returns the objective value and its gradient with
/// respect to the allocation.
pub type StepObjective<'a> = dyn FnMut(usize, &Allocation) -> Result<(f64, Vec<f64>)> + 'a;

/// Exact gradient of the mean per-step objective over the minibatch.
///
/// Reverse-mode accumulation through softmax, scoring head, and the full
/// recurrent rollout. Also returns the mean objective value and the
/// allocations produced during the forward pass.
pub fn backward(
    params: &PolicyParams,
    layout: &StateLayout,
    minibatch: &[StateMatrix],
    objective: &mut StepObjective,
) -> Result<(PolicyGradient, f64, Vec<Allocation>)> {
    if minibatch.is_empty() {
        return Err(Error::Domain("backward needs a nonempty minibatch".into()));
    }
    let hid = params.hidden_size;
    let mut grad = PolicyGradient::zeros(params);
    let mut total = 0.0;
    let mut allocations = Vec::with_capacity(minibatch.len());

    for (idx, x) in minibatch.iter().enumerate() {
        let trace = forward_traced(params, layout, x)?;
        let m = x.entity_count();
        let (value, dalloc) = objective(idx, &trace.allocation)?;
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite objective at minibatch index {idx}"
            )));
        }
        if dalloc.len() != m {
            return Err(Error::Dimension {
                what: "objective gradient",
                expected: m,
                got: dalloc.len(),
            });
        }
        total += value;

        // Softmax backward: ds_i = a_i (g_i - Σ_j g_j a_j).
        let a = trace.allocation.weights();
        let dot: f64 = dalloc.iter().zip(a).map(|(g, ai)| g * ai).sum();
        for i in 0..m {
            let ds = a[i] * (dalloc[i] - dot);
            let row = x.row(i);
            let states = &trace.hidden[i];

            // Scoring head.
            grad.score_bias += ds;
            grad.score_weights[hid] += ds * layout.prev_weight(row);
            let mut dh = vec![0.0; hid];
            if let Some(last) = states.last() {
                for k in 0..hid {
                    grad.score_weights[k] += ds * last[k];
                    dh[k] = ds * params.score_weights[k];
                }
            }

            // Backpropagation through time over the whole window.
            for s in (0..layout.steps).rev() {
                let h = &states[s];
                let mut dz = vec![0.0; hid];
                for k in 0..hid {
                    dz[k] = dh[k] * (1.0 - h[k] * h[k]);
                }
                for k in 0..hid {
                    let d = dz[k];
                    if d == 0.0 {
                        continue;
                    }
                    grad.encoder_bias[k] += d;
                    for c in 0..layout.channels {
                        grad.encoder_input[k * layout.channels + c] +=
                            d * layout.feature(row, s, c);
                    }
                }
                if s > 0 {
                    let prev = &states[s - 1];
                    let mut next_dh = vec![0.0; hid];
                    for k in 0..hid {
                        let d = dz[k];
                        if d == 0.0 {
                            continue;
                        }
                        for j in 0..hid {
                            grad.encoder_recurrent[k * hid + j] += d * prev[j];
                            next_dh[j] += d * params.w_rec(k, j);
                        }
                    }
                    dh = next_dh;
                }
            }
        }
        allocations.push(trace.allocation);
    }

    let scale = 1.0 / minibatch.len() as f64;
    grad.scale(scale);
    grad.check_finite()?;
    Ok((grad, total * scale, allocations))
}

/// Parameters i.i.d. uniform in `[-scale, +scale]`.
///
/// At small scale the resulting policy stays close to the equal-weight
/// allocation on any bounded input.
pub fn init_near_zero<R: Rng + ?Sized>(
    hidden_size: usize,
    channels: usize,
    scale: f64,
    rng: &mut R,
) -> Result<PolicyParams> {
    if scale <= 0.0 {
        return Err(Error::Domain(format!("init scale must be > 0, got {scale}")));
    }
    let mut params = PolicyParams::zeros(hidden_size, channels);
    for v in params
        .encoder_input
        .iter_mut()
        .chain(params.encoder_recurrent.iter_mut())
        .chain(params.encoder_bias.iter_mut())
        .chain(params.score_weights.iter_mut())
    {
        *v = rng.gen_range(-scale..=scale);
    }
    params.score_bias = rng.gen_range(-scale..=scale);
    Ok(params)
}

// --- checkpoint file ---------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    hidden_size: usize,
    channels: usize,
    tensors: std::collections::BTreeMap<String, TensorRecord>,
}

/// Writes parameters as JSON named tensors with shape headers.
///
/// Floats are emitted in shortest round-trip decimal form, so save/load is
/// bit-exact.
pub fn save_checkpoint(params: &PolicyParams, path: &std::path::Path) -> Result<()> {
    let hid = params.hidden_size;
    let mut tensors = std::collections::BTreeMap::new();
    tensors.insert(
        "encoder_input".to_string(),
        TensorRecord {
            shape: vec![hid, params.channels],
            data: params.encoder_input.clone(),
        },
    );
    tensors.insert(
        "encoder_recurrent".to_string(),
        TensorRecord {
            shape: vec![hid, hid],
            data: params.encoder_recurrent.clone(),
        },
    );
    tensors.insert(
        "encoder_bias".to_string(),
        TensorRecord {
            shape: vec![hid],
            data: params.encoder_bias.clone(),
        },
    );
    tensors.insert(
        "score_weights".to_string(),
        TensorRecord {
            shape: vec![hid + 1],
            data: params.score_weights.clone(),
        },
    );
    tensors.insert(
        "score_bias".to_string(),
        TensorRecord {
            shape: vec![],
            data: vec![params.score_bias],
        },
    );
    let file = CheckpointFile {
        format: "permrl-policy-v1".to_string(),
        hidden_size: hid,
        channels: params.channels,
        tensors,
    };
    let out = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(out), &file)
        .map_err(|e| Error::Ingestion(format!("checkpoint write failed: {e}")))?;
    Ok(())
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<PolicyParams> {
    let file = std::fs::File::open(path)?;
    let ckpt: CheckpointFile = serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| Error::Ingestion(format!("checkpoint parse failed: {e}")))?;
    let get = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
        let rec = ckpt
            .tensors
            .get(name)
            .ok_or_else(|| Error::Ingestion(format!("checkpoint missing tensor {name}")))?;
        if rec.shape != shape || rec.data.len() != shape.iter().product::<usize>().max(1) {
            return Err(Error::Ingestion(format!(
                "checkpoint tensor {name} has shape {:?}, expected {shape:?}",
                rec.shape
            )));
        }
        Ok(rec.data.clone())
    };
    let hid = ckpt.hidden_size;
    let ch = ckpt.channels;
    let params = PolicyParams {
        hidden_size: hid,
        channels: ch,
        encoder_input: get("encoder_input", &[hid, ch])?,
        encoder_recurrent: get("encoder_recurrent", &[hid, hid])?,
        encoder_bias: get("encoder_bias", &[hid])?,
        score_weights: get("score_weights", &[hid + 1])?,
        score_bias: get("score_bias", &[])?[0],
    };
    params.check_finite()?;
    Ok(params)
}
