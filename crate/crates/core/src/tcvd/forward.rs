//! The forward graph: per-frame CNN encoder stages, temporal transformer
//! fusion over the frame triplet, and a mirrored decoder with skip
//! connections from the center frame.

use std::collections::BTreeMap;

use crate::dataset::Frame;
use crate::error::{Error, Result};
use crate::tensor::{multi_head_attention, AttentionWeights, Padding, Tape, TensorId};

use super::config::TcvdConfig;
use super::model::TcvdModel;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Features produced by one encoder stage.
#[derive(Debug, Clone)]
pub struct StageFeatures {
    /// Per-frame spatial features straight out of the stage convolutions.
    pub spatial: [TensorId; 3],
    /// Per-frame features after temporal fusion (equal to `spatial` for the
    /// bottleneck stage, which has no transformer).
    pub merged: [TensorId; 3],
    /// Attention probabilities of this stage's transformer, when present.
    pub attn: Option<TensorId>,
}

#[derive(Debug)]
pub struct ForwardPass {
    /// Restored center frame, `[1, H, W, 3]`, values in (0,1).
    pub restored: TensorId,
    pub stages: Vec<StageFeatures>,
    /// Tape ids of every model parameter used by this pass.
    pub param_ids: BTreeMap<String, TensorId>,
}

fn conv_block(
    tape: &mut Tape,
    x: TensorId,
    params: &BTreeMap<String, TensorId>,
    name: &str,
    stride: usize,
) -> Result<TensorId> {
    let w = params[&format!("{name}.w")];
    let b = params[&format!("{name}.b")];
    let h = tape.conv2d(x, w, stride, Padding::Same)?;
    let h = tape.bias_add(h, b)?;
    Ok(tape.relu(h))
}

fn upsample_block(
    tape: &mut Tape,
    x: TensorId,
    params: &BTreeMap<String, TensorId>,
    name: &str,
) -> Result<TensorId> {
    let w = params[&format!("{name}.w")];
    let b = params[&format!("{name}.b")];
    let h = tape.conv2d_transpose(x, w, 2)?;
    let h = tape.bias_add(h, b)?;
    Ok(tape.relu(h))
}

/// Temporal transformer block over one stage's three feature maps.
///
/// Tokens are the three temporal slices at each spatial location. A pre-norm
/// block (layer norm, multi-head attention, residual, layer norm, two-layer
/// MLP with hidden 2D, residual) mixes them; the fused maps are then
/// channel-concatenated with the spatial features and projected back to C
/// channels by a 1x1 convolution shared across frames.
pub fn tpformer_block(
    tape: &mut Tape,
    spatial: &[TensorId; 3],
    params: &BTreeMap<String, TensorId>,
    stage: usize,
    heads: usize,
) -> Result<([TensorId; 3], TensorId)> {
    let shape = tape.shape(spatial[0]).to_vec();
    let (h, w, c) = (shape[1], shape[2], shape[3]);
    let cells = h * w;
    let p = |suffix: &str| format!("tp{stage}.{suffix}");

    let mut tokens_per_frame = Vec::with_capacity(3);
    for &f in spatial.iter() {
        tokens_per_frame.push(tape.reshape(f, &[cells, 1, c])?);
    }
    let tokens = tape.concat(&tokens_per_frame, 1)?; // [cells, 3, C]

    let normed = tape.layer_norm(tokens, params[&p("ln1.gamma")], params[&p("ln1.beta")], LAYER_NORM_EPS)?;
    let attn_weights = AttentionWeights {
        wq: params[&p("attn.wq")],
        wk: params[&p("attn.wk")],
        wv: params[&p("attn.wv")],
        wo: params[&p("attn.wo")],
        bq: params[&p("attn.bq")],
        bk: params[&p("attn.bk")],
        bv: params[&p("attn.bv")],
        bo: params[&p("attn.bo")],
    };
    let attn = multi_head_attention(tape, normed, normed, normed, heads, &attn_weights)?;
    let with_attn = tape.add(tokens, attn.output)?;

    let normed2 =
        tape.layer_norm(with_attn, params[&p("ln2.gamma")], params[&p("ln2.beta")], LAYER_NORM_EPS)?;
    let flat = tape.reshape(normed2, &[cells * 3, c])?;
    let hidden = tape.matmul(flat, params[&p("mlp.w1")])?;
    let hidden = tape.bias_add(hidden, params[&p("mlp.b1")])?;
    let hidden = tape.relu(hidden);
    let mlp_out = tape.matmul(hidden, params[&p("mlp.w2")])?;
    let mlp_out = tape.bias_add(mlp_out, params[&p("mlp.b2")])?;
    let mlp_out = tape.reshape(mlp_out, &[cells, 3, c])?;
    let fused_tokens = tape.add(with_attn, mlp_out)?; // [cells, 3, C]

    // Dissociate per frame, concatenate with the spatial features and
    // project back to C channels.
    let fuse_w = params[&p("fuse.w")];
    let fuse_b = params[&p("fuse.b")];
    let mut merged = Vec::with_capacity(3);
    for (f, &spatial_f) in spatial.iter().enumerate() {
        let tok = tape.slice(fused_tokens, 1, f, 1)?;
        let fmap = tape.reshape(tok, &[1, h, w, c])?;
        let cat = tape.concat(&[fmap, spatial_f], 3)?;
        let proj = tape.conv2d(cat, fuse_w, 1, Padding::Same)?;
        merged.push(tape.bias_add(proj, fuse_b)?);
    }
    Ok(([merged[0], merged[1], merged[2]], attn.probs))
}

/// Run the encoder over a triplet of `[1, S, S, 3]` tensors.
pub fn encode(
    tape: &mut Tape,
    config: &TcvdConfig,
    inputs: [TensorId; 3],
    params: &BTreeMap<String, TensorId>,
) -> Result<Vec<StageFeatures>> {
    for &input in &inputs {
        let shape = tape.shape(input);
        if shape != [1, config.input_size, config.input_size, 3] {
            return Err(Error::shape(format!(
                "encoder expects [1,{0},{0},3], got {shape:?}",
                config.input_size
            )));
        }
    }
    let mut stages = Vec::with_capacity(config.encoder_filters.len());
    let mut current = inputs;
    for s in 1..=config.encoder_filters.len() {
        let mut spatial = Vec::with_capacity(3);
        for &frame in &current {
            let h = conv_block(tape, frame, params, &format!("enc{s}.conv_a"), 1)?;
            let h = conv_block(tape, h, params, &format!("enc{s}.conv_b"), 2)?;
            spatial.push(h);
        }
        let spatial = [spatial[0], spatial[1], spatial[2]];
        let (merged, attn) = if s <= config.tpformer_stages {
            let (m, a) = tpformer_block(tape, &spatial, params, s, config.heads)?;
            (m, Some(a))
        } else {
            (spatial, None)
        };
        current = merged;
        stages.push(StageFeatures { spatial, merged, attn });
    }
    Ok(stages)
}

/// Decode the center frame from the bottleneck and the per-stage skips.
pub fn decode(
    tape: &mut Tape,
    config: &TcvdConfig,
    stages: &[StageFeatures],
    params: &BTreeMap<String, TensorId>,
) -> Result<TensorId> {
    let n_stages = config.encoder_filters.len();
    let mut h = stages[n_stages - 1].merged[1];
    for s in (1..n_stages).rev() {
        h = upsample_block(tape, h, params, &format!("dec{s}.up"))?;
        let skip = stages[s - 1].merged[1];
        h = tape.concat(&[h, skip], 3)?;
        h = conv_block(tape, h, params, &format!("dec{s}.conv_a"), 1)?;
        h = conv_block(tape, h, params, &format!("dec{s}.conv_b"), 1)?;
    }
    h = upsample_block(tape, h, params, "dec0.up")?;
    h = conv_block(tape, h, params, "dec0.conv_a", 1)?;
    h = conv_block(tape, h, params, "dec0.conv_b", 1)?;
    let out = tape.conv2d(h, params["out.w"], 1, Padding::Same)?;
    let out = tape.bias_add(out, params["out.b"])?;
    Ok(tape.sigmoid(out))
}

pub fn frame_to_tensor(tape: &mut Tape, frame: &Frame) -> Result<TensorId> {
    tape.constant(frame.pixels().to_vec(), &[1, frame.height(), frame.width(), 3])
}

pub fn tensor_to_frame(tape: &Tape, id: TensorId) -> Result<Frame> {
    let shape = tape.shape(id);
    if shape.len() != 4 || shape[0] != 1 || shape[3] != 3 {
        return Err(Error::shape(format!("expected [1,H,W,3], got {shape:?}")));
    }
    let data: Vec<f64> = tape.data(id).iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Frame::new(shape[2], shape[1], data)
}

/// Full forward pass given tensors already on the tape (used both by the
/// training loop and by finite-difference checking).
pub fn forward_graph(
    tape: &mut Tape,
    config: &TcvdConfig,
    inputs: [TensorId; 3],
    param_ids: &BTreeMap<String, TensorId>,
) -> Result<(TensorId, Vec<StageFeatures>)> {
    let stages = encode(tape, config, inputs, param_ids)?;
    let restored = decode(tape, config, &stages, param_ids)?;
    Ok((restored, stages))
}

impl TcvdModel {
    /// Forward one frame triplet. With `requires_grad`, parameters are
    /// registered as differentiation targets for a following backward pass.
    pub fn forward(
        &self,
        tape: &mut Tape,
        triplet: [&Frame; 3],
        requires_grad: bool,
    ) -> Result<ForwardPass> {
        for f in triplet {
            if f.width() != self.config().input_size || f.height() != self.config().input_size {
                return Err(Error::shape(format!(
                    "frame is {}x{}, model expects {2}x{2}",
                    f.width(),
                    f.height(),
                    self.config().input_size
                )));
            }
        }
        let param_ids = self.params.to_tape(tape, requires_grad)?;
        let inputs = [
            frame_to_tensor(tape, triplet[0])?,
            frame_to_tensor(tape, triplet[1])?,
            frame_to_tensor(tape, triplet[2])?,
        ];
        let (restored, stages) = forward_graph(tape, self.config(), inputs, &param_ids)?;
        Ok(ForwardPass { restored, stages, param_ids })
    }
}
