//! Image quality metrics and benchmark report aggregation.

mod report;
mod ssim;

pub use report::{LightingScope, MetricsReport, MetricsRow};
pub use ssim::{effective_window, ssim, ssim_window_for, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW};

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::dataset::{resize, Density, Frame, FrameSequence};
use crate::error::{Error, Result};

/// Numerically stable sum with a deterministic reduction order.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Peak signal-to-noise ratio in dB; identical frames report +infinity.
pub fn psnr(x: &Frame, y: &Frame, peak: f64) -> Result<f64> {
    if !x.same_dims(y) {
        return Err(Error::shape(format!(
            "psnr: frames {}x{} vs {}x{}",
            x.width(),
            x.height(),
            y.width(),
            y.height()
        )));
    }
    let sq: Vec<f64> = x
        .pixels()
        .iter()
        .zip(y.pixels())
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .collect();
    let mse = pairwise_sum(&sq) / sq.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * ((peak * peak) / mse).log10())
}

/// Excess inter-frame variation relative to a reference sequence: the mean
/// over t of `| mean|seq[t+1]-seq[t]| - mean|ref[t+1]-ref[t]| |`.
pub fn flicker(seq: &[Frame], reference: &[Frame]) -> Result<f64> {
    if seq.len() != reference.len() {
        return Err(Error::contract(format!(
            "flicker: sequence lengths differ ({} vs {})",
            seq.len(),
            reference.len()
        )));
    }
    if seq.len() < 2 {
        return Err(Error::contract("flicker needs at least two frames"));
    }
    let mut total = 0.0;
    for t in 0..seq.len() - 1 {
        let d_seq = seq[t + 1].mean_abs_diff(&seq[t])?;
        let d_ref = reference[t + 1].mean_abs_diff(&reference[t])?;
        total += (d_seq - d_ref).abs();
    }
    Ok(total / (seq.len() - 1) as f64)
}

/// Per-channel signed mean error, a color-shift diagnostic (restoration
/// methods that tint their output show it here; nothing asserts on it).
pub fn channel_mean_error(x: &Frame, y: &Frame) -> Result<[f64; 3]> {
    if !x.same_dims(y) {
        return Err(Error::shape(format!(
            "channel_mean_error: frames {}x{} vs {}x{}",
            x.width(),
            x.height(),
            y.width(),
            y.height()
        )));
    }
    let mut sums = [0.0f64; 3];
    for (a, b) in x.pixels().chunks_exact(3).zip(y.pixels().chunks_exact(3)) {
        for c in 0..3 {
            sums[c] += a[c] - b[c];
        }
    }
    let n = (x.pixels().len() / 3) as f64;
    Ok([sums[0] / n, sums[1] / n, sums[2] / n])
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Both restored and ground-truth frames are resized to this square size
    /// before scoring.
    pub eval_size: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { eval_size: 224 }
    }
}

struct Accumulator {
    ssim_sum: f64,
    psnr_sum: f64,
    frames: usize,
}

impl Accumulator {
    fn new() -> Self {
        Accumulator { ssim_sum: 0.0, psnr_sum: 0.0, frames: 0 }
    }

    fn add(&mut self, s: f64, p: f64) {
        self.ssim_sum += s;
        self.psnr_sum += p;
        self.frames += 1;
    }
}

/// Score restored sequences against their clear ground truths and aggregate
/// per (method, density, lighting) plus pooled per (method, density).
///
/// A restored sequence pairs with the ground-truth sequence sharing its
/// lighting. Sequences without a partner (or with a length mismatch) are
/// listed under `errors` and omitted from the rows.
pub fn evaluate(
    methods: &BTreeMap<String, Vec<FrameSequence>>,
    gts: &[FrameSequence],
    opts: &EvalOptions,
    config_echo: BTreeMap<String, String>,
) -> MetricsReport {
    let mut gt_by_lighting: BTreeMap<usize, &FrameSequence> = BTreeMap::new();
    for gt in gts {
        if let Some((lighting, Density::Clear)) = gt.video_key() {
            gt_by_lighting.insert(lighting, gt);
        }
    }

    let mut errors = Vec::new();
    let mut cells: BTreeMap<(Density, String, usize), Accumulator> = BTreeMap::new();
    let mut pooled: BTreeMap<(Density, String), Accumulator> = BTreeMap::new();

    for (method, sequences) in methods {
        for seq in sequences {
            let Some((lighting, density)) = seq.video_key() else {
                errors.push(format!("{method}: sequence with mixed tags skipped"));
                continue;
            };
            let Some(gt) = gt_by_lighting.get(&lighting) else {
                errors.push(format!(
                    "{method}: no clear ground truth for lighting {lighting} (density {density})"
                ));
                continue;
            };
            if gt.len() != seq.len() {
                errors.push(format!(
                    "{method}: length mismatch for lighting {lighting} density {density} ({} vs {})",
                    seq.len(),
                    gt.len()
                ));
                continue;
            }
            for i in 0..seq.len() {
                let restored = resize(seq.frame(i), opts.eval_size);
                let truth = resize(gt.frame(i), opts.eval_size);
                let s = ssim(&restored, &truth).expect("resized frames share dimensions");
                let p = psnr(&restored, &truth, 1.0).expect("resized frames share dimensions");
                cells.entry((density, method.clone(), lighting)).or_insert_with(Accumulator::new).add(s, p);
                pooled.entry((density, method.clone())).or_insert_with(Accumulator::new).add(s, p);
            }
        }
    }

    let mut rows = Vec::new();
    for ((density, method, lighting), acc) in &cells {
        rows.push(MetricsRow {
            method: method.clone(),
            density: *density,
            lighting: LightingScope::Index(*lighting),
            ssim: acc.ssim_sum / acc.frames as f64,
            psnr: acc.psnr_sum / acc.frames as f64,
            frames: acc.frames,
        });
    }
    for ((density, method), acc) in &pooled {
        rows.push(MetricsRow {
            method: method.clone(),
            density: *density,
            lighting: LightingScope::All,
            ssim: acc.ssim_sum / acc.frames as f64,
            psnr: acc.psnr_sum / acc.frames as f64,
            frames: acc.frames,
        });
    }
    rows.sort_by(|a, b| {
        (a.density, &a.method, &a.lighting).cmp(&(b.density, &b.method, &b.lighting))
    });

    let fingerprint = fingerprint(methods, gts);
    MetricsReport { rows, errors, config: config_echo, fingerprint }
}

/// Content hash of everything scored, for report provenance.
fn fingerprint(methods: &BTreeMap<String, Vec<FrameSequence>>, gts: &[FrameSequence]) -> String {
    let mut hasher = Sha256::new();
    let hash_seq = |hasher: &mut Sha256, seq: &FrameSequence| {
        for (frame, tag) in seq.frames() {
            hasher.update((frame.width() as u32).to_le_bytes());
            hasher.update((frame.height() as u32).to_le_bytes());
            hasher.update((tag.position as u32).to_le_bytes());
            for v in frame.pixels() {
                hasher.update(v.to_le_bytes());
            }
        }
    };
    hasher.update(b"ground-truth");
    for gt in gts {
        hash_seq(&mut hasher, gt);
    }
    for (method, sequences) in methods {
        hasher.update(method.as_bytes());
        for seq in sequences {
            hash_seq(&mut hasher, seq);
        }
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
