//! Training loop: sample, augment, forward, Eq-style combined loss on the
//! center frame, backward, ADAM step. Fully deterministic per seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dihedral, Frame};
use crate::error::{Error, Result};
use crate::tensor::{AdamConfig, AdamState, Tape};

use super::forward::{forward_graph, frame_to_tensor};
use super::loss::tcvd_loss;
use super::model::TcvdModel;

/// One training example: a foggy triplet and the clear center frame.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub triplet: [Frame; 3],
    pub target: Frame,
    /// Which dataset root the sample came from (for mixed-corpus logs).
    pub source: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub augment: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { steps: 500, batch_size: 1, lr: 1e-4, seed: 0, augment: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogEntry {
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainLog {
    pub entries: Vec<TrainLogEntry>,
    /// Samples drawn per source root.
    pub source_counts: Vec<usize>,
}

impl TrainLog {
    pub fn initial_loss(&self) -> Option<f64> {
        self.entries.first().map(|e| e.loss)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.entries.last().map(|e| e.loss)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for e in &self.entries {
            out.push_str(&format!("{},{}\n", e.step, e.loss));
        }
        out
    }
}

fn check_sample(sample: &TrainSample, input_size: usize) -> Result<()> {
    for f in sample.triplet.iter().chain(std::iter::once(&sample.target)) {
        if f.width() != input_size || f.height() != input_size {
            return Err(Error::shape(format!(
                "training frames must be {input_size}x{input_size}, got {}x{}",
                f.width(),
                f.height()
            )));
        }
    }
    Ok(())
}

/// Train in place, returning the per-step loss log.
pub fn train(model: &mut TcvdModel, samples: &[TrainSample], opts: &TrainOptions) -> Result<TrainLog> {
    if samples.is_empty() {
        return Err(Error::contract("training requires a nonempty dataset"));
    }
    if opts.steps == 0 || opts.batch_size == 0 {
        return Err(Error::contract("steps and batch size must be positive"));
    }
    let input_size = model.config().input_size;
    for s in samples {
        check_sample(s, input_size)?;
    }
    let n_sources = samples.iter().map(|s| s.source).max().unwrap_or(0) + 1;
    let (loss_a, loss_b) = (model.config().loss_a, model.config().loss_b);

    let names: Vec<String> = model.params.names().map(str::to_string).collect();
    let sizes: Vec<usize> = names.iter().map(|n| model.params.get(n).unwrap().data.len()).collect();
    let mut adam = AdamState::new(AdamConfig::with_lr(opts.lr), &sizes);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut log = TrainLog { entries: Vec::with_capacity(opts.steps), source_counts: vec![0; n_sources] };

    for step in 1..=opts.steps {
        let mut tape = Tape::new();
        let param_ids = model.params.to_tape(&mut tape, true)?;

        let mut batch_losses = Vec::with_capacity(opts.batch_size);
        for _ in 0..opts.batch_size {
            let idx = rng.gen_range(0..samples.len());
            let sample = &samples[idx];
            log.source_counts[sample.source] += 1;

            let (triplet, target) = if opts.augment {
                let t = Dihedral::sample(&mut rng);
                let mut frames = Vec::with_capacity(3);
                for f in &sample.triplet {
                    frames.push(t.apply(f)?);
                }
                ([frames[0].clone(), frames[1].clone(), frames[2].clone()], t.apply(&sample.target)?)
            } else {
                (sample.triplet.clone(), sample.target.clone())
            };

            let inputs = [
                frame_to_tensor(&mut tape, &triplet[0])?,
                frame_to_tensor(&mut tape, &triplet[1])?,
                frame_to_tensor(&mut tape, &triplet[2])?,
            ];
            let (restored, _) = forward_graph(&mut tape, model.config(), inputs, &param_ids)?;
            let gt = frame_to_tensor(&mut tape, &target)?;
            batch_losses.push(tcvd_loss(&mut tape, restored, gt, loss_a, loss_b)?);
        }
        let loss = if batch_losses.len() == 1 {
            batch_losses[0]
        } else {
            let mut acc = batch_losses[0];
            for &l in &batch_losses[1..] {
                acc = tape.add(acc, l)?;
            }
            tape.scale(acc, 1.0 / batch_losses.len() as f64)
        };

        let loss_value = tape.value(loss);
        if !loss_value.is_finite() {
            let culprit = tape
                .first_nonfinite()
                .map(|(_, op)| op.to_string())
                .unwrap_or_else(|| "unknown".to_string());
            return Err(Error::Numerical(format!(
                "step {step}: non-finite loss {loss_value}; first non-finite op: {culprit}"
            )));
        }
        tape.backward(loss)?;

        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(names.len());
        for name in &names {
            let id = param_ids[name];
            grads.push(tape.grad(id).expect("parameters receive gradients").to_vec());
        }
        let grad_refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
        let mut param_refs: Vec<&mut [f64]> = Vec::with_capacity(names.len());
        // Borrow each parameter buffer once, in sorted-name order.
        let mut remaining: Vec<&mut Vec<f64>> = Vec::with_capacity(names.len());
        for (_, p) in model.params.iter_mut_sorted() {
            remaining.push(&mut p.data);
        }
        for buf in remaining {
            param_refs.push(buf.as_mut_slice());
        }
        adam.step(&mut param_refs, &grad_refs)?;

        log.entries.push(TrainLogEntry { step, loss: loss_value });
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tcvd::config::TcvdConfig;
    use rand::{Rng, SeedableRng};

    fn random_frame(seed: u64, size: usize) -> Frame {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Frame::from_fn(size, size, |_, _| {
            [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]
        })
        .unwrap()
    }

    fn one_sample(size: usize) -> TrainSample {
        TrainSample {
            triplet: [random_frame(1, size), random_frame(2, size), random_frame(3, size)],
            target: random_frame(4, size),
            source: 0,
        }
    }

    fn tiny_model() -> TcvdModel {
        TcvdModel::init(TcvdConfig::micro(32), 5).unwrap()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let mut model = tiny_model();
        let before = model.params.clone();
        let opts = TrainOptions { steps: 3, lr: 0.0, seed: 1, augment: true, batch_size: 1 };
        train(&mut model, &[one_sample(32)], &opts).unwrap();
        assert_eq!(model.params, before);
    }

    #[test]
    fn same_seed_gives_bit_identical_loss_curves() {
        let opts = TrainOptions { steps: 5, lr: 1e-3, seed: 77, augment: true, batch_size: 1 };
        let mut m1 = tiny_model();
        let log1 = train(&mut m1, &[one_sample(32)], &opts).unwrap();
        let mut m2 = tiny_model();
        let log2 = train(&mut m2, &[one_sample(32)], &opts).unwrap();
        assert_eq!(log1.entries, log2.entries);
        assert_eq!(m1.params, m2.params);
    }

    #[test]
    fn short_overfit_run_reduces_loss() {
        let mut model = tiny_model();
        let opts = TrainOptions { steps: 40, lr: 1e-3, seed: 3, augment: false, batch_size: 1 };
        let log = train(&mut model, &[one_sample(32)], &opts).unwrap();
        let initial = log.initial_loss().unwrap();
        let fin = log.final_loss().unwrap();
        assert!(fin < initial, "loss did not drop: {initial} -> {fin}");
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut model = tiny_model();
        assert!(matches!(
            train(&mut model, &[], &TrainOptions::default()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn wrong_frame_size_is_rejected() {
        let mut model = tiny_model();
        let s = one_sample(64);
        assert!(matches!(
            train(&mut model, &[s], &TrainOptions::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn diverging_run_aborts_with_op_diagnostic() {
        let mut model = tiny_model();
        let opts = TrainOptions { steps: 20, lr: 1e200, seed: 1, augment: false, batch_size: 1 };
        let err = train(&mut model, &[one_sample(32)], &opts).unwrap_err();
        match err {
            Error::Numerical(msg) => {
                assert!(msg.contains("non-finite op"), "{msg}");
            }
            other => panic!("expected numerical abort, got {other}"),
        }
    }

    #[test]
    fn source_counts_cover_all_roots() {
        let mut model = tiny_model();
        let mut s2 = one_sample(32);
        s2.source = 1;
        let opts = TrainOptions { steps: 12, lr: 1e-4, seed: 9, augment: false, batch_size: 1 };
        let log = train(&mut model, &[one_sample(32), s2], &opts).unwrap();
        assert_eq!(log.source_counts.len(), 2);
        assert!(log.source_counts.iter().all(|&c| c > 0), "{:?}", log.source_counts);
    }
}
