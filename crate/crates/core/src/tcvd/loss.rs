//! The training loss `L = a*(1 - SSIM) + b*L1`, built from tape primitives
//! so it differentiates end to end.

use crate::error::{Error, Result};
use crate::metrics::{ssim_window_for, SSIM_C1, SSIM_C2};
use crate::tensor::{Padding, Tape, TensorId};

/// Gaussian blur as a convolution with a channel-diagonal kernel, so the
/// standard conv2d gradient covers it.
fn gaussian_blur(tape: &mut Tape, x: TensorId, kernel_1d: &[f64]) -> Result<TensorId> {
    let win = kernel_1d.len();
    let channels = tape.shape(x)[3];
    let mut kdata = vec![0.0; win * win * channels * channels];
    for i in 0..win {
        for j in 0..win {
            let g = kernel_1d[i] * kernel_1d[j];
            for c in 0..channels {
                kdata[((i * win + j) * channels + c) * channels + c] = g;
            }
        }
    }
    let k = tape.constant(kdata, &[win, win, channels, channels])?;
    tape.conv2d(x, k, 1, Padding::Valid)
}

/// Differentiable mean SSIM over `[1,H,W,3]` tensors; numerically matches
/// the reference implementation in the metrics module.
pub fn ssim_node(tape: &mut Tape, pred: TensorId, truth: TensorId) -> Result<TensorId> {
    let shape = tape.shape(pred).to_vec();
    if tape.shape(truth) != shape.as_slice() {
        return Err(Error::shape(format!(
            "ssim loss: shapes {:?} vs {:?}",
            shape,
            tape.shape(truth)
        )));
    }
    if shape.len() != 4 || shape[0] != 1 || shape[3] != 3 {
        return Err(Error::shape(format!("ssim loss expects [1,H,W,3], got {shape:?}")));
    }
    let (_, kernel) = ssim_window_for(shape[2], shape[1]);

    let mu_x = gaussian_blur(tape, pred, &kernel)?;
    let mu_y = gaussian_blur(tape, truth, &kernel)?;
    let xx = tape.mul(pred, pred)?;
    let yy = tape.mul(truth, truth)?;
    let xy = tape.mul(pred, truth)?;
    let e_xx = gaussian_blur(tape, xx, &kernel)?;
    let e_yy = gaussian_blur(tape, yy, &kernel)?;
    let e_xy = gaussian_blur(tape, xy, &kernel)?;

    let mu_xx = tape.mul(mu_x, mu_x)?;
    let mu_yy = tape.mul(mu_y, mu_y)?;
    let mu_xy = tape.mul(mu_x, mu_y)?;
    let var_x = tape.sub(e_xx, mu_xx)?;
    let var_y = tape.sub(e_yy, mu_yy)?;
    let cov = tape.sub(e_xy, mu_xy)?;

    let two_mu = tape.scale(mu_xy, 2.0);
    let num_l = tape.add_scalar(two_mu, SSIM_C1);
    let two_cov = tape.scale(cov, 2.0);
    let num_r = tape.add_scalar(two_cov, SSIM_C2);
    let num = tape.mul(num_l, num_r)?;

    let mu_sum = tape.add(mu_xx, mu_yy)?;
    let den_l = tape.add_scalar(mu_sum, SSIM_C1);
    let var_sum = tape.add(var_x, var_y)?;
    let den_r = tape.add_scalar(var_sum, SSIM_C2);
    let den = tape.mul(den_l, den_r)?;

    let map = tape.div(num, den)?;
    Ok(tape.mean_all(map))
}

/// `a*(1 - SSIM(pred, truth)) + b*mean|pred - truth|`.
pub fn tcvd_loss(tape: &mut Tape, pred: TensorId, truth: TensorId, a: f64, b: f64) -> Result<TensorId> {
    if a < 0.0 || b < 0.0 {
        return Err(Error::contract(format!("loss weights must be nonnegative, got a={a} b={b}")));
    }
    let s = ssim_node(tape, pred, truth)?;
    let neg = tape.scale(s, -1.0);
    let ssim_term = tape.add_scalar(neg, 1.0);
    let diff = tape.sub(pred, truth)?;
    let absdiff = tape.abs(diff);
    let l1 = tape.mean_all(absdiff);
    let weighted_ssim = tape.scale(ssim_term, a);
    let weighted_l1 = tape.scale(l1, b);
    tape.add(weighted_ssim, weighted_l1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Frame;
    use crate::metrics;
    use crate::tcvd::forward::frame_to_tensor;
    use crate::tensor::{finite_difference_check, GradCheckConfig};
    use rand::{Rng, SeedableRng};

    fn random_frame(seed: u64, size: usize) -> Frame {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Frame::from_fn(size, size, |_, _| {
            [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]
        })
        .unwrap()
    }

    #[test]
    fn ssim_node_matches_reference_implementation() {
        for seed in 0..5 {
            let x = random_frame(seed, 24);
            let y = random_frame(seed + 100, 24);
            let mut tape = Tape::new();
            let xt = frame_to_tensor(&mut tape, &x).unwrap();
            let yt = frame_to_tensor(&mut tape, &y).unwrap();
            let node = ssim_node(&mut tape, xt, yt).unwrap();
            let reference = metrics::ssim(&x, &y).unwrap();
            assert!(
                (tape.value(node) - reference).abs() < 1e-10,
                "seed {seed}: {} vs {reference}",
                tape.value(node)
            );
        }
    }

    #[test]
    fn loss_is_zero_for_identical_frames() {
        let f = random_frame(1, 16);
        let mut tape = Tape::new();
        let a = frame_to_tensor(&mut tape, &f).unwrap();
        let b = frame_to_tensor(&mut tape, &f).unwrap();
        let loss = tcvd_loss(&mut tape, a, b, 1.0, 1.0).unwrap();
        assert_eq!(tape.value(loss), 0.0);
        let loss73 = tcvd_loss(&mut tape, a, b, 7.0, 3.0).unwrap();
        assert_eq!(tape.value(loss73), 0.0);
    }

    #[test]
    fn pure_l1_on_constant_offset() {
        let gt = Frame::filled(16, 16, [0.3; 3]).unwrap();
        let pred = Frame::filled(16, 16, [0.4; 3]).unwrap();
        let mut tape = Tape::new();
        let p = frame_to_tensor(&mut tape, &pred).unwrap();
        let g = frame_to_tensor(&mut tape, &gt).unwrap();
        let loss = tcvd_loss(&mut tape, p, g, 0.0, 1.0).unwrap();
        assert!((tape.value(loss) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn loss_is_linear_in_its_weights() {
        let x = random_frame(2, 16);
        let y = random_frame(3, 16);
        let eval = |a: f64, b: f64| -> f64 {
            let mut tape = Tape::new();
            let p = frame_to_tensor(&mut tape, &x).unwrap();
            let g = frame_to_tensor(&mut tape, &y).unwrap();
            let loss = tcvd_loss(&mut tape, p, g, a, b).unwrap();
            tape.value(loss)
        };
        let (a, b) = (0.7, 2.5);
        assert_eq!(eval(a, b), a * eval(1.0, 0.0) + b * eval(0.0, 1.0));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let pred = random_frame(4, 16);
        let gt = random_frame(5, 16);
        let gt_pixels = gt.pixels().to_vec();
        let report = finite_difference_check(
            |tape, ids| {
                let g = tape.constant(gt_pixels.clone(), &[1, 16, 16, 3])?;
                tcvd_loss(tape, ids[0], g, 1.0, 1.0)
            },
            &[(pred.pixels().to_vec(), vec![1, 16, 16, 3])],
            &GradCheckConfig { max_coords_per_input: Some(60), seed: 9, ..Default::default() },
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-3, "{report:?}");
    }
}
