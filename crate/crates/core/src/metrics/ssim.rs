//! Structural similarity.
//!
//! Standard formulation: 11x11 Gaussian window with sigma 1.5 (shrunk to the
//! image when smaller, kept odd), stabilizers C1=(0.01L)^2, C2=(0.03L)^2
//! with L=1, evaluated at valid window positions only. RGB scores average
//! the three per-channel SSIMs.

use crate::dataset::Frame;
use crate::error::{Error, Result};

use super::pairwise_sum;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Window side used for a WxH image: `min(11, W, H)`, forced odd.
pub fn effective_window(width: usize, height: usize) -> usize {
    let mut w = SSIM_WINDOW.min(width).min(height);
    if w.is_multiple_of(2) {
        w -= 1;
    }
    w.max(1)
}

fn gaussian_kernel(window: usize, sigma: f64) -> Vec<f64> {
    let half = (window / 2) as f64;
    let mut k: Vec<f64> = (0..window)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Separable valid-mode Gaussian filtering of one plane.
fn blur_valid(plane: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let win = kernel.len();
    let ow = width - win + 1;
    let oh = height - win + 1;
    let mut horiz = vec![0.0; oh.max(height) * ow];
    // Horizontal pass over all rows.
    let mut tmp = vec![0.0; height * ow];
    for y in 0..height {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &g) in kernel.iter().enumerate() {
                acc += g * plane[y * width + x + k];
            }
            tmp[y * ow + x] = acc;
        }
    }
    // Vertical pass down to valid rows.
    horiz.truncate(oh * ow);
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &g) in kernel.iter().enumerate() {
                acc += g * tmp[(y + k) * ow + x];
            }
            horiz[y * ow + x] = acc;
        }
    }
    horiz
}

fn channel_plane(frame: &Frame, c: usize) -> Vec<f64> {
    frame.pixels().iter().skip(c).step_by(3).copied().collect()
}

/// SSIM map statistics for one channel pair.
fn channel_ssim(x: &[f64], y: &[f64], width: usize, height: usize, kernel: &[f64]) -> f64 {
    let mu_x = blur_valid(x, width, height, kernel);
    let mu_y = blur_valid(y, width, height, kernel);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let e_xx = blur_valid(&xx, width, height, kernel);
    let e_yy = blur_valid(&yy, width, height, kernel);
    let e_xy = blur_valid(&xy, width, height, kernel);

    let values: Vec<f64> = (0..mu_x.len())
        .map(|i| {
            let mx = mu_x[i];
            let my = mu_y[i];
            let var_x = e_xx[i] - mx * mx;
            let var_y = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            let num = (2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (mx * mx + my * my + SSIM_C1) * (var_x + var_y + SSIM_C2);
            num / den
        })
        .collect();
    pairwise_sum(&values) / values.len() as f64
}

/// Mean SSIM over the three channels.
pub fn ssim(x: &Frame, y: &Frame) -> Result<f64> {
    if !x.same_dims(y) {
        return Err(Error::shape(format!(
            "ssim: frames {}x{} vs {}x{}",
            x.width(),
            x.height(),
            y.width(),
            y.height()
        )));
    }
    let win = effective_window(x.width(), x.height());
    let kernel = gaussian_kernel(win, SSIM_SIGMA);
    let mut total = 0.0;
    for c in 0..3 {
        let px = channel_plane(x, c);
        let py = channel_plane(y, c);
        total += channel_ssim(&px, &py, x.width(), x.height(), &kernel);
    }
    Ok(total / 3.0)
}

/// The normalized Gaussian window used by [`ssim`] for a given image size,
/// exposed so differentiable reimplementations can share it exactly.
pub fn ssim_window_for(width: usize, height: usize) -> (usize, Vec<f64>) {
    let win = effective_window(width, height);
    (win, gaussian_kernel(win, SSIM_SIGMA))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Naive double-loop sliding-window SSIM, independent of the separable
    /// filtering path.
    pub(super) fn brute_force_ssim(x: &Frame, y: &Frame) -> f64 {
        let (w, h) = (x.width(), x.height());
        let win = effective_window(w, h);
        let k1 = gaussian_kernel(win, SSIM_SIGMA);
        let mut total = 0.0;
        for c in 0..3 {
            let mut sum = 0.0;
            let mut count = 0usize;
            for wy in 0..h - win + 1 {
                for wx in 0..w - win + 1 {
                    let (mut mx, mut my, mut exx, mut eyy, mut exy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for dy in 0..win {
                        for dx in 0..win {
                            let g = k1[dy] * k1[dx];
                            let a = x.pixel(wx + dx, wy + dy)[c];
                            let b = y.pixel(wx + dx, wy + dy)[c];
                            mx += g * a;
                            my += g * b;
                            exx += g * a * a;
                            eyy += g * b * b;
                            exy += g * a * b;
                        }
                    }
                    let var_x = exx - mx * mx;
                    let var_y = eyy - my * my;
                    let cov = exy - mx * my;
                    let num = (2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2);
                    let den = (mx * mx + my * my + SSIM_C1) * (var_x + var_y + SSIM_C2);
                    sum += num / den;
                    count += 1;
                }
            }
            total += sum / count as f64;
        }
        total / 3.0
    }

    fn random_frame(seed: u64, w: usize, h: usize) -> Frame {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Frame::from_fn(w, h, |_, _| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
            .unwrap()
    }

    #[test]
    fn identical_frames_score_exactly_one() {
        let f = random_frame(1, 24, 24);
        assert_eq!(ssim(&f, &f).unwrap(), 1.0);
    }

    #[test]
    fn constant_zero_vs_constant_one() {
        // mu terms contribute C1/(1+C1); the variance factor cancels to 1.
        let black = Frame::filled(16, 16, [0.0; 3]).unwrap();
        let white = Frame::filled(16, 16, [1.0; 3]).unwrap();
        let expected = SSIM_C1 / (1.0 + SSIM_C1);
        let got = ssim(&black, &white).unwrap();
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    }

    #[test]
    fn matches_brute_force_oracle_on_random_pairs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for i in 0..20 {
            let w = rng.gen_range(8..=32);
            let h = rng.gen_range(8..=32);
            let x = random_frame(100 + i, w, h);
            let y = random_frame(200 + i, w, h);
            let fast = ssim(&x, &y).unwrap();
            let slow = brute_force_ssim(&x, &y);
            assert!((fast - slow).abs() < 1e-10, "{w}x{h}: {fast} vs {slow}");
        }
    }

    #[test]
    fn symmetric_in_arguments() {
        let x = random_frame(31, 20, 20);
        let y = random_frame(32, 20, 20);
        let ab = ssim(&x, &y).unwrap();
        let ba = ssim(&y, &x).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn tiny_perturbation_stays_near_one() {
        let x = random_frame(41, 24, 24);
        let y = Frame::new(
            24,
            24,
            x.pixels().iter().map(|v| (v + 1e-6).min(1.0)).collect(),
        )
        .unwrap();
        let s = ssim(&x, &y).unwrap();
        assert!(s > 0.9999, "ssim {s}");
    }

    #[test]
    fn window_shrinks_for_small_images() {
        assert_eq!(effective_window(8, 8), 7);
        assert_eq!(effective_window(32, 32), 11);
        assert_eq!(effective_window(11, 9), 9);
    }
}
