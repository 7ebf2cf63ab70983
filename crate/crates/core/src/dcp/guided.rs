//! Guided filter for edge-aware transmission refinement.
//!
//! Standard formulation: per window, fit `out = a*guide + b` minimizing the
//! regularized reconstruction error, then average the coefficients over all
//! windows covering each pixel. Box means use an integral image; windows are
//! clipped at the borders and normalized by their actual pixel count.

/// Mean filter over `(2*radius+1)^2` windows clipped to the image.
pub fn box_mean(src: &[f64], width: usize, height: usize, radius: usize) -> Vec<f64> {
    debug_assert_eq!(src.len(), width * height);
    let mut integral = vec![0.0f64; (width + 1) * (height + 1)];
    for y in 0..height {
        for x in 0..width {
            integral[(y + 1) * (width + 1) + (x + 1)] = src[y * width + x]
                + integral[y * (width + 1) + (x + 1)]
                + integral[(y + 1) * (width + 1) + x]
                - integral[y * (width + 1) + x];
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        let y0 = y.saturating_sub(radius);
        let y1 = (y + radius + 1).min(height);
        for x in 0..width {
            let x0 = x.saturating_sub(radius);
            let x1 = (x + radius + 1).min(width);
            let sum = integral[y1 * (width + 1) + x1]
                - integral[y0 * (width + 1) + x1]
                - integral[y1 * (width + 1) + x0]
                + integral[y0 * (width + 1) + x0];
            out[y * width + x] = sum / ((y1 - y0) * (x1 - x0)) as f64;
        }
    }
    out
}

/// Guided-filter smoothing of `input` using `guide` (same dimensions).
pub fn guided_filter(
    guide: &[f64],
    input: &[f64],
    width: usize,
    height: usize,
    radius: usize,
    eps: f64,
) -> Vec<f64> {
    debug_assert_eq!(guide.len(), width * height);
    debug_assert_eq!(input.len(), width * height);
    let mean_g = box_mean(guide, width, height, radius);
    let mean_i = box_mean(input, width, height, radius);
    let gi: Vec<f64> = guide.iter().zip(input).map(|(g, i)| g * i).collect();
    let gg: Vec<f64> = guide.iter().map(|g| g * g).collect();
    let corr_gi = box_mean(&gi, width, height, radius);
    let corr_gg = box_mean(&gg, width, height, radius);

    let mut a = vec![0.0; guide.len()];
    let mut b = vec![0.0; guide.len()];
    for i in 0..guide.len() {
        let cov = corr_gi[i] - mean_g[i] * mean_i[i];
        let var = corr_gg[i] - mean_g[i] * mean_g[i];
        a[i] = cov / (var + eps);
        b[i] = mean_i[i] - a[i] * mean_g[i];
    }
    let mean_a = box_mean(&a, width, height, radius);
    let mean_b = box_mean(&b, width, height, radius);
    (0..guide.len()).map(|i| mean_a[i] * guide[i] + mean_b[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn brute_force_box_mean(src: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for y in 0..h {
            for x in 0..w {
                let mut sum = 0.0;
                let mut count = 0;
                for yy in y.saturating_sub(r)..(y + r + 1).min(h) {
                    for xx in x.saturating_sub(r)..(x + r + 1).min(w) {
                        sum += src[yy * w + xx];
                        count += 1;
                    }
                }
                out[y * w + x] = sum / count as f64;
            }
        }
        out
    }

    fn random_map(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()
    }

    #[test]
    fn box_mean_matches_brute_force() {
        let (w, h) = (13, 9);
        let src = random_map(1, w * h);
        for r in [1, 3, 5] {
            let fast = box_mean(&src, w, h, r);
            let slow = brute_force_box_mean(&src, w, h, r);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn constant_input_is_unchanged() {
        let (w, h) = (16, 16);
        let guide = random_map(2, w * h);
        let input = vec![0.42; w * h];
        let out = guided_filter(&guide, &input, w, h, 4, 1e-3);
        for v in out {
            assert!((v - 0.42).abs() < 1e-9);
        }
    }

    #[test]
    fn huge_eps_limit_is_double_box_mean() {
        // As eps grows, a -> 0 and b -> mean(input), so the output tends to
        // the box mean applied twice.
        let (w, h) = (20, 14);
        let guide = random_map(3, w * h);
        let input = random_map(4, w * h);
        let r = 3;
        let out = guided_filter(&guide, &input, w, h, r, 1e12);
        let expected = brute_force_box_mean(&brute_force_box_mean(&input, w, h, r), w, h, r);
        for (a, b) in out.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn output_stays_near_input_range() {
        let (w, h) = (24, 24);
        for seed in 0..5 {
            let guide = random_map(10 + seed, w * h);
            let input = random_map(20 + seed, w * h);
            let out = guided_filter(&guide, &input, w, h, 5, 1e-3);
            let lo = input.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = input.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in out {
                assert!(v >= lo - 0.05 && v <= hi + 0.05, "value {v} outside [{lo}, {hi}] margin");
            }
        }
    }
}
