//! Bilinear resizing with corner-aligned sampling.

use super::frame::Frame;

/// Resample to `size x size`. Source corners map exactly onto destination
/// corners; interpolated values are clamped to [0,1].
pub fn resize(frame: &Frame, size: usize) -> Frame {
    assert!(size >= 1, "resize target must be positive");
    if frame.width() == size && frame.height() == size {
        return frame.clone();
    }
    let src_w = frame.width();
    let src_h = frame.height();
    let scale = |dst: usize, src_dim: usize| -> f64 {
        if size == 1 {
            0.0
        } else {
            dst as f64 * (src_dim - 1) as f64 / (size - 1) as f64
        }
    };
    let mut pixels = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        let sy = scale(y, src_h);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(src_h - 1);
        let fy = sy - y0 as f64;
        for x in 0..size {
            let sx = scale(x, src_w);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(src_w - 1);
            let fx = sx - x0 as f64;
            let p00 = frame.pixel(x0, y0);
            let p10 = frame.pixel(x1, y0);
            let p01 = frame.pixel(x0, y1);
            let p11 = frame.pixel(x1, y1);
            for c in 0..3 {
                let top = p00[c] * (1.0 - fx) + p10[c] * fx;
                let bottom = p01[c] * (1.0 - fx) + p11[c] * fx;
                pixels.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
            }
        }
    }
    Frame::new(size, size, pixels).expect("resized frame is valid")
}
