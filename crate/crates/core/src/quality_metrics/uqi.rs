use crate::image::GrayImage;

use super::{require_size, MetricsError};

const BLOCK: usize = 8;

/// Summed-area table with a zero first row and column.
fn integral(w: usize, h: usize, f: impl Fn(usize) -> i64) -> Vec<i64> {
    let stride = w + 1;
    let mut t = vec![0i64; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0i64;
        for x in 0..w {
            row += f(y * w + x);
            t[(y + 1) * stride + x + 1] = t[y * stride + x + 1] + row;
        }
    }
    t
}

fn window_sum(t: &[i64], stride: usize, x: usize, y: usize) -> i64 {
    t[(y + BLOCK) * stride + x + BLOCK] - t[y * stride + x + BLOCK] - t[(y + BLOCK) * stride + x]
        + t[y * stride + x]
}

/// Universal quality index averaged over every 8×8 window (stride 1).
///
/// Window statistics are kept as exact integer sums, so identical inputs
/// score exactly 1. Windows where both images are constant fall back to the
/// luminance term `2x̄ȳ / (x̄² + ȳ²)`, and to 1 when both are all-zero.
pub fn uqi(a: &GrayImage, b: &GrayImage) -> Result<f64, MetricsError> {
    a.ensure_same_size(b)?;
    require_size("UQI", a, BLOCK)?;
    let (w, h) = a.dimensions();
    let (pa, pb) = (a.pixels(), b.pixels());
    let sx = integral(w, h, |i| pa[i] as i64);
    let sy = integral(w, h, |i| pb[i] as i64);
    let sxx = integral(w, h, |i| (pa[i] as i64).pow(2));
    let syy = integral(w, h, |i| (pb[i] as i64).pow(2));
    let sxy = integral(w, h, |i| pa[i] as i64 * pb[i] as i64);
    let n = (BLOCK * BLOCK) as i128;
    let stride = w + 1;

    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..=h - BLOCK {
        for x in 0..=w - BLOCK {
            let sum_x = window_sum(&sx, stride, x, y) as i128;
            let sum_y = window_sum(&sy, stride, x, y) as i128;
            let var_x = n * window_sum(&sxx, stride, x, y) as i128 - sum_x * sum_x;
            let var_y = n * window_sum(&syy, stride, x, y) as i128 - sum_y * sum_y;
            let cov = n * window_sum(&sxy, stride, x, y) as i128 - sum_x * sum_y;
            let variance = var_x + var_y;
            let luminance = sum_x * sum_x + sum_y * sum_y;
            let q = match (variance == 0, luminance == 0) {
                (true, true) => 1.0,
                (true, false) => (2 * sum_x * sum_y) as f64 / luminance as f64,
                (false, true) => (2 * cov) as f64 / variance as f64,
                (false, false) => (4 * cov * sum_x * sum_y) as f64 / (variance * luminance) as f64,
            };
            total += q;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_exactly_one() {
        let img = GrayImage::from_fn(30, 20, |x, y| ((x * 37 + y * 11) % 256) as u8);
        assert_eq!(uqi(&img, &img).unwrap(), 1.0);
    }

    #[test]
    fn doubled_intensity_is_below_one() {
        let a = GrayImage::from_fn(16, 16, |x, y| (x + y) as u8 * 3);
        let b = a.map(|p| p * 2);
        let q = uqi(&a, &b).unwrap();
        assert!(q < 1.0 && q > 0.0, "{q}");
    }

    #[test]
    fn constant_equal_windows() {
        let a = GrayImage::filled(8, 8, 40);
        assert_eq!(uqi(&a, &a).unwrap(), 1.0);
        let z = GrayImage::filled(8, 8, 0);
        assert_eq!(uqi(&z, &z).unwrap(), 1.0);
        // luminance-only: 2*40*80/(40^2+80^2) = 0.8
        let b = GrayImage::filled(8, 8, 80);
        assert!((uqi(&a, &b).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn brute_force_single_window() {
        let a = GrayImage::from_fn(8, 8, |x, y| (x * 9 + y * 4) as u8);
        let b = GrayImage::from_fn(8, 8, |x, y| (x * 5 + y * y) as u8);
        let (xa, yb): (Vec<f64>, Vec<f64>) = a
            .pixels()
            .iter()
            .zip(b.pixels())
            .map(|(&p, &q)| (p as f64, q as f64))
            .unzip();
        let n = 64.0;
        let mx = xa.iter().sum::<f64>() / n;
        let my = yb.iter().sum::<f64>() / n;
        let vx = xa.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n;
        let vy = yb.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
        let cxy = xa
            .iter()
            .zip(&yb)
            .map(|(p, q)| (p - mx) * (q - my))
            .sum::<f64>()
            / n;
        let expected = 4.0 * cxy * mx * my / ((vx + vy) * (mx * mx + my * my));
        assert!((uqi(&a, &b).unwrap() - expected).abs() < 1e-12);
    }
}
