use crate::image::GrayImage;

use super::{gaussian_window, require_size, MetricsError, Plane};

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);
const WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// Smallest side that still fits the 11-px window after four halvings.
pub const MS_SSIM_MIN_SIZE: usize = WINDOW << 4;

/// Mean SSIM and mean contrast-structure term at one scale.
fn ssim_terms(x: &Plane, y: &Plane, window: &[f64]) -> (f64, f64) {
    let mu_x = x.filter_valid(window);
    let mu_y = y.filter_valid(window);
    let xx = x.zip_map(x, |a, b| a * b).filter_valid(window);
    let yy = y.zip_map(y, |a, b| a * b).filter_valid(window);
    let xy = x.zip_map(y, |a, b| a * b).filter_valid(window);
    let n = mu_x.data.len();
    let (mut ssim_sum, mut cs_sum) = (0.0, 0.0);
    for i in 0..n {
        let (mx, my) = (mu_x.data[i], mu_y.data[i]);
        let var_x = xx.data[i] - mx * mx;
        let var_y = yy.data[i] - my * my;
        let cov = xy.data[i] - mx * my;
        let cs = (2.0 * cov + C2) / (var_x + var_y + C2);
        let l = (2.0 * mx * my + C1) / (mx * mx + my * my + C1);
        cs_sum += cs;
        ssim_sum += l * cs;
    }
    (ssim_sum / n as f64, cs_sum / n as f64)
}

/// 2×2 box average followed by decimation; odd trailing rows/columns are
/// mirrored.
fn downsample(p: &Plane) -> Plane {
    let w = p.w.div_ceil(2);
    let h = p.h.div_ceil(2);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        let (y0, y1) = (2 * y, (2 * y + 1).min(p.h - 1));
        for x in 0..w {
            let (x0, x1) = (2 * x, (2 * x + 1).min(p.w - 1));
            let s = p.data[y0 * p.w + x0]
                + p.data[y0 * p.w + x1]
                + p.data[y1 * p.w + x0]
                + p.data[y1 * p.w + x1];
            data.push(s / 4.0);
        }
    }
    Plane { w, h, data }
}

/// Five-scale MS-SSIM with the standard exponents. Contrast-structure terms
/// at the first four scales and SSIM at the coarsest one are clamped at zero
/// before exponentiation so anti-correlated inputs score 0 instead of NaN.
pub fn ms_ssim(a: &GrayImage, b: &GrayImage) -> Result<f64, MetricsError> {
    a.ensure_same_size(b)?;
    require_size("MS-SSIM", a, MS_SSIM_MIN_SIZE)?;
    let window = gaussian_window(WINDOW, SIGMA);
    let mut x = Plane::from_gray(a);
    let mut y = Plane::from_gray(b);
    let mut score = 1.0;
    for (level, &w) in WEIGHTS.iter().enumerate() {
        let (ssim, cs) = ssim_terms(&x, &y, &window);
        let term = if level == WEIGHTS.len() - 1 { ssim } else { cs };
        score *= term.max(0.0).powf(w);
        if level + 1 < WEIGHTS.len() {
            x = downsample(&x);
            y = downsample(&y);
        }
    }
    Ok(score)
}
