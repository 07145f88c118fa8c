//! Point operations and separable Gaussian filtering.

use crate::image::GrayImage;

use super::SketchError;

/// Floating-point plane used for intermediate filter results.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.pixels().iter().map(|&p| p as f32).collect(),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Rounds and saturates to 8 bits.
    pub fn to_gray(&self) -> GrayImage {
        let pixels = self
            .data
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        GrayImage::new(self.width, self.height, pixels).expect("dimensions preserved")
    }
}

/// Mirror index without repeating the edge sample (`dcb|abcd|cba`).
#[inline]
pub(crate) fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let n = len as isize;
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Normalized 1-D Gaussian taps of odd length `k`.
pub fn gaussian_kernel(k: usize, sigma: f64) -> Result<Vec<f64>, SketchError> {
    if k < 3 || k.is_multiple_of(2) {
        return Err(SketchError::InvalidParams(format!(
            "gaussian kernel size must be odd and >= 3, got {k}"
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(SketchError::InvalidParams(format!(
            "gaussian sigma must be positive, got {sigma}"
        )));
    }
    let r = (k / 2) as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    Ok(taps.into_iter().map(|t| t / sum).collect())
}

pub fn gaussian_blur_f32(
    img: &FloatImage,
    k: usize,
    sigma: f64,
) -> Result<FloatImage, SketchError> {
    let kernel = gaussian_kernel(k, sigma)?;
    let r = (k / 2) as isize;
    let (w, h) = (img.width, img.height);

    let mut horizontal = vec![0f32; w * h];
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0f64;
            for (t, &kv) in kernel.iter().enumerate() {
                acc += kv * row[reflect(x as isize + t as isize - r, w)] as f64;
            }
            horizontal[y * w + x] = acc as f32;
        }
    }
    let mut out = vec![0f32; w * h];
    for y in 0..h {
        for (t, &kv) in kernel.iter().enumerate() {
            let src = reflect(y as isize + t as isize - r, h);
            let src_row = &horizontal[src * w..(src + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for x in 0..w {
                dst[x] += (kv * src_row[x] as f64) as f32;
            }
        }
    }
    Ok(FloatImage {
        width: w,
        height: h,
        data: out,
    })
}

/// Separable Gaussian blur with mirrored borders.
pub fn gaussian_blur(img: &GrayImage, k: usize, sigma: f64) -> Result<GrayImage, SketchError> {
    Ok(gaussian_blur_f32(&FloatImage::from_gray(img), k, sigma)?.to_gray())
}

pub fn invert(img: &GrayImage) -> GrayImage {
    img.map(|p| 255 - p)
}

/// Color dodge: `g · scale / (255 − blurred_inverse + 1)`, saturated to 8
/// bits. `blurred_inverse` is the blur of the inverted grayscale image, so
/// the denominator is its re-inversion; the `+ 1` keeps it non-zero.
pub fn dodge_divide(
    gray: &GrayImage,
    blurred_inverse: &GrayImage,
    scale: f64,
) -> Result<GrayImage, SketchError> {
    gray.ensure_same_size(blurred_inverse)?;
    let pixels = gray
        .pixels()
        .iter()
        .zip(blurred_inverse.pixels())
        .map(|(&g, &b)| {
            let v = g as f64 * scale / (255.0 - b as f64 + 1.0);
            v.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok(GrayImage::new(gray.width(), gray.height(), pixels)?)
}

/// `p > t → 255`, else 0.
pub fn binary_threshold(img: &GrayImage, t: u8) -> GrayImage {
    img.map(|p| if p > t { 255 } else { 0 })
}
