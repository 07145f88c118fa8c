//! Gradient operators and the Canny detector.

use std::f32::consts::PI;

use serde::{Deserialize, Serialize};

use crate::image::GrayImage;

use super::filters::{gaussian_blur_f32, reflect, FloatImage};
use super::SketchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeOperator {
    #[default]
    Canny,
    Sobel,
    Scharr,
    Prewitt,
    Roberts,
}

impl EdgeOperator {
    pub const ALL: [EdgeOperator; 5] = [
        EdgeOperator::Canny,
        EdgeOperator::Sobel,
        EdgeOperator::Scharr,
        EdgeOperator::Prewitt,
        EdgeOperator::Roberts,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EdgeOperator::Canny => "canny",
            EdgeOperator::Sobel => "sobel",
            EdgeOperator::Scharr => "scharr",
            EdgeOperator::Prewitt => "prewitt",
            EdgeOperator::Roberts => "roberts",
        }
    }

    fn min_size(self) -> usize {
        match self {
            EdgeOperator::Roberts => 2,
            _ => 3,
        }
    }
}

impl std::fmt::Display for EdgeOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EdgeOperator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EdgeOperator::ALL
            .into_iter()
            .find(|op| op.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown edge operator {s:?}"))
    }
}

/// Per-pixel derivatives, magnitude `sqrt(gx² + gy²)` and orientation
/// `atan2(gy, gx)`. `gx` grows to the right, `gy` downwards.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f32>,
    pub gy: Vec<f32>,
    pub magnitude: Vec<f32>,
    pub orientation: Vec<f32>,
}

// Horizontal-derivative 3x3 kernels; the vertical one is the transpose.
const SOBEL: [[f32; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SCHARR: [[f32; 3]; 3] = [[-3.0, 0.0, 3.0], [-10.0, 0.0, 10.0], [-3.0, 0.0, 3.0]];
const PREWITT: [[f32; 3]; 3] = [[-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0]];

fn correlate3(img: &FloatImage, kx: &[[f32; 3]; 3]) -> (Vec<f32>, Vec<f32>) {
    let (w, h) = (img.width, img.height);
    let mut gx = vec![0f32; w * h];
    let mut gy = vec![0f32; w * h];
    for y in 0..h {
        let rows = [reflect(y as isize - 1, h), y, reflect(y as isize + 1, h)];
        for x in 0..w {
            let cols = [reflect(x as isize - 1, w), x, reflect(x as isize + 1, w)];
            let (mut sx, mut sy) = (0f32, 0f32);
            for j in 0..3 {
                for i in 0..3 {
                    let v = img.get(cols[i], rows[j]);
                    sx += kx[j][i] * v;
                    sy += kx[i][j] * v;
                }
            }
            gx[y * w + x] = sx;
            gy[y * w + x] = sy;
        }
    }
    (gx, gy)
}

fn roberts(img: &FloatImage) -> (Vec<f32>, Vec<f32>) {
    let (w, h) = (img.width, img.height);
    let mut gx = vec![0f32; w * h];
    let mut gy = vec![0f32; w * h];
    for y in 0..h {
        let y1 = reflect(y as isize + 1, h);
        for x in 0..w {
            let x1 = reflect(x as isize + 1, w);
            gx[y * w + x] = img.get(x, y) - img.get(x1, y1);
            gy[y * w + x] = img.get(x1, y) - img.get(x, y1);
        }
    }
    (gx, gy)
}

pub(crate) fn gradient_of(img: &FloatImage, op: EdgeOperator) -> GradientField {
    let (gx, gy) = match op {
        EdgeOperator::Canny | EdgeOperator::Sobel => correlate3(img, &SOBEL),
        EdgeOperator::Scharr => correlate3(img, &SCHARR),
        EdgeOperator::Prewitt => correlate3(img, &PREWITT),
        EdgeOperator::Roberts => roberts(img),
    };
    let magnitude = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let orientation = gx.iter().zip(&gy).map(|(a, b)| b.atan2(*a)).collect();
    GradientField {
        width: img.width,
        height: img.height,
        gx,
        gy,
        magnitude,
        orientation,
    }
}

/// Standard 3×3 operators (2×2 for Roberts Cross) with mirrored borders.
/// `Canny` uses the Sobel kernels.
pub fn edge_gradient(img: &GrayImage, op: EdgeOperator) -> Result<GradientField, SketchError> {
    let min = op.min_size();
    if img.width() < min || img.height() < min {
        return Err(SketchError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min,
        });
    }
    Ok(gradient_of(&FloatImage::from_gray(img), op))
}

const CANNY_BLUR_KERNEL: usize = 5;
const CANNY_BLUR_SIGMA: f64 = 1.4;

/// Canny edge map (255 = edge, 0 = background).
///
/// Gaussian pre-smoothing (5×5, σ = 1.4), Sobel gradients, optional
/// non-maximum suppression quantized to four directions, then double
/// thresholding with 8-connected hysteresis. A pixel is strong when its
/// magnitude is at least `high` and weak when at least `low`; zero
/// magnitudes never count. Without NMS every thresholded magnitude enters
/// hysteresis directly.
///
/// With NMS the result is also cleared of staircase corners (a pixel joined
/// to two perpendicular 4-neighbors that already touch diagonally), so thin
/// curves come out exactly one pixel wide.
pub fn canny(img: &GrayImage, low: f32, high: f32, nms: bool) -> Result<GrayImage, SketchError> {
    if !(low >= 0.0) || !(low <= high) {
        return Err(SketchError::InvalidParams(format!(
            "canny thresholds must satisfy 0 <= low <= high, got {low}, {high}"
        )));
    }
    if img.width() < 3 || img.height() < 3 {
        return Err(SketchError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min: 3,
        });
    }
    let smoothed = gaussian_blur_f32(
        &FloatImage::from_gray(img),
        CANNY_BLUR_KERNEL,
        CANNY_BLUR_SIGMA,
    )?;
    let grad = gradient_of(&smoothed, EdgeOperator::Sobel);
    let strength = if nms {
        non_maximum_suppression(&grad)
    } else {
        grad.magnitude.clone()
    };
    let mut edges = hysteresis(&strength, grad.width, grad.height, low, high);
    if nms {
        remove_staircase_corners(&mut edges, grad.width, grad.height);
    }
    Ok(GrayImage::new(grad.width, grad.height, edges)?)
}

/// Keeps a pixel only if it beats its predecessor and is not beaten by its
/// successor along the quantized gradient direction. The asymmetric
/// comparison keeps exactly one pixel of a two-pixel plateau. Border pixels
/// are suppressed.
fn non_maximum_suppression(g: &GradientField) -> Vec<f32> {
    let (w, h) = (g.width, g.height);
    let mut out = vec![0f32; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = g.magnitude[i];
            if m == 0.0 {
                continue;
            }
            let mut angle = g.orientation[i] * 180.0 / PI;
            if angle < 0.0 {
                angle += 180.0;
            }
            // Neighbor offsets in image coordinates (y grows downwards).
            let (dx, dy): (isize, isize) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let before = g.magnitude[((y as isize - dy) as usize) * w + (x as isize - dx) as usize];
            let after = g.magnitude[((y as isize + dy) as usize) * w + (x as isize + dx) as usize];
            if m > before && m >= after {
                out[i] = m;
            }
        }
    }
    out
}

fn hysteresis(strength: &[f32], w: usize, h: usize, low: f32, high: f32) -> Vec<u8> {
    let mut out = vec![0u8; w * h];
    let mut stack = Vec::new();
    for (i, &s) in strength.iter().enumerate() {
        if s > 0.0 && s >= high && out[i] == 0 {
            out[i] = 255;
            stack.push(i);
            while let Some(j) = stack.pop() {
                let (x, y) = ((j % w) as isize, (j / w) as isize);
                for ny in (y - 1).max(0)..=(y + 1).min(h as isize - 1) {
                    for nx in (x - 1).max(0)..=(x + 1).min(w as isize - 1) {
                        let k = ny as usize * w + nx as usize;
                        if out[k] == 0 && strength[k] > 0.0 && strength[k] >= low {
                            out[k] = 255;
                            stack.push(k);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Deletes edge pixels that are simple (8-connectivity number 1) and have at
/// least two 4-neighbors. Such a pixel is the redundant corner of an
/// L-shaped step; removing it keeps every curve connected and never touches
/// line ends. Operates per connected component, so it never merges or
/// splits components.
fn remove_staircase_corners(edges: &mut [u8], w: usize, h: usize) {
    // Ring order: E, NE, N, NW, W, SW, S, SE.
    const RING: [(isize, isize); 8] = [
        (1, 0),
        (1, -1),
        (0, -1),
        (-1, -1),
        (-1, 0),
        (-1, 1),
        (0, 1),
        (1, 1),
    ];
    let at = |edges: &[u8], x: isize, y: isize| -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < w
            && (y as usize) < h
            && edges[y as usize * w + x as usize] != 0
    };
    loop {
        let mut changed = false;
        for y in 0..h as isize {
            for x in 0..w as isize {
                if !at(edges, x, y) {
                    continue;
                }
                let ring: [bool; 8] = RING.map(|(dx, dy)| at(edges, x + dx, y + dy));
                let four = [0, 2, 4, 6].iter().filter(|&&k| ring[k]).count();
                if four < 2 {
                    continue;
                }
                let empty = |k: usize| !ring[k % 8];
                let connectivity: usize = [0, 2, 4, 6]
                    .iter()
                    .map(|&k| {
                        usize::from(empty(k))
                            - usize::from(empty(k) && empty(k + 1) && empty(k + 2))
                    })
                    .sum();
                if connectivity == 1 {
                    edges[y as usize * w + x as usize] = 0;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Single-threshold edge map for the non-Canny operators.
pub fn threshold_magnitude(grad: &GradientField, threshold: f32) -> GrayImage {
    let pixels = grad
        .magnitude
        .iter()
        .map(|&m| if m > 0.0 && m >= threshold { 255 } else { 0 })
        .collect();
    GrayImage::new(grad.width, grad.height, pixels).expect("dimensions preserved")
}
