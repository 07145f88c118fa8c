//! Histogram of oriented gradients.
//!
//! Centered `[-1, 0, 1]` derivatives with mirrored borders, magnitude-weighted
//! orientation histograms per cell with linear interpolation between the two
//! nearest bin centers, and L2 (or L2-Hys) normalization per block. Bin `i`
//! is centered at `i · span / orientations`, so bin 0 holds horizontal
//! gradients (vertical edges).
//!
//! With the default one-cell blocks, block normalization is per-cell
//! normalization and the layout is `(cells_y, cells_x, orientations)`
//! flattened row-major. Larger blocks slide one cell at a time and are laid
//! out as `(blocks_y, blocks_x, cells_per_block_y, cells_per_block_x,
//! orientations)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::GrayImage;
use crate::sketch_gen::reflect;
use crate::view_render::{ViewSet, VIEW_COUNT};

const NORM_EPS: f32 = 1e-12;
const L2HYS_CLIP: f32 = 0.2;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HogError {
    #[error("image {width}x{height} is not divisible into {cell_w}x{cell_h} cells")]
    DimensionNotDivisible {
        width: usize,
        height: usize,
        cell_w: usize,
        cell_h: usize,
    },
    #[error("invalid HOG parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockNorm {
    #[default]
    L2,
    L2Hys,
}

impl std::str::FromStr for BlockNorm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(BlockNorm::L2),
            "l2hys" | "l2-hys" => Ok(BlockNorm::L2Hys),
            _ => Err(format!("unknown block norm {s:?}")),
        }
    }
}

impl std::fmt::Display for BlockNorm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BlockNorm::L2 => "l2",
            BlockNorm::L2Hys => "l2hys",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HogParams {
    /// (x, y)
    pub pixels_per_cell: (usize, usize),
    /// (x, y)
    pub cells_per_block: (usize, usize),
    pub orientations: usize,
    pub block_norm: BlockNorm,
    /// Orientations over 0..360° instead of 0..180°.
    pub signed: bool,
    /// Bilinear resize applied by [`describe`] before extraction.
    pub resize_to: Option<(usize, usize)>,
}

impl Default for HogParams {
    fn default() -> Self {
        Self {
            pixels_per_cell: (8, 8),
            cells_per_block: (1, 1),
            orientations: 8,
            block_norm: BlockNorm::L2,
            signed: false,
            resize_to: Some((256, 256)),
        }
    }
}

impl HogParams {
    pub fn validate(&self) -> Result<(), HogError> {
        if self.orientations < 2 {
            return Err(HogError::InvalidParams("orientations must be >= 2".into()));
        }
        let (cw, ch) = self.pixels_per_cell;
        let (bw, bh) = self.cells_per_block;
        if cw == 0 || ch == 0 || bw == 0 || bh == 0 {
            return Err(HogError::InvalidParams(
                "cell and block sizes must be positive".into(),
            ));
        }
        if matches!(self.resize_to, Some((0, _)) | Some((_, 0))) {
            return Err(HogError::InvalidParams(
                "resize target must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Descriptor length for a `width`×`height` input.
    pub fn descriptor_len(&self, width: usize, height: usize) -> usize {
        let cells_x = width / self.pixels_per_cell.0;
        let cells_y = height / self.pixels_per_cell.1;
        let blocks_x = (cells_x + 1).saturating_sub(self.cells_per_block.0);
        let blocks_y = (cells_y + 1).saturating_sub(self.cells_per_block.1);
        blocks_x * blocks_y * self.cells_per_block.0 * self.cells_per_block.1 * self.orientations
    }

    /// Length produced by [`describe`], when the resize target is fixed.
    pub fn output_len(&self) -> Option<usize> {
        self.resize_to.map(|(w, h)| self.descriptor_len(w, h))
    }
}

/// Flattened HOG descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f32>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    /// Mean squared difference, accumulated in f64.
    pub fn mse(&self, other: &FeatureVector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        let sum: f64 = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| {
                let d = *a as f64 - *b as f64;
                d * d
            })
            .sum();
        sum / self.0.len().max(1) as f64
    }
}

/// Canonical (magnitude, orientation in degrees) of a gradient. For unsigned
/// orientation the vector is first flipped into the upper half plane so
/// that `(gx, gy)` and `(-gx, -gy)` give bit-identical results.
fn polar(gx: f32, gy: f32, signed: bool) -> (f32, f32) {
    let mag = gx.hypot(gy);
    if signed {
        let mut a = gy.atan2(gx).to_degrees();
        if a < 0.0 {
            a += 360.0;
        }
        if a >= 360.0 {
            a -= 360.0;
        }
        return (mag, a);
    }
    let (mut x, mut y) = (gx, gy);
    if y < 0.0 || (y == 0.0 && x < 0.0) {
        x = -x;
        y = -y;
    }
    if y == 0.0 {
        y = 0.0;
    }
    let mut a = y.atan2(x).to_degrees();
    if a >= 180.0 {
        a -= 180.0;
    }
    (mag, a)
}

pub fn hog(img: &GrayImage, params: &HogParams) -> Result<FeatureVector, HogError> {
    params.validate()?;
    let (w, h) = img.dimensions();
    let (cw, ch) = params.pixels_per_cell;
    if w % cw != 0 || h % ch != 0 {
        return Err(HogError::DimensionNotDivisible {
            width: w,
            height: h,
            cell_w: cw,
            cell_h: ch,
        });
    }
    let cells_x = w / cw;
    let cells_y = h / ch;
    let bins = params.orientations;
    let span = if params.signed { 360.0 } else { 180.0 };
    let bin_width = span / bins as f32;

    let mut hist = vec![0f32; cells_x * cells_y * bins];
    for y in 0..h {
        let up = reflect(y as isize - 1, h);
        let down = reflect(y as isize + 1, h);
        for x in 0..w {
            let left = reflect(x as isize - 1, w);
            let right = reflect(x as isize + 1, w);
            let gx = img.get(right, y) as f32 - img.get(left, y) as f32;
            let gy = img.get(x, down) as f32 - img.get(x, up) as f32;
            if gx == 0.0 && gy == 0.0 {
                continue;
            }
            let (mag, angle) = polar(gx, gy, params.signed);
            let pos = angle / bin_width;
            let lower = pos.floor();
            let frac = pos - lower;
            let b0 = (lower as usize) % bins;
            let b1 = (b0 + 1) % bins;
            let cell = (y / ch) * cells_x + x / cw;
            hist[cell * bins + b0] += mag * (1.0 - frac);
            hist[cell * bins + b1] += mag * frac;
        }
    }

    let (bx, by) = params.cells_per_block;
    let blocks_x = (cells_x + 1).saturating_sub(bx);
    let blocks_y = (cells_y + 1).saturating_sub(by);
    let mut out = Vec::with_capacity(blocks_x * blocks_y * bx * by * bins);
    let mut block = Vec::with_capacity(bx * by * bins);
    for block_y in 0..blocks_y {
        for block_x in 0..blocks_x {
            block.clear();
            for cy in block_y..block_y + by {
                for cx in block_x..block_x + bx {
                    let c = cy * cells_x + cx;
                    block.extend_from_slice(&hist[c * bins..(c + 1) * bins]);
                }
            }
            normalize_block(&mut block, params.block_norm);
            out.extend_from_slice(&block);
        }
    }
    Ok(FeatureVector(out))
}

fn l2_normalize(v: &mut [f32]) {
    let norm = (v.iter().map(|x| x * x).sum::<f32>() + NORM_EPS * NORM_EPS).sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
}

fn normalize_block(v: &mut [f32], norm: BlockNorm) {
    l2_normalize(v);
    if norm == BlockNorm::L2Hys {
        for x in v.iter_mut() {
            *x = x.min(L2HYS_CLIP);
        }
        l2_normalize(v);
    }
}

/// Resizes per `params.resize_to` and extracts the descriptor.
pub fn describe(img: &GrayImage, params: &HogParams) -> Result<FeatureVector, HogError> {
    match params.resize_to {
        Some((w, h)) if img.dimensions() != (w, h) => hog(&img.resize_bilinear(w, h), params),
        _ => hog(img, params),
    }
}

/// One descriptor per view, in view order.
pub fn extract_bag(views: &ViewSet, params: &HogParams) -> Result<Vec<FeatureVector>, HogError> {
    let out: Vec<FeatureVector> = views
        .images
        .par_iter()
        .map(|img| describe(img, params))
        .collect::<Result<_, _>>()?;
    debug_assert_eq!(out.len(), VIEW_COUNT);
    Ok(out)
}
