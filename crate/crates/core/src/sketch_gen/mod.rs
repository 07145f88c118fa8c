//! Weighted edge/dodge sketch synthesis from a rendered view.
//!
//! The sketch blends two layers:
//!
//! * a pencil-shading layer: the grayscale image is color-dodged by the
//!   Gaussian blur of its own inversion, then binarized;
//! * an edge layer: a Canny map (or a thresholded gradient magnitude for the
//!   Sobel, Scharr, Prewitt and Roberts variants), inverted so strokes are
//!   dark on white.
//!
//! `S = round(w · shading + (1 − w) · edges)`. Both layers and the result are
//! dark strokes on a white background.

mod edges;
mod filters;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{GrayImage, ImageError};

pub use edges::{canny, edge_gradient, threshold_magnitude, EdgeOperator, GradientField};
pub(crate) use filters::reflect;
pub use filters::{
    binary_threshold, dodge_divide, gaussian_blur, gaussian_blur_f32, gaussian_kernel, invert,
    FloatImage,
};

#[derive(Debug, Error)]
pub enum SketchError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("image {width}x{height} is smaller than the {min}x{min} minimum")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Every tunable of the sketch generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchParams {
    /// Odd Gaussian kernel size for the dodge blur.
    pub gaussian_kernel: usize,
    pub gaussian_sigma: f64,
    pub dodge_scale: f64,
    /// Binarization threshold of the dodged image.
    pub binary_threshold: u8,
    pub canny_low: f32,
    /// Also the single threshold of the non-Canny operators.
    pub canny_high: f32,
    pub operator: EdgeOperator,
    pub nms_enabled: bool,
    /// Weight of the shading layer; the edge layer gets `1 − w`.
    pub blend_weight_o1: f64,
}

impl Default for SketchParams {
    fn default() -> Self {
        Self {
            gaussian_kernel: 21,
            gaussian_sigma: 6.0,
            dodge_scale: 256.0,
            binary_threshold: 245,
            canny_low: 50.0,
            canny_high: 150.0,
            operator: EdgeOperator::Canny,
            nms_enabled: true,
            blend_weight_o1: 0.15,
        }
    }
}

impl SketchParams {
    pub fn validate(&self) -> Result<(), SketchError> {
        let k = self.gaussian_kernel;
        if k < 3 || k.is_multiple_of(2) {
            return Err(SketchError::InvalidParams(format!(
                "gaussian_kernel must be odd and >= 3, got {k}"
            )));
        }
        if !(self.gaussian_sigma > 0.0) || !self.gaussian_sigma.is_finite() {
            return Err(SketchError::InvalidParams(format!(
                "gaussian_sigma must be positive, got {}",
                self.gaussian_sigma
            )));
        }
        if !(self.dodge_scale > 0.0) || !self.dodge_scale.is_finite() {
            return Err(SketchError::InvalidParams(
                "dodge_scale must be positive".into(),
            ));
        }
        if !(0.0 <= self.canny_low
            && self.canny_low <= self.canny_high
            && self.canny_high <= 1020.0)
        {
            return Err(SketchError::InvalidParams(format!(
                "need 0 <= canny_low <= canny_high <= 1020, got {} / {}",
                self.canny_low, self.canny_high
            )));
        }
        if !(0.0..=1.0).contains(&self.blend_weight_o1) {
            return Err(SketchError::InvalidParams(format!(
                "blend weight must lie in [0, 1], got {}",
                self.blend_weight_o1
            )));
        }
        Ok(())
    }

    /// Short method label as used in comparison tables, e.g.
    /// `weighted-canny`, `weighted-sobel`, `plain-canny`.
    pub fn method_label(&self) -> String {
        if self.operator == EdgeOperator::Canny && self.blend_weight_o1 == 0.0 {
            if self.nms_enabled {
                "plain-canny".into()
            } else {
                "plain-canny-no-nms".into()
            }
        } else {
            format!("weighted-{}", self.operator)
        }
    }
}

/// The two layers that get blended, both dark-on-white.
#[derive(Debug, Clone)]
pub struct SketchLayers {
    pub shading: GrayImage,
    pub edges: GrayImage,
}

pub fn sketch_layers(img: &GrayImage, params: &SketchParams) -> Result<SketchLayers, SketchError> {
    params.validate()?;
    let blurred_inverse =
        gaussian_blur(&invert(img), params.gaussian_kernel, params.gaussian_sigma)?;
    let dodged = dodge_divide(img, &blurred_inverse, params.dodge_scale)?;
    let shading = binary_threshold(&dodged, params.binary_threshold);

    let edge_map = match params.operator {
        EdgeOperator::Canny => canny(img, params.canny_low, params.canny_high, params.nms_enabled)?,
        op => threshold_magnitude(&edge_gradient(img, op)?, params.canny_high),
    };
    Ok(SketchLayers {
        shading,
        edges: invert(&edge_map),
    })
}

/// Per-pixel `round(w · a + (1 − w) · b)`.
pub fn blend(a: &GrayImage, b: &GrayImage, w: f64) -> Result<GrayImage, SketchError> {
    a.ensure_same_size(b)?;
    let pixels = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&p, &q)| {
            (w * p as f64 + (1.0 - w) * q as f64)
                .round()
                .clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok(GrayImage::new(a.width(), a.height(), pixels)?)
}

pub fn generate_sketch(img: &GrayImage, params: &SketchParams) -> Result<GrayImage, SketchError> {
    let layers = sketch_layers(img, params)?;
    blend(&layers.shading, &layers.edges, params.blend_weight_o1)
}
