//! Full-reference similarity measures between a generated sketch and a
//! reference sketch: PSNR, MS-SSIM, information entropy, VIF, MSE and UQI.

mod ssim;
mod uqi;
mod vif;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::image::{GrayImage, ImageError};

pub use ssim::{ms_ssim, MS_SSIM_MIN_SIZE};
pub use uqi::uqi;
pub use vif::{vif, VIF_MIN_SIZE};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    DimensionMismatch(#[from] ImageError),
    #[error("image {width}x{height} is smaller than the {min}x{min} minimum for {metric}")]
    ImageTooSmall {
        metric: &'static str,
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("no reference sketch for: {}", .0.join(", "))]
    MissingReference(Vec<String>),
    #[error("nothing to compare")]
    Empty,
}

pub(crate) fn require_size(
    metric: &'static str,
    img: &GrayImage,
    min: usize,
) -> Result<(), MetricsError> {
    if img.width() < min || img.height() < min {
        return Err(MetricsError::ImageTooSmall {
            metric,
            width: img.width(),
            height: img.height(),
            min,
        });
    }
    Ok(())
}

pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64, MetricsError> {
    a.ensure_same_size(b)?;
    let sum: u64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / a.pixels().len() as f64)
}

/// PSNR in dB for 8-bit peak 255 given an MSE; `+∞` when `mse == 0`.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64, MetricsError> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn histogram(img: &GrayImage) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &p in img.pixels() {
        h[p as usize] += 1;
    }
    h
}

/// Shannon entropy of the 256-bin intensity histogram, in bits.
pub fn entropy(img: &GrayImage) -> f64 {
    let n = img.pixels().len() as f64;
    let e: f64 = histogram(img)
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    // a single occupied bin yields -0.0
    e.max(0.0)
}

/// One row of a similarity table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub psnr: f64,
    pub ms_ssim: f64,
    /// Entropy of the generated sketch.
    pub ie: f64,
    pub vif: f64,
    pub mse: f64,
    pub uqi: f64,
    pub conversion_time: f64,
}

/// All six measures for one (generated, reference) pair.
pub fn compare_pair(
    generated: &GrayImage,
    reference: &GrayImage,
) -> Result<MetricReport, MetricsError> {
    let mse = mse(generated, reference)?;
    Ok(MetricReport {
        psnr: psnr_from_mse(mse),
        ms_ssim: ms_ssim(generated, reference)?,
        ie: entropy(generated),
        vif: vif(reference, generated)?,
        mse,
        uqi: uqi(generated, reference)?,
        conversion_time: 0.0,
    })
}

/// Sketches produced by one generation method, keyed by model id.
#[derive(Debug, Clone, Default)]
pub struct MethodSketches {
    pub method: String,
    pub sketches: BTreeMap<String, GrayImage>,
    /// Per-model conversion seconds; missing entries are treated as unknown
    /// and left out of the mean.
    pub conversion_times: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    /// Arithmetic means over all pairs, except PSNR which skips identical
    /// pairs (`+∞` when every pair is identical).
    pub mean: MetricReport,
    pub pairs: usize,
    pub identical_pairs: usize,
}

/// Averages every measure over all model pairs of each method.
pub fn compare_corpus(
    methods: &[MethodSketches],
    reference: &BTreeMap<String, GrayImage>,
) -> Result<Vec<MethodSummary>, MetricsError> {
    if methods.is_empty() || methods.iter().all(|m| m.sketches.is_empty()) {
        return Err(MetricsError::Empty);
    }
    let mut missing: Vec<String> = methods
        .iter()
        .flat_map(|m| m.sketches.keys())
        .filter(|id| !reference.contains_key(*id))
        .cloned()
        .collect();
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(MetricsError::MissingReference(missing));
    }

    methods
        .iter()
        .map(|m| {
            let pairs: Vec<(&String, &GrayImage)> = m.sketches.iter().collect();
            let reports: Vec<MetricReport> = pairs
                .par_iter()
                .map(|(id, img)| compare_pair(img, &reference[*id]))
                .collect::<Result<_, _>>()?;
            Ok(summarize(m, &reports))
        })
        .collect()
}

fn summarize(m: &MethodSketches, reports: &[MetricReport]) -> MethodSummary {
    let n = reports.len() as f64;
    let mean_of = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let finite: Vec<f64> = reports
        .iter()
        .map(|r| r.psnr)
        .filter(|p| p.is_finite())
        .collect();
    let identical = reports.len() - finite.len();
    let psnr = if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    let times: Vec<f64> = m
        .sketches
        .keys()
        .filter_map(|id| m.conversion_times.get(id).copied())
        .collect();
    let conversion_time = if times.is_empty() {
        0.0
    } else {
        times.iter().sum::<f64>() / times.len() as f64
    };
    MethodSummary {
        method: m.method.clone(),
        mean: MetricReport {
            psnr,
            ms_ssim: mean_of(|r| r.ms_ssim),
            ie: mean_of(|r| r.ie),
            vif: mean_of(|r| r.vif),
            mse: mean_of(|r| r.mse),
            uqi: mean_of(|r| r.uqi),
            conversion_time,
        },
        pairs: reports.len(),
        identical_pairs: identical,
    }
}

pub const SIMILARITY_CSV_HEADER: &str =
    "Sketch-generation method,PSNR,MS-SSIM,IE,VIF,MSE,UQI,Conversion time (Per image in sec)";

fn fmt4(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_owned()
    } else {
        format!("{v:.4}")
    }
}

/// One row per method; columns follow `SIMILARITY_CSV_HEADER`.
pub fn similarity_csv(rows: &[MethodSummary]) -> String {
    let mut out = String::from(SIMILARITY_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let m = &r.mean;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method,
            fmt4(m.psnr),
            fmt4(m.ms_ssim),
            fmt4(m.ie),
            fmt4(m.vif),
            fmt4(m.mse),
            fmt4(m.uqi),
            fmt4(m.conversion_time),
        );
    }
    out
}

/// Gaussian taps normalized to sum 1.
pub(crate) fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size as f64 - 1.0) / 2.0;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Row-major f64 plane.
#[derive(Debug, Clone)]
pub(crate) struct Plane {
    pub w: usize,
    pub h: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            w: img.width(),
            h: img.height(),
            data: img.pixels().iter().map(|&p| p as f64).collect(),
        }
    }

    pub fn zip_map(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        Plane {
            w: self.w,
            h: self.h,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Separable correlation keeping only fully covered positions.
    pub fn filter_valid(&self, taps: &[f64]) -> Plane {
        let k = taps.len();
        let ow = self.w + 1 - k;
        let oh = self.h + 1 - k;
        let mut tmp = vec![0.0; ow * self.h];
        for y in 0..self.h {
            let row = &self.data[y * self.w..(y + 1) * self.w];
            for x in 0..ow {
                tmp[y * ow + x] = taps.iter().zip(&row[x..x + k]).map(|(t, v)| t * v).sum();
            }
        }
        let mut out = vec![0.0; ow * oh];
        for y in 0..oh {
            for (t, &tv) in taps.iter().enumerate() {
                let src = &tmp[(y + t) * ow..(y + t + 1) * ow];
                for (o, s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                    *o += tv * s;
                }
            }
        }
        Plane {
            w: ow,
            h: oh,
            data: out,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mse_cases() {
        let a = GrayImage::filled(4, 4, 0);
        let b = GrayImage::filled(4, 4, 255);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &b).unwrap(), 65025.0);
        let half = GrayImage::from_fn(4, 4, |x, _| if x < 2 { 10 } else { 0 });
        assert_eq!(mse(&a, &half).unwrap(), 50.0);
        assert!(mse(&a, &GrayImage::filled(3, 4, 0)).is_err());
    }

    #[test]
    fn psnr_cases() {
        assert!((psnr_from_mse(209.4152) - 24.9429).abs() < 0.05);
        assert!((psnr_from_mse(1010.96) - 18.0834).abs() < 0.05);
        let a = GrayImage::filled(4, 4, 9);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn entropy_cases() {
        assert_eq!(entropy(&GrayImage::filled(5, 5, 3)), 0.0);
        let uniform = GrayImage::from_fn(256, 256, |x, _| x as u8);
        assert_eq!(entropy(&uniform), 8.0);
        let two = GrayImage::from_fn(4, 4, |x, _| if x < 2 { 0 } else { 255 });
        assert_eq!(entropy(&two), 1.0);
    }

    #[test]
    fn symmetric_metrics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = GrayImage::from_fn(180, 180, |_, _| rng.gen());
        let b = GrayImage::from_fn(180, 180, |_, _| rng.gen());
        assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
        assert!((uqi(&a, &b).unwrap() - uqi(&b, &a).unwrap()).abs() < 1e-12);
        assert!((ms_ssim(&a, &b).unwrap() - ms_ssim(&b, &a).unwrap()).abs() < 1e-12);
    }

    fn pair(v: u8) -> GrayImage {
        GrayImage::from_fn(180, 180, |x, y| {
            v.wrapping_add(((x * 3 + y * 5) % 64) as u8)
        })
    }

    #[test]
    fn corpus_means_and_identical_exclusion() {
        let mut reference = BTreeMap::new();
        reference.insert("a".to_owned(), pair(0));
        reference.insert("b".to_owned(), pair(0));
        let mut gen = MethodSketches {
            method: "m".into(),
            ..Default::default()
        };
        gen.sketches.insert("a".into(), pair(0));
        gen.sketches
            .insert("b".into(), pair(0).map(|p| p.saturating_add(10)));
        let rows = compare_corpus(&[gen], &reference).unwrap();
        assert_eq!(rows[0].identical_pairs, 1);
        assert_eq!(rows[0].pairs, 2);
        let b_psnr = psnr(&pair(0).map(|p| p.saturating_add(10)), &pair(0)).unwrap();
        assert_eq!(rows[0].mean.psnr, b_psnr);
        assert_eq!(rows[0].mean.mse, 50.0);
    }

    #[test]
    fn corpus_identical_everywhere() {
        let mut reference = BTreeMap::new();
        let mut gen = MethodSketches {
            method: "same".into(),
            ..Default::default()
        };
        for id in ["x", "y"] {
            reference.insert(id.to_owned(), pair(7));
            gen.sketches.insert(id.to_owned(), pair(7));
        }
        let rows = compare_corpus(&[gen], &reference).unwrap();
        assert_eq!(rows[0].mean.mse, 0.0);
        assert_eq!(rows[0].mean.uqi, 1.0);
        assert!(rows[0].mean.psnr.is_infinite());
        let csv = similarity_csv(&rows);
        assert!(csv.starts_with(SIMILARITY_CSV_HEADER));
        assert!(csv.lines().nth(1).unwrap().starts_with("same,inf,1.0000"));
    }

    #[test]
    fn corpus_mean_of_two_mses() {
        let base = pair(0);
        let mut reference = BTreeMap::new();
        reference.insert("p".to_owned(), base.clone());
        reference.insert("q".to_owned(), base.clone());
        let mut gen = MethodSketches {
            method: "m".into(),
            ..Default::default()
        };
        // diffs of 10 everywhere -> 100; diffs 10/20/20 in every 3 columns -> 300
        gen.sketches.insert("p".into(), base.map(|v| v + 10));
        gen.sketches.insert(
            "q".into(),
            GrayImage::from_fn(180, 180, |x, y| {
                base.get(x, y) + if x % 3 == 0 { 10 } else { 20 }
            }),
        );
        let rows = compare_corpus(&[gen], &reference).unwrap();
        assert_eq!(rows[0].mean.mse, 200.0);
    }

    #[test]
    fn missing_reference_lists_ids() {
        let reference = BTreeMap::new();
        let mut gen = MethodSketches {
            method: "m".into(),
            ..Default::default()
        };
        gen.sketches.insert("zz".into(), pair(0));
        match compare_corpus(&[gen], &reference) {
            Err(MetricsError::MissingReference(ids)) => assert_eq!(ids, vec!["zz"]),
            other => panic!("unexpected {other:?}"),
        }
    }
}
