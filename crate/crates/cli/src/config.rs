//! Run configuration: built-in defaults, then `cadsketch.conf`, then the
//! `CADSKETCH_WORKERS` environment variable, then command-line flags.

use std::path::Path;

use cadsketch::hog_features::HogParams;
use cadsketch::sketch_gen::SketchParams;
use cadsketch::view_render::{RepresentativePolicy, DEFAULT_RENDER_SIZE};

pub const CONFIG_FILE: &str = "cadsketch.conf";

/// Every recognized key with its default, as shown by `--help`.
pub const KEYS: &str = "\
Config keys (cadsketch.conf, key = value, '#' starts a comment):
  gaussian_kernel   dodge blur kernel size, odd                  21
  gaussian_sigma    dodge blur sigma                             6
  dodge_scale       dodge numerator scale                        256
  binary_threshold  dodge binarization threshold (p > t -> 255)  245
  canny_low         Canny low threshold                          50
  canny_high        Canny high threshold / single threshold      150
  operator          canny | sobel | scharr | prewitt | roberts   canny
  nms               non-maximum suppression (true/false)         true
  blend_weight      weight of the shading layer                  0.15
  render_size       rendered view size in pixels                 256
  policy            max-silhouette | max-entropy | manual:N      max-silhouette
  workers           worker threads (0 = one per core)            0
  seed              split seed (required by dataset-build)       unset
  hog_cell          HOG pixels per cell, WxH                     8x8
  hog_block         HOG cells per block, WxH                     1x1
  hog_orientations  HOG orientation bins                         8
  hog_block_norm    l2 | l2hys                                   l2
  hog_signed        0..360 degree orientations (true/false)      false
  hog_resize        resize before HOG, WxH or none               256x256";

#[derive(Debug, Clone)]
pub struct Config {
    pub sketch: SketchParams,
    pub hog: HogParams,
    /// Set once any `hog_*` key was given explicitly.
    pub hog_explicit: bool,
    pub render_size: usize,
    pub policy: RepresentativePolicy,
    pub workers: usize,
    pub seed: Option<u64>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            sketch: SketchParams::default(),
            hog: HogParams::default(),
            hog_explicit: false,
            render_size: DEFAULT_RENDER_SIZE,
            policy: RepresentativePolicy::default(),
            workers: 0,
            seed: None,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse()
        .map_err(|_| format!("{key}: cannot parse {v:?} as a number"))
}

fn boolean(key: &str, v: &str) -> Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("{key}: expected true or false, got {v:?}")),
    }
}

fn pair(key: &str, v: &str) -> Result<(usize, usize), String> {
    let (a, b) = v
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("{key}: expected WxH, got {v:?}"))?;
    Ok((num(key, a.trim())?, num(key, b.trim())?))
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        let s = &mut self.sketch;
        match key {
            "gaussian_kernel" => s.gaussian_kernel = num(key, v)?,
            "gaussian_sigma" => s.gaussian_sigma = num(key, v)?,
            "dodge_scale" => s.dodge_scale = num(key, v)?,
            "binary_threshold" => s.binary_threshold = num(key, v)?,
            "canny_low" => s.canny_low = num(key, v)?,
            "canny_high" => s.canny_high = num(key, v)?,
            "operator" => s.operator = v.parse()?,
            "nms" => s.nms_enabled = boolean(key, v)?,
            "blend_weight" => s.blend_weight_o1 = num(key, v)?,
            "render_size" => self.render_size = num(key, v)?,
            "policy" => self.policy = v.parse()?,
            "workers" => self.workers = num(key, v)?,
            "seed" => self.seed = Some(num(key, v)?),
            k if k.starts_with("hog_") => {
                let h = &mut self.hog;
                match k {
                    "hog_cell" => h.pixels_per_cell = pair(key, v)?,
                    "hog_block" => h.cells_per_block = pair(key, v)?,
                    "hog_orientations" => h.orientations = num(key, v)?,
                    "hog_block_norm" => h.block_norm = v.parse()?,
                    "hog_signed" => h.signed = boolean(key, v)?,
                    "hog_resize" if v.eq_ignore_ascii_case("none") => h.resize_to = None,
                    "hog_resize" => h.resize_to = Some(pair(key, v)?),
                    _ => return Err(format!("unknown config key {key:?}")),
                }
                self.hog_explicit = true;
            }
            _ => return Err(format!("unknown config key {key:?}")),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), String> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("{origin}:{}: expected key = value", i + 1))?;
            self.set(k.trim(), v)
                .map_err(|e| format!("{origin}:{}: {e}", i + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), String> {
        self.sketch.validate().map_err(|e| e.to_string())?;
        self.hog.validate().map_err(|e| e.to_string())?;
        if self.render_size == 0 {
            return Err("render_size must be positive".into());
        }
        Ok(())
    }

    pub fn workers(&self) -> Option<usize> {
        (self.workers > 0).then_some(self.workers)
    }
}
