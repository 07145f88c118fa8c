use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

mod commands;
mod config;

use config::{Config, CONFIG_FILE, KEYS};

/// Exit status 0 on success, 1 when the data or a model failed, 2 on bad
/// usage. Progress goes to stderr, results to stdout.
#[derive(Debug, Parser)]
#[command(name = "cadsketch", version, about = "Render CAD meshes, synthesize sketches and retrieve models by sketch", after_help = KEYS)]
struct Cli {
    /// Config file of key = value lines [default: ./cadsketch.conf when present]
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads, 0 = one per core [default: 0]
    #[arg(long, global = true, env = "CADSKETCH_WORKERS", value_name = "N")]
    workers: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct RenderFlags {
    /// Rendered view size in pixels [default: 256]
    #[arg(long, value_name = "PX")]
    size: Option<String>,
    /// Representative view: max-silhouette, max-entropy or manual:N [default: max-silhouette]
    #[arg(long)]
    policy: Option<String>,
}

#[derive(Debug, Args, Default)]
struct SketchFlags {
    /// Edge operator: canny, sobel, scharr, prewitt or roberts [default: canny]
    #[arg(long)]
    operator: Option<String>,
    /// Weight of the shading layer in the blend [default: 0.15]
    #[arg(long, value_name = "W")]
    w: Option<String>,
    /// Non-maximum suppression, true or false [default: true]
    #[arg(long, value_name = "BOOL")]
    nms: Option<String>,
    /// Canny low threshold [default: 50]
    #[arg(long)]
    low: Option<String>,
    /// Canny high threshold, or the single threshold of other operators [default: 150]
    #[arg(long)]
    high: Option<String>,
    /// Odd Gaussian kernel size of the dodge blur [default: 21]
    #[arg(long)]
    kernel: Option<String>,
    /// Gaussian sigma of the dodge blur [default: 6]
    #[arg(long)]
    sigma: Option<String>,
    /// Dodge binarization threshold [default: 245]
    #[arg(long)]
    threshold: Option<String>,
    /// Dodge numerator scale [default: 256]
    #[arg(long, value_name = "SCALE")]
    dodge_scale: Option<String>,
}

#[derive(Debug, Args, Default)]
struct HogFlags {
    /// HOG pixels per cell, WxH [default: 8x8]
    #[arg(long, value_name = "WxH")]
    hog_cell: Option<String>,
    /// HOG cells per block, WxH [default: 1x1]
    #[arg(long, value_name = "WxH")]
    hog_block: Option<String>,
    /// HOG orientation bins [default: 8]
    #[arg(long, value_name = "N")]
    orientations: Option<String>,
    /// HOG block normalization, l2 or l2hys [default: l2]
    #[arg(long, value_name = "NORM")]
    block_norm: Option<String>,
    /// Signed 0..360 degree orientations, true or false [default: false]
    #[arg(long, value_name = "BOOL")]
    signed: Option<String>,
    /// Resize before HOG, WxH or none [default: 256x256]
    #[arg(long, value_name = "WxH")]
    hog_resize: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the 20 views and representative of one mesh or of a corpus
    Render {
        /// Mesh file (.obj, .off, .stl) or corpus directory
        input: PathBuf,
        /// Output directory
        #[arg(short, long)]
        output: PathBuf,
        /// Corpus layout: class-folders or manifest-file [default: class-folders]
        #[arg(long, default_value = "class-folders", hide_default_value = true)]
        layout: String,
        #[command(flatten)]
        render: RenderFlags,
    },
    /// Turn a rendered view (or every PNG in a directory) into a sketch
    Sketch {
        /// PNG image or directory of PNGs
        input: PathBuf,
        /// Output file (single image) or directory [default: <stem>_sketch.png next to the input]
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        sketch: SketchFlags,
    },
    /// Score generated sketches against reference sketches with matching names
    Compare {
        /// Directory of generated PNGs, or of one subdirectory per method
        generated: PathBuf,
        /// Directory of reference PNGs
        reference: PathBuf,
        /// Method label when GENERATED holds a single method [default: directory name]
        #[arg(long)]
        method: Option<String>,
        /// Write the CSV here instead of stdout
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Extract HOG descriptors of every view in a dataset manifest
    Index {
        /// Dataset manifest (manifest.jsonl)
        #[arg(long)]
        manifest: PathBuf,
        /// Feature store to write
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        hog: HogFlags,
    },
    /// Rank indexed models against a sketch
    Query {
        /// Query sketch PNG
        sketch: PathBuf,
        /// Feature store written by `index`
        #[arg(long)]
        index: PathBuf,
        /// Results to print [default: 10]
        #[arg(short, default_value_t = 10, hide_default_value = true)]
        k: usize,
        /// Per-model score over its views: min or mean [default: min]
        #[arg(long, default_value = "min", hide_default_value = true)]
        aggregation: String,
        #[command(flatten)]
        hog: HogFlags,
    },
    /// Query every dataset sketch and report per-class retrieval metrics
    Evaluate {
        /// Dataset manifest (manifest.jsonl)
        #[arg(long)]
        manifest: PathBuf,
        /// Feature store to use [default: built from the manifest]
        #[arg(long)]
        index: Option<PathBuf>,
        /// Cutoff for precision, recall and accuracy [default: 10]
        #[arg(short, default_value_t = 10, hide_default_value = true)]
        k: usize,
        /// Queries to run: all, train or test [default: all]
        #[arg(long, default_value = "all", hide_default_value = true)]
        split: String,
        /// Per-model score over its views: min or mean [default: min]
        #[arg(long, default_value = "min", hide_default_value = true)]
        aggregation: String,
        /// Write the CSV here instead of stdout
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        hog: HogFlags,
    },
    /// Build views, sketches, splits, timing.csv and manifest.jsonl for a corpus
    DatasetBuild {
        /// Corpus directory
        corpus: PathBuf,
        /// Output directory
        #[arg(short, long)]
        output: PathBuf,
        /// Split seed, required here or as `seed` in the config file
        #[arg(long)]
        seed: Option<String>,
        /// Corpus layout: class-folders or manifest-file [default: class-folders]
        #[arg(long, default_value = "class-folders", hide_default_value = true)]
        layout: String,
        #[command(flatten)]
        render: RenderFlags,
        #[command(flatten)]
        sketch: SketchFlags,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

pub fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

impl RenderFlags {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![("render_size", &self.size), ("policy", &self.policy)]
    }
}

impl SketchFlags {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("operator", &self.operator),
            ("blend_weight", &self.w),
            ("nms", &self.nms),
            ("canny_low", &self.low),
            ("canny_high", &self.high),
            ("gaussian_kernel", &self.kernel),
            ("gaussian_sigma", &self.sigma),
            ("binary_threshold", &self.threshold),
            ("dodge_scale", &self.dodge_scale),
        ]
    }
}

impl HogFlags {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("hog_cell", &self.hog_cell),
            ("hog_block", &self.hog_block),
            ("hog_orientations", &self.orientations),
            ("hog_block_norm", &self.block_norm),
            ("hog_signed", &self.signed),
            ("hog_resize", &self.hog_resize),
        ]
    }
}

impl Command {
    fn overrides(&self) -> Vec<(&'static str, &Option<String>)> {
        match self {
            Command::Render { render, .. } => render.pairs(),
            Command::Sketch { sketch, .. } => sketch.pairs(),
            Command::Compare { .. } => Vec::new(),
            Command::Index { hog, .. }
            | Command::Query { hog, .. }
            | Command::Evaluate { hog, .. } => hog.pairs(),
            Command::DatasetBuild {
                seed,
                render,
                sketch,
                ..
            } => {
                let mut v = render.pairs();
                v.extend(sketch.pairs());
                v.push(("seed", seed));
                v
            }
        }
    }
}

fn load_config(cli: &Cli) -> CliResult<Config> {
    let mut cfg = Config::default();
    match &cli.config {
        Some(path) => cfg.apply_file(path).map_err(usage)?,
        None => {
            let local = PathBuf::from(CONFIG_FILE);
            if local.is_file() {
                cfg.apply_file(&local).map_err(usage)?;
            }
        }
    }
    let mut flags = cli.command.overrides();
    flags.push(("workers", &cli.workers));
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v).map_err(usage)?;
        }
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult {
    let cfg = load_config(&cli)?;
    if let Some(n) = cfg.workers() {
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match cli.command {
        Command::Render {
            input,
            output,
            layout,
            ..
        } => commands::render(&cfg, &input, &output, &layout),
        Command::Sketch { input, output, .. } => commands::sketch(&cfg, &input, output.as_deref()),
        Command::Compare {
            generated,
            reference,
            method,
            output,
        } => commands::compare(&generated, &reference, method.as_deref(), output.as_deref()),
        Command::Index {
            manifest, output, ..
        } => commands::index(&cfg, &manifest, &output),
        Command::Query {
            sketch,
            index,
            k,
            aggregation,
            ..
        } => commands::query(&cfg, &sketch, &index, k, &aggregation),
        Command::Evaluate {
            manifest,
            index,
            k,
            split,
            aggregation,
            output,
            ..
        } => commands::evaluate(
            &cfg,
            &manifest,
            index.as_deref(),
            k,
            &split,
            &aggregation,
            output.as_deref(),
        ),
        Command::DatasetBuild {
            corpus,
            output,
            layout,
            ..
        } => commands::dataset_build(&cfg, &corpus, &output, &layout),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
