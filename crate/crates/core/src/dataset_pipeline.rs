//! Corpus scanning and end-to-end dataset construction.
//!
//! Output layout under `out/`:
//!
//! ```text
//! <class>/<model_id>_view00.png .. _view19.png
//! <class>/<model_id>_repr.png
//! <class>/<model_id>_sketch.png
//! manifest.jsonl
//! timing.csv
//! ```
//!
//! The manifest is JSON Lines: a header object followed by one entry per
//! model in corpus order. Paths of generated artifacts are relative to the
//! manifest's directory, so two builds of the same corpus produce the same
//! bytes wherever they are written.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::GrayImage;
use crate::mesh_io::{normalize_mesh, read_mesh};
use crate::sketch_gen::{generate_sketch, SketchParams};
use crate::view_render::{
    render_all_views, repr_file_name, view_file_name, RepresentativePolicy, DEFAULT_RENDER_SIZE,
    VIEW_COUNT,
};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const TIMING_FILE: &str = "timing.csv";
pub const CORPUS_FILE: &str = "corpus.csv";
const MANIFEST_FORMAT: &str = "cadsketch-manifest";
const MANIFEST_VERSION: u32 = 1;
const MESH_EXTENSIONS: [&str; 3] = ["obj", "off", "stl"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no meshes found under {0}")]
    EmptyCorpus(PathBuf),
    #[error("duplicate model id {model_id:?}: {first} and {second}")]
    DuplicateModelId {
        model_id: String,
        first: PathBuf,
        second: PathBuf,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot start worker pool: {0}")]
    WorkerPool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusLayout {
    /// `root/<class>/<model>.{obj,off,stl}`.
    ClassFolders,
    /// A `model_id,class,mesh_path` CSV: either `root` itself or
    /// `root/corpus.csv`. Relative mesh paths resolve against the CSV's
    /// directory.
    ManifestFile,
}

impl std::str::FromStr for CorpusLayout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "class-folders" => Ok(Self::ClassFolders),
            "manifest-file" => Ok(Self::ManifestFile),
            _ => Err(format!(
                "unknown corpus layout {s:?} (class-folders, manifest-file)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub model_id: String,
    pub class: String,
    pub mesh_path: PathBuf,
}

/// Lists the corpus in deterministic order (class, then model id for class
/// folders; file order for a CSV). Model ids must be unique corpus-wide.
pub fn scan_corpus(root: &Path, layout: CorpusLayout) -> Result<Vec<CorpusEntry>, DatasetError> {
    let entries = match layout {
        CorpusLayout::ClassFolders => scan_class_folders(root)?,
        CorpusLayout::ManifestFile => {
            let file = if root.is_dir() {
                root.join(CORPUS_FILE)
            } else {
                root.to_owned()
            };
            read_corpus_csv(&file)?
        }
    };
    if entries.is_empty() {
        return Err(DatasetError::EmptyCorpus(root.to_owned()));
    }
    let mut seen: HashMap<&str, &Path> = HashMap::new();
    for e in &entries {
        if let Some(first) = seen.insert(&e.model_id, &e.mesh_path) {
            return Err(DatasetError::DuplicateModelId {
                model_id: e.model_id.clone(),
                first: first.to_owned(),
                second: e.mesh_path.clone(),
            });
        }
    }
    Ok(entries)
}

fn sorted_dir(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut paths = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err(dir))?;
    paths.sort();
    Ok(paths)
}

fn is_mesh_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| MESH_EXTENSIONS.iter().any(|m| m.eq_ignore_ascii_case(e)))
}

fn scan_class_folders(root: &Path) -> Result<Vec<CorpusEntry>, DatasetError> {
    let mut out = Vec::new();
    for class_dir in sorted_dir(root)? {
        if !class_dir.is_dir() {
            continue;
        }
        let class = class_dir
            .file_name()
            .unwrap()
            .to_string_lossy()
            .into_owned();
        for file in sorted_dir(&class_dir)? {
            if !is_mesh_file(&file) {
                continue;
            }
            out.push(CorpusEntry {
                model_id: file.file_stem().unwrap().to_string_lossy().into_owned(),
                class: class.clone(),
                mesh_path: file,
            });
        }
    }
    Ok(out)
}

fn read_corpus_csv(file: &Path) -> Result<Vec<CorpusEntry>, DatasetError> {
    let text = std::fs::read_to_string(file).map_err(io_err(file))?;
    let base = file.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("model_id,")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [model_id, class, path] = fields[..] else {
            return Err(DatasetError::Parse {
                path: file.to_owned(),
                line: i + 1,
                message: format!(
                    "expected 3 fields (model_id,class,mesh_path), got {}",
                    fields.len()
                ),
            });
        };
        if model_id.is_empty() || class.is_empty() || path.is_empty() {
            return Err(DatasetError::Parse {
                path: file.to_owned(),
                line: i + 1,
                message: "empty field".into(),
            });
        }
        out.push(CorpusEntry {
            model_id: model_id.to_owned(),
            class: class.to_owned(),
            mesh_path: base.join(path),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Models of a class that go to the training split: `ceil(0.8 · n)`.
pub fn train_count(n: usize) -> usize {
    (4 * n).div_ceil(5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFailure {
    pub model_id: String,
    pub class: String,
    pub mesh_path: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub render_size: usize,
    pub representative_policy: String,
    pub sketch_params: SketchParams,
    pub failures: Vec<ModelFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub model_id: String,
    pub class: String,
    pub mesh_path: String,
    pub views: Vec<String>,
    pub representative: usize,
    pub sketch: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub entries: Vec<ManifestEntry>,
    /// Directory that relative artifact paths resolve against.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    /// Entry count per class.
    pub fn class_index(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for e in &self.entries {
            *m.entry(e.class.clone()).or_insert(0) += 1;
        }
        m
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        self.base_dir.join(path)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn write_atomic(&self, path: &Path) -> Result<(), DatasetError> {
        let tmp = path.with_extension("jsonl.tmp");
        let mut f = std::fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        drop(f);
        std::fs::rename(&tmp, path).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let parse_err = |line: usize, e: serde_json::Error| DatasetError::Parse {
            path: path.to_owned(),
            line,
            message: e.to_string(),
        };
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| DatasetError::Parse {
            path: path.to_owned(),
            line: 1,
            message: "empty manifest".into(),
        })?;
        let header: ManifestHeader = serde_json::from_str(first).map_err(|e| parse_err(1, e))?;
        if header.format != MANIFEST_FORMAT || header.version != MANIFEST_VERSION {
            return Err(DatasetError::Parse {
                path: path.to_owned(),
                line: 1,
                message: format!("unsupported manifest {} v{}", header.format, header.version),
            });
        }
        let entries = lines
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_err(i + 1, e)))
            .collect::<Result<Vec<ManifestEntry>, _>>()?;
        Ok(Self {
            header,
            entries,
            base_dir: path.parent().unwrap_or(Path::new(".")).to_owned(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassTiming {
    pub count: usize,
    pub mean_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub per_class: BTreeMap<String, ClassTiming>,
    /// Mean seconds per model over the whole corpus.
    pub overall_mean: f64,
}

impl TimingReport {
    fn from_samples(samples: &[(&str, f64)]) -> Self {
        let mut per_class: BTreeMap<String, ClassTiming> = BTreeMap::new();
        for &(class, secs) in samples {
            let t = per_class.entry(class.to_owned()).or_insert(ClassTiming {
                count: 0,
                mean_seconds: 0.0,
                total_seconds: 0.0,
            });
            t.count += 1;
            t.total_seconds += secs;
        }
        for t in per_class.values_mut() {
            t.mean_seconds = t.total_seconds / t.count as f64;
        }
        let total: f64 = samples.iter().map(|s| s.1).sum();
        Self {
            per_class,
            overall_mean: if samples.is_empty() {
                0.0
            } else {
                total / samples.len() as f64
            },
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,count,mean_seconds,total_seconds\n");
        let mut count = 0;
        let mut total = 0.0;
        for (class, t) in &self.per_class {
            out.push_str(&format!(
                "{class},{},{:.6},{:.6}\n",
                t.count, t.mean_seconds, t.total_seconds
            ));
            count += t.count;
            total += t.total_seconds;
        }
        out.push_str(&format!(
            "overall,{count},{:.6},{total:.6}\n",
            self.overall_mean
        ));
        out
    }
}

#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub sketch: SketchParams,
    pub render_size: usize,
    pub policy: RepresentativePolicy,
    pub seed: u64,
    /// Worker threads; `None` uses one per core.
    pub workers: Option<usize>,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            sketch: SketchParams::default(),
            render_size: DEFAULT_RENDER_SIZE,
            policy: RepresentativePolicy::default(),
            seed: 0,
            workers: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub manifest: DatasetManifest,
    pub timing: TimingReport,
}

impl BuildOutcome {
    pub fn failures(&self) -> &[ModelFailure] {
        &self.manifest.header.failures
    }
}

pub fn sketch_file_name(model_id: &str) -> String {
    format!("{model_id}_sketch.png")
}

fn absolute(path: &Path) -> String {
    std::fs::canonicalize(path)
        .unwrap_or_else(|_| path.to_owned())
        .to_string_lossy()
        .into_owned()
}

fn rel(class: &str, file: String) -> String {
    format!("{class}/{file}")
}

struct Built {
    representative: usize,
    seconds: f64,
}

fn build_model(entry: &CorpusEntry, out: &Path, cfg: &BuildConfig) -> Result<Built, String> {
    let start = Instant::now();
    let mesh = read_mesh(&entry.mesh_path).map_err(|e| e.to_string())?;
    let mesh = normalize_mesh(&mesh).map_err(|e| e.to_string())?;
    let views = render_all_views(&entry.model_id, &mesh, cfg.render_size, cfg.policy)
        .map_err(|e| e.to_string())?;
    let sketch = generate_sketch(views.representative(), &cfg.sketch).map_err(|e| e.to_string())?;
    let seconds = start.elapsed().as_secs_f64();

    let dir = out.join(&entry.class);
    views.save(&dir).map_err(|e| e.to_string())?;
    sketch
        .save_png(dir.join(sketch_file_name(&entry.model_id)))
        .map_err(|e| e.to_string())?;
    Ok(Built {
        representative: views.representative_index,
        seconds,
    })
}

/// Seeded stratified split: each class (in name order) is shuffled with one
/// shared RNG and its first `train_count(n)` models go to training.
fn assign_splits(entries: &mut [ManifestEntry], seed: u64) {
    let mut by_class: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        by_class.entry(e.class.clone()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        let train = train_count(members.len());
        for (rank, &i) in members.iter().enumerate() {
            entries[i].split = if rank < train {
                Split::Train
            } else {
                Split::Test
            };
        }
    }
}

/// Runs parse, normalize, render, representative selection and sketch
/// generation for every model, writes all artifacts, `timing.csv` and
/// finally `manifest.jsonl`.
///
/// A model that fails is recorded in the manifest header and skipped; the
/// rest of the corpus still gets built. Per-model time covers everything up
/// to the finished sketch, not the PNG writes.
pub fn build_dataset(
    corpus: &[CorpusEntry],
    out: &Path,
    cfg: &BuildConfig,
) -> Result<BuildOutcome, DatasetError> {
    if corpus.is_empty() {
        return Err(DatasetError::EmptyCorpus(out.to_owned()));
    }
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| DatasetError::WorkerPool(e.to_string()))?;
    let results: Vec<Result<Built, String>> = pool.install(|| {
        corpus
            .par_iter()
            .map(|e| build_model(e, out, cfg))
            .collect()
    });

    let mut entries = Vec::new();
    let mut failures = Vec::new();
    let mut samples = Vec::new();
    for (e, r) in corpus.iter().zip(results) {
        match r {
            Ok(b) => {
                samples.push((e.class.as_str(), b.seconds));
                entries.push(ManifestEntry {
                    model_id: e.model_id.clone(),
                    class: e.class.clone(),
                    mesh_path: absolute(&e.mesh_path),
                    views: (0..VIEW_COUNT)
                        .map(|i| rel(&e.class, view_file_name(&e.model_id, i)))
                        .collect(),
                    representative: b.representative,
                    sketch: rel(&e.class, sketch_file_name(&e.model_id)),
                    split: Split::Train,
                });
            }
            Err(error) => failures.push(ModelFailure {
                model_id: e.model_id.clone(),
                class: e.class.clone(),
                mesh_path: e.mesh_path.to_string_lossy().into_owned(),
                error,
            }),
        }
    }
    assign_splits(&mut entries, cfg.seed);

    let timing = TimingReport::from_samples(&samples);
    let timing_path = out.join(TIMING_FILE);
    std::fs::write(&timing_path, timing.to_csv()).map_err(io_err(&timing_path))?;

    let manifest = DatasetManifest {
        header: ManifestHeader {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            seed: cfg.seed,
            render_size: cfg.render_size,
            representative_policy: cfg.policy.to_string(),
            sketch_params: cfg.sketch,
            failures,
        },
        entries,
        base_dir: out.to_owned(),
    };
    manifest.write_atomic(&out.join(MANIFEST_FILE))?;
    Ok(BuildOutcome { manifest, timing })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MissingFile(PathBuf),
    DuplicateModelId(String),
    ViewCount {
        model_id: String,
        found: usize,
    },
    RepresentativeOutOfRange {
        model_id: String,
        index: usize,
    },
    Dimensions {
        path: PathBuf,
        width: u32,
        height: u32,
        expected: usize,
    },
    Unreadable {
        path: PathBuf,
        message: String,
    },
    SplitRatio {
        class: String,
        train: usize,
        total: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingFile(p) => write!(f, "missing file {}", p.display()),
            Violation::DuplicateModelId(id) => write!(f, "duplicate model id {id}"),
            Violation::ViewCount { model_id, found } => {
                write!(f, "{model_id}: {found} views, expected {VIEW_COUNT}")
            }
            Violation::RepresentativeOutOfRange { model_id, index } => {
                write!(f, "{model_id}: representative index {index} out of range")
            }
            Violation::Dimensions {
                path,
                width,
                height,
                expected,
            } => write!(
                f,
                "{}: {width}x{height}, expected {expected}x{expected}",
                path.display()
            ),
            Violation::Unreadable { path, message } => write!(f, "{}: {message}", path.display()),
            Violation::SplitRatio {
                class,
                train,
                total,
            } => write!(
                f,
                "class {class}: {train} of {total} models in train, expected {}",
                train_count(*total)
            ),
        }
    }
}

/// Checks file presence, image sizes, id uniqueness and per-class split
/// ratios. An empty list means the dataset is consistent.
pub fn validate_manifest(manifest: &DatasetManifest) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut ids = std::collections::HashSet::new();
    let expected = manifest.header.render_size;
    let check_image = |rel: &str, out: &mut Vec<Violation>| {
        let path = manifest.resolve(rel);
        if !path.is_file() {
            out.push(Violation::MissingFile(path));
            return;
        }
        match ::image::image_dimensions(&path) {
            Ok((w, h)) if w as usize == expected && h as usize == expected => {}
            Ok((width, height)) => out.push(Violation::Dimensions {
                path,
                width,
                height,
                expected,
            }),
            Err(e) => out.push(Violation::Unreadable {
                path,
                message: e.to_string(),
            }),
        }
    };
    let mut train_by_class: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for e in &manifest.entries {
        if !ids.insert(e.model_id.as_str()) {
            out.push(Violation::DuplicateModelId(e.model_id.clone()));
        }
        let mesh = manifest.resolve(&e.mesh_path);
        if !mesh.is_file() {
            out.push(Violation::MissingFile(mesh));
        }
        if e.views.len() != VIEW_COUNT {
            out.push(Violation::ViewCount {
                model_id: e.model_id.clone(),
                found: e.views.len(),
            });
        }
        if e.representative >= e.views.len().min(VIEW_COUNT) {
            out.push(Violation::RepresentativeOutOfRange {
                model_id: e.model_id.clone(),
                index: e.representative,
            });
        }
        for v in &e.views {
            check_image(v, &mut out);
        }
        let repr = rel(&e.class, repr_file_name(&e.model_id));
        check_image(&repr, &mut out);
        check_image(&e.sketch, &mut out);
        let t = train_by_class.entry(&e.class).or_insert((0, 0));
        t.1 += 1;
        if e.split == Split::Train {
            t.0 += 1;
        }
    }
    for (class, (train, total)) in train_by_class {
        // Either rounding direction counts as 80/20.
        if train != train_count(total) && train != 4 * total / 5 {
            out.push(Violation::SplitRatio {
                class: class.to_owned(),
                train,
                total,
            });
        }
    }
    out
}

/// Loads an entry's sketch image.
pub fn load_sketch(
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
) -> Result<GrayImage, crate::image::ImageError> {
    GrayImage::open(manifest.resolve(&entry.sketch))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_counts() {
        assert_eq!(train_count(10), 8);
        assert_eq!(train_count(1), 1);
        assert_eq!(train_count(5), 4);
        assert_eq!(train_count(3), 3);
        assert_eq!(train_count(0), 0);
        for n in 5..200 {
            let frac = train_count(n) as f64 / n as f64;
            assert!((frac - 0.8).abs() <= 1.0 / n as f64, "n = {n}");
        }
    }

    fn entry(id: &str, class: &str) -> ManifestEntry {
        ManifestEntry {
            model_id: id.into(),
            class: class.into(),
            mesh_path: String::new(),
            views: vec![],
            representative: 0,
            sketch: String::new(),
            split: Split::Test,
        }
    }

    #[test]
    fn split_is_stratified_and_seeded() {
        let mut a: Vec<_> = (0..10)
            .map(|i| entry(&format!("a{i}"), "a"))
            .chain((0..7).map(|i| entry(&format!("b{i}"), "b")))
            .collect();
        let mut b = a.clone();
        assign_splits(&mut a, 42);
        assign_splits(&mut b, 42);
        assert_eq!(a, b);
        let train = |es: &[ManifestEntry], c: &str| {
            es.iter()
                .filter(|e| e.class == c && e.split == Split::Train)
                .count()
        };
        assert_eq!(train(&a, "a"), 8);
        assert_eq!(train(&a, "b"), 6);

        let mut c = b.clone();
        assign_splits(&mut c, 43);
        let picks = |es: &[ManifestEntry]| es.iter().map(|e| e.split).collect::<Vec<_>>();
        assert_eq!(picks(&c).iter().filter(|s| **s == Split::Train).count(), 14);
        assert_ne!(picks(&c), picks(&b), "seed should matter for this corpus");
    }

    #[test]
    fn timing_csv_layout() {
        let t = TimingReport::from_samples(&[("b", 0.5), ("a", 0.25), ("b", 0.25)]);
        assert_eq!(
            t.to_csv(),
            "class,count,mean_seconds,total_seconds\n\
             a,1,0.250000,0.250000\n\
             b,2,0.375000,0.750000\n\
             overall,3,0.333333,1.000000\n"
        );
    }

    #[test]
    fn layouts_parse() {
        assert_eq!("class-folders".parse(), Ok(CorpusLayout::ClassFolders));
        assert!("folders".parse::<CorpusLayout>().is_err());
    }
}
