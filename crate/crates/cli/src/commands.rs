use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cadsketch::dataset_pipeline::{
    build_dataset, load_sketch, scan_corpus, BuildConfig, CorpusEntry, CorpusLayout,
    DatasetManifest, Split, MANIFEST_FILE,
};
use cadsketch::mesh_io::{normalize_mesh, read_mesh};
use cadsketch::quality_metrics::{compare_corpus, similarity_csv, MethodSketches, MetricsError};
use cadsketch::retrieval_engine::{
    build_index, eval_csv, evaluate as run_evaluation, query as run_query, Aggregation, EvalQuery,
    FeatureBag, RetrievalError, Truth,
};
use cadsketch::sketch_gen::generate_sketch;
use cadsketch::view_render::{render_all_views, ViewSet};
use cadsketch::GrayImage;
use rayon::prelude::*;

use crate::config::Config;
use crate::{failed, usage, CliError, CliResult};

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn sorted_dir(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| failed(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    paths.sort();
    Ok(paths)
}

fn pngs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    Ok(sorted_dir(dir)?
        .into_iter()
        .filter(|p| p.is_file() && is_png(p))
        .collect())
}

fn write_output(text: &str, output: Option<&Path>) -> CliResult {
    match output {
        Some(path) => {
            fs::write(path, text).map_err(|e| failed(format!("{}: {e}", path.display())))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn layout(name: &str) -> CliResult<CorpusLayout> {
    name.parse().map_err(usage)
}

fn aggregation(name: &str) -> CliResult<Aggregation> {
    name.parse().map_err(usage)
}

fn existing(path: &Path) -> CliResult {
    if path.exists() {
        Ok(())
    } else {
        Err(failed(format!(
            "{}: no such file or directory",
            path.display()
        )))
    }
}

fn render_mesh(cfg: &Config, model_id: &str, mesh: &Path, out: &Path) -> Result<ViewSet, String> {
    let mesh = read_mesh(mesh).map_err(|e| e.to_string())?;
    let mesh = normalize_mesh(&mesh).map_err(|e| e.to_string())?;
    let views = render_all_views(model_id, &mesh, cfg.render_size, cfg.policy)
        .map_err(|e| e.to_string())?;
    views.save(out).map_err(|e| e.to_string())?;
    Ok(views)
}

pub fn render(cfg: &Config, input: &Path, out: &Path, layout_name: &str) -> CliResult {
    existing(input)?;
    if input.is_file() {
        let id = stem(input);
        let views = render_mesh(cfg, &id, input, out)
            .map_err(|e| failed(format!("{}: {e}", input.display())))?;
        println!("{id},{}", views.representative_index);
        return Ok(());
    }
    let corpus = scan_corpus(input, layout(layout_name)?).map_err(failed)?;
    eprintln!("rendering {} models", corpus.len());
    let results: Vec<Result<usize, String>> = corpus
        .par_iter()
        .map(|e| {
            render_mesh(cfg, &e.model_id, &e.mesh_path, &out.join(&e.class))
                .map(|v| v.representative_index)
        })
        .collect();
    report_models(&corpus, results, |e, repr| {
        println!("{},{},{repr}", e.model_id, e.class)
    })
}

fn report_models<T>(
    corpus: &[CorpusEntry],
    results: Vec<Result<T, String>>,
    mut ok: impl FnMut(&CorpusEntry, T),
) -> CliResult {
    let mut failures = 0;
    for (e, r) in corpus.iter().zip(results) {
        match r {
            Ok(v) => ok(e, v),
            Err(msg) => {
                failures += 1;
                eprintln!("failed {} ({}): {msg}", e.model_id, e.mesh_path.display());
            }
        }
    }
    if failures > 0 {
        return Err(failed(format!(
            "{failures} of {} models failed",
            corpus.len()
        )));
    }
    Ok(())
}

fn sketch_one(cfg: &Config, input: &Path, output: &Path) -> CliResult {
    let img = GrayImage::open(input).map_err(failed)?;
    let start = Instant::now();
    let sketch = generate_sketch(&img, &cfg.sketch).map_err(failed)?;
    let seconds = start.elapsed().as_secs_f64();
    sketch.save_png(output).map_err(failed)?;
    println!("{},{seconds:.6}", output.display());
    Ok(())
}

fn default_sketch_path(input: &Path) -> PathBuf {
    input.with_file_name(format!("{}_sketch.png", stem(input)))
}

pub fn sketch(cfg: &Config, input: &Path, output: Option<&Path>) -> CliResult {
    existing(input)?;
    if input.is_file() {
        let out = output.map_or_else(|| default_sketch_path(input), Path::to_owned);
        return sketch_one(cfg, input, &out);
    }
    let images: Vec<PathBuf> = pngs(input)?
        .into_iter()
        .filter(|p| !stem(p).ends_with("_sketch"))
        .collect();
    if images.is_empty() {
        return Err(usage(format!("{}: no PNG images", input.display())));
    }
    if let Some(dir) = output {
        fs::create_dir_all(dir).map_err(|e| failed(format!("{}: {e}", dir.display())))?;
    }
    for path in images {
        let out = match output {
            Some(dir) => dir.join(format!("{}_sketch.png", stem(&path))),
            None => default_sketch_path(&path),
        };
        sketch_one(cfg, &path, &out)?;
    }
    Ok(())
}

/// PNGs keyed by file stem, with a trailing `_sketch` dropped so generated
/// and reference names line up.
fn load_named(dir: &Path) -> CliResult<BTreeMap<String, GrayImage>> {
    let mut out = BTreeMap::new();
    for p in pngs(dir)? {
        let name = stem(&p);
        let id = name.strip_suffix("_sketch").unwrap_or(&name).to_owned();
        out.insert(id, GrayImage::open(&p).map_err(failed)?);
    }
    Ok(out)
}

pub fn compare(
    generated: &Path,
    reference: &Path,
    method: Option<&str>,
    output: Option<&Path>,
) -> CliResult {
    existing(generated)?;
    existing(reference)?;
    let mut methods = Vec::new();
    let direct = load_named(generated)?;
    if direct.is_empty() {
        for sub in sorted_dir(generated)?.into_iter().filter(|p| p.is_dir()) {
            let sketches = load_named(&sub)?;
            if !sketches.is_empty() {
                methods.push(MethodSketches {
                    method: sub.file_name().unwrap().to_string_lossy().into_owned(),
                    sketches,
                    conversion_times: BTreeMap::new(),
                });
            }
        }
    } else {
        methods.push(MethodSketches {
            method: method.map_or_else(|| stem(generated), str::to_owned),
            sketches: direct,
            conversion_times: BTreeMap::new(),
        });
    }
    let refs = load_named(reference)?;
    if methods.is_empty() || refs.is_empty() {
        return Err(usage("no PNG images to compare"));
    }
    let summaries = compare_corpus(&methods, &refs).map_err(|e| match e {
        MetricsError::MissingReference(ids) => {
            failed(format!("no reference sketch for: {}", ids.join(", ")))
        }
        MetricsError::Empty => usage("no PNG images to compare"),
        other => failed(other),
    })?;
    write_output(&similarity_csv(&summaries), output)
}

fn load_manifest(path: &Path) -> CliResult<DatasetManifest> {
    existing(path)?;
    let path = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_owned()
    };
    DatasetManifest::load(&path).map_err(failed)
}

fn retrieval_error(e: RetrievalError) -> CliError {
    match e {
        RetrievalError::ParamsMismatch | RetrievalError::InvalidK => usage(e),
        other => failed(other),
    }
}

pub fn index(cfg: &Config, manifest: &Path, output: &Path) -> CliResult {
    let manifest = load_manifest(manifest)?;
    let start = Instant::now();
    let bag = build_index(&manifest, &cfg.hog).map_err(retrieval_error)?;
    bag.save(output).map_err(retrieval_error)?;
    eprintln!(
        "indexed {} models ({} dims) in {:.3} s",
        bag.len(),
        bag.dim().unwrap_or(0),
        start.elapsed().as_secs_f64()
    );
    println!("{}", output.display());
    Ok(())
}

fn load_bag(cfg: &Config, path: &Path) -> CliResult<FeatureBag> {
    existing(path)?;
    let bag = FeatureBag::load(path).map_err(retrieval_error)?;
    if cfg.hog_explicit {
        bag.ensure_params(&cfg.hog).map_err(retrieval_error)?;
    }
    Ok(bag)
}

pub fn query(cfg: &Config, sketch: &Path, index: &Path, k: usize, agg: &str) -> CliResult {
    let agg = aggregation(agg)?;
    if k == 0 {
        return Err(usage("k must be at least 1"));
    }
    existing(sketch)?;
    let img = GrayImage::open(sketch).map_err(failed)?;
    let bag = load_bag(cfg, index)?;
    let result = run_query(&img, &bag, k, agg).map_err(retrieval_error)?;
    for (rank, item) in result.items.iter().enumerate() {
        println!(
            "{},{},{},{:.6}",
            rank + 1,
            item.model_id,
            item.class,
            item.score
        );
    }
    eprintln!("query took {:.6} s", result.query_time);
    Ok(())
}

pub fn evaluate(
    cfg: &Config,
    manifest: &Path,
    index: Option<&Path>,
    k: usize,
    split: &str,
    agg: &str,
    output: Option<&Path>,
) -> CliResult {
    let agg = aggregation(agg)?;
    let split = match split {
        "all" => None,
        "train" => Some(Split::Train),
        "test" => Some(Split::Test),
        other => {
            return Err(usage(format!(
                "unknown split {other:?}, expected all, train or test"
            )))
        }
    };
    if k == 0 {
        return Err(usage("k must be at least 1"));
    }
    let manifest = load_manifest(manifest)?;
    let bag = match index {
        Some(path) => load_bag(cfg, path)?,
        None => {
            eprintln!("building index for {} models", manifest.entries.len());
            build_index(&manifest, &cfg.hog).map_err(retrieval_error)?
        }
    };
    let queries: Vec<EvalQuery> = manifest
        .entries
        .iter()
        .filter(|e| split.is_none_or(|s| e.split == s))
        .map(|e| {
            let sketch = load_sketch(&manifest, e).map_err(failed)?;
            let truth = if bag.get(&e.model_id).is_some() {
                Truth::indexed(e.class.clone(), e.model_id.clone())
            } else {
                Truth::class(e.class.clone())
            };
            Ok(EvalQuery { sketch, truth })
        })
        .collect::<CliResult<_>>()?;
    eprintln!("running {} queries", queries.len());
    let report = run_evaluation(&bag, &queries, k, agg).map_err(retrieval_error)?;
    write_output(&eval_csv(&report), output)
}

pub fn dataset_build(cfg: &Config, corpus: &Path, out: &Path, layout_name: &str) -> CliResult {
    let seed = cfg
        .seed
        .ok_or_else(|| usage("a split seed is required: pass --seed or set seed in the config"))?;
    existing(corpus)?;
    let entries = scan_corpus(corpus, layout(layout_name)?).map_err(failed)?;
    eprintln!("building {} models into {}", entries.len(), out.display());
    let build = BuildConfig {
        sketch: cfg.sketch,
        render_size: cfg.render_size,
        policy: cfg.policy,
        seed,
        workers: cfg.workers(),
    };
    let outcome = build_dataset(&entries, out, &build).map_err(failed)?;
    let m = &outcome.manifest;
    let train = m.entries.iter().filter(|e| e.split == Split::Train).count();
    eprintln!(
        "built {} models ({train} train, {} test), mean {:.4} s per model",
        m.entries.len(),
        m.entries.len() - train,
        outcome.timing.overall_mean
    );
    println!("{}", out.join(MANIFEST_FILE).display());
    let failures = outcome.failures();
    for f in failures {
        eprintln!("failed {} ({}): {}", f.model_id, f.mesh_path, f.error);
    }
    if !failures.is_empty() {
        return Err(failed(format!(
            "{} of {} models failed",
            failures.len(),
            entries.len()
        )));
    }
    Ok(())
}
