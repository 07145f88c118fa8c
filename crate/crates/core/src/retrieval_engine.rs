//! Sketch-to-model retrieval over a bag of per-view HOG descriptors, and the
//! evaluation harness (top-k accuracy, precision/recall at k, mAP).
//!
//! A model's score for a query is the MSE between the query descriptor and
//! its closest view (or the mean over views with [`Aggregation::Mean`]).
//! Lower is more similar; ties go to the lexicographically smaller model id.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset_pipeline::DatasetManifest;
use crate::feature_store::{self, StoreError, StoreRecord};
use crate::hog_features::{describe, FeatureVector, HogError, HogParams};
use crate::image::{GrayImage, ImageError};
use crate::view_render::VIEW_COUNT;

pub const DEFAULT_K: usize = 10;

pub const EVAL_CSV_HEADER: &str =
    "Class,No.of Models,Precision,Recall,Retrieval Time,mAP,Top k-Accuracy";

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("the index is empty")]
    EmptyIndex,
    #[error("model {model_id}: {found} of {VIEW_COUNT} views available")]
    MissingViews { model_id: String, found: usize },
    #[error("model {model_id}: descriptor length {found}, index dimension {expected}")]
    DimMismatch {
        model_id: String,
        expected: usize,
        found: usize,
    },
    #[error("model {0} is indexed twice")]
    DuplicateModel(String),
    #[error("HOG parameters differ from the ones the index was built with")]
    ParamsMismatch,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("no queries to evaluate")]
    EmptyQueries,
    #[error("{path}: {message}")]
    Metadata { path: PathBuf, message: String },
    #[error(transparent)]
    Hog(#[from] HogError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Distance to the closest view.
    #[default]
    Min,
    /// Mean distance over all views.
    Mean,
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min" => Ok(Self::Min),
            "mean" => Ok(Self::Mean),
            _ => Err(format!("unknown aggregation {s:?} (min, mean)")),
        }
    }
}

impl std::fmt::Display for Aggregation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Min => "min",
            Self::Mean => "mean",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub class: String,
    pub views: Vec<FeatureVector>,
}

/// Indexed descriptors: every model has exactly 20 view vectors of one
/// common length.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBag {
    params: HogParams,
    dim: Option<usize>,
    entries: BTreeMap<String, IndexEntry>,
}

#[derive(Serialize, Deserialize)]
struct StoreMeta {
    hog_params: HogParams,
    classes: Vec<String>,
}

/// Sidecar holding class names and HOG parameters: `<store>.json`.
pub fn meta_path(store: &Path) -> PathBuf {
    let mut s = store.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl FeatureBag {
    pub fn new(params: HogParams) -> Self {
        Self {
            params,
            dim: None,
            entries: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &HogParams {
        &self.params
    }

    /// Descriptor length, once anything is indexed.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &BTreeMap<String, IndexEntry> {
        &self.entries
    }

    pub fn get(&self, model_id: &str) -> Option<&IndexEntry> {
        self.entries.get(model_id)
    }

    pub fn class_sizes(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for e in self.entries.values() {
            *m.entry(e.class.clone()).or_insert(0) += 1;
        }
        m
    }

    pub fn ensure_params(&self, params: &HogParams) -> Result<(), RetrievalError> {
        if *params == self.params {
            Ok(())
        } else {
            Err(RetrievalError::ParamsMismatch)
        }
    }

    fn check_dim(&self, model_id: &str, found: usize) -> Result<(), RetrievalError> {
        match self.dim {
            Some(expected) if expected != found => Err(RetrievalError::DimMismatch {
                model_id: model_id.to_owned(),
                expected,
                found,
            }),
            _ => Ok(()),
        }
    }

    pub fn insert(
        &mut self,
        model_id: &str,
        class: &str,
        views: Vec<FeatureVector>,
    ) -> Result<(), RetrievalError> {
        if views.len() != VIEW_COUNT {
            return Err(RetrievalError::MissingViews {
                model_id: model_id.to_owned(),
                found: views.len(),
            });
        }
        if self.entries.contains_key(model_id) {
            return Err(RetrievalError::DuplicateModel(model_id.to_owned()));
        }
        let dim = views[0].len();
        self.check_dim(model_id, dim)?;
        if let Some(bad) = views.iter().find(|v| v.len() != dim) {
            return Err(RetrievalError::DimMismatch {
                model_id: model_id.to_owned(),
                expected: dim,
                found: bad.len(),
            });
        }
        self.dim = Some(dim);
        self.entries.insert(
            model_id.to_owned(),
            IndexEntry {
                class: class.to_owned(),
                views,
            },
        );
        Ok(())
    }

    /// Describes the 20 view images with the bag's parameters and indexes
    /// them.
    pub fn insert_views(
        &mut self,
        model_id: &str,
        class: &str,
        images: &[GrayImage],
    ) -> Result<(), RetrievalError> {
        let views = images
            .par_iter()
            .map(|img| describe(img, &self.params))
            .collect::<Result<Vec<_>, _>>()?;
        self.insert(model_id, class, views)
    }

    /// Store records ordered by model id, then view index; class ids index
    /// the sorted class list.
    fn to_records(&self) -> Result<(Vec<String>, Vec<StoreRecord>), RetrievalError> {
        let classes: Vec<String> = self.class_sizes().into_keys().collect();
        let mut records = Vec::with_capacity(self.entries.len() * VIEW_COUNT);
        for (id, e) in &self.entries {
            let class_id = classes.binary_search(&e.class).expect("class listed");
            for (view, v) in e.views.iter().enumerate() {
                records.push(StoreRecord {
                    model_id: id.clone(),
                    class_id: u16::try_from(class_id).map_err(|_| RetrievalError::Metadata {
                        path: PathBuf::new(),
                        message: "more than 65536 classes".into(),
                    })?,
                    view_index: view as u8,
                    values: v.0.clone(),
                });
            }
        }
        Ok((classes, records))
    }

    /// Writes the binary store and its `.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let (classes, records) = self.to_records()?;
        feature_store::write_file(path, self.dim.unwrap_or(0), &records)?;
        let meta = StoreMeta {
            hog_params: self.params,
            classes,
        };
        let meta_file = meta_path(path);
        let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        text.push('\n');
        std::fs::write(&meta_file, text).map_err(|e| RetrievalError::Metadata {
            path: meta_file.clone(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let meta_file = meta_path(path);
        let meta_err = |message: String| RetrievalError::Metadata {
            path: meta_file.clone(),
            message,
        };
        let text = std::fs::read_to_string(&meta_file).map_err(|e| meta_err(e.to_string()))?;
        let meta: StoreMeta = serde_json::from_str(&text).map_err(|e| meta_err(e.to_string()))?;
        let (dim, records) = feature_store::read_file(path)?;

        let mut grouped: BTreeMap<String, (u16, Vec<Option<FeatureVector>>)> = BTreeMap::new();
        for r in records {
            let slot = grouped
                .entry(r.model_id.clone())
                .or_insert_with(|| (r.class_id, vec![None; VIEW_COUNT]));
            if slot.0 != r.class_id {
                return Err(meta_err(format!(
                    "model {} has records in two classes",
                    r.model_id
                )));
            }
            match slot.1.get_mut(r.view_index as usize) {
                Some(v @ None) => *v = Some(FeatureVector(r.values)),
                _ => {
                    return Err(meta_err(format!(
                        "model {}: bad or repeated view index {}",
                        r.model_id, r.view_index
                    )))
                }
            }
        }
        let mut bag = FeatureBag::new(meta.hog_params);
        bag.dim = (!grouped.is_empty()).then_some(dim);
        for (id, (class_id, views)) in grouped {
            let class = meta
                .classes
                .get(class_id as usize)
                .ok_or_else(|| meta_err(format!("unknown class id {class_id}")))?;
            let found = views.iter().filter(|v| v.is_some()).count();
            let views: Option<Vec<FeatureVector>> = views.into_iter().collect();
            let views = views.ok_or(RetrievalError::MissingViews {
                model_id: id.clone(),
                found,
            })?;
            bag.insert(&id, class, views)?;
        }
        Ok(bag)
    }
}

/// Indexes every manifest entry from its rendered view images.
pub fn build_index(
    manifest: &DatasetManifest,
    params: &HogParams,
) -> Result<FeatureBag, RetrievalError> {
    params.validate()?;
    let described: Vec<Vec<FeatureVector>> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let missing = || RetrievalError::MissingViews {
                model_id: e.model_id.clone(),
                found: e
                    .views
                    .iter()
                    .filter(|v| manifest.resolve(v).is_file())
                    .count(),
            };
            if e.views.len() != VIEW_COUNT {
                return Err(missing());
            }
            e.views
                .iter()
                .map(|v| {
                    let path = manifest.resolve(v);
                    if !path.is_file() {
                        return Err(missing());
                    }
                    Ok(describe(&GrayImage::open(&path)?, params)?)
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let mut bag = FeatureBag::new(*params);
    for (e, views) in manifest.entries.iter().zip(described) {
        bag.insert(&e.model_id, &e.class, views)?;
    }
    Ok(bag)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedItem {
    pub model_id: String,
    pub class: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub items: Vec<RankedItem>,
    /// Seconds spent scoring and sorting.
    pub query_time: f64,
}

fn model_score(query: &FeatureVector, views: &[FeatureVector], agg: Aggregation) -> f64 {
    let distances = views.iter().map(|v| query.mse(v));
    match agg {
        Aggregation::Min => distances.fold(f64::INFINITY, f64::min),
        Aggregation::Mean => distances.sum::<f64>() / views.len() as f64,
    }
}

/// Ranks the index against a ready-made descriptor.
pub fn rank_descriptor(
    descriptor: &FeatureVector,
    bag: &FeatureBag,
    k: usize,
    agg: Aggregation,
) -> Result<RankedResult, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let Some(dim) = bag.dim else {
        return Err(RetrievalError::EmptyIndex);
    };
    if descriptor.len() != dim {
        return Err(RetrievalError::DimMismatch {
            model_id: "<query>".into(),
            expected: dim,
            found: descriptor.len(),
        });
    }
    let start = Instant::now();
    let mut scored: Vec<(f64, &String, &IndexEntry)> = bag
        .entries
        .iter()
        .map(|(id, e)| (model_score(descriptor, &e.views, agg), id, e))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    scored.truncate(k);
    let query_time = start.elapsed().as_secs_f64();
    Ok(RankedResult {
        items: scored
            .into_iter()
            .map(|(score, id, e)| RankedItem {
                model_id: id.clone(),
                class: e.class.clone(),
                score,
            })
            .collect(),
        query_time,
    })
}

/// Describes the sketch with the index's HOG parameters and returns the top
/// `k` models (all of them if the index is smaller).
pub fn query(
    sketch: &GrayImage,
    bag: &FeatureBag,
    k: usize,
    agg: Aggregation,
) -> Result<RankedResult, RetrievalError> {
    if bag.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let descriptor = describe(sketch, &bag.params)?;
    rank_descriptor(&descriptor, bag, k, agg)
}

/// Ground truth of one query. `model_id` names the indexed model the query
/// was made from; that model is left out when computing precision, recall
/// and AP, since retrieving a query's own source is not a discovery.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Truth {
    pub class: String,
    pub model_id: Option<String>,
}

impl Truth {
    pub fn class(class: impl Into<String>) -> Self {
        Self {
            class: class.into(),
            model_id: None,
        }
    }

    pub fn indexed(class: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            class: class.into(),
            model_id: Some(model_id.into()),
        }
    }
}

/// Percentage of the top `k` items (clamped to the ranking length) whose
/// class matches.
pub fn query_topk_accuracy(result: &RankedResult, truth: &Truth, k: usize) -> f64 {
    let k = k.min(result.items.len());
    if k == 0 {
        return 0.0;
    }
    let hits = result.items[..k]
        .iter()
        .filter(|i| i.class == truth.class)
        .count();
    100.0 * hits as f64 / k as f64
}

/// Relevance flags of a ranking with the query's own model removed.
fn relevance(result: &RankedResult, truth: &Truth) -> Vec<bool> {
    result
        .items
        .iter()
        .filter(|i| truth.model_id.as_deref() != Some(i.model_id.as_str()))
        .map(|i| i.class == truth.class)
        .collect()
}

/// `(precision@k, recall@k)` for one query. Recall divides by the class
/// size, minus one when the query's own model is indexed in that class.
pub fn query_precision_recall(
    result: &RankedResult,
    truth: &Truth,
    class_sizes: &BTreeMap<String, usize>,
    k: usize,
) -> (f64, f64) {
    if k == 0 {
        return (0.0, 0.0);
    }
    let rel = relevance(result, truth);
    let hits = rel.iter().take(k).filter(|&&r| r).count();
    let own_indexed = truth.model_id.as_ref().is_some_and(|id| {
        result
            .items
            .iter()
            .any(|i| &i.model_id == id && i.class == truth.class)
    });
    let class_size = class_sizes.get(&truth.class).copied().unwrap_or(0);
    let relevant_total = class_size.saturating_sub(usize::from(own_indexed));
    let recall = if relevant_total == 0 {
        0.0
    } else {
        hits as f64 / relevant_total as f64
    };
    (hits as f64 / k as f64, recall)
}

/// Mean of the precision values at the ranks of relevant items. Relevant
/// items missing from the ranking contribute zero.
pub fn average_precision(relevance: &[bool], total_relevant: usize) -> f64 {
    if total_relevant == 0 {
        return 0.0;
    }
    let mut hits = 0;
    let mut sum = 0.0;
    for (rank, _) in relevance.iter().enumerate().filter(|(_, &r)| r) {
        hits += 1;
        sum += hits as f64 / (rank + 1) as f64;
    }
    sum / total_relevant as f64
}

/// AP of a full ranking (own model excluded).
pub fn query_average_precision(result: &RankedResult, truth: &Truth) -> f64 {
    let rel = relevance(result, truth);
    let total = rel.iter().filter(|&&r| r).count();
    average_precision(&rel, total)
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (n, sum) = values
        .into_iter()
        .fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Top-k accuracy in percent, averaged over queries.
pub fn topk_accuracy(results: &[RankedResult], truth: &[Truth], k: usize) -> f64 {
    mean(
        results
            .iter()
            .zip(truth)
            .map(|(r, t)| query_topk_accuracy(r, t, k)),
    )
}

/// Precision and recall at `k`, averaged over queries.
pub fn precision_recall(
    results: &[RankedResult],
    truth: &[Truth],
    class_sizes: &BTreeMap<String, usize>,
    k: usize,
) -> (f64, f64) {
    let pr: Vec<(f64, f64)> = results
        .iter()
        .zip(truth)
        .map(|(r, t)| query_precision_recall(r, t, class_sizes, k))
        .collect();
    (mean(pr.iter().map(|p| p.0)), mean(pr.iter().map(|p| p.1)))
}

/// Mean AP over queries; expects full rankings.
pub fn mean_average_precision(results: &[RankedResult], truth: &[Truth]) -> f64 {
    mean(
        results
            .iter()
            .zip(truth)
            .map(|(r, t)| query_average_precision(r, t)),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalQuery {
    pub sketch: GrayImage,
    pub truth: Truth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    /// Indexed models of the class (all indexed models for the overall row).
    pub models: usize,
    pub queries: usize,
    pub precision: f64,
    pub recall: f64,
    pub mean_ap: f64,
    /// Percent.
    pub topk_accuracy: f64,
    /// Mean seconds per query.
    pub retrieval_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub k: usize,
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub overall: ClassMetrics,
}

#[derive(Clone, Copy)]
struct QueryStats {
    precision: f64,
    recall: f64,
    ap: f64,
    topk: f64,
    time: f64,
}

fn summarize(models: usize, stats: &[QueryStats]) -> ClassMetrics {
    ClassMetrics {
        models,
        queries: stats.len(),
        precision: mean(stats.iter().map(|s| s.precision)),
        recall: mean(stats.iter().map(|s| s.recall)),
        mean_ap: mean(stats.iter().map(|s| s.ap)),
        topk_accuracy: mean(stats.iter().map(|s| s.topk)),
        retrieval_time: mean(stats.iter().map(|s| s.time)),
    }
}

/// Runs every query against the full index and aggregates per truth class
/// and overall (mean over queries).
pub fn evaluate(
    bag: &FeatureBag,
    queries: &[EvalQuery],
    k: usize,
    agg: Aggregation,
) -> Result<EvalReport, RetrievalError> {
    if queries.is_empty() {
        return Err(RetrievalError::EmptyQueries);
    }
    if bag.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let sizes = bag.class_sizes();
    let stats: Vec<QueryStats> = queries
        .par_iter()
        .map(|q| {
            let r = query(&q.sketch, bag, bag.len(), agg)?;
            let (precision, recall) = query_precision_recall(&r, &q.truth, &sizes, k);
            Ok(QueryStats {
                precision,
                recall,
                ap: query_average_precision(&r, &q.truth),
                topk: query_topk_accuracy(&r, &q.truth, k),
                time: r.query_time,
            })
        })
        .collect::<Result<_, RetrievalError>>()?;

    let mut by_class: BTreeMap<&str, Vec<QueryStats>> = BTreeMap::new();
    for (q, s) in queries.iter().zip(&stats) {
        by_class.entry(&q.truth.class).or_default().push(*s);
    }
    let per_class = by_class
        .into_iter()
        .map(|(c, s)| {
            (
                c.to_owned(),
                summarize(sizes.get(c).copied().unwrap_or(0), &s),
            )
        })
        .collect();
    Ok(EvalReport {
        k,
        per_class,
        overall: summarize(bag.len(), &stats),
    })
}

/// Per-class rows plus an `Overall` row. Rates to 4 decimals, time in
/// seconds to 6, accuracy in percent to 2.
pub fn eval_csv(report: &EvalReport) -> String {
    let row = |name: &str, m: &ClassMetrics| {
        format!(
            "{name},{},{:.4},{:.4},{:.6},{:.4},{:.2}\n",
            m.models, m.precision, m.recall, m.retrieval_time, m.mean_ap, m.topk_accuracy
        )
    };
    let mut out = format!("{EVAL_CSV_HEADER}\n");
    for (class, m) in &report.per_class {
        out.push_str(&row(class, m));
    }
    out.push_str(&row("Overall", &report.overall));
    out
}
