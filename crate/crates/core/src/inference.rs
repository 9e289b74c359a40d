//! Two-stage inference: interactiveness scoring and suppression of the
//! dense pair graph, then classification of the surviving pairs and score
//! fusion.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::networks::{FeatureExtractor, Model};
use crate::scene::{to_json_line, Dataset, HoiLabelSpace, SceneRecord};
use crate::training::{build_inputs, candidate_pairs, PairCandidate};

/// Test-time ablation switches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Switches {
    /// Keep every pair regardless of its interactiveness score.
    pub nis_off: bool,
    /// Use the raw interactiveness output without detection-score weighting.
    pub lis_off: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    pub alpha: f64,
    pub human_thresh: f64,
    pub object_thresh: f64,
    /// Fused scores below this are not emitted.
    pub floor: f64,
    /// Pairs per forward pass.
    pub chunk: usize,
    pub switches: Switches,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig { alpha: 0.1, human_thresh: 0.6, object_thresh: 0.4, floor: 1e-4, chunk: 64, switches: Switches::default() }
    }
}

impl InferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!("alpha must lie in [0,1], got {}", self.alpha)));
        }
        if !(self.floor >= 0.0) || self.chunk == 0 {
            return Err(Error::config("floor must be >= 0 and chunk > 0"));
        }
        for (n, v) in [("human_thresh", self.human_thresh), ("object_thresh", self.object_thresh)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(format!("{n} must lie in (0,1), got {v}")));
            }
        }
        Ok(())
    }
}

/// Detections of one scene as nodes, candidate pairs as edges.
#[derive(Debug, Clone, PartialEq)]
pub struct HoiGraph {
    pub nodes: Vec<usize>,
    pub edges: Vec<PairCandidate>,
    pub sparse: bool,
}

impl HoiGraph {
    /// Full pairing of the detections that pass the score thresholds.
    pub fn dense(scene: &SceneRecord, cfg: &InferConfig) -> Self {
        let edges = candidate_pairs(scene, cfg.human_thresh, cfg.object_thresh, crate::scene::DEFAULT_LABEL_IOU);
        let mut nodes: Vec<usize> = edges.iter().flat_map(|e| [e.human, e.object]).collect();
        nodes.sort_unstable();
        nodes.dedup();
        HoiGraph { nodes, edges, sparse: false }
    }
}

/// Keep edges with `s_P >= alpha`; returns the sparse graph and the keep
/// mask over the dense edges.
pub fn nis_filter(graph: &HoiGraph, s_p: &[f64], alpha: f64) -> (HoiGraph, Vec<bool>) {
    let keep: Vec<bool> = s_p.iter().map(|&s| s >= alpha).collect();
    let edges = graph.edges.iter().zip(&keep).filter(|(_, &k)| k).map(|(e, _)| e.clone()).collect();
    (HoiGraph { nodes: graph.nodes.clone(), edges, sparse: true }, keep)
}

pub fn fuse_scores(s_c: &[f64], s_p: f64) -> Vec<f64> {
    s_c.iter().map(|v| v * s_p).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoiDetection {
    pub image_id: u64,
    pub human_box: BBox,
    pub object_box: BBox,
    pub category: usize,
    pub score: f64,
    /// Interactiveness score the classifier output was fused with.
    pub s_p: f64,
}

/// Interactiveness record for one dense edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub human: usize,
    pub object: usize,
    pub s_p: f64,
    pub suppressed: bool,
    /// Derived interactiveness label (for analysis only).
    pub interactive: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneResult {
    pub image_id: u64,
    pub detections: Vec<HoiDetection>,
    pub edges: Vec<EdgeRecord>,
}

/// Interactiveness scores of every edge; 1 for models without P.
pub fn edge_scores(model: &Model, fx: &FeatureExtractor, scene: &SceneRecord, edges: &[PairCandidate], cfg: &InferConfig) -> Result<Vec<f64>> {
    let Some(p) = &model.p else {
        return Ok(vec![1.0; edges.len()]);
    };
    let lis = (!cfg.switches.lis_off).then_some(&model.meta.net.lis);
    let mut out = Vec::with_capacity(edges.len());
    for chunk in edges.chunks(cfg.chunk) {
        let x = build_inputs(scene, chunk, fx, model.meta.net.grid)?;
        out.extend(p.forward(&model.params, &x, lis)?.s_p);
    }
    Ok(out)
}

/// Run the two-stage pipeline on one scene.
pub fn detect_hois(model: &Model, fx: &FeatureExtractor, scene: &SceneRecord, cfg: &InferConfig, labels: &HoiLabelSpace) -> Result<SceneResult> {
    let num_categories = labels.num_categories();
    if model.c.num_categories() != num_categories {
        return Err(Error::config(format!(
            "model has {} categories, label space has {num_categories}",
            model.c.num_categories()
        )));
    }
    let dense = HoiGraph::dense(scene, cfg);
    let s_p = edge_scores(model, fx, scene, &dense.edges, cfg)?;
    let alpha = if cfg.switches.nis_off || model.p.is_none() { 0.0 } else { cfg.alpha };
    let (sparse, keep) = nis_filter(&dense, &s_p, alpha);
    let survivors: Vec<f64> = s_p.iter().zip(&keep).filter(|(_, &k)| k).map(|(&s, _)| s).collect();
    let k = num_categories;
    let mut detections = Vec::new();
    for (chunk, sp) in sparse.edges.chunks(cfg.chunk).zip(survivors.chunks(cfg.chunk)) {
        let x = build_inputs(scene, chunk, fx, model.meta.net.grid)?;
        let s_c = model.c.forward(&model.params, &x)?.scores;
        for (i, e) in chunk.iter().enumerate() {
            let (hd, od) = (&scene.detections[e.human], &scene.detections[e.object]);
            let fused = fuse_scores(&s_c.data[i * k..(i + 1) * k], sp[i]);
            for (cat, &score) in fused.iter().enumerate() {
                if labels.category_class(cat) == Some(od.class_id) && score >= cfg.floor {
                    detections.push(HoiDetection {
                        image_id: scene.image_id,
                        human_box: hd.bbox,
                        object_box: od.bbox,
                        category: cat,
                        score,
                        s_p: sp[i],
                    });
                }
            }
        }
    }
    let edges = dense
        .edges
        .iter()
        .zip(s_p.iter().zip(&keep))
        .map(|(e, (&s, &k))| EdgeRecord { human: e.human, object: e.object, s_p: s, suppressed: !k, interactive: e.interactive })
        .collect();
    Ok(SceneResult { image_id: scene.image_id, detections, edges })
}

/// Run inference over every scene of `ds`.
pub fn detect_dataset(model: &Model, ds: &Dataset, cfg: &InferConfig) -> Result<Vec<SceneResult>> {
    detect_dataset_jobs(model, ds, cfg, 1)
}

/// As [`detect_dataset`], spreading contiguous scene ranges over `jobs`
/// threads. Output order and values do not depend on `jobs`.
pub fn detect_dataset_jobs(model: &Model, ds: &Dataset, cfg: &InferConfig, jobs: usize) -> Result<Vec<SceneResult>> {
    cfg.validate()?;
    let fx = FeatureExtractor::new(model.meta.net.feature_dim, model.meta.net.feature_seed);
    let run = |scenes: &[SceneRecord]| -> Result<Vec<SceneResult>> {
        scenes.iter().map(|s| detect_hois(model, &fx, s, cfg, &ds.labels)).collect()
    };
    let jobs = jobs.clamp(1, ds.scenes.len().max(1));
    if jobs == 1 {
        return run(&ds.scenes);
    }
    let size = ds.scenes.len().div_ceil(jobs);
    let parts: Vec<Result<Vec<SceneResult>>> = std::thread::scope(|sc| {
        let handles: Vec<_> = ds.scenes.chunks(size).map(|chunk| sc.spawn(move || run(chunk))).collect();
        handles.into_iter().map(|h| h.join().expect("inference worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(ds.scenes.len());
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct OutputRecord<'a> {
    image_id: u64,
    human_box: &'a BBox,
    object_box: &'a BBox,
    category: Option<usize>,
    score: Option<f64>,
    s_p: f64,
    suppressed: bool,
}

/// Line-delimited detection records. With `with_suppressed`, each
/// suppressed edge is also written, with no category and score.
pub fn write_detections<W: Write>(mut w: W, scenes: &[SceneResult], ds: &Dataset, with_suppressed: bool) -> Result<()> {
    let io = |e| Error::io("<detections>", e);
    for (res, scene) in scenes.iter().zip(&ds.scenes) {
        for d in &res.detections {
            let rec = OutputRecord {
                image_id: d.image_id,
                human_box: &d.human_box,
                object_box: &d.object_box,
                category: Some(d.category),
                score: Some(d.score),
                s_p: d.s_p,
                suppressed: false,
            };
            writeln!(w, "{}", to_json_line(&rec)?).map_err(io)?;
        }
        if with_suppressed {
            for e in res.edges.iter().filter(|e| e.suppressed) {
                let rec = OutputRecord {
                    image_id: res.image_id,
                    human_box: &scene.detections[e.human].bbox,
                    object_box: &scene.detections[e.object].bbox,
                    category: None,
                    score: None,
                    s_p: e.s_p,
                    suppressed: true,
                };
                writeln!(w, "{}", to_json_line(&rec)?).map_err(io)?;
            }
        }
    }
    Ok(())
}

/// Flatten per-scene results into one detection list in scene order.
pub fn all_detections(results: &[SceneResult]) -> Vec<HoiDetection> {
    results.iter().flat_map(|r| r.detections.iter().cloned()).collect()
}
