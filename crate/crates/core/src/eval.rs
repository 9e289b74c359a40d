//! Role mAP, rare/non-rare splits and suppression statistics.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::inference::{HoiDetection, SceneResult};
use crate::scene::Dataset;

pub const DEFAULT_RARE_THRESHOLD: usize = 10;
pub const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    Default,
    KnownObject,
}

impl Setting {
    pub fn as_str(&self) -> &'static str {
        match self {
            Setting::Default => "default",
            Setting::KnownObject => "known-object",
        }
    }
}

/// Greedy matching of score-sorted detections of one category against the
/// ground-truth `(human, object)` boxes of that category. A detection is a
/// true positive iff some unmatched pair has both IoUs above 0.5; the pair
/// with the largest smaller IoU is taken, ties going to the earlier pair.
pub fn match_predictions(dets: &[(BBox, BBox)], gts: &[(BBox, BBox)]) -> Vec<bool> {
    let mut used = vec![false; gts.len()];
    dets.iter()
        .map(|(h, o)| {
            let mut best: Option<(usize, f64)> = None;
            for (j, (gh, go)) in gts.iter().enumerate() {
                if used[j] {
                    continue;
                }
                let (hi, oi) = (iou(h, gh), iou(o, go));
                if hi > MATCH_IOU && oi > MATCH_IOU {
                    let m = hi.min(oi);
                    if best.is_none_or(|(_, b)| m > b) {
                        best = Some((j, m));
                    }
                }
            }
            match best {
                Some((j, _)) => {
                    used[j] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// All-point interpolated AP of score-ordered TP flags against `n_gt`
/// ground truths; 0 when `n_gt` is 0.
pub fn average_precision(flags: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(flags.len());
    for (i, &f) in flags.iter().enumerate() {
        tp += f as usize;
        points.push((tp as f64 / n_gt as f64, tp as f64 / (i + 1) as f64));
    }
    let mut ap = 0.0;
    let mut envelope = 0.0f64;
    for i in (0..points.len()).rev() {
        envelope = envelope.max(points[i].1);
        let prev_recall = if i == 0 { 0.0 } else { points[i - 1].0 };
        ap += (points[i].0 - prev_recall) * envelope;
    }
    ap
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub category: usize,
    pub name: String,
    pub n_gt: usize,
    pub n_det: usize,
    pub tp: usize,
    pub fp: usize,
    pub ap: f64,
    pub train_positives: usize,
    pub rare: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub setting: Setting,
    pub categories: Vec<CategoryReport>,
    /// Means over categories with at least one test ground truth.
    pub map_full: f64,
    pub map_rare: f64,
    pub map_non_rare: f64,
    pub n_full: usize,
    pub n_rare: usize,
    pub n_non_rare: usize,
    pub gt: usize,
    pub tp: usize,
    pub fp: usize,
    pub reduction: Option<Reduction>,
}

/// Number of training positives per HOI category.
pub fn train_positive_counts(train: &Dataset) -> Vec<usize> {
    let mut counts = vec![0; train.labels.num_categories()];
    for g in train.scenes.iter().flat_map(|s| &s.gt_pairs) {
        for &h in &g.hoi_ids {
            if let Some(c) = counts.get_mut(h) {
                *c += 1;
            }
        }
    }
    counts
}

/// Role mAP of `dets` on `test`. Detections are ranked by score with ties
/// in input order.
pub fn role_map(dets: &[HoiDetection], test: &Dataset, train_counts: &[usize], setting: Setting, rare_threshold: usize) -> Result<EvalReport> {
    let labels = &test.labels;
    let k = labels.num_categories();
    if train_counts.len() != k {
        return Err(Error::validation("train_counts", format!("expected {k} entries, got {}", train_counts.len())));
    }
    if let Some(d) = dets.iter().find(|d| d.category >= k) {
        return Err(Error::validation("category", format!("unknown HOI category {}", d.category)));
    }
    let scene_index: BTreeMap<u64, usize> = test.scenes.iter().enumerate().map(|(i, s)| (s.image_id, i)).collect();
    if let Some(d) = dets.iter().find(|d| !scene_index.contains_key(&d.image_id)) {
        return Err(Error::validation("image_id", format!("detection for unknown image {}", d.image_id)));
    }
    let mut per_cat: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, d) in dets.iter().enumerate() {
        per_cat[d.category].push(i);
    }
    let mut categories = Vec::with_capacity(k);
    for (cat, idx) in per_cat.iter_mut().enumerate() {
        let class = labels.category_class(cat);
        let allowed = |scene: usize| match setting {
            Setting::Default => true,
            Setting::KnownObject => test.scenes[scene].gt_instances.iter().any(|g| Some(g.class_id) == class),
        };
        idx.retain(|&i| allowed(scene_index[&dets[i].image_id]));
        idx.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
        let mut gts: BTreeMap<usize, Vec<(BBox, BBox)>> = BTreeMap::new();
        let mut n_gt = 0;
        for (si, s) in test.scenes.iter().enumerate() {
            if !allowed(si) {
                continue;
            }
            for g in s.gt_pairs.iter().filter(|g| g.hoi_ids.contains(&cat)) {
                gts.entry(si).or_default().push((g.human_box, g.object_box));
                n_gt += 1;
            }
        }
        let mut by_image: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (rank, &i) in idx.iter().enumerate() {
            by_image.entry(scene_index[&dets[i].image_id]).or_default().push(rank);
        }
        let mut flags = vec![false; idx.len()];
        for (si, ranks) in by_image {
            let Some(pool) = gts.get(&si) else { continue };
            let boxes: Vec<(BBox, BBox)> = ranks.iter().map(|&r| (dets[idx[r]].human_box, dets[idx[r]].object_box)).collect();
            for (r, f) in ranks.iter().zip(match_predictions(&boxes, pool)) {
                flags[*r] = f;
            }
        }
        let tp = flags.iter().filter(|&&f| f).count();
        categories.push(CategoryReport {
            category: cat,
            name: labels.category_name(cat),
            n_gt,
            n_det: flags.len(),
            tp,
            fp: flags.len() - tp,
            ap: average_precision(&flags, n_gt),
            train_positives: train_counts[cat],
            rare: train_counts[cat] < rare_threshold,
        });
    }
    let mean = |pred: &dyn Fn(&CategoryReport) -> bool| {
        let v: Vec<f64> = categories.iter().filter(|c| c.n_gt > 0 && pred(c)).map(|c| c.ap).collect();
        let m = if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        (m, v.len())
    };
    let (map_full, n_full) = mean(&|_| true);
    let (map_rare, n_rare) = mean(&|c| c.rare);
    let (map_non_rare, n_non_rare) = mean(&|c| !c.rare);
    Ok(EvalReport {
        setting,
        gt: categories.iter().map(|c| c.n_gt).sum(),
        tp: categories.iter().map(|c| c.tp).sum(),
        fp: categories.iter().map(|c| c.fp).sum(),
        categories,
        map_full,
        map_rare,
        map_non_rare,
        n_full,
        n_rare,
        n_non_rare,
        reduction: None,
    })
}

/// Suppression statistics over dense edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub edges: usize,
    pub kept: usize,
    pub interactive: usize,
    /// Fraction of all edges removed.
    pub overall: f64,
    /// Fraction of non-interactive edges removed (0 when there are none).
    pub non_interactive: f64,
    /// Fraction of interactive edges kept (1 when there are none).
    pub interactive_retention: f64,
}

pub fn reduction_stat(kept: &[bool], interactive: &[bool]) -> Reduction {
    assert_eq!(kept.len(), interactive.len(), "kept and label masks differ in length");
    let n = kept.len();
    let n_kept = kept.iter().filter(|&&k| k).count();
    let n_int = interactive.iter().filter(|&&i| i).count();
    let int_kept = kept.iter().zip(interactive).filter(|(&k, &i)| k && i).count();
    let non_removed = kept.iter().zip(interactive).filter(|(&k, &i)| !k && !i).count();
    let frac = |a: usize, b: usize, empty: f64| if b == 0 { empty } else { a as f64 / b as f64 };
    Reduction {
        edges: n,
        kept: n_kept,
        interactive: n_int,
        overall: frac(n - n_kept, n, 0.0),
        non_interactive: frac(non_removed, n - n_int, 0.0),
        interactive_retention: frac(int_kept, n_int, 1.0),
    }
}

/// Reduction statistics over every edge of every scene result.
pub fn reduction_of(results: &[SceneResult]) -> Reduction {
    let edges = results.iter().flat_map(|r| &r.edges);
    let kept: Vec<bool> = edges.clone().map(|e| !e.suppressed).collect();
    let labels: Vec<bool> = edges.map(|e| e.interactive).collect();
    reduction_stat(&kept, &labels)
}

/// Per-category CSV.
pub fn write_report_csv<W: Write>(mut w: W, report: &EvalReport) -> std::io::Result<()> {
    writeln!(w, "setting,category,name,n_gt,n_det,tp,fp,ap,train_positives,rare")?;
    for c in &report.categories {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            report.setting.as_str(),
            c.category,
            c.name,
            c.n_gt,
            c.n_det,
            c.tp,
            c.fp,
            c.ap,
            c.train_positives,
            c.rare
        )?;
    }
    Ok(())
}

/// Summary record without the per-category rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub setting: Setting,
    pub map_full: f64,
    pub map_rare: f64,
    pub map_non_rare: f64,
    pub n_full: usize,
    pub n_rare: usize,
    pub n_non_rare: usize,
    pub gt: usize,
    pub tp: usize,
    pub fp: usize,
    pub reduction: Option<Reduction>,
}

impl From<&EvalReport> for Summary {
    fn from(r: &EvalReport) -> Self {
        Summary {
            setting: r.setting,
            map_full: r.map_full,
            map_rare: r.map_rare,
            map_non_rare: r.map_non_rare,
            n_full: r.n_full,
            n_rare: r.n_rare,
            n_non_rare: r.n_non_rare,
            gt: r.gt,
            tp: r.tp,
            fp: r.fp,
            reduction: r.reduction,
        }
    }
}

/// One row of an α sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub reduction: Reduction,
    pub map_full: f64,
}

/// Surviving-edge statistics for each α from precomputed edge scores.
/// `edges` holds `(s_P, interactive)` for every dense edge.
pub fn sweep_reduction(edges: &[(f64, bool)], alphas: &[f64]) -> Vec<(f64, Reduction)> {
    let labels: Vec<bool> = edges.iter().map(|e| e.1).collect();
    alphas
        .iter()
        .map(|&a| {
            let kept: Vec<bool> = edges.iter().map(|e| e.0 >= a).collect();
            (a, reduction_stat(&kept, &labels))
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "alpha,edges,kept,overall_reduction,non_interactive_reduction,interactive_retention,map_full")?;
    for r in rows {
        let d = &r.reduction;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.alpha, d.edges, d.kept, d.overall, d.non_interactive, d.interactive_retention, r.map_full
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::scene::{GroundTruthPair, GtInstance, HoiLabelSpace, SceneRecord};
    use proptest::prelude::*;
    use rand::Rng as _;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, x + w, y + h)
    }

    #[test]
    fn match_examples() {
        let g = (b(0.0, 0.0, 10.0, 10.0), b(20.0, 0.0, 10.0, 10.0));
        assert_eq!(match_predictions(&[g], &[g]), vec![true]);
        // IoU exactly 0.5 on the human box: 10x10 against 10x5 inside it.
        let half = (b(0.0, 0.0, 10.0, 5.0), g.1);
        assert!((iou(&half.0, &g.0) - 0.5).abs() < 1e-15);
        assert_eq!(match_predictions(&[half], &[g]), vec![false]);
        assert_eq!(match_predictions(&[g, g], &[g]), vec![true, false]);
        let near = (b(1.0, 0.0, 10.0, 10.0), g.1);
        let far = (b(3.0, 0.0, 10.0, 10.0), g.1);
        // The better-overlapping ground truth is taken first.
        assert_eq!(match_predictions(&[near, near], &[far, g]), vec![true, true]);
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[true], 1), 1.0);
        assert_eq!(average_precision(&[false, true], 1), 0.5);
        assert_eq!(average_precision(&[], 3), 0.0);
        assert_eq!(average_precision(&[true, true], 0), 0.0);
        assert!((average_precision(&[true, false, true], 2) - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
        assert!((average_precision(&[true], 4) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn reduction_examples() {
        let labels = [true, false, false, true];
        let none = reduction_stat(&[true; 4], &labels);
        assert_eq!((none.overall, none.non_interactive, none.interactive_retention), (0.0, 0.0, 1.0));
        let all = reduction_stat(&[false; 4], &labels);
        assert_eq!((all.overall, all.non_interactive, all.interactive_retention), (1.0, 1.0, 0.0));
        let mixed = reduction_stat(&[true, false, true, false], &labels);
        assert_eq!((mixed.overall, mixed.non_interactive, mixed.interactive_retention), (0.5, 0.5, 0.5));
        let sweep = sweep_reduction(&[(0.05, false), (0.1, true), (0.3, false), (0.9, true)], &[0.0, 0.1, 0.5]);
        let kept: Vec<usize> = sweep.iter().map(|r| r.1.kept).collect();
        assert_eq!(kept, vec![4, 3, 1]);
    }

    /// Independent evaluator: one global scan per detection, AP as the mean
    /// over ground truths of the best precision at or after each hit.
    fn brute_ap(dets: &[HoiDetection], ds: &Dataset, cat: usize, known: bool) -> Option<f64> {
        let class = ds.labels.category_class(cat).unwrap();
        let ok_img = |id: u64| {
            let s = ds.scenes.iter().find(|s| s.image_id == id).unwrap();
            !known || s.gt_instances.iter().any(|g| g.class_id == class)
        };
        let mut gts: Vec<(u64, BBox, BBox, bool)> = Vec::new();
        for s in &ds.scenes {
            for g in &s.gt_pairs {
                if g.hoi_ids.contains(&cat) && ok_img(s.image_id) {
                    gts.push((s.image_id, g.human_box, g.object_box, false));
                }
            }
        }
        if gts.is_empty() {
            return None;
        }
        let mut order: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].category == cat && ok_img(dets[i].image_id)).collect();
        // Stable insertion sort by descending score.
        for i in 1..order.len() {
            let mut j = i;
            while j > 0 && dets[order[j - 1]].score < dets[order[j]].score {
                order.swap(j - 1, j);
                j -= 1;
            }
        }
        let mut hits = Vec::new();
        for &i in &order {
            let d = &dets[i];
            let mut best = None;
            let mut best_v = -1.0;
            for (j, g) in gts.iter().enumerate() {
                let (hi, oi) = (iou(&d.human_box, &g.1), iou(&d.object_box, &g.2));
                if g.0 == d.image_id && !g.3 && hi > 0.5 && oi > 0.5 && hi.min(oi) > best_v {
                    best_v = hi.min(oi);
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                gts[j].3 = true;
            }
            hits.push(best.is_some());
        }
        let prec: Vec<f64> = (0..hits.len()).map(|i| hits[..=i].iter().filter(|&&h| h).count() as f64 / (i + 1) as f64).collect();
        let mut total = 0.0;
        for i in 0..hits.len() {
            if hits[i] {
                total += prec[i..].iter().cloned().fold(0.0, f64::max);
            }
        }
        Some(total / gts.len() as f64)
    }

    fn random_instance(seed: u64) -> (Dataset, Vec<HoiDetection>) {
        let mut r = rng::indexed(seed, "eval-instance", 0);
        let n_obj = r.random_range(1..=3);
        let objects: Vec<String> = (0..n_obj).map(|i| format!("o{i}")).collect();
        let n_cat = r.random_range(1..=5);
        let cats: Vec<(usize, usize)> = (0..n_cat).map(|c| (c, c % n_obj)).collect();
        let labels = HoiLabelSpace::new("T", (0..n_cat).map(|i| format!("v{i}")).collect(), objects, cats);
        let grid = |r: &mut crate::rng::Rng| b(r.random_range(0..4) as f64 * 5.0, r.random_range(0..4) as f64 * 5.0, 10.0, 10.0);
        let scenes: Vec<SceneRecord> = (0..r.random_range(1..=3))
            .map(|id| {
                let gt_pairs: Vec<GroundTruthPair> = (0..r.random_range(0..4))
                    .map(|_| {
                        let hoi = r.random_range(0..n_cat);
                        GroundTruthPair { human_box: grid(&mut r), object_box: grid(&mut r), object_class: hoi % n_obj + 1, hoi_ids: vec![hoi] }
                    })
                    .collect();
                let mut gt_instances: Vec<GtInstance> = gt_pairs
                    .iter()
                    .map(|g| GtInstance { bbox: g.object_box, class_id: g.object_class, keypoints: None, attributes: vec![] })
                    .collect();
                if r.random::<f64>() < 0.3 {
                    gt_instances.push(GtInstance { bbox: grid(&mut r), class_id: r.random_range(1..=n_obj), keypoints: None, attributes: vec![] });
                }
                SceneRecord { image_id: id, width: 100, height: 100, gt_instances, gt_pairs, detections: vec![] }
            })
            .collect();
        let n_scenes = scenes.len() as u64;
        let dets = (0..r.random_range(0..=20))
            .map(|_| HoiDetection {
                image_id: r.random_range(0..n_scenes),
                human_box: grid(&mut r),
                object_box: grid(&mut r),
                category: r.random_range(0..n_cat),
                // Coarse scores so ties occur.
                score: r.random_range(0..5) as f64 / 4.0,
                s_p: 1.0,
            })
            .collect();
        (Dataset { labels, scenes }, dets)
    }

    #[test]
    fn role_map_matches_brute_force() {
        for seed in 0..200 {
            let (ds, dets) = random_instance(seed);
            let counts = vec![0; ds.labels.num_categories()];
            for (setting, known) in [(Setting::Default, false), (Setting::KnownObject, true)] {
                let rep = role_map(&dets, &ds, &counts, setting, 10).unwrap();
                let mut aps = Vec::new();
                for c in &rep.categories {
                    match brute_ap(&dets, &ds, c.category, known) {
                        Some(ap) => {
                            assert!((ap - c.ap).abs() <= 1e-9, "seed {seed} cat {} {ap} {}", c.category, c.ap);
                            aps.push(ap);
                        }
                        None => assert_eq!(c.n_gt, 0),
                    }
                }
                let m = if aps.is_empty() { 0.0 } else { aps.iter().sum::<f64>() / aps.len() as f64 };
                assert!((m - rep.map_full).abs() <= 1e-9);
            }
        }
    }

    fn perfect_case() -> (Dataset, Vec<HoiDetection>) {
        let labels = HoiLabelSpace::new("T", vec!["a".into(), "b".into()], vec!["x".into(), "y".into()], vec![(0, 0), (1, 1)]);
        let g = |c: usize, x: f64| GroundTruthPair { human_box: b(x, 0.0, 10.0, 10.0), object_box: b(x, 20.0, 5.0, 5.0), object_class: c + 1, hoi_ids: vec![c] };
        let scenes = vec![
            SceneRecord {
                image_id: 0,
                width: 100,
                height: 100,
                gt_instances: vec![GtInstance { bbox: b(0.0, 20.0, 5.0, 5.0), class_id: 1, keypoints: None, attributes: vec![] }],
                gt_pairs: vec![g(0, 0.0)],
                detections: vec![],
            },
            SceneRecord {
                image_id: 1,
                width: 100,
                height: 100,
                gt_instances: vec![GtInstance { bbox: b(50.0, 20.0, 5.0, 5.0), class_id: 2, keypoints: None, attributes: vec![] }],
                gt_pairs: vec![g(1, 50.0)],
                detections: vec![],
            },
        ];
        let dets = scenes
            .iter()
            .flat_map(|s| {
                s.gt_pairs.iter().map(move |p| HoiDetection {
                    image_id: s.image_id,
                    human_box: p.human_box,
                    object_box: p.object_box,
                    category: p.hoi_ids[0],
                    score: 0.9,
                    s_p: 1.0,
                })
            })
            .collect();
        (Dataset { labels, scenes }, dets)
    }

    #[test]
    fn perfect_detections_score_one_and_known_object_helps() {
        let (ds, mut dets) = perfect_case();
        for s in [Setting::Default, Setting::KnownObject] {
            assert_eq!(role_map(&dets, &ds, &[0, 20], s, 10).unwrap().map_full, 1.0);
        }
        // A confident false positive of category 0 in the image without class 1.
        dets.push(HoiDetection { image_id: 1, human_box: b(0.0, 0.0, 9.0, 9.0), object_box: b(0.0, 0.0, 9.0, 9.0), category: 0, score: 0.99, s_p: 1.0 });
        let d = role_map(&dets, &ds, &[0, 20], Setting::Default, 10).unwrap();
        let k = role_map(&dets, &ds, &[0, 20], Setting::KnownObject, 10).unwrap();
        assert!(k.map_full >= d.map_full);
        assert_eq!(k.map_full, 1.0);
        assert_eq!((d.n_rare, d.n_non_rare), (1, 1));
        assert!((d.map_full - (d.map_rare + d.map_non_rare) / 2.0).abs() < 1e-15);
        let bad = HoiDetection { category: 7, ..dets[0].clone() };
        assert!(role_map(&[bad], &ds, &[0, 20], Setting::Default, 10).is_err());
    }

    proptest! {
        #[test]
        fn ap_invariant_under_monotone_rescoring(seed in 0u64..500) {
            let (ds, dets) = random_instance(seed);
            let counts = vec![0; ds.labels.num_categories()];
            let moved: Vec<HoiDetection> = dets.iter().map(|d| HoiDetection { score: (3.0 * d.score).exp() - 7.0, ..d.clone() }).collect();
            let a = role_map(&dets, &ds, &counts, Setting::Default, 10).unwrap();
            let b = role_map(&moved, &ds, &counts, Setting::Default, 10).unwrap();
            prop_assert_eq!(a.categories, b.categories);
        }

        #[test]
        fn full_map_is_weighted_mean_of_splits(seed in 0u64..500, thr in 0usize..3) {
            let (ds, dets) = random_instance(seed);
            let counts: Vec<usize> = (0..ds.labels.num_categories()).collect();
            let r = role_map(&dets, &ds, &counts, Setting::Default, thr).unwrap();
            prop_assert_eq!(r.n_full, r.n_rare + r.n_non_rare);
            if r.n_full > 0 {
                let w = (r.map_rare * r.n_rare as f64 + r.map_non_rare * r.n_non_rare as f64) / r.n_full as f64;
                prop_assert!((w - r.map_full).abs() < 1e-12);
            }
            prop_assert!(r.categories.iter().all(|c| (0.0..=1.0).contains(&c.ap)));
        }
    }
}
