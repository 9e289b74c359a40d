//! Scene records, HOI label spaces, and the line-delimited dataset format.
//!
//! A dataset file holds one JSON object per line. The first line is the
//! label space (carrying `format_version`), every following line one scene.
//! Reals are written with 17 significant digits so files round-trip exactly.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};

pub const FORMAT_VERSION: u32 = 1;
pub const HUMAN_CLASS: usize = 0;
pub const NUM_KEYPOINTS: usize = 17;
/// Detection scores are kept inside `[SCORE_EPS, 1 - SCORE_EPS]`.
pub const SCORE_EPS: f64 = 1e-6;
pub const DEFAULT_LABEL_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64, bool)", into = "(f64, f64, bool)")]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

impl From<(f64, f64, bool)> for Keypoint {
    fn from((x, y, visible): (f64, f64, bool)) -> Self {
        Keypoint { x, y, visible }
    }
}

impl From<Keypoint> for (f64, f64, bool) {
    fn from(k: Keypoint) -> Self {
        (k.x, k.y, k.visible)
    }
}

impl Keypoint {
    pub fn translate(&self, dx: f64, dy: f64) -> Keypoint {
        Keypoint { x: self.x + dx, y: self.y + dy, visible: self.visible }
    }
}

/// A detector output. `attributes` are the observed appearance latents the
/// feature extractor reads; `source` indexes the ground-truth instance the
/// detection was simulated from (`None` for false positives).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub class_id: usize,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypoints: Option<Vec<Keypoint>>,
    #[serde(default)]
    pub attributes: Vec<f64>,
    #[serde(default)]
    pub source: Option<usize>,
}

impl Detection {
    pub fn is_human(&self) -> bool {
        self.class_id == HUMAN_CLASS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtInstance {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub class_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypoints: Option<Vec<Keypoint>>,
    #[serde(default)]
    pub attributes: Vec<f64>,
}

/// An annotated interacting pair. `object_class` is a class id (`>= 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPair {
    pub human_box: BBox,
    pub object_box: BBox,
    pub object_class: usize,
    pub hoi_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub image_id: u64,
    pub width: u32,
    pub height: u32,
    pub gt_instances: Vec<GtInstance>,
    pub gt_pairs: Vec<GroundTruthPair>,
    pub detections: Vec<Detection>,
}

/// Verb and object vocabularies plus the ordered HOI categories
/// `(verb_index, object_index)`. Object index `i` is class id `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoiLabelSpace {
    pub format_version: u32,
    pub name: String,
    pub verbs: Vec<String>,
    pub objects: Vec<String>,
    pub hoi_categories: Vec<(usize, usize)>,
}

impl HoiLabelSpace {
    pub fn new(name: &str, verbs: Vec<String>, objects: Vec<String>, hoi_categories: Vec<(usize, usize)>) -> Self {
        HoiLabelSpace {
            format_version: FORMAT_VERSION,
            name: name.to_string(),
            verbs,
            objects,
            hoi_categories,
        }
    }

    pub fn num_categories(&self) -> usize {
        self.hoi_categories.len()
    }

    pub fn num_classes(&self) -> usize {
        self.objects.len() + 1
    }

    /// Class id of the object in category `hoi`.
    pub fn category_class(&self, hoi: usize) -> Option<usize> {
        self.hoi_categories.get(hoi).map(|&(_, o)| o + 1)
    }

    pub fn category_name(&self, hoi: usize) -> String {
        match self.hoi_categories.get(hoi) {
            Some(&(v, o)) => format!("{} {}", self.verbs[v], self.objects[o]),
            None => format!("#{hoi}"),
        }
    }

    pub fn categories_for_class(&self, class_id: usize) -> Vec<usize> {
        (0..self.hoi_categories.len())
            .filter(|&h| self.category_class(h) == Some(class_id))
            .collect()
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut v = |field: &str, message: String| {
            out.push(Violation { image_id: None, entity: "label_space".into(), field: field.into(), message })
        };
        if self.format_version != FORMAT_VERSION {
            v("format_version", format!("unsupported version {}", self.format_version));
        }
        let mut seen = HashSet::new();
        for (i, &(verb, obj)) in self.hoi_categories.iter().enumerate() {
            if verb >= self.verbs.len() || obj >= self.objects.len() {
                v("hoi_categories", format!("entry {i} index out of range"));
            }
            if !seen.insert((verb, obj)) {
                v("hoi_categories", format!("entry {i} duplicated"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub labels: HoiLabelSpace,
    pub scenes: Vec<SceneRecord>,
}

/// One broken invariant, located by scene, entity and field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub image_id: Option<u64>,
    pub entity: String,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.image_id {
            Some(id) => write!(f, "scene {id}, {}: {} ({})", self.entity, self.message, self.field),
            None => write!(f, "{}: {} ({})", self.entity, self.message, self.field),
        }
    }
}

fn check_keypoints(kps: &Option<Vec<Keypoint>>, class_id: usize, push: &mut impl FnMut(&str, String)) {
    match (kps, class_id == HUMAN_CLASS) {
        (Some(k), true) if k.len() != NUM_KEYPOINTS => {
            push("keypoints", format!("expected {NUM_KEYPOINTS} keypoints, got {}", k.len()))
        }
        (Some(k), true) if k.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) => {
            push("keypoints", "non-finite keypoint".into())
        }
        (None, true) => push("keypoints", "human without keypoints".into()),
        (Some(_), false) => push("keypoints", "keypoints on a non-human".into()),
        _ => {}
    }
}

fn scene_violations(scene: &SceneRecord, labels: &HoiLabelSpace) -> Vec<Violation> {
    let mut out = Vec::new();
    let (w, h) = (scene.width as f64, scene.height as f64);
    if scene.width == 0 || scene.height == 0 {
        out.push(Violation {
            image_id: Some(scene.image_id),
            entity: "scene".into(),
            field: "size".into(),
            message: "empty image".into(),
        });
    }
    let mut check = |entity: String, field: &str, ok: bool, message: &str| {
        if !ok {
            out.push(Violation {
                image_id: Some(scene.image_id),
                entity,
                field: field.into(),
                message: message.into(),
            });
        }
    };
    let box_ok = |b: &BBox| b.is_valid() && b.within(w, h);
    for (i, g) in scene.gt_instances.iter().enumerate() {
        let e = format!("gt_instance {i}");
        check(e.clone(), "box", box_ok(&g.bbox), "box invalid or outside image");
        check(e.clone(), "class_id", g.class_id < labels.num_classes(), "class id out of range");
        let mut kp_issue = None;
        check_keypoints(&g.keypoints, g.class_id, &mut |_, m| kp_issue = Some(m));
        check(e, "keypoints", kp_issue.is_none(), kp_issue.as_deref().unwrap_or(""));
    }
    for (i, p) in scene.gt_pairs.iter().enumerate() {
        let e = format!("gt_pair {i}");
        check(e.clone(), "box", box_ok(&p.human_box) && box_ok(&p.object_box), "box invalid or outside image");
        check(
            e.clone(),
            "object_class",
            p.object_class >= 1 && p.object_class < labels.num_classes(),
            "object class out of range",
        );
        check(e.clone(), "hoi_ids", !p.hoi_ids.is_empty(), "empty hoi_ids");
        let consistent = p.hoi_ids.iter().all(|&h| labels.category_class(h) == Some(p.object_class));
        check(e, "hoi_ids", consistent, "hoi category object does not match object_class");
    }
    for (i, d) in scene.detections.iter().enumerate() {
        let e = format!("detection {i}");
        check(e.clone(), "box", box_ok(&d.bbox), "box invalid or outside image");
        check(e.clone(), "class_id", d.class_id < labels.num_classes(), "class id out of range");
        check(e.clone(), "score", d.score > 0.0 && d.score < 1.0, "score strictly inside (0,1)");
        let mut kp_issue = None;
        check_keypoints(&d.keypoints, d.class_id, &mut |_, m| kp_issue = Some(m));
        check(e, "keypoints", kp_issue.is_none(), kp_issue.as_deref().unwrap_or(""));
    }
    out
}

/// Every broken invariant in the dataset; empty iff the dataset is valid.
pub fn validate_dataset(ds: &Dataset) -> Vec<Violation> {
    let mut out = ds.labels.violations();
    let mut ids = HashSet::new();
    for scene in &ds.scenes {
        if !ids.insert(scene.image_id) {
            out.push(Violation {
                image_id: Some(scene.image_id),
                entity: "scene".into(),
                field: "image_id".into(),
                message: "duplicate image_id".into(),
            });
        }
        out.extend(scene_violations(scene, &ds.labels));
    }
    out
}

/// 1 iff some annotated pair of the same object class overlaps both
/// candidate boxes with IoU at least `iou_threshold`.
pub fn derive_interactiveness_label(
    human: &Detection,
    object: &Detection,
    scene: &SceneRecord,
    iou_threshold: f64,
) -> Result<bool> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::Domain(format!("iou_threshold {iou_threshold} outside (0,1]")));
    }
    if !human.is_human() || object.is_human() {
        return Err(Error::Domain("expected a (human, object) detection pair".into()));
    }
    Ok(scene.gt_pairs.iter().any(|g| {
        g.object_class == object.class_id
            && iou(&g.human_box, &human.bbox) >= iou_threshold
            && iou(&g.object_box, &object.bbox) >= iou_threshold
    }))
}

/// Indices `(human, object)` of every detection pair surviving the score
/// thresholds, human-major in detection order.
pub fn candidate_index_pairs(scene: &SceneRecord, human_thresh: f64, object_thresh: f64) -> Vec<(usize, usize)> {
    let dets = &scene.detections;
    let humans = (0..dets.len()).filter(|&i| dets[i].is_human() && dets[i].score >= human_thresh);
    let objects: Vec<usize> = (0..dets.len())
        .filter(|&i| !dets[i].is_human() && dets[i].score >= object_thresh)
        .collect();
    humans.flat_map(|h| objects.iter().map(move |&o| (h, o))).collect()
}

/// JSON formatter writing every float with 17 significant digits.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize a value as one compact JSON line with full-precision reals.
pub fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::validation("record", e.to_string()))?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_dataset<W: Write>(mut w: W, ds: &Dataset) -> std::io::Result<()> {
    let enc = |v: Result<String>| v.map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()));
    writeln!(w, "{}", enc(to_json_line(&ds.labels))?)?;
    for s in &ds.scenes {
        writeln!(w, "{}", enc(to_json_line(s))?)?;
    }
    w.flush()
}

/// Parse a dataset stream. Scores are clamped into `[1e-6, 1 - 1e-6]`.
pub fn read_dataset<R: BufRead>(r: R) -> Result<Dataset> {
    let mut labels: Option<HoiLabelSpace> = None;
    let mut scenes = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| Error::Parse { line: line_no, message: e.to_string() };
        match labels {
            None => {
                let l: HoiLabelSpace = serde_json::from_str(&line).map_err(parse_err)?;
                if let Some(v) = l.violations().into_iter().next() {
                    return Err(Error::validation(v.field.clone(), format!("line {line_no}: {v}")));
                }
                labels = Some(l);
            }
            Some(_) => {
                let mut s: SceneRecord = serde_json::from_str(&line).map_err(parse_err)?;
                for d in &mut s.detections {
                    if d.score.is_finite() {
                        d.score = d.score.clamp(SCORE_EPS, 1.0 - SCORE_EPS);
                    }
                }
                scenes.push(s);
                lines.push(line_no);
            }
        }
    }
    let labels = labels.ok_or(Error::Parse { line: 1, message: "missing label-space record".into() })?;
    let mut ids = HashSet::new();
    for (s, line_no) in scenes.iter().zip(&lines) {
        if !ids.insert(s.image_id) {
            return Err(Error::validation("image_id", format!("line {line_no}: duplicate image_id {}", s.image_id)));
        }
        if let Some(v) = scene_violations(s, &labels).into_iter().next() {
            return Err(Error::validation(v.field.clone(), format!("line {line_no}: {v}")));
        }
    }
    Ok(Dataset { labels, scenes })
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(std::io::BufWriter::new(f), ds).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels() -> HoiLabelSpace {
        HoiLabelSpace::new(
            "t",
            vec!["hold".into(), "ride".into()],
            vec!["bike".into(), "cup".into()],
            vec![(0, 0), (0, 1), (1, 0)],
        )
    }

    fn kps() -> Vec<Keypoint> {
        (0..17).map(|i| Keypoint { x: 10.0 + i as f64, y: 20.0, visible: i % 2 == 0 }).collect()
    }

    fn human(b: BBox) -> Detection {
        Detection { bbox: b, class_id: 0, score: 0.9, keypoints: Some(kps()), attributes: vec![1.0, 0.0], source: Some(0) }
    }

    fn object(b: BBox, class_id: usize) -> Detection {
        Detection { bbox: b, class_id, score: 0.7, keypoints: None, attributes: vec![0.25], source: None }
    }

    fn scene() -> SceneRecord {
        let hb = BBox::new(10.0, 10.0, 50.0, 90.0);
        let ob = BBox::new(40.0, 50.0, 80.0, 80.0);
        SceneRecord {
            image_id: 3,
            width: 100,
            height: 100,
            gt_instances: vec![
                GtInstance { bbox: hb, class_id: 0, keypoints: Some(kps()), attributes: vec![] },
                GtInstance { bbox: ob, class_id: 1, keypoints: None, attributes: vec![0.1] },
            ],
            gt_pairs: vec![GroundTruthPair { human_box: hb, object_box: ob, object_class: 1, hoi_ids: vec![0, 2] }],
            detections: vec![human(hb), object(ob, 1), object(BBox::new(0.5, 0.25, 1.0 / 3.0 + 2.0, 7.0), 2)],
        }
    }

    fn dataset() -> Dataset {
        Dataset { labels: labels(), scenes: vec![scene()] }
    }

    fn round_trip(ds: &Dataset) -> Dataset {
        let mut buf = Vec::new();
        write_dataset(&mut buf, ds).unwrap();
        read_dataset(&buf[..]).unwrap()
    }

    #[test]
    fn label_from_identical_boxes() {
        let s = scene();
        assert!(derive_interactiveness_label(&s.detections[0], &s.detections[1], &s, 0.5).unwrap());
        // Same boxes, class mismatch.
        let other = object(s.detections[1].bbox, 2);
        assert!(!derive_interactiveness_label(&s.detections[0], &other, &s, 0.5).unwrap());
    }

    #[test]
    fn label_needs_both_ious() {
        let mut s = scene();
        let hb = BBox::new(0.0, 0.0, 10.0, 10.0);
        let ob = BBox::new(20.0, 0.0, 30.0, 10.0);
        s.gt_pairs = vec![GroundTruthPair { human_box: hb, object_box: ob, object_class: 1, hoi_ids: vec![0] }];
        // Human IoU 0.6 (shifted by 2.5 of 10), object IoU 0.45 (shift chosen below).
        let h = human(BBox::new(2.5, 0.0, 12.5, 10.0));
        assert!((iou(&hb, &h.bbox) - 0.6).abs() < 1e-12);
        let shift = 10.0 * (1.0 - 0.45) / (1.0 + 0.45);
        let o = object(BBox::new(20.0 + shift, 0.0, 30.0 + shift, 10.0), 1);
        assert!((iou(&ob, &o.bbox) - 0.45).abs() < 1e-12);
        assert!(!derive_interactiveness_label(&h, &o, &s, 0.5).unwrap());
        assert!(derive_interactiveness_label(&h, &o, &s, 0.45).unwrap());
    }

    #[test]
    fn label_threshold_domain() {
        let s = scene();
        for t in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(derive_interactiveness_label(&s.detections[0], &s.detections[1], &s, t).is_err());
        }
        assert!(derive_interactiveness_label(&s.detections[0], &s.detections[1], &s, 1.0).unwrap());
    }

    #[test]
    fn empty_dataset_loads() {
        let line = to_json_line(&labels()).unwrap();
        let ds = read_dataset(line.as_bytes()).unwrap();
        assert!(ds.scenes.is_empty());
        assert_eq!(ds.labels, labels());
    }

    #[test]
    fn round_trip_is_identity() {
        let ds = dataset();
        assert_eq!(round_trip(&ds), ds);
        let mut a = Vec::new();
        write_dataset(&mut a, &ds).unwrap();
        let mut b = Vec::new();
        write_dataset(&mut b, &round_trip(&ds)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reals_use_seventeen_digits() {
        let line = to_json_line(&BBox::new(0.1, 1.0, 2.0, 640.0)).unwrap();
        assert!(line.contains("1.0000000000000001e-1"), "{line}");
        assert!(line.contains("6.4000000000000000e2"), "{line}");
    }

    #[test]
    fn inverted_box_names_field() {
        let mut ds = dataset();
        ds.scenes[0].detections[1].bbox = BBox::new(60.0, 50.0, 40.0, 80.0);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        match read_dataset(&buf[..]) {
            Err(Error::Validation { field, message }) => {
                assert_eq!(field, "box");
                assert!(message.contains("line 2"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{}\n{{\"image_id\": 1,\n", to_json_line(&labels()).unwrap());
        assert!(matches!(read_dataset(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn unsupported_version_rejected() {
        let mut l = labels();
        l.format_version = 2;
        let line = to_json_line(&l).unwrap();
        assert!(matches!(read_dataset(line.as_bytes()), Err(Error::Validation { .. })));
    }

    #[test]
    fn load_clamps_scores() {
        let mut ds = dataset();
        ds.scenes[0].detections[1].score = 1.0;
        ds.scenes[0].detections[2].score = 0.0;
        let back = round_trip(&ds);
        assert_eq!(back.scenes[0].detections[1].score, 1.0 - SCORE_EPS);
        assert_eq!(back.scenes[0].detections[2].score, SCORE_EPS);
    }

    #[test]
    fn validation_examples() {
        assert!(validate_dataset(&dataset()).is_empty());

        let mut ds = dataset();
        ds.scenes[0].detections[1].score = 1.0;
        let v = validate_dataset(&ds);
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("score strictly inside (0,1)"));

        let mut ds = dataset();
        ds.scenes[0].gt_pairs[0].hoi_ids = vec![1];
        let v = validate_dataset(&ds);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "hoi_ids");
    }

    #[test]
    fn validation_catches_structure() {
        let mut ds = dataset();
        ds.scenes[0].detections[0].keypoints.as_mut().unwrap().pop();
        ds.scenes[0].detections[1].keypoints = Some(kps());
        ds.scenes.push(ds.scenes[0].clone());
        ds.labels.hoi_categories.push((0, 0));
        let fields: Vec<_> = validate_dataset(&ds).into_iter().map(|v| v.field).collect();
        assert!(fields.contains(&"image_id".to_string()));
        assert!(fields.contains(&"hoi_categories".to_string()));
        assert_eq!(fields.iter().filter(|f| *f == "keypoints").count(), 4);
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0..80.0f64, 0.0..80.0f64, 1.0..20.0f64, 1.0..20.0f64).prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn label_monotone_in_threshold(hb in arb_box(), ob in arb_box(), gh in arb_box(), go in arb_box(), t in 0.05..0.95f64, dt in 0.0..0.5f64) {
            let mut s = scene();
            s.gt_pairs = vec![GroundTruthPair { human_box: gh, object_box: go, object_class: 1, hoi_ids: vec![0] }];
            let (h, o) = (human(hb), object(ob, 1));
            let low = derive_interactiveness_label(&h, &o, &s, t).unwrap();
            let high = derive_interactiveness_label(&h, &o, &s, (t + dt).min(1.0)).unwrap();
            prop_assert!(low || !high);
        }

        #[test]
        fn label_ignores_gt_order(boxes in proptest::collection::vec((arb_box(), arb_box()), 1..5), hb in arb_box(), ob in arb_box()) {
            let mut s = scene();
            s.gt_pairs = boxes.iter().map(|&(h, o)| GroundTruthPair { human_box: h, object_box: o, object_class: 1, hoi_ids: vec![0] }).collect();
            let (h, o) = (human(hb), object(ob, 1));
            let a = derive_interactiveness_label(&h, &o, &s, 0.3).unwrap();
            s.gt_pairs.reverse();
            s.gt_pairs.rotate_left(1);
            prop_assert_eq!(a, derive_interactiveness_label(&h, &o, &s, 0.3).unwrap());
        }

        #[test]
        fn round_trip_random_scores(scores in proptest::collection::vec(1e-6..(1.0 - 1e-6f64), 3), x in 0.0..50.0f64) {
            let mut ds = dataset();
            for (d, s) in ds.scenes[0].detections.iter_mut().zip(&scores) {
                d.score = *s;
            }
            ds.scenes[0].detections[2].bbox.x1 = x;
            ds.scenes[0].detections[2].bbox.x2 = x + 1.0 / 7.0;
            prop_assert_eq!(round_trip(&ds), ds);
        }
    }
}
