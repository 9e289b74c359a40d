//! Synthetic scene generator and detection simulator.
//!
//! Two datasets share object classes and one interactiveness rule but use
//! different verb vocabularies. A human interacts with an object iff the
//! object centre lies within `proximity_radius` body lengths of the human box
//! centre and
//! the human's right arm (shoulder to wrist) points at it within
//! `angle_tolerance_deg`. The arm direction is visible only in the pose map,
//! distance in the spatial maps, and noisy "engaged" attributes give the
//! appearance features a weak correlate. Verbs depend on a latent object
//! affordance that is also observable, with noise, in the attributes.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::rng::{self, Rng};
use crate::scene::{
    self, derive_interactiveness_label, Dataset, Detection, GroundTruthPair, GtInstance, HoiLabelSpace, Keypoint,
    SceneRecord, DEFAULT_LABEL_IOU, HUMAN_CLASS, SCORE_EPS,
};

/// Number of affordance groups; verbs and objects are tied through them.
pub const AFFORDANCES: usize = 3;
/// Attribute vector length: `[engaged, affordance one-hot]`.
pub const ATTRIBUTE_DIM: usize = 1 + AFFORDANCES;

const RIGHT_SHOULDER: usize = 6;
const RIGHT_WRIST: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub train_scenes: usize,
    pub test_scenes: usize,
    pub verbs: Vec<String>,
    pub verbs_per_object: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionNoise {
    /// Box jitter as a fraction of box size.
    pub jitter: f64,
    /// Fraction of detections localized with `poor_jitter` instead.
    pub poor_rate: f64,
    pub poor_jitter: f64,
    /// Score drop per unit of IoU lost.
    pub score_slope: f64,
    pub score_noise: f64,
    /// Score range of false positives.
    pub fp_score: [f64; 2],
    /// Per scene, chance of one false-positive human and, independently,
    /// one false-positive object.
    pub fp_rate: f64,
    pub miss_rate: f64,
    /// Keypoint jitter as a fraction of human height.
    pub keypoint_noise: f64,
    pub keypoint_dropout: f64,
}

impl Default for DetectionNoise {
    fn default() -> Self {
        DetectionNoise {
            jitter: 0.04,
            poor_rate: 0.15,
            poor_jitter: 0.35,
            score_slope: 0.15,
            score_noise: 0.01,
            fp_score: [0.3, 0.9],
            fp_rate: 0.5,
            miss_rate: 0.05,
            keypoint_noise: 0.01,
            keypoint_dropout: 0.01,
        }
    }
}

impl DetectionNoise {
    pub fn zero() -> Self {
        DetectionNoise {
            jitter: 0.0,
            poor_rate: 0.0,
            poor_jitter: 0.0,
            score_slope: 0.15,
            score_noise: 0.0,
            fp_score: [0.3, 0.9],
            fp_rate: 0.0,
            miss_rate: 0.0,
            keypoint_noise: 0.0,
            keypoint_dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<String>,
    pub a: DatasetSpec,
    pub b: DatasetSpec,
    pub humans_per_scene: [usize; 2],
    pub objects_per_scene: [usize; 2],
    pub human_height: [f64; 2],
    pub object_size: [f64; 2],
    /// In body lengths (shoulder midpoint to ankle midpoint).
    pub proximity_radius: f64,
    pub angle_tolerance_deg: f64,
    /// Layouts with a pair this close to the rule boundary are redrawn.
    pub angle_margin_deg: f64,
    /// Relative to the proximity radius.
    pub distance_margin: f64,
    pub layout_attempts: usize,
    /// Chance a human is posed towards some object. `None` calibrates it
    /// so the interactive fraction of candidate pairs hits the target.
    pub p_active: Option<f64>,
    pub target_interactive_fraction: f64,
    /// Chance a non-target object is placed near some human.
    pub p_near: f64,
    pub verb_purity: f64,
    pub second_label_rate: f64,
    pub attribute_noise: f64,
    pub detection: DetectionNoise,
    /// Thresholds used when calibrating on candidate pairs.
    pub human_thresh: f64,
    pub object_thresh: f64,
    pub calibration_scenes: usize,
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            width: 640,
            height: 480,
            objects: names(&["ball", "bicycle", "bottle", "chair", "cup", "knife"]),
            a: DatasetSpec {
                name: "A".into(),
                train_scenes: 2000,
                test_scenes: 200,
                verbs: names(&[
                    "carry", "catch", "cut_with", "drink_with", "hold", "kick", "lift", "repair", "sit_on", "throw",
                ]),
                verbs_per_object: 4,
            },
            b: DatasetSpec {
                name: "B".into(),
                train_scenes: 200,
                test_scenes: 200,
                verbs: names(&["carry", "hit", "hold", "inspect", "push", "ride", "wash"]),
                verbs_per_object: 3,
            },
            humans_per_scene: [1, 4],
            objects_per_scene: [1, 5],
            human_height: [110.0, 190.0],
            object_size: [30.0, 90.0],
            proximity_radius: 1.4,
            angle_tolerance_deg: 25.0,
            angle_margin_deg: 8.0,
            distance_margin: 0.1,
            layout_attempts: 30,
            p_active: None,
            target_interactive_fraction: 0.15,
            p_near: 0.5,
            verb_purity: 0.8,
            second_label_rate: 0.3,
            attribute_noise: 0.2,
            detection: DetectionNoise::default(),
            human_thresh: 0.6,
            object_thresh: 0.4,
            calibration_scenes: 300,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let rate = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must lie in [0,1], got {v}")))
            }
        };
        let d = &self.detection;
        for (n, v) in [
            ("detection.poor_rate", d.poor_rate),
            ("detection.fp_rate", d.fp_rate),
            ("detection.miss_rate", d.miss_rate),
            ("detection.keypoint_dropout", d.keypoint_dropout),
            ("p_near", self.p_near),
            ("verb_purity", self.verb_purity),
            ("second_label_rate", self.second_label_rate),
            ("target_interactive_fraction", self.target_interactive_fraction),
            ("human_thresh", self.human_thresh),
            ("detection.fp_score[0]", d.fp_score[0]),
            ("detection.fp_score[1]", d.fp_score[1]),
            ("object_thresh", self.object_thresh),
        ] {
            rate(n, v)?;
        }
        if let Some(p) = self.p_active {
            rate("p_active", p)?;
        }
        if d.fp_score[0] >= d.fp_score[1] {
            return Err(Error::config("detection.fp_score needs min < max"));
        }
        if self.a.verbs == self.b.verbs {
            return Err(Error::config("datasets A and B must differ in at least one verb"));
        }
        for spec in [&self.a, &self.b] {
            if spec.verbs.len() < AFFORDANCES || spec.verbs_per_object == 0 || spec.verbs_per_object > spec.verbs.len() {
                return Err(Error::config(format!("dataset {}: bad verb configuration", spec.name)));
            }
        }
        if self.objects.is_empty() {
            return Err(Error::config("need at least one object class"));
        }
        let ordered = |r: [usize; 2]| r[0] <= r[1];
        if !ordered(self.humans_per_scene) || self.humans_per_scene[0] == 0 || !ordered(self.objects_per_scene) || self.objects_per_scene[0] == 0 {
            return Err(Error::config("scene counts need 1 <= min <= max"));
        }
        let positive = |r: [f64; 2]| r[0] > 0.0 && r[0] <= r[1];
        if !positive(self.human_height) || !positive(self.object_size) {
            return Err(Error::config("size ranges need 0 < min <= max"));
        }
        if self.width < 64 || self.height < 64 {
            return Err(Error::config("scene must be at least 64x64"));
        }
        if [d.jitter, d.poor_jitter, d.score_noise, d.keypoint_noise, self.attribute_noise, self.proximity_radius, self.angle_tolerance_deg, self.angle_margin_deg, self.distance_margin]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::config("noise levels and rule parameters must be non-negative"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: GenConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Affordance group of verb `v` (by index in the sorted vocabulary).
pub fn verb_affordance(v: usize) -> usize {
    v % AFFORDANCES
}

/// Label space of a dataset: sorted vocabularies, and for each object a
/// fixed set of verbs spread over the affordance groups.
pub fn label_space(spec: &DatasetSpec, objects: &[String]) -> HoiLabelSpace {
    let mut verbs = spec.verbs.clone();
    verbs.sort();
    let mut objs = objects.to_vec();
    objs.sort();
    let groups: Vec<Vec<usize>> = (0..AFFORDANCES)
        .map(|g| (0..verbs.len()).filter(|&v| verb_affordance(v) == g).collect())
        .collect();
    let mut cats = Vec::new();
    for j in 0..objs.len() {
        let mut chosen: Vec<usize> = Vec::new();
        let mut r = 0;
        while chosen.len() < spec.verbs_per_object.min(verbs.len()) {
            let group = &groups[(j + r) % AFFORDANCES];
            let mut k = (j + r / AFFORDANCES) % group.len();
            while chosen.contains(&group[k]) && chosen.len() < verbs.len() {
                k = (k + 1) % group.len();
                if k == (j + r / AFFORDANCES) % group.len() {
                    break;
                }
            }
            if !chosen.contains(&group[k]) {
                chosen.push(group[k]);
            }
            r += 1;
        }
        cats.extend(chosen.into_iter().map(|v| (v, j)));
    }
    cats.sort();
    HoiLabelSpace::new(&spec.name, verbs, objs, cats)
}

/// Centre distance in body lengths and the angle in degrees between the
/// right arm (shoulder to wrist) and the shoulder-to-object direction.
pub fn pair_geometry(keypoints: &[Keypoint], human: &BBox, object: &BBox) -> (f64, f64) {
    let (hx, hy) = human.center();
    let (ox, oy) = object.center();
    let bl = body_length(keypoints);
    let dist = if bl > 0.0 { (ox - hx).hypot(oy - hy) / bl } else { f64::INFINITY };
    let (s, w) = (keypoints[RIGHT_SHOULDER], keypoints[RIGHT_WRIST]);
    let (ax, ay) = (w.x - s.x, w.y - s.y);
    let (tx, ty) = (ox - s.x, oy - s.y);
    let (na, nt) = (ax.hypot(ay), tx.hypot(ty));
    let angle = if na == 0.0 || nt == 0.0 {
        180.0
    } else {
        ((ax * tx + ay * ty) / (na * nt)).clamp(-1.0, 1.0).acos().to_degrees()
    };
    (dist, angle)
}

/// The generating rule, checked on ground-truth geometry.
pub fn is_interactive(keypoints: &[Keypoint], human: &BBox, object: &BBox, radius: f64, tolerance_deg: f64) -> bool {
    let (d, a) = pair_geometry(keypoints, human, object);
    d < radius && a < tolerance_deg
}

fn is_ambiguous(cfg: &GenConfig, keypoints: &[Keypoint], human: &BBox, object: &BBox) -> bool {
    let (d, a) = pair_geometry(keypoints, human, object);
    let (r, t) = (cfg.proximity_radius, cfg.angle_tolerance_deg);
    let (md, ma) = (cfg.distance_margin * r, cfg.angle_margin_deg);
    let near_d = (d - r).abs() < md;
    let near_a = (a - t).abs() < ma;
    (near_a && d < r + md) || (near_d && a < t + ma)
}

/// Distance from the shoulder midpoint to the ankle midpoint.
pub fn body_length(keypoints: &[Keypoint]) -> f64 {
    let mid = |a: usize, b: usize| (0.5 * (keypoints[a].x + keypoints[b].x), 0.5 * (keypoints[a].y + keypoints[b].y));
    let (s, a) = (mid(5, 6), mid(15, 16));
    (a.0 - s.0).hypot(a.1 - s.1)
}

/// Standing pose of height `h` centred at `(cx, cy)` with the right arm at
/// angle `theta` and the left arm at `left`.
fn pose(cx: f64, cy: f64, h: f64, theta: f64, left: f64) -> Vec<Keypoint> {
    let rel = [
        (0.0, -0.42),
        (-0.02, -0.44),
        (0.02, -0.44),
        (-0.05, -0.43),
        (0.05, -0.43),
        (-0.12, -0.30),
        (0.12, -0.30),
    ];
    let mut k: Vec<(f64, f64)> = rel.iter().map(|&(x, y)| (x * h, y * h)).collect();
    let (ls, rs) = (k[5], k[6]);
    let arm = 0.15 * h;
    let at = |o: (f64, f64), a: f64, d: f64| (o.0 + d * a.cos(), o.1 + d * a.sin());
    let left_elbow = at(ls, left, arm);
    let right_elbow = at(rs, theta, arm);
    k.push(left_elbow);
    k.push(right_elbow);
    k.push(at(left_elbow, left, arm));
    k.push(at(right_elbow, theta, arm));
    for &(x, y) in &[(-0.08, 0.02), (0.08, 0.02), (-0.09, 0.27), (0.09, 0.27), (-0.09, 0.5), (0.09, 0.5)] {
        k.push((x * h, y * h));
    }
    k.into_iter().map(|(x, y)| Keypoint { x: cx + x, y: cy + y, visible: true }).collect()
}

fn clip_box(b: BBox, w: f64, h: f64) -> Option<BBox> {
    let c = BBox::new(b.x1.max(0.0), b.y1.max(0.0), b.x2.min(w), b.y2.min(h));
    (c.width() >= 2.0 && c.height() >= 2.0).then_some(c)
}

fn keypoint_box(kps: &[Keypoint], h: f64, w: f64, img_h: f64) -> Option<BBox> {
    let m = 0.05 * h;
    let x1 = kps.iter().map(|k| k.x).fold(f64::INFINITY, f64::min) - m;
    let y1 = kps.iter().map(|k| k.y).fold(f64::INFINITY, f64::min) - m;
    let x2 = kps.iter().map(|k| k.x).fold(f64::NEG_INFINITY, f64::max) + m;
    let y2 = kps.iter().map(|k| k.y).fold(f64::NEG_INFINITY, f64::max) + m;
    clip_box(BBox::new(x1, y1, x2, y2), w, img_h)
}

struct Human {
    cx: f64,
    cy: f64,
    h: f64,
    theta: f64,
    left: f64,
    kps: Vec<Keypoint>,
    bbox: BBox,
}

impl Human {
    fn pose_towards(&mut self, target: (f64, f64), delta: f64, w: f64, img_h: f64) -> bool {
        let s = self.kps[RIGHT_SHOULDER];
        self.theta = (target.1 - s.y).atan2(target.0 - s.x) + delta;
        self.kps = pose(self.cx, self.cy, self.h, self.theta, self.left);
        match keypoint_box(&self.kps, self.h, w, img_h) {
            Some(b) => {
                self.bbox = b;
                true
            }
            None => false,
        }
    }
}

fn random_human(cfg: &GenConfig, r: &mut Rng) -> Human {
    let (w, img_h) = (cfg.width as f64, cfg.height as f64);
    loop {
        let h = r.random_range(cfg.human_height[0]..=cfg.human_height[1]);
        let cx = r.random_range(0.08 * w..0.92 * w);
        let cy = r.random_range(0.45 * h..(img_h - 0.45 * h).max(0.45 * h + 1.0));
        let theta = r.random_range(-PI..PI);
        let left = PI / 2.0 + r.random_range(-0.35..0.35);
        let kps = pose(cx, cy, h, theta, left);
        if let Some(bbox) = keypoint_box(&kps, h, w, img_h) {
            return Human { cx, cy, h, theta, left, kps, bbox };
        }
    }
}

fn object_box_at(c: (f64, f64), size: (f64, f64), w: f64, h: f64) -> Option<BBox> {
    let b = BBox::new(c.0 - size.0 / 2.0, c.1 - size.1 / 2.0, c.0 + size.0 / 2.0, c.1 + size.1 / 2.0);
    clip_box(b, w, h).filter(|cb| cb.area() >= 0.5 * b.area())
}

struct Object {
    class_id: usize,
    affordance: usize,
    bbox: BBox,
}

fn one_hot(a: usize) -> [f64; AFFORDANCES] {
    let mut v = [0.0; AFFORDANCES];
    v[a] = 1.0;
    v
}

fn sample_verbs(labels: &HoiLabelSpace, class_id: usize, affordance: usize, cfg: &GenConfig, r: &mut Rng) -> Vec<usize> {
    let cats = labels.categories_for_class(class_id);
    let weight = |h: usize| {
        if verb_affordance(labels.hoi_categories[h].0) == affordance {
            cfg.verb_purity
        } else {
            1.0 - cfg.verb_purity
        }
    };
    let draw = |pool: &[usize], r: &mut Rng| -> usize {
        let total: f64 = pool.iter().map(|&h| weight(h)).sum();
        if total <= 0.0 {
            return *pool.choose(r).expect("non-empty pool");
        }
        let mut u = r.random::<f64>() * total;
        for &h in pool {
            u -= weight(h);
            if u < 0.0 {
                return h;
            }
        }
        *pool.last().expect("non-empty pool")
    };
    let first = draw(&cats, r);
    let mut out = vec![first];
    if cats.len() > 1 && r.random::<f64>() < cfg.second_label_rate {
        let rest: Vec<usize> = cats.iter().copied().filter(|&h| h != first).collect();
        out.push(draw(&rest, r));
    }
    out.sort_unstable();
    out
}

/// Ground-truth scene (no detections) for one image.
pub fn generate_scene(cfg: &GenConfig, labels: &HoiLabelSpace, p_active: f64, image_id: u64, r: &mut Rng) -> SceneRecord {
    let n_h = r.random_range(cfg.humans_per_scene[0]..=cfg.humans_per_scene[1]);
    let n_o = r.random_range(cfg.objects_per_scene[0]..=cfg.objects_per_scene[1]);
    let mut attempt = 0;
    let (humans, objects) = loop {
        let (humans, objects) = layout(cfg, p_active, n_h, n_o, r);
        attempt += 1;
        let clear = humans
            .iter()
            .all(|h| objects.iter().all(|o| !is_ambiguous(cfg, &h.kps, &h.bbox, &o.bbox)));
        if clear || attempt >= cfg.layout_attempts.max(1) {
            break (humans, objects);
        }
    };
    let radius = cfg.proximity_radius;
    let inter: Vec<Vec<bool>> = humans
        .iter()
        .map(|h| {
            objects
                .iter()
                .map(|o| is_interactive(&h.kps, &h.bbox, &o.bbox, radius, cfg.angle_tolerance_deg))
                .collect()
        })
        .collect();
    let mut gt_instances = Vec::with_capacity(n_h + n_o);
    for (i, h) in humans.iter().enumerate() {
        let engaged = inter[i].iter().any(|&b| b) as u8 as f64;
        gt_instances.push(GtInstance {
            bbox: h.bbox,
            class_id: HUMAN_CLASS,
            keypoints: Some(h.kps.clone()),
            attributes: vec![engaged, 0.0, 0.0, 0.0],
        });
    }
    for (j, o) in objects.iter().enumerate() {
        let engaged = inter.iter().any(|row| row[j]) as u8 as f64;
        let mut attributes = vec![engaged];
        attributes.extend(one_hot(o.affordance));
        gt_instances.push(GtInstance { bbox: o.bbox, class_id: o.class_id, keypoints: None, attributes });
    }
    let mut gt_pairs = Vec::new();
    for (i, h) in humans.iter().enumerate() {
        for (j, o) in objects.iter().enumerate() {
            if inter[i][j] {
                gt_pairs.push(GroundTruthPair {
                    human_box: h.bbox,
                    object_box: o.bbox,
                    object_class: o.class_id,
                    hoi_ids: sample_verbs(labels, o.class_id, o.affordance, cfg, r),
                });
            }
        }
    }
    SceneRecord { image_id, width: cfg.width, height: cfg.height, gt_instances, gt_pairs, detections: Vec::new() }
}


fn layout(cfg: &GenConfig, p_active: f64, n_h: usize, n_o: usize, r: &mut Rng) -> (Vec<Human>, Vec<Object>) {
    let (w, img_h) = (cfg.width as f64, cfg.height as f64);
    let mut humans: Vec<Human> = (0..n_h).map(|_| random_human(cfg, r)).collect();
    let active: Vec<bool> = (0..n_h).map(|_| r.random::<f64>() < p_active).collect();
    let tol = cfg.angle_tolerance_deg.to_radians();
    let radius = cfg.proximity_radius;
    // Pose template: shoulders at -0.30 H, ankles at +0.50 H.
    let reach = |h: &Human| radius * 0.8 * h.h;
    let mut objects: Vec<Object> = Vec::with_capacity(n_o);
    let mut pending: Vec<usize> = (0..n_h).filter(|&i| active[i]).collect();
    for _ in 0..n_o {
        let class_id = r.random_range(1..=cfg.objects.len());
        let affordance = r.random_range(0..AFFORDANCES);
        let s = cfg.object_size;
        let size = (r.random_range(s[0]..=s[1]), r.random_range(s[0]..=s[1]));
        let mut placed = None;
        if let Some(hi) = pending.first().copied().filter(|_| radius > 0.0) {
            pending.remove(0);
            for _ in 0..20 {
                let (hx, hy) = humans[hi].bbox.center();
                let phi = r.random_range(-PI..PI);
                let d = r.random_range(0.3 * reach(&humans[hi])..0.85 * reach(&humans[hi]));
                let c = (hx + d * phi.cos(), hy + d * phi.sin());
                let Some(b) = object_box_at(c, size, w, img_h) else { continue };
                let delta = r.random_range(-0.5 * tol..0.5 * tol);
                let saved = (humans[hi].theta, humans[hi].kps.clone(), humans[hi].bbox);
                if humans[hi].pose_towards(b.center(), delta, w, img_h)
                    && is_interactive(&humans[hi].kps, &humans[hi].bbox, &b, radius, cfg.angle_tolerance_deg)
                {
                    placed = Some(b);
                    break;
                }
                (humans[hi].theta, humans[hi].kps, humans[hi].bbox) = saved;
            }
        }
        if placed.is_none() && r.random::<f64>() < cfg.p_near {
            let hi = r.random_range(0..n_h);
            for _ in 0..20 {
                let (hx, hy) = humans[hi].bbox.center();
                let phi = r.random_range(-PI..PI);
                let rr = reach(&humans[hi]).max(1.0);
                let d = r.random_range(0.3 * rr..1.1 * rr);
                if let Some(b) = object_box_at((hx + d * phi.cos(), hy + d * phi.sin()), size, w, img_h) {
                    placed = Some(b);
                    break;
                }
            }
        }
        let bbox = placed.unwrap_or_else(|| loop {
            let c = (r.random_range(0.0..w), r.random_range(0.0..img_h));
            if let Some(b) = object_box_at(c, size, w, img_h) {
                break b;
            }
        });
        objects.push(Object { class_id, affordance, bbox });
    }
    (humans, objects)
}

fn noisy(v: &[f64], sigma: f64, r: &mut Rng) -> Vec<f64> {
    if sigma == 0.0 {
        return v.to_vec();
    }
    let n = Normal::new(0.0, sigma).expect("valid sigma");
    v.iter().map(|x| x + n.sample(r)).collect()
}

fn gauss(sigma: f64, r: &mut Rng) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("valid sigma").sample(r)
    }
}

fn jitter_box(b: &BBox, sigma: f64, w: f64, h: f64, r: &mut Rng) -> BBox {
    if sigma == 0.0 {
        return *b;
    }
    for _ in 0..20 {
        let (bw, bh) = (b.width(), b.height());
        let j = BBox::new(
            b.x1 + gauss(sigma * bw, r),
            b.y1 + gauss(sigma * bh, r),
            b.x2 + gauss(sigma * bw, r),
            b.y2 + gauss(sigma * bh, r),
        );
        if let Some(c) = clip_box(j, w, h) {
            return c;
        }
    }
    *b
}

fn score_for(quality: f64, d: &DetectionNoise, r: &mut Rng) -> f64 {
    (1.0 - d.score_slope * (1.0 - quality) - gauss(d.score_noise, r).abs()).clamp(SCORE_EPS, 1.0 - SCORE_EPS)
}

/// Add simulated detections to a ground-truth scene.
pub fn simulate_detections(scene: &mut SceneRecord, cfg: &GenConfig, r: &mut Rng) {
    let d = &cfg.detection;
    let (w, h) = (scene.width as f64, scene.height as f64);
    let mut dets = Vec::new();
    for (i, g) in scene.gt_instances.iter().enumerate() {
        if r.random::<f64>() < d.miss_rate {
            continue;
        }
        let sigma = if r.random::<f64>() < d.poor_rate { d.poor_jitter } else { d.jitter };
        let bbox = jitter_box(&g.bbox, sigma, w, h, r);
        let score = score_for(iou(&bbox, &g.bbox), d, r);
        let keypoints = g.keypoints.as_ref().map(|kps| {
            let s = d.keypoint_noise * g.bbox.height();
            kps.iter()
                .map(|k| Keypoint {
                    x: k.x + gauss(s, r),
                    y: k.y + gauss(s, r),
                    visible: k.visible && r.random::<f64>() >= d.keypoint_dropout,
                })
                .collect()
        });
        let attributes = noisy(&g.attributes, cfg.attribute_noise, r);
        dets.push(Detection { bbox, class_id: g.class_id, score, keypoints, attributes, source: Some(i) });
    }
    if r.random::<f64>() < d.fp_rate {
        let hm = random_human(cfg, r);
        let attributes = noisy(&[0.0; ATTRIBUTE_DIM], cfg.attribute_noise, r);
        let kps = hm.kps.iter().map(|k| Keypoint { visible: r.random::<f64>() >= d.keypoint_dropout, ..*k }).collect();
        let score = r.random_range(d.fp_score[0]..d.fp_score[1]);
        dets.push(Detection { bbox: hm.bbox, class_id: HUMAN_CLASS, score, keypoints: Some(kps), attributes, source: None });
    }
    if r.random::<f64>() < d.fp_rate {
        let s = cfg.object_size;
        let bbox = loop {
            let c = (r.random_range(0.0..w), r.random_range(0.0..h));
            let size = (r.random_range(s[0]..=s[1]), r.random_range(s[0]..=s[1]));
            if let Some(b) = object_box_at(c, size, w, h) {
                break b;
            }
        };
        let mut attrs = vec![0.0];
        attrs.extend(one_hot(r.random_range(0..AFFORDANCES)));
        let attributes = noisy(&attrs, cfg.attribute_noise, r);
        let class_id = r.random_range(1..=cfg.objects.len());
        let score = r.random_range(d.fp_score[0]..d.fp_score[1]);
        dets.push(Detection { bbox, class_id, score, keypoints: None, attributes, source: None });
    }
    scene.detections = dets;
}

fn generate_split(cfg: &GenConfig, labels: &HoiLabelSpace, p_active: f64, stream: &str, count: usize) -> Vec<SceneRecord> {
    (0..count)
        .map(|i| {
            let mut r = rng::indexed(cfg.seed, stream, i as u64);
            let mut s = generate_scene(cfg, labels, p_active, i as u64, &mut r);
            simulate_detections(&mut s, cfg, &mut r);
            s
        })
        .collect()
}

/// Fraction of candidate pairs (after score thresholds) that are
/// interactive, over `scenes`.
pub fn interactive_fraction(scenes: &[SceneRecord], human_thresh: f64, object_thresh: f64) -> f64 {
    let (mut pos, mut total) = (0usize, 0usize);
    for s in scenes {
        for (h, o) in scene::candidate_index_pairs(s, human_thresh, object_thresh) {
            total += 1;
            pos += derive_interactiveness_label(&s.detections[h], &s.detections[o], s, DEFAULT_LABEL_IOU).unwrap_or(false) as usize;
        }
    }
    if total == 0 {
        0.0
    } else {
        pos as f64 / total as f64
    }
}

/// Pick `p_active` by bisection on pilot scenes so the candidate-pair
/// interactive fraction matches the configured target.
pub fn calibrate_p_active(cfg: &GenConfig) -> f64 {
    let labels = label_space(&cfg.b, &cfg.objects);
    let frac = |p: f64| {
        let pilot = generate_split(cfg, &labels, p, "calibration", cfg.calibration_scenes);
        interactive_fraction(&pilot, cfg.human_thresh, cfg.object_thresh)
    };
    let target = cfg.target_interactive_fraction;
    if frac(1.0) <= target {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..12 {
        let mid = 0.5 * (lo + hi);
        if frac(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The four splits of a generated dataset pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPair {
    pub p_active: f64,
    pub a_train: Dataset,
    pub a_test: Dataset,
    pub b_train: Dataset,
    pub b_test: Dataset,
}

impl DatasetPair {
    pub fn split(&self, dataset: &str, train: bool) -> Option<&Dataset> {
        match (dataset, train) {
            ("A", true) => Some(&self.a_train),
            ("A", false) => Some(&self.a_test),
            ("B", true) => Some(&self.b_train),
            ("B", false) => Some(&self.b_test),
            _ => None,
        }
    }
}

pub fn generate_dataset_pair(cfg: &GenConfig) -> Result<DatasetPair> {
    cfg.validate()?;
    let p_active = cfg.p_active.unwrap_or_else(|| calibrate_p_active(cfg));
    let make = |spec: &DatasetSpec| {
        let labels = label_space(spec, &cfg.objects);
        let train = generate_split(cfg, &labels, p_active, &format!("{}/train", spec.name), spec.train_scenes);
        let test = generate_split(cfg, &labels, p_active, &format!("{}/test", spec.name), spec.test_scenes);
        (Dataset { labels: labels.clone(), scenes: train }, Dataset { labels, scenes: test })
    };
    let (a_train, a_test) = make(&cfg.a);
    let (b_train, b_test) = make(&cfg.b);
    Ok(DatasetPair { p_active, a_train, a_test, b_train, b_test })
}

pub fn split_file_name(dataset: &str, train: bool) -> String {
    format!("{dataset}_{}.jsonl", if train { "train" } else { "test" })
}

/// Write the four splits into `dir`; returns their paths.
pub fn write_dataset_pair(pair: &DatasetPair, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for (name, train, ds) in [
        ("A", true, &pair.a_train),
        ("A", false, &pair.a_test),
        ("B", true, &pair.b_train),
        ("B", false, &pair.b_test),
    ] {
        let path = dir.join(split_file_name(name, train));
        scene::save_dataset(&path, ds)?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::validate_dataset;

    fn small_cfg() -> GenConfig {
        let mut cfg = GenConfig { seed: 3, p_active: Some(0.6), ..GenConfig::default() };
        cfg.a.train_scenes = 30;
        cfg.a.test_scenes = 10;
        cfg.b.train_scenes = 20;
        cfg.b.test_scenes = 10;
        cfg.calibration_scenes = 60;
        cfg
    }

    fn scenes(cfg: &GenConfig, n: usize, p: f64) -> Vec<SceneRecord> {
        let labels = label_space(&cfg.b, &cfg.objects);
        generate_split(cfg, &labels, p, "t", n)
    }

    #[test]
    fn label_spaces_differ_and_are_valid() {
        let cfg = GenConfig::default();
        let a = label_space(&cfg.a, &cfg.objects);
        let b = label_space(&cfg.b, &cfg.objects);
        assert_ne!(a.verbs, b.verbs);
        assert_eq!(a.objects, b.objects);
        assert_eq!(a.num_categories(), 6 * 4);
        assert_eq!(b.num_categories(), 6 * 3);
        for ls in [&a, &b] {
            let ds = Dataset { labels: ls.clone(), scenes: vec![] };
            assert!(validate_dataset(&ds).is_empty());
            let mut sorted = ls.hoi_categories.clone();
            sorted.sort();
            assert_eq!(sorted, ls.hoi_categories);
            for class in 1..=6 {
                let groups: std::collections::HashSet<_> = ls
                    .categories_for_class(class)
                    .iter()
                    .map(|&h| verb_affordance(ls.hoi_categories[h].0))
                    .collect();
                assert_eq!(groups.len(), AFFORDANCES);
            }
        }
    }

    #[test]
    fn zero_radius_gives_no_interactions() {
        let cfg = GenConfig { proximity_radius: 0.0, ..small_cfg() };
        for s in scenes(&cfg, 50, 1.0) {
            assert!(s.gt_pairs.is_empty());
        }
    }

    #[test]
    fn labels_follow_the_rule() {
        let cfg = small_cfg();
        let mut n_pos = 0;
        for s in scenes(&cfg, 1000, 0.6) {
            let humans: Vec<_> = s.gt_instances.iter().filter(|g| g.class_id == 0).collect();
            let objects: Vec<_> = s.gt_instances.iter().filter(|g| g.class_id != 0).collect();
            for h in &humans {
                for o in &objects {
                    let rule = is_interactive(h.keypoints.as_ref().unwrap(), &h.bbox, &o.bbox, cfg.proximity_radius, cfg.angle_tolerance_deg);
                    let annotated = s.gt_pairs.iter().any(|p| p.human_box == h.bbox && p.object_box == o.bbox);
                    assert_eq!(rule, annotated);
                    n_pos += rule as usize;
                }
            }
        }
        assert!(n_pos > 500, "{n_pos}");
    }

    #[test]
    fn same_seed_same_scene() {
        let cfg = small_cfg();
        assert_eq!(scenes(&cfg, 3, 0.5), scenes(&cfg, 3, 0.5));
        let other = GenConfig { seed: 4, ..small_cfg() };
        assert_ne!(scenes(&cfg, 3, 0.5), scenes(&other, 3, 0.5));
    }

    #[test]
    fn zero_noise_detections_equal_ground_truth() {
        let cfg = GenConfig { detection: DetectionNoise::zero(), attribute_noise: 0.0, ..small_cfg() };
        for s in scenes(&cfg, 20, 0.5) {
            assert_eq!(s.detections.len(), s.gt_instances.len());
            for (d, g) in s.detections.iter().zip(&s.gt_instances) {
                assert_eq!(d.bbox, g.bbox);
                assert_eq!(d.class_id, g.class_id);
                assert_eq!(d.score, 1.0 - SCORE_EPS);
                assert_eq!(d.keypoints, g.keypoints);
                assert_eq!(d.attributes, g.attributes);
            }
        }
    }

    #[test]
    fn score_tracks_localization() {
        let cfg = small_cfg();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for s in scenes(&cfg, 400, 0.5) {
            for d in &s.detections {
                if let Some(i) = d.source {
                    xs.push(d.score);
                    ys.push(iou(&d.bbox, &s.gt_instances[i].bbox));
                }
            }
        }
        assert!(xs.len() >= 1000);
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        assert!(cov / (vx * vy).sqrt() > 0.5);
    }

    #[test]
    fn false_positive_rate_within_three_sigma() {
        let cfg = small_cfg();
        let n = 1000;
        let fp: usize = scenes(&cfg, n, 0.5).iter().map(|s| s.detections.iter().filter(|d| d.source.is_none()).count()).sum();
        // Two independent trials per scene.
        let trials = 2.0 * n as f64;
        let p = cfg.detection.fp_rate;
        let sd = (trials * p * (1.0 - p)).sqrt();
        assert!((fp as f64 - trials * p).abs() <= 3.0 * sd, "{fp}");
    }

    #[test]
    fn scenes_are_valid() {
        let cfg = small_cfg();
        let pair = generate_dataset_pair(&cfg).unwrap();
        for ds in [&pair.a_train, &pair.a_test, &pair.b_train, &pair.b_test] {
            let v = validate_dataset(ds);
            assert!(v.is_empty(), "{}", v[0]);
        }
        assert_eq!(pair.a_train.scenes.len(), 30);
        assert_ne!(pair.a_train.labels, pair.b_train.labels);
        for s in &pair.b_train.scenes {
            assert!((1..=4).contains(&s.gt_instances.iter().filter(|g| g.class_id == 0).count()));
            assert!((1..=5).contains(&s.gt_instances.iter().filter(|g| g.class_id != 0).count()));
        }
    }

    #[test]
    fn calibration_hits_target() {
        let mut cfg = small_cfg();
        cfg.p_active = None;
        cfg.calibration_scenes = 300;
        let p = calibrate_p_active(&cfg);
        assert!(p > 0.0 && p < 1.0);
        let labels = label_space(&cfg.b, &cfg.objects);
        let fresh = generate_split(&cfg, &labels, p, "fresh", 600);
        let f = interactive_fraction(&fresh, cfg.human_thresh, cfg.object_thresh);
        assert!((f - cfg.target_interactive_fraction).abs() < 0.05, "{f}");
        assert!(f < 0.35);
    }

    #[test]
    fn files_round_trip() {
        let cfg = small_cfg();
        let pair = generate_dataset_pair(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_dataset_pair(&pair, dir.path()).unwrap();
        assert_eq!(scene::load_dataset(&paths[2]).unwrap(), pair.b_train);
    }

    #[test]
    fn config_validation() {
        assert!(GenConfig::default().validate().is_ok());
        let mut bad = GenConfig::default();
        bad.b.verbs = bad.a.verbs.clone();
        assert!(bad.validate().is_err());
        let bad = GenConfig { p_near: 1.5, ..GenConfig::default() };
        assert!(bad.validate().is_err());
        let text = toml::to_string(&GenConfig::default()).unwrap();
        assert_eq!(GenConfig::from_toml(&text).unwrap(), GenConfig::default());
    }
}
