//! Pair candidates, image-centric minibatches, the joint loss and the five
//! training modes.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, union_box, UnionBox};
use crate::networks::{build_shared, CNet, FeatureExtractor, Model, ModelMeta, NetConfig, PNet, PairInputs, CLASSIFIER_LAYERS};
use crate::nn::{sgd_step, sigmoid, Gradients, ParamStore, SgdConfig, SgdState, Tensor};
use crate::raster::{build_spatial_map, build_spatial_pose_tensor};
use crate::rng::{self, Rng};
use crate::scene::{candidate_index_pairs, Dataset, SceneRecord, DEFAULT_LABEL_IOU};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "RP_D_C_D")]
    RpDCD,
    #[serde(rename = "RP_T1_C_D")]
    RpT1CD,
    #[serde(rename = "RP_T2_C_D")]
    RpT2CD,
    #[serde(rename = "RC_D")]
    RcD,
    #[serde(rename = "RC_T")]
    RcT,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::RpDCD, Mode::RpT1CD, Mode::RpT2CD, Mode::RcD, Mode::RcT];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::RpDCD => "RP_D_C_D",
            Mode::RpT1CD => "RP_T1_C_D",
            Mode::RpT2CD => "RP_T2_C_D",
            Mode::RcD => "RC_D",
            Mode::RcT => "RC_T",
        }
    }

    pub fn has_p(&self) -> bool {
        matches!(self, Mode::RpDCD | Mode::RpT1CD | Mode::RpT2CD)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown mode {s}")))
    }
}

/// Which datasets each network trains on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub mode: Mode,
    pub p_train_sets: Vec<String>,
    pub c_train_set: String,
    /// RC_T only: dataset C is trained on before its classifier is
    /// replaced and fine-tuned on `c_train_set`.
    pub c_pretrain_set: Option<String>,
    pub test_set: String,
    pub sharing_enabled: bool,
}

impl ModeConfig {
    /// The standard configuration of `mode` for `target`, with `source` as
    /// the other dataset used by the transfer modes.
    pub fn standard(mode: Mode, target: &str, source: &str) -> Self {
        let t = target.to_string();
        let (p, pre) = match mode {
            Mode::RpDCD => (vec![t.clone()], None),
            Mode::RpT1CD => (vec![source.to_string()], None),
            Mode::RpT2CD => (vec![source.to_string(), t.clone()], None),
            Mode::RcD => (vec![], None),
            Mode::RcT => (vec![], Some(source.to_string())),
        };
        ModeConfig {
            mode,
            p_train_sets: p,
            c_train_set: t.clone(),
            c_pretrain_set: pre,
            test_set: t,
            sharing_enabled: mode == Mode::RpDCD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(format!("{}: {m}", self.mode)));
        let p = &self.p_train_sets;
        match self.mode {
            Mode::RpDCD if p.len() != 1 || p[0] != self.c_train_set => bad("P and C must train on the same single dataset"),
            Mode::RpT1CD if p.len() != 1 || p[0] == self.c_train_set => bad("P must train on one dataset other than C's"),
            Mode::RpT2CD if p.len() != 2 || p[0] == p[1] => bad("P must train on two distinct datasets"),
            Mode::RpT2CD if !p.contains(&self.c_train_set) => bad("P's datasets must include the target"),
            Mode::RcD | Mode::RcT if !p.is_empty() => bad("no P is trained in this mode"),
            Mode::RcT if self.c_pretrain_set.as_ref().is_none_or(|s| *s == self.c_train_set) => {
                bad("C needs a pre-training dataset other than the target")
            }
            m if m != Mode::RcT && self.c_pretrain_set.is_some() => bad("only RC_T pre-trains C"),
            m if m != Mode::RpDCD && self.sharing_enabled => bad("sharing is only defined for joint training"),
            _ => Ok(()),
        }
    }

    /// Every dataset the mode reads for training.
    pub fn train_sets(&self) -> Vec<String> {
        let mut v: Vec<String> = self.p_train_sets.clone();
        v.push(self.c_train_set.clone());
        v.extend(self.c_pretrain_set.clone());
        v.sort();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// Epoch count for phases that train on transfer source data (P in
    /// the transfer modes, C pretraining); defaults to `epochs`.
    pub source_epochs: Option<usize>,
    pub finetune_epochs: usize,
    pub pos_neg_ratio: [usize; 2],
    pub human_thresh: f64,
    pub object_thresh: f64,
    pub label_iou: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            weight_decay: 1e-4,
            momentum: 0.9,
            epochs: 25,
            source_epochs: None,
            finetune_epochs: 1,
            pos_neg_ratio: [1, 3],
            human_thresh: 0.6,
            object_thresh: 0.4,
            label_iou: DEFAULT_LABEL_IOU,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |n: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{n} must lie in (0,1), got {v}")))
            }
        };
        open("human_thresh", self.human_thresh)?;
        open("object_thresh", self.object_thresh)?;
        if !(self.label_iou > 0.0 && self.label_iou <= 1.0) {
            return Err(Error::config("label_iou must lie in (0,1]"));
        }
        if self.pos_neg_ratio.contains(&0) {
            return Err(Error::config("pos_neg_ratio components must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("need lr > 0, weight_decay >= 0 and momentum in [0,1)"));
        }
        Ok(())
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig { lr: self.lr, momentum: self.momentum, weight_decay: self.weight_decay }
    }
}

/// A thresholded (human, object) detection pair with its training labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCandidate {
    pub human: usize,
    pub object: usize,
    pub union: UnionBox,
    /// Both boxes overlap one ground-truth pair of the object's class.
    pub interactive: bool,
    /// HOI categories of the best-overlapping matching ground-truth pair.
    pub hoi_labels: Vec<usize>,
}

pub fn candidate_pairs(scene: &SceneRecord, human_thresh: f64, object_thresh: f64, label_iou: f64) -> Vec<PairCandidate> {
    candidate_index_pairs(scene, human_thresh, object_thresh)
        .into_iter()
        .map(|(h, o)| {
            let (hd, od) = (&scene.detections[h], &scene.detections[o]);
            let best = scene
                .gt_pairs
                .iter()
                .filter(|g| g.object_class == od.class_id)
                .map(|g| (iou(&g.human_box, &hd.bbox).min(iou(&g.object_box, &od.bbox)), g))
                .filter(|(m, _)| *m >= label_iou)
                .fold(None::<(f64, &crate::scene::GroundTruthPair)>, |acc, x| match acc {
                    Some(a) if a.0 >= x.0 => Some(a),
                    _ => Some(x),
                });
            PairCandidate {
                human: h,
                object: o,
                union: union_box(&hd.bbox, &od.bbox),
                interactive: best.is_some(),
                hoi_labels: best.map(|(_, g)| g.hoi_ids.clone()).unwrap_or_default(),
            }
        })
        .collect()
}

/// Materialize network inputs (features and maps) for `pairs` of `scene`.
pub fn build_inputs(scene: &SceneRecord, pairs: &[PairCandidate], fx: &FeatureExtractor, grid: usize) -> Result<PairInputs> {
    let n = pairs.len();
    let f = fx.dim();
    let cells = grid * grid;
    let mut hf = Vec::with_capacity(n * f);
    let mut of = Vec::with_capacity(n * f);
    let mut pose = vec![0.0; n * cells * 3];
    let mut spatial = vec![0.0; n * cells * 2];
    let mut hs = Vec::with_capacity(n);
    let mut os = Vec::with_capacity(n);
    let mut cache: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        let (hd, od) = (&scene.detections[p.human], &scene.detections[p.object]);
        for (idx, out) in [(p.human, &mut hf), (p.object, &mut of)] {
            let feat = cache.entry(idx).or_insert_with(|| fx.extract(&scene.detections[idx]));
            out.extend_from_slice(feat);
        }
        build_spatial_pose_tensor(&hd.bbox, &od.bbox, hd.keypoints.as_deref(), grid)?
            .write_hwc(&mut pose[i * cells * 3..(i + 1) * cells * 3]);
        build_spatial_map(&hd.bbox, &od.bbox, grid)?.write_hwc(&mut spatial[i * cells * 2..(i + 1) * cells * 2]);
        hs.push(hd.score);
        os.push(od.score);
    }
    Ok(PairInputs {
        human_feat: Tensor::new(vec![n, f], hf),
        object_feat: Tensor::new(vec![n, f], of),
        pose_map: Tensor::new(vec![n, grid, grid, 3], pose),
        spatial_map: Tensor::new(vec![n, grid, grid, 2], spatial),
        human_score: hs,
        object_score: os,
    })
}

/// Keep every positive and `neg/pos` negatives per positive, drawn without
/// replacement; an image without positives contributes up to `neg`
/// negatives. Output keeps the input order.
pub fn sample_minibatch(pairs: &[PairCandidate], ratio: [usize; 2], r: &mut Rng) -> Vec<PairCandidate> {
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..pairs.len()).partition(|&i| pairs[i].interactive);
    let want = if pos.is_empty() { ratio[1] } else { pos.len().div_ceil(ratio[0]) * ratio[1] };
    let mut take: Vec<usize> = if want >= neg.len() {
        neg
    } else {
        rand::seq::index::sample(r, neg.len(), want).into_iter().map(|k| neg[k]).collect()
    };
    take.extend(pos);
    take.sort_unstable();
    take.into_iter().map(|i| pairs[i].clone()).collect()
}

/// Multi-hot `[n, K]` HOI targets; negatives are all zero.
pub fn hoi_targets(pairs: &[PairCandidate], num_categories: usize) -> Tensor {
    let mut t = Tensor::zeros(vec![pairs.len(), num_categories]);
    for (i, p) in pairs.iter().enumerate() {
        for &h in &p.hoi_labels {
            t.data[i * num_categories + h] = 1.0;
        }
    }
    t
}

/// Binary cross-entropy on a logit, computed stably.
pub fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Which loss terms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossTerms {
    pub c: bool,
    pub p: bool,
}

impl LossTerms {
    pub const JOINT: LossTerms = LossTerms { c: true, p: true };
    pub const C_ONLY: LossTerms = LossTerms { c: true, p: false };
    pub const P_ONLY: LossTerms = LossTerms { c: false, p: true };
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub loss_c: Option<f64>,
    pub loss_p: Option<f64>,
    pub grads: Gradients,
}

/// `L = L^C + L^P` with gradients. `L^C` is the mean binary cross-entropy
/// over pairs and categories; `L^P` the mean binary cross-entropy of the
/// pre-LIS interactiveness output.
pub fn joint_loss(
    p: Option<&PNet>,
    c: Option<&CNet>,
    params: &ParamStore,
    x: &PairInputs,
    targets: &Tensor,
    interactive: &[bool],
    terms: LossTerms,
) -> Result<LossOutput> {
    if x.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let n = x.len();
    let mut grads = Gradients::for_store(params);
    let mut loss_c = None;
    let mut loss_p = None;
    if terms.c {
        let c = c.ok_or_else(|| Error::config("loss needs C"))?;
        let out = c.forward(params, x)?;
        let k = c.num_categories();
        let scale = 1.0 / (n * k) as f64;
        let mut l = 0.0;
        let mut d = Tensor::zeros(out.logits.shape.clone());
        for ((z, y), g) in out.logits.data.iter().zip(&targets.data).zip(d.data.iter_mut()) {
            l += bce_with_logit(*z, *y);
            *g = (sigmoid(*z) - y) * scale;
        }
        c.backward(params, &out.cache, &d, &mut grads)?;
        loss_c = Some(l * scale);
    }
    if terms.p {
        let p = p.ok_or_else(|| Error::config("loss needs P"))?;
        let out = p.forward(params, x, None)?;
        let scale = 1.0 / n as f64;
        let mut l = 0.0;
        let mut d = Vec::with_capacity(n);
        for (z, &y) in out.logits.iter().zip(interactive) {
            let y = y as u8 as f64;
            l += bce_with_logit(*z, y);
            d.push((sigmoid(*z) - y) * scale);
        }
        p.backward(params, &out.cache, &d, &mut grads)?;
        loss_p = Some(l * scale);
    }
    let loss = loss_c.unwrap_or(0.0) + loss_p.unwrap_or(0.0);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(format!("L^C {loss_c:?}, L^P {loss_p:?}")));
    }
    Ok(LossOutput { loss, loss_c, loss_p, grads })
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRow {
    pub step: usize,
    pub mode: String,
    pub phase: String,
    pub epoch: usize,
    pub image_id: u64,
    pub pairs: usize,
    pub loss: f64,
    pub loss_c: Option<f64>,
    pub loss_p: Option<f64>,
}

pub fn write_log_csv<W: Write>(mut w: W, rows: &[LogRow]) -> std::io::Result<()> {
    writeln!(w, "step,mode,phase,epoch,image_id,pairs,loss,loss_c,loss_p")?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.step,
            r.mode,
            r.phase,
            r.epoch,
            r.image_id,
            r.pairs,
            r.loss,
            opt(r.loss_c),
            opt(r.loss_p)
        )?;
    }
    Ok(())
}

/// Named training splits.
pub type TrainSets<'a> = BTreeMap<String, &'a Dataset>;

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: Model,
    pub log: Vec<LogRow>,
}

/// Called after every epoch with the phase name, epoch index and current
/// parameters; used to write per-epoch checkpoints.
pub type EpochHook<'a> = dyn FnMut(&str, usize, &ParamStore) -> Result<()> + 'a;

struct Phase<'a> {
    name: &'a str,
    mode: Mode,
    p: Option<&'a PNet>,
    c: Option<&'a CNet>,
    terms: LossTerms,
    epochs: usize,
    scenes: Vec<&'a SceneRecord>,
}

fn run_phase(
    phase: &Phase<'_>,
    params: &mut ParamStore,
    cfg: &TrainConfig,
    net: &NetConfig,
    fx: &FeatureExtractor,
    log: &mut Vec<LogRow>,
    hook: &mut EpochHook<'_>,
) -> Result<()> {
    let sgd = cfg.sgd();
    let mut state = SgdState::new();
    let mut sampler = rng::substream(cfg.seed, &format!("{}/sample", phase.name));
    let k = phase.c.map_or(0, CNet::num_categories);
    let candidates: Vec<Vec<PairCandidate>> = phase
        .scenes
        .iter()
        .map(|s| candidate_pairs(s, cfg.human_thresh, cfg.object_thresh, cfg.label_iou))
        .collect();
    for epoch in 0..phase.epochs {
        let mut order: Vec<usize> = (0..phase.scenes.len()).collect();
        order.shuffle(&mut rng::indexed(cfg.seed, &format!("{}/shuffle", phase.name), epoch as u64));
        for i in order {
            let batch = sample_minibatch(&candidates[i], cfg.pos_neg_ratio, &mut sampler);
            if batch.is_empty() {
                continue;
            }
            let scene = phase.scenes[i];
            let x = build_inputs(scene, &batch, fx, net.grid)?;
            let targets = if phase.terms.c { hoi_targets(&batch, k) } else { Tensor::zeros(vec![batch.len(), 0]) };
            let labels: Vec<bool> = batch.iter().map(|b| b.interactive).collect();
            let out = joint_loss(phase.p, phase.c, params, &x, &targets, &labels, phase.terms)?;
            sgd_step(params, &out.grads, &sgd, &mut state)?;
            log.push(LogRow {
                step: log.len(),
                mode: phase.mode.to_string(),
                phase: phase.name.to_string(),
                epoch,
                image_id: scene.image_id,
                pairs: batch.len(),
                loss: out.loss,
                loss_c: out.loss_c,
                loss_p: out.loss_p,
            });
        }
        hook(phase.name, epoch, params)?;
    }
    Ok(())
}

fn dataset<'a>(sets: &TrainSets<'a>, name: &str) -> Result<&'a Dataset> {
    sets.get(name).copied().ok_or_else(|| Error::config(format!("training dataset {name} not provided")))
}

fn check_hoi_ids(ds: &Dataset, name: &str) -> Result<()> {
    let k = ds.labels.num_categories();
    if ds.scenes.iter().flat_map(|s| &s.gt_pairs).flat_map(|g| &g.hoi_ids).any(|&h| h >= k) {
        return Err(Error::validation(name, "HOI id outside the label space"));
    }
    Ok(())
}

/// Train the networks of `mode` and return the resulting model.
pub fn train(mode: &ModeConfig, cfg: &TrainConfig, net: &NetConfig, sets: &TrainSets<'_>, hook: &mut EpochHook<'_>) -> Result<TrainOutput> {
    mode.validate()?;
    cfg.validate()?;
    net.validate()?;
    let target = dataset(sets, &mode.c_train_set)?;
    for name in mode.train_sets() {
        check_hoi_ids(dataset(sets, &name)?, &name)?;
    }
    let fx = FeatureExtractor::new(net.feature_dim, net.feature_seed);
    let k = target.labels.num_categories();
    let c = CNet::new(net, k);
    let p = mode.mode.has_p().then(|| PNet::new(net));
    let mut log = Vec::new();
    let m = mode.mode;
    let scenes_of = |names: &[String]| -> Result<Vec<&SceneRecord>> {
        let mut v = Vec::new();
        for n in names {
            v.extend(dataset(sets, n)?.scenes.iter());
        }
        Ok(v)
    };
    let init_seed = rng::derive_seed(cfg.seed, "init");
    let params = match m {
        Mode::RpDCD => {
            let p = p.as_ref().expect("P exists");
            let mut params = build_shared(p, &c, mode.sharing_enabled && net.sharing, init_seed)?;
            let phase = Phase {
                name: "joint",
                mode: m,
                p: Some(p),
                c: Some(&c),
                terms: LossTerms::JOINT,
                epochs: cfg.epochs,
                scenes: target.scenes.iter().collect(),
            };
            run_phase(&phase, &mut params, cfg, net, &fx, &mut log, hook)?;
            params
        }
        Mode::RpT1CD | Mode::RpT2CD => {
            let p = p.as_ref().expect("P exists");
            let mut p_params = ParamStore::new();
            p.init_params(&mut p_params, init_seed)?;
            let phase = Phase {
                name: "p",
                mode: m,
                p: Some(p),
                c: None,
                terms: LossTerms::P_ONLY,
                epochs: cfg.source_epochs.unwrap_or(cfg.epochs),
                scenes: scenes_of(&mode.p_train_sets)?,
            };
            run_phase(&phase, &mut p_params, cfg, net, &fx, &mut log, hook)?;
            let mut params = train_c(&c, "c", m, target, cfg, net, &fx, &mut log, hook, None)?;
            params.merge(&p_params)?;
            params
        }
        Mode::RcD => train_c(&c, "c", m, target, cfg, net, &fx, &mut log, hook, None)?,
        Mode::RcT => {
            let source_name = mode.c_pretrain_set.as_deref().expect("validated");
            let source = dataset(sets, source_name)?;
            let c_src = CNet::new(net, source.labels.num_categories());
            let src = TrainConfig { epochs: cfg.source_epochs.unwrap_or(cfg.epochs), ..cfg.clone() };
            let pre = train_c(&c_src, "c-pretrain", m, source, &src, net, &fx, &mut log, hook, None)?;
            let body = pre.filtered(|n| !CLASSIFIER_LAYERS.iter().any(|l| n.starts_with(l)));
            let ft = TrainConfig { epochs: cfg.finetune_epochs, ..cfg.clone() };
            train_c(&c, "finetune", m, target, &ft, net, &fx, &mut log, hook, Some(body))?
        }
    };
    let meta = ModelMeta {
        net: NetConfig { sharing: net.sharing && mode.sharing_enabled, ..net.clone() },
        num_categories: k,
        has_p: p.is_some(),
        mode: m.to_string(),
        label_space: target.labels.name.clone(),
    };
    let model = Model::from_parts(meta, params)?;
    Ok(TrainOutput { model, log })
}

/// Train C alone on `ds`, starting from `init` (missing parameters, such
/// as a replaced classifier, are freshly initialised).
#[allow(clippy::too_many_arguments)]
fn train_c(
    c: &CNet,
    name: &str,
    mode: Mode,
    ds: &Dataset,
    cfg: &TrainConfig,
    net: &NetConfig,
    fx: &FeatureExtractor,
    log: &mut Vec<LogRow>,
    hook: &mut EpochHook<'_>,
    init: Option<ParamStore>,
) -> Result<ParamStore> {
    let mut fresh = ParamStore::new();
    c.init_params(&mut fresh, rng::derive_seed(cfg.seed, &format!("init/{name}")))?;
    let mut params = match init {
        Some(mut body) => {
            body.merge(&fresh.filtered(|n| !body.contains(n)))?;
            body
        }
        None => fresh,
    };
    let phase = Phase {
        name,
        mode,
        p: None,
        c: Some(c),
        terms: LossTerms::C_ONLY,
        epochs: cfg.epochs,
        scenes: ds.scenes.iter().collect(),
    };
    run_phase(&phase, &mut params, cfg, net, fx, log, hook)?;
    Ok(params)
}

/// Hook that writes `<dir>/<phase>_epoch<N>.ckpt` after every epoch.
pub fn checkpoint_hook(dir: &Path) -> impl FnMut(&str, usize, &ParamStore) -> Result<()> + '_ {
    move |phase, epoch, params| {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        crate::nn::checkpoint::save(&dir.join(format!("{phase}_epoch{epoch}.ckpt")), params, phase)
    }
}

/// Hook that does nothing.
pub fn no_hook() -> impl FnMut(&str, usize, &ParamStore) -> Result<()> {
    |_, _, _| Ok(())
}
