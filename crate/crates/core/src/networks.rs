//! The interactiveness network P and the HOI classifier C.
//!
//! P has human, object and spatial-pose streams whose outputs are
//! concatenated into a small head producing `f_P`. Its score is
//! `s_P = f_P * L(s_h, s_o)`, where `L` is the low-grade instance
//! suppression weight. C has human, object and spatial streams, each ending
//! in a per-category logit layer; the logits are summed and passed through
//! a per-category sigmoid.
//!
//! Parameter names are prefixed `p.` and `c.`. With sharing on, the
//! residual blocks `p.h.res` and `p.o.res` are aliases of `c.h.res` and
//! `c.o.res`.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{concat, split};
use crate::nn::{checkpoint, sigmoid, Cache, Gradients, LayerSpec, ParamStore, Sequential, Tensor};
use crate::rng;
use crate::scene::Detection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LisParams {
    pub t: f64,
    pub k: f64,
    pub w: f64,
}

impl Default for LisParams {
    fn default() -> Self {
        LisParams { t: 8.4, k: 12.0, w: 10.0 }
    }
}

/// `T / (1 + exp(k - w x))` on the open interval `(0, 1)`.
pub fn lis_p(x: f64, t: f64, k: f64, w: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Domain(format!("LIS input {x} outside (0,1)")));
    }
    Ok(t / (1.0 + (k - w * x).exp()))
}

pub fn lis_weight(s_h: f64, s_o: f64, lis: &LisParams) -> Result<f64> {
    Ok(lis_p(s_h, lis.t, lis.k, lis.w)? * lis_p(s_o, lis.t, lis.k, lis.w)?)
}

/// Which streams a network is built with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Streams {
    pub human: bool,
    pub object: bool,
    pub spatial: bool,
}

impl Default for Streams {
    fn default() -> Self {
        Streams::ALL
    }
}

impl Streams {
    pub const ALL: Streams = Streams { human: true, object: true, spatial: true };
    pub const HUMAN_ONLY: Streams = Streams { human: true, object: false, spatial: false };
    pub const OBJECT_ONLY: Streams = Streams { human: false, object: true, spatial: false };
    pub const SPATIAL_ONLY: Streams = Streams { human: false, object: false, spatial: true };

    fn any(&self) -> bool {
        self.human || self.object || self.spatial
    }
}

/// Architecture configuration, readable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Appearance feature dimension.
    pub feature_dim: usize,
    /// Width of the stream and head dense layers.
    pub width: usize,
    pub grid: usize,
    pub conv_channels: [usize; 2],
    pub kernel: usize,
    pub conv_stride: usize,
    /// Share the human/object residual blocks between P and C.
    pub sharing: bool,
    /// Seed of the fixed appearance feature extractor.
    pub feature_seed: u64,
    pub lis: LisParams,
    pub p_streams: Streams,
    pub c_streams: Streams,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            feature_dim: 64,
            width: 256,
            grid: 64,
            conv_channels: [8, 16],
            kernel: 5,
            conv_stride: 2,
            sharing: true,
            feature_seed: 17,
            lis: LisParams::default(),
            p_streams: Streams::ALL,
            c_streams: Streams::ALL,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m));
        if self.feature_dim == 0 || self.width == 0 {
            return bad("feature_dim and width must be positive");
        }
        if self.grid < 4 || self.kernel == 0 || self.conv_stride == 0 || self.conv_channels.contains(&0) {
            return bad("invalid spatial stream geometry");
        }
        if !self.p_streams.any() || !self.c_streams.any() {
            return bad("a network needs at least one stream");
        }
        if !(self.lis.t > 0.0 && self.lis.w > 0.0 && self.lis.k.is_finite()) {
            return bad("LIS needs T > 0, w > 0 and finite k");
        }
        let probe = spatial_stream("probe", self, 3, None);
        probe.output_shape(&[self.grid, self.grid, 3])?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: NetConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Fixed, seeded stand-in for a learned representation network: a class
/// embedding plus a linear projection of the detection's observed
/// attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    dim: usize,
    seed: u64,
}

impl FeatureExtractor {
    pub fn new(dim: usize, seed: u64) -> Self {
        FeatureExtractor { dim, seed }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn gaussian(&self, name: &str, index: u64) -> impl Iterator<Item = f64> {
        let mut r = rng::indexed(self.seed, name, index);
        (0..self.dim).map(move |_| StandardNormal.sample(&mut r))
    }

    pub fn extract(&self, det: &Detection) -> Vec<f64> {
        let mut f: Vec<f64> = self.gaussian("class-embedding", det.class_id as u64).collect();
        for (j, &a) in det.attributes.iter().enumerate() {
            for (v, p) in f.iter_mut().zip(self.gaussian("attribute-projection", j as u64)) {
                *v += a * p;
            }
        }
        f
    }
}

fn appearance_stream(prefix: &str, cfg: &NetConfig, classes: Option<usize>) -> Sequential {
    let (f, w) = (cfg.feature_dim, cfg.width);
    let mut layers = vec![
        LayerSpec::residual(&format!("{prefix}.res"), f),
        LayerSpec::dense(&format!("{prefix}.fc1"), f, w),
        LayerSpec::Relu,
        LayerSpec::dense(&format!("{prefix}.fc2"), w, w),
        LayerSpec::Relu,
    ];
    if let Some(k) = classes {
        layers.push(LayerSpec::dense(&format!("{prefix}.cls"), w, k));
    }
    Sequential::new(layers)
}

fn spatial_stream(prefix: &str, cfg: &NetConfig, channels: usize, classes: Option<usize>) -> Sequential {
    let [c1, c2] = cfg.conv_channels;
    let (k, s, w) = (cfg.kernel, cfg.conv_stride, cfg.width);
    let conv = vec![
        LayerSpec::conv(&format!("{prefix}.conv1"), channels, c1, k, s),
        LayerSpec::Relu,
        LayerSpec::MaxPool { size: 2 },
        LayerSpec::conv(&format!("{prefix}.conv2"), c1, c2, k, s),
        LayerSpec::Relu,
        LayerSpec::MaxPool { size: 2 },
        LayerSpec::Flatten,
    ];
    let flat = Sequential::new(conv.clone())
        .output_shape(&[cfg.grid, cfg.grid, channels])
        .map(|s| s[0])
        .unwrap_or(1);
    let mut layers = conv;
    layers.extend([
        LayerSpec::dense(&format!("{prefix}.fc1"), flat, w),
        LayerSpec::Relu,
        LayerSpec::dense(&format!("{prefix}.fc2"), w, w),
        LayerSpec::Relu,
    ]);
    if let Some(k) = classes {
        layers.push(LayerSpec::dense(&format!("{prefix}.cls"), w, k));
    }
    Sequential::new(layers)
}

/// Network inputs for a batch of human-object pairs.
#[derive(Debug, Clone)]
pub struct PairInputs {
    /// `[n, F]`
    pub human_feat: Tensor,
    /// `[n, F]`
    pub object_feat: Tensor,
    /// `[n, grid, grid, 3]`, channels `[pose, human, object]`.
    pub pose_map: Tensor,
    /// `[n, grid, grid, 2]`, channels `[human, object]`.
    pub spatial_map: Tensor,
    pub human_score: Vec<f64>,
    pub object_score: Vec<f64>,
}

impl PairInputs {
    pub fn len(&self) -> usize {
        self.human_score.len()
    }

    pub fn is_empty(&self) -> bool {
        self.human_score.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stream {
    Human,
    Object,
    Spatial,
}

impl Stream {
    fn input<'a>(&self, x: &'a PairInputs, pose: bool) -> &'a Tensor {
        match self {
            Stream::Human => &x.human_feat,
            Stream::Object => &x.object_feat,
            Stream::Spatial if pose => &x.pose_map,
            Stream::Spatial => &x.spatial_map,
        }
    }
}

fn stream_list(s: Streams) -> Vec<Stream> {
    let mut v = Vec::new();
    if s.human {
        v.push(Stream::Human);
    }
    if s.object {
        v.push(Stream::Object);
    }
    if s.spatial {
        v.push(Stream::Spatial);
    }
    v
}

/// The interactiveness network.
#[derive(Debug, Clone, PartialEq)]
pub struct PNet {
    streams: Vec<(Stream, Sequential)>,
    head: Sequential,
    width: usize,
}

#[derive(Debug, Clone)]
pub struct PCache {
    streams: Vec<Cache>,
    head: Cache,
}

/// Output of [`PNet::forward`].
#[derive(Debug, Clone)]
pub struct POutput {
    pub logits: Vec<f64>,
    /// Head output `f_P = sigmoid(logit)`.
    pub f_p: Vec<f64>,
    /// LIS weight per pair (1 when LIS is off).
    pub lis: Vec<f64>,
    /// `s_P = f_P * lis`.
    pub s_p: Vec<f64>,
    pub cache: PCache,
}

impl PNet {
    pub fn new(cfg: &NetConfig) -> Self {
        let streams = stream_list(cfg.p_streams)
            .into_iter()
            .map(|s| {
                let net = match s {
                    Stream::Human => appearance_stream("p.h", cfg, None),
                    Stream::Object => appearance_stream("p.o", cfg, None),
                    Stream::Spatial => spatial_stream("p.sp", cfg, 3, None),
                };
                (s, net)
            })
            .collect::<Vec<_>>();
        let w = cfg.width;
        let head = Sequential::new(vec![
            LayerSpec::dense("p.head.fc1", w * streams.len(), w),
            LayerSpec::Relu,
            LayerSpec::dense("p.head.fc2", w, w),
            LayerSpec::Relu,
            LayerSpec::dense("p.head.out", w, 1),
        ]);
        PNet { streams, head, width: w }
    }

    pub fn init_params(&self, store: &mut ParamStore, seed: u64) -> Result<()> {
        for (_, s) in &self.streams {
            s.init_params(store, seed)?;
        }
        self.head.init_params(store, seed)
    }

    /// Forward pass. With `lis = None` the weight is fixed at 1.
    pub fn forward(&self, params: &ParamStore, x: &PairInputs, lis: Option<&LisParams>) -> Result<POutput> {
        let mut outs = Vec::with_capacity(self.streams.len());
        let mut caches = Vec::with_capacity(self.streams.len());
        for (s, net) in &self.streams {
            let (y, c) = net.forward(params, s.input(x, true))?;
            outs.push(y);
            caches.push(c);
        }
        let joined = concat(&outs.iter().collect::<Vec<_>>())?;
        let (logit, head) = self.head.forward(params, &joined)?;
        let logits = logit.data;
        let f_p: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
        let lis_w = match lis {
            Some(l) => x
                .human_score
                .iter()
                .zip(&x.object_score)
                .map(|(&h, &o)| lis_weight(h, o, l))
                .collect::<Result<Vec<_>>>()?,
            None => vec![1.0; f_p.len()],
        };
        let s_p = f_p.iter().zip(&lis_w).map(|(f, l)| f * l).collect();
        Ok(POutput {
            logits,
            f_p,
            lis: lis_w,
            s_p,
            cache: PCache { streams: caches, head },
        })
    }

    /// Backpropagate `d loss / d logit` into `grads`.
    pub fn backward(&self, params: &ParamStore, cache: &PCache, d_logits: &[f64], grads: &mut Gradients) -> Result<()> {
        let g = Tensor::new(vec![d_logits.len(), 1], d_logits.to_vec());
        let d_joined = self.head.backward(params, &cache.head, &g, grads)?;
        let parts = split(&d_joined, &vec![self.width; self.streams.len()]);
        for ((_, net), (c, d)) in self.streams.iter().zip(cache.streams.iter().zip(&parts)) {
            net.backward_inner(params, c, d, grads, false)?;
        }
        Ok(())
    }

    pub fn param_prefixes(&self) -> Vec<&'static str> {
        self.streams
            .iter()
            .map(|(s, _)| match s {
                Stream::Human => "p.h.",
                Stream::Object => "p.o.",
                Stream::Spatial => "p.sp.",
            })
            .collect()
    }
}

/// The HOI classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct CNet {
    streams: Vec<(Stream, Sequential)>,
    num_categories: usize,
}

#[derive(Debug, Clone)]
pub struct CCache {
    streams: Vec<Cache>,
}

/// Output of [`CNet::forward`]: `[n, K]` summed logits and scores.
#[derive(Debug, Clone)]
pub struct COutput {
    pub logits: Tensor,
    pub scores: Tensor,
    pub cache: CCache,
}

pub const CLASSIFIER_LAYERS: [&str; 3] = ["c.h.cls.", "c.o.cls.", "c.sp.cls."];

impl CNet {
    pub fn new(cfg: &NetConfig, num_categories: usize) -> Self {
        let k = Some(num_categories);
        let streams = stream_list(cfg.c_streams)
            .into_iter()
            .map(|s| {
                let net = match s {
                    Stream::Human => appearance_stream("c.h", cfg, k),
                    Stream::Object => appearance_stream("c.o", cfg, k),
                    Stream::Spatial => spatial_stream("c.sp", cfg, 2, k),
                };
                (s, net)
            })
            .collect();
        CNet { streams, num_categories }
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    pub fn init_params(&self, store: &mut ParamStore, seed: u64) -> Result<()> {
        for (_, s) in &self.streams {
            s.init_params(store, seed)?;
        }
        Ok(())
    }

    pub fn forward(&self, params: &ParamStore, x: &PairInputs) -> Result<COutput> {
        let n = x.len();
        let mut logits = Tensor::zeros(vec![n, self.num_categories]);
        let mut caches = Vec::with_capacity(self.streams.len());
        for (s, net) in &self.streams {
            let (y, c) = net.forward(params, s.input(x, false))?;
            for (l, v) in logits.data.iter_mut().zip(&y.data) {
                *l += v;
            }
            caches.push(c);
        }
        let scores = Tensor::new(logits.shape.clone(), logits.data.iter().map(|&z| sigmoid(z)).collect());
        Ok(COutput { logits, scores, cache: CCache { streams: caches } })
    }

    /// Backpropagate `d loss / d logits` (`[n, K]`) into `grads`. Late
    /// fusion by summation passes the same gradient to every stream.
    pub fn backward(&self, params: &ParamStore, cache: &CCache, d_logits: &Tensor, grads: &mut Gradients) -> Result<()> {
        for ((_, net), c) in self.streams.iter().zip(&cache.streams) {
            net.backward_inner(params, c, d_logits, grads, false)?;
        }
        Ok(())
    }
}

const RESIDUAL_SUFFIXES: [&str; 4] = ["fc1.w", "fc1.b", "fc2.w", "fc2.b"];

/// Register C and P parameters in one store. With `sharing`, the human and
/// object residual blocks of P alias those of C.
pub fn build_shared(p: &PNet, c: &CNet, sharing: bool, seed: u64) -> Result<ParamStore> {
    let mut store = ParamStore::new();
    c.init_params(&mut store, seed)?;
    if sharing {
        for stream in ["h", "o"] {
            let has_p = p.param_prefixes().contains(&if stream == "h" { "p.h." } else { "p.o." });
            let target = format!("c.{stream}.res.fc1.w");
            if !has_p || !store.contains(&target) {
                continue;
            }
            for suffix in RESIDUAL_SUFFIXES {
                store.share(&format!("p.{stream}.res.{suffix}"), &format!("c.{stream}.res.{suffix}"))?;
            }
        }
    }
    p.init_params(&mut store, seed)?;
    Ok(store)
}

/// Checkpoint metadata needed to rebuild the networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub net: NetConfig,
    pub num_categories: usize,
    pub has_p: bool,
    pub mode: String,
    pub label_space: String,
}

/// Trained networks with their parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub meta: ModelMeta,
    pub p: Option<PNet>,
    pub c: CNet,
    pub params: ParamStore,
}

impl Model {
    pub fn from_parts(meta: ModelMeta, params: ParamStore) -> Result<Self> {
        meta.net.validate()?;
        let p = meta.has_p.then(|| PNet::new(&meta.net));
        let c = CNet::new(&meta.net, meta.num_categories);
        let model = Model { meta, p, c, params };
        model.check_params()?;
        Ok(model)
    }

    fn check_params(&self) -> Result<()> {
        let mut probe = ParamStore::new();
        self.c.init_params(&mut probe, 0)?;
        if let Some(p) = &self.p {
            p.init_params(&mut probe, 0)?;
        }
        for name in probe.names() {
            let want = &probe.param(name)?.shape;
            let got = &self.params.param(name)?.shape;
            if want != got {
                return Err(Error::Checkpoint(format!("parameter {name} has shape {got:?}, expected {want:?}")));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::to_string(&self.meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
        checkpoint::save(path, &self.params, &meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (params, meta) = checkpoint::load(path)?;
        let meta: ModelMeta = serde_json::from_str(&meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Model::from_parts(meta, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{grad_check, GradCheckOptions};
    use crate::nn::jitter;
    use rand::Rng as _;

    pub(crate) fn small_cfg() -> NetConfig {
        NetConfig { feature_dim: 6, width: 8, grid: 16, conv_channels: [2, 3], kernel: 3, conv_stride: 1, ..NetConfig::default() }
    }

    pub(crate) fn random_inputs(cfg: &NetConfig, n: usize, seed: u64) -> PairInputs {
        let mut r = rng::substream(seed, "inputs");
        let mut t = |shape: Vec<usize>, binary: bool| {
            let len = shape.iter().product();
            let data = (0..len)
                .map(|_| if binary { (r.random::<f64>() < 0.4) as u8 as f64 } else { r.random_range(-1.0..1.0) })
                .collect();
            Tensor::new(shape, data)
        };
        let (f, g) = (cfg.feature_dim, cfg.grid);
        PairInputs {
            human_feat: t(vec![n, f], false),
            object_feat: t(vec![n, f], false),
            pose_map: t(vec![n, g, g, 3], true),
            spatial_map: t(vec![n, g, g, 2], true),
            human_score: (0..n).map(|i| 0.6 + 0.05 * i as f64).collect(),
            object_score: (0..n).map(|i| 0.9 - 0.1 * i as f64).collect(),
        }
    }

    #[test]
    fn lis_anchor_and_values() {
        let p0 = lis_p(1e-6, 8.4, 12.0, 10.0).unwrap();
        assert!((p0 - 5.16e-5).abs() < 2e-7, "{p0}");
        let half = lis_p(0.5, 8.4, 12.0, 10.0).unwrap();
        assert!((half - 8.4 / (1.0 + 7f64.exp())).abs() < 1e-15);
        assert!((half - 7.653e-3).abs() < 1e-6);
        assert!(lis_p(0.4, 8.4, 12.0, 10.0).unwrap() < lis_p(0.8, 8.4, 12.0, 10.0).unwrap());
        for x in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(lis_p(x, 8.4, 12.0, 10.0), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn lis_weight_examples() {
        let l = LisParams::default();
        let a = lis_weight(0.9, 0.4, &l).unwrap();
        assert_eq!(a, lis_weight(0.4, 0.9, &l).unwrap());
        let p = |x| lis_p(x, l.t, l.k, l.w).unwrap();
        assert_eq!(a, p(0.9) * p(0.4));
        assert_eq!(lis_weight(0.7, 0.7, &l).unwrap(), p(0.7).powi(2));
        assert!(lis_weight(1.0, 0.5, &l).is_err());
    }

    #[test]
    fn features_are_deterministic_and_class_specific() {
        let fx = FeatureExtractor::new(64, 3);
        let d = Detection {
            bbox: crate::geometry::BBox::new(0.0, 0.0, 1.0, 1.0),
            class_id: 2,
            score: 0.5,
            keypoints: None,
            attributes: vec![0.3, 1.0, 0.0, 0.0],
            source: None,
        };
        let f = fx.extract(&d);
        assert_eq!(f.len(), 64);
        assert_eq!(f, fx.extract(&d));
        assert!(f.iter().all(|v| v.is_finite()));
        let mut other = d.clone();
        other.class_id = 3;
        assert_ne!(f, fx.extract(&other));
    }

    #[test]
    fn default_config_round_trips_toml() {
        let cfg = NetConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(NetConfig::from_toml(&text).unwrap(), cfg);
        let partial = NetConfig::from_toml("width = 32\nsharing = false\n").unwrap();
        assert_eq!(partial.width, 32);
        assert!(!partial.sharing);
        assert!(NetConfig::from_toml("bogus = 1").is_err());
        assert!(NetConfig::from_toml("[p_streams]\nhuman = false\nobject = false\nspatial = false\n").is_err());
    }

    #[test]
    fn default_spatial_stream_shapes() {
        let cfg = NetConfig::default();
        let s = spatial_stream("x", &cfg, 3, Some(5));
        assert_eq!(s.output_shape(&[64, 64, 3]).unwrap(), vec![5]);
        let a = appearance_stream("y", &cfg, None);
        assert_eq!(a.output_shape(&[64]).unwrap(), vec![256]);
    }

    #[test]
    fn p_output_bounds_and_lis_switch() {
        let cfg = small_cfg();
        let p = PNet::new(&cfg);
        let c = CNet::new(&cfg, 4);
        let store = build_shared(&p, &c, true, 1).unwrap();
        let x = random_inputs(&cfg, 3, 1);
        let with = p.forward(&store, &x, Some(&cfg.lis)).unwrap();
        let without = p.forward(&store, &x, None).unwrap();
        assert_eq!(without.s_p, without.f_p);
        for i in 0..3 {
            assert!(with.f_p[i] > 0.0 && with.f_p[i] < 1.0);
            let l = lis_weight(x.human_score[i], x.object_score[i], &cfg.lis).unwrap();
            assert_eq!(with.lis[i], l);
            assert!(with.s_p[i] >= 0.0 && with.s_p[i] <= l);
        }
    }

    #[test]
    fn c_zero_logits_give_half() {
        let cfg = small_cfg();
        let c = CNet::new(&cfg, 4);
        let mut store = ParamStore::new();
        c.init_params(&mut store, 1).unwrap();
        for name in store.names().map(String::from).collect::<Vec<_>>() {
            if name.contains(".cls.") {
                store.get_mut(&name).unwrap().fill(0.0);
            }
        }
        let out = c.forward(&store, &random_inputs(&cfg, 2, 2)).unwrap();
        assert!(out.scores.data.iter().all(|&v| v == 0.5));
        assert_eq!(out.scores.shape, vec![2, 4]);
    }

    #[test]
    fn single_stream_c_equals_that_stream() {
        let cfg = small_cfg();
        let full = CNet::new(&cfg, 3);
        let mut store = ParamStore::new();
        full.init_params(&mut store, 4).unwrap();
        let x = random_inputs(&cfg, 2, 3);
        let only = CNet::new(&NetConfig { c_streams: Streams::SPATIAL_ONLY, ..cfg.clone() }, 3);
        let out = only.forward(&store, &x).unwrap();
        let (direct, _) = spatial_stream("c.sp", &cfg, 2, Some(3)).forward(&store, &x.spatial_map).unwrap();
        let want: Vec<f64> = direct.data.iter().map(|&z| sigmoid(z)).collect();
        assert_eq!(out.scores.data, want);
    }

    #[test]
    fn sharing_links_residual_blocks() {
        let cfg = small_cfg();
        let (p, c) = (PNet::new(&cfg), CNet::new(&cfg, 2));
        let mut store = build_shared(&p, &c, true, 1).unwrap();
        store.get_mut("c.h.res.fc1.w").unwrap()[0] = 42.0;
        assert_eq!(store.get("p.h.res.fc1.w").unwrap()[0], 42.0);
        assert!(store.is_shared("p.o.res.fc2.b", "c.o.res.fc2.b"));
        assert!(!store.is_shared("p.h.fc1.w", "c.h.fc1.w"));
        assert_eq!(store.sharing_table().len(), 8);

        let separate = build_shared(&p, &c, false, 1).unwrap();
        assert!(separate.sharing_table().is_empty());
        assert_eq!(separate.len(), store.len() + 8);
    }

    #[test]
    fn sharing_needs_matching_shapes() {
        let cfg = small_cfg();
        let p = PNet::new(&NetConfig { feature_dim: 7, ..cfg.clone() });
        let c = CNet::new(&cfg, 2);
        assert!(build_shared(&p, &c, true, 1).is_err());
    }

    #[test]
    fn p_gradcheck_on_s_p() {
        let cfg = small_cfg();
        let (p, c) = (PNet::new(&cfg), CNet::new(&cfg, 3));
        let mut store = build_shared(&p, &c, false, 5).unwrap();
        jitter(&mut store, 0.05, 5);
        let x = random_inputs(&cfg, 3, 5);
        let out = p.forward(&store, &x, Some(&cfg.lis)).unwrap();
        let d: Vec<f64> = out.f_p.iter().zip(&out.lis).map(|(f, l)| l * f * (1.0 - f)).collect();
        let mut g = Gradients::for_store(&store);
        p.backward(&store, &out.cache, &d, &mut g).unwrap();
        let loss = |q: &ParamStore| Ok(p.forward(q, &x, Some(&cfg.lis))?.s_p.iter().sum::<f64>());
        let report = grad_check(&store, &g, loss, &GradCheckOptions { max_entries: Some(25), ..Default::default() }).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.entries.iter().any(|e| e.name == "p.sp.conv1.w"));
    }

    #[test]
    fn c_gradcheck() {
        let cfg = small_cfg();
        let c = CNet::new(&cfg, 3);
        let mut store = ParamStore::new();
        c.init_params(&mut store, 6).unwrap();
        jitter(&mut store, 0.05, 6);
        let x = random_inputs(&cfg, 2, 6);
        let out = c.forward(&store, &x).unwrap();
        let weights: Vec<f64> = (0..out.scores.data.len()).map(|i| 0.3 + 0.1 * i as f64).collect();
        let d = Tensor::new(
            out.scores.shape.clone(),
            out.scores.data.iter().zip(&weights).map(|(s, w)| w * s * (1.0 - s)).collect(),
        );
        let mut g = Gradients::for_store(&store);
        c.backward(&store, &out.cache, &d, &mut g).unwrap();
        let loss = |q: &ParamStore| {
            Ok(c.forward(q, &x)?.scores.data.iter().zip(&weights).map(|(s, w)| s * w).sum::<f64>())
        };
        let report = grad_check(&store, &g, loss, &GradCheckOptions { max_entries: Some(25), ..Default::default() }).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn model_round_trips_through_checkpoint() {
        let cfg = small_cfg();
        let (p, c) = (PNet::new(&cfg), CNet::new(&cfg, 3));
        let params = build_shared(&p, &c, true, 9).unwrap();
        let meta = ModelMeta { net: cfg, num_categories: 3, has_p: true, mode: "RP_D_C_D".into(), label_space: "B".into() };
        let model = Model::from_parts(meta, params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        model.save(&path).unwrap();
        let back = Model::load(&path).unwrap();
        assert_eq!(back, model);
        assert!(back.params.is_shared("p.h.res.fc1.w", "c.h.res.fc1.w"));
    }
}
