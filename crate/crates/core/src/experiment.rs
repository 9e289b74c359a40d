//! Run configuration and the train/evaluate plumbing shared by the command
//! line and the experiment tests.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{reduction_of, role_map, train_positive_counts, EvalReport, Reduction, Setting, DEFAULT_RARE_THRESHOLD};
use crate::inference::{all_detections, detect_dataset_jobs, InferConfig, SceneResult};
use crate::networks::{Model, NetConfig, Streams};
use crate::scene::{load_dataset, Dataset};
use crate::synth::{generate_dataset_pair, split_file_name, DatasetPair, GenConfig};
use crate::training::{train, EpochHook, Mode, ModeConfig, TrainConfig, TrainOutput, TrainSets};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub rare_threshold: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { rare_threshold: DEFAULT_RARE_THRESHOLD }
    }
}

/// Everything a run depends on besides its command-line selections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gen: GenConfig,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub infer: InferConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    /// Desk-scale profile: narrow layers, a larger constant step and fewer
    /// epochs, so a full five-seed mode comparison fits on one core.
    fn default() -> Self {
        RunConfig {
            gen: GenConfig::default(),
            net: NetConfig { width: 64, ..NetConfig::default() },
            train: TrainConfig { lr: 0.01, epochs: 8, source_epochs: Some(3), ..TrainConfig::default() },
            infer: InferConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        self.net.validate()?;
        self.train.validate()?;
        self.infer.validate()?;
        if self.train.human_thresh != self.infer.human_thresh || self.train.object_thresh != self.infer.object_thresh {
            return Err(Error::config("training and inference detection thresholds differ"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

/// Where a dataset comes from: one of the generated pair, or a split file
/// on disk whose sibling split is found by name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    Generated(String),
    Files { train: PathBuf, test: PathBuf },
}

impl DataSource {
    /// `A` and `B` name generated datasets; anything else is a path to a
    /// `<name>_train.jsonl` or `<name>_test.jsonl` file.
    pub fn parse(arg: &str) -> Result<Self> {
        if arg == "A" || arg == "B" {
            return Ok(DataSource::Generated(arg.to_string()));
        }
        let path = PathBuf::from(arg);
        let file = path.file_name().and_then(|f| f.to_str()).unwrap_or_default();
        let stem = file
            .strip_suffix("_train.jsonl")
            .or_else(|| file.strip_suffix("_test.jsonl"))
            .ok_or_else(|| Error::config(format!("dataset path must end in _train.jsonl or _test.jsonl: {arg}")))?;
        Ok(DataSource::Files {
            train: path.with_file_name(format!("{stem}_train.jsonl")),
            test: path.with_file_name(format!("{stem}_test.jsonl")),
        })
    }

    /// Short name used for training-set keys and in reports.
    pub fn name(&self) -> String {
        match self {
            DataSource::Generated(n) => n.clone(),
            DataSource::Files { train, .. } => {
                let f = train.file_name().and_then(|f| f.to_str()).unwrap_or_default();
                f.trim_end_matches("_train.jsonl").to_string()
            }
        }
    }

    /// The generated dataset on the other side of the transfer boundary.
    pub fn default_source(&self) -> Option<DataSource> {
        match self {
            DataSource::Generated(n) if n == "A" => Some(DataSource::Generated("B".into())),
            DataSource::Generated(_) => Some(DataSource::Generated("A".into())),
            DataSource::Files { .. } => None,
        }
    }
}

/// Train and test splits of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub name: String,
    pub train: Dataset,
    pub test: Dataset,
}

/// Resolves data sources, generating the synthetic pair at most once.
pub struct DataLoader<'a> {
    gen: &'a GenConfig,
    data_dir: Option<PathBuf>,
    pair: Option<DatasetPair>,
}

impl<'a> DataLoader<'a> {
    /// With `data_dir`, generated names are read from a directory written
    /// by `gen` instead of being regenerated.
    pub fn new(gen: &'a GenConfig, data_dir: Option<PathBuf>) -> Self {
        DataLoader { gen, data_dir, pair: None }
    }

    pub fn load(&mut self, source: &DataSource) -> Result<Splits> {
        let name = source.name();
        match (source, &self.data_dir) {
            (DataSource::Files { train, test }, _) => Ok(Splits { name, train: load_dataset(train)?, test: load_dataset(test)? }),
            (DataSource::Generated(n), Some(dir)) => Ok(Splits {
                name,
                train: load_dataset(&dir.join(split_file_name(n, true)))?,
                test: load_dataset(&dir.join(split_file_name(n, false)))?,
            }),
            (DataSource::Generated(n), None) => {
                if self.pair.is_none() {
                    self.pair = Some(generate_dataset_pair(self.gen)?);
                }
                let pair = self.pair.as_ref().expect("generated above");
                let get = |train| pair.split(n, train).cloned().ok_or_else(|| Error::config(format!("unknown dataset {n}")));
                Ok(Splits { name, train: get(true)?, test: get(false)? })
            }
        }
    }
}

/// Train `mode` with `target` as the test-time dataset and `source` as the
/// transfer dataset (required by the transfer modes).
pub fn train_mode(
    cfg: &RunConfig,
    mode: Mode,
    target: &Splits,
    source: Option<&Splits>,
    hook: &mut EpochHook<'_>,
) -> Result<TrainOutput> {
    let needs_source = matches!(mode, Mode::RpT1CD | Mode::RpT2CD | Mode::RcT);
    let source = match source {
        Some(s) if s.name == target.name => return Err(Error::config("source and target datasets must differ")),
        Some(s) => Some(s),
        None if needs_source => return Err(Error::config(format!("{mode} needs a second dataset"))),
        None => None,
    };
    let mut sets: TrainSets = BTreeMap::new();
    sets.insert(target.name.clone(), &target.train);
    if let Some(s) = source {
        sets.insert(s.name.clone(), &s.train);
    }
    let source_name = source.map(|s| s.name.as_str()).unwrap_or("");
    let mc = ModeConfig::standard(mode, &target.name, source_name);
    train(&mc, &cfg.train, &cfg.net, &sets, hook)
}

/// Inference results and reports under both evaluation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub results: Vec<SceneResult>,
    pub reduction: Reduction,
    pub default: EvalReport,
    pub known_object: EvalReport,
}

impl Evaluation {
    pub fn reports(&self) -> [&EvalReport; 2] {
        [&self.default, &self.known_object]
    }
}

pub fn evaluate(model: &Model, splits: &Splits, infer: &InferConfig, eval: &EvalConfig, jobs: usize) -> Result<Evaluation> {
    let results = detect_dataset_jobs(model, &splits.test, infer, jobs)?;
    evaluate_results(results, splits, eval)
}

pub fn evaluate_results(results: Vec<SceneResult>, splits: &Splits, eval: &EvalConfig) -> Result<Evaluation> {
    let counts = train_positive_counts(&splits.train);
    let dets = all_detections(&results);
    let reduction = reduction_of(&results);
    let report = |setting| -> Result<EvalReport> {
        let mut r = role_map(&dets, &splits.test, &counts, setting, eval.rare_threshold)?;
        r.reduction = Some(reduction);
        Ok(r)
    };
    Ok(Evaluation { default: report(Setting::Default)?, known_object: report(Setting::KnownObject)?, reduction, results })
}

pub const SUMMARY_HEADER: &str =
    "label,setting,map_full,map_rare,map_non_rare,n_full,n_rare,n_non_rare,gt,tp,fp,edges,kept,non_interactive_reduction,interactive_retention";

/// One summary line per report; `label` names the model or variant.
pub fn write_summary_rows<W: Write>(mut w: W, label: &str, reports: &[&EvalReport]) -> std::io::Result<()> {
    for r in reports {
        let d = r.reduction.unwrap_or(Reduction {
            edges: 0,
            kept: 0,
            interactive: 0,
            overall: 0.0,
            non_interactive: 0.0,
            interactive_retention: 1.0,
        });
        writeln!(
            w,
            "{label},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.setting.as_str(),
            r.map_full,
            r.map_rare,
            r.map_non_rare,
            r.n_full,
            r.n_rare,
            r.n_non_rare,
            r.gt,
            r.tp,
            r.fp,
            d.edges,
            d.kept,
            d.non_interactive,
            d.interactive_retention
        )?;
    }
    Ok(())
}

/// Test-time and architecture ablations of the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    Nis,
    Lis,
    HumanOnly,
    ObjectOnly,
    SpatialOnly,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [Ablation::Nis, Ablation::Lis, Ablation::HumanOnly, Ablation::ObjectOnly, Ablation::SpatialOnly];

    pub fn as_str(&self) -> &'static str {
        match self {
            Ablation::Nis => "nis",
            Ablation::Lis => "lis",
            Ablation::HumanOnly => "h-only",
            Ablation::ObjectOnly => "o-only",
            Ablation::SpatialOnly => "sp-only",
        }
    }

    /// Row label of the variant in ablation reports.
    pub fn label(&self) -> &'static str {
        match self {
            Ablation::Nis => "w/o NIS",
            Ablation::Lis => "w/o LIS",
            Ablation::HumanOnly => "H-P stream only",
            Ablation::ObjectOnly => "O-P stream only",
            Ablation::SpatialOnly => "S-P stream only",
        }
    }

    /// P streams of the retrained variant, or `None` for test-time switches.
    pub fn p_streams(&self) -> Option<Streams> {
        match self {
            Ablation::Nis | Ablation::Lis => None,
            Ablation::HumanOnly => Some(Streams::HUMAN_ONLY),
            Ablation::ObjectOnly => Some(Streams::OBJECT_ONLY),
            Ablation::SpatialOnly => Some(Streams::SPATIAL_ONLY),
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown ablation switch {s}")))
    }
}

/// Run configuration of an ablation variant.
pub fn ablated(cfg: &RunConfig, ablation: Ablation) -> RunConfig {
    let mut out = cfg.clone();
    match ablation {
        Ablation::Nis => out.infer.switches.nis_off = true,
        Ablation::Lis => out.infer.switches.lis_off = true,
        other => out.net.p_streams = other.p_streams().expect("stream ablation"),
    }
    out
}
