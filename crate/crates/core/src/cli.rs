//! Command-line front end. Every invocation owns a run directory holding a
//! manifest that is written before the work starts and finalized after.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::checks::gradcheck_suite;
use crate::error::{Error, Result};
use crate::eval::{role_map, sweep_reduction, train_positive_counts, write_report_csv, write_sweep_csv, Setting, SweepRow};
use crate::experiment::{
    ablated, evaluate, evaluate_results, train_mode, write_summary_rows, Ablation, DataLoader, DataSource, RunConfig, Splits,
    SUMMARY_HEADER,
};
use crate::inference::{detect_dataset_jobs, write_detections, HoiDetection, InferConfig};
use crate::networks::Model;
use crate::nn::checkpoint::CHECKPOINT_VERSION;
use crate::nn::GradCheckOptions;
use crate::raster::build_spatial_pose_tensor;
use crate::scene::{candidate_index_pairs, FORMAT_VERSION};
use crate::synth::{generate_dataset_pair, interactive_fraction, write_dataset_pair};
use crate::training::{checkpoint_hook, write_log_csv, Mode};

/// Default output root when `--out` is not given.
pub const OUT_ROOT_ENV: &str = "HOI_OUT_ROOT";
pub const MANIFEST_FILE: &str = "manifest.json";

pub mod exit {
    pub const OK: i32 = 0;
    /// Unknown flag or malformed arguments.
    pub const USAGE: i32 = 2;
    /// Configuration invariant violated.
    pub const CONFIG: i32 = 3;
    /// Input file missing or unreadable, or output not writable.
    pub const IO: i32 = 4;
    /// Input present but malformed.
    pub const DATA: i32 = 5;
    /// Non-finite loss or gradient.
    pub const NUMERIC: i32 = 6;
    /// A check ran and failed.
    pub const CHECK_FAILED: i32 = 7;
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Validation { .. } | Error::UnknownParam(_) => exit::CONFIG,
        Error::Io { .. } => exit::IO,
        Error::Parse { .. } | Error::Checkpoint(_) | Error::Domain(_) | Error::OutsideFrame | Error::Shape { .. } | Error::StaleCache(_) => {
            exit::DATA
        }
        Error::NonFiniteGradient(_) | Error::NonFiniteLoss(_) => exit::NUMERIC,
    }
}

#[derive(Debug, Parser)]
#[command(name = "hoi", version, about = "Interactiveness-aware HOI detection on synthetic scenes")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; defaults to the built-in desk profile.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed of this run (generation seed for `gen`, training seed otherwise).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory; defaults to a fresh directory under $HOI_OUT_ROOT.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `A`, `B`, or a path to a `<name>_train.jsonl` / `<name>_test.jsonl` file.
    #[arg(long, global = true, default_value = "B")]
    pub dataset: String,
    /// Directory written by `gen`; generated datasets are read from it
    /// instead of being regenerated.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Suppression threshold on the interactiveness score.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Worker threads for scene-level inference.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Print the machine-readable summary instead of the human one.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate datasets A and B with simulated detections.
    Gen,
    /// Train one mode and save the model with its log and checkpoints.
    Train {
        /// RP_D_C_D, RP_T1_C_D, RP_T2_C_D, RC_D or RC_T.
        #[arg(long)]
        mode: Mode,
        /// Transfer dataset; defaults to the other generated dataset.
        #[arg(long)]
        source: Option<String>,
    },
    /// Write detections for the test split.
    Infer {
        #[arg(long)]
        model: PathBuf,
        /// Also write suppressed pairs.
        #[arg(long)]
        with_suppressed: bool,
    },
    /// Role mAP and suppression statistics on the test split.
    Eval {
        #[arg(long)]
        model: PathBuf,
    },
    /// Suppression statistics and mAP over a grid of alpha values.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        /// `start:stop:step` or a comma-separated list.
        #[arg(long, default_value = "0:0.5:0.05")]
        alpha_grid: String,
    },
    /// Compare the full model with ablated variants.
    Ablate {
        /// Repeatable; `nis` and `lis` together add a combined row.
        #[arg(long = "switch", required = true)]
        switches: Vec<Ablation>,
        /// Trained full model; trained from scratch when absent.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Write spatial-pose maps of candidate pairs as PGM images.
    Rasterize {
        #[arg(long)]
        image_id: Option<u64>,
        /// Read from the training split instead of the test split.
        #[arg(long)]
        train_split: bool,
        /// Maximum pairs written.
        #[arg(long, default_value_t = 8)]
        limit: usize,
    },
    /// Finite-difference gradient checks of every layer and both networks.
    Gradcheck {
        /// Entries sampled per parameter array; all entries when absent.
        #[arg(long)]
        max_entries: Option<usize>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Train { .. } => "train",
            Command::Infer { .. } => "infer",
            Command::Eval { .. } => "eval",
            Command::Sweep { .. } => "sweep",
            Command::Ablate { .. } => "ablate",
            Command::Rasterize { .. } => "rasterize",
            Command::Gradcheck { .. } => "gradcheck",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub package: String,
    pub dataset_format: u32,
    pub checkpoint_format: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: RunConfig,
    pub seed: u64,
    pub jobs: usize,
    pub status: String,
    pub error: Option<String>,
    pub artifacts: Vec<String>,
    pub started_unix_secs: u64,
    pub wall_clock_secs: Option<f64>,
    pub versions: Versions,
    pub summary: Option<Value>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}

/// What a command produced.
struct Outcome {
    artifacts: Vec<PathBuf>,
    summary: Value,
    lines: Vec<String>,
    passed: bool,
}

impl Outcome {
    fn new(summary: Value) -> Self {
        Outcome { artifacts: Vec::new(), summary, lines: Vec::new(), passed: true }
    }
}

/// Result of a finished invocation.
#[derive(Debug)]
pub struct RunStatus {
    pub run_dir: PathBuf,
    pub exit_code: i32,
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Create a fresh run directory; an explicit `--out` must not already
/// hold a manifest.
fn make_run_dir(out: Option<&Path>, command: &str) -> Result<PathBuf> {
    if let Some(dir) = out {
        if dir.join(MANIFEST_FILE).exists() {
            return Err(Error::config(format!("{} already holds a run manifest", dir.display())));
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        return Ok(dir.to_path_buf());
    }
    let root = PathBuf::from(std::env::var(OUT_ROOT_ENV).unwrap_or_else(|_| "runs".into()));
    std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let stamp = now_secs();
    for n in 0.. {
        let dir = root.join(format!("{command}-{stamp}-{n}"));
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    unreachable!("unbounded search")
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(a) = cli.common.alpha {
        cfg.infer.alpha = a;
    }
    if let Some(s) = cli.common.seed {
        match cli.command {
            Command::Gen => cfg.gen.seed = s,
            _ => cfg.train.seed = s,
        }
    }
    if cli.common.jobs == 0 {
        return Err(Error::config("--jobs must be at least 1"));
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parse-free entry point: runs `cli` and returns the run directory and
/// exit code. Errors raised before the run directory exists are returned.
pub fn run(cli: &Cli, args: Vec<String>) -> Result<RunStatus> {
    let cfg = resolve_config(cli)?;
    let command = cli.command.name();
    let dir = make_run_dir(cli.common.out.as_deref(), command)?;
    let seed = match cli.command {
        Command::Gen => cfg.gen.seed,
        _ => cfg.train.seed,
    };
    let mut manifest = RunManifest {
        command: command.to_string(),
        args,
        config: cfg.clone(),
        seed,
        jobs: cli.common.jobs,
        status: "running".into(),
        error: None,
        artifacts: Vec::new(),
        started_unix_secs: now_secs(),
        wall_clock_secs: None,
        versions: Versions {
            package: env!("CARGO_PKG_VERSION").into(),
            dataset_format: FORMAT_VERSION,
            checkpoint_format: CHECKPOINT_VERSION,
        },
        summary: None,
    };
    manifest.write(&dir)?;
    let t0 = Instant::now();
    let result = execute(cli, &cfg, &dir);
    manifest.wall_clock_secs = Some(t0.elapsed().as_secs_f64());
    let code = match result {
        Ok(out) => {
            manifest.status = if out.passed { "ok" } else { "check-failed" }.into();
            manifest.artifacts = out
                .artifacts
                .iter()
                .map(|p| p.strip_prefix(&dir).unwrap_or(p).display().to_string())
                .collect();
            if cli.common.json {
                println!("{}", out.summary);
            } else {
                for l in &out.lines {
                    println!("{l}");
                }
                println!("run directory: {}", dir.display());
            }
            manifest.summary = Some(out.summary);
            if out.passed {
                exit::OK
            } else {
                exit::CHECK_FAILED
            }
        }
        Err(e) => {
            manifest.status = "failed".into();
            manifest.error = Some(e.to_string());
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    manifest.write(&dir)?;
    Ok(RunStatus { run_dir: dir, exit_code: code })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Write a file through `f`, mapping io errors to the path.
fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<PathBuf> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

fn target(cli: &Cli) -> Result<DataSource> {
    DataSource::parse(&cli.common.dataset)
}

fn execute(cli: &Cli, cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let mut loader = DataLoader::new(&cfg.gen, cli.common.data.clone());
    let jobs = cli.common.jobs;
    match &cli.command {
        Command::Gen => cmd_gen(cfg, dir),
        Command::Train { mode, source } => {
            let t = loader.load(&target(cli)?)?;
            let src = match (source, *mode) {
                (_, Mode::RpDCD | Mode::RcD) => None,
                (Some(s), _) => Some(loader.load(&DataSource::parse(s)?)?),
                (None, m) => {
                    let s = target(cli)?.default_source().ok_or_else(|| Error::config(format!("{m} needs --source")))?;
                    Some(loader.load(&s)?)
                }
            };
            cmd_train(cfg, *mode, &t, src.as_ref(), dir)
        }
        Command::Infer { model, with_suppressed } => {
            let model = Model::load(model)?;
            let splits = loader.load(&target(cli)?)?;
            let results = detect_dataset_jobs(&model, &splits.test, &cfg.infer, jobs)?;
            let path = dir.join("detections.jsonl");
            let mut n = 0;
            write_file(&path, |w| {
                write_detections(&mut *w, &results, &splits.test, *with_suppressed).map_err(std::io::Error::other)
            })?;
            for r in &results {
                n += r.detections.len();
            }
            let suppressed: usize = results.iter().map(|r| r.edges.iter().filter(|e| e.suppressed).count()).sum();
            let edges: usize = results.iter().map(|r| r.edges.len()).sum();
            let mut out = Outcome::new(json!({ "detections": n, "edges": edges, "suppressed": suppressed }));
            out.lines.push(format!("{n} detections, {suppressed} of {edges} pairs suppressed"));
            out.artifacts.push(path);
            Ok(out)
        }
        Command::Eval { model } => {
            let model = Model::load(model)?;
            let splits = loader.load(&target(cli)?)?;
            check_label_space(&model, &splits)?;
            let ev = evaluate(&model, &splits, &cfg.infer, &cfg.eval, jobs)?;
            let mut out = Outcome::new(json!({
                "mode": model.meta.mode,
                "map_full": ev.default.map_full,
                "map_rare": ev.default.map_rare,
                "map_non_rare": ev.default.map_non_rare,
                "known_object_map_full": ev.known_object.map_full,
                "non_interactive_reduction": ev.reduction.non_interactive,
                "interactive_retention": ev.reduction.interactive_retention,
            }));
            for r in ev.reports() {
                let path = dir.join(format!("metrics_{}.csv", r.setting.as_str().replace('-', "_")));
                out.artifacts.push(write_file(&path, |w| write_report_csv(w, r))?);
                out.lines.push(format!(
                    "{:<13} mAP full {:.2}  rare {:.2}  non-rare {:.2}",
                    r.setting.as_str(),
                    100.0 * r.map_full,
                    100.0 * r.map_rare,
                    100.0 * r.map_non_rare
                ));
            }
            out.lines.push(format!(
                "suppressed {:.1}% of non-interactive pairs, kept {:.1}% of interactive pairs",
                100.0 * ev.reduction.non_interactive,
                100.0 * ev.reduction.interactive_retention
            ));
            let path = dir.join("summary.csv");
            out.artifacts.push(write_file(&path, |w| {
                writeln!(w, "{SUMMARY_HEADER}")?;
                write_summary_rows(w, &model.meta.mode, &ev.reports())
            })?);
            Ok(out)
        }
        Command::Sweep { model, alpha_grid } => {
            let model = Model::load(model)?;
            let splits = loader.load(&target(cli)?)?;
            check_label_space(&model, &splits)?;
            cmd_sweep(cfg, &model, &splits, &parse_grid(alpha_grid)?, jobs, dir)
        }
        Command::Ablate { switches, model } => {
            let splits = loader.load(&target(cli)?)?;
            cmd_ablate(cfg, &splits, switches, model.as_deref(), jobs, dir)
        }
        Command::Rasterize { image_id, train_split, limit } => {
            let splits = loader.load(&target(cli)?)?;
            let ds = if *train_split { &splits.train } else { &splits.test };
            let scene = match image_id {
                Some(id) => ds.scenes.iter().find(|s| s.image_id == *id),
                None => ds.scenes.first(),
            }
            .ok_or_else(|| Error::validation("image_id", "no such scene"))?;
            let maps = dir.join("maps");
            std::fs::create_dir_all(&maps).map_err(|e| Error::io(&maps, e))?;
            let pairs = candidate_index_pairs(scene, cfg.infer.human_thresh, cfg.infer.object_thresh);
            let mut out = Outcome::new(Value::Null);
            let mut index = Vec::new();
            for &(h, o) in pairs.iter().take(*limit) {
                let (hd, od) = (&scene.detections[h], &scene.detections[o]);
                let t = build_spatial_pose_tensor(&hd.bbox, &od.bbox, hd.keypoints.as_deref(), cfg.net.grid)?;
                for (c, name) in ["pose", "human", "object"].iter().enumerate() {
                    let path = maps.join(format!("{}_{h}_{o}_{name}.pgm", scene.image_id));
                    std::fs::write(&path, t.to_pgm(c)).map_err(|e| Error::io(&path, e))?;
                    let ch = t.channel(c);
                    let nonzero = ch.iter().filter(|&&v| v != 0.0).count();
                    index.push((h, o, *name, path.clone(), nonzero, ch.iter().cloned().fold(f64::INFINITY, f64::min), ch.iter().cloned().fold(0.0, f64::max)));
                    out.artifacts.push(path);
                }
            }
            let csv = dir.join("maps.csv");
            out.artifacts.push(write_file(&csv, |w| {
                writeln!(w, "image_id,human,object,channel,file,nonzero,min,max")?;
                for (h, o, name, path, nz, lo, hi) in &index {
                    let file = path.strip_prefix(dir).unwrap_or(path).display().to_string();
                    writeln!(w, "{},{h},{o},{name},{file},{nz},{lo},{hi}", scene.image_id)?;
                }
                Ok(())
            })?);
            let written = index.len() / 3;
            out.summary = json!({ "image_id": scene.image_id, "candidate_pairs": pairs.len(), "written": written });
            out.lines.push(format!("scene {}: {} candidate pairs, wrote maps for {written}", scene.image_id, pairs.len()));
            Ok(out)
        }
        Command::Gradcheck { max_entries } => {
            let opts = GradCheckOptions { max_entries: *max_entries, seed: cfg.train.seed, ..GradCheckOptions::default() };
            let results = gradcheck_suite(&opts)?;
            let path = dir.join("gradcheck.csv");
            let mut out = Outcome::new(Value::Null);
            out.artifacts.push(write_file(&path, |w| {
                writeln!(w, "target,param,checked,max_rel_error,tol,passed")?;
                for r in &results {
                    for e in &r.report.entries {
                        writeln!(w, "{},{},{},{},{},{}", r.target, e.name, e.checked, e.max_rel_error, opts.tol, e.max_rel_error <= opts.tol)?;
                    }
                }
                Ok(())
            })?);
            let mut targets = BTreeMap::new();
            for r in &results {
                let ok = r.report.passed();
                out.passed &= ok;
                out.lines.push(format!(
                    "{:<16} {}  max rel error {:.3e}",
                    r.target,
                    if ok { "PASS" } else { "FAIL" },
                    r.report.max_rel_error()
                ));
                targets.insert(r.target.clone(), json!({ "passed": ok, "max_rel_error": r.report.max_rel_error() }));
            }
            out.summary = json!({ "passed": out.passed, "eps": opts.eps, "tol": opts.tol, "targets": targets });
            Ok(out)
        }
    }
}

fn check_label_space(model: &Model, splits: &Splits) -> Result<()> {
    if model.meta.label_space != splits.test.labels.name {
        return Err(Error::config(format!(
            "model was trained for label space {}, dataset has {}",
            model.meta.label_space, splits.test.labels.name
        )));
    }
    Ok(())
}

fn cmd_gen(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let pair = generate_dataset_pair(&cfg.gen)?;
    let data = dir.join("data");
    let mut out = Outcome::new(Value::Null);
    out.artifacts = write_dataset_pair(&pair, &data)?;
    let mut rows = Vec::new();
    for (name, train) in [("A", true), ("A", false), ("B", true), ("B", false)] {
        let ds = pair.split(name, train).expect("known split");
        let f = interactive_fraction(&ds.scenes, cfg.gen.human_thresh, cfg.gen.object_thresh);
        let split = if train { "train" } else { "test" };
        out.lines.push(format!("{name} {split:<5} {:>5} scenes, {:.1}% interactive candidate pairs", ds.scenes.len(), 100.0 * f));
        rows.push((name, split, ds.scenes.len(), ds.labels.num_categories(), f));
    }
    let path = dir.join("gen_summary.csv");
    out.artifacts.push(write_file(&path, |w| {
        writeln!(w, "dataset,split,scenes,categories,interactive_fraction")?;
        for (n, s, k, c, f) in &rows {
            writeln!(w, "{n},{s},{k},{c},{f}")?;
        }
        Ok(())
    })?);
    out.summary = json!({ "p_active": pair.p_active, "data_dir": data.display().to_string() });
    Ok(out)
}

fn cmd_train(cfg: &RunConfig, mode: Mode, target: &Splits, source: Option<&Splits>, dir: &Path) -> Result<Outcome> {
    let ckpt = dir.join("checkpoints");
    let mut hook = checkpoint_hook(&ckpt);
    let trained = train_mode(cfg, mode, target, source, &mut hook)?;
    let mut out = Outcome::new(Value::Null);
    let model_path = dir.join("model.ckpt");
    trained.model.save(&model_path)?;
    out.artifacts.push(model_path.clone());
    out.artifacts.push(write_file(&dir.join("train_log.csv"), |w| write_log_csv(w, &trained.log))?);
    let mut ckpts: Vec<PathBuf> = std::fs::read_dir(&ckpt)
        .map_err(|e| Error::io(&ckpt, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    ckpts.sort();
    out.artifacts.extend(ckpts);
    let last = trained.log.last();
    out.summary = json!({
        "mode": mode.as_str(),
        "target": target.name,
        "source": source.map(|s| s.name.clone()),
        "steps": trained.log.len(),
        "final_loss": last.map(|r| r.loss),
        "model": model_path.display().to_string(),
    });
    out.lines.push(format!(
        "trained {mode} on {} in {} steps, final loss {:.4}",
        target.name,
        trained.log.len(),
        last.map(|r| r.loss).unwrap_or(f64::NAN)
    ));
    out.lines.push(format!("model: {}", model_path.display()));
    Ok(out)
}

/// `start:stop:step` (inclusive of `stop` up to rounding) or `a,b,c`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::config(format!("bad alpha grid {spec:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let grid: Vec<f64> = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [a, b, s] = parts[..] else { return Err(bad()) };
        let (a, b, s) = (num(a)?, num(b)?, num(s)?);
        if !(s > 0.0) || b < a {
            return Err(bad());
        }
        let n = ((b - a) / s + 1e-9).floor() as usize;
        // Round to the step's decimal grid so 0.15 prints as 0.15.
        (0..=n).map(|i| ((a + i as f64 * s) * 1e9).round() / 1e9).collect()
    } else {
        spec.split(',').map(num).collect::<Result<_>>()?
    };
    if grid.is_empty() || grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(bad());
    }
    Ok(grid)
}

fn cmd_sweep(cfg: &RunConfig, model: &Model, splits: &Splits, grid: &[f64], jobs: usize, dir: &Path) -> Result<Outcome> {
    // With suppression off every dense edge is scored and emitted; the
    // surviving set at each alpha is then the edges with s_P >= alpha.
    let mut infer: InferConfig = cfg.infer.clone();
    infer.switches.nis_off = true;
    let results = detect_dataset_jobs(model, &splits.test, &infer, jobs)?;
    let counts = train_positive_counts(&splits.train);
    let edges: Vec<(f64, bool)> = results.iter().flat_map(|r| r.edges.iter().map(|e| (e.s_p, e.interactive))).collect();
    // Models without P score every edge 1, so nothing is ever removed.
    let mut rows = Vec::new();
    for (alpha, reduction) in sweep_reduction(&edges, grid) {
        let dets: Vec<HoiDetection> = results.iter().flat_map(|r| r.detections.iter().filter(|d| d.s_p >= alpha).cloned()).collect();
        let report = role_map(&dets, &splits.test, &counts, Setting::Default, cfg.eval.rare_threshold)?;
        rows.push(SweepRow { alpha, reduction, map_full: report.map_full });
    }
    let mut out = Outcome::new(Value::Null);
    out.artifacts.push(write_file(&dir.join("sweep.csv"), |w| write_sweep_csv(w, &rows))?);
    for r in &rows {
        out.lines.push(format!(
            "alpha {:<5} kept {:>6}/{:<6} non-interactive removed {:>5.1}%  mAP {:.2}",
            r.alpha,
            r.reduction.kept,
            r.reduction.edges,
            100.0 * r.reduction.non_interactive,
            100.0 * r.map_full
        ));
    }
    out.summary = serde_json::to_value(&rows).map_err(|e| Error::config(e.to_string()))?;
    Ok(out)
}

fn cmd_ablate(cfg: &RunConfig, splits: &Splits, switches: &[Ablation], model: Option<&Path>, jobs: usize, dir: &Path) -> Result<Outcome> {
    let mut out = Outcome::new(Value::Null);
    let full = match model {
        Some(p) => {
            let m = Model::load(p)?;
            if m.meta.mode != Mode::RpDCD.as_str() {
                return Err(Error::config(format!("ablations compare against an RP_D_C_D model, got {}", m.meta.mode)));
            }
            check_label_space(&m, splits)?;
            m
        }
        None => {
            let m = train_mode(cfg, Mode::RpDCD, splits, None, &mut crate::training::no_hook())?.model;
            let p = dir.join("full.ckpt");
            m.save(&p)?;
            out.artifacts.push(p);
            m
        }
    };
    let mut variants: Vec<(String, RunConfig, Option<Ablation>)> = Vec::new();
    for &s in switches {
        variants.push((s.label().to_string(), ablated(cfg, s), Some(s)));
    }
    if switches.contains(&Ablation::Nis) && switches.contains(&Ablation::Lis) {
        variants.push(("w/o NIS & LIS".into(), ablated(&ablated(cfg, Ablation::Nis), Ablation::Lis), None));
    }
    let mut rows = vec![("full".to_string(), evaluate(&full, splits, &cfg.infer, &cfg.eval, jobs)?)];
    for (label, vcfg, switch) in variants {
        let retrain = switch.and_then(|s| s.p_streams()).is_some();
        let ev = if retrain {
            let m = train_mode(&vcfg, Mode::RpDCD, splits, None, &mut crate::training::no_hook())?.model;
            let p = dir.join(format!("{}.ckpt", switch.expect("stream switch").as_str()));
            m.save(&p)?;
            out.artifacts.push(p);
            evaluate(&m, splits, &vcfg.infer, &vcfg.eval, jobs)?
        } else {
            let results = detect_dataset_jobs(&full, &splits.test, &vcfg.infer, jobs)?;
            evaluate_results(results, splits, &vcfg.eval)?
        };
        rows.push((label, ev));
    }
    out.artifacts.push(write_file(&dir.join("ablation.csv"), |w| {
        writeln!(w, "{SUMMARY_HEADER}")?;
        for (label, ev) in &rows {
            write_summary_rows(&mut *w, label, &ev.reports())?;
        }
        Ok(())
    })?);
    let mut summary = Vec::new();
    for (label, ev) in &rows {
        out.lines.push(format!("{label:<16} mAP full {:.2}", 100.0 * ev.default.map_full));
        summary.push(json!({ "variant": label, "map_full": ev.default.map_full }));
    }
    out.summary = Value::Array(summary);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0:0.5:0.05").unwrap().len(), 11);
        assert_eq!(parse_grid("0:0.5:0.05").unwrap()[3], 0.15);
        assert_eq!(parse_grid("0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        for bad in ["", "0:1", "0:1:0", "1:0:0.1", "0,2", "x"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn error_categories_have_distinct_codes() {
        let codes = [
            exit_code(&Error::config("x")),
            exit_code(&Error::io("p", std::io::Error::other("x"))),
            exit_code(&Error::Parse { line: 1, message: "x".into() }),
            exit_code(&Error::NonFiniteLoss("x".into())),
        ];
        let mut all = codes.to_vec();
        all.extend([exit::USAGE, exit::CHECK_FAILED, exit::OK]);
        let mut dedup = all.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), all.len());
    }
}
