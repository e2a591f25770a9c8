//! The budgeted anytime run.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::snapshot::{quantize_timestamp, score_snapshots, write_snapshot};
use crate::augment::{builtin_pool, Policy, PolicyPool};
use crate::data::{
    adapt, infer_meta, load_dataset, load_images, load_labels, normalize, split_train_valid, target_input_shape, Image,
    InputSpec, LabeledDataset, PreprocessCache,
};
use crate::error::{Error, Result};
use crate::metrics::{PredictionSnapshot, ScoreReport};
use crate::search::{search_policies, ModelEvaluator, SearchConfig, SearchResult};
use crate::trainer::{
    fit, fit_resume, fit_until_trigger, init_model, load_checkpoint, save_checkpoint, Checkpoint, Clock, EpochObserver,
    EpochRecord, FitOutcome, FitPlan, Model, TrainerConfig, TrainingData, Trigger, WallClock,
};

pub const SNAPSHOT_DIR: &str = "snapshots";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const CURVE_FILE: &str = "curve.csv";
pub const SCORE_FILE: &str = "score.json";
pub const SEARCH_REPORT_FILE: &str = "search-report.json";
pub const POLICY_FILE: &str = "policy.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LAST_GOOD_FILE: &str = "last_good.ckpt";
pub const REPORT_FILE: &str = "run-report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub score: ScoreReport,
    pub search: Option<SearchResult>,
    pub policy: Option<Policy>,
    pub trigger: Option<Trigger>,
    pub log: Vec<EpochRecord>,
    pub config: RunConfig,
    /// Seconds from run start to the end of scoring.
    pub wall_clock: f64,
}

impl RunReport {
    pub fn snapshot_dir(&self) -> PathBuf {
        self.config.output.join(SNAPSHOT_DIR)
    }
}

/// `<dir>/<split>` when it exists, otherwise `dir` itself.
pub fn split_dir(dir: &Path, split: &str) -> PathBuf {
    let sub = dir.join(split);
    if sub.is_dir() {
        sub
    } else {
        dir.to_path_buf()
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_pool(path: Option<&Path>) -> Result<PolicyPool> {
    match path {
        None => Ok(builtin_pool()),
        Some(p) => PolicyPool::from_json(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
    }
}

/// Writes the score block: alc, final NAUC, per-class NAUC and the ALC settings.
pub fn write_score_report(report: &ScoreReport, path: &Path) -> Result<()> {
    write_json(
        path,
        &serde_json::json!({
            "alc": report.alc,
            "final_nauc": report.final_nauc,
            "per_class_nauc": report.per_class_nauc,
            "config": report.config,
        }),
    )
}

pub fn export_curve(report: &ScoreReport, path: &Path) -> Result<()> {
    report.curve.write_csv(path)
}

/// Per-run output: snapshot directory and open training log.
struct Sink {
    dir: PathBuf,
    log: BufWriter<File>,
}

impl Sink {
    fn open(output: &Path) -> Result<Self> {
        let dir = output.join(SNAPSHOT_DIR);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = output.join(LOG_FILE);
        let log = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
        Ok(Self { dir, log })
    }
}

/// Predicts the test images after every epoch and persists the snapshot to every sink.
struct SnapshotWriter<'a> {
    clock: &'a dyn Clock,
    budget: f64,
    tau: f64,
    test: &'a [Image],
    snapshots: Vec<PredictionSnapshot>,
    sinks: Vec<Sink>,
}

impl EpochObserver for SnapshotWriter<'_> {
    fn epoch_end(&mut self, model: &Model, record: &EpochRecord) -> Result<()> {
        let line = serde_json::to_string(record).expect("record serializes");
        for sink in &mut self.sinks {
            writeln!(sink.log, "{line}").map_err(|e| Error::io(&sink.dir, e))?;
            sink.log.flush().map_err(|e| Error::io(&sink.dir, e))?;
        }
        let scores = model.predict(self.test, self.tau)?;
        let mut timestamp = quantize_timestamp(self.clock.elapsed());
        if let Some(last) = self.snapshots.last() {
            if timestamp <= last.timestamp {
                timestamp = quantize_timestamp(last.timestamp + 1e-6);
            }
        }
        if timestamp > self.budget {
            return Ok(());
        }
        let snapshot = PredictionSnapshot { timestamp, scores };
        for sink in &self.sinks {
            write_snapshot(&sink.dir, &snapshot)?;
        }
        self.snapshots.push(snapshot);
        Ok(())
    }
}

fn prepare_inputs(images: &[Image], spec: &InputSpec) -> Result<Vec<Image>> {
    images
        .iter()
        .map(|img| Ok(normalize(&adapt(img, spec)?, spec)))
        .collect()
}

/// Everything a run needs before training starts. Test labels are not part of it.
struct Inputs {
    full: LabeledDataset,
    train: LabeledDataset,
    valid: LabeledDataset,
    test: Vec<Image>,
    test_dir: PathBuf,
    spec: InputSpec,
    pool: PolicyPool,
    model: Model,
    trainer: TrainerConfig,
    search: SearchConfig,
}

impl Inputs {
    fn load(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let (trainer, search) = cfg.seeded();
        let pool = load_pool(cfg.pool.as_deref())?;
        let warm = cfg.warmstart.as_deref().map(load_checkpoint).transpose()?;

        let test_dir = split_dir(&cfg.dataset, "test");
        let full = load_dataset(&split_dir(&cfg.dataset, "train"))?;
        let test = load_images(&test_dir)?;
        if test.num_classes != full.num_classes() {
            return Err(Error::Integrity(format!(
                "test set declares {} classes, train set {}",
                test.num_classes,
                full.num_classes()
            )));
        }
        let meta = infer_meta(full.images(), full.num_classes())?;
        let spec = target_input_shape(&meta);
        let (train, valid) = split_train_valid(&full, trainer.valid_fraction, trainer.seed)?;
        let model = init_model(&spec, full.num_classes(), &trainer, warm.as_ref())?;
        Ok(Self {
            test: prepare_inputs(&test.images, &spec)?,
            full,
            train,
            valid,
            test_dir,
            spec,
            pool,
            model,
            trainer,
            search,
        })
    }

    fn plan(&self, cfg: &RunConfig) -> FitPlan {
        FitPlan {
            trainer: self.trainer.clone(),
            search: self.search,
            mode: cfg.mode,
            budget: cfg.budget,
        }
    }

    fn writer<'a>(&'a self, cfg: &RunConfig, clock: &'a dyn Clock, sinks: Vec<Sink>) -> SnapshotWriter<'a> {
        SnapshotWriter {
            clock,
            budget: cfg.budget,
            tau: self.trainer.tau,
            test: &self.test,
            snapshots: Vec::new(),
            sinks,
        }
    }
}

/// Saves the last good checkpoint of a diverged run into each output directory.
fn keep_last_good(err: Error, outputs: &[&Path]) -> Error {
    if let Error::Divergence {
        last_good: Some(ckpt), ..
    } = &err
    {
        for out in outputs {
            if let Err(e) = save_checkpoint(ckpt, &out.join(LAST_GOOD_FILE)) {
                return e;
            }
        }
    }
    err
}

/// Writes the model and search artifacts, then scores the snapshots against the test labels.
fn finish(
    cfg: &RunConfig,
    inputs: &Inputs,
    fitted: FitOutcome,
    snapshots: &[PredictionSnapshot],
    clock: &dyn Clock,
) -> Result<RunReport> {
    save_checkpoint(
        &Checkpoint::from_model(&fitted.model, inputs.full.checksum()),
        &cfg.output.join(CHECKPOINT_FILE),
    )?;
    if let Some(result) = &fitted.search {
        let path = cfg.output.join(SEARCH_REPORT_FILE);
        fs::write(&path, result.to_json() + "\n").map_err(|e| Error::io(&path, e))?;
    }
    if let Some(policy) = &fitted.policy {
        let path = cfg.output.join(POLICY_FILE);
        fs::write(&path, policy.to_json() + "\n").map_err(|e| Error::io(&path, e))?;
    }

    let labels = load_labels(&inputs.test_dir)?;
    let score = score_snapshots(snapshots, &labels, &cfg.alc_config())?;
    export_curve(&score, &cfg.output.join(CURVE_FILE))?;
    write_score_report(&score, &cfg.output.join(SCORE_FILE))?;
    let report = RunReport {
        score,
        search: fitted.search,
        policy: fitted.policy,
        trigger: fitted.trigger,
        log: fitted.log,
        config: cfg.clone(),
        wall_clock: clock.elapsed(),
    };
    write_json(&cfg.output.join(REPORT_FILE), &report)?;
    Ok(report)
}

/// Loads data, trains under the budget writing a snapshot per epoch, then scores.
///
/// Test labels are read only after training has finished.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let clock = WallClock::start();
    let inputs = Inputs::load(cfg)?;
    let cache = PreprocessCache::default();
    let mut writer = inputs.writer(cfg, &clock, vec![Sink::open(&cfg.output)?]);
    let fitted = fit(
        inputs.model.clone(),
        &TrainingData::new(&inputs.train, inputs.spec, &cache),
        &TrainingData::new(&inputs.valid, inputs.spec, &cache),
        &inputs.plan(cfg),
        &inputs.pool,
        &clock,
        &mut writer,
    )
    .map_err(|e| keep_last_good(e, &[&cfg.output]))?;
    finish(cfg, &inputs, fitted, &writer.snapshots, &clock)
}

/// Runs several configurations that differ only in `mode` and `output` from one
/// shared training prefix.
///
/// Training up to the search trigger does not depend on the mode, so it runs
/// once: its snapshots and log lines go to every output, and each branch then
/// continues from a copy of the trained state with the clock resumed at the
/// trigger time. Each branch is the run [`run`] would have produced, with
/// the timing of the prefix shared. Branch failures are reported per branch;
/// a failure before the trigger fails all of them.
pub fn run_branches(base: &RunConfig, branches: &[RunConfig]) -> Result<Vec<Result<RunReport>>> {
    for b in branches {
        let aligned = RunConfig {
            mode: base.mode,
            output: base.output.clone(),
            ..b.clone()
        };
        if aligned != *base {
            return Err(Error::Config("branched runs may differ only in mode and output".into()));
        }
    }
    let clock = WallClock::start();
    let inputs = Inputs::load(base)?;
    let cache = PreprocessCache::default();
    let train = TrainingData::new(&inputs.train, inputs.spec, &cache);
    let valid = TrainingData::new(&inputs.valid, inputs.spec, &cache);
    let sinks = branches
        .iter()
        .map(|b| Sink::open(&b.output))
        .collect::<Result<Vec<_>>>()?;
    let outputs: Vec<&Path> = branches.iter().map(|b| b.output.as_path()).collect();

    let mut writer = inputs.writer(base, &clock, sinks);
    let prefix = fit_until_trigger(
        inputs.model.clone(),
        &train,
        &valid,
        &inputs.plan(base),
        &clock,
        &mut writer,
    )
    .map_err(|e| keep_last_good(e, &outputs))?;
    let fork_time = clock.elapsed();
    let SnapshotWriter { snapshots, sinks, .. } = writer;

    let mut reports = Vec::with_capacity(branches.len());
    for (cfg, sink) in branches.iter().zip(sinks) {
        let clock = WallClock::resumed_at(fork_time);
        let mut writer = inputs.writer(cfg, &clock, vec![sink]);
        writer.snapshots = snapshots.clone();
        let report = fit_resume(
            prefix.clone(),
            &train,
            &valid,
            &inputs.plan(cfg),
            &inputs.pool,
            &clock,
            &mut writer,
        )
        .map_err(|e| keep_last_good(e, &[&cfg.output]))
        .and_then(|fitted| finish(cfg, &inputs, fitted, &writer.snapshots, &clock));
        reports.push(report);
    }
    Ok(reports)
}

/// Runs the policy search for a trained checkpoint on the validation split of `dataset`.
pub fn search_from_checkpoint(
    dataset: &Path,
    checkpoint: &Checkpoint,
    trainer: &TrainerConfig,
    search: &SearchConfig,
    pool: &PolicyPool,
) -> Result<SearchResult> {
    let full = load_dataset(&split_dir(dataset, "train"))?;
    let spec = target_input_shape(&infer_meta(full.images(), full.num_classes())?);
    let (_, valid) = split_train_valid(&full, trainer.valid_fraction, trainer.seed)?;
    let model = checkpoint.to_model()?;
    let adapted = valid
        .images()
        .iter()
        .map(|img| adapt(img, &spec).map(std::sync::Arc::new))
        .collect::<Result<Vec<_>>>()?;
    let evaluator = ModelEvaluator::new(&model, adapted, valid.labels(), spec, trainer.tau, search.eval_repeats);
    search_policies(search, &evaluator, pool)
}
