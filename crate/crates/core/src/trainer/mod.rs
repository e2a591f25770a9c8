//! The classifier and its training protocol.

mod anneal;
mod checkpoint;
mod clock;
mod model;
mod schedule;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use anneal::anneal;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Descriptor};
pub use clock::{Clock, StepClock, WallClock};
pub use model::{Architecture, Batch, Model, Tensor};
pub use schedule::{schedule_step, Phase, ScheduleState};

use crate::augment::{apply_policy, random_policy, Policy, PolicyPool};
use crate::data::{adapt, normalize, CacheKey, Image, InputSpec, LabelMatrix, LabeledDataset, PreprocessCache};
use crate::error::{Error, Result};
use crate::metrics::{nauc_macro, ScoreMatrix};
use crate::rng;
use crate::search::{search_policies, ModelEvaluator, SearchConfig, SearchResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub warmup_epochs: usize,
    pub plateau_window: usize,
    pub plateau_factor: f64,
    /// Minimum absolute drop in mean epoch loss that counts as improvement.
    pub plateau_eps: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub search_trigger_nauc: f64,
    pub seed: u64,
    /// Output widths of the conv blocks; 2 to 4 entries.
    pub widths: Vec<usize>,
    /// Transform workers preparing batches; 0 or 1 prepares inline.
    pub workers: usize,
    pub valid_fraction: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.1,
            momentum: 0.9,
            warmup_epochs: 5,
            plateau_window: 10,
            plateau_factor: 0.1,
            plateau_eps: 1e-4,
            tau: 8.0,
            batch_size: 32,
            search_trigger_nauc: 0.99,
            seed: 0,
            widths: vec![16, 32],
            workers: 1,
            valid_fraction: 0.2,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return bad("base_lr must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if self.batch_size == 0 || self.plateau_window == 0 {
            return bad("batch_size and plateau_window must be positive");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return bad("plateau_factor must lie in (0, 1]");
        }
        if !(2..=4).contains(&self.widths.len()) || self.widths.contains(&0) {
            return bad("widths needs 2 to 4 positive entries");
        }
        Ok(())
    }
}

/// Builds a model for `spec`; a warm-start copies the conv stack and redraws the head.
pub fn init_model(
    spec: &InputSpec,
    num_classes: usize,
    cfg: &TrainerConfig,
    warmstart: Option<&Checkpoint>,
) -> Result<Model> {
    let arch = Architecture::for_input(spec, num_classes, &cfg.widths)?;
    match warmstart {
        None => Ok(Model::new(arch, cfg.seed)),
        Some(ckpt) => Model::warm_started(arch, &ckpt.to_model()?, cfg.seed),
    }
}

/// Annealed class probabilities for preprocessed images.
pub fn predict(model: &Model, images: &[Image], tau: f64) -> Result<ScoreMatrix> {
    model.predict(images, tau)
}

/// A dataset bound to an input spec and the shared preprocessing cache.
#[derive(Clone, Copy)]
pub struct TrainingData<'a> {
    dataset: &'a LabeledDataset,
    spec: InputSpec,
    cache: &'a PreprocessCache,
}

impl<'a> TrainingData<'a> {
    pub fn new(dataset: &'a LabeledDataset, spec: InputSpec, cache: &'a PreprocessCache) -> Self {
        Self { dataset, spec, cache }
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    pub fn labels(&self) -> &'a LabelMatrix {
        self.dataset.labels()
    }

    pub fn spec(&self) -> &InputSpec {
        &self.spec
    }

    pub fn dataset(&self) -> &'a LabeledDataset {
        self.dataset
    }

    /// Resized, channel-adjusted image `i` in `[0, 1]`.
    pub fn adapted(&self, i: usize) -> Result<Arc<Image>> {
        let key = CacheKey {
            dataset: self.dataset.fingerprint(),
            index: i,
            target_shape: self.spec.target_shape,
        };
        self.cache
            .get_or_insert_with(key, || adapt(&self.dataset.images()[i], &self.spec))
    }

    pub fn adapted_all(&self) -> Result<Vec<Arc<Image>>> {
        (0..self.len()).map(|i| self.adapted(i)).collect()
    }

    pub fn preprocessed_all(&self) -> Result<Vec<Image>> {
        (0..self.len())
            .map(|i| Ok(normalize(self.adapted(i)?.as_ref(), &self.spec)))
            .collect()
    }
}

/// SGD momentum buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(model: &Model) -> Self {
        Self {
            velocity: model.params().iter().map(|p| Tensor::zeros(&p.shape)).collect(),
        }
    }

    /// Applies one update, or returns false and leaves everything untouched when
    /// the update would make a velocity or weight non-finite.
    fn step(&mut self, model: &mut Model, grads: &[Tensor], lr: f64, momentum: f64, scale: f64) -> bool {
        let finite = model.params().iter().zip(&self.velocity).zip(grads).all(|((p, v), g)| {
            p.data.iter().zip(&v.data).zip(&g.data).all(|((w, vel), &d)| {
                let vel = momentum * vel + d * scale;
                vel.is_finite() && (w - lr * vel).is_finite()
            })
        });
        if !finite {
            return false;
        }
        for ((p, v), g) in model.params_mut().iter_mut().zip(&mut self.velocity).zip(grads) {
            for ((w, vel), &d) in p.data.iter_mut().zip(&mut v.data).zip(&g.data) {
                *vel = momentum * *vel + d * scale;
                *w -= lr * *vel;
            }
        }
        true
    }
}

type Prepared = (Batch, Vec<u8>);

fn prepare_batch(
    data: &TrainingData<'_>,
    indices: &[usize],
    policy: Option<&Policy>,
    seed: u64,
    epoch: usize,
) -> Result<Prepared> {
    let labels = data.labels();
    let mut images = Vec::with_capacity(indices.len());
    let mut targets = Vec::with_capacity(indices.len() * labels.cols());
    for &i in indices {
        let adapted = data.adapted(i)?;
        let img = match policy {
            Some(p) => {
                let mut r = rng::stream(seed, &[rng::tag::AUGMENT, epoch as u64, i as u64]);
                normalize(&apply_policy(&adapted, p, &mut r), data.spec())
            }
            None => normalize(&adapted, data.spec()),
        };
        images.push(img);
        targets.extend_from_slice(labels.row(i));
    }
    Ok((Batch::from_images(&images)?, targets))
}

/// Feeds prepared batches to `consume` in batch order, preparing them on `workers` threads.
fn for_each_batch(
    batches: &[Vec<usize>],
    workers: usize,
    prepare: impl Fn(&[usize]) -> Result<Prepared> + Sync,
    mut consume: impl FnMut(usize, Prepared) -> Result<()>,
) -> Result<()> {
    if workers <= 1 {
        for (b, idx) in batches.iter().enumerate() {
            consume(b, prepare(idx)?)?;
        }
        return Ok(());
    }
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::sync_channel::<(usize, Result<Prepared>)>(2 * workers);
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, stop, prepare) = (&next, &stop, &prepare);
            scope.spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    let b = next.fetch_add(1, Ordering::Relaxed);
                    if b >= batches.len() || tx.send((b, prepare(&batches[b]))).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);
        let mut pending = BTreeMap::new();
        let mut want = 0;
        let result = (|| {
            while want < batches.len() {
                if let Some(ready) = pending.remove(&want) {
                    let ready: Result<Prepared> = ready;
                    consume(want, ready?)?;
                    want += 1;
                    continue;
                }
                let (b, prepared) = rx
                    .recv()
                    .map_err(|_| Error::Config("batch workers exited early".into()))?;
                pending.insert(b, prepared);
            }
            Ok(())
        })();
        stop.store(true, Ordering::Relaxed);
        drop(rx);
        result
    })
}

/// One shuffled pass with SGD-momentum updates at `state.current_lr`.
///
/// Returns the mean per-sample loss of the epoch and the schedule advanced by it.
pub fn train_epoch(
    model: &mut Model,
    sgd: &mut Sgd,
    data: &TrainingData<'_>,
    policy: Option<&Policy>,
    state: &ScheduleState,
    cfg: &TrainerConfig,
) -> Result<(f64, ScheduleState)> {
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let epoch = state.epoch;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng::stream(cfg.seed, &[rng::tag::SHUFFLE, epoch as u64]));
    let batches: Vec<Vec<usize>> = order.chunks(cfg.batch_size).map(<[usize]>::to_vec).collect();
    let lr = state.current_lr;
    let mut total = 0.0;
    for_each_batch(
        &batches,
        cfg.workers,
        |idx| prepare_batch(data, idx, policy, cfg.seed, epoch),
        |b, (batch, targets)| {
            model.check_input(&batch)?;
            let (loss, grads) = model.loss_and_grad(&batch, &targets, cfg.tau);
            if !loss.is_finite() || !sgd.step(model, &grads, lr, cfg.momentum, 1.0 / batch.size as f64) {
                return Err(Error::Divergence {
                    batch: b,
                    last_good: Some(Box::new(Checkpoint::from_model(model, data.dataset().checksum()))),
                });
            }
            total += loss;
            Ok(())
        },
    )?;
    let mean = total / data.len() as f64;
    Ok((mean, schedule_step(state, mean, cfg)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AugmentMode {
    Searched,
    Random,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriggerReason {
    Threshold,
    HalfBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    /// Epochs completed when the search ran.
    pub epoch: usize,
    pub elapsed: f64,
    pub reason: TriggerReason,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub valid_nauc: Option<f64>,
    pub phase: Phase,
    pub wall_clock: f64,
}

/// Called after every epoch with the current parameters.
pub trait EpochObserver {
    fn epoch_end(&mut self, model: &Model, record: &EpochRecord) -> Result<()>;
}

impl<F: FnMut(&Model, &EpochRecord) -> Result<()>> EpochObserver for F {
    fn epoch_end(&mut self, model: &Model, record: &EpochRecord) -> Result<()> {
        self(model, record)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitPlan {
    pub trainer: TrainerConfig,
    pub search: SearchConfig,
    pub mode: AugmentMode,
    pub budget: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: Model,
    pub search: Option<SearchResult>,
    pub policy: Option<Policy>,
    pub trigger: Option<Trigger>,
    pub log: Vec<EpochRecord>,
}

fn valid_nauc(model: &Model, images: &[Image], labels: &LabelMatrix, tau: f64) -> Result<Option<f64>> {
    match nauc_macro(&model.predict(images, tau)?, labels) {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedAuc) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Training state after the search trigger fired (or the budget ran out), before
/// the retrain policy is chosen. Cloning it lets several augmentation modes
/// continue from one shared prefix.
#[derive(Debug, Clone)]
pub struct FitProgress {
    model: Model,
    sgd: Sgd,
    state: ScheduleState,
    log: Vec<EpochRecord>,
    last_epoch_cost: f64,
    trigger: Option<Trigger>,
}

impl FitProgress {
    pub fn trigger(&self) -> Option<&Trigger> {
        self.trigger.as_ref()
    }

    pub fn log(&self) -> &[EpochRecord] {
        &self.log
    }

    pub fn model(&self) -> &Model {
        &self.model
    }
}

fn check_plan(plan: &FitPlan) -> Result<()> {
    plan.trainer.validate()?;
    plan.search.validate()?;
    if plan.budget.is_nan() || plan.budget <= 0.0 {
        return Err(Error::Config("budget must be positive".into()));
    }
    Ok(())
}

/// Runs epochs until the budget is spent, or until the trigger fires when
/// `stop_at_trigger` is set.
#[allow(clippy::too_many_arguments)]
fn epoch_loop(
    p: &mut FitProgress,
    train: &TrainingData<'_>,
    valid: &TrainingData<'_>,
    valid_images: &[Image],
    plan: &FitPlan,
    policy: Option<&Policy>,
    clock: &dyn Clock,
    observer: &mut dyn EpochObserver,
    stop_at_trigger: bool,
) -> Result<()> {
    let cfg = &plan.trainer;
    loop {
        let start = clock.elapsed();
        if start >= plan.budget || start + p.last_epoch_cost > plan.budget {
            return Ok(());
        }
        let lr = p.state.current_lr;
        let phase = p.state.phase;
        let (loss, next) = train_epoch(&mut p.model, &mut p.sgd, train, policy, &p.state, cfg)?;
        p.state = next;
        let nauc = valid_nauc(&p.model, valid_images, valid.labels(), cfg.tau)?;
        let record = EpochRecord {
            epoch: p.state.epoch,
            lr,
            loss,
            valid_nauc: nauc,
            phase,
            wall_clock: clock.elapsed(),
        };
        observer.epoch_end(&p.model, &record)?;
        p.log.push(record);
        let now = clock.elapsed();
        p.last_epoch_cost = now - start;

        if !stop_at_trigger {
            continue;
        }
        let reason = if nauc.is_some_and(|v| v > cfg.search_trigger_nauc) {
            TriggerReason::Threshold
        } else if now >= plan.budget / 2.0 {
            TriggerReason::HalfBudget
        } else {
            continue;
        };
        p.trigger = Some(Trigger {
            epoch: p.state.epoch,
            elapsed: now,
            reason,
        });
        return Ok(());
    }
}

/// First phase of [`fit`]: trains without augmentation until the search trigger.
///
/// `plan.mode` is not consulted here.
pub fn fit_until_trigger(
    model: Model,
    train: &TrainingData<'_>,
    valid: &TrainingData<'_>,
    plan: &FitPlan,
    clock: &dyn Clock,
    observer: &mut dyn EpochObserver,
) -> Result<FitProgress> {
    check_plan(plan)?;
    let valid_images = valid.preprocessed_all()?;
    let mut progress = FitProgress {
        sgd: Sgd::new(&model),
        model,
        state: ScheduleState::new(&plan.trainer),
        log: Vec::new(),
        last_epoch_cost: 0.0,
        trigger: None,
    };
    epoch_loop(
        &mut progress,
        train,
        valid,
        &valid_images,
        plan,
        None,
        clock,
        observer,
        true,
    )?;
    Ok(progress)
}

/// Second phase of [`fit`]: picks the retrain policy for `plan.mode`, restarts
/// the schedule and trains until the budget is spent.
pub fn fit_resume(
    mut progress: FitProgress,
    train: &TrainingData<'_>,
    valid: &TrainingData<'_>,
    plan: &FitPlan,
    pool: &PolicyPool,
    clock: &dyn Clock,
    observer: &mut dyn EpochObserver,
) -> Result<FitOutcome> {
    check_plan(plan)?;
    let cfg = &plan.trainer;
    let mut search = None;
    let mut policy = None;
    if progress.trigger.is_some() {
        policy = match plan.mode {
            AugmentMode::Searched => {
                let evaluator = ModelEvaluator::new(
                    &progress.model,
                    valid.adapted_all()?,
                    valid.labels(),
                    *valid.spec(),
                    cfg.tau,
                    plan.search.eval_repeats,
                );
                let result = search_policies(&plan.search, &evaluator, pool)?;
                let selected = result.policy();
                search = Some(result);
                selected
            }
            AugmentMode::Random => {
                let mut r = rng::stream(plan.search.seed, &[rng::tag::RANDOM_POLICY]);
                Some(random_policy(pool, plan.search.c, &mut r)?)
            }
            AugmentMode::None => None,
        };
        progress.state = progress.state.restart_for_retrain(cfg);
        let valid_images = valid.preprocessed_all()?;
        epoch_loop(
            &mut progress,
            train,
            valid,
            &valid_images,
            plan,
            policy.as_ref(),
            clock,
            observer,
            false,
        )?;
    }
    Ok(FitOutcome {
        model: progress.model,
        search,
        policy,
        trigger: progress.trigger,
        log: progress.log,
    })
}

/// Trains under the time budget: plain training until the trigger, then the
/// policy step for `plan.mode` and retraining from a restarted schedule.
pub fn fit(
    model: Model,
    train: &TrainingData<'_>,
    valid: &TrainingData<'_>,
    plan: &FitPlan,
    pool: &PolicyPool,
    clock: &dyn Clock,
    observer: &mut dyn EpochObserver,
) -> Result<FitOutcome> {
    let progress = fit_until_trigger(model, train, valid, plan, clock, observer)?;
    fit_resume(progress, train, valid, plan, pool, clock, observer)
}
