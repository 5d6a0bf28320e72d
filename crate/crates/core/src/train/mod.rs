//! End-to-end training on freshly generated tasks.
//!
//! The batch for step `s` is drawn from its own stream `(seed, TRAIN, s)`, so
//! the only sampler state a checkpoint needs is the step count. Evaluation
//! tasks come from the `HELDOUT` domain and never overlap training data.

mod checkpoint;
mod eval;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

pub use checkpoint::{
    load_checkpoint, load_model, read_manifest, save_checkpoint, CheckpointError, Manifest,
    TensorEntry, MANIFEST, TENSORS,
};
pub use eval::{
    evaluate, evaluate_with, heldout_corpus, heldout_task, parallel_map, summarize, EvalMetrics,
    LengthBucket,
};

use crate::autodiff::{Adam, AdamConfig, Graph};
use crate::model::{task_loss_graph, Model, ModelConfig};
use crate::rng::{domain, Rng};
use crate::search::{Method, SearchConfig};
use crate::taskgen::{generate_task, GenConfig, Task};
use crate::vocab::{self, TokenSeq};

/// Consecutive skipped steps after which training aborts.
pub const MAX_CONSECUTIVE_SKIPS: u64 = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: u64,
    /// Evaluate every this many steps (and after the last); 0 evaluates only at the end.
    pub eval_every: u64,
    pub eval_tasks: usize,
    /// Save a checkpoint every this many steps (and after the last); 0 saves only at the end.
    #[serde(default)]
    pub checkpoint_every: u64,
    pub seed: u64,
    pub model: ModelConfig,
    /// Task distribution; its `seed` field is ignored in favour of `seed` above.
    pub gen: GenConfig,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default)]
    pub search: SearchConfig,
    /// Threads used for evaluation.
    #[serde(default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

impl TrainConfig {
    /// Desk-scale setup: `H = 64`, `B = 128`, up to three expressions, strings up to 30 characters.
    pub fn desk() -> Self {
        TrainConfig {
            batch_size: 128,
            steps: 50_000,
            eval_every: 5_000,
            eval_tasks: 200,
            checkpoint_every: 5_000,
            seed: 1,
            model: ModelConfig::with_hidden(64),
            gen: GenConfig {
                max_expressions: 3,
                max_io_len: 30,
                ..GenConfig::default()
            },
            optimizer: AdamConfig::default(),
            search: SearchConfig::default(),
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 {
            return Err("batch_size must be at least 1".into());
        }
        self.model.validate()?;
        self.gen.validate().map_err(|e| e.to_string())?;
        self.search.validate()?;
        if self.optimizer.lr <= 0.0 || !self.optimizer.lr.is_finite() {
            return Err("optimizer.lr must be positive".into());
        }
        Ok(())
    }
}

/// Training-loss accumulator between evaluation points.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossWindow {
    /// Bit pattern of the `f64` loss sum, so checkpoints restore it exactly.
    pub loss_sum_bits: u64,
    pub steps: u64,
    pub skipped: u64,
    pub consecutive_skips: u64,
}

impl LossWindow {
    fn add(&mut self, loss: f64) {
        self.loss_sum_bits = (f64::from_bits(self.loss_sum_bits) + loss).to_bits();
        self.steps += 1;
        self.consecutive_skips = 0;
    }

    fn skip(&mut self) {
        self.skipped += 1;
        self.consecutive_skips += 1;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.steps > 0).then(|| f64::from_bits(self.loss_sum_bits) / self.steps as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub model: Model<f32>,
    pub adam: Adam<f32>,
    /// Batches consumed so far, including skipped ones.
    pub step: u64,
    pub window: LossWindow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    /// Mean training loss since the previous record; `None` if every step was skipped.
    pub loss: Option<f64>,
    pub greedy_acc: f64,
    pub beam_acc: f64,
    pub fixer_acc: f64,
    pub skipped: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("aborted at step {step}: {MAX_CONSECUTIVE_SKIPS} consecutive non-finite steps")]
    Diverged { step: u64 },
}

/// Outcome of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome {
    Applied { loss: f64 },
    Skipped,
}

/// The batch for `step`.
pub fn batch_tasks(config: &TrainConfig, step: u64) -> Vec<Task> {
    let mut rng = Rng::stream(config.seed, domain::TRAIN, step);
    (0..config.batch_size)
        .map(|_| generate_task(&mut rng, &config.gen))
        .collect()
}

impl TrainState {
    pub fn new(config: TrainConfig) -> Result<Self, TrainError> {
        config.validate().map_err(TrainError::Config)?;
        let model = Model::new(config.model.clone(), config.seed);
        let adam = Adam::new(config.optimizer.clone(), &model.params);
        Ok(TrainState {
            config,
            model,
            adam,
            step: 0,
            window: LossWindow::default(),
        })
    }

    /// Mean two-term loss on `batch` and one Adam update. A non-finite loss or
    /// gradient leaves the parameters untouched.
    pub fn train_step(&mut self, batch: &[Task]) -> StepOutcome {
        self.step += 1;
        let targets: Vec<TokenSeq> = batch
            .iter()
            .map(|t| vocab::program_to_tokens(&t.program).expect("generated programs tokenize"))
            .collect();
        let fix = self.model.fixer_triplets(batch);
        let (loss, grads) = {
            let mut g = Graph::new();
            let l = task_loss_graph(
                &mut g,
                &self.model.params,
                &self.model.config,
                batch,
                &targets,
                &fix,
            )
            .expect("model shapes agree");
            let loss = g.value(l.total)[0] as f64;
            if !loss.is_finite() {
                self.window.skip();
                return StepOutcome::Skipped;
            }
            (loss, g.backward(l.total))
        };
        match self.adam.step(&mut self.model.params, &grads) {
            Ok(_) => {
                self.window.add(loss);
                StepOutcome::Applied { loss }
            }
            Err(_) => {
                self.window.skip();
                StepOutcome::Skipped
            }
        }
    }

    /// Greedy, beam and fixer accuracy on `corpus`, closing the loss window.
    pub fn metrics(&mut self, corpus: &[Task]) -> MetricsRecord {
        let acc = |m: Method| {
            evaluate(&self.model, corpus, &self.config.search, m, self.config.workers)
                .0
                .accuracy
        };
        let record = MetricsRecord {
            step: self.step,
            loss: self.window.mean(),
            greedy_acc: acc(Method::Greedy),
            beam_acc: acc(Method::Beam),
            fixer_acc: acc(Method::Fixer),
            skipped: self.window.skipped,
        };
        self.window = LossWindow {
            consecutive_skips: self.window.consecutive_skips,
            ..LossWindow::default()
        };
        record
    }
}

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoint";

/// Rewrites `metrics.jsonl` keeping only records up to `step`, so a resumed
/// run continues the log it was saved with.
fn trim_metrics(path: &Path, step: u64) -> Result<(), TrainError> {
    if !path.exists() {
        return Ok(());
    }
    let text = fs::read_to_string(path)?;
    let kept: Vec<&str> = text
        .lines()
        .filter(|l| {
            serde_json::from_str::<MetricsRecord>(l).is_ok_and(|r| r.step <= step)
        })
        .collect();
    let mut out = kept.join("\n");
    if !out.is_empty() {
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Trains until `state.config.steps`, evaluating and checkpointing on the
/// configured schedule. With `out`, metrics go to `out/metrics.jsonl` and
/// checkpoints to `out/checkpoint`. `on_step` sees every step's outcome.
pub fn run(
    state: &mut TrainState,
    out: Option<&Path>,
    mut on_step: impl FnMut(&TrainState, StepOutcome, Option<&MetricsRecord>),
) -> Result<Vec<MetricsRecord>, TrainError> {
    let cfg = state.config.clone();
    let heldout = heldout_corpus(&cfg.gen, cfg.seed, cfg.eval_tasks, cfg.workers);
    let mut metrics_file = match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(METRICS_FILE);
            trim_metrics(&path, state.step)?;
            Some(fs::OpenOptions::new().create(true).append(true).open(path)?)
        }
        None => None,
    };
    let mut records = Vec::new();
    let start = state.step;
    let (tx, rx) = mpsc::sync_channel::<Vec<Task>>(2);
    std::thread::scope(|s| -> Result<(), TrainError> {
        // Owned here so an early return drops it and unblocks the producer.
        let rx = rx;
        let producer_cfg = &cfg;
        s.spawn(move || {
            for step in start..producer_cfg.steps {
                if tx.send(batch_tasks(producer_cfg, step)).is_err() {
                    break;
                }
            }
        });
        while state.step < cfg.steps {
            let batch = rx.recv().expect("producer runs until the last step");
            let outcome = state.train_step(&batch);
            if state.window.consecutive_skips >= MAX_CONSECUTIVE_SKIPS {
                return Err(TrainError::Diverged { step: state.step });
            }
            let last = state.step == cfg.steps;
            let record = if last || (cfg.eval_every > 0 && state.step % cfg.eval_every == 0) {
                let r = state.metrics(&heldout);
                if let Some(f) = metrics_file.as_mut() {
                    writeln!(f, "{}", serde_json::to_string(&r).expect("metrics serialize"))?;
                    f.flush()?;
                }
                records.push(r);
                records.last()
            } else {
                None
            };
            on_step(state, outcome, record);
            if let Some(dir) = out {
                if last || (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0) {
                    save_checkpoint(state, &dir.join(CHECKPOINT_DIR))?;
                }
            }
        }
        Ok(())
    })?;
    Ok(records)
}
