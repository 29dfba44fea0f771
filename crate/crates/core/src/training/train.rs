use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::loss::cross_entropy_with_grad;
use super::sgd::{sgd_step, SgdConfig};
use crate::classes::Task;
use crate::dataset::{DatasetManifest, Split, NUM_TRANSFORMS};
use crate::error::{Error, Result};
use crate::evaluation::{balanced_accuracy, predict};
use crate::model::ops::{global_avg_pool, linear_backward};
use crate::model::{build_model, load_checkpoint, save_checkpoint, transfer_head, ModelParams, Tensor};
use crate::seed;

pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const LOG_FILE: &str = "train_log.jsonl";

const VAL_STREAM: u64 = 0x7661_6c;
const AUGMENT_STREAM: u64 = 0xa09;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
    /// Seconds since training started.
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ModelParams<f32>,
    /// One tensor per trainable parameter, same order and shapes.
    pub velocity: Vec<Tensor<f32>>,
    /// Completed epochs.
    pub epoch: usize,
    pub learning_rate: f64,
    pub best_val_accuracy: f64,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn new(params: ModelParams<f32>, learning_rate: f64) -> Self {
        let velocity = params.zero_gradients().0;
        TrainState {
            params,
            velocity,
            epoch: 0,
            learning_rate,
            best_val_accuracy: f64::NEG_INFINITY,
            best_epoch: 0,
            history: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    /// Parameters of the best validation epoch.
    pub best: ModelParams<f32>,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

impl TrainOutcome {
    pub fn epochs_to(&self, threshold: f64) -> Option<usize> {
        epochs_to_threshold(&self.state.history, threshold)
    }
}

/// First epoch whose validation accuracy reaches `threshold`.
pub fn epochs_to_threshold(history: &[EpochRecord], threshold: f64) -> Option<usize> {
    history.iter().find(|r| r.val_accuracy >= threshold).map(|r| r.epoch)
}

/// Freshly initialized parameters of the configured architecture, or a
/// pretrained checkpoint. A checkpoint brings its own backbone and gets a new
/// head when its class count differs.
pub fn initial_params(config: &TrainConfig, num_classes: usize) -> Result<ModelParams<f32>> {
    match &config.pretrained {
        None => build_model(&config.architecture.spec(num_classes), config.init_seed),
        Some(path) => {
            let src = load_checkpoint(path)?;
            if src.spec.in_channels != crate::ingest::PATCH_CHANNELS {
                return Err(Error::Spec(format!(
                    "pretrained model takes {} channels, patches have {}",
                    src.spec.in_channels,
                    crate::ingest::PATCH_CHANNELS
                )));
            }
            if src.spec.num_classes == num_classes {
                Ok(src)
            } else {
                transfer_head(&src, num_classes, config.init_seed)
            }
        }
    }
}

/// Runs the epochs of one training job. Construct with [`Trainer::new`],
/// then call [`Trainer::run`] or step with [`Trainer::epoch`].
pub struct Trainer<'a> {
    manifest: &'a DatasetManifest,
    config: TrainConfig,
    pub state: TrainState,
    best: ModelParams<f32>,
    per_class: usize,
    val_indices: Vec<usize>,
    since_best: usize,
    started: Instant,
    out_dir: Option<PathBuf>,
    log: Option<File>,
}

impl<'a> Trainer<'a> {
    /// Checks the manifest and config and opens the log in `out_dir`, if given.
    pub fn new(
        manifest: &'a DatasetManifest,
        config: &TrainConfig,
        params: ModelParams<f32>,
        out_dir: Option<&Path>,
    ) -> Result<Self> {
        let nc = manifest.num_classes();
        if params.spec.num_classes != nc {
            return Err(Error::Shape(format!(
                "model predicts {} classes, manifest has {nc}",
                params.spec.num_classes
            )));
        }
        manifest.require_all_classes(Split::Train)?;
        manifest.require_all_classes(Split::Val)?;
        let per_class = config.per_class.unwrap_or_else(|| manifest.median_class_size(Split::Train));
        let config = TrainConfig {
            per_class: Some(per_class),
            ..config.clone()
        };
        config.validate(nc)?;
        let val_per_class = config
            .val_per_class
            .unwrap_or_else(|| manifest.smallest_class_size(Split::Val));
        let val_indices = manifest.balanced_epoch(
            Split::Val,
            Some(val_per_class),
            seed::derive_seed(config.sampler_seed, VAL_STREAM),
        )?;
        let log = match out_dir {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let path = dir.join(LOG_FILE);
                Some(File::create(&path).map_err(|e| Error::io(&path, e))?)
            }
            None => None,
        };
        Ok(Trainer {
            manifest,
            state: TrainState::new(params.clone(), config.learning_rate),
            best: params,
            config,
            per_class,
            val_indices,
            since_best: 0,
            started: Instant::now(),
            out_dir: out_dir.map(Path::to_path_buf),
            log,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    fn sgd(&self) -> SgdConfig {
        self.config.sgd(self.state.learning_rate)
    }

    /// One pass over a balanced draw of the training split; returns the mean
    /// batch loss.
    pub fn train_pass(&mut self) -> Result<f64> {
        let epoch = self.state.epoch + 1;
        let epoch_seed = seed::derive_seed(self.config.sampler_seed, epoch as u64);
        let order = self.manifest.balanced_epoch(Split::Train, Some(self.per_class), epoch_seed)?;
        let mut rng = seed::rng(epoch_seed, AUGMENT_STREAM);
        let transforms: Vec<u8> = order
            .iter()
            .map(|_| if self.config.augment { rng.random_range(0..NUM_TRANSFORMS as u8) } else { 0 })
            .collect();
        let mut total = 0.0;
        let mut batches = 0usize;
        for (b, (chunk, ids)) in order
            .chunks(self.config.batch_size)
            .zip(transforms.chunks(self.config.batch_size))
            .enumerate()
        {
            let x = self.manifest.load_batch(chunk, Some(ids))?;
            let labels = self.manifest.labels(chunk);
            let sgd = self.sgd();
            let loss = if self.config.freeze_backbone {
                let pooled = global_avg_pool(&self.state.params.features(&x)?);
                let logits = self.state.params.head(&pooled);
                let (loss, dlogits) = cross_entropy_with_grad(&logits, &labels).map_err(|e| non_finite(e, epoch, b, sgd.learning_rate))?;
                let (_, dw, db) = linear_backward(&pooled, &self.state.params.head_weight, &dlogits);
                let p = &mut self.state.params;
                let h = self.state.velocity.len() - 2;
                sgd_step(&mut [&mut p.head_weight, &mut p.head_bias], &mut self.state.velocity[h..], &[dw, db], &sgd)?;
                loss
            } else {
                let fwd = self.state.params.forward_train(&x)?;
                let (loss, dlogits) = cross_entropy_with_grad(&fwd.logits, &labels).map_err(|e| non_finite(e, epoch, b, sgd.learning_rate))?;
                let grads = self.state.params.backward(&x, &fwd.tape, &dlogits);
                let mut weights = self.state.params.trainable_mut();
                sgd_step(&mut weights, &mut self.state.velocity, &grads.0, &sgd)?;
                self.state.params.apply_bn_stats(&fwd.tape.bn_stats);
                loss
            };
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b, lr: sgd.learning_rate });
            }
            total += loss;
            batches += 1;
        }
        Ok(total / batches.max(1) as f64)
    }

    /// Balanced accuracy on the fixed validation draw.
    pub fn validate(&self) -> Result<f64> {
        let pred = predict(&self.state.params, self.manifest, &self.val_indices, 64)?;
        balanced_accuracy(&self.manifest.labels(&self.val_indices), &pred, self.manifest.num_classes())
    }

    /// Trains one epoch, validates, keeps the best model and adjusts the
    /// learning rate. Returns the new log record.
    pub fn epoch(&mut self) -> Result<EpochRecord> {
        let lr = self.state.learning_rate;
        let train_loss = self.train_pass()?;
        let val_accuracy = self.validate()?;
        self.state.epoch += 1;
        let record = EpochRecord {
            epoch: self.state.epoch,
            train_loss,
            val_accuracy,
            lr,
            wall_time: self.started.elapsed().as_secs_f64(),
        };
        if val_accuracy > self.state.best_val_accuracy {
            self.state.best_val_accuracy = val_accuracy;
            self.state.best_epoch = self.state.epoch;
            self.best = self.state.params.clone();
            self.since_best = 0;
        } else {
            self.since_best += 1;
            if self.since_best % self.config.plateau_patience.max(1) == 0 {
                self.state.learning_rate *= self.config.plateau_factor;
            }
        }
        if let Some(f) = &mut self.log {
            let line = serde_json::to_string(&record).map_err(|e| Error::json("training log", e))?;
            writeln!(f, "{line}").and_then(|_| f.flush()).map_err(|e| Error::io(LOG_FILE, e))?;
        }
        log::info!(
            "epoch {} loss {:.4} val {:.4} lr {:e}",
            record.epoch,
            record.train_loss,
            record.val_accuracy,
            record.lr
        );
        self.state.history.push(record.clone());
        Ok(record)
    }

    fn should_stop(&self) -> bool {
        self.state.epoch >= self.config.epochs
            || self.config.early_stop_patience.is_some_and(|p| self.since_best >= p)
    }

    /// Runs until the epoch budget or early stopping, then writes the best
    /// checkpoint to the output directory.
    pub fn run(mut self) -> Result<TrainOutcome> {
        while !self.should_stop() {
            self.epoch()?;
        }
        self.finish()
    }

    pub fn finish(self) -> Result<TrainOutcome> {
        let mut best = self.best;
        best.metadata.insert("best_epoch".into(), self.state.best_epoch.to_string());
        best.metadata
            .insert("best_val_accuracy".into(), self.state.best_val_accuracy.to_string());
        best.metadata.insert(
            "train_config".into(),
            serde_json::to_string(&self.config).map_err(|e| Error::json("config", e))?,
        );
        let checkpoint = match &self.out_dir {
            Some(dir) => {
                let path = dir.join(CHECKPOINT_FILE);
                save_checkpoint(&best, &path)?;
                Some(path)
            }
            None => None,
        };
        Ok(TrainOutcome {
            state: self.state,
            best,
            checkpoint,
            log: self.out_dir.map(|d| d.join(LOG_FILE)),
        })
    }
}

fn non_finite(e: Error, epoch: usize, batch: usize, lr: f64) -> Error {
    match e {
        Error::NonFinite(_) => Error::NonFiniteLoss { epoch, batch, lr },
        other => other,
    }
}

fn check_task(manifest: &DatasetManifest, config: &TrainConfig) -> Result<()> {
    if manifest.task != config.task {
        return Err(Error::Config(format!(
            "config task {:?} does not match manifest task {:?}",
            config.task, manifest.task
        )));
    }
    Ok(())
}

/// Trains from [`initial_params`]; writes `best.ckpt` and `train_log.jsonl`
/// to `out_dir` when given.
pub fn train(manifest: &DatasetManifest, config: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    check_task(manifest, config)?;
    let params = initial_params(config, manifest.num_classes())?;
    Trainer::new(manifest, config, params, out_dir)?.run()
}

/// Cooling-mechanism training started from a plant-task model: the backbone
/// is copied and a fresh four-class head is drawn.
pub fn train_cooling(
    manifest: &DatasetManifest,
    pretrained: &ModelParams<f32>,
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if manifest.task != Task::Cooling {
        return Err(Error::Config("cooling training needs a cooling-task manifest".into()));
    }
    let params = transfer_head(pretrained, manifest.num_classes(), config.init_seed)?;
    let config = TrainConfig {
        task: Task::Cooling,
        ..config.clone()
    };
    Trainer::new(manifest, &config, params, out_dir)?.run()
}
