use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{clip_grad_norm, forecast_loss, total_loss, Adam, Dataset, Result, TrainConfig, TrainError};
use crate::model::checkpoint::{self, content_hash};
use crate::model::{ForwardOptions, PrismModel};
use crate::numcore::{Precision, Scalar, Tape, Tensor};
use crate::traces::WindowBatch;

/// File stem of the serialized optimizer state inside a run directory.
pub const STATE_STEM: &str = "train_state";
const STATE_VERSION: u32 = 1;
const EVAL_CHUNK: usize = 256;

/// One row of `history.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean total objective over the epoch's steps.
    pub train_loss: f64,
    /// Forecast loss on the validation split.
    pub val_loss: f64,
    pub val_mse: f64,
    pub val_mae: f64,
    /// Mean over steps and layers of the diversity loss; empty without primitives.
    pub mean_div_loss: Option<f64>,
}

/// Everything besides the parameters needed to continue a run exactly.
///
/// Shuffling and dropout draw from a stream derived from `(seed, epoch)`,
/// so no generator state has to be stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    /// Completed epochs.
    pub epoch: usize,
    pub best_val: f64,
    pub best_epoch: Option<usize>,
    /// Consecutive epochs without improvement.
    pub bad_epochs: usize,
    pub stopped_early: bool,
    pub seed: u64,
    pub optimizer: Adam<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub forecast: f64,
    pub diversity: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    format_version: u32,
    epoch: usize,
    step: u64,
    best_val: Option<f64>,
    best_epoch: Option<usize>,
    bad_epochs: usize,
    stopped_early: bool,
    seed: u64,
    precision: Precision,
    content_hash: String,
    blob: String,
    config: TrainConfig,
}

pub struct Trainer<T> {
    pub config: TrainConfig,
    pub model: PrismModel<T>,
    /// Parameters with the lowest validation loss so far.
    pub best: PrismModel<T>,
    pub state: TrainState<T>,
    pub history: Vec<EpochRecord>,
    /// Stored in every checkpoint manifest this trainer writes.
    pub metadata: BTreeMap<String, serde_json::Value>,
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

fn format_err(path: &Path, msg: impl Into<String>) -> TrainError {
    TrainError::Format {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: PrismModel<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = Adam::new(model.params(), config.beta1, config.beta2, config.adam_eps);
        Ok(Self {
            state: TrainState {
                epoch: 0,
                best_val: f64::INFINITY,
                best_epoch: None,
                bad_epochs: 0,
                stopped_early: false,
                seed: config.seed,
                optimizer,
            },
            best: model.clone(),
            model,
            config,
            history: Vec::new(),
            metadata: BTreeMap::new(),
        })
    }

    pub fn is_finished(&self) -> bool {
        self.state.stopped_early || self.state.epoch >= self.config.max_epochs
    }

    /// One optimizer step on `batch`. Dropout is active when `rng` is given.
    pub fn step(&mut self, batch: &WindowBatch, rng: Option<&mut ChaCha8Rng>) -> Result<StepStats> {
        let mut tape = Tape::new();
        let p = self.model.bind(&mut tape, true);
        let x = batch.x.cast::<T>();
        let mut opts = ForwardOptions {
            dropout: rng,
            alpha_override: None,
        };
        let tr = self.model.forward_on(&mut tape, &p, &x, &batch.stamps, &mut opts)?;
        let y = tape.constant(batch.y.cast::<T>());
        let lf = forecast_loss(&mut tape, tr.prediction, y, self.config.lambda_l1)?;
        let divs = tr.diversity_losses();
        let lt = total_loss(&mut tape, lf, &divs, self.config.lambda_div)?;
        let loss = tape.value(lt).item().to_f64();
        if !loss.is_finite() {
            return Err(TrainError::NonFinite {
                epoch: self.state.epoch,
                step: 0,
                global_step: self.state.optimizer.step + 1,
                loss,
            });
        }
        let diversity = (!divs.is_empty())
            .then(|| divs.iter().map(|&d| tape.value(d).item().to_f64()).sum::<f64>() / divs.len() as f64);
        let forecast = tape.value(lf).item().to_f64();
        tape.backward(lt)?;
        let mut grads: Vec<Tensor<T>> = p
            .vars()
            .iter()
            .zip(self.model.params())
            .map(|(&v, prm)| {
                tape.grad(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(prm.value.shape()))
            })
            .collect();
        let norm = clip_grad_norm(&mut grads, self.config.grad_clip);
        if !norm.is_finite() {
            return Err(TrainError::NonFinite {
                epoch: self.state.epoch,
                step: 0,
                global_step: self.state.optimizer.step + 1,
                loss: norm,
            });
        }
        self.state
            .optimizer
            .update(self.model.params_mut(), &grads, self.config.lr);
        Ok(StepStats {
            loss,
            forecast,
            diversity,
        })
    }

    /// Forecast loss, MSE and MAE of `model` on `batch`.
    pub fn evaluate(&self, model: &PrismModel<T>, batch: &WindowBatch) -> Result<(f64, f64, f64)> {
        let pred = super::predict_windows(model, batch, EVAL_CHUNK)?;
        let n = pred.len().max(1) as f64;
        let (mut se, mut ae) = (0.0, 0.0);
        for (p, y) in pred.data().iter().zip(batch.y.data()) {
            let d = p - y;
            se += d * d;
            ae += d.abs();
        }
        let (mse, mae) = (se / n, ae / n);
        Ok((mse + self.config.lambda_l1 * mae, mse, mae))
    }

    pub fn run_epoch(&mut self, data: &Dataset) -> Result<EpochRecord> {
        if data.train.is_empty() {
            return Err(TrainError::EmptySplit("train"));
        }
        if data.val.is_empty() {
            return Err(TrainError::EmptySplit("validation"));
        }
        let epoch = self.state.epoch;
        let mut rng = epoch_rng(self.state.seed, epoch);
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut rng);
        let limit = self.config.max_steps_per_epoch.unwrap_or(usize::MAX);
        let (mut loss_sum, mut div_sum, mut steps, mut div_steps) = (0.0, 0.0, 0usize, 0usize);
        for (i, chunk) in order.chunks(self.config.batch_size).take(limit).enumerate() {
            let batch = data.train.select(chunk);
            let s = self.step(&batch, Some(&mut rng)).map_err(|e| match e {
                TrainError::NonFinite {
                    epoch,
                    global_step,
                    loss,
                    ..
                } => TrainError::NonFinite {
                    epoch,
                    step: i,
                    global_step,
                    loss,
                },
                other => other,
            })?;
            loss_sum += s.loss;
            steps += 1;
            if let Some(d) = s.diversity {
                div_sum += d;
                div_steps += 1;
            }
        }
        let (val_loss, val_mse, val_mae) = self.evaluate(&self.model, &data.val)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / steps as f64,
            val_loss,
            val_mse,
            val_mae,
            mean_div_loss: (div_steps > 0).then(|| div_sum / div_steps as f64),
        };
        self.state.epoch += 1;
        if val_loss < self.state.best_val {
            self.state.best_val = val_loss;
            self.state.best_epoch = Some(epoch);
            self.state.bad_epochs = 0;
            self.best = self.model.clone();
        } else {
            self.state.bad_epochs += 1;
            if self.state.bad_epochs >= self.config.patience {
                self.state.stopped_early = true;
            }
        }
        self.history.push(record.clone());
        Ok(record)
    }

    /// Runs epochs until `max_epochs` or early stopping. `on_epoch` sees the
    /// trainer after each epoch, e.g. to write checkpoints.
    pub fn fit(&mut self, data: &Dataset, mut on_epoch: impl FnMut(&Self, &EpochRecord) -> Result<()>) -> Result<()> {
        while !self.is_finished() {
            let rec = self.run_epoch(data)?;
            on_epoch(self, &rec)?;
        }
        Ok(())
    }

    /// Writes `last`, `best`, the optimizer state and `history.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        checkpoint::save_checkpoint(&self.model, dir, "last", self.metadata.clone())?;
        checkpoint::save_checkpoint(&self.best, dir, "best", self.metadata.clone())?;
        let mut blob = Vec::new();
        for t in self.state.optimizer.m.iter().chain(&self.state.optimizer.v) {
            for &x in t.data() {
                x.write_le(&mut blob);
            }
        }
        let blob_name = format!("{STATE_STEM}.bin");
        let file = StateFile {
            format_version: STATE_VERSION,
            epoch: self.state.epoch,
            step: self.state.optimizer.step,
            best_val: self.state.best_val.is_finite().then_some(self.state.best_val),
            best_epoch: self.state.best_epoch,
            bad_epochs: self.state.bad_epochs,
            stopped_early: self.state.stopped_early,
            seed: self.state.seed,
            precision: T::PRECISION,
            content_hash: content_hash(&blob),
            blob: blob_name.clone(),
            config: self.config.clone(),
        };
        fs::write(dir.join(&blob_name), &blob)?;
        let json = serde_json::to_string_pretty(&file).expect("state serializes");
        fs::write(dir.join(format!("{STATE_STEM}.json")), json + "\n")?;
        write_history(&dir.join("history.csv"), &self.history)?;
        Ok(())
    }

    /// Restores a run written by [`Trainer::save`]. `config` replaces the
    /// stored one, so the epoch budget can be extended; the seed is kept.
    pub fn resume(dir: &Path, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let (model, manifest) = checkpoint::load_checkpoint::<T>(&checkpoint::manifest_path(dir, "last"))?;
        let (best, _) = checkpoint::load_checkpoint::<T>(&checkpoint::manifest_path(dir, "best"))?;
        let state_path = dir.join(format!("{STATE_STEM}.json"));
        let text = fs::read_to_string(&state_path).map_err(|e| format_err(&state_path, e.to_string()))?;
        let file: StateFile = serde_json::from_str(&text).map_err(|e| format_err(&state_path, e.to_string()))?;
        if file.format_version != STATE_VERSION {
            return Err(format_err(
                &state_path,
                format!("unsupported version {}", file.format_version),
            ));
        }
        if file.precision != T::PRECISION {
            return Err(format_err(
                &state_path,
                format!("state was written at {}-bit precision", file.precision.bits()),
            ));
        }
        let blob_path = dir.join(&file.blob);
        let bytes = fs::read(&blob_path)?;
        if content_hash(&bytes) != file.content_hash {
            return Err(format_err(&blob_path, "content hash mismatch"));
        }
        let n = model.n_scalars();
        if bytes.len() != 2 * n * T::BYTES {
            return Err(format_err(&blob_path, "optimizer state does not match the model size"));
        }
        let mut off = 0;
        let mut read = |shape: &[usize]| {
            let len: usize = shape.iter().product();
            let data: Vec<T> = (0..len).map(|i| T::read_le(&bytes[off + i * T::BYTES..])).collect();
            off += len * T::BYTES;
            Tensor::new(shape.to_vec(), data).expect("sized")
        };
        let m: Vec<Tensor<T>> = model.params().iter().map(|p| read(p.value.shape())).collect();
        let v: Vec<Tensor<T>> = model.params().iter().map(|p| read(p.value.shape())).collect();
        let optimizer = Adam {
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.adam_eps,
            step: file.step,
            m,
            v,
        };
        let history = read_history(&dir.join("history.csv"))?;
        Ok(Self {
            state: TrainState {
                epoch: file.epoch,
                best_val: file.best_val.unwrap_or(f64::INFINITY),
                best_epoch: file.best_epoch,
                bad_epochs: file.bad_epochs,
                stopped_early: file.stopped_early,
                seed: file.seed,
                optimizer,
            },
            config: TrainConfig {
                seed: file.seed,
                ..config
            },
            model,
            best,
            history,
            metadata: manifest.metadata,
        })
    }
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    if history.is_empty() {
        w.write_record(["epoch", "train_loss", "val_loss", "val_mse", "val_mae", "mean_div_loss"])
            .map_err(|e| format_err(path, e.to_string()))?;
    }
    for r in history {
        w.serialize(r).map_err(|e| format_err(path, e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<EpochRecord>, _>>()
        .map_err(|e| format_err(path, e.to_string()))
}
