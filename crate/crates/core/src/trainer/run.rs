use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::checkpoint::{load_checkpoint, save_checkpoint};
use super::step::{feature_matrix, MetricRecord, TrainState, Trainer};
use crate::data::{DatasetSplit, Sample};
use crate::error::{Error, Result};
use crate::losses::argmax;
use crate::nn::Network;

const EVAL_CHUNK: usize = 512;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const BEST_FILE: &str = "best.ckpt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub error_rate: f64,
    /// Error rate per class; `None` for classes absent from the test set.
    pub per_class_errors: Vec<Option<f64>>,
    pub n: usize,
}

/// Classify `test` with the given weights in evaluation mode.
pub fn evaluate_params(net: &Network, params: &[f64], buffers: &[f64], test: &[(Sample, usize)]) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::data("empty test set"));
    }
    let c = net.num_classes();
    let mut wrong = vec![0usize; c];
    let mut total = vec![0usize; c];
    for chunk in test.chunks(EVAL_CHUNK) {
        let x = feature_matrix(chunk.iter().map(|(s, _)| s))?;
        let p = net.predict(params, buffers, &x)?;
        for ((_, y), row) in chunk.iter().zip(p.rows()) {
            if *y >= c {
                return Err(Error::data(format!("test label {y} out of range for {c} classes")));
            }
            total[*y] += 1;
            if argmax(row) != *y {
                wrong[*y] += 1;
            }
        }
    }
    Ok(Evaluation {
        error_rate: wrong.iter().sum::<usize>() as f64 / test.len() as f64,
        per_class_errors: wrong
            .iter()
            .zip(&total)
            .map(|(&w, &t)| (t > 0).then(|| w as f64 / t as f64))
            .collect(),
        n: test.len(),
    })
}

impl Trainer {
    /// Test error of the EMA model, without augmentation or fusion.
    pub fn evaluate(&self, state: &TrainState, test: &[(Sample, usize)]) -> Result<Evaluation> {
        evaluate_params(self.network(), &state.ema.params, &state.ema.buffers, test)
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Where metrics and checkpoints go; nothing is written when unset.
    pub run_dir: Option<PathBuf>,
    /// Continue from `run_dir/checkpoint.ckpt` when it exists.
    pub resume: bool,
    /// Stop (after checkpointing) once this many steps are complete.
    pub stop_after: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub final_state: TrainState,
    /// Lowest-validation-error state, or the final one without validation.
    pub best_state: TrainState,
    pub best_error: Option<f64>,
    pub records: Vec<MetricRecord>,
}

fn append_record(path: &Path, rec: &MetricRecord) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut line = serde_json::to_vec(rec).map_err(|e| Error::Internal(e.to_string()))?;
    line.push(b'\n');
    f.write_all(&line).map_err(|e| Error::io(path, e))
}

/// Run the training loop to completion with periodic evaluation on
/// `validation` and periodic checkpoints.
pub fn run_training(
    trainer: &Trainer,
    split: &DatasetSplit,
    validation: Option<&[(Sample, usize)]>,
    options: &RunOptions,
) -> Result<TrainOutcome> {
    let cfg = trainer.config();
    let metrics_path = options.run_dir.as_ref().map(|d| d.join(METRICS_FILE));
    let ckpt_path = options.run_dir.as_ref().map(|d| d.join(CHECKPOINT_FILE));
    if let Some(dir) = &options.run_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut state = match &ckpt_path {
        Some(p) if options.resume && p.exists() => {
            let ckpt = load_checkpoint(p)?;
            if &ckpt.config != cfg {
                return Err(Error::config(format!(
                    "{} was written with a different configuration",
                    p.display()
                )));
            }
            log::info!("resuming from step {}", ckpt.state.step);
            ckpt.state
        }
        _ => {
            if let Some(m) = &metrics_path {
                if m.exists() {
                    fs::remove_file(m).map_err(|e| Error::io(m, e))?;
                }
            }
            trainer.init_state()?
        }
    };

    let mut best: Option<(f64, TrainState)> = None;
    let end = options.stop_after.map_or(cfg.optim.steps, |s| s.min(cfg.optim.steps));
    while state.step < end {
        trainer.train_step(&mut state, split)?;
        let k = state.step;
        if let (Some(val), true) = (
            validation,
            cfg.eval_every > 0 && (k % cfg.eval_every == 0 || k == cfg.optim.steps),
        ) {
            let err = trainer.evaluate(&state, val)?.error_rate;
            if let Some(rec) = state.history.last_mut() {
                rec.eval_error = Some(err);
            }
            log::info!("step {k}: validation error {err:.4}");
            if best.as_ref().is_none_or(|(e, _)| err < *e) {
                best = Some((err, state.clone()));
                if let Some(dir) = &options.run_dir {
                    save_checkpoint(&dir.join(BEST_FILE), cfg, &state)?;
                }
            }
        }
        if let Some(m) = &metrics_path {
            append_record(m, state.history.last().expect("step recorded"))?;
        }
        if let Some(p) = &ckpt_path {
            if (cfg.checkpoint_every > 0 && k % cfg.checkpoint_every == 0) || k == end {
                save_checkpoint(p, cfg, &state)?;
            }
        }
    }

    let records = state.history.clone();
    let (best_error, best_state) = match best {
        Some((e, s)) => (Some(e), s),
        None => (None, state.clone()),
    };
    Ok(TrainOutcome {
        final_state: state,
        best_state,
        best_error,
        records,
    })
}
