use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use toml::Value;

use super::config::{point_label, ExperimentSpec};
use crate::error::{Error, Result};
use crate::trainer::{run_training, RunOptions, TrainConfig, Trainer};

/// Environment variable naming the root directory for run outputs.
pub const RUNS_ENV: &str = "INTERLUDE_RUNS";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const SPEC_FILE: &str = "spec.json";
pub const RESOLVED_FILE: &str = "resolved.toml";
const RESULT_FILE: &str = "result.json";

/// `$INTERLUDE_RUNS`, or `./runs`.
pub fn runs_root() -> PathBuf {
    std::env::var_os(RUNS_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Mean and normal-approximation 95% half-width, `1.96·s/√n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Omitted for fewer than two values.
    pub ci95: Option<f64>,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let ci95 = (n >= 2).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * var.sqrt() / (n as f64).sqrt()
        });
        Some(Summary { mean, ci95, n })
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        self.ci95.map(|h| (self.mean - h, self.mean + h))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub error: Summary,
}

/// Outcome of one seed at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub final_error: f64,
    pub best_error: f64,
    pub wall_time_s: f64,
    /// `(step, test error)` at every evaluation.
    pub curve: Vec<(u64, f64)>,
}

/// Aggregate over seeds at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec_hash: String,
    pub name: String,
    pub label: String,
    pub point: BTreeMap<String, Value>,
    /// Configuration of the first seed.
    pub config: TrainConfig,
    pub seeds: Vec<u64>,
    pub final_errors: Vec<f64>,
    pub best_errors: Vec<f64>,
    pub final_error: Summary,
    pub best_error: Summary,
    pub curve: Vec<CurvePoint>,
    pub wall_time_s: f64,
}

impl RunRecord {
    pub fn from_results(
        spec: &ExperimentSpec,
        point: &BTreeMap<String, Value>,
        results: &[SeedResult],
    ) -> Result<Self> {
        let finals: Vec<f64> = results.iter().map(|r| r.final_error).collect();
        let bests: Vec<f64> = results.iter().map(|r| r.best_error).collect();
        let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for r in results {
            for &(k, e) in &r.curve {
                by_step.entry(k).or_default().push(e);
            }
        }
        Ok(RunRecord {
            spec_hash: spec.hash(),
            name: spec.name.clone(),
            label: point_label(point),
            point: point.clone(),
            config: spec.config_at(point, spec.seeds[0])?,
            seeds: results.iter().map(|r| r.seed).collect(),
            final_error: Summary::of(&finals).ok_or_else(|| Error::Internal("no seeds".into()))?,
            best_error: Summary::of(&bests).ok_or_else(|| Error::Internal("no seeds".into()))?,
            final_errors: finals,
            best_errors: bests,
            curve: by_step
                .into_iter()
                .filter_map(|(step, es)| Summary::of(&es).map(|error| CurvePoint { step, error }))
                .collect(),
            wall_time_s: results.iter().map(|r| r.wall_time_s).sum(),
        })
    }
}

/// Directory holding everything an experiment writes.
pub fn experiment_dir(root: &Path, spec: &ExperimentSpec) -> PathBuf {
    root.join(format!("{}-{}", spec.name, &spec.hash()[..16]))
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), i + 1)))?);
    }
    Ok(out)
}

fn append_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut line = serde_json::to_vec(v).map_err(|e| Error::Internal(e.to_string()))?;
    line.push(b'\n');
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .and_then(|mut f| f.write_all(&line))
        .map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Write `spec.json` and `resolved.toml` into the experiment directory.
pub fn echo_spec(dir: &Path, spec: &ExperimentSpec) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = serde_json::to_vec_pretty(spec).map_err(|e| Error::Internal(e.to_string()))?;
    write_file(&dir.join(SPEC_FILE), &json)?;
    write_file(&dir.join(RESOLVED_FILE), spec.train_toml()?.as_bytes())
}

/// Train one seed at one grid point, reusing a finished result or resuming
/// from the last checkpoint when the run directory already has one.
pub fn run_seed(data: &super::LoadedData, cfg: TrainConfig, run_dir: &Path) -> Result<SeedResult> {
    let result_path = run_dir.join(RESULT_FILE);
    if result_path.exists() {
        let bytes = fs::read(&result_path).map_err(|e| Error::io(&result_path, e))?;
        if let Ok(r) = serde_json::from_slice::<SeedResult>(&bytes) {
            log::info!("{}: cached", run_dir.display());
            return Ok(r);
        }
    }
    let seed = cfg.seed;
    let (split, test) = data.materialize(seed)?;
    let start = Instant::now();
    let trainer = Trainer::new(cfg, &split)?;
    let out = run_training(
        &trainer,
        &split,
        Some(&test),
        &RunOptions {
            run_dir: Some(run_dir.to_path_buf()),
            resume: true,
            stop_after: None,
        },
    )?;
    let final_error = trainer.evaluate(&out.final_state, &test)?.error_rate;
    let r = SeedResult {
        seed,
        final_error,
        best_error: out.best_error.unwrap_or(final_error),
        wall_time_s: start.elapsed().as_secs_f64(),
        curve: out
            .records
            .iter()
            .filter_map(|m| m.eval_error.map(|e| (m.step, e)))
            .collect(),
    };
    let json = serde_json::to_vec(&r).map_err(|e| Error::Internal(e.to_string()))?;
    write_file(&result_path, &json)?;
    Ok(r)
}

/// Run every `(grid point × seed)` of `spec` under `root`. Points already
/// recorded in the store are returned without retraining.
pub fn run_experiment(spec: &ExperimentSpec, root: &Path) -> Result<Vec<RunRecord>> {
    let data_spec = spec
        .data
        .as_ref()
        .ok_or_else(|| Error::config("the experiment has no [data] section"))?;
    let dir = experiment_dir(root, spec);
    echo_spec(&dir, spec)?;
    let store = dir.join(RECORDS_FILE);
    let hash = spec.hash();
    let mut done: BTreeMap<String, RunRecord> = if store.exists() {
        read_records(&store)?
            .into_iter()
            .filter(|r| r.spec_hash == hash)
            .map(|r| (r.label.clone(), r))
            .collect()
    } else {
        BTreeMap::new()
    };

    let mut data = None;
    let mut out = Vec::new();
    for (i, point) in spec.points().iter().enumerate() {
        let label = point_label(point);
        if let Some(r) = done.remove(&label) {
            out.push(r);
            continue;
        }
        let data = match &mut data {
            Some(d) => d,
            None => data.insert(data_spec.load()?),
        };
        let mut results = Vec::new();
        for &seed in &spec.seeds {
            let cfg = spec.config_at(point, seed)?;
            let run_dir = dir.join(format!("p{i:03}")).join(format!("seed-{seed}"));
            log::info!("{label} seed {seed}");
            results.push(run_seed(data, cfg, &run_dir)?);
        }
        let rec = RunRecord::from_results(spec, point, &results)?;
        append_json(&store, &rec)?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_matches_hand_computation() {
        let s = Summary::of(&[0.1, 0.2, 0.3]).unwrap();
        assert!((s.mean - 0.2).abs() < 1e-15);
        assert!((s.ci95.unwrap() - 1.96 * 0.1 / 3f64.sqrt()).abs() < 1e-15);
        let one = Summary::of(&[0.4]).unwrap();
        assert_eq!(one.ci95, None);
        assert!(Summary::of(&[]).is_none());
    }
}
