use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use interlude::data::write_manifest;
use interlude::experiment::{
    config_hash, echo_spec, emit_plots, experiment_dir, overrides_table, read_records, replot, run_experiment,
    runs_root, ExperimentSpec, PlotKind, RECORDS_FILE, RUNS_ENV,
};
use interlude::trainer::{load_checkpoint, run_training, RunOptions, Trainer};
use interlude::{Error, Result};

/// Semi-supervised training harness.
///
/// Any `--section.key=value` argument overrides that key of the resolved
/// configuration, e.g. `--loss.lambda_dc=0.5`.
#[derive(Parser)]
#[command(name = "interlude", version)]
struct Cli {
    /// Root for run directories [default: $INTERLUDE_RUNS or ./runs].
    #[arg(long, global = true)]
    runs_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// TOML experiment file; omit for defaults.
    config: Option<PathBuf>,
    /// Preset(s) to start from, replacing any named in the file.
    #[arg(long)]
    preset: Vec<String>,
    /// Extra `key=value` overrides, for keys without a dot.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the labeled/unlabeled manifest of a split as JSON lines.
    Split {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one run with the configured seed.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// Ignore an existing checkpoint.
        #[arg(long)]
        fresh: bool,
        /// Stop once this many steps are complete.
        #[arg(long)]
        stop_after: Option<u64>,
    },
    /// Evaluate a checkpoint on the configured test set.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Use the live weights instead of the EMA weights.
        #[arg(long)]
        live: bool,
    },
    /// Run every seed and grid point of an experiment.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Also write these plots next to the records.
        #[arg(long)]
        plot: Vec<PlotKind>,
    },
    /// Draw plots from a record store, or redraw one from its data file.
    Plot {
        /// `records.jsonl` or the experiment directory holding it.
        #[arg(long, required_unless_present = "csv")]
        records: Option<PathBuf>,
        #[arg(long, required_unless_present = "csv")]
        kind: Vec<PlotKind>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Regenerate the SVG from this data file.
        #[arg(long, conflicts_with_all = ["records", "kind"])]
        csv: Option<PathBuf>,
    },
    /// Resolve a config, print it and echo it into its run directory.
    ValidateConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

/// Pull `--a.b=v` arguments out before clap sees them.
fn split_dotted(args: Vec<String>) -> (Vec<String>, Vec<String>) {
    args.into_iter().partition(|a| {
        !a.strip_prefix("--")
            .and_then(|s| s.split_once('='))
            .is_some_and(|(k, _)| k.contains('.'))
    })
}

fn resolve(cfg: &ConfigArgs, dotted: &[String]) -> Result<ExperimentSpec> {
    let mut over = overrides_table(&cfg.set)?;
    interlude::experiment::merge(&mut over, overrides_table(dotted)?);
    if !cfg.preset.is_empty() {
        over.insert(
            "preset".into(),
            toml::Value::Array(cfg.preset.iter().cloned().map(toml::Value::String).collect()),
        );
    }
    match &cfg.config {
        Some(p) => ExperimentSpec::from_file(p, over),
        None => ExperimentSpec::resolve(toml::Table::new(), over),
    }
}

/// Write to stdout; a closed pipe is not an error.
fn emit(text: &str) -> Result<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Internal(e.to_string()))?;
    emit(&(text + "\n"))
}

fn records_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(RECORDS_FILE)
    } else {
        p.to_path_buf()
    }
}

fn run(cli: Cli, dotted: &[String]) -> Result<()> {
    let root = cli.runs_dir.clone().unwrap_or_else(runs_root);
    match cli.cmd {
        Cmd::ValidateConfig { cfg } => {
            let spec = resolve(&cfg, dotted)?;
            let dir = experiment_dir(&root, &spec);
            echo_spec(&dir, &spec)?;
            emit(&format!(
                "{}# config hash {}\n",
                spec.train_toml()?,
                config_hash(&spec.train)
            ))?;
            eprintln!("resolved config written to {}", dir.display());
        }
        Cmd::Split { cfg, seed, out } => {
            let spec = resolve(&cfg, dotted)?;
            let data = spec.data.as_ref().ok_or_else(|| Error::config("no [data] section"))?;
            let (split, _) = data.load()?.materialize(seed.unwrap_or(spec.train.seed))?;
            let res = match &out {
                Some(p) => std::fs::File::create(p)
                    .and_then(|f| write_manifest(&split, io::BufWriter::new(f)))
                    .map_err(|e| Error::io(p, e)),
                None => match write_manifest(&split, io::stdout().lock()) {
                    Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
                    _ => Ok(()),
                },
            };
            res?;
            eprintln!(
                "{} labeled, {} unlabeled, per-class {:?}",
                split.labeled.len(),
                split.unlabeled.len(),
                split.class_counts
            );
        }
        Cmd::Train {
            cfg,
            run_dir,
            fresh,
            stop_after,
        } => {
            let spec = resolve(&cfg, dotted)?;
            let data = spec.data.as_ref().ok_or_else(|| Error::config("no [data] section"))?;
            let seed = spec.train.seed;
            let (split, test) = data.load()?.materialize(seed)?;
            let dir = run_dir.unwrap_or_else(|| experiment_dir(&root, &spec).join(format!("train-seed-{seed}")));
            echo_spec(&dir, &spec)?;
            let trainer = Trainer::new(spec.train.clone(), &split)?;
            let out = run_training(
                &trainer,
                &split,
                Some(&test),
                &RunOptions {
                    run_dir: Some(dir.clone()),
                    resume: !fresh,
                    stop_after,
                },
            )?;
            let eval = trainer.evaluate(&out.final_state, &test)?;
            print_json(&json!({
                "run_dir": dir,
                "steps": out.final_state.step,
                "final_error": eval.error_rate,
                "best_error": out.best_error,
                "per_class_errors": eval.per_class_errors,
            }))?;
        }
        Cmd::Eval { cfg, checkpoint, live } => {
            let spec = resolve(&cfg, dotted)?;
            let data = spec.data.as_ref().ok_or_else(|| Error::config("no [data] section"))?;
            let ckpt = load_checkpoint(&checkpoint)?;
            let (split, test) = data.load()?.materialize(ckpt.config.seed)?;
            let trainer = Trainer::new(ckpt.config, &split)?;
            let eval = if live {
                interlude::trainer::evaluate_params(trainer.network(), &ckpt.state.params, &ckpt.state.buffers, &test)?
            } else {
                trainer.evaluate(&ckpt.state, &test)?
            };
            print_json(&json!({
                "checkpoint": checkpoint,
                "step": ckpt.state.step,
                "weights": if live { "live" } else { "ema" },
                "error_rate": eval.error_rate,
                "per_class_errors": eval.per_class_errors,
                "n": eval.n,
            }))?;
        }
        Cmd::Sweep { cfg, plot } => {
            let spec = resolve(&cfg, dotted)?;
            let records = run_experiment(&spec, &root)?;
            let dir = experiment_dir(&root, &spec);
            for r in &records {
                let ci = r.final_error.ci95.map_or("n/a".to_string(), |h| format!("{h:.4}"));
                emit(&format!(
                    "{}\tfinal error {:.4} ± {ci}\tbest {:.4}\tseeds {}\n",
                    r.label,
                    r.final_error.mean,
                    r.best_error.mean,
                    r.seeds.len()
                ))?;
            }
            for kind in plot {
                let (svg, _) = emit_plots(&records, kind, &dir.join("plots"))?;
                eprintln!("wrote {}", svg.display());
            }
            eprintln!("records in {}", dir.join(RECORDS_FILE).display());
        }
        Cmd::Plot {
            records,
            kind,
            out,
            csv,
        } => {
            if let Some(csv) = csv {
                let svg = replot(&csv)?;
                eprintln!("wrote {}", svg.display());
                return Ok(());
            }
            let path = records_path(records.as_deref().expect("clap requires --records"));
            let recs = read_records(&path)?;
            let out = out.unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).join("plots"));
            for k in kind {
                let (svg, csv) = emit_plots(&recs, k, &out)?;
                eprintln!("wrote {} and {}", svg.display(), csv.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (args, dotted) = split_dotted(std::env::args().collect());
    let cli = Cli::parse_from(args);
    log::debug!("runs root from ${RUNS_ENV}: {}", runs_root().display());
    match run(cli, &dotted) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
