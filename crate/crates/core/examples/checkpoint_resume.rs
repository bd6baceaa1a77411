//! Interrupt a run halfway, resume it from the checkpoint and confirm the
//! loss trajectory matches an uninterrupted run.

use interlude::experiment::ExperimentSpec;
use interlude::trainer::{run_training, RunOptions, Trainer};

fn main() -> interlude::Result<()> {
    let spec = ExperimentSpec::from_toml_str(
        "preset = \"desk\"\neval_every = 0\ncheckpoint_every = 10\n[optim]\nsteps = 60\n",
        Default::default(),
    )?;
    let (split, _) = spec.data.as_ref().expect("desk data").load()?.materialize(0)?;
    let trainer = Trainer::new(spec.train.clone(), &split)?;

    let straight = run_training(&trainer, &split, None, &RunOptions::default())?;

    let dir = std::env::temp_dir().join(format!("interlude-resume-{}", std::process::id()));
    let opts = |stop_after| RunOptions {
        run_dir: Some(dir.clone()),
        resume: true,
        stop_after,
    };
    let first = run_training(&trainer, &split, None, &opts(Some(30)))?;
    println!("stopped after {} steps", first.final_state.step);
    let resumed = run_training(&trainer, &split, None, &opts(None))?;
    println!("resumed to step {}", resumed.final_state.step);

    let same = straight.records == resumed.records && straight.final_state.params == resumed.final_state.params;
    println!("trajectory and weights identical to the uninterrupted run: {same}");
    std::fs::remove_dir_all(&dir).map_err(|e| interlude::Error::io(&dir, e))?;
    Ok(())
}
