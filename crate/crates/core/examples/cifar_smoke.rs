//! CIFAR-10 40-label smoke run: supervised-only against the full method on
//! the small CNN. Needs the binary release unpacked at `$CIFAR10_DIR`.
//!
//! CIFAR10_DIR=/data/cifar-10-batches-bin cargo run --release --example cifar_smoke [steps]

use interlude::experiment::ExperimentSpec;
use interlude::trainer::{run_training, RunOptions, Trainer};

fn main() -> interlude::Result<()> {
    let Some(dir) = std::env::var_os("CIFAR10_DIR") else {
        eprintln!("set CIFAR10_DIR to the cifar-10-batches-bin directory");
        return Ok(());
    };
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let data_toml = format!(
        "[data]\nsource = \"corpus\"\nformat = \"cifar10-binary\"\npath = {:?}\nn_labels = 40\n",
        dir.to_string_lossy()
    );
    let data = ExperimentSpec::from_toml_str(&data_toml, Default::default())?
        .data
        .expect("data section")
        .load()?;
    let (split, test) = data.materialize(0)?;
    let test = &test[..test.len().min(2000)];
    for (name, presets) in [
        ("supervised", "[\"cnn-cifar10\", \"supervised\"]"),
        ("interlude", "\"cnn-cifar10\""),
    ] {
        let doc = format!("preset = {presets}\neval_every = 1000\ncheckpoint_every = 0\n[optim]\nsteps = {steps}\n");
        let spec = ExperimentSpec::from_toml_str(&doc, Default::default())?;
        let trainer = Trainer::new(spec.train, &split)?;
        let out = run_training(&trainer, &split, Some(test), &RunOptions::default())?;
        for r in out.records.iter().filter(|r| r.eval_error.is_some()) {
            println!(
                "{name} step {}: error {:.4} mask {:.2}",
                r.step,
                r.eval_error.unwrap_or(f64::NAN),
                r.mask_rate
            );
        }
    }
    Ok(())
}
