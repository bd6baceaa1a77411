//! Two-moons with 4 labels: the `desk` preset against its supervised-only
//! counterpart and the low-interaction layout.
//!
//! cargo run --release --example two_moons [seeds]

use interlude::experiment::ExperimentSpec;
use interlude::trainer::{run_training, RunOptions, Trainer};

fn main() -> interlude::Result<()> {
    let n_seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let variants = [
        ("supervised", "preset = [\"desk\", \"supervised\"]"),
        ("interlude high_i3", "preset = \"desk\""),
        ("interlude low_i", "preset = \"desk\"\nlayout = \"low_i\""),
    ];
    for (name, doc) in variants {
        let spec = ExperimentSpec::from_toml_str(doc, Default::default())?;
        let data = spec.data.as_ref().expect("desk preset has data").load()?;
        let mut accs = Vec::new();
        for seed in 0..n_seeds {
            let (split, test) = data.materialize(seed)?;
            let mut cfg = spec.train.clone();
            cfg.seed = seed;
            cfg.eval_every = 0;
            let t0 = std::time::Instant::now();
            let trainer = Trainer::new(cfg, &split)?;
            let out = run_training(&trainer, &split, None, &RunOptions::default())?;
            let acc = 1.0 - trainer.evaluate(&out.final_state, &test)?.error_rate;
            let last = out.records.last().expect("at least one step");
            println!(
                "  {name} seed {seed}: acc {acc:.4} mask {:.2} ({:.1}s)",
                last.mask_rate,
                t0.elapsed().as_secs_f64()
            );
            accs.push(acc);
        }
        println!(
            "{name}: mean accuracy {:.4}",
            accs.iter().sum::<f64>() / accs.len() as f64
        );
    }
    Ok(())
}
