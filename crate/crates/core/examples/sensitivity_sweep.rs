//! Sweep the delta-consistency weight on two-moons and write a sensitivity
//! plot and learning curves.
//!
//! cargo run --release --example sensitivity_sweep [out_dir]

use interlude::experiment::{emit_plots, run_experiment, ExperimentSpec, PlotKind};

fn main() -> interlude::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "runs".into());
    let spec = ExperimentSpec::from_toml_str(
        r#"
name = "moons-lambda-dc"
preset = "desk"
seeds = [0, 1]
eval_every = 250
[optim]
steps = 1500
[sweep]
"loss.lambda_dc" = [0.1, 0.5, 1.0, 5.0, 10.0]
"#,
        Default::default(),
    )?;
    let records = run_experiment(&spec, out.as_ref())?;
    for r in &records {
        println!(
            "{}: error {:.4} ± {:.4}",
            r.label,
            r.final_error.mean,
            r.final_error.ci95.unwrap_or(0.0)
        );
    }
    let dir = interlude::experiment::experiment_dir(out.as_ref(), &spec).join("plots");
    for kind in [PlotKind::Sensitivity, PlotKind::LearningCurve] {
        let (svg, csv) = emit_plots(&records, kind, &dir)?;
        println!("{} / {}", svg.display(), csv.display());
    }
    Ok(())
}
