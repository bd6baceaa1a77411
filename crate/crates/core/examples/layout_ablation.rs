//! Train two-moons under each batch layout and draw the grouped bar chart.
//!
//! cargo run --release --example layout_ablation [out_dir]

use interlude::experiment::{emit_plots, experiment_dir, run_experiment, ExperimentSpec, PlotKind};

fn main() -> interlude::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "runs".into());
    let spec = ExperimentSpec::from_toml_str(
        r#"
name = "moons-layouts"
preset = "desk"
[sweep]
layout = ["low_i", "high_i1", "high_i2", "high_i3"]
"#,
        Default::default(),
    )?;
    let records = run_experiment(&spec, out.as_ref())?;
    for r in &records {
        println!(
            "{:8} error {:.4} ± {:.4}",
            r.config.layout,
            r.final_error.mean,
            r.final_error.ci95.unwrap_or(0.0)
        );
    }
    let (svg, csv) = emit_plots(
        &records,
        PlotKind::LayoutAblation,
        &experiment_dir(out.as_ref(), &spec).join("plots"),
    )?;
    println!("{} / {}", svg.display(), csv.display());
    Ok(())
}
