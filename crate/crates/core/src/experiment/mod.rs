//! Experiment harness: layered TOML configuration with presets, seed and
//! grid orchestration over a persistent record store, and plots.

mod config;
mod dataset;
mod plot;
mod runner;

pub use config::{
    config_hash, merge, overrides_table, parse_value, point_label, preset_names, preset_table, set_dotted,
    validate_config, ExperimentSpec,
};
pub use dataset::{DataSpec, LoadedData};
pub use plot::{emit_plots, plot_rows, read_csv, render_svg, replot, write_csv, PlotKind, PlotRow};
pub use runner::{
    echo_spec, experiment_dir, read_records, run_experiment, run_seed, runs_root, CurvePoint, RunRecord, SeedResult,
    Summary, RECORDS_FILE, RESOLVED_FILE, RUNS_ENV, SPEC_FILE,
};
