//! Budgeted runs, scoring, ablations and plots.

mod ablation;
mod config;
mod plot;
mod run;
mod snapshot;

pub use crate::trainer::{Clock, StepClock, WallClock};
pub use ablation::{
    ablation, cell_output, expand_grid, mean, median, AblationCell, AblationSummary, CellSummary, GridAxis, SeedResult,
    BOXPLOT_FILE, SUMMARY_FILE,
};
pub use config::RunConfig;
pub use plot::{render_boxplot, render_plot, write_svg, PlotSeries};
pub use run::{
    export_curve, load_pool, run, run_branches, search_from_checkpoint, split_dir, write_score_report, RunReport,
    CHECKPOINT_FILE, CURVE_FILE, LAST_GOOD_FILE, LOG_FILE, POLICY_FILE, REPORT_FILE, SCORE_FILE, SEARCH_REPORT_FILE,
    SNAPSHOT_DIR,
};
pub use snapshot::{
    list_snapshots, quantize_timestamp, read_snapshot, score_predictions, score_snapshots, snapshot_file_name,
    write_snapshot,
};
