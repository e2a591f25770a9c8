use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use anytime_core::data::fixture::{write_fixture, FixtureConfig};
use anytime_core::data::load_labels;
use anytime_core::harness::{
    ablation, expand_grid, export_curve, load_pool, render_boxplot, render_plot, run, score_predictions,
    search_from_checkpoint, split_dir, write_score_report, write_svg, AblationSummary, GridAxis, PlotSeries, RunConfig,
    RunReport, SEARCH_REPORT_FILE,
};
use anytime_core::metrics::{AlcConfig, LearningCurve};
use anytime_core::trainer::{load_checkpoint, AugmentMode};
use anytime_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "anytime", version, about = "Budgeted anytime-learning harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train under a time budget, writing a test snapshot per epoch, then score.
    Run(RunFlags),
    /// Rescore a snapshot directory against test labels.
    Score(ScoreArgs),
    /// Search augmentation policies for a trained checkpoint.
    Search(SearchArgs),
    /// Run a settings grid over several seeds.
    Ablate(AblateArgs),
    /// Write a synthetic shape dataset.
    GenFixture(FixtureArgs),
    /// Render learning curves or ablation boxplots as SVG.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Searched,
    Random,
    None,
}

impl From<Mode> for AugmentMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Searched => AugmentMode::Searched,
            Mode::Random => AugmentMode::Random,
            Mode::None => AugmentMode::None,
        }
    }
}

#[derive(Args, Default)]
struct RunFlags {
    /// TOML (or .json) file with any of these settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory with train/ and test/ subdirectories.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Time budget in seconds.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    warmstart: Option<PathBuf>,
    /// Sub-policy pool JSON replacing the built-in pool.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    #[arg(long)]
    plateau_window: Option<usize>,
    #[arg(long)]
    plateau_factor: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    trigger_nauc: Option<f64>,
    /// Conv block widths, e.g. 16,32.
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    valid_fraction: Option<f64>,
    /// Sub-policies per search candidate.
    #[arg(long = "search-c")]
    search_c: Option<usize>,
    /// Search iterations.
    #[arg(long = "search-t")]
    search_t: Option<usize>,
    /// Candidates kept by the search.
    #[arg(long = "search-n")]
    search_n: Option<usize>,
    #[arg(long)]
    eval_repeats: Option<usize>,
}

fn config_error(msg: String) -> anyhow::Error {
    Error::Config(msg).into()
}

fn read_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| config_error(format!("{}: {e}", path.display())))
}

impl RunFlags {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => read_config(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = &self.$flag {
                    cfg.$($field).+ = v.clone().into();
                })*
            };
        }
        set!(
            dataset => dataset,
            output => output,
            budget => budget,
            t0 => t0,
            seed => seed,
            lr => trainer.base_lr,
            momentum => trainer.momentum,
            warmup_epochs => trainer.warmup_epochs,
            plateau_window => trainer.plateau_window,
            plateau_factor => trainer.plateau_factor,
            tau => trainer.tau,
            batch_size => trainer.batch_size,
            trigger_nauc => trainer.search_trigger_nauc,
            widths => trainer.widths,
            workers => trainer.workers,
            valid_fraction => trainer.valid_fraction,
            search_c => search.c,
            search_t => search.t,
            search_n => search.n,
            eval_repeats => search.eval_repeats,
        );
        if let Some(m) = self.mode {
            cfg.mode = m.into();
        }
        if let Some(p) = &self.warmstart {
            cfg.warmstart = Some(p.clone());
        }
        if let Some(p) = &self.pool {
            cfg.pool = Some(p.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct ScoreArgs {
    /// Directory of snap_<seconds>.csv files.
    #[arg(long)]
    snapshots: PathBuf,
    /// Dataset directory holding the test labels (or its parent with test/).
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 1200.0)]
    budget: f64,
    #[arg(long, default_value_t = 60.0)]
    t0: f64,
    /// Score report JSON; printed to stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Args)]
struct AblateArgs {
    /// Grid axis key=v1,v2 (keys: tau, mode, init, lr, budget); repeatable.
    #[arg(long = "grid", required = true)]
    grid: Vec<String>,
    /// Seeds, e.g. 0,1,2 or 0..10.
    #[arg(long, default_value = "0")]
    seeds: String,
    /// Run every cell from scratch instead of sharing the pre-trigger prefix
    /// between cells that differ only in mode.
    #[arg(long)]
    independent: bool,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    noise: Option<f32>,
    /// Rotates the shape catalogue to make a related task.
    #[arg(long)]
    shape_offset: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PlotArgs {
    /// run-report.json files, curve CSVs, or one ablation summary.json.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Budget and t0 for curve CSV inputs.
    #[arg(long, default_value_t = 1200.0)]
    budget: f64,
    #[arg(long, default_value_t = 60.0)]
    t0: f64,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || config_error(format!("invalid seed list {text:?}"));
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn cmd_run(flags: &RunFlags) -> Result<()> {
    let cfg = flags.resolve()?;
    fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))?;
    let report = run(&cfg)?;
    print_json(&serde_json::json!({
        "alc": report.score.alc,
        "final_nauc": report.score.final_nauc,
        "snapshots": report.score.curve.len(),
        "epochs": report.log.len(),
        "output": cfg.output,
    }));
    Ok(())
}

fn cmd_score(args: &ScoreArgs) -> Result<()> {
    let cfg = AlcConfig::new(args.budget, args.t0)?;
    let labels = load_labels(&split_dir(&args.labels, "test"))?;
    let report = score_predictions(&args.snapshots, &labels, &cfg)?;
    if let Some(path) = &args.curve {
        export_curve(&report, path)?;
    }
    match &args.output {
        Some(path) => write_score_report(&report, path)?,
        None => print_json(&serde_json::json!({
            "alc": report.alc,
            "final_nauc": report.final_nauc,
            "per_class_nauc": report.per_class_nauc,
            "config": report.config,
        })),
    }
    Ok(())
}

fn cmd_search(args: &SearchArgs) -> Result<()> {
    let cfg = args.run.resolve()?;
    let (trainer, search) = cfg.seeded();
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let pool = load_pool(cfg.pool.as_deref())?;
    let result = search_from_checkpoint(&cfg.dataset, &ckpt, &trainer, &search, &pool)?;
    fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))?;
    let path = cfg.output.join(SEARCH_REPORT_FILE);
    fs::write(&path, result.to_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
    print_json(&serde_json::json!({
        "baseline_score": result.baseline_score,
        "candidates_kept": result.candidates_kept,
        "selected": result.selected.len(),
        "report": path,
    }));
    Ok(())
}

fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let base = args.run.resolve()?;
    let axes = args
        .grid
        .iter()
        .map(|g| g.parse::<GridAxis>())
        .collect::<Result<Vec<_>, _>>()?;
    let cells = expand_grid(&base, &axes)?;
    let seeds = parse_seeds(&args.seeds)?;
    let summary = ablation(
        &cells,
        &seeds,
        &base.output,
        !args.independent,
        |cell, seed, result| match result {
            Ok(r) => eprintln!("{cell} seed {seed}: alc {:.4}", r.score.alc),
            Err(e) => eprintln!("{cell} seed {seed}: failed: {e}"),
        },
    )?;
    print_json(&summary);
    Ok(())
}

fn cmd_fixture(args: &FixtureArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?
        }
        None => FixtureConfig::default(),
    };
    if let Some(v) = &args.name {
        cfg.name = v.clone();
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = args.$flag { cfg.$field = v; })*
        };
    }
    set!(classes => num_classes, height => height, width => width, channels => channels,
        n_train => n_train, n_test => n_test, noise => noise, shape_offset => shape_offset, seed => seed);
    let (train, test) = write_fixture(&cfg, &args.output)?;
    print_json(&serde_json::json!({
        "train": { "samples": train.len(), "checksum": train.checksum() },
        "test": { "samples": test.len(), "checksum": test.checksum() },
    }));
    Ok(())
}

fn cmd_plot(args: &PlotArgs) -> Result<()> {
    let mut series = Vec::new();
    let mut summary: Option<AblationSummary> = None;
    for path in &args.inputs {
        let label = path
            .parent()
            .and_then(|p| p.file_name())
            .or_else(|| path.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if path.extension().is_some_and(|e| e == "csv") {
            let config = AlcConfig::new(args.budget, args.t0)?;
            let curve = LearningCurve::read_csv(path)?;
            series.push(PlotSeries {
                label,
                alc: curve.alc(&config),
                curve,
                config,
            });
            continue;
        }
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        if let Ok(report) = serde_json::from_str::<RunReport>(&text) {
            series.push(PlotSeries {
                label,
                alc: report.score.alc,
                config: report.score.config,
                curve: report.score.curve,
            });
        } else {
            let parsed = serde_json::from_str::<AblationSummary>(&text)
                .map_err(|_| Error::Format(format!("{} is neither a run report nor a summary", path.display())))?;
            summary = Some(parsed);
        }
    }
    let svg = match (summary, series.is_empty()) {
        (Some(s), true) => {
            let groups: Vec<(String, Vec<f64>)> = s.cells.iter().map(|c| (c.name.clone(), c.alcs())).collect();
            render_boxplot("ALC per cell", &groups)?
        }
        (Some(_), false) => return Err(config_error("cannot mix a summary with run reports".into())),
        (None, _) => render_plot(&series)?,
    };
    write_svg(&svg, &args.output)?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 2,
        Some(Error::Divergence { .. }) => 4,
        Some(_) => 3,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(f) => cmd_run(f),
        Command::Score(a) => cmd_score(a),
        Command::Search(a) => cmd_search(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::GenFixture(a) => cmd_fixture(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
