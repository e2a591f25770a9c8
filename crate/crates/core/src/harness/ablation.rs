//! Grid ablations over run settings and seeds.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::plot::{render_boxplot, write_svg};
use super::run::{run, run_branches, RunReport};
use crate::error::{Error, Result};
use crate::trainer::AugmentMode;

pub const SUMMARY_FILE: &str = "summary.json";
pub const BOXPLOT_FILE: &str = "boxplot.svg";

#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub name: String,
    pub config: RunConfig,
}

/// One grid axis, written `key=v1,v2,...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<String>,
}

impl std::str::FromStr for GridAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (key, values) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("grid axis {s:?} is not key=v1,v2")))?;
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
        if values.iter().any(String::is_empty) {
            return Err(Error::Config(format!("grid axis {s:?} has an empty value")));
        }
        Ok(Self {
            key: key.trim().to_string(),
            values,
        })
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn apply(cfg: &mut RunConfig, key: &str, value: &str, warmstart: Option<&Path>) -> Result<()> {
    match key {
        "tau" => cfg.trainer.tau = parse(key, value)?,
        "lr" | "base_lr" => cfg.trainer.base_lr = parse(key, value)?,
        "budget" => cfg.budget = parse(key, value)?,
        "mode" => {
            cfg.mode = match value.to_ascii_lowercase().as_str() {
                "searched" => AugmentMode::Searched,
                "random" => AugmentMode::Random,
                "none" => AugmentMode::None,
                _ => return Err(Error::Config(format!("unknown mode {value:?}"))),
            }
        }
        "init" => {
            cfg.warmstart = match value {
                "random" => None,
                "warm" => Some(
                    warmstart
                        .ok_or_else(|| Error::Config("init=warm needs a warm-start checkpoint".into()))?
                        .to_path_buf(),
                ),
                _ => return Err(Error::Config(format!("unknown init {value:?}"))),
            }
        }
        _ => return Err(Error::Config(format!("unknown grid key {key:?}"))),
    }
    Ok(())
}

/// Cross product of the axes over `base`; `init=warm` uses `base.warmstart`.
pub fn expand_grid(base: &RunConfig, axes: &[GridAxis]) -> Result<Vec<AblationCell>> {
    let warm = base.warmstart.clone();
    let mut cells = vec![AblationCell {
        name: String::new(),
        config: base.clone(),
    }];
    for axis in axes {
        let mut next = Vec::with_capacity(cells.len() * axis.values.len());
        for cell in &cells {
            for value in &axis.values {
                let mut config = cell.config.clone();
                apply(&mut config, &axis.key, value, warm.as_deref())?;
                let part = format!("{}={}", axis.key, value);
                let name = if cell.name.is_empty() {
                    part
                } else {
                    format!("{}_{part}", cell.name)
                };
                next.push(AblationCell { name, config });
            }
        }
        cells = next;
    }
    if cells.len() == 1 && cells[0].name.is_empty() {
        cells[0].name = "base".into();
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub alc: Option<f64>,
    pub final_nauc: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub name: String,
    pub runs: Vec<SeedResult>,
    pub mean_alc: Option<f64>,
    pub median_alc: Option<f64>,
    pub mean_nauc: Option<f64>,
    pub median_nauc: Option<f64>,
}

impl CellSummary {
    pub fn alcs(&self) -> Vec<f64> {
        self.runs.iter().filter_map(|r| r.alc).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub cells: Vec<CellSummary>,
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

fn summarize(name: &str, runs: Vec<SeedResult>) -> CellSummary {
    let alcs: Vec<f64> = runs.iter().filter_map(|r| r.alc).collect();
    let naucs: Vec<f64> = runs.iter().filter_map(|r| r.final_nauc).collect();
    CellSummary {
        name: name.to_string(),
        mean_alc: mean(&alcs),
        median_alc: median(&alcs),
        mean_nauc: mean(&naucs),
        median_nauc: median(&naucs),
        runs,
    }
}

pub fn cell_output(out_dir: &Path, cell: &str, seed: u64) -> PathBuf {
    out_dir.join(cell).join(format!("seed_{seed}"))
}

fn seed_result(seed: u64, result: &Result<RunReport>) -> SeedResult {
    match result {
        Ok(report) => SeedResult {
            seed,
            alc: Some(report.score.alc),
            final_nauc: report.score.final_nauc,
            error: None,
        },
        Err(e) => SeedResult {
            seed,
            alc: None,
            final_nauc: None,
            error: Some(e.to_string()),
        },
    }
}

/// Indices of cells grouped by configuration with the mode ignored, in first-seen order.
fn mode_groups(cells: &[AblationCell]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, cell) in cells.iter().enumerate() {
        let key = RunConfig {
            mode: AugmentMode::None,
            ..cell.config.clone()
        };
        let found = groups.iter_mut().find(|g| {
            RunConfig {
                mode: AugmentMode::None,
                ..cells[g[0]].config.clone()
            } == key
        });
        match found {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    groups
}

/// Runs every cell for every seed; failed runs are recorded and the grid continues.
///
/// With `share_prefix`, cells that differ only in augmentation mode train their
/// common prefix once per seed (see [`run_branches`]). `progress` sees each
/// finished run. Writes `summary.json` and `boxplot.svg` to `out_dir`.
pub fn ablation(
    cells: &[AblationCell],
    seeds: &[u64],
    out_dir: &Path,
    share_prefix: bool,
    mut progress: impl FnMut(&str, u64, &Result<RunReport>),
) -> Result<AblationSummary> {
    if cells.is_empty() || seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one cell and one seed".into()));
    }
    let groups = if share_prefix {
        mode_groups(cells)
    } else {
        (0..cells.len()).map(|i| vec![i]).collect()
    };
    // seed-major order keeps the runs compared within one seed close together in time
    let mut runs: Vec<Vec<SeedResult>> = vec![Vec::with_capacity(seeds.len()); cells.len()];
    for &seed in seeds {
        for group in &groups {
            let mut configs = Vec::with_capacity(group.len());
            for &i in group {
                let output = cell_output(out_dir, &cells[i].name, seed);
                fs::create_dir_all(&output).map_err(|e| Error::io(&output, e))?;
                configs.push(RunConfig {
                    seed,
                    output,
                    ..cells[i].config.clone()
                });
            }
            let results = if configs.len() == 1 {
                Ok(vec![run(&configs[0])])
            } else {
                run_branches(&configs[0], &configs)
            };
            match results {
                Ok(results) => {
                    for (&i, result) in group.iter().zip(&results) {
                        progress(&cells[i].name, seed, result);
                        runs[i].push(seed_result(seed, result));
                    }
                }
                Err(e) => {
                    // a failure before the branches fork applies to every cell of the group
                    let failed = Err(e);
                    for &i in group {
                        progress(&cells[i].name, seed, &failed);
                        runs[i].push(seed_result(seed, &failed));
                    }
                }
            }
        }
    }
    let summaries = cells
        .iter()
        .zip(runs)
        .map(|(cell, r)| summarize(&cell.name, r))
        .collect();
    let summary = AblationSummary { cells: summaries };
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    let groups: Vec<(String, Vec<f64>)> = summary.cells.iter().map(|c| (c.name.clone(), c.alcs())).collect();
    if groups.iter().any(|(_, v)| !v.is_empty()) {
        write_svg(&render_boxplot("ALC per cell", &groups)?, &out_dir.join(BOXPLOT_FILE))?;
    }
    Ok(summary)
}
