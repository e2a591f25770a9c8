//! Snapshot files and the offline scoring program.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::LabelMatrix;
use crate::error::{Error, Result};
use crate::metrics::{per_class_nauc, AlcConfig, LearningCurve, PredictionSnapshot, ScoreMatrix, ScoreReport};

const PREFIX: &str = "snap_";
const SUFFIX: &str = ".csv";

/// Rounds to the microsecond precision carried by snapshot file names.
pub fn quantize_timestamp(seconds: f64) -> f64 {
    format!("{seconds:.6}").parse().expect("formatted float parses")
}

pub fn snapshot_file_name(timestamp: f64) -> String {
    format!("{PREFIX}{timestamp:.6}{SUFFIX}")
}

fn parse_file_name(name: &str) -> Option<f64> {
    name.strip_prefix(PREFIX)?.strip_suffix(SUFFIX)?.parse().ok()
}

/// Writes one comma-separated score row per sample, in shortest round-trip form.
pub fn write_snapshot(dir: &Path, snapshot: &PredictionSnapshot) -> Result<PathBuf> {
    let scores = &snapshot.scores;
    let mut text = String::with_capacity(scores.rows() * scores.cols() * 20);
    for i in 0..scores.rows() {
        for (j, v) in scores.row(i).iter().enumerate() {
            if j > 0 {
                text.push(',');
            }
            write!(text, "{v}").expect("write to string");
        }
        text.push('\n');
    }
    let path = dir.join(snapshot_file_name(snapshot.timestamp));
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_snapshot(path: &Path) -> Result<PredictionSnapshot> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let bad = |msg: String| Error::Scoring(format!("{}: {msg}", path.display()));
    let timestamp = parse_file_name(name).ok_or_else(|| bad("file name carries no timestamp".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cols = None;
    let mut data = Vec::new();
    for (lineno, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(bad(format!(
                    "line {} has {} scores, expected {c}",
                    lineno + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        data.extend(row);
    }
    let cols = cols.ok_or_else(|| bad("no score rows".into()))?;
    let scores = ScoreMatrix::new(data.len() / cols, cols, data).map_err(|e| bad(e.to_string()))?;
    Ok(PredictionSnapshot { timestamp, scores })
}

/// Snapshot files of `dir`, sorted by embedded timestamp.
pub fn list_snapshots(dir: &Path) -> Result<Vec<(f64, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found: Vec<(f64, PathBuf)> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            parse_file_name(&name).map(|t| (t, e.path()))
        })
        .collect();
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(found)
}

fn score_one(snapshot: &PredictionSnapshot, labels: &LabelMatrix, origin: &str) -> Result<(f64, Vec<Option<f64>>)> {
    let fail = |e: Error| Error::Scoring(format!("{origin}: {e}"));
    if snapshot.scores.rows() != labels.rows() || snapshot.scores.cols() != labels.cols() {
        return Err(Error::Scoring(format!(
            "{origin}: {}x{} scores for {}x{} labels",
            snapshot.scores.rows(),
            snapshot.scores.cols(),
            labels.rows(),
            labels.cols()
        )));
    }
    let per_class = per_class_nauc(&snapshot.scores, labels).map_err(fail)?;
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(fail(Error::UndefinedAuc));
    }
    Ok((defined.iter().sum::<f64>() / defined.len() as f64, per_class))
}

fn assemble(
    scored: impl Iterator<Item = Result<(f64, f64, Vec<Option<f64>>)>>,
    cfg: &AlcConfig,
) -> Result<ScoreReport> {
    let mut curve = LearningCurve::new();
    let mut last = None;
    for item in scored {
        let (t, nauc, per_class) = item?;
        curve.append_point(t, nauc)?;
        last = Some((nauc, per_class));
    }
    let (final_nauc, per_class_nauc) = match last {
        Some((v, p)) => (Some(v), p),
        None => (None, Vec::new()),
    };
    Ok(ScoreReport {
        alc: curve.alc(cfg),
        final_nauc,
        per_class_nauc,
        config: *cfg,
        curve,
    })
}

/// Scores in-memory snapshots; order of the input does not matter.
pub fn score_snapshots(snapshots: &[PredictionSnapshot], labels: &LabelMatrix, cfg: &AlcConfig) -> Result<ScoreReport> {
    let mut sorted: Vec<&PredictionSnapshot> = snapshots.iter().collect();
    sorted.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    assemble(
        sorted.into_iter().map(|s| {
            let (nauc, per) = score_one(s, labels, &format!("snapshot at {}s", s.timestamp))?;
            Ok((s.timestamp, nauc, per))
        }),
        cfg,
    )
}

/// Rebuilds the learning curve from the snapshot files of `dir` and test labels.
pub fn score_predictions(dir: &Path, labels: &LabelMatrix, cfg: &AlcConfig) -> Result<ScoreReport> {
    let files = list_snapshots(dir)?;
    assemble(
        files.into_iter().map(|(_, path)| {
            let snap = read_snapshot(&path)?;
            let (nauc, per) = score_one(&snap, labels, &path.display().to_string())?;
            Ok((snap.timestamp, nauc, per))
        }),
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> LabelMatrix {
        LabelMatrix::one_hot(&[0, 1, 0, 1], 2).unwrap()
    }

    fn perfect(t: f64) -> PredictionSnapshot {
        let data = vec![0.9, 0.1, 0.2, 0.8, 0.7, 0.3, 0.4, 0.6];
        PredictionSnapshot {
            timestamp: t,
            scores: ScoreMatrix::new(4, 2, data).unwrap(),
        }
    }

    #[test]
    fn perfect_from_zero_scores_one() {
        let dir = tempfile::tempdir().unwrap();
        write_snapshot(dir.path(), &perfect(0.0)).unwrap();
        write_snapshot(dir.path(), &perfect(30.0)).unwrap();
        let report = score_predictions(dir.path(), &labels(), &AlcConfig::default()).unwrap();
        assert!((report.alc - 1.0).abs() < 1e-12);
        assert_eq!(report.final_nauc, Some(1.0));
    }

    #[test]
    fn file_and_memory_paths_agree() {
        let dir = tempfile::tempdir().unwrap();
        let mut snaps = Vec::new();
        for (i, t) in [3.25, 0.5, 11.0].into_iter().enumerate() {
            let mut s = perfect(quantize_timestamp(t));
            let data: Vec<f64> = s
                .scores
                .as_slice()
                .iter()
                .map(|v| v * (1.0 + i as f64 / 7.0) % 1.0)
                .collect();
            s.scores = ScoreMatrix::new(4, 2, data).unwrap();
            write_snapshot(dir.path(), &s).unwrap();
            snaps.push(s);
        }
        let cfg = AlcConfig::new(20.0, 2.0).unwrap();
        let a = score_snapshots(&snaps, &labels(), &cfg).unwrap();
        let b = score_predictions(dir.path(), &labels(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_directory_scores_zero() {
        let dir = tempfile::tempdir().unwrap();
        let report = score_predictions(dir.path(), &labels(), &AlcConfig::default()).unwrap();
        assert_eq!(report.alc, 0.0);
        assert!(report.curve.is_empty());
    }

    #[test]
    fn malformed_snapshot_names_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap_1.500000.csv");
        fs::write(&path, "0.1,0.9\nnot-a-number,0.2\n").unwrap();
        let err = score_predictions(dir.path(), &labels(), &AlcConfig::default()).unwrap_err();
        assert!(
            matches!(&err, Error::Scoring(m) if m.contains("snap_1.500000.csv")),
            "{err}"
        );
    }

    #[test]
    fn timestamps_round_trip_through_names() {
        let t = quantize_timestamp(12.3456789);
        assert_eq!(parse_file_name(&snapshot_file_name(t)), Some(t));
    }
}
