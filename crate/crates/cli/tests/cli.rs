use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn anytime(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anytime"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_fixture(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    let out = anytime(&[
        "gen-fixture",
        "--output",
        s(&data),
        "--n-train",
        "60",
        "--n-test",
        "24",
        "--height",
        "8",
        "--width",
        "8",
        "--seed",
        "3",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    data
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fixture_layout_is_complete_and_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let da = tiny_fixture(a.path());
    let db = tiny_fixture(b.path());
    for split in ["train", "test"] {
        for file in ["manifest.json", "labels.csv", "checksum.txt"] {
            assert!(da.join(split).join(file).is_file(), "{split}/{file}");
        }
        assert!(da.join(split).join("images").read_dir().unwrap().count() > 0);
        assert_eq!(
            fs::read_to_string(da.join(split).join("checksum.txt")).unwrap(),
            fs::read_to_string(db.join(split).join("checksum.txt")).unwrap()
        );
    }
}

#[test]
fn run_writes_artifacts_and_score_reproduces_alc() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_fixture(dir.path());
    let out_dir = dir.path().join("run");
    let out = anytime(&[
        "run",
        "--dataset",
        s(&data),
        "--output",
        s(&out_dir),
        "--budget",
        "3",
        "--widths",
        "4,8",
        "--search-t",
        "5",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let score = json(&out_dir.join("score.json"));
    for key in ["alc", "final_nauc", "per_class_nauc", "config"] {
        assert!(score.get(key).is_some(), "score.json lacks {key}");
    }
    let curve = fs::read_to_string(out_dir.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("timestamp_s,nauc"));
    let snaps: Vec<String> = fs::read_dir(out_dir.join("snapshots"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert!(!snaps.is_empty());
    assert!(snaps.iter().all(|n| n.starts_with("snap_") && n.ends_with(".csv")));
    assert_eq!(curve.lines().count(), snaps.len() + 1);
    let log = fs::read_to_string(out_dir.join("train_log.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    for key in ["epoch", "lr", "loss", "valid_nauc", "phase", "wall_clock"] {
        assert!(first.get(key).is_some(), "log record lacks {key}");
    }
    assert!(out_dir.join("model.ckpt").is_file());
    assert!(out_dir.join("run-report.json").is_file());

    let rescored = dir.path().join("rescored.json");
    let out = anytime(&[
        "score",
        "--snapshots",
        s(&out_dir.join("snapshots")),
        "--labels",
        s(&data),
        "--budget",
        "3",
        "--output",
        s(&rescored),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&rescored)["alc"], score["alc"]);

    let search_out = dir.path().join("search");
    let out = anytime(&[
        "search",
        "--checkpoint",
        s(&out_dir.join("model.ckpt")),
        "--dataset",
        s(&data),
        "--output",
        s(&search_out),
        "--widths",
        "4,8",
        "--search-t",
        "4",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&search_out.join("search-report.json"));
    assert_eq!(report["trace"].as_array().unwrap().len(), 4);

    let svg_a = dir.path().join("a.svg");
    let svg_b = dir.path().join("b.svg");
    for svg in [&svg_a, &svg_b] {
        let out = anytime(&["plot", s(&out_dir.join("run-report.json")), "--output", s(svg)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let bytes = fs::read(&svg_a).unwrap();
    assert!(bytes.starts_with(b"<svg"));
    assert_eq!(bytes, fs::read(&svg_b).unwrap());
}

#[test]
fn command_line_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_fixture(dir.path());
    let out_dir = dir.path().join("run");
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "dataset = {:?}\noutput = {:?}\nbudget = 2.0\nseed = 5\nmode = \"None\"\n[trainer]\nwidths = [4, 4]\ntau = 2.0\n",
            s(&data),
            s(&out_dir)
        ),
    )
    .unwrap();
    let out = anytime(&["run", "--config", s(&cfg), "--seed", "7"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out_dir.join("run-report.json"));
    assert_eq!(report["config"]["seed"], 7);
    assert_eq!(report["config"]["budget"], 2.0);
    assert_eq!(report["config"]["trainer"]["tau"], 2.0);
    assert_eq!(report["config"]["mode"], "None");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "budget = \"soon\"\n").unwrap();
    assert_eq!(code(&anytime(&["run", "--config", s(&bad)])), 2);
    assert_eq!(code(&anytime(&["run", "--budget", "-1"])), 2);
    assert_eq!(code(&anytime(&["run", "--no-such-flag"])), 2);
    let missing = dir.path().join("missing");
    assert_eq!(
        code(&anytime(&[
            "run",
            "--dataset",
            s(&missing),
            "--output",
            s(&dir.path().join("o"))
        ])),
        3
    );

    let data = tiny_fixture(dir.path());
    let out_dir = dir.path().join("diverge");
    let out = anytime(&[
        "run",
        "--dataset",
        s(&data),
        "--output",
        s(&out_dir),
        "--budget",
        "5",
        "--lr",
        "1e30",
        "--widths",
        "4,4",
    ]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ablate_writes_summary_and_boxplot() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_fixture(dir.path());
    let out_dir = dir.path().join("grid");
    let out = anytime(&[
        "ablate",
        "--dataset",
        s(&data),
        "--output",
        s(&out_dir),
        "--grid",
        "mode=none,random",
        "--seeds",
        "0..2",
        "--budget",
        "2",
        "--widths",
        "4,4",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&out_dir.join("summary.json"));
    let cells = summary["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 2);
    assert!(cells.iter().all(|c| c["runs"].as_array().unwrap().len() == 2));
    assert!(out_dir.join("boxplot.svg").is_file());
    assert!(out_dir.join("mode=random").join("seed_1").join("curve.csv").is_file());
}
