use std::path::Path;

use anytime_core::trainer::AugmentMode;
use anytime_core::data::fixture::{write_fixture, FixtureConfig};
use anytime_core::harness::{run, run_branches, RunConfig};

fn base(root: &Path) -> RunConfig {
    let data = root.join("data");
    let fixture = FixtureConfig {
        height: 8,
        width: 8,
        n_train: 80,
        n_test: 24,
        seed: 4,
        ..FixtureConfig::default()
    };
    write_fixture(&fixture, &data).unwrap();
    let mut cfg = RunConfig {
        dataset: data,
        output: root.join("base"),
        budget: 4.0,
        t0: 1.0,
        seed: 2,
        ..RunConfig::default()
    };
    cfg.trainer.widths = vec![4, 8];
    cfg.search.t = 3;
    cfg
}

#[test]
fn branches_share_the_pre_trigger_log() {
    let dir = tempfile::tempdir().unwrap();
    let base = base(dir.path());
    let branches: Vec<RunConfig> = [AugmentMode::None, AugmentMode::Searched]
        .into_iter()
        .map(|mode| RunConfig {
            mode,
            output: dir.path().join(format!("{mode:?}")),
            ..base.clone()
        })
        .collect();
    let reports: Vec<_> = run_branches(&base, &branches)
        .unwrap()
        .into_iter()
        .map(|r| r.unwrap())
        .collect();
    let (a, b) = (&reports[0], &reports[1]);
    assert_eq!(a.trigger, b.trigger);
    let upto = a.trigger.map_or(a.log.len().min(b.log.len()), |t| t.epoch);
    assert_eq!(a.log[..upto], b.log[..upto]);
    assert_eq!(a.config.mode, AugmentMode::None);
    assert_eq!(b.config.mode, AugmentMode::Searched);
    for r in &reports {
        assert!(r.config.output.join("score.json").is_file());
    }

    let solo = run(&RunConfig {
        output: dir.path().join("solo"),
        mode: AugmentMode::None,
        ..base.clone()
    })
    .unwrap();
    let shared = upto.min(solo.trigger.map_or(solo.log.len(), |t| t.epoch));
    for (x, y) in a.log[..shared].iter().zip(&solo.log) {
        assert_eq!((x.epoch, x.lr, x.loss), (y.epoch, y.lr, y.loss));
    }
}

#[test]
fn branches_must_agree_outside_mode_and_output() {
    let dir = tempfile::tempdir().unwrap();
    let base = base(dir.path());
    let other = RunConfig {
        seed: base.seed + 1,
        ..base.clone()
    };
    assert!(run_branches(&base, &[other]).is_err());
}
