//! Learning-rate schedule: linear warm-up, then decay on loss plateaus.

use serde::{Deserialize, Serialize};

use super::TrainerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    WarmUp,
    Main,
    Retrain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    /// Rate for the next epoch.
    pub current_lr: f64,
    /// Completed epochs.
    pub epoch: usize,
    pub best_loss: f64,
    pub epochs_since_improvement: usize,
    pub phase: Phase,
}

impl ScheduleState {
    pub fn new(cfg: &TrainerConfig) -> Self {
        let (phase, lr) = if cfg.warmup_epochs == 0 {
            (Phase::Main, cfg.base_lr)
        } else {
            (Phase::WarmUp, cfg.base_lr / cfg.warmup_epochs as f64)
        };
        Self {
            current_lr: lr,
            epoch: 0,
            best_loss: f64::INFINITY,
            epochs_since_improvement: 0,
            phase,
        }
    }

    /// Back to the base rate, no warm-up, fresh plateau tracking.
    pub fn restart_for_retrain(&self, cfg: &TrainerConfig) -> Self {
        Self {
            current_lr: cfg.base_lr,
            epoch: self.epoch,
            best_loss: f64::INFINITY,
            epochs_since_improvement: 0,
            phase: Phase::Retrain,
        }
    }
}

/// Advances the schedule after an epoch with mean loss `epoch_loss`.
pub fn schedule_step(state: &ScheduleState, epoch_loss: f64, cfg: &TrainerConfig) -> ScheduleState {
    let mut next = *state;
    next.epoch += 1;
    let improved = epoch_loss < state.best_loss - cfg.plateau_eps;
    if improved {
        next.best_loss = epoch_loss;
    }
    match state.phase {
        Phase::WarmUp => {
            next.epochs_since_improvement = 0;
            if next.epoch < cfg.warmup_epochs {
                next.current_lr = cfg.base_lr * (next.epoch + 1) as f64 / cfg.warmup_epochs as f64;
            } else {
                next.current_lr = cfg.base_lr;
                next.phase = Phase::Main;
            }
        }
        Phase::Main | Phase::Retrain => {
            if improved {
                next.epochs_since_improvement = 0;
            } else {
                next.epochs_since_improvement += 1;
                if next.epochs_since_improvement >= cfg.plateau_window {
                    next.current_lr *= cfg.plateau_factor;
                    next.epochs_since_improvement = 0;
                }
            }
        }
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TrainerConfig {
        TrainerConfig {
            base_lr: 0.1,
            ..TrainerConfig::default()
        }
    }

    /// Rates used in each of the first `n` epochs.
    fn trace(losses: &[f64]) -> Vec<f64> {
        let cfg = cfg();
        let mut s = ScheduleState::new(&cfg);
        let mut out = Vec::new();
        for &l in losses {
            out.push(s.current_lr);
            s = schedule_step(&s, l, &cfg);
        }
        out
    }

    #[test]
    fn linear_warmup() {
        let lrs = trace(&[1.0, 0.9, 0.8, 0.7, 0.6, 0.5]);
        let expected = [0.02, 0.04, 0.06, 0.08, 0.10, 0.10];
        for (a, b) in lrs.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{lrs:?}");
        }
    }

    #[test]
    fn plateau_decays_by_factor() {
        let mut losses: Vec<f64> = (0..5).map(|i| 1.0 - 0.1 * i as f64).collect();
        losses.extend(std::iter::repeat_n(0.6, 11));
        let lrs = trace(&losses);
        // warm-up ends with best 0.6; ten flat epochs later the rate drops
        assert!((lrs[15] - 0.01).abs() < 1e-12, "{lrs:?}");
        assert!((lrs[14] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn decreasing_losses_keep_base_rate() {
        let losses: Vec<f64> = (0..60).map(|i| 10.0 - 0.1 * i as f64).collect();
        assert!(trace(&losses)[5..].iter().all(|&lr| lr == 0.1));
    }

    #[test]
    fn retrain_restores_base_without_warmup() {
        let cfg = cfg();
        let mut s = ScheduleState::new(&cfg);
        for _ in 0..30 {
            s = schedule_step(&s, 1.0, &cfg);
        }
        assert!(s.current_lr < cfg.base_lr);
        let r = s.restart_for_retrain(&cfg);
        assert_eq!((r.current_lr, r.phase), (cfg.base_lr, Phase::Retrain));
        let r2 = schedule_step(&r, 5.0, &cfg);
        assert_eq!(r2.current_lr, cfg.base_lr);
    }
}
