//! Learning curves and the time-weighted area under them (ALC).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CURVE_HEADER: &str = "timestamp_s,nauc";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlcConfig {
    /// Time budget in seconds.
    pub budget: f64,
    /// Reference time in seconds.
    pub t0: f64,
}

impl Default for AlcConfig {
    fn default() -> Self {
        Self {
            budget: 1200.0,
            t0: 60.0,
        }
    }
}

impl AlcConfig {
    pub fn new(budget: f64, t0: f64) -> Result<Self> {
        if !(budget > 0.0 && t0 > 0.0 && budget.is_finite() && t0.is_finite()) {
            return Err(Error::Config(format!(
                "ALC needs budget > 0 and t0 > 0, got {budget} and {t0}"
            )));
        }
        Ok(Self { budget, t0 })
    }
}

/// NAUC step function over time, strictly increasing in timestamp.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    points: Vec<(f64, f64)>,
}

impl LearningCurve {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut curve = Self::new();
        for (t, v) in points {
            curve.append_point(t, v)?;
        }
        Ok(curve)
    }

    pub fn append_point(&mut self, timestamp: f64, nauc: f64) -> Result<()> {
        if !(timestamp >= 0.0 && timestamp.is_finite()) {
            return Err(Error::Scoring(format!("invalid timestamp {timestamp}")));
        }
        if !(-1.0..=1.0).contains(&nauc) {
            return Err(Error::Scoring(format!("NAUC {nauc} outside [-1, 1]")));
        }
        if let Some(&(last, _)) = self.points.last() {
            if timestamp <= last {
                return Err(Error::Ordering { last, next: timestamp });
            }
        }
        self.points.push((timestamp, nauc));
        Ok(())
    }

    /// Builder form of [`append_point`](Self::append_point).
    pub fn with_point(mut self, timestamp: f64, nauc: f64) -> Result<Self> {
        self.append_point(timestamp, nauc)?;
        Ok(self)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last_nauc(&self) -> Option<f64> {
        self.points.last().map(|&(_, v)| v)
    }

    /// Step-function value at `t` (zero before the first point).
    pub fn value_at(&self, t: f64) -> f64 {
        match self.points.partition_point(|&(ts, _)| ts <= t) {
            0 => 0.0,
            i => self.points[i - 1].1,
        }
    }

    /// Closed-form ALC: each step contributes `v * ln((t_next + t0) / (t + t0))`,
    /// normalized by `ln(1 + budget / t0)`. Points past the budget are ignored
    /// and the last value is held until the budget.
    pub fn alc(&self, cfg: &AlcConfig) -> f64 {
        let inside: Vec<(f64, f64)> = self.points.iter().copied().filter(|&(t, _)| t <= cfg.budget).collect();
        let mut area = 0.0;
        for (i, &(t, v)) in inside.iter().enumerate() {
            let next = inside.get(i + 1).map_or(cfg.budget, |&(tn, _)| tn);
            area += v * ((next - t) / (t + cfg.t0)).ln_1p();
        }
        area / (cfg.budget / cfg.t0).ln_1p()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CURVE_HEADER}\n");
        for (t, v) in &self.points {
            out.push_str(&format!("{t},{v}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == CURVE_HEADER => {}
            other => {
                return Err(Error::Format(format!(
                    "curve header {other:?}, expected {CURVE_HEADER:?}"
                )))
            }
        }
        let parse = |s: Option<&str>| -> Result<f64> {
            s.and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Format(format!("bad curve field {s:?}")))
        };
        let mut curve = Self::new();
        for line in lines {
            let mut f = line.split(',');
            let t = parse(f.next())?;
            let v = parse(f.next())?;
            curve.append_point(t, v)?;
        }
        Ok(curve)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_and_constant() {
        let cfg = AlcConfig::default();
        assert_eq!(LearningCurve::new().alc(&cfg), 0.0);
        let c = LearningCurve::new().with_point(0.0, 0.37).unwrap();
        assert!((c.alc(&cfg) - 0.37).abs() < 1e-15);
    }

    #[test]
    fn worked_value() {
        let c = LearningCurve::from_points([(0.0, 0.0), (600.0, 1.0)]).unwrap();
        let expected = (1260f64.ln() - 660f64.ln()) / 21f64.ln();
        let got = c.alc(&AlcConfig::default());
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.21246).abs() < 1e-4, "{got}");
    }

    #[test]
    fn ordering_enforced() {
        let mut c = LearningCurve::new().with_point(5.0, 0.3).unwrap();
        assert_eq!(c.len(), 1);
        assert!(matches!(c.append_point(3.0, 0.4), Err(Error::Ordering { .. })));
        assert!(matches!(c.append_point(5.0, 0.4), Err(Error::Ordering { .. })));
    }

    #[test]
    fn points_beyond_budget_clipped() {
        let cfg = AlcConfig::new(100.0, 10.0).unwrap();
        let a = LearningCurve::from_points([(0.0, 0.5)]).unwrap();
        let b = LearningCurve::from_points([(0.0, 0.5), (150.0, 1.0)]).unwrap();
        assert_eq!(a.alc(&cfg), b.alc(&cfg));
    }

    #[test]
    fn csv_round_trip() {
        let c = LearningCurve::from_points([(0.125, -0.25), (3.3, 0.123456789012345)]).unwrap();
        let back = LearningCurve::from_csv(&c.to_csv()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.to_csv().lines().count(), 3);
    }

    proptest! {
        #[test]
        fn monotone_nauc_gives_monotone_alc(
            steps in prop::collection::vec((0.01f64..20.0, 0.0f64..0.1), 1..40)
        ) {
            let cfg = AlcConfig::new(500.0, 60.0).unwrap();
            let mut curve = LearningCurve::new();
            let (mut t, mut v) = (0.0, 0.0);
            let mut prev = curve.alc(&cfg);
            let n = steps.len();
            for (dt, dv) in steps {
                t += dt;
                v = f64::min(v + dv, 1.0);
                curve.append_point(t, v).unwrap();
                let now = curve.alc(&cfg);
                prop_assert!(now >= prev - 1e-15, "{} < {}", now, prev);
                prev = now;
            }
            prop_assert_eq!(curve.len(), n);
        }
    }
}
