//! ROC AUC via the Mann-Whitney rank statistic, NAUC and NBAC.

use serde::{Deserialize, Serialize};

use crate::data::LabelMatrix;
use crate::error::{Error, Result};

/// Dense per-sample, per-class score matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Scoring(format!(
                "score buffer of length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Scoring(format!("non-finite score {v}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

fn check_binary(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Scoring(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Scoring("non-finite score".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    Ok((pos, neg))
}

/// Exact ROC AUC with mid-rank tie handling.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_binary(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0f64;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share their mean
        let mid = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i] == 1).count();
        rank_sum_pos += mid * pos_in_group as f64;
        start = end;
    }
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Per-class NAUC = 2 AUC - 1; `None` where the class has a single label value.
pub fn per_class_nauc(scores: &ScoreMatrix, labels: &LabelMatrix) -> Result<Vec<Option<f64>>> {
    if scores.rows() != labels.rows() || scores.cols() != labels.cols() {
        return Err(Error::Scoring(format!(
            "scores are {}x{}, labels are {}x{}",
            scores.rows(),
            scores.cols(),
            labels.rows(),
            labels.cols()
        )));
    }
    (0..scores.cols())
        .map(|j| match auc(&scores.column(j), &labels.column(j)) {
            Ok(a) => Ok(Some(2.0 * a - 1.0)),
            Err(Error::UndefinedAuc) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

/// Unweighted mean of the defined per-class NAUC values.
pub fn nauc_macro(scores: &ScoreMatrix, labels: &LabelMatrix) -> Result<f64> {
    mean_defined(&per_class_nauc(scores, labels)?)
}

pub(crate) fn mean_defined(per_class: &[Option<f64>]) -> Result<f64> {
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::Scoring("AUC is undefined for every class".into()));
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

pub const DEFAULT_NBAC_THRESHOLD: f64 = 0.5;

/// Normalized balanced accuracy, 2 * (TPR + TNR) / 2 - 1, predicting positive when score >= threshold.
pub fn nbac(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    let (pos, neg) = check_binary(scores, labels)?;
    let (mut tp, mut tn) = (0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            _ => {}
        }
    }
    let bac = (tp as f64 / pos as f64 + tn as f64 / neg as f64) / 2.0;
    Ok(2.0 * bac - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// O(P * N) pair counting.
    fn pair_oracle(scores: &[f64], labels: &[u8]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            if labels[i] != 1 {
                continue;
            }
            for (j, &sj) in scores.iter().enumerate() {
                if labels[j] != 0 {
                    continue;
                }
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn worked_examples() {
        assert_eq!(auc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        let (s, l) = ([0.1, 0.4, 0.35, 0.8], [0u8, 0, 1, 1]);
        assert_eq!(pair_oracle(&s, &l), 0.75);
        assert_eq!(auc(&s, &l).unwrap(), 0.75);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::UndefinedAuc)));
        assert!(matches!(nbac(&[0.1, 0.2], &[0, 0], 0.5), Err(Error::UndefinedAuc)));
    }

    #[test]
    fn macro_nauc() {
        let labels = LabelMatrix::new(4, 3, vec![1, 1, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0]).unwrap();
        // class 0: perfect; class 1: AUC 0.75; class 2: all ties
        #[rustfmt::skip]
        let scores = ScoreMatrix::new(4, 3, vec![
            0.9, 0.8, 0.5,
            0.8, 0.1, 0.5,
            0.2, 0.3, 0.5,
            0.1, 0.35, 0.5,
        ]).unwrap();
        let per = per_class_nauc(&scores, &labels).unwrap();
        assert_eq!(per, vec![Some(1.0), Some(0.5), Some(0.0)]);
        assert_eq!(nauc_macro(&scores, &labels).unwrap(), 0.5);
    }

    #[test]
    fn macro_skips_undefined_classes() {
        let labels = LabelMatrix::new(2, 2, vec![1, 0, 0, 0]).unwrap();
        let scores = ScoreMatrix::new(2, 2, vec![0.9, 0.1, 0.1, 0.2]).unwrap();
        assert_eq!(nauc_macro(&scores, &labels).unwrap(), 1.0);
        let none = LabelMatrix::new(2, 1, vec![1, 1]).unwrap();
        let s1 = ScoreMatrix::new(2, 1, vec![0.9, 0.1]).unwrap();
        assert!(matches!(nauc_macro(&s1, &none), Err(Error::Scoring(_))));
    }

    #[test]
    fn nbac_examples() {
        assert_eq!(nbac(&[0.9, 0.8, 0.1, 0.2], &[1, 1, 0, 0], 0.5).unwrap(), 1.0);
        assert_eq!(nbac(&[1.0; 4], &[1, 1, 0, 0], 0.5).unwrap(), 0.0);
        // TPR = 1, TNR = 1/2
        assert_eq!(nbac(&[0.9, 0.7, 0.6, 0.1], &[1, 1, 0, 0], 0.5).unwrap(), 0.5);
    }

    proptest! {
        #[test]
        fn matches_pair_oracle(
            data in prop::collection::vec((0u8..8, any::<bool>()), 2..120)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 7.0).collect();
            let mut labels: Vec<u8> = data.iter().map(|(_, l)| u8::from(*l)).collect();
            labels[0] = 0;
            labels[1] = 1;
            let a = auc(&scores, &labels).unwrap();
            prop_assert!((a - pair_oracle(&scores, &labels)).abs() <= 1e-12);
        }

        #[test]
        fn invariant_under_monotone_transform(
            data in prop::collection::vec((-50i32..50, any::<bool>()), 2..80)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 10.0).collect();
            let mut labels: Vec<u8> = data.iter().map(|(_, l)| u8::from(*l)).collect();
            labels[0] = 0;
            labels[1] = 1;
            let warped: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(auc(&scores, &labels).unwrap(), auc(&warped, &labels).unwrap());
        }
    }
}
