use rand::seq::SliceRandom;

use super::dataset::{LabelMatrix, LabeledDataset};
use crate::error::{Error, Result};
use crate::rng;

/// Train / validation index sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
}

/// Stratified when every class has at least two positives, grouping samples by
/// their first positive class.
pub fn split_indices(labels: &LabelMatrix, valid_fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(valid_fraction > 0.0 && valid_fraction < 1.0) {
        return Err(Error::Config(format!(
            "valid_fraction must lie in (0, 1), got {valid_fraction}"
        )));
    }
    let n = labels.rows();
    if n < 2 {
        return Err(Error::Config("splitting needs at least two samples".into()));
    }
    let n_valid = ((n as f64 * valid_fraction).round() as usize).clamp(1, n - 1);
    let mut rng = rng::stream(seed, &[rng::tag::SPLIT]);

    let positives: Vec<usize> = (0..labels.cols())
        .map(|j| (0..n).filter(|&i| labels.row(i)[j] == 1).count())
        .collect();
    let stratify = positives.iter().all(|&p| p >= 2);

    let mut valid = Vec::with_capacity(n_valid);
    if stratify {
        // group id = first positive class, or `cols` for unlabeled rows
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); labels.cols() + 1];
        for i in 0..n {
            let g = labels.row(i).iter().position(|&v| v == 1).unwrap_or(labels.cols());
            groups[g].push(i);
        }
        let exact: Vec<f64> = groups.iter().map(|g| g.len() as f64 * valid_fraction).collect();
        let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let mut remaining = n_valid.saturating_sub(quota.iter().sum());
        while remaining > 0 {
            for &g in &order {
                if remaining > 0 && quota[g] < groups[g].len() {
                    quota[g] += 1;
                    remaining -= 1;
                }
            }
        }
        for (group, q) in groups.iter_mut().zip(quota) {
            group.shuffle(&mut rng);
            valid.extend_from_slice(&group[..q]);
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        valid.extend_from_slice(&all[..n_valid]);
    }
    valid.sort_unstable();
    let mut in_valid = vec![false; n];
    for &i in &valid {
        in_valid[i] = true;
    }
    let train = (0..n).filter(|&i| !in_valid[i]).collect();
    Ok(SplitIndices { train, valid })
}

pub fn split_train_valid(
    ds: &LabeledDataset,
    valid_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let idx = split_indices(ds.labels(), valid_fraction, seed)?;
    Ok((
        ds.subset(&idx.train, format!("{}/train", ds.name()))?,
        ds.subset(&idx.valid, format!("{}/valid", ds.name()))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn balanced(n: usize, k: usize) -> LabelMatrix {
        LabelMatrix::one_hot(&(0..n).map(|i| i % k).collect::<Vec<_>>(), k).unwrap()
    }

    #[test]
    fn sizes_and_determinism() {
        let labels = balanced(100, 10);
        let a = split_indices(&labels, 0.2, 7).unwrap();
        assert_eq!((a.train.len(), a.valid.len()), (80, 20));
        assert_eq!(a, split_indices(&labels, 0.2, 7).unwrap());
    }

    #[test]
    fn stratified_per_class_counts() {
        let labels = balanced(100, 10);
        let s = split_indices(&labels, 0.2, 7).unwrap();
        for j in 0..10 {
            let count = s.valid.iter().filter(|&&i| labels.row(i)[j] == 1).count();
            assert_eq!(count, 2, "class {j}");
        }
    }

    #[test]
    fn fraction_out_of_range() {
        let labels = balanced(10, 2);
        for f in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(split_indices(&labels, f, 1), Err(Error::Config(_))));
        }
    }

    proptest! {
        #[test]
        fn always_a_partition(n in 2usize..200, k in 1usize..6, f in 0.05f64..0.95, seed: u64) {
            let labels = balanced(n, k);
            let s = split_indices(&labels, f, seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.valid).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert!(!s.valid.is_empty() && !s.train.is_empty());
        }
    }
}
