//! Subject-level train/test splits and k-fold partitions.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::TimeSeriesRecord;
use crate::error::{invalid, Result};
use crate::numerics::RngStream;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

impl SplitPlan {
    pub fn is_train(&self, id: &str) -> bool {
        self.train.contains(id)
    }

    pub fn is_test(&self, id: &str) -> bool {
        self.test.contains(id)
    }
}

fn shuffled_ids(records: &[TimeSeriesRecord], stream: &RngStream) -> Result<Vec<String>> {
    let mut seen = HashSet::new();
    let mut ids = Vec::with_capacity(records.len());
    for r in records {
        if !seen.insert(r.subject_id.as_str()) {
            return Err(invalid!("duplicate subject id '{}'", r.subject_id));
        }
        ids.push(r.subject_id.clone());
    }
    ids.shuffle(&mut stream.rng());
    Ok(ids)
}

/// Random subject-level split with `round(train_fraction * N)` training
/// subjects, clamped so both sides keep at least one subject.
pub fn subject_split(
    records: &[TimeSeriesRecord],
    train_fraction: f64,
    stream: &RngStream,
) -> Result<SplitPlan> {
    let n = records.len();
    if n < 2 {
        return Err(invalid!("a train/test split needs at least 2 subjects, got {n}"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(invalid!("train fraction must be in (0, 1), got {train_fraction}"));
    }
    let ids = shuffled_ids(records, stream)?;
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    Ok(SplitPlan {
        train: ids[..n_train].iter().cloned().collect(),
        test: ids[n_train..].iter().cloned().collect(),
    })
}

/// `k` plans; plan `i` tests on fold `i` and trains on the rest. Fold sizes
/// differ by at most one (the first `N mod k` folds are larger).
pub fn kfold_split(records: &[TimeSeriesRecord], k: usize, stream: &RngStream) -> Result<Vec<SplitPlan>> {
    let n = records.len();
    if k < 2 {
        return Err(invalid!("k-fold needs k >= 2, got {k}"));
    }
    if n < k {
        return Err(invalid!("N < k: {n} subjects cannot fill {k} folds"));
    }
    let ids = shuffled_ids(records, stream)?;
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        folds.push(&ids[start..start + size]);
        start += size;
    }
    Ok((0..k)
        .map(|i| SplitPlan {
            test: folds[i].iter().cloned().collect(),
            train: folds
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .flat_map(|(_, f)| f.iter().cloned())
                .collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;
    use proptest::prelude::*;

    fn subjects(n: usize) -> Vec<TimeSeriesRecord> {
        (0..n)
            .map(|i| TimeSeriesRecord::new(format!("s{i}"), 60.0, 1.0, Matrix::zeros(1, 1)).unwrap())
            .collect()
    }

    #[test]
    fn eighty_twenty() {
        let s = RngStream::new(3, "split");
        let plan = subject_split(&subjects(10), 0.8, &s).unwrap();
        assert_eq!((plan.train.len(), plan.test.len()), (8, 2));
        assert_eq!(plan, subject_split(&subjects(10), 0.8, &s).unwrap());
        let big = subject_split(&subjects(7025), 0.8, &s).unwrap();
        assert_eq!((big.train.len(), big.test.len()), (5620, 1405));
        assert!(subject_split(&subjects(1), 0.8, &s).is_err());
        let two = subject_split(&subjects(2), 0.8, &s).unwrap();
        assert_eq!((two.train.len(), two.test.len()), (1, 1));
    }

    #[test]
    fn fold_sizes() {
        let s = RngStream::new(9, "k");
        let plans = kfold_split(&subjects(10), 10, &s).unwrap();
        assert!(plans.iter().all(|p| p.test.len() == 1 && p.train.len() == 9));
        let plans = kfold_split(&subjects(25), 10, &s).unwrap();
        let mut sizes: Vec<usize> = plans.iter().map(|p| p.test.len()).collect();
        sizes.sort();
        assert_eq!(sizes, vec![2, 2, 2, 2, 2, 3, 3, 3, 3, 3]);
        let err = kfold_split(&subjects(9), 10, &s).unwrap_err();
        assert!(err.to_string().contains("N < k"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut recs = subjects(3);
        recs[2].subject_id = "s0".into();
        assert!(kfold_split(&recs, 2, &RngStream::root(0)).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_subjects(n in 2usize..80, k in 2usize..12, seed in 0u64..100) {
            prop_assume!(n >= k);
            let recs = subjects(n);
            let all: BTreeSet<String> = recs.iter().map(|r| r.subject_id.clone()).collect();
            let plans = kfold_split(&recs, k, &RngStream::new(seed, "p")).unwrap();
            let mut union = BTreeSet::new();
            for p in &plans {
                prop_assert!(p.train.is_disjoint(&p.test));
                let both: BTreeSet<String> = p.train.union(&p.test).cloned().collect();
                prop_assert_eq!(&both, &all);
                for id in &p.test {
                    prop_assert!(union.insert(id.clone()), "subject in two test folds");
                }
            }
            prop_assert_eq!(&union, &all);
            let sizes: Vec<usize> = plans.iter().map(|p| p.test.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
