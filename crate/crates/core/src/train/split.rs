//! Repeated stratified hold-out splits of the labeled set.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ProtocolConfig;
use crate::error::{Error, Result};
use crate::graph::LabelSet;
use crate::rng::SeedTree;

/// Positions into a [`LabelSet`] (not node indices), each sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    /// Training labels that receive gradients.
    pub fit: Vec<usize>,
    /// Training labels held out for early stopping.
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl FoldSplit {
    /// `fit ∪ validation`, sorted.
    pub fn train(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.fit.iter().chain(&self.validation).copied().collect();
        t.sort_unstable();
        t
    }
}

pub const MIN_LABELS: usize = 10;

/// How many of each group to draw: `fraction · size` per group by largest
/// remainder, `total` overall, never more than `caps`. Remainder ties are
/// broken at random.
fn allocate(sizes: &[usize], caps: &[usize], fraction: f64, total: usize, rng: &mut impl Rng) -> Vec<usize> {
    let exact: Vec<f64> = sizes.iter().map(|&s| fraction * s as f64).collect();
    let mut take: Vec<usize> = exact
        .iter()
        .zip(caps)
        .map(|(&e, &cap)| (e.floor() as usize).min(cap))
        .collect();
    let total = total.min(caps.iter().sum());
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.shuffle(rng);
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let mut assigned: usize = take.iter().sum();
    while assigned < total {
        let before = assigned;
        for &g in &order {
            if assigned == total {
                break;
            }
            if take[g] < caps[g] {
                take[g] += 1;
                assigned += 1;
            }
        }
        if assigned == before {
            break;
        }
    }
    take
}

/// `config.folds` independent stratified partitions into fit, validation
/// and test. Fold `f` draws from `seeds.index(f)`.
pub fn split_folds(labels: &LabelSet, config: &ProtocolConfig, seeds: &SeedTree) -> Result<Vec<FoldSplit>> {
    let k = labels.len();
    if k < MIN_LABELS {
        return Err(Error::Contract(format!("need at least {MIN_LABELS} labels to split, have {k}")));
    }
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (p, &c) in labels.classes().iter().enumerate() {
        by_class.entry(c).or_default().push(p);
    }
    if let Some((&class, members)) = by_class.iter().find(|(_, m)| m.len() < 2) {
        return Err(Error::Stratification {
            class,
            count: members.len(),
        });
    }
    let groups: Vec<&Vec<usize>> = by_class.values().collect();
    let sizes: Vec<usize> = groups.iter().map(|g| g.len()).collect();

    (0..config.folds)
        .map(|f| {
            let mut rng = seeds.index(f as u64).rng("split");
            let caps: Vec<usize> = sizes.iter().map(|s| s - 1).collect();
            let n_test = (config.test_fraction * k as f64).round() as usize;
            let test_take = allocate(&sizes, &caps, config.test_fraction, n_test, &mut rng);

            let mut test = Vec::new();
            let mut train_groups = Vec::with_capacity(groups.len());
            for (g, &take) in groups.iter().zip(&test_take) {
                let mut members = (*g).clone();
                members.shuffle(&mut rng);
                test.extend_from_slice(&members[..take]);
                train_groups.push(members[take..].to_vec());
            }

            let train_sizes: Vec<usize> = train_groups.iter().map(Vec::len).collect();
            let val_caps: Vec<usize> = train_sizes.iter().map(|&s| if s >= 2 { s - 1 } else { 0 }).collect();
            let n_train: usize = train_sizes.iter().sum();
            let n_val = (config.val_fraction * n_train as f64).round() as usize;
            let val_take = allocate(&train_sizes, &val_caps, config.val_fraction, n_val, &mut rng);

            let mut fit = Vec::new();
            let mut validation = Vec::new();
            for (members, &take) in train_groups.iter().zip(&val_take) {
                validation.extend_from_slice(&members[..take]);
                fit.extend_from_slice(&members[take..]);
            }
            fit.sort_unstable();
            validation.sort_unstable();
            test.sort_unstable();
            Ok(FoldSplit { fit, validation, test })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use rand::SeedableRng;

    fn labels(k: usize) -> LabelSet {
        let adb: Vec<f64> = (0..k).map(|i| ((i * 37) % k) as f64 + 2.0).collect();
        LabelSet::new((0..k).collect(), adb, k).unwrap()
    }

    #[test]
    fn allocation_respects_total_and_caps() {
        let mut rng = StreamRng::seed_from_u64(0);
        let take = allocate(&[3, 3, 3], &[2, 2, 2], 0.5, 5, &mut rng);
        assert_eq!(take.iter().sum::<usize>(), 5);
        assert!(take.iter().all(|&t| (1..=2).contains(&t)));
        let take = allocate(&[2, 2], &[1, 1], 0.9, 4, &mut rng);
        assert_eq!(take, vec![1, 1]);
    }

    #[test]
    fn k141_sizes() {
        let folds = split_folds(&labels(141), &ProtocolConfig::default(), &SeedTree::new(1)).unwrap();
        assert_eq!(folds.len(), 5);
        for f in &folds {
            assert_eq!(f.test.len(), 42);
            assert_eq!(f.train().len(), 99);
            assert_eq!(f.validation.len(), 15);
        }
        assert_ne!(folds[0].test, folds[1].test);
    }

    #[test]
    fn too_few_labels_or_singleton_class() {
        assert!(matches!(
            split_folds(&labels(9), &ProtocolConfig::default(), &SeedTree::new(0)),
            Err(Error::Contract(_))
        ));
        let adb: Vec<f64> = (1..=12).map(f64::from).collect();
        let mut classes = vec![1, 1, 2, 2, 3, 3, 4, 4, 4, 4, 4, 5];
        classes.sort_unstable();
        let ls = LabelSet::with_classes((0..12).collect(), adb, classes, 12).unwrap();
        assert!(matches!(
            split_folds(&ls, &ProtocolConfig::default(), &SeedTree::new(0)),
            Err(Error::Stratification { class: 5, count: 1 })
        ));
    }
}
