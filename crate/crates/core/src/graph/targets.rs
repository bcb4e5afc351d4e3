use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_CLASSES: usize = 5;

/// Average daily count: the ceiling of the arithmetic mean of `daily_counts`.
pub fn compute_adb(daily_counts: &[u64]) -> Result<u64> {
    if daily_counts.is_empty() {
        return Err(Error::MissingData("no daily counts".into()));
    }
    let n = daily_counts.len() as u64;
    let total: u64 = daily_counts.iter().sum();
    Ok(total.div_ceil(n))
}

/// Equal-frequency binning into classes `1..=n_classes`.
///
/// Values are ranked (ties by input position) and rank `r` of `K` lands in
/// class `⌊r·n/K⌋ + 1`. Tied values then all take the lowest class their
/// group touches, which keeps the mapping monotone.
pub fn quantile_classes(values: &[f64], n_classes: usize) -> Result<Vec<u8>> {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if n_classes == 0 || distinct.len() < n_classes {
        return Err(Error::DegenerateBinning {
            needed: n_classes.max(1),
            found: distinct.len(),
        });
    }
    let k = values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

    let mut classes = vec![0u8; k];
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < k && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let class = (start * n_classes / k) as u8 + 1;
        for &i in &order[start..end] {
            classes[i] = class;
        }
        start = end;
    }
    Ok(classes)
}

/// Min-max map of regression targets to `[0, 1]`, fitted on training labels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub min: f64,
    pub max: f64,
}

impl TargetScaler {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyLabels);
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == min {
            return Err(Error::DegenerateRange(min));
        }
        Ok(Self { min, max })
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        v * (self.max - self.min) + self.min
    }

    pub fn normalize_all(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.normalize(v)).collect()
    }

    pub fn denormalize_all(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.denormalize(v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn adb_is_ceiling_of_mean() {
        assert_eq!(compute_adb(&[10, 20, 31]).unwrap(), 21);
        assert_eq!(compute_adb(&[5]).unwrap(), 5);
        assert_eq!(compute_adb(&[4, 4]).unwrap(), 4);
        assert!(matches!(compute_adb(&[]), Err(Error::MissingData(_))));
    }

    #[test]
    fn uniform_ranks_map_to_expected_classes() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let c = quantile_classes(&values, 5).unwrap();
        assert_eq!(c[9], 1);
        assert_eq!(c[49], 3);
        assert_eq!(c[94], 5);
    }

    #[test]
    fn class_sizes_for_141_labels_differ_by_at_most_one() {
        // Distinct values in scrambled order.
        let values: Vec<f64> = (0..141).map(|i| ((i * 37) % 141) as f64 + 2.0).collect();
        let c = quantile_classes(&values, 5).unwrap();
        let mut counts = [0usize; 5];
        for &k in &c {
            counts[(k - 1) as usize] += 1;
        }
        let (lo, hi) = (141 / 5, 141_usize.div_ceil(5));
        assert!(counts.iter().all(|&n| n == lo || n == hi), "{counts:?}");
        assert_eq!(counts.iter().max().unwrap() - counts.iter().min().unwrap(), 1);
    }

    #[test]
    fn constant_list_is_degenerate() {
        assert!(matches!(
            quantile_classes(&[3.0; 10], 5),
            Err(Error::DegenerateBinning { .. })
        ));
    }

    #[test]
    fn ties_share_the_lower_class() {
        let c = quantile_classes(&[1.0, 2.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0], 5).unwrap();
        assert_eq!(c[1], c[2]);
        assert_eq!(c[1], 1);
    }

    #[test]
    fn scaler_maps_paper_range_to_unit_interval() {
        let s = TargetScaler::fit(&[2.0, 818.0]).unwrap();
        assert_eq!(s.normalize_all(&[2.0, 818.0]), vec![0.0, 1.0]);
        assert!(matches!(TargetScaler::fit(&[4.0, 4.0]), Err(Error::DegenerateRange(_))));
    }

    #[test]
    fn held_out_values_may_fall_outside_training_range() {
        let train = [10.0, 20.0, 30.0];
        let held_out = [5.0, 40.0];
        let s = TargetScaler::fit(&train).unwrap();
        assert!(s.normalize(held_out[0]) < 0.0);
        assert!(s.normalize(held_out[1]) > 1.0);
        // Recomputing with the held-out values included would change the map.
        let leaky = TargetScaler::fit(&[10.0, 20.0, 30.0, 5.0, 40.0]).unwrap();
        assert_ne!(leaky, s);
    }

    proptest! {
        #[test]
        fn adb_bounds(xs in prop::collection::vec(0u64..10_000, 1..50)) {
            let mean = xs.iter().sum::<u64>() as f64 / xs.len() as f64;
            let adb = compute_adb(&xs).unwrap() as f64;
            prop_assert!(adb >= mean && adb < mean + 1.0);
        }

        #[test]
        fn classes_are_monotone(xs in prop::collection::vec(0u32..60, 10..80)) {
            let values: Vec<f64> = xs.iter().map(|&x| f64::from(x)).collect();
            if let Ok(c) = quantile_classes(&values, 5) {
                for i in 0..values.len() {
                    for j in 0..values.len() {
                        if values[i] <= values[j] {
                            prop_assert!(c[i] <= c[j]);
                        }
                    }
                }
            }
        }

        #[test]
        fn scaler_round_trip(lo in 1.0f64..100.0, span in 1.0f64..1000.0, t in 0.0f64..1.0) {
            let s = TargetScaler::fit(&[lo, lo + span]).unwrap();
            let x = lo + t * span;
            prop_assert!((s.denormalize(s.normalize(x)) - x).abs() < 1e-12);
        }
    }
}
