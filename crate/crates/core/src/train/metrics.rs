//! Regression and classification scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::N_CLASSES;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    /// Mean absolute percentage error over nonzero truths.
    pub mape_pct: f64,
    /// Truths equal to zero, left out of MAPE.
    pub mape_excluded: usize,
    pub r2: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Scores regression predictions (original units) and class predictions
/// (`1..=5`). Precision, recall and F1 are macro averages over the classes
/// that occur in either `truth_class` or `pred_class`; a class never
/// predicted has precision 0.
///
/// R² is 1 − SSE/SST. When every truth is equal (SST = 0) it is 1 for an
/// exact fit and 0 otherwise.
pub fn compute_metrics(pred_reg: &[f64], truth_reg: &[f64], pred_class: &[u8], truth_class: &[u8]) -> Result<Metrics> {
    let n = truth_reg.len();
    if n == 0 {
        return Err(Error::Contract("cannot score an empty evaluation set".into()));
    }
    if pred_reg.len() != n || pred_class.len() != n || truth_class.len() != n {
        return Err(Error::shape("compute_metrics", "prediction and truth lengths differ"));
    }
    if pred_reg.iter().chain(truth_reg).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("compute_metrics"));
    }
    if let Some(c) = pred_class.iter().chain(truth_class).find(|&&c| !(1..=N_CLASSES as u8).contains(&c)) {
        return Err(Error::Contract(format!("traffic class {c} outside 1..=5")));
    }

    let nf = n as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut pct = 0.0;
    let mut pct_n = 0usize;
    for (&p, &y) in pred_reg.iter().zip(truth_reg) {
        let e = p - y;
        abs += e.abs();
        sq += e * e;
        if y != 0.0 {
            pct += (e / y).abs();
            pct_n += 1;
        }
    }
    let mean_y = truth_reg.iter().sum::<f64>() / nf;
    let sst: f64 = truth_reg.iter().map(|y| (y - mean_y).powi(2)).sum();
    let r2 = if sst > 0.0 {
        1.0 - sq / sst
    } else if sq == 0.0 {
        1.0
    } else {
        0.0
    };

    let mut tp = [0usize; N_CLASSES];
    let mut predicted = [0usize; N_CLASSES];
    let mut actual = [0usize; N_CLASSES];
    for (&p, &y) in pred_class.iter().zip(truth_class) {
        let (p, y) = (p as usize - 1, y as usize - 1);
        predicted[p] += 1;
        actual[y] += 1;
        if p == y {
            tp[p] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (mut prec, mut rec, mut f1, mut present) = (0.0, 0.0, 0.0, 0usize);
    for c in 0..N_CLASSES {
        if predicted[c] + actual[c] == 0 {
            continue;
        }
        present += 1;
        let p = ratio(tp[c], predicted[c]);
        let r = ratio(tp[c], actual[c]);
        prec += p;
        rec += r;
        f1 += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    let present = present as f64;

    Ok(Metrics {
        n,
        mae: abs / nf,
        rmse: (sq / nf).sqrt(),
        mape_pct: if pct_n == 0 { 0.0 } else { 100.0 * pct / pct_n as f64 },
        mape_excluded: n - pct_n,
        r2,
        accuracy: tp.iter().sum::<usize>() as f64 / nf,
        precision: prec / present,
        recall: rec / present,
        f1: f1 / present,
    })
}

impl Metrics {
    fn fields(&self) -> [f64; 8] {
        [
            self.mae,
            self.rmse,
            self.mape_pct,
            self.r2,
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
        ]
    }

    fn from_fields(n: usize, excluded: usize, f: [f64; 8]) -> Self {
        Self {
            n,
            mae: f[0],
            rmse: f[1],
            mape_pct: f[2],
            mape_excluded: excluded,
            r2: f[3],
            accuracy: f[4],
            precision: f[5],
            recall: f[6],
            f1: f[7],
        }
    }

    /// Field-wise mean and sample standard deviation across folds; `n` and
    /// `mape_excluded` are summed.
    pub fn summarize(folds: &[Metrics]) -> (Metrics, Metrics) {
        if folds.is_empty() {
            return (Metrics::default(), Metrics::default());
        }
        let k = folds.len() as f64;
        let mut mean = [0.0; 8];
        for m in folds {
            for (acc, v) in mean.iter_mut().zip(m.fields()) {
                *acc += v / k;
            }
        }
        let mut var = [0.0; 8];
        if folds.len() > 1 {
            for m in folds {
                for ((acc, v), mu) in var.iter_mut().zip(m.fields()).zip(mean) {
                    *acc += (v - mu).powi(2) / (k - 1.0);
                }
            }
        }
        let n = folds.iter().map(|m| m.n).sum();
        let excluded = folds.iter().map(|m| m.mape_excluded).sum();
        (
            Metrics::from_fields(n, excluded, mean),
            Metrics::from_fields(n, excluded, var.map(f64::sqrt)),
        )
    }

    pub const CSV_HEADER: [&'static str; 10] = [
        "n", "mae", "rmse", "mape_pct", "mape_excluded", "r2", "accuracy", "precision", "recall", "f1",
    ];

    pub fn csv_fields(&self) -> Vec<String> {
        let f = self.fields();
        let mut out = vec![self.n.to_string()];
        out.extend(f[..3].iter().map(|v| v.to_string()));
        out.push(self.mape_excluded.to_string());
        out.extend(f[3..].iter().map(|v| v.to_string()));
        out
    }
}
