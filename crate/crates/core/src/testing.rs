//! Test oracles shared by unit and integration tests.
//!
//! Nothing here is used on a training path: the finite-difference checker
//! re-evaluates the forward closure and never reads tape gradients for the
//! numeric side.

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::tensor::DenseMatrix;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub entries: usize,
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> DenseMatrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    DenseMatrix::from_vec(rows, cols, data).expect("sized")
}

/// Compares tape gradients of `build` against central finite differences
/// for every entry of every input. Relative error uses
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-4)`.
pub fn finite_difference_check<F>(inputs: &[DenseMatrix], build: F) -> GradCheckReport
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[DenseMatrix]| -> f64 {
        let mut t = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| t.param(v).expect("finite")).collect();
        let loss = build(&mut t, &vars).expect("forward");
        t.value(loss).data()[0]
    };

    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| t.param(v).expect("finite")).collect();
    let loss = build(&mut t, &vars).expect("forward");
    let grads = t.backward(loss).expect("backward");

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        entries: 0,
    };
    let mut work: Vec<DenseMatrix> = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var);
        for i in 0..inputs[k].data().len() {
            let orig = inputs[k].data()[i];
            work[k].data_mut()[i] = orig + FD_STEP;
            let up = eval(&work);
            work[k].data_mut()[i] = orig - FD_STEP;
            let down = eval(&work);
            work[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic.data()[i];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(1e-4);
            report.max_abs_err = report.max_abs_err.max(abs);
            report.max_rel_err = report.max_rel_err.max(rel);
            report.entries += 1;
        }
    }
    report
}
