use super::hybrid::arc_indices;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::N_CLASSES;
use crate::tensor::DenseMatrix;

/// Supervision for one loss evaluation. `rows` index into the prediction
/// matrices; `reg` is already normalized; `class` is in `1..=5`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTargets {
    pub rows: Vec<usize>,
    pub reg: Vec<f64>,
    pub class: Vec<u8>,
    pub weight: Vec<f64>,
}

impl LossTargets {
    pub fn push(&mut self, row: usize, reg: f64, class: u8, weight: f64) {
        self.rows.push(row);
        self.reg.push(reg);
        self.class.push(class);
        self.weight.push(weight);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let k = self.rows.len();
        if k == 0 {
            return Err(Error::EmptyLabels);
        }
        if self.reg.len() != k || self.class.len() != k || self.weight.len() != k {
            return Err(Error::shape("joint_loss", "target vectors differ in length"));
        }
        if let Some(c) = self.class.iter().find(|&&c| !(1..=N_CLASSES as u8).contains(&c)) {
            return Err(Error::Contract(format!("traffic class {c} outside 1..=5")));
        }
        if self.weight.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::Contract("loss weights must be finite and non-negative".into()));
        }
        if self.weight.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Contract("loss weights sum to zero".into()));
        }
        Ok(())
    }
}

/// `α · MSE + (1 − α) · CE`, each a weighted mean over the targets (with
/// unit weights, the plain mean over K). `logits` are pre-softmax scores.
pub fn joint_loss(
    tape: &mut Tape,
    reg: Var,
    logits: Var,
    targets: &LossTargets,
    alpha: f64,
) -> Result<Var> {
    targets.validate()?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Contract(format!("alpha {alpha} outside [0, 1]")));
    }
    let (n, c) = tape.shape(logits);
    if c != N_CLASSES || tape.shape(reg) != (n, 1) {
        return Err(Error::shape(
            "joint_loss",
            format!("reg {:?}, logits {:?}", tape.shape(reg), (n, c)),
        ));
    }
    let k = targets.len();
    let total: f64 = targets.weight.iter().sum();
    let rows = arc_indices(&targets.rows);

    let pred = tape.gather_rows(reg, rows.clone())?;
    let truth = tape.constant(DenseMatrix::column(&targets.reg))?;
    let err = tape.sub(pred, truth)?;
    let sq = tape.mul(err, err)?;
    let w = tape.constant(DenseMatrix::column(&targets.weight))?;
    let wsq = tape.mul(sq, w)?;
    let mse = tape.sum(wsq)?;
    let mse = tape.scale(mse, 1.0 / total)?;

    let logp = tape.log_softmax_rows(logits)?;
    let logp = tape.gather_rows(logp, rows)?;
    let mut pick = DenseMatrix::zeros(k, N_CLASSES);
    for (i, (&cls, &wi)) in targets.class.iter().zip(&targets.weight).enumerate() {
        pick.set(i, usize::from(cls - 1), wi);
    }
    let pick = tape.constant(pick)?;
    let picked = tape.mul(logp, pick)?;
    let ce = tape.sum(picked)?;
    let ce = tape.scale(ce, -1.0 / total)?;

    let a = tape.scale(mse, alpha)?;
    let b = tape.scale(ce, 1.0 - alpha)?;
    tape.add(a, b)
}

/// Value-only evaluation of [`joint_loss`] on plain matrices.
pub fn joint_loss_value(
    reg: &DenseMatrix,
    logits: &DenseMatrix,
    targets: &LossTargets,
    alpha: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let r = tape.constant(reg.clone())?;
    let l = tape.constant(logits.clone())?;
    let loss = joint_loss(&mut tape, r, l, targets, alpha)?;
    Ok(tape.value(loss).data()[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_case() -> (DenseMatrix, DenseMatrix, LossTargets) {
        let reg = DenseMatrix::column(&[0.3, 0.6]);
        let p = [[0.6, 0.1, 0.1, 0.1, 0.1], [0.1, 0.2, 0.4, 0.2, 0.1]];
        let logits = DenseMatrix::from_rows(&p).map(f64::ln);
        let mut t = LossTargets::default();
        t.push(0, 0.2, 1, 1.0);
        t.push(1, 0.8, 3, 1.0);
        (reg, logits, t)
    }

    #[test]
    fn two_label_hand_case() {
        let (reg, logits, t) = hand_case();
        let mse = (0.01 + 0.04) / 2.0;
        let ce = -(0.6f64.ln() + 0.4f64.ln()) / 2.0;
        let got = joint_loss_value(&reg, &logits, &t, 0.5).unwrap();
        assert!((got - (0.5 * mse + 0.5 * ce)).abs() < 1e-12);
    }

    #[test]
    fn alpha_endpoints_select_one_task() {
        let (reg, logits, t) = hand_case();
        let mse = joint_loss_value(&reg, &logits, &t, 1.0).unwrap();
        let ce = joint_loss_value(&reg, &logits, &t, 0.0).unwrap();
        assert!((mse - 0.025).abs() < 1e-12);
        assert!((ce + (0.6f64.ln() + 0.4f64.ln()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_regression_leaves_only_cross_entropy() {
        let (_, logits, t) = hand_case();
        let reg = DenseMatrix::column(&[0.2, 0.8]);
        let got = joint_loss_value(&reg, &logits, &t, 1.0).unwrap();
        assert_eq!(got, 0.0);
        assert!(joint_loss_value(&reg, &logits, &t, 0.5).unwrap() > 0.0);
    }

    #[test]
    fn empty_targets_are_rejected() {
        let (reg, logits, _) = hand_case();
        let err = joint_loss_value(&reg, &logits, &LossTargets::default(), 0.5);
        assert!(matches!(err, Err(Error::EmptyLabels)));
    }

    #[test]
    fn weights_scale_contributions() {
        let (reg, logits, mut t) = hand_case();
        t.weight = vec![1.0, 0.0];
        let got = joint_loss_value(&reg, &logits, &t, 1.0).unwrap();
        assert!((got - 0.01).abs() < 1e-12);
    }
}
