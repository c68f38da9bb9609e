use crate::error::{EvalError, ModelError};

/// Binary confusion counts with class 1 as positive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_labels(y_true: &[u8], y_pred: &[u8]) -> Result<Self, EvalError> {
        if y_true.len() != y_pred.len() {
            return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
        }
        let mut c = Confusion::default();
        for (&t, &p) in y_true.iter().zip(y_pred) {
            for v in [t, p] {
                if v > 1 {
                    return Err(ModelError::NonBinaryLabel(v).into());
                }
            }
            match (t, p) {
                (1, 1) => c.tp += 1,
                (0, 1) => c.fp += 1,
                (0, 0) => c.tn += 1,
                _ => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// F1 of class 1 (or of class 0 when `positive` is 0). Zero when undefined.
    pub fn f1(&self, positive: u8) -> f64 {
        let (tp, fp, fn_) = if positive == 1 {
            (self.tp, self.fp, self.fn_)
        } else {
            (self.tn, self.fn_, self.fp)
        };
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * tp) as f64 / denom as f64
        }
    }
}

/// Per-class F1 averaged with weights proportional to class support in `y_true`.
pub fn weighted_f1(y_true: &[u8], y_pred: &[u8]) -> Result<f64, EvalError> {
    if y_true.is_empty() {
        return Err(EvalError::Empty);
    }
    let c = Confusion::from_labels(y_true, y_pred)?;
    let n = c.total() as f64;
    let support1 = (c.tp + c.fn_) as f64;
    let support0 = (c.tn + c.fp) as f64;
    Ok((support0 * c.f1(0) + support1 * c.f1(1)) / n)
}

/// Percentage of `1` predictions.
pub fn positive_percentage(pred: &[u8]) -> Result<f64, EvalError> {
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    let pos = pred.iter().filter(|&&p| p == 1).count();
    Ok(100.0 * pos as f64 / pred.len() as f64)
}

/// Round half away from zero for the non-negative values reports use.
pub fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}
