use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::weighted_f1;
use crate::cnn::predict;
use crate::dataset::{natural_cmp, SessionRecord};
use crate::error::EvalError;
use crate::protocols::ModelPool;
use crate::windowing::{build_eval_batches, EvalSplit, Normalize, Task};

/// A subject is kept only if some model scores strictly above this.
pub const CALIBRATION_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub subject_id: String,
    pub session_id: String,
    /// Index of the selected entry in the pool that was scored.
    pub selected: usize,
    pub run_id: u32,
    pub fold_id: String,
    pub calibration_f1: f64,
    pub excluded: bool,
    /// Calibration F1 of every pool entry, in pool order.
    pub scores: Vec<f64>,
}

/// Index of the highest score; ties go to the lowest `(run_id, fold key)`.
/// Non-finite scores never win.
pub fn select_best(keys: &[(u32, &str)], scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let better = s > scores[b]
                    || (s == scores[b]
                        && keys[i].0.cmp(&keys[b].0).then_with(|| natural_cmp(keys[i].1, keys[b].1)).is_lt());
                Some(if better { i } else { b })
            }
        };
    }
    best
}

impl CalibrationResult {
    /// Select from precomputed per-entry scores.
    pub fn from_scores(
        subject_id: &str,
        session_id: &str,
        pool: &ModelPool,
        scores: Vec<f64>,
    ) -> Result<Self, EvalError> {
        if pool.is_empty() {
            return Err(EvalError::Empty);
        }
        if scores.len() != pool.len() {
            return Err(EvalError::LengthMismatch(pool.len(), scores.len()));
        }
        let keys: Vec<(u32, &str)> = pool
            .entries
            .iter()
            .map(|e| (e.metrics.fold.run_id, e.metrics.fold.fold_key()))
            .collect();
        let selected = select_best(&keys, &scores).ok_or(EvalError::NonFinite("calibration scores"))?;
        let f1 = scores[selected];
        Ok(Self {
            subject_id: subject_id.to_string(),
            session_id: session_id.to_string(),
            selected,
            run_id: keys[selected].0,
            fold_id: keys[selected].1.to_string(),
            calibration_f1: f1,
            excluded: f1 <= CALIBRATION_THRESHOLD,
            scores,
        })
    }
}

/// Score every pool model on a subject's Stroop and baseline recordings
/// (test-step windows) and keep the best one.
pub fn calibrate_subject(
    pool: &ModelPool,
    load: &SessionRecord,
    baseline: &SessionRecord,
    window_len_s: u32,
    normalize: Normalize,
) -> Result<CalibrationResult, EvalError> {
    if pool.is_empty() {
        return Err(EvalError::Empty);
    }
    let records = [load.clone(), baseline.clone()];
    let windows = build_eval_batches(&records, Task::CognitiveLoad, window_len_s, EvalSplit::Test, normalize)?;
    if windows.is_empty() {
        return Err(EvalError::NoWindows(format!(
            "calibration recordings of subject {} session {}",
            load.subject_id, load.session_id
        )));
    }
    let scores = pool
        .entries
        .par_iter()
        .map(|e| {
            let w = e.weights.load(window_len_s)?;
            let pred = predict(&w, &windows)?;
            weighted_f1(windows.labels(), &pred)
        })
        .collect::<Result<Vec<f64>, EvalError>>()?;
    CalibrationResult::from_scores(&load.subject_id, &load.session_id, pool, scores)
}
