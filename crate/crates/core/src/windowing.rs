//! Fixed-length window extraction.
//!
//! Windows are contiguous slices of one recording starting at `0, step, 2·step, …`
//! and never cross a recording boundary. A [`WindowBatch`] keeps a shared copy
//! of each source signal plus `(segment, start)` references; rows are
//! materialized (and optionally z-scored) on demand, so large training sets cost
//! one copy of the raw signal rather than `n × L` floats.
//!
//! Step sizes:
//!
//! | split      | cognitive load task            | stress task                     |
//! |------------|--------------------------------|---------------------------------|
//! | train      | load 8, baseline 4             | stress 12, amusement/baseline 18 |
//! | validation | 32                             | 32                              |
//! | test       | 64                             | 64                              |

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::dataset::{ConditionLabel, SessionRecord};
use crate::error::WindowError;

pub const VALIDATION_STEP: usize = 32;
pub const TEST_STEP: usize = 64;

/// Window lengths used throughout the experiments, in seconds.
pub const WINDOW_LENGTHS_S: [u32; 3] = [10, 30, 60];

/// Binary classification task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    CognitiveLoad,
    Stress,
}

impl Task {
    /// Class index of a condition, or `None` if the condition is not part of the task.
    /// Index 1 is the positive class.
    pub fn label(self, condition: ConditionLabel) -> Option<u8> {
        use ConditionLabel::*;
        match (self, condition) {
            (Task::CognitiveLoad, CognitiveLoad) => Some(1),
            (Task::CognitiveLoad, Baseline) => Some(0),
            (Task::Stress, Stress) => Some(1),
            (Task::Stress, Amusement | WesadBaseline) => Some(0),
            _ => None,
        }
    }

    /// Training step sizes `(positive, negative)` chosen to offset class imbalance.
    pub fn training_steps(self) -> (usize, usize) {
        match self {
            Task::CognitiveLoad => (8, 4),
            Task::Stress => (12, 18),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::CognitiveLoad => "cognitive_load",
            Task::Stress => "stress",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalize {
    None,
    /// `(x − mean) / std` per window; constant windows become all zeros.
    #[default]
    PerWindowZscore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Validation,
    Test,
}

impl EvalSplit {
    pub fn step(self) -> usize {
        match self {
            EvalSplit::Validation => VALIDATION_STEP,
            EvalSplit::Test => TEST_STEP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window_len_s: u32,
    pub step_samples_positive: usize,
    pub step_samples_negative: usize,
    pub normalize: Normalize,
}

impl WindowSpec {
    pub fn training(task: Task, window_len_s: u32, normalize: Normalize) -> Self {
        let (pos, neg) = task.training_steps();
        Self {
            window_len_s,
            step_samples_positive: pos,
            step_samples_negative: neg,
            normalize,
        }
    }

    pub fn eval(split: EvalSplit, window_len_s: u32, normalize: Normalize) -> Self {
        Self {
            window_len_s,
            step_samples_positive: split.step(),
            step_samples_negative: split.step(),
            normalize,
        }
    }
}

/// Number of samples in a window; rejects lengths that are not whole samples.
pub fn window_samples(window_len_s: f64, fs_hz: f64) -> Result<usize, WindowError> {
    if !(window_len_s > 0.0) {
        return Err(WindowError::NonPositiveLength(window_len_s));
    }
    let exact = window_len_s * fs_hz;
    let rounded = exact.round();
    if (exact - rounded).abs() > 1e-9 * exact.max(1.0) || rounded < 1.0 {
        return Err(WindowError::FractionalLength {
            seconds: window_len_s,
            fs_hz,
        });
    }
    Ok(rounded as usize)
}

/// `floor((n − len) / step) + 1` for `n ≥ len`, else 0.
pub fn count_windows(n: usize, len: usize, step: usize) -> usize {
    if n < len || step == 0 || len == 0 {
        0
    } else {
        (n - len) / step + 1
    }
}

/// Where a window came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSource {
    pub subject_id: String,
    pub session_id: String,
    pub condition: ConditionLabel,
    pub start_sample: usize,
}

#[derive(Debug)]
struct Segment {
    subject_id: String,
    session_id: String,
    condition: ConditionLabel,
    samples: Arc<[f32]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct WindowRef {
    segment: u32,
    start: u32,
}

/// `n` windows of `L` samples with binary labels.
#[derive(Debug, Clone)]
pub struct WindowBatch {
    window_len: usize,
    normalize: Normalize,
    spec: Option<WindowSpec>,
    segments: Vec<Arc<Segment>>,
    refs: Vec<WindowRef>,
    labels: Vec<u8>,
}

impl WindowBatch {
    pub fn empty(window_len: usize, normalize: Normalize) -> Self {
        Self {
            window_len,
            normalize,
            spec: None,
            segments: Vec::new(),
            refs: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    /// Samples per window (`L`).
    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn normalize(&self) -> Normalize {
        self.normalize
    }

    pub fn spec(&self) -> Option<WindowSpec> {
        self.spec
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn source(&self, i: usize) -> WindowSource {
        let r = self.refs[i];
        let seg = &self.segments[r.segment as usize];
        WindowSource {
            subject_id: seg.subject_id.clone(),
            session_id: seg.session_id.clone(),
            condition: seg.condition,
            start_sample: r.start as usize,
        }
    }

    /// Subject of window `i` without allocating.
    pub fn subject_of(&self, i: usize) -> &str {
        &self.segments[self.refs[i].segment as usize].subject_id
    }

    /// Copy window `i` (normalized per the batch setting) into `out`.
    pub fn row_into(&self, i: usize, out: &mut [f32]) {
        let r = self.refs[i];
        let seg = &self.segments[r.segment as usize];
        let start = r.start as usize;
        let raw = &seg.samples[start..start + self.window_len];
        out[..self.window_len].copy_from_slice(raw);
        if self.normalize == Normalize::PerWindowZscore {
            zscore_in_place(&mut out[..self.window_len]);
        }
    }

    pub fn row(&self, i: usize) -> Vec<f32> {
        let mut out = vec![0.0; self.window_len];
        self.row_into(i, &mut out);
        out
    }

    /// Dense `n × L` row-major matrix.
    pub fn to_matrix(&self) -> Vec<f32> {
        let mut m = vec![0.0; self.len() * self.window_len];
        for (i, row) in m.chunks_exact_mut(self.window_len.max(1)).enumerate().take(self.len()) {
            self.row_into(i, row);
        }
        m
    }

    /// Append another batch with the same window length and normalization.
    pub fn extend(&mut self, other: WindowBatch) -> Result<(), WindowError> {
        if other.is_empty() && other.segments.is_empty() {
            return Ok(());
        }
        if self.segments.is_empty() && self.refs.is_empty() {
            self.window_len = other.window_len;
            self.normalize = other.normalize;
        } else if other.window_len != self.window_len {
            return Err(WindowError::LengthMismatch(self.window_len, other.window_len));
        }
        if self.spec.is_none() || self.spec == other.spec {
            self.spec = self.spec.or(other.spec);
        }
        let offset = self.segments.len() as u32;
        self.segments.extend(other.segments);
        self.refs.extend(other.refs.into_iter().map(|r| WindowRef {
            segment: r.segment + offset,
            start: r.start,
        }));
        self.labels.extend(other.labels);
        Ok(())
    }

    /// Debug dump: one row per window, samples then label.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let mut row = vec![0.0f32; self.window_len];
        for i in 0..self.len() {
            self.row_into(i, &mut row);
            for v in &row {
                write!(out, "{v},")?;
            }
            writeln!(out, "{}", self.labels[i])?;
        }
        Ok(())
    }
}

/// Z-score a window in place. Zero-variance windows become all zeros.
pub fn zscore_in_place(window: &mut [f32]) {
    let n = window.len() as f64;
    if n == 0.0 {
        return;
    }
    let mean = window.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = window.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 1e-8) || !std.is_finite() {
        window.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    for v in window.iter_mut() {
        *v = ((*v as f64 - mean) / std) as f32;
    }
}

/// Extract windows from one record, all carrying `label`.
///
/// Records shorter than the window yield an empty batch and a warning.
pub fn extract_windows(
    record: &SessionRecord,
    window_len_s: u32,
    step_samples: usize,
    normalize: Normalize,
    label: u8,
) -> Result<WindowBatch, WindowError> {
    if step_samples == 0 {
        return Err(WindowError::ZeroStep);
    }
    let len = window_samples(window_len_s as f64, record.signal.fs_hz)?;
    let n = record.signal.samples.len();
    let count = count_windows(n, len, step_samples);
    let mut batch = WindowBatch::empty(len, normalize);
    if count == 0 {
        warn!(
            subject = %record.subject_id,
            session = %record.session_id,
            condition = %record.condition,
            samples = n,
            window = len,
            "recording shorter than one window; no windows extracted"
        );
        return Ok(batch);
    }
    batch.segments.push(Arc::new(Segment {
        subject_id: record.subject_id.clone(),
        session_id: record.session_id.clone(),
        condition: record.condition,
        samples: Arc::from(record.signal.samples.as_slice()),
    }));
    batch.refs = (0..count)
        .map(|k| WindowRef {
            segment: 0,
            start: (k * step_samples) as u32,
        })
        .collect();
    batch.labels = vec![label; count];
    Ok(batch)
}

fn build(
    records: &[SessionRecord],
    task: Task,
    spec: WindowSpec,
) -> Result<WindowBatch, WindowError> {
    let mut out: Option<WindowBatch> = None;
    let mut rate: Option<f64> = None;
    for record in records {
        let label = task.label(record.condition).ok_or_else(|| WindowError::MixedTask {
            condition: record.condition.to_string(),
            task: task.to_string(),
        })?;
        match rate {
            Some(fs) if fs != record.signal.fs_hz => {
                return Err(WindowError::RateMismatch(fs, record.signal.fs_hz))
            }
            _ => rate = Some(record.signal.fs_hz),
        }
        let step = if label == 1 {
            spec.step_samples_positive
        } else {
            spec.step_samples_negative
        };
        let batch = extract_windows(record, spec.window_len_s, step, spec.normalize, label)?;
        match &mut out {
            Some(acc) => acc.extend(batch)?,
            None => out = Some(batch),
        }
    }
    let mut batch = match out {
        Some(b) => b,
        None => {
            let len = window_samples(spec.window_len_s as f64, crate::dataset::E4_BVP_HZ)?;
            WindowBatch::empty(len, spec.normalize)
        }
    };
    batch.spec = Some(spec);
    Ok(batch)
}

/// Training windows with the task's per-class step sizes, concatenated in record order.
pub fn build_training_batches(
    records: &[SessionRecord],
    task: Task,
    window_len_s: u32,
    normalize: Normalize,
) -> Result<WindowBatch, WindowError> {
    build(records, task, WindowSpec::training(task, window_len_s, normalize))
}

/// Validation (step 32) or test (step 64) windows.
pub fn build_eval_batches(
    records: &[SessionRecord],
    task: Task,
    window_len_s: u32,
    split: EvalSplit,
    normalize: Normalize,
) -> Result<WindowBatch, WindowError> {
    build(records, task, WindowSpec::eval(split, window_len_s, normalize))
}

/// Test-step windows of any record regardless of condition, labelled 0.
/// Used to classify survey recordings.
pub fn build_unlabeled(
    record: &SessionRecord,
    window_len_s: u32,
    normalize: Normalize,
) -> Result<WindowBatch, WindowError> {
    let mut b = extract_windows(record, window_len_s, TEST_STEP, normalize, 0)?;
    b.spec = Some(WindowSpec::eval(EvalSplit::Test, window_len_s, normalize));
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::PpgSignal;
    use proptest::prelude::*;

    fn record(condition: ConditionLabel, samples: Vec<f32>) -> SessionRecord {
        SessionRecord {
            subject_id: "1".into(),
            session_id: "s1".into(),
            condition,
            signal: PpgSignal {
                start_epoch: 0.0,
                fs_hz: 64.0,
                samples,
            },
            gamified: None,
        }
    }

    fn ramp(n: usize) -> Vec<f32> {
        (0..n).map(|i| (i as f32 * 0.37).sin() + 0.01 * i as f32).collect()
    }

    #[test]
    fn closed_form_counts() {
        // Expected values from floor((N - L) / step) + 1.
        let r = record(ConditionLabel::CognitiveLoad, ramp(3840));
        assert_eq!(extract_windows(&r, 60, 8, Normalize::None, 1).unwrap().len(), 1);
        assert_eq!(extract_windows(&r, 60, 1000, Normalize::None, 1).unwrap().len(), 1);
        assert_eq!(extract_windows(&r, 10, 4, Normalize::None, 1).unwrap().len(), 801);
        let r = record(ConditionLabel::CognitiveLoad, ramp(11520));
        assert_eq!(extract_windows(&r, 60, 8, Normalize::None, 1).unwrap().len(), 961);
    }

    #[test]
    fn eval_counts_for_three_minute_record() {
        let r = vec![record(ConditionLabel::Baseline, ramp(11520))];
        let test = build_eval_batches(&r, Task::CognitiveLoad, 30, EvalSplit::Test, Normalize::None).unwrap();
        assert_eq!(test.len(), 151);
        let val =
            build_eval_batches(&r, Task::CognitiveLoad, 30, EvalSplit::Validation, Normalize::None).unwrap();
        assert_eq!(val.len(), 301);
    }

    #[test]
    fn short_record_gives_empty_batch() {
        let r = vec![record(ConditionLabel::Baseline, ramp(100))];
        let b = build_eval_batches(&r, Task::CognitiveLoad, 10, EvalSplit::Test, Normalize::None).unwrap();
        assert!(b.is_empty());
        assert_eq!(b.window_len(), 640);
    }

    #[test]
    fn training_uses_per_class_steps() {
        let recs = vec![
            record(ConditionLabel::CognitiveLoad, ramp(11520)),
            record(ConditionLabel::Baseline, ramp(11520)),
        ];
        let b = build_training_batches(&recs, Task::CognitiveLoad, 30, Normalize::None).unwrap();
        let pos = (11520 - 1920) / 8 + 1;
        let neg = (11520 - 1920) / 4 + 1;
        assert_eq!(b.len(), pos + neg);
        assert_eq!(b.labels().iter().filter(|&&l| l == 1).count(), pos);
        assert_eq!(b.source(pos).start_sample, 0);
        assert_eq!(b.source(pos + 1).start_sample, 4);
        assert_eq!(b.source(1).start_sample, 8);
    }

    #[test]
    fn stress_task_labels_and_steps() {
        let recs = vec![
            record(ConditionLabel::Stress, ramp(4000)),
            record(ConditionLabel::Amusement, ramp(4000)),
            record(ConditionLabel::WesadBaseline, ramp(4000)),
        ];
        let b = build_training_batches(&recs, Task::Stress, 60, Normalize::None).unwrap();
        let pos = (4000 - 3840) / 12 + 1;
        let neg = (4000 - 3840) / 18 + 1;
        assert_eq!(b.len(), pos + 2 * neg);
        for i in 0..b.len() {
            assert_eq!(Some(b.label(i)), Task::Stress.label(b.source(i).condition));
        }
    }

    #[test]
    fn mixed_task_is_rejected() {
        let recs = vec![record(ConditionLabel::Stress, ramp(4000))];
        assert!(matches!(
            build_training_batches(&recs, Task::CognitiveLoad, 10, Normalize::None),
            Err(WindowError::MixedTask { .. })
        ));
    }

    #[test]
    fn empty_records_give_empty_batch() {
        let b = build_training_batches(&[], Task::CognitiveLoad, 30, Normalize::None).unwrap();
        assert!(b.is_empty());
    }

    #[test]
    fn fractional_lengths_rejected() {
        assert_eq!(window_samples(10.0, 64.0).unwrap(), 640);
        assert!(window_samples(10.0, 64.05).is_err());
        assert!(window_samples(0.0, 64.0).is_err());
    }

    #[test]
    fn constant_window_zscores_to_zero() {
        let r = record(ConditionLabel::Baseline, vec![3.5; 700]);
        let b = extract_windows(&r, 10, 64, Normalize::PerWindowZscore, 0).unwrap();
        assert!(b.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn debug_csv_has_label_last() {
        let r = record(ConditionLabel::CognitiveLoad, ramp(64));
        let mut r2 = r.clone();
        r2.signal.fs_hz = 4.0;
        r2.signal.samples = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let b = extract_windows(&r2, 1, 1, Normalize::None, 1).unwrap();
        let mut out = Vec::new();
        b.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "1,2,3,4,1\n2,3,4,5,1\n");
    }

    proptest! {
        #[test]
        fn count_law_matches_brute_force(n in 0usize..2000, len in 1usize..300, step in 1usize..200) {
            let samples: Vec<f32> = (0..n).map(|i| i as f32).collect();
            let mut brute = Vec::new();
            let mut s = 0;
            while s + len <= n {
                brute.push(samples[s..s + len].to_vec());
                s += step;
            }
            prop_assert_eq!(count_windows(n, len, step), brute.len());
            if n > 0 {
                let mut r = record(ConditionLabel::Baseline, samples);
                r.signal.fs_hz = 1.0;
                let b = extract_windows(&r, len as u32, step, Normalize::None, 0).unwrap();
                prop_assert_eq!(b.len(), brute.len());
                for (i, w) in brute.iter().enumerate() {
                    prop_assert_eq!(&b.row(i), w);
                }
            }
        }

        #[test]
        fn zscore_rows_are_standardized(values in proptest::collection::vec(-1000.0f32..1000.0, 64..200)) {
            let mut w = values.clone();
            zscore_in_place(&mut w);
            let n = w.len() as f64;
            let mean = w.iter().map(|&v| v as f64).sum::<f64>() / n;
            let var = w.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
            if w.iter().any(|&v| v != 0.0) {
                prop_assert!(mean.abs() < 1e-5);
                prop_assert!((var.sqrt() - 1.0).abs() < 1e-4);
            }
            prop_assert!(w.iter().all(|v| v.is_finite()));
        }
    }
}
