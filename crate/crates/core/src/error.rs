use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: cannot parse {value:?} as a number")]
    Parse {
        path: PathBuf,
        line: usize,
        value: String,
    },
    #[error("{path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
    #[error("manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("duplicate record (subject {subject}, session {session}, condition {condition})")]
    Duplicate {
        subject: String,
        session: String,
        condition: String,
    },
    #[error("unknown condition {0:?}")]
    UnknownCondition(String),
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },
}

#[derive(Debug, Error)]
pub enum WindowError {
    #[error("window length {seconds} s at {fs_hz} Hz is not a whole number of samples")]
    FractionalLength { seconds: f64, fs_hz: f64 },
    #[error("window length must be positive, got {0} s")]
    NonPositiveLength(f64),
    #[error("step must be at least one sample")]
    ZeroStep,
    #[error("condition {condition} does not belong to the {task} task")]
    MixedTask { condition: String, task: String },
    #[error("records have different sampling rates ({0} Hz vs {1} Hz)")]
    RateMismatch(f64, f64),
    #[error("cannot concatenate batches with window lengths {0} and {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input length mismatch: model expects L = {expected}, got {actual}")]
    InputLength { expected: usize, actual: usize },
    #[error("window {window} too short for the architecture (needs at least {min} samples)")]
    WindowTooShort { window: usize, min: usize },
    #[error("label {0} is not binary")]
    NonBinaryLabel(u8),
    #[error("batch has {rows} rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("empty {0} batch")]
    EmptyBatch(&'static str),
    #[error("invalid training spec: {0}")]
    Spec(String),
    #[error("weight file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("weight file {path}: checksum mismatch")]
    Checksum { path: PathBuf },
    #[error("weight file {path}: trained for {found} s windows, pipeline uses {expected} s")]
    WindowMismatch {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("need at least {needed} subjects, got {got}")]
    TooFewSubjects { needed: usize, got: usize },
    #[error("subject {subject} lacks a {condition} recording")]
    MissingCondition { subject: String, condition: String },
    #[error("pretrained model uses {found} s windows, fold expects {expected} s")]
    WindowMismatch { expected: u32, found: u32 },
    #[error("nothing to aggregate")]
    Empty,
    #[error("window from test subject {subject} found in the {split} set")]
    Leakage { subject: String, split: String },
    #[error("no windows for {0}")]
    NoWindows(String),
    #[error("no pretrained model for run {run_id} at {window_len_s} s")]
    MissingSource { run_id: u32, window_len_s: u32 },
    #[error("run ledger: {0}")]
    Ledger(String),
    #[error("training failed: {0}")]
    RunFailed(String),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 points for a correlation, got {0}")]
    TooFewPoints(usize),
    #[error("correlation undefined: {0} has zero variance")]
    ZeroVariance(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("pool entry {0} has no source metrics")]
    MissingSourceMetrics(String),
    #[error("no windows could be extracted from {0}")]
    NoWindows(String),
    #[error("response-time events: {0}")]
    Events(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Window(#[from] WindowError),
}
