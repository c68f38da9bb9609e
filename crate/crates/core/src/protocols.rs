//! Training protocols: vanilla leave-one-subject-out on the pilot data, WESAD
//! stress pretraining, and fine-tuning of the stress models on the pilot data.
//!
//! Every fold × run job is independent. Jobs run on the rayon pool and results
//! are collected in plan order, so the output does not depend on scheduling.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::cnn::{
    load_weights_for, predict, save_weights, train, Architecture, ModelMeta, ModelWeights, Pooling, Protocol,
    TrainSpec,
};
use crate::dataset::{natural_cmp, ConditionLabel, SessionRecord};
use crate::error::{ModelError, ProtocolError};
use crate::evaluation::{mean_std, weighted_f1};
use crate::seed::derive;
use crate::windowing::{
    build_eval_batches, build_training_batches, window_samples, EvalSplit, Normalize, Task, WindowBatch,
};

/// Lowered learning rate used when fine-tuning a pretrained stress model.
pub const FINETUNE_LEARNING_RATE: f64 = 0.0001;
pub const DEFAULT_RUNS: u32 = 40;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub test_subject: String,
    pub validation_subjects: Vec<String>,
    pub training_subjects: Vec<String>,
    pub run_id: u32,
    /// Seeds initialization and batch shuffling for this fold.
    pub seed: u64,
}

impl FoldPlan {
    /// Folds are keyed by their test subject.
    pub fn fold_key(&self) -> &str {
        &self.test_subject
    }
}

/// Validation subjects per fold for each protocol.
pub fn validation_count(protocol: Protocol) -> usize {
    match protocol {
        Protocol::Vanilla | Protocol::WesadPretrained => 2,
        Protocol::StressSource => 1,
    }
}

fn sorted_unique(subjects: &[String]) -> Vec<String> {
    let mut s = subjects.to_vec();
    s.sort_by(|a, b| natural_cmp(a, b));
    s.dedup();
    s
}

/// One fold with `test` held out. Validation subjects are drawn from the
/// remainder with a seed that depends on `(master_seed, run_id, test)` only,
/// so protocols sharing a dataset share their splits.
pub fn plan_fold(
    subjects: &[String],
    test: &str,
    run_id: u32,
    n_validation: usize,
    protocol: Protocol,
    master_seed: u64,
) -> Result<FoldPlan, ProtocolError> {
    let subjects = sorted_unique(subjects);
    let mut rest: Vec<String> = subjects.iter().filter(|s| *s != test).cloned().collect();
    if rest.len() == subjects.len() || rest.len() < n_validation + 1 {
        return Err(ProtocolError::TooFewSubjects {
            needed: n_validation + 2,
            got: subjects.len(),
        });
    }
    let run = run_id.to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(derive(master_seed, &["validation", &run, test]));
    rest.shuffle(&mut rng);
    let mut validation = rest.split_off(rest.len() - n_validation);
    validation.sort_by(|a, b| natural_cmp(a, b));
    rest.sort_by(|a, b| natural_cmp(a, b));
    Ok(FoldPlan {
        test_subject: test.to_string(),
        validation_subjects: validation,
        training_subjects: rest,
        run_id,
        seed: derive(master_seed, &["train", protocol.as_str(), &run, test]),
    })
}

/// Leave-one-subject-out plans for `runs` repetitions, ordered by run then
/// test subject.
pub fn plan_loo_folds(
    subjects: &[String],
    runs: u32,
    protocol: Protocol,
    master_seed: u64,
) -> Result<Vec<FoldPlan>, ProtocolError> {
    let subjects = sorted_unique(subjects);
    if subjects.len() < 4 {
        return Err(ProtocolError::TooFewSubjects {
            needed: 4,
            got: subjects.len(),
        });
    }
    let k = validation_count(protocol);
    let mut plans = Vec::with_capacity(runs as usize * subjects.len());
    for run in 0..runs {
        for test in &subjects {
            plans.push(plan_fold(&subjects, test, run, k, protocol, master_seed)?);
        }
    }
    Ok(plans)
}

/// Stress-task F1 of the source model on its own splits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceMetrics {
    pub train_f1: f64,
    pub val_f1: f64,
    pub test_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub fold: FoldPlan,
    pub window_len_s: u32,
    pub protocol: Protocol,
    /// Weighted F1 on the held-out subject's test windows.
    pub test_f1: f64,
    pub source_metrics: Option<SourceMetrics>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

/// Where a pool model's weights live.
#[derive(Debug, Clone)]
pub enum WeightsRef {
    File(PathBuf),
    Memory(Arc<ModelWeights<f32>>),
}

impl WeightsRef {
    pub fn load(&self, window_len_s: u32) -> Result<Arc<ModelWeights<f32>>, ModelError> {
        match self {
            WeightsRef::File(p) => Ok(Arc::new(load_weights_for(p, window_len_s)?)),
            WeightsRef::Memory(w) => Ok(Arc::clone(w)),
        }
    }

    pub fn path(&self) -> Option<&Path> {
        match self {
            WeightsRef::File(p) => Some(p),
            WeightsRef::Memory(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub metrics: RunMetrics,
    pub weights: WeightsRef,
}

impl PoolEntry {
    pub fn load(&self) -> Result<Arc<ModelWeights<f32>>, ModelError> {
        self.weights.load(self.metrics.window_len_s)
    }

    /// Deterministic ordering key: `(run_id, fold key)`.
    pub fn order_cmp(&self, other: &PoolEntry) -> std::cmp::Ordering {
        self.metrics
            .fold
            .run_id
            .cmp(&other.metrics.fold.run_id)
            .then_with(|| natural_cmp(self.metrics.fold.fold_key(), other.metrics.fold.fold_key()))
    }
}

#[derive(Debug, Clone, Default)]
pub struct ModelPool {
    pub entries: Vec<PoolEntry>,
}

impl ModelPool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn metrics(&self) -> Vec<RunMetrics> {
        self.entries.iter().map(|e| e.metrics.clone()).collect()
    }

    /// Entries matching a protocol and window length, order preserved.
    pub fn select(&self, protocol: Protocol, window_len_s: u32) -> ModelPool {
        ModelPool {
            entries: self
                .entries
                .iter()
                .filter(|e| e.metrics.protocol == protocol && e.metrics.window_len_s == window_len_s)
                .cloned()
                .collect(),
        }
    }
}

/// A fold that was trained but produced a non-finite loss or gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub fold: FoldPlan,
    pub window_len_s: u32,
    pub protocol: Protocol,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ProtocolOutput {
    pub pool: ModelPool,
    pub failures: Vec<RunFailure>,
}

impl ProtocolOutput {
    pub fn merge(&mut self, other: ProtocolOutput) {
        self.pool.entries.extend(other.pool.entries);
        self.failures.extend(other.failures);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub train: TrainSpec,
    pub finetune_learning_rate: f64,
    pub normalize: Normalize,
    pub pooling: Pooling,
    /// Persist weights under this directory; otherwise keep them in memory.
    pub weights_dir: Option<PathBuf>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            train: TrainSpec::default(),
            finetune_learning_rate: FINETUNE_LEARNING_RATE,
            normalize: Normalize::default(),
            pooling: Pooling::default(),
            weights_dir: None,
        }
    }
}

impl ProtocolConfig {
    fn architecture(&self, window_len_s: u32) -> Result<Architecture, ProtocolError> {
        let l = window_samples(window_len_s as f64, crate::dataset::E4_BVP_HZ)?;
        Ok(Architecture::detector(l)?.with_pooling(self.pooling)?)
    }

    fn store(&self, weights: ModelWeights<f32>) -> Result<WeightsRef, ModelError> {
        match &self.weights_dir {
            None => Ok(WeightsRef::Memory(Arc::new(weights))),
            Some(dir) => {
                let m = &weights.meta;
                let path = dir
                    .join(m.protocol.as_str())
                    .join(format!("w{}", m.window_len_s))
                    .join(format!("run{:03}_fold{}.cgw", m.run_id, m.fold_id));
                save_weights(&weights, &path)?;
                Ok(WeightsRef::File(path))
            }
        }
    }
}

fn by_subject(records: &[SessionRecord]) -> BTreeMap<&str, Vec<&SessionRecord>> {
    let mut map: BTreeMap<&str, Vec<&SessionRecord>> = BTreeMap::new();
    for r in records {
        map.entry(r.subject_id.as_str()).or_default().push(r);
    }
    map
}

fn subject_ids(records: &[SessionRecord]) -> Vec<String> {
    sorted_unique(&records.iter().map(|r| r.subject_id.clone()).collect::<Vec<_>>())
}

fn require_conditions(
    records: &[SessionRecord],
    groups: &[(&[ConditionLabel], &str)],
) -> Result<(), ProtocolError> {
    for (subject, rs) in by_subject(records) {
        for (accepted, name) in groups {
            if !rs.iter().any(|r| accepted.contains(&r.condition)) {
                return Err(ProtocolError::MissingCondition {
                    subject: subject.to_string(),
                    condition: name.to_string(),
                });
            }
        }
    }
    Ok(())
}

fn gather(records: &[SessionRecord], subjects: &[String], task: Task) -> Vec<SessionRecord> {
    records
        .iter()
        .filter(|r| subjects.contains(&r.subject_id) && task.label(r.condition).is_some())
        .cloned()
        .collect()
}

/// Fails if any window in `batch` comes from `test_subject`.
pub fn check_no_leakage(batch: &WindowBatch, test_subject: &str, split: &str) -> Result<(), ProtocolError> {
    if (0..batch.len()).any(|i| batch.subject_of(i) == test_subject) {
        return Err(ProtocolError::Leakage {
            subject: test_subject.to_string(),
            split: split.to_string(),
        });
    }
    Ok(())
}

struct FoldData {
    train: WindowBatch,
    val: WindowBatch,
    test: WindowBatch,
}

fn fold_data(
    records: &[SessionRecord],
    fold: &FoldPlan,
    task: Task,
    window_len_s: u32,
    normalize: Normalize,
) -> Result<FoldData, ProtocolError> {
    let train = build_training_batches(&gather(records, &fold.training_subjects, task), task, window_len_s, normalize)?;
    let val = build_eval_batches(
        &gather(records, &fold.validation_subjects, task),
        task,
        window_len_s,
        EvalSplit::Validation,
        normalize,
    )?;
    let test = build_eval_batches(
        &gather(records, std::slice::from_ref(&fold.test_subject), task),
        task,
        window_len_s,
        EvalSplit::Test,
        normalize,
    )?;
    check_no_leakage(&train, &fold.test_subject, "training")?;
    check_no_leakage(&val, &fold.test_subject, "validation")?;
    Ok(FoldData { train, val, test })
}

fn f1_on(weights: &ModelWeights<f32>, batch: &WindowBatch) -> Result<f64, ProtocolError> {
    let pred = predict(weights, batch)?;
    Ok(weighted_f1(batch.labels(), &pred)?)
}

enum JobResult {
    Done(PoolEntry),
    Failed(RunFailure),
}

#[allow(clippy::too_many_arguments)]
fn train_fold(
    init: &ModelWeights<f32>,
    data: &FoldData,
    fold: &FoldPlan,
    window_len_s: u32,
    protocol: Protocol,
    spec: &TrainSpec,
    source: Option<SourceMetrics>,
    cfg: &ProtocolConfig,
    with_source_metrics: bool,
) -> Result<JobResult, ProtocolError> {
    if data.test.is_empty() {
        return Err(ProtocolError::NoWindows(format!("test subject {}", fold.test_subject)));
    }
    let (weights, trace) = match train(init, &data.train, &data.val, spec) {
        Ok(r) => r,
        Err(e @ ModelError::NonFinite(_)) => {
            warn!(run = fold.run_id, fold = fold.fold_key(), %protocol, error = %e, "run failed");
            return Ok(JobResult::Failed(RunFailure {
                fold: fold.clone(),
                window_len_s,
                protocol,
                reason: e.to_string(),
            }));
        }
        Err(e) => return Err(e.into()),
    };
    let test_f1 = f1_on(&weights, &data.test)?;
    let source_metrics = if with_source_metrics {
        Some(SourceMetrics {
            train_f1: f1_on(&weights, &data.train)?,
            val_f1: f1_on(&weights, &data.val)?,
            test_f1,
        })
    } else {
        source
    };
    info!(
        run = fold.run_id,
        fold = fold.fold_key(),
        window = window_len_s,
        %protocol,
        test_f1,
        epochs = trace.stopped_epoch,
        "fold done"
    );
    Ok(JobResult::Done(PoolEntry {
        metrics: RunMetrics {
            fold: fold.clone(),
            window_len_s,
            protocol,
            test_f1,
            source_metrics,
            best_epoch: trace.best_epoch,
            stopped_epoch: trace.stopped_epoch,
        },
        weights: cfg.store(weights)?,
    }))
}

fn collect(results: Vec<Result<JobResult, ProtocolError>>) -> Result<ProtocolOutput, ProtocolError> {
    let mut out = ProtocolOutput::default();
    for r in results {
        match r? {
            JobResult::Done(e) => out.pool.entries.push(e),
            JobResult::Failed(f) => out.failures.push(f),
        }
    }
    if !out.failures.is_empty() {
        warn!(failed = out.failures.len(), "runs excluded from aggregates");
    }
    Ok(out)
}

fn meta(window_len_s: u32, task: Task, protocol: Protocol, fold: &FoldPlan) -> ModelMeta {
    ModelMeta {
        window_len_s,
        task,
        protocol,
        run_id: fold.run_id,
        fold_id: fold.fold_key().to_string(),
    }
}

fn cognitive_conditions() -> [(&'static [ConditionLabel], &'static str); 2] {
    [
        (&[ConditionLabel::CognitiveLoad], "cognitive_load"),
        (&[ConditionLabel::Baseline], "baseline"),
    ]
}

/// Train from scratch on every leave-one-subject-out fold of every run.
pub fn run_vanilla(
    pilot: &[SessionRecord],
    window_len_s: u32,
    runs: u32,
    cfg: &ProtocolConfig,
    master_seed: u64,
) -> Result<ProtocolOutput, ProtocolError> {
    require_conditions(pilot, &cognitive_conditions())?;
    let arch = cfg.architecture(window_len_s)?;
    let plans = plan_loo_folds(&subject_ids(pilot), runs, Protocol::Vanilla, master_seed)?;
    let results: Vec<_> = plans
        .par_iter()
        .map(|fold| {
            let data = fold_data(pilot, fold, Task::CognitiveLoad, window_len_s, cfg.normalize)?;
            let init = ModelWeights::init(
                arch,
                derive(fold.seed, &["init"]),
                meta(window_len_s, Task::CognitiveLoad, Protocol::Vanilla, fold),
            );
            let spec = TrainSpec {
                seed: fold.seed,
                ..cfg.train
            };
            train_fold(&init, &data, fold, window_len_s, Protocol::Vanilla, &spec, None, cfg, false)
        })
        .collect();
    collect(results)
}

/// WESAD fold for `run`: test subject cycles through the sorted subjects,
/// one random validation subject.
pub fn plan_wesad_fold(subjects: &[String], run_id: u32, master_seed: u64) -> Result<FoldPlan, ProtocolError> {
    let subjects = sorted_unique(subjects);
    if subjects.len() < 3 {
        return Err(ProtocolError::TooFewSubjects {
            needed: 3,
            got: subjects.len(),
        });
    }
    let test = &subjects[run_id as usize % subjects.len()];
    plan_fold(&subjects, test, run_id, 1, Protocol::StressSource, master_seed)
}

/// One stress model per run, trained on WESAD stress vs non-stress.
pub fn pretrain_wesad(
    wesad: &[SessionRecord],
    window_len_s: u32,
    runs: u32,
    cfg: &ProtocolConfig,
    master_seed: u64,
) -> Result<ProtocolOutput, ProtocolError> {
    require_conditions(
        wesad,
        &[
            (&[ConditionLabel::Stress], "stress"),
            (&[ConditionLabel::WesadBaseline, ConditionLabel::Amusement], "baseline or amusement"),
        ],
    )?;
    let arch = cfg.architecture(window_len_s)?;
    let subjects = subject_ids(wesad);
    let plans = (0..runs)
        .map(|run| plan_wesad_fold(&subjects, run, master_seed))
        .collect::<Result<Vec<_>, _>>()?;
    let results: Vec<_> = plans
        .par_iter()
        .map(|fold| {
            let data = fold_data(wesad, fold, Task::Stress, window_len_s, cfg.normalize)?;
            info!(run = fold.run_id, window = window_len_s, train_windows = data.train.len(), "pretraining");
            let init = ModelWeights::init(
                arch,
                derive(fold.seed, &["init"]),
                meta(window_len_s, Task::Stress, Protocol::StressSource, fold),
            );
            let spec = TrainSpec {
                seed: fold.seed,
                ..cfg.train
            };
            train_fold(&init, &data, fold, window_len_s, Protocol::StressSource, &spec, None, cfg, true)
        })
        .collect();
    collect(results)
}

fn finetune_job(
    source: &PoolEntry,
    pilot: &[SessionRecord],
    fold: &FoldPlan,
    window_len_s: u32,
    cfg: &ProtocolConfig,
) -> Result<JobResult, ProtocolError> {
    if source.metrics.window_len_s != window_len_s {
        return Err(ProtocolError::WindowMismatch {
            expected: window_len_s,
            found: source.metrics.window_len_s,
        });
    }
    let data = fold_data(pilot, fold, Task::CognitiveLoad, window_len_s, cfg.normalize)?;
    let init = ModelWeights {
        params: source.load()?.params.clone(),
        meta: meta(window_len_s, Task::CognitiveLoad, Protocol::WesadPretrained, fold),
    };
    let spec = TrainSpec {
        seed: fold.seed,
        learning_rate: cfg.finetune_learning_rate,
        ..cfg.train
    };
    train_fold(
        &init,
        &data,
        fold,
        window_len_s,
        Protocol::WesadPretrained,
        &spec,
        source.metrics.source_metrics,
        cfg,
        false,
    )
}

/// Fine-tune one pretrained model on one pilot fold. All layers are updated
/// and the source metrics are carried over.
pub fn finetune(
    source: &PoolEntry,
    pilot: &[SessionRecord],
    fold: &FoldPlan,
    window_len_s: u32,
    cfg: &ProtocolConfig,
) -> Result<PoolEntry, ProtocolError> {
    match finetune_job(source, pilot, fold, window_len_s, cfg)? {
        JobResult::Done(e) => Ok(e),
        JobResult::Failed(f) => Err(ProtocolError::RunFailed(f.reason)),
    }
}

/// Fine-tune the stress model of each run on every pilot fold of that run.
pub fn run_finetune(
    sources: &ModelPool,
    pilot: &[SessionRecord],
    window_len_s: u32,
    runs: u32,
    cfg: &ProtocolConfig,
    master_seed: u64,
) -> Result<ProtocolOutput, ProtocolError> {
    require_conditions(pilot, &cognitive_conditions())?;
    let plans = plan_loo_folds(&subject_ids(pilot), runs, Protocol::WesadPretrained, master_seed)?;
    let sources = sources.select(Protocol::StressSource, window_len_s);
    let results: Vec<_> = plans
        .par_iter()
        .map(|fold| {
            let source = sources
                .entries
                .iter()
                .find(|e| e.metrics.fold.run_id == fold.run_id)
                .ok_or(ProtocolError::MissingSource {
                    run_id: fold.run_id,
                    window_len_s,
                })?;
            finetune_job(source, pilot, fold, window_len_s, cfg)
        })
        .collect();
    collect(results)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    pub subject: String,
    pub protocol: Protocol,
    pub window_len_s: u32,
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for a single run.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMean {
    pub protocol: Protocol,
    pub window_len_s: u32,
    /// Mean of the per-subject means.
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateTable {
    pub cells: Vec<AggregateCell>,
    pub columns: Vec<ColumnMean>,
}

/// Per (subject, protocol, window) mean and std of test F1, plus column means.
pub fn aggregate(metrics: &[RunMetrics]) -> Result<AggregateTable, ProtocolError> {
    if metrics.is_empty() {
        return Err(ProtocolError::Empty);
    }
    let mut groups: BTreeMap<(Protocol, u32), BTreeMap<SubjectKey, Vec<f64>>> = BTreeMap::new();
    for m in metrics {
        groups
            .entry((m.protocol, m.window_len_s))
            .or_default()
            .entry(SubjectKey(m.fold.test_subject.clone()))
            .or_default()
            .push(m.test_f1);
    }
    let mut cells = Vec::new();
    let mut columns = Vec::new();
    for ((protocol, window_len_s), subjects) in &groups {
        let mut means = Vec::new();
        for (subject, values) in subjects {
            let (mean, std) = mean_std(values).expect("non-empty group");
            means.push(mean);
            cells.push(AggregateCell {
                subject: subject.0.clone(),
                protocol: *protocol,
                window_len_s: *window_len_s,
                runs: values.len(),
                mean,
                std,
            });
        }
        columns.push(ColumnMean {
            protocol: *protocol,
            window_len_s: *window_len_s,
            mean: means.iter().sum::<f64>() / means.len() as f64,
        });
    }
    Ok(AggregateTable { cells, columns })
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct SubjectKey(String);

impl Ord for SubjectKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        natural_cmp(&self.0, &other.0)
    }
}

impl PartialOrd for SubjectKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl AggregateTable {
    /// Table-1 layout: one row per subject, a `mean`/`std` column pair per
    /// (protocol, window), and a final `Mean` row of column means.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let cols: Vec<(Protocol, u32)> = self.columns.iter().map(|c| (c.protocol, c.window_len_s)).collect();
        let mut subjects: Vec<&str> = self.cells.iter().map(|c| c.subject.as_str()).collect();
        subjects.sort_by(|a, b| natural_cmp(a, b));
        subjects.dedup();
        write!(out, "subject")?;
        for (p, w) in &cols {
            write!(out, ",{p}_{w}s_mean,{p}_{w}s_std")?;
        }
        writeln!(out)?;
        for s in subjects {
            write!(out, "{s}")?;
            for (p, w) in &cols {
                match self
                    .cells
                    .iter()
                    .find(|c| c.subject == s && c.protocol == *p && c.window_len_s == *w)
                {
                    Some(c) => write!(out, ",{:.3},{:.3}", c.mean, c.std)?,
                    None => write!(out, ",,")?,
                }
            }
            writeln!(out)?;
        }
        write!(out, "Mean")?;
        for c in &self.columns {
            write!(out, ",{:.3},", c.mean)?;
        }
        writeln!(out)
    }
}

/// One line of the run ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LedgerRecord {
    Ok {
        #[serde(flatten)]
        metrics: RunMetrics,
        /// Weight file relative to the ledger's base directory.
        weights: Option<PathBuf>,
    },
    Failed(RunFailure),
}

/// Write one JSON line per completed or failed run. Weight paths are written
/// relative to `base` when they live under it.
pub fn write_ledger<W: Write>(out: &mut W, output: &ProtocolOutput, base: Option<&Path>) -> std::io::Result<()> {
    for e in &output.pool.entries {
        let weights = e.weights.path().map(|p| match base {
            Some(b) => p.strip_prefix(b).unwrap_or(p).to_path_buf(),
            None => p.to_path_buf(),
        });
        let rec = LedgerRecord::Ok {
            metrics: e.metrics.clone(),
            weights,
        };
        writeln!(out, "{}", serde_json::to_string(&rec)?)?;
    }
    for f in &output.failures {
        writeln!(out, "{}", serde_json::to_string(&LedgerRecord::Failed(f.clone()))?)?;
    }
    Ok(())
}

/// Read a ledger back into a pool whose weights are files under `base`.
/// Lines starting with `#` are comments.
pub fn read_ledger<R: BufRead>(input: R, base: &Path) -> Result<ProtocolOutput, ProtocolError> {
    let mut out = ProtocolOutput::default();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| ProtocolError::Ledger(format!("line {}: {e}", i + 1)))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let rec: LedgerRecord =
            serde_json::from_str(&line).map_err(|e| ProtocolError::Ledger(format!("line {}: {e}", i + 1)))?;
        match rec {
            LedgerRecord::Ok { metrics, weights } => {
                let Some(path) = weights else {
                    return Err(ProtocolError::Ledger(format!(
                        "line {}: entry has no weight file",
                        i + 1
                    )));
                };
                out.pool.entries.push(PoolEntry {
                    metrics,
                    weights: WeightsRef::File(base.join(path)),
                });
            }
            LedgerRecord::Failed(f) => out.failures.push(f),
        }
    }
    Ok(out)
}
