use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamParams, AdamState};
use super::network::{loss_and_grad, mean_loss};
use super::ModelWeights;
use crate::error::ModelError;
use crate::windowing::WindowBatch;

/// Labelled fixed-length examples the trainer can draw rows from.
pub trait Examples: Sync {
    fn len(&self) -> usize;
    fn window_len(&self) -> usize;
    fn fill_row(&self, i: usize, out: &mut [f32]);
    fn label(&self, i: usize) -> u8;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Examples for WindowBatch {
    fn len(&self) -> usize {
        WindowBatch::len(self)
    }
    fn window_len(&self) -> usize {
        WindowBatch::window_len(self)
    }
    fn fill_row(&self, i: usize, out: &mut [f32]) {
        self.row_into(i, out)
    }
    fn label(&self, i: usize) -> u8 {
        WindowBatch::label(self, i)
    }
}

/// An in-memory `n × L` matrix with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBatch {
    data: Vec<f32>,
    window_len: usize,
    labels: Vec<u8>,
}

impl DenseBatch {
    pub fn new(data: Vec<f32>, window_len: usize, labels: Vec<u8>) -> Result<Self, ModelError> {
        if window_len == 0 || data.len() != window_len * labels.len() {
            return Err(ModelError::LabelCount {
                rows: data.len().checked_div(window_len).unwrap_or(0),
                labels: labels.len(),
            });
        }
        Ok(Self {
            data,
            window_len,
            labels,
        })
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

impl Examples for DenseBatch {
    fn len(&self) -> usize {
        self.labels.len()
    }
    fn window_len(&self) -> usize {
        self.window_len
    }
    fn fill_row(&self, i: usize, out: &mut [f32]) {
        out.copy_from_slice(&self.data[i * self.window_len..(i + 1) * self.window_len]);
    }
    fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSpec {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamParams,
    /// Return the weights of the best validation epoch instead of the last one.
    pub restore_best: bool,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            max_epochs: 200,
            patience_epochs: 10,
            batch_size: 32,
            seed: 0,
            adam: AdamParams::default(),
            restore_best: true,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::Spec(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.patience_epochs == 0 {
            return Err(ModelError::Spec("patience must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Spec("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-epoch losses. Epochs are numbered from 1; `best_epoch == 0` means no
/// epoch ran.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

/// Mini-batch Adam with early stopping on validation loss.
///
/// Stops once validation loss has not improved for `patience_epochs`
/// consecutive epochs, or after `max_epochs`. The result is a pure function
/// of the inputs and `spec.seed`.
pub fn train<A: Examples + ?Sized, B: Examples + ?Sized>(
    init: &ModelWeights<f32>,
    train_set: &A,
    val_set: &B,
    spec: &TrainSpec,
) -> Result<(ModelWeights<f32>, TrainTrace), ModelError> {
    spec.validate()?;
    let arch = *init.arch();
    for len in [train_set.window_len(), val_set.window_len()] {
        if len != arch.input_len {
            return Err(ModelError::InputLength {
                expected: arch.input_len,
                actual: len,
            });
        }
    }
    if train_set.is_empty() {
        return Err(ModelError::EmptyBatch("training"));
    }
    if val_set.is_empty() {
        return Err(ModelError::EmptyBatch("validation"));
    }
    let mut trace = TrainTrace::default();
    if spec.max_epochs == 0 {
        return Ok((init.clone(), trace));
    }

    let l = arch.input_len;
    let n = train_set.len();
    let mut params = init.params.clone();
    let mut state = AdamState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rows = vec![0.0f32; spec.batch_size * l];
    let mut labels = Vec::with_capacity(spec.batch_size);

    let mut best = (f64::INFINITY, params.clone());
    let mut wait = 0;
    for epoch in 1..=spec.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for chunk in order.chunks(spec.batch_size) {
            labels.clear();
            for (slot, &i) in chunk.iter().enumerate() {
                train_set.fill_row(i, &mut rows[slot * l..(slot + 1) * l]);
                labels.push(train_set.label(i));
            }
            let (loss, grad) = loss_and_grad(&params, &rows[..chunk.len() * l], l, &labels)?;
            if !loss.is_finite() {
                return Err(ModelError::NonFinite("training loss"));
            }
            adam_step(&mut params, &grad, &mut state, spec.learning_rate, &spec.adam)?;
            epoch_loss += loss as f64 * chunk.len() as f64;
        }
        let val_loss = mean_loss(&params, val_set);
        if !val_loss.is_finite() {
            return Err(ModelError::NonFinite("validation loss"));
        }
        trace.train_loss.push(epoch_loss / n as f64);
        trace.val_loss.push(val_loss);
        trace.stopped_epoch = epoch;
        tracing::trace!(epoch, train = epoch_loss / n as f64, val = val_loss, "epoch");
        if val_loss < best.0 {
            best = (val_loss, params.clone());
            trace.best_epoch = epoch;
            wait = 0;
        } else {
            wait += 1;
            if wait >= spec.patience_epochs {
                break;
            }
        }
    }
    let params = if spec.restore_best { best.1 } else { params };
    Ok((
        ModelWeights {
            params,
            meta: init.meta.clone(),
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::{predict, Architecture, ModelMeta, Protocol};
    use crate::windowing::Task;

    fn constant_windows(values: &[(f32, u8)], l: usize) -> DenseBatch {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for &(v, y) in values {
            data.extend(std::iter::repeat_n(v, l));
            labels.push(y);
        }
        DenseBatch::new(data, l, labels).unwrap()
    }

    fn init(l: usize, seed: u64) -> ModelWeights<f32> {
        ModelWeights::init(
            Architecture::detector(l).unwrap(),
            seed,
            ModelMeta::new(1, Task::CognitiveLoad, Protocol::Vanilla),
        )
    }

    #[test]
    fn stops_after_patience_and_restores_best() {
        let train_set = constant_windows(&[(1.0, 1), (-1.0, 0), (0.8, 1), (-0.7, 0)], 64);
        // Validation labels are flipped, so every training step makes it worse.
        let val_set = constant_windows(&[(1.0, 0), (-1.0, 1)], 64);
        let spec = TrainSpec {
            patience_epochs: 1,
            learning_rate: 0.01,
            batch_size: 4,
            seed: 5,
            ..TrainSpec::default()
        };
        let w0 = init(64, 1);
        let (w, trace) = train(&w0, &train_set, &val_set, &spec).unwrap();
        assert_eq!(trace.stopped_epoch, 2);
        assert_eq!(trace.best_epoch, 1);
        assert!(trace.val_loss[1] >= trace.val_loss[0]);
        let one_epoch = TrainSpec { max_epochs: 1, ..spec };
        let (w1, _) = train(&w0, &train_set, &val_set, &one_epoch).unwrap();
        assert_eq!(w, w1);
    }

    #[test]
    fn zero_epochs_returns_initial_weights() {
        let set = constant_windows(&[(1.0, 1), (-1.0, 0)], 64);
        let w0 = init(64, 2);
        let spec = TrainSpec {
            max_epochs: 0,
            ..TrainSpec::default()
        };
        let (w, trace) = train(&w0, &set, &set, &spec).unwrap();
        assert_eq!(w, w0);
        assert_eq!(trace.stopped_epoch, 0);
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let set = constant_windows(&[(1.0, 1), (-1.0, 0), (0.5, 1), (-0.5, 0), (0.9, 1)], 64);
        let spec = TrainSpec {
            max_epochs: 5,
            batch_size: 2,
            seed: 77,
            ..TrainSpec::default()
        };
        let a = train(&init(64, 3), &set, &set, &spec).unwrap();
        let b = train(&init(64, 3), &set, &set, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn learns_constant_offsets() {
        let set = constant_windows(&[(1.0, 1), (-1.0, 0), (0.6, 1), (-0.6, 0)], 64);
        let spec = TrainSpec {
            max_epochs: 50,
            batch_size: 4,
            learning_rate: 0.01,
            ..TrainSpec::default()
        };
        let (w, _) = train(&init(64, 4), &set, &set, &spec).unwrap();
        assert_eq!(predict(&w, &set).unwrap(), set.labels());
    }

    #[test]
    fn rejects_invalid_specs_and_inputs() {
        let set = constant_windows(&[(1.0, 1)], 64);
        let other = constant_windows(&[(1.0, 1)], 65);
        let w0 = init(64, 1);
        let bad = TrainSpec {
            patience_epochs: 0,
            ..TrainSpec::default()
        };
        assert!(train(&w0, &set, &set, &bad).is_err());
        assert!(matches!(
            train(&w0, &other, &set, &TrainSpec::default()),
            Err(ModelError::InputLength { .. })
        ));
        let empty = DenseBatch::new(vec![], 64, vec![]).unwrap();
        assert!(matches!(
            train(&w0, &set, &empty, &TrainSpec::default()),
            Err(ModelError::EmptyBatch("validation"))
        ));
    }
}
