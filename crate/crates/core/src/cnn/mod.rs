//! The shallow 1D CNN.
//!
//! ```text
//! input (L) → conv1 16×k3 → ReLU → conv2 8×k3 → ReLU → maxpool 2 → flatten (F)
//!           → dense 30 → ReLU → dense 2 → softmax
//! ```
//!
//! Convolutions are stride 1 with no padding, so `F = 8 · ⌊(L − 4) / 2⌋` with
//! the default pooling. Flattening is channel-major (`c · P + p`).
//!
//! Everything is generic over [`Scalar`]: training runs in `f32`, gradient
//! checks run in `f64`. Weight files always store `f32`.

mod adam;
mod io;
mod network;
mod train;

pub use adam::{adam_step, AdamParams, AdamState};
pub use io::{load_weights, load_weights_for, save_weights};
pub use network::{forward, logits, loss_and_grad, max_pool, predict, predict_proba, Workspace};
pub use train::{train, DenseBatch, Examples, TrainSpec, TrainTrace};

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::windowing::Task;

/// Numeric type the network can run in.
pub trait Scalar:
    num_traits::Float + std::iter::Sum + Default + Send + Sync + fmt::Debug + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Pooling {
    /// Non-overlapping max pooling (window = stride = `size`).
    Max { size: usize },
    /// One maximum per channel over the whole sequence.
    GlobalMax,
}

impl Default for Pooling {
    fn default() -> Self {
        Pooling::Max { size: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    pub input_len: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub kernel: usize,
    pub pooling: Pooling,
    pub hidden: usize,
    pub classes: usize,
}

impl Architecture {
    /// The fixed detector layout for windows of `input_len` samples.
    pub fn detector(input_len: usize) -> Result<Self, ModelError> {
        Self {
            input_len,
            conv1_filters: 16,
            conv2_filters: 8,
            kernel: 3,
            pooling: Pooling::default(),
            hidden: 30,
            classes: 2,
        }
        .validated()
    }

    pub fn with_pooling(mut self, pooling: Pooling) -> Result<Self, ModelError> {
        self.pooling = pooling;
        self.validated()
    }

    fn validated(self) -> Result<Self, ModelError> {
        if self.input_len < 2 * (self.kernel - 1) + 1 || self.pooled_len() == 0 {
            let pool = match self.pooling {
                Pooling::Max { size } => size.max(1),
                Pooling::GlobalMax => 1,
            };
            return Err(ModelError::WindowTooShort {
                window: self.input_len,
                min: 2 * (self.kernel - 1) + pool,
            });
        }
        Ok(self)
    }

    pub fn conv1_len(&self) -> usize {
        self.input_len.saturating_sub(self.kernel - 1)
    }

    pub fn conv2_len(&self) -> usize {
        self.conv1_len().saturating_sub(self.kernel - 1)
    }

    pub fn pool_size(&self) -> usize {
        match self.pooling {
            Pooling::Max { size } => size.max(1),
            Pooling::GlobalMax => self.conv2_len().max(1),
        }
    }

    pub fn pooled_len(&self) -> usize {
        self.conv2_len() / self.pool_size()
    }

    /// Flattened feature length `F` feeding the hidden layer.
    pub fn flattened(&self) -> usize {
        self.conv2_filters * self.pooled_len()
    }

    /// Tensor names and shapes in storage order.
    pub fn tensor_shapes(&self) -> [(&'static str, Vec<usize>); 8] {
        [
            ("conv1.weight", vec![self.conv1_filters, 1, self.kernel]),
            ("conv1.bias", vec![self.conv1_filters]),
            ("conv2.weight", vec![self.conv2_filters, self.conv1_filters, self.kernel]),
            ("conv2.bias", vec![self.conv2_filters]),
            ("fc1.weight", vec![self.hidden, self.flattened()]),
            ("fc1.bias", vec![self.hidden]),
            ("out.weight", vec![self.classes, self.hidden]),
            ("out.bias", vec![self.classes]),
        ]
    }

    fn offsets(&self) -> [usize; 9] {
        let mut off = [0; 9];
        for (i, (_, shape)) in self.tensor_shapes().iter().enumerate() {
            off[i + 1] = off[i] + shape.iter().product::<usize>();
        }
        off
    }

    pub fn param_count(&self) -> usize {
        self.offsets()[8]
    }

    /// Fan-in and fan-out of each weight tensor (kernel size counts for convs).
    fn fans(&self) -> [(usize, usize); 4] {
        [
            (self.kernel, self.kernel * self.conv1_filters),
            (self.kernel * self.conv1_filters, self.kernel * self.conv2_filters),
            (self.flattened(), self.hidden),
            (self.hidden, self.classes),
        ]
    }
}

/// Index of a tensor in [`Architecture::tensor_shapes`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tensor {
    Conv1Weight = 0,
    Conv1Bias,
    Conv2Weight,
    Conv2Bias,
    Fc1Weight,
    Fc1Bias,
    OutWeight,
    OutBias,
}

impl Tensor {
    pub const ALL: [Tensor; 8] = [
        Tensor::Conv1Weight,
        Tensor::Conv1Bias,
        Tensor::Conv2Weight,
        Tensor::Conv2Bias,
        Tensor::Fc1Weight,
        Tensor::Fc1Bias,
        Tensor::OutWeight,
        Tensor::OutBias,
    ];
}

/// All network parameters (or a gradient of the same shape) in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    arch: Architecture,
    offsets: [usize; 9],
    data: Vec<T>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros(arch: Architecture) -> Self {
        let offsets = arch.offsets();
        Self {
            arch,
            offsets,
            data: vec![T::zero(); offsets[8]],
        }
    }

    pub fn from_vec(arch: Architecture, data: Vec<T>) -> Result<Self, ModelError> {
        let offsets = arch.offsets();
        if data.len() != offsets[8] {
            return Err(ModelError::Spec(format!(
                "expected {} parameters, got {}",
                offsets[8],
                data.len()
            )));
        }
        Ok(Self { arch, offsets, data })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(arch: Architecture, seed: u64) -> Self {
        let mut p = Self::zeros(arch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = [
            Tensor::Conv1Weight,
            Tensor::Conv2Weight,
            Tensor::Fc1Weight,
            Tensor::OutWeight,
        ];
        for (tensor, (fan_in, fan_out)) in weights.into_iter().zip(arch.fans()) {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in p.tensor_mut(tensor) {
                *w = T::from_f64(rng.gen_range(-limit..limit));
            }
        }
        p
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn tensor(&self, t: Tensor) -> &[T] {
        let i = t as usize;
        &self.data[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn tensor_mut(&mut self, t: Tensor) -> &mut [T] {
        let i = t as usize;
        &mut self.data[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Offset of a tensor's first element in the flat buffer.
    pub fn offset(&self, t: Tensor) -> usize {
        self.offsets[t as usize]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            arch: self.arch,
            offsets: self.offsets,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    pub(crate) fn split_mut(&mut self) -> [&mut [T]; 8] {
        let o = self.offsets;
        let mut rest: &mut [T] = &mut self.data;
        let mut parts: Vec<&mut [T]> = Vec::with_capacity(8);
        for i in 0..8 {
            let (head, tail) = rest.split_at_mut(o[i + 1] - o[i]);
            parts.push(head);
            rest = tail;
        }
        parts.try_into().unwrap_or_else(|_| unreachable!())
    }
}

/// Training protocol that produced a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Trained from scratch on the pilot cognitive-load data.
    Vanilla,
    /// Stress detector trained on WESAD (the source model).
    StressSource,
    /// Stress source model fine-tuned on the pilot data.
    WesadPretrained,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Vanilla => "vanilla",
            Protocol::StressSource => "stress_source",
            Protocol::WesadPretrained => "wesad_pretrained",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Provenance recorded with every model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub window_len_s: u32,
    pub task: Task,
    pub protocol: Protocol,
    pub run_id: u32,
    pub fold_id: String,
}

impl ModelMeta {
    pub fn new(window_len_s: u32, task: Task, protocol: Protocol) -> Self {
        Self {
            window_len_s,
            task,
            protocol,
            run_id: 0,
            fold_id: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T = f32> {
    pub params: Params<T>,
    pub meta: ModelMeta,
}

impl<T: Scalar> ModelWeights<T> {
    pub fn init(arch: Architecture, seed: u64, meta: ModelMeta) -> Self {
        Self {
            params: Params::glorot(arch, seed),
            meta,
        }
    }

    pub fn zeros(arch: Architecture, meta: ModelMeta) -> Self {
        Self {
            params: Params::zeros(arch),
            meta,
        }
    }

    pub fn arch(&self) -> &Architecture {
        self.params.arch()
    }

    pub fn cast<U: Scalar>(&self) -> ModelWeights<U> {
        ModelWeights {
            params: self.params.cast(),
            meta: self.meta.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Shape arithmetic written out independently of the accessor methods.
    fn flattened_oracle(l: usize) -> usize {
        let after_conv1 = l - 3 + 1;
        let after_conv2 = after_conv1 - 3 + 1;
        let pooled = (after_conv2 - 2) / 2 + 1;
        8 * pooled
    }

    #[test]
    fn flattened_length_for_experiment_windows() {
        // 10 s, 30 s, 60 s at 64 Hz
        assert_eq!(flattened_oracle(640), 2544);
        assert_eq!(flattened_oracle(1920), 7664);
        assert_eq!(flattened_oracle(3840), 15344);
        for l in [640, 1920, 3840, 64, 65, 66, 7] {
            assert_eq!(Architecture::detector(l).unwrap().flattened(), flattened_oracle(l), "L={l}");
        }
    }

    #[test]
    fn global_pool_gives_one_feature_per_channel() {
        let a = Architecture::detector(640)
            .unwrap()
            .with_pooling(Pooling::GlobalMax)
            .unwrap();
        assert_eq!(a.flattened(), 8);
    }

    #[test]
    fn too_short_windows_rejected() {
        assert!(Architecture::detector(5).is_err());
        assert!(Architecture::detector(6).is_ok());
    }

    #[test]
    fn param_count_matches_shapes() {
        let a = Architecture::detector(64).unwrap();
        let f = a.flattened();
        assert_eq!(a.param_count(), 16 * 3 + 16 + 8 * 16 * 3 + 8 + 30 * f + 30 + 2 * 30 + 2);
    }

    #[test]
    fn glorot_is_seeded_and_bounded() {
        let a = Architecture::detector(64).unwrap();
        let p1 = Params::<f32>::glorot(a, 11);
        let p2 = Params::<f32>::glorot(a, 11);
        let p3 = Params::<f32>::glorot(a, 12);
        assert_eq!(p1, p2);
        assert_ne!(p1, p3);
        assert!(p1.tensor(Tensor::Conv1Bias).iter().all(|&b| b == 0.0));
        let lim = (6.0f32 / (3.0 + 48.0)).sqrt();
        assert!(p1.tensor(Tensor::Conv1Weight).iter().all(|w| w.abs() <= lim));
    }
}
