//! Forward pass and hand-written backpropagation.
//!
//! Activations are stored channel-major per example, so every convolution
//! reduces to `axpy`/`dot` over contiguous time slices.

use super::{Architecture, ModelWeights, Params, Scalar, Tensor};
use crate::cnn::train::Examples;
use crate::error::ModelError;

/// Per-example scratch buffers, reused across a batch.
#[derive(Debug, Clone)]
pub struct Workspace<T> {
    a1: Vec<T>,
    a2: Vec<T>,
    pool_idx: Vec<usize>,
    flat: Vec<T>,
    h: Vec<T>,
    logits: Vec<T>,
    dh: Vec<T>,
    dflat: Vec<T>,
    da2: Vec<T>,
    da1: Vec<T>,
}

impl<T: Scalar> Workspace<T> {
    pub fn new(arch: &Architecture) -> Self {
        let l1 = arch.conv1_len();
        let l2 = arch.conv2_len();
        let f = arch.flattened();
        Self {
            a1: vec![T::zero(); arch.conv1_filters * l1],
            a2: vec![T::zero(); arch.conv2_filters * l2],
            pool_idx: vec![0; f],
            flat: vec![T::zero(); f],
            h: vec![T::zero(); arch.hidden],
            logits: vec![T::zero(); arch.classes],
            dh: vec![T::zero(); arch.hidden],
            dflat: vec![T::zero(); f],
            da2: vec![T::zero(); arch.conv2_filters * l2],
            da1: vec![T::zero(); arch.conv1_filters * l1],
        }
    }

    /// Logits of the last example passed through [`forward_one`].
    pub fn logits(&self) -> &[T] {
        &self.logits
    }
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Non-overlapping max pooling of one channel. Trailing samples that do not
/// fill a window are dropped. `argmax` receives the index of the first maximum.
pub fn max_pool<T: Scalar>(row: &[T], pool: usize, out: &mut [T], argmax: &mut [usize]) {
    for (q, (o, a)) in out.iter_mut().zip(argmax.iter_mut()).enumerate() {
        let base = q * pool;
        let mut best = base;
        for t in base + 1..base + pool {
            if row[t] > row[best] {
                best = t;
            }
        }
        *o = row[best];
        *a = best;
    }
}

/// Run one example; logits land in `ws.logits`.
pub(crate) fn forward_one<T: Scalar>(p: &Params<T>, x: &[T], ws: &mut Workspace<T>) {
    let arch = *p.arch();
    let k = arch.kernel;
    let (l1, l2) = (arch.conv1_len(), arch.conv2_len());
    let (c1, c2) = (arch.conv1_filters, arch.conv2_filters);
    let pool = arch.pool_size();
    let pooled = arch.pooled_len();

    let w1 = p.tensor(Tensor::Conv1Weight);
    let b1 = p.tensor(Tensor::Conv1Bias);
    for c in 0..c1 {
        let out = &mut ws.a1[c * l1..(c + 1) * l1];
        out.fill(b1[c]);
        for j in 0..k {
            axpy(w1[c * k + j], &x[j..j + l1], out);
        }
        out.iter_mut().for_each(|v| *v = v.max(T::zero()));
    }

    let w2 = p.tensor(Tensor::Conv2Weight);
    let b2 = p.tensor(Tensor::Conv2Bias);
    for c in 0..c2 {
        let out = &mut ws.a2[c * l2..(c + 1) * l2];
        out.fill(b2[c]);
        for ci in 0..c1 {
            let src = &ws.a1[ci * l1..(ci + 1) * l1];
            for j in 0..k {
                axpy(w2[(c * c1 + ci) * k + j], &src[j..j + l2], out);
            }
        }
        out.iter_mut().for_each(|v| *v = v.max(T::zero()));
    }

    for c in 0..c2 {
        max_pool(
            &ws.a2[c * l2..(c + 1) * l2],
            pool,
            &mut ws.flat[c * pooled..(c + 1) * pooled],
            &mut ws.pool_idx[c * pooled..(c + 1) * pooled],
        );
        ws.pool_idx[c * pooled..(c + 1) * pooled]
            .iter_mut()
            .for_each(|i| *i += c * l2);
    }

    let wf = p.tensor(Tensor::Fc1Weight);
    let bf = p.tensor(Tensor::Fc1Bias);
    let f = arch.flattened();
    for j in 0..arch.hidden {
        let z = bf[j] + dot(&wf[j * f..(j + 1) * f], &ws.flat);
        ws.h[j] = z.max(T::zero());
    }

    let wo = p.tensor(Tensor::OutWeight);
    let bo = p.tensor(Tensor::OutBias);
    for m in 0..arch.classes {
        ws.logits[m] = bo[m] + dot(&wo[m * arch.hidden..(m + 1) * arch.hidden], &ws.h);
    }
}

/// Accumulate the gradient of one example given `d loss / d logits`.
/// `ws` must hold the activations of the same example.
pub(crate) fn backward_one<T: Scalar>(
    p: &Params<T>,
    x: &[T],
    ws: &mut Workspace<T>,
    dlogits: &[T],
    grad: &mut Params<T>,
) {
    let arch = *p.arch();
    let k = arch.kernel;
    let (l1, l2) = (arch.conv1_len(), arch.conv2_len());
    let (c1, c2) = (arch.conv1_filters, arch.conv2_filters);
    let f = arch.flattened();
    let hidden = arch.hidden;
    let [g_w1, g_b1, g_w2, g_b2, g_wf, g_bf, g_wo, g_bo] = grad.split_mut();

    let wo = p.tensor(Tensor::OutWeight);
    ws.dh.fill(T::zero());
    for m in 0..arch.classes {
        let d = dlogits[m];
        g_bo[m] = g_bo[m] + d;
        axpy(d, &ws.h, &mut g_wo[m * hidden..(m + 1) * hidden]);
        axpy(d, &wo[m * hidden..(m + 1) * hidden], &mut ws.dh);
    }
    for j in 0..hidden {
        if ws.h[j] <= T::zero() {
            ws.dh[j] = T::zero();
        }
    }

    let wf = p.tensor(Tensor::Fc1Weight);
    ws.dflat.fill(T::zero());
    for j in 0..hidden {
        let d = ws.dh[j];
        if d == T::zero() {
            continue;
        }
        g_bf[j] = g_bf[j] + d;
        axpy(d, &ws.flat, &mut g_wf[j * f..(j + 1) * f]);
        axpy(d, &wf[j * f..(j + 1) * f], &mut ws.dflat);
    }

    ws.da2.fill(T::zero());
    for (i, &src) in ws.pool_idx.iter().enumerate() {
        // a2 is post-ReLU, so a positive value means the unit was active.
        if ws.a2[src] > T::zero() {
            ws.da2[src] = ws.da2[src] + ws.dflat[i];
        }
    }

    let w2 = p.tensor(Tensor::Conv2Weight);
    ws.da1.fill(T::zero());
    for c in 0..c2 {
        let d = &ws.da2[c * l2..(c + 1) * l2];
        if d.iter().all(|&v| v == T::zero()) {
            continue;
        }
        g_b2[c] = g_b2[c] + d.iter().copied().sum::<T>();
        for ci in 0..c1 {
            let a = &ws.a1[ci * l1..(ci + 1) * l1];
            for j in 0..k {
                let idx = (c * c1 + ci) * k + j;
                g_w2[idx] = g_w2[idx] + dot(d, &a[j..j + l2]);
                axpy(w2[idx], d, &mut ws.da1[ci * l1 + j..ci * l1 + j + l2]);
            }
        }
    }

    for c in 0..c1 {
        let a = &ws.a1[c * l1..(c + 1) * l1];
        let d = &mut ws.da1[c * l1..(c + 1) * l1];
        for (dv, &av) in d.iter_mut().zip(a) {
            if av <= T::zero() {
                *dv = T::zero();
            }
        }
        g_b1[c] = g_b1[c] + d.iter().copied().sum::<T>();
        for j in 0..k {
            g_w1[c * k + j] = g_w1[c * k + j] + dot(d, &x[j..j + l1]);
        }
    }
}

fn check_inputs<T>(arch: &Architecture, inputs: &[T], window_len: usize) -> Result<usize, ModelError> {
    if window_len != arch.input_len {
        return Err(ModelError::InputLength {
            expected: arch.input_len,
            actual: window_len,
        });
    }
    if !inputs.len().is_multiple_of(window_len) {
        return Err(ModelError::InputLength {
            expected: window_len,
            actual: inputs.len() % window_len,
        });
    }
    Ok(inputs.len() / window_len)
}

/// Numerically stable `log Σ exp(z)`.
fn log_sum_exp<T: Scalar>(z: &[T]) -> T {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    m + z.iter().map(|&v| (v - m).exp()).sum::<T>().ln()
}

/// Raw logits, `n × classes` row-major.
pub fn logits<T: Scalar>(
    params: &Params<T>,
    inputs: &[T],
    window_len: usize,
) -> Result<Vec<T>, ModelError> {
    let arch = *params.arch();
    let n = check_inputs(&arch, inputs, window_len)?;
    let mut ws = Workspace::new(&arch);
    let mut out = Vec::with_capacity(n * arch.classes);
    for x in inputs.chunks_exact(window_len) {
        forward_one(params, x, &mut ws);
        out.extend_from_slice(&ws.logits);
    }
    Ok(out)
}

/// Softmax probabilities, `n × classes` row-major. Row `i` depends only on input row `i`.
pub fn forward<T: Scalar>(
    params: &Params<T>,
    inputs: &[T],
    window_len: usize,
) -> Result<Vec<T>, ModelError> {
    let classes = params.arch().classes;
    let mut z = logits(params, inputs, window_len)?;
    for row in z.chunks_exact_mut(classes) {
        let lse = log_sum_exp(row);
        row.iter_mut().for_each(|v| *v = (*v - lse).exp());
    }
    Ok(z)
}

/// Mean cross-entropy against one-hot labels and its gradient.
pub fn loss_and_grad<T: Scalar>(
    params: &Params<T>,
    inputs: &[T],
    window_len: usize,
    labels: &[u8],
) -> Result<(T, Params<T>), ModelError> {
    let arch = *params.arch();
    let n = check_inputs(&arch, inputs, window_len)?;
    if labels.len() != n {
        return Err(ModelError::LabelCount {
            rows: n,
            labels: labels.len(),
        });
    }
    if n == 0 {
        return Err(ModelError::EmptyBatch("training"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= arch.classes) {
        return Err(ModelError::NonBinaryLabel(bad));
    }
    let mut ws = Workspace::new(&arch);
    let mut grad = Params::zeros(arch);
    let mut dlogits = vec![T::zero(); arch.classes];
    let scale = T::one() / T::from_f64(n as f64);
    let mut total = T::zero();
    for (x, &y) in inputs.chunks_exact(window_len).zip(labels) {
        forward_one(params, x, &mut ws);
        let lse = log_sum_exp(&ws.logits);
        total = total + (lse - ws.logits[y as usize]);
        for (m, d) in dlogits.iter_mut().enumerate() {
            let prob = (ws.logits[m] - lse).exp();
            let target = if m == y as usize { T::one() } else { T::zero() };
            *d = (prob - target) * scale;
        }
        backward_one(params, x, &mut ws, &dlogits, &mut grad);
    }
    Ok((total * scale, grad))
}

const PREDICT_CHUNK: usize = 256;

/// Positive-class probability for every example.
pub fn predict_proba<E: Examples + ?Sized>(
    weights: &ModelWeights<f32>,
    examples: &E,
) -> Result<Vec<f32>, ModelError> {
    let arch = *weights.arch();
    if examples.window_len() != arch.input_len {
        return Err(ModelError::InputLength {
            expected: arch.input_len,
            actual: examples.window_len(),
        });
    }
    let l = arch.input_len;
    let mut ws = Workspace::new(&arch);
    let mut row = vec![0.0f32; l];
    let mut out = Vec::with_capacity(examples.len());
    for start in (0..examples.len()).step_by(PREDICT_CHUNK) {
        for i in start..(start + PREDICT_CHUNK).min(examples.len()) {
            examples.fill_row(i, &mut row);
            forward_one(&weights.params, &row, &mut ws);
            let lse = log_sum_exp(&ws.logits);
            out.push((ws.logits[1] - lse).exp());
        }
    }
    Ok(out)
}

/// Argmax class per example (ties go to class 0).
pub fn predict<E: Examples + ?Sized>(
    weights: &ModelWeights<f32>,
    examples: &E,
) -> Result<Vec<u8>, ModelError> {
    let arch = *weights.arch();
    if examples.window_len() != arch.input_len {
        return Err(ModelError::InputLength {
            expected: arch.input_len,
            actual: examples.window_len(),
        });
    }
    let mut ws = Workspace::new(&arch);
    let mut row = vec![0.0f32; arch.input_len];
    Ok((0..examples.len())
        .map(|i| {
            examples.fill_row(i, &mut row);
            forward_one(&weights.params, &row, &mut ws);
            u8::from(ws.logits[1] > ws.logits[0])
        })
        .collect())
}

/// Mean cross-entropy over a set of examples, no gradient.
pub(crate) fn mean_loss<E: Examples + ?Sized>(params: &Params<f32>, examples: &E) -> f64 {
    let arch = *params.arch();
    let mut ws = Workspace::new(&arch);
    let mut row = vec![0.0f32; arch.input_len];
    let mut total = 0.0f64;
    for i in 0..examples.len() {
        examples.fill_row(i, &mut row);
        forward_one(params, &row, &mut ws);
        let lse = log_sum_exp(&ws.logits);
        total += (lse - ws.logits[examples.label(i) as usize]) as f64;
    }
    total / examples.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::{ModelMeta, Protocol};
    use crate::windowing::Task;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_inputs(n: usize, l: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * l).map(|_| rng.gen_range(-2.0..2.0)).collect()
    }

    proptest::proptest! {
        #[test]
        fn pooling_ignores_order_within_windows(
            values in proptest::collection::vec(-5.0f64..5.0, 2..40),
            swaps in proptest::collection::vec(proptest::bool::ANY, 20),
        ) {
            let pooled = values.len() / 2;
            let mut permuted = values.clone();
            for (q, &swap) in swaps.iter().enumerate().take(pooled) {
                if swap {
                    permuted.swap(2 * q, 2 * q + 1);
                }
            }
            let (mut a, mut b) = (vec![0.0; pooled], vec![0.0; pooled]);
            let mut idx = vec![0; pooled];
            max_pool(&values, 2, &mut a, &mut idx);
            max_pool(&permuted, 2, &mut b, &mut idx);
            proptest::prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_model_outputs_uniform() {
        let arch = Architecture::detector(64).unwrap();
        let p = Params::<f64>::zeros(arch);
        let x = random_inputs(5, 64, 1);
        let probs = forward(&p, &x, 64).unwrap();
        assert!(probs.iter().all(|&v| v == 0.5));
        let labels = [0, 1, 0, 1, 1];
        let (loss, _) = loss_and_grad(&p, &x, 64, &labels).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn rows_are_independent_and_normalized() {
        let arch = Architecture::detector(64).unwrap();
        let p = Params::<f64>::glorot(arch, 3);
        let mut x = random_inputs(4, 64, 2);
        let first: Vec<f64> = x[..64].to_vec();
        x[64..128].copy_from_slice(&first);
        let probs = forward(&p, &x, 64).unwrap();
        assert_eq!(probs[0], probs[2]);
        assert_eq!(probs[1], probs[3]);
        for row in probs.chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&v| v > 0.0 && v < 1.0));
        }
        let single = forward(&p, &x[128..192], 64).unwrap();
        assert_eq!(&single[..], &probs[4..6]);
    }

    #[test]
    fn saturated_logits_give_near_zero_loss() {
        let arch = Architecture::detector(64).unwrap();
        let mut p = Params::<f64>::zeros(arch);
        p.tensor_mut(Tensor::OutBias).copy_from_slice(&[-40.0, 40.0]);
        let x = random_inputs(3, 64, 9);
        let (loss, _) = loss_and_grad(&p, &x, 64, &[1, 1, 1]).unwrap();
        assert!(loss < 1e-15);
    }

    #[test]
    fn shape_and_label_errors() {
        let arch = Architecture::detector(64).unwrap();
        let p = Params::<f32>::zeros(arch);
        let x = vec![0.0f32; 130];
        match forward(&p, &x, 65) {
            Err(ModelError::InputLength { expected, actual }) => {
                assert_eq!((expected, actual), (64, 65));
            }
            other => panic!("unexpected {other:?}"),
        }
        let x = vec![0.0f32; 128];
        assert!(matches!(
            loss_and_grad(&p, &x, 64, &[0, 2]),
            Err(ModelError::NonBinaryLabel(2))
        ));
        assert!(matches!(
            loss_and_grad(&p, &x, 64, &[0]),
            Err(ModelError::LabelCount { .. })
        ));
    }

    #[test]
    fn predictions_follow_bias() {
        let arch = Architecture::detector(64).unwrap();
        let mut w = ModelWeights::<f32>::zeros(arch, ModelMeta::new(1, Task::CognitiveLoad, Protocol::Vanilla));
        let batch = crate::cnn::DenseBatch::new(vec![0.5; 64 * 3], 64, vec![0, 1, 0]).unwrap();
        assert_eq!(predict(&w, &batch).unwrap(), vec![0, 0, 0]);
        w.params.tensor_mut(Tensor::OutBias)[1] = 1.0;
        assert_eq!(predict(&w, &batch).unwrap(), vec![1, 1, 1]);
        let p = predict_proba(&w, &batch).unwrap();
        assert!((p[0] - 1.0 / (1.0 + (-1.0f32).exp())).abs() < 1e-6);
    }
}
