use cogload::cnn::{Architecture, ModelMeta, ModelWeights, Protocol, Tensor};
use cogload::dataset::ConditionLabel;
use cogload::evaluation::{classify_percentage, pearson, select_best, weighted_f1};
use cogload::synthetic::record;
use cogload::windowing::{Normalize, Task};
use proptest::prelude::*;

fn labels(max: usize) -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
    (1..max).prop_flat_map(|n| (prop::collection::vec(0u8..2, n), prop::collection::vec(0u8..2, n)))
}

fn constant_model(positive: bool) -> ModelWeights<f32> {
    let arch = Architecture::detector(640).unwrap();
    let mut w = ModelWeights::zeros(arch, ModelMeta::new(10, Task::CognitiveLoad, Protocol::WesadPretrained));
    let bias = if positive { [0.0, 1.0] } else { [1.0, 0.0] };
    w.params.tensor_mut(Tensor::OutBias).copy_from_slice(&bias);
    w
}

/// Same model with the two output classes swapped.
fn swapped(w: &ModelWeights<f32>) -> ModelWeights<f32> {
    let mut s = w.clone();
    let hidden = w.arch().hidden;
    let out = s.params.tensor_mut(Tensor::OutWeight);
    let (a, b) = out.split_at_mut(hidden);
    a.swap_with_slice(b);
    s.params.tensor_mut(Tensor::OutBias).swap(0, 1);
    s
}

#[test]
fn constant_models_give_full_and_empty_burden() {
    let survey = record("3", "s1", ConditionLabel::SurveyGamified, 40.0, 2);
    let all = classify_percentage(&constant_model(true), &[&survey], Normalize::PerWindowZscore).unwrap();
    let none = classify_percentage(&constant_model(false), &[&survey], Normalize::PerWindowZscore).unwrap();
    assert_eq!((all, none), (100.0, 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn f1_is_invariant_to_swapping_class_names((t, p) in labels(40)) {
        let flip = |v: &[u8]| v.iter().map(|x| 1 - x).collect::<Vec<u8>>();
        let a = weighted_f1(&t, &p).unwrap();
        let b = weighted_f1(&flip(&t), &flip(&p)).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn f1_is_invariant_to_joint_permutation((t, p) in labels(40), seed in any::<u64>()) {
        let n = t.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (i as u64).wrapping_mul(seed | 1).rotate_left(17));
        let t2: Vec<u8> = order.iter().map(|&i| t[i]).collect();
        let p2: Vec<u8> = order.iter().map(|&i| p[i]).collect();
        prop_assert_eq!(weighted_f1(&t, &p).unwrap(), weighted_f1(&t2, &p2).unwrap());
    }

    #[test]
    fn pearson_affine_invariance(
        x in prop::collection::vec(-100.0f64..100.0, 5..30),
        noise in prop::collection::vec(-100.0f64..100.0, 30),
        a in 0.1f64..10.0,
        b in -50.0f64..50.0,
    ) {
        let y: Vec<f64> = x.iter().zip(&noise).map(|(u, v)| u + v).collect();
        let Ok(base) = pearson(&x, &y) else { return Ok(()) };
        let scaled: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        let negated: Vec<f64> = y.iter().map(|v| -v).collect();
        let s = pearson(&x, &scaled).unwrap();
        let n = pearson(&x, &negated).unwrap();
        prop_assert!((s.r - base.r).abs() < 1e-9);
        prop_assert!((n.r + base.r).abs() < 1e-9);
        prop_assert!((s.p - base.p).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&base.p));
    }

    #[test]
    fn calibration_choice_survives_monotone_transforms(
        scores in prop::collection::vec(0.0f64..1.0, 1..20),
    ) {
        let subjects: Vec<String> = (0..scores.len()).map(|i| i.to_string()).collect();
        let keys: Vec<(u32, &str)> = subjects.iter().map(|s| (0, s.as_str())).collect();
        let cubed: Vec<f64> = scores.iter().map(|s| s.powi(3) * 2.0 + 0.5).collect();
        prop_assert_eq!(select_best(&keys, &scores), select_best(&keys, &cubed));
        let best = select_best(&keys, &scores).unwrap();
        prop_assert!(scores.iter().all(|&s| s <= scores[best]));
    }

    #[test]
    fn burden_of_swapped_model_is_the_complement(seed in any::<u64>()) {
        let arch = Architecture::detector(640).unwrap();
        let model = ModelWeights::init(arch, seed, ModelMeta::new(10, Task::CognitiveLoad, Protocol::Vanilla));
        let survey = record("3", "s1", ConditionLabel::SurveyPlain, 30.0, seed);
        let a = classify_percentage(&model, &[&survey], Normalize::PerWindowZscore).unwrap();
        let b = classify_percentage(&swapped(&model), &[&survey], Normalize::PerWindowZscore).unwrap();
        prop_assert!((a + b - 100.0).abs() < 1e-9, "{} + {}", a, b);
    }
}
