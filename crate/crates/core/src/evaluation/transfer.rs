use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::stats::{pearson, CorrelationRecord};
use crate::error::EvalError;
use crate::protocols::RunMetrics;

/// Correlations between source (stress) and target (cognitive load) F1 for
/// each window length and for all window lengths pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCorrelations {
    /// `None` for the pooled scope.
    pub window_len_s: Option<u32>,
    pub records: Vec<CorrelationRecord>,
}

fn correlate(entries: &[&RunMetrics]) -> Result<Vec<CorrelationRecord>, EvalError> {
    let target: Vec<f64> = entries.iter().map(|m| m.test_f1).collect();
    let source = |f: fn(&crate::protocols::SourceMetrics) -> f64| -> Vec<f64> {
        entries
            .iter()
            .map(|m| f(m.source_metrics.as_ref().expect("checked above")))
            .collect()
    };
    Ok(vec![
        pearson(&source(|s| s.train_f1), &target)?.named("source_train_f1", "target_test_f1"),
        pearson(&source(|s| s.val_f1), &target)?.named("source_val_f1", "target_test_f1"),
        pearson(&source(|s| s.test_f1), &target)?.named("source_test_f1", "target_test_f1"),
    ])
}

/// Train/validation/test source F1 against target test F1, one entry per
/// fine-tuned model.
pub fn correlate_source_target(metrics: &[RunMetrics]) -> Result<Vec<TransferCorrelations>, EvalError> {
    if metrics.is_empty() {
        return Err(EvalError::Empty);
    }
    for m in metrics {
        if m.source_metrics.is_none() {
            return Err(EvalError::MissingSourceMetrics(format!(
                "run {} fold {} ({} s)",
                m.fold.run_id,
                m.fold.fold_key(),
                m.window_len_s
            )));
        }
    }
    let windows: BTreeSet<u32> = metrics.iter().map(|m| m.window_len_s).collect();
    let mut out = Vec::new();
    for &w in &windows {
        let subset: Vec<&RunMetrics> = metrics.iter().filter(|m| m.window_len_s == w).collect();
        out.push(TransferCorrelations {
            window_len_s: Some(w),
            records: correlate(&subset)?,
        });
    }
    if windows.len() > 1 {
        let all: Vec<&RunMetrics> = metrics.iter().collect();
        out.push(TransferCorrelations {
            window_len_s: None,
            records: correlate(&all)?,
        });
    }
    Ok(out)
}

/// Scatter points behind the source/target comparison.
pub fn write_figure3_csv<W: Write>(out: &mut W, metrics: &[RunMetrics]) -> std::io::Result<()> {
    writeln!(
        out,
        "window_s,run,fold,source_train_f1,source_val_f1,source_test_f1,target_test_f1"
    )?;
    for m in metrics {
        if let Some(s) = &m.source_metrics {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                m.window_len_s,
                m.fold.run_id,
                m.fold.fold_key(),
                s.train_f1,
                s.val_f1,
                s.test_f1,
                m.test_f1
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::Protocol;
    use crate::protocols::{FoldPlan, SourceMetrics};

    fn m(window: u32, run: u32, val: f64, target: f64) -> RunMetrics {
        RunMetrics {
            fold: FoldPlan {
                test_subject: "0".into(),
                validation_subjects: vec![],
                training_subjects: vec![],
                run_id: run,
                seed: 0,
            },
            window_len_s: window,
            protocol: Protocol::WesadPretrained,
            test_f1: target,
            source_metrics: Some(SourceMetrics {
                train_f1: 0.9 - 0.1 * run as f64,
                val_f1: val,
                test_f1: 0.3 + 0.05 * (run % 2) as f64,
            }),
            best_epoch: 1,
            stopped_epoch: 1,
        }
    }

    #[test]
    fn target_equal_to_source_val_gives_unit_r() {
        let ms: Vec<_> = (0..5).map(|i| m(30, i, 0.5 + 0.1 * i as f64, 0.5 + 0.1 * i as f64)).collect();
        let c = correlate_source_target(&ms).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].records[1].r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pooled_scope_added_for_several_windows() {
        let mut ms: Vec<_> = (0..4).map(|i| m(10, i, 0.4 + 0.1 * i as f64, 0.5 + 0.03 * i as f64)).collect();
        ms.extend((0..4).map(|i| m(30, i, 0.4 + 0.07 * i as f64, 0.6 - 0.02 * i as f64)));
        let c = correlate_source_target(&ms).unwrap();
        assert_eq!(c.iter().map(|t| t.window_len_s).collect::<Vec<_>>(), vec![Some(10), Some(30), None]);
        assert_eq!(c[2].records[0].n, 8);
    }

    #[test]
    fn identical_entries_report_zero_variance() {
        let ms: Vec<_> = (0..4).map(|_| m(30, 0, 0.5, 0.5)).collect();
        assert!(matches!(correlate_source_target(&ms), Err(EvalError::ZeroVariance(_))));
    }

    #[test]
    fn missing_source_metrics() {
        let mut x = m(30, 0, 0.5, 0.5);
        x.source_metrics = None;
        assert!(matches!(
            correlate_source_target(&[x]),
            Err(EvalError::MissingSourceMetrics(_))
        ));
    }
}
