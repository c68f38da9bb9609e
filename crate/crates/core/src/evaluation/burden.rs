use std::io::Write;

use serde::{Deserialize, Serialize};

use super::calibration::CalibrationResult;
use super::metrics::{positive_percentage, round_half_up};
use crate::cnn::{predict, ModelWeights, Protocol};
use crate::dataset::{natural_cmp, ConditionLabel, SessionRecord};
use crate::error::EvalError;
use crate::protocols::{ModelPool, PoolEntry};
use crate::windowing::{build_unlabeled, Normalize};

/// Percentage of test-step windows the model assigns to class 1, over all
/// `records` together.
pub fn classify_percentage(
    model: &ModelWeights<f32>,
    records: &[&SessionRecord],
    normalize: Normalize,
) -> Result<f64, EvalError> {
    let window_len_s = model.meta.window_len_s;
    let mut pred = Vec::new();
    for r in records {
        let windows = build_unlabeled(r, window_len_s, normalize)?;
        pred.extend(predict(model, &windows)?);
    }
    if pred.is_empty() {
        let names: Vec<String> = records
            .iter()
            .map(|r| format!("{}/{}/{}", r.subject_id, r.session_id, r.condition))
            .collect();
        return Err(EvalError::NoWindows(names.join(", ")));
    }
    positive_percentage(&pred)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyBurdenRow {
    pub subject_id: String,
    pub session_id: String,
    pub gamified: bool,
    /// `None` when no pool model passed calibration.
    pub cogload_pct: Option<f64>,
    pub stress_pct: f64,
    pub calibration_f1: f64,
    pub calibration_stress_pct: Option<f64>,
}

/// Cognitive-load and stress percentages for one survey recording.
pub fn burden_percentages(
    calibration: &CalibrationResult,
    selected: &ModelWeights<f32>,
    stress: &ModelWeights<f32>,
    survey: &SessionRecord,
    calibration_stress_pct: Option<f64>,
    normalize: Normalize,
) -> Result<SurveyBurdenRow, EvalError> {
    let gamified = match (survey.condition, survey.gamified) {
        (ConditionLabel::SurveyGamified, _) => true,
        (ConditionLabel::SurveyPlain, _) => false,
        (_, Some(g)) => g,
        (c, None) => return Err(EvalError::Events(format!("{c} recording is not a survey"))),
    };
    let cogload_pct = if calibration.excluded {
        None
    } else {
        Some(classify_percentage(selected, &[survey], normalize)?)
    };
    Ok(SurveyBurdenRow {
        subject_id: survey.subject_id.clone(),
        session_id: survey.session_id.clone(),
        gamified,
        cogload_pct,
        stress_pct: classify_percentage(stress, &[survey], normalize)?,
        calibration_f1: calibration.calibration_f1,
        calibration_stress_pct,
    })
}

/// Stress model with the best source validation F1 at `window_len_s`; ties go
/// to the lowest `(run_id, fold key)`.
pub fn best_stress_model(pool: &ModelPool, window_len_s: u32) -> Option<&PoolEntry> {
    pool.entries
        .iter()
        .filter(|e| e.metrics.protocol == Protocol::StressSource && e.metrics.window_len_s == window_len_s)
        .filter(|e| e.metrics.source_metrics.is_some_and(|s| s.val_f1.is_finite()))
        .min_by(|a, b| {
            let (va, vb) = (
                a.metrics.source_metrics.unwrap().val_f1,
                b.metrics.source_metrics.unwrap().val_f1,
            );
            vb.total_cmp(&va).then_with(|| a.order_cmp(b))
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageRow {
    pub subject_id: String,
    pub condition: ConditionLabel,
    pub windows: usize,
    pub stress_pct: f64,
}

/// Share of each pilot recording the stress model labels as stressed.
pub fn stress_leakage_check(
    stress: &ModelWeights<f32>,
    pilot: &[SessionRecord],
    normalize: Normalize,
) -> Result<Vec<LeakageRow>, EvalError> {
    let mut rows = Vec::new();
    for r in pilot {
        let windows = build_unlabeled(r, stress.meta.window_len_s, normalize)?;
        if windows.is_empty() {
            return Err(EvalError::NoWindows(format!("{}/{}/{}", r.subject_id, r.session_id, r.condition)));
        }
        let pred = predict(stress, &windows)?;
        rows.push(LeakageRow {
            subject_id: r.subject_id.clone(),
            condition: r.condition,
            windows: windows.len(),
            stress_pct: positive_percentage(&pred)?,
        });
    }
    rows.sort_by(|a, b| natural_cmp(&a.subject_id, &b.subject_id).then(a.condition.cmp(&b.condition)));
    Ok(rows)
}

/// One row per (subject, session). Excluded cognitive-load values are `X`;
/// percentages are rounded half up.
pub fn write_table2_csv<W: Write>(out: &mut W, rows: &[SurveyBurdenRow]) -> std::io::Result<()> {
    let mut rows: Vec<&SurveyBurdenRow> = rows.iter().collect();
    rows.sort_by(|a, b| natural_cmp(&a.subject_id, &b.subject_id).then_with(|| natural_cmp(&a.session_id, &b.session_id)));
    writeln!(
        out,
        "subject,session,calibration_f1,calibration_stress_pct,gamified,cogload_pct,stress_pct"
    )?;
    for r in rows {
        let cal_stress = r
            .calibration_stress_pct
            .map(|v| round_half_up(v).to_string())
            .unwrap_or_default();
        let cog = r
            .cogload_pct
            .map(|v| round_half_up(v).to_string())
            .unwrap_or_else(|| "X".into());
        writeln!(
            out,
            "{},{},{:.2},{},{},{},{}",
            r.subject_id,
            r.session_id,
            r.calibration_f1,
            cal_stress,
            if r.gamified { "yes" } else { "no" },
            cog,
            round_half_up(r.stress_pct)
        )?;
    }
    Ok(())
}
