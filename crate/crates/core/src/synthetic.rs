//! Seeded synthetic BVP recordings and on-disk fixtures.
//!
//! Signals are a pulse wave (fundamental plus a phase-shifted second harmonic)
//! whose rate drifts slowly, with baseline wander and Gaussian noise. Each
//! condition has its own mean heart rate, so the classes are learnable from
//! the waveform alone. Nothing here is meant to resemble real physiology
//! beyond that.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use crate::dataset::{self, ConditionLabel, PpgSignal, SessionRecord, E4_BVP_HZ};
use crate::seed::derive;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseParams {
    pub heart_rate_hz: f64,
    /// Standard deviation of the slow heart-rate drift, Hz.
    pub rate_drift: f64,
    pub amplitude: f64,
    pub noise_std: f64,
    pub wander: f64,
}

impl PulseParams {
    pub fn at_rate(heart_rate_hz: f64) -> Self {
        Self {
            heart_rate_hz,
            rate_drift: 0.03,
            amplitude: 40.0,
            noise_std: 4.0,
            wander: 10.0,
        }
    }
}

/// Typical mean heart rate per condition (Hz).
pub fn condition_rate(condition: ConditionLabel) -> f64 {
    match condition {
        ConditionLabel::CognitiveLoad => 1.55,
        ConditionLabel::Baseline => 1.05,
        ConditionLabel::Stress => 1.6,
        ConditionLabel::Amusement => 1.1,
        ConditionLabel::WesadBaseline => 1.0,
        ConditionLabel::SurveyGamified | ConditionLabel::SurveyPlain => 1.3,
    }
}

/// A synthetic BVP trace of `seconds` at `fs_hz`.
pub fn bvp(seconds: f64, fs_hz: f64, p: &PulseParams, seed: u64) -> Vec<f32> {
    let n = (seconds * fs_hz).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, p.noise_std.max(1e-12)).expect("finite std");
    let drift_step = Normal::new(0.0, p.rate_drift / fs_hz.sqrt()).expect("finite std");
    let wander_phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut offset = 0.0f64;
    let dt = 1.0 / fs_hz;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        // Mean-reverting drift keeps the rate near its nominal value.
        offset = 0.995 * offset + drift_step.sample(&mut rng);
        let rate = (p.heart_rate_hz + offset).max(0.3);
        phase += std::f64::consts::TAU * rate * dt;
        let pulse = phase.sin() + 0.4 * (2.0 * phase + 0.8).sin();
        let wander = p.wander * (std::f64::consts::TAU * 0.1 * t + wander_phase).sin();
        out.push((p.amplitude * pulse + wander + noise.sample(&mut rng)) as f32);
    }
    out
}

/// One record with condition-typical parameters, shifted per subject.
pub fn record(
    subject: &str,
    session: &str,
    condition: ConditionLabel,
    seconds: f64,
    seed: u64,
) -> SessionRecord {
    let subject_shift = (derive(seed, &["shift", subject]) % 1000) as f64 / 1000.0 * 0.16 - 0.08;
    let params = PulseParams::at_rate(condition_rate(condition) + subject_shift);
    let samples = bvp(
        seconds,
        E4_BVP_HZ,
        &params,
        derive(seed, &["bvp", subject, session, condition.as_str()]),
    );
    SessionRecord {
        subject_id: subject.to_string(),
        session_id: session.to_string(),
        condition,
        signal: PpgSignal {
            start_epoch: 1_600_000_000.0,
            fs_hz: E4_BVP_HZ,
            samples,
        },
        gamified: match condition {
            ConditionLabel::SurveyGamified => Some(true),
            ConditionLabel::SurveyPlain => Some(false),
            _ => None,
        },
    }
}

/// A record whose class is obvious after z-scoring: white noise for the
/// positive class of its task, a clean slow pulse otherwise.
pub fn separable_record(
    subject: &str,
    session: &str,
    condition: ConditionLabel,
    seconds: f64,
    seed: u64,
) -> SessionRecord {
    let mut r = record(subject, session, condition, seconds, seed);
    let positive = matches!(condition, ConditionLabel::CognitiveLoad | ConditionLabel::Stress);
    let params = if positive {
        PulseParams {
            amplitude: 0.0,
            wander: 0.0,
            noise_std: 30.0,
            ..PulseParams::at_rate(1.0)
        }
    } else {
        PulseParams {
            noise_std: 1.0,
            wander: 0.0,
            ..PulseParams::at_rate(1.0)
        }
    };
    r.signal.samples = bvp(
        seconds,
        E4_BVP_HZ,
        &params,
        derive(seed, &["separable", subject, session, condition.as_str()]),
    );
    r
}

/// Separable pilot-style dataset, same layout as [`pilot_records`].
pub fn separable_pilot(subjects: usize, seconds: f64, seed: u64) -> Vec<SessionRecord> {
    (0..subjects)
        .flat_map(|s| {
            let id = s.to_string();
            [
                separable_record(&id, "s1", ConditionLabel::CognitiveLoad, seconds, seed),
                separable_record(&id, "s1", ConditionLabel::Baseline, seconds, seed),
            ]
        })
        .collect()
}

/// Separable WESAD-style dataset: subjects `S2`, `S3`, ... with baseline,
/// stress and amusement sessions.
pub fn separable_wesad(subjects: usize, seconds: f64, seed: u64) -> Vec<SessionRecord> {
    (0..subjects)
        .flat_map(|s| {
            let id = format!("S{}", s + 2);
            [
                separable_record(&id, "baseline-1", ConditionLabel::WesadBaseline, seconds, seed),
                separable_record(&id, "stress-1", ConditionLabel::Stress, seconds, seed),
                separable_record(&id, "amusement-1", ConditionLabel::Amusement, seconds, seed),
            ]
        })
        .collect()
}

/// Pilot-style dataset: subjects `"0"..n`, each with a cognitive-load and a
/// baseline recording in session `s1`.
pub fn pilot_records(subjects: usize, load_s: f64, baseline_s: f64, seed: u64) -> Vec<SessionRecord> {
    (0..subjects)
        .flat_map(|s| {
            let id = s.to_string();
            [
                record(&id, "s1", ConditionLabel::CognitiveLoad, load_s, seed),
                record(&id, "s1", ConditionLabel::Baseline, baseline_s, seed),
            ]
        })
        .collect()
}

/// WESAD-style per-subject segments in protocol order, with the label name
/// the converter would emit.
pub fn wesad_segments(
    subject: &str,
    seconds: [f64; 3],
    seed: u64,
) -> Vec<(&'static str, Vec<f32>)> {
    [
        ("baseline", ConditionLabel::WesadBaseline, seconds[0]),
        ("stress", ConditionLabel::Stress, seconds[1]),
        ("amusement", ConditionLabel::Amusement, seconds[2]),
    ]
    .into_iter()
    .map(|(name, c, s)| (name, record(subject, name, c, s, seed).signal.samples))
    .collect()
}

/// Survey-style sessions: for each subject and session a Stroop recording, a
/// baseline and one survey recording; gamified alternates by subject and session.
pub fn survey_records(
    subjects: &[&str],
    sessions: usize,
    calibration_s: f64,
    survey_s: f64,
    seed: u64,
) -> Vec<SessionRecord> {
    let mut out = Vec::new();
    for (k, subject) in subjects.iter().enumerate() {
        for s in 0..sessions {
            let session = format!("s{}", s + 1);
            let gamified = (k + s) % 2 == 0;
            let survey = if gamified {
                ConditionLabel::SurveyGamified
            } else {
                ConditionLabel::SurveyPlain
            };
            out.push(record(subject, &session, ConditionLabel::CognitiveLoad, calibration_s, seed));
            out.push(record(subject, &session, ConditionLabel::Baseline, calibration_s, seed));
            out.push(record(subject, &session, survey, survey_s, seed));
        }
    }
    out
}

/// Write records as Empatica CSVs plus a `manifest.json` under `dir`.
pub fn write_manifest_fixture(dir: &Path, name: &str, records: &[SessionRecord]) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for r in records {
        let rel = PathBuf::from(&r.subject_id)
            .join(&r.session_id)
            .join(format!("{}.csv", r.condition));
        let full = dir.join(&rel);
        fs::create_dir_all(full.parent().expect("has parent"))?;
        dataset::write_bvp_csv(&r.signal, &full).map_err(std::io::Error::other)?;
        let mut e = json!({
            "path": rel.to_string_lossy(),
            "subject": r.subject_id,
            "session": r.session_id,
            "condition": r.condition.as_str(),
        });
        if let Some(g) = r.gamified {
            e["gamified"] = json!(g);
        }
        entries.push(e);
    }
    let manifest = json!({ "dataset_name": name, "notes": "synthetic fixture", "records": entries });
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Write one converter CSV. A short `transient` gap separates segments.
pub fn write_converter_fixture(
    dir: &Path,
    subject: &str,
    segments: &[(&str, Vec<f32>)],
) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{subject}.csv"));
    let mut out = BufWriter::new(fs::File::create(&path)?);
    let mut index = 0u64;
    let mut rows = Vec::new();
    for (k, (label, samples)) in segments.iter().enumerate() {
        if k > 0 {
            for _ in 0..64 {
                rows.push((index, 0.0f32, "transient".to_string()));
                index += 1;
            }
        }
        for &v in samples {
            rows.push((index, v, label.to_string()));
            index += 1;
        }
    }
    dataset::write_converter_csv(&mut out, rows)?;
    out.flush()?;
    Ok(path)
}

/// Response-time events for the given `(subject, session)` pairs: four surveys
/// of `questions` questions each. Gamified sessions answer slightly faster.
pub fn write_response_times(
    path: &Path,
    sessions: &[(&str, &str, bool)],
    questions: usize,
    seed: u64,
) -> std::io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "subject,session,survey,question_index,start_epoch_s,end_epoch_s")?;
    for &(subject, session, gamified) in sessions {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &["rt", subject, session]));
        let mut t = 1_700_000_000.0f64;
        for survey in ["GRIT", "PANAS", "HAPPINESS", "NFR"] {
            for q in 0..questions {
                let mean: f64 = if gamified { 5.5 } else { 6.0 };
                let d = (mean + rng.gen_range(-1.0..1.0)).max(0.5);
                writeln!(out, "{subject},{session},{survey},{q},{t:.3},{:.3}", t + d)?;
                t += d + 0.25;
            }
        }
    }
    out.flush()
}
