//! On-disk dataset formats.
//!
//! Three inputs are understood:
//!
//! - **BVP CSV** in the Empatica E4 layout: line 1 is the start epoch, line 2 the
//!   sampling rate, every following line one sample. A headerless single-column
//!   variant takes both values from the manifest instead.
//! - **Manifest**: a JSON document `{dataset_name, notes?, records: [...]}` that
//!   maps files to `(subject, session, condition)` keys.
//! - **Converter CSV**: `sample_index,bvp,label`, one file per WESAD subject,
//!   64 Hz implied. Contiguous runs of a kept label become session records.
//!
//! Only BVP is read; sample values are kept as recorded.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::DatasetError;

/// Sampling rate of the Empatica E4 BVP channel and of the converter output.
pub const E4_BVP_HZ: f64 = 64.0;

/// A uniformly sampled blood volume pulse recording.
#[derive(Debug, Clone, PartialEq)]
pub struct PpgSignal {
    /// Seconds since the Unix epoch of the first sample.
    pub start_epoch: f64,
    pub fs_hz: f64,
    pub samples: Vec<f32>,
}

impl PpgSignal {
    pub fn new(start_epoch: f64, fs_hz: f64, samples: Vec<f32>) -> Result<Self, String> {
        if !(fs_hz > 0.0 && fs_hz.is_finite()) {
            return Err(format!("sampling rate must be positive, got {fs_hz}"));
        }
        if samples.is_empty() {
            return Err("no samples".to_string());
        }
        Ok(Self {
            start_epoch,
            fs_hz,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs_hz
    }
}

/// Recording condition of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionLabel {
    /// Stroop task.
    CognitiveLoad,
    /// Seated rest, the negative class of the cognitive-load task.
    Baseline,
    Stress,
    Amusement,
    WesadBaseline,
    SurveyGamified,
    SurveyPlain,
}

impl ConditionLabel {
    pub const ALL: [ConditionLabel; 7] = [
        ConditionLabel::CognitiveLoad,
        ConditionLabel::Baseline,
        ConditionLabel::Stress,
        ConditionLabel::Amusement,
        ConditionLabel::WesadBaseline,
        ConditionLabel::SurveyGamified,
        ConditionLabel::SurveyPlain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConditionLabel::CognitiveLoad => "cognitive_load",
            ConditionLabel::Baseline => "baseline",
            ConditionLabel::Stress => "stress",
            ConditionLabel::Amusement => "amusement",
            ConditionLabel::WesadBaseline => "wesad_baseline",
            ConditionLabel::SurveyGamified => "survey_gamified",
            ConditionLabel::SurveyPlain => "survey_plain",
        }
    }

    pub fn is_survey(self) -> bool {
        matches!(self, ConditionLabel::SurveyGamified | ConditionLabel::SurveyPlain)
    }
}

impl fmt::Display for ConditionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConditionLabel {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConditionLabel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| DatasetError::UnknownCondition(s.to_string()))
    }
}

/// One subject × session × condition recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub subject_id: String,
    pub session_id: String,
    pub condition: ConditionLabel,
    pub signal: PpgSignal,
    /// Set for survey sessions only.
    pub gamified: Option<bool>,
}

impl SessionRecord {
    pub fn key(&self) -> RecordKey<'_> {
        RecordKey {
            subject: &self.subject_id,
            session: &self.session_id,
            condition: self.condition,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RecordKey<'a> {
    pub subject: &'a str,
    pub session: &'a str,
    pub condition: ConditionLabel,
}

impl Ord for RecordKey<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        natural_cmp(self.subject, other.subject)
            .then_with(|| natural_cmp(self.session, other.session))
            .then_with(|| self.condition.cmp(&other.condition))
    }
}

impl PartialOrd for RecordKey<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Compare strings treating runs of ASCII digits as numbers, so "2" < "10".
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut a, mut b) = (a.as_bytes(), b.as_bytes());
    loop {
        match (a.first(), b.first()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) if x.is_ascii_digit() && y.is_ascii_digit() => {
                let da = a.iter().take_while(|c| c.is_ascii_digit()).count();
                let db = b.iter().take_while(|c| c.is_ascii_digit()).count();
                let (na, nb) = (trim_zeros(&a[..da]), trim_zeros(&b[..db]));
                let ord = na.len().cmp(&nb.len()).then_with(|| na.cmp(nb)).then(da.cmp(&db));
                if ord != Ordering::Equal {
                    return ord;
                }
                a = &a[da..];
                b = &b[db..];
            }
            (Some(x), Some(y)) => {
                if x != y {
                    return x.cmp(y);
                }
                a = &a[1..];
                b = &b[1..];
            }
        }
    }
}

fn trim_zeros(digits: &[u8]) -> &[u8] {
    let nz = digits.iter().position(|&d| d != b'0').unwrap_or(digits.len());
    &digits[nz..]
}

/// How a BVP file stores its epoch and sampling rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case")]
pub enum BvpLayout {
    /// Two header lines (epoch, rate) followed by samples.
    Empatica,
    /// Samples only; epoch and rate come from the manifest.
    Headerless { fs_hz: f64, start_epoch: f64 },
}

fn read_to_string(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_f64(path: &Path, line: usize, text: &str) -> Result<f64, DatasetError> {
    let t = text.trim();
    // Empatica header lines may repeat the value across columns ("64.0, 64.0").
    let first = t.split(',').next().unwrap_or("").trim();
    first.parse::<f64>().map_err(|_| DatasetError::Parse {
        path: path.to_path_buf(),
        line,
        value: t.to_string(),
    })
}

/// Load an Empatica-layout BVP CSV.
pub fn load_bvp_csv(path: &Path) -> Result<PpgSignal, DatasetError> {
    load_bvp_with_layout(path, BvpLayout::Empatica)
}

pub fn load_bvp_with_layout(path: &Path, layout: BvpLayout) -> Result<PpgSignal, DatasetError> {
    let text = read_to_string(path)?;
    parse_bvp(path, &text, layout)
}

fn parse_bvp(path: &Path, text: &str, layout: BvpLayout) -> Result<PpgSignal, DatasetError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let invalid = |reason: String| DatasetError::Invalid {
        path: path.to_path_buf(),
        reason,
    };
    let (start_epoch, fs_hz) = match layout {
        BvpLayout::Empatica => {
            let (n, epoch) = lines.next().ok_or_else(|| invalid("empty file".into()))?;
            let start = parse_f64(path, n, epoch)?;
            let (n, rate) = lines
                .next()
                .ok_or_else(|| invalid("missing sampling-rate line".into()))?;
            (start, parse_f64(path, n, rate)?)
        }
        BvpLayout::Headerless { fs_hz, start_epoch } => (start_epoch, fs_hz),
    };
    if !(fs_hz > 0.0 && fs_hz.is_finite()) {
        return Err(invalid(format!("sampling rate must be positive, got {fs_hz}")));
    }
    let mut samples = Vec::with_capacity(text.len() / 6);
    for (n, line) in lines {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v = t.parse::<f32>().map_err(|_| DatasetError::Parse {
            path: path.to_path_buf(),
            line: n,
            value: t.to_string(),
        })?;
        samples.push(v);
    }
    PpgSignal::new(start_epoch, fs_hz, samples).map_err(invalid)
}

/// Write a signal in the Empatica layout. Reloading reproduces the samples
/// bit-exactly: `f32` formatting in Rust is shortest-round-trip.
pub fn write_bvp_csv(signal: &PpgSignal, path: &Path) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    writeln!(out, "{:?}", signal.start_epoch).map_err(io_err)?;
    writeln!(out, "{:?}", signal.fs_hz).map_err(io_err)?;
    for s in &signal.samples {
        writeln!(out, "{s}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

#[derive(Debug, Clone, Deserialize)]
struct RawManifest {
    dataset_name: String,
    #[serde(default)]
    notes: String,
    records: Vec<RawRecord>,
}

#[derive(Debug, Clone, Deserialize)]
struct RawRecord {
    path: PathBuf,
    subject: String,
    session: String,
    condition: String,
    #[serde(default)]
    gamified: Option<bool>,
    #[serde(default)]
    fs_hz: Option<f64>,
    #[serde(default)]
    start_epoch: Option<f64>,
}

/// A manifest entry with its path resolved against the manifest directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub path: PathBuf,
    pub subject_id: String,
    pub session_id: String,
    pub condition: ConditionLabel,
    pub gamified: Option<bool>,
    pub layout: BvpLayout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub dataset_name: String,
    pub records: Vec<ManifestRecord>,
    pub notes: String,
}

/// Parse and validate a manifest. Records are returned sorted by
/// `(subject, session, condition)` regardless of listing order.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    let text = read_to_string(path)?;
    let manifest_err = |reason: String| DatasetError::Manifest {
        path: path.to_path_buf(),
        reason,
    };
    let raw: RawManifest = serde_json::from_str(&text).map_err(|e| manifest_err(e.to_string()))?;
    if raw.records.is_empty() {
        return Err(manifest_err("records list is empty".into()));
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut records = Vec::with_capacity(raw.records.len());
    for r in raw.records {
        let condition: ConditionLabel = r.condition.parse()?;
        let gamified = match (condition, r.gamified) {
            (ConditionLabel::SurveyGamified, None | Some(true)) => Some(true),
            (ConditionLabel::SurveyPlain, None | Some(false)) => Some(false),
            (c, Some(g)) if c.is_survey() => {
                return Err(manifest_err(format!(
                    "subject {} session {}: gamified={g} contradicts condition {c}",
                    r.subject, r.session
                )))
            }
            (c, Some(_)) => {
                return Err(manifest_err(format!(
                    "subject {} session {}: gamified flag set on non-survey condition {c}",
                    r.subject, r.session
                )))
            }
            (_, None) => None,
        };
        let layout = match (r.fs_hz, r.start_epoch) {
            (None, None) => BvpLayout::Empatica,
            (Some(fs_hz), epoch) => BvpLayout::Headerless {
                fs_hz,
                start_epoch: epoch.unwrap_or(0.0),
            },
            (None, Some(_)) => {
                return Err(manifest_err(format!(
                    "subject {} session {}: start_epoch given without fs_hz",
                    r.subject, r.session
                )))
            }
        };
        let full = if r.path.is_absolute() {
            r.path
        } else {
            base.join(r.path)
        };
        if !full.is_file() {
            return Err(manifest_err(format!("missing file {}", full.display())));
        }
        records.push(ManifestRecord {
            path: full,
            subject_id: r.subject,
            session_id: r.session,
            condition,
            gamified,
            layout,
        });
    }
    records.sort_by(|a, b| {
        natural_cmp(&a.subject_id, &b.subject_id)
            .then_with(|| natural_cmp(&a.session_id, &b.session_id))
            .then_with(|| a.condition.cmp(&b.condition))
    });
    let mut seen = HashSet::new();
    for r in &records {
        if !seen.insert((&r.subject_id, &r.session_id, r.condition)) {
            return Err(DatasetError::Duplicate {
                subject: r.subject_id.clone(),
                session: r.session_id.clone(),
                condition: r.condition.to_string(),
            });
        }
    }
    Ok(DatasetManifest {
        dataset_name: raw.dataset_name,
        records,
        notes: raw.notes,
    })
}

impl DatasetManifest {
    /// Load every referenced signal, in manifest order.
    pub fn load_records(&self) -> Result<Vec<SessionRecord>, DatasetError> {
        self.records
            .par_iter()
            .map(|r| {
                Ok(SessionRecord {
                    subject_id: r.subject_id.clone(),
                    session_id: r.session_id.clone(),
                    condition: r.condition,
                    signal: load_bvp_with_layout(&r.path, r.layout)?,
                    gamified: r.gamified,
                })
            })
            .collect()
    }
}

/// WESAD protocol labels the converter may emit that carry no class.
pub const IGNORABLE_WESAD_LABELS: [&str; 10] = [
    "transient",
    "not_defined",
    "undefined",
    "meditation",
    "ignore",
    "0",
    "4",
    "5",
    "6",
    "7",
];

fn wesad_condition(label: &str) -> Option<ConditionLabel> {
    match label {
        "baseline" | "1" => Some(ConditionLabel::WesadBaseline),
        "stress" | "2" => Some(ConditionLabel::Stress),
        "amusement" | "3" => Some(ConditionLabel::Amusement),
        _ => None,
    }
}

/// Split a converter CSV stream for one subject into per-segment records.
///
/// A segment ends when the label changes or `sample_index` is not consecutive.
/// Session ids are `<label>-<k>` with `k` counting segments of that label from 1.
pub fn split_wesad_labels<R: BufRead>(
    subject_id: &str,
    reader: R,
) -> Result<Vec<SessionRecord>, DatasetError> {
    let origin = PathBuf::from(format!("<wesad subject {subject_id}>"));
    let mut records = Vec::new();
    let mut counters = [0usize; 3];
    let mut current: Option<(ConditionLabel, u64, Vec<f32>)> = None;
    let mut last_index: Option<u64> = None;

    let mut flush = |seg: Option<(ConditionLabel, u64, Vec<f32>)>, records: &mut Vec<SessionRecord>| {
        if let Some((condition, first, samples)) = seg {
            let slot = match condition {
                ConditionLabel::WesadBaseline => 0,
                ConditionLabel::Stress => 1,
                _ => 2,
            };
            counters[slot] += 1;
            let name = match condition {
                ConditionLabel::WesadBaseline => "baseline",
                ConditionLabel::Stress => "stress",
                _ => "amusement",
            };
            records.push(SessionRecord {
                subject_id: subject_id.to_string(),
                session_id: format!("{name}-{}", counters[slot]),
                condition,
                signal: PpgSignal {
                    start_epoch: first as f64 / E4_BVP_HZ,
                    fs_hz: E4_BVP_HZ,
                    samples,
                },
                gamified: None,
            });
        }
    };

    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: origin.clone(),
            source,
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if n == 1 {
            let header: Vec<&str> = line.split(',').map(str::trim).collect();
            if header != ["sample_index", "bvp", "label"] {
                return Err(DatasetError::Invalid {
                    path: origin,
                    reason: format!("expected header sample_index,bvp,label, got {line:?}"),
                });
            }
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let (Some(idx), Some(bvp), Some(label), None) = (cols.next(), cols.next(), cols.next(), cols.next())
        else {
            return Err(DatasetError::Invalid {
                path: origin,
                reason: format!("line {n}: expected 3 columns"),
            });
        };
        let parse_err = |value: &str| DatasetError::Parse {
            path: origin.clone(),
            line: n,
            value: value.to_string(),
        };
        let index: u64 = idx.parse().map_err(|_| parse_err(idx))?;
        let value: f32 = bvp.parse().map_err(|_| parse_err(bvp))?;
        let label = label.to_ascii_lowercase();
        let contiguous = last_index.is_some_and(|p| p + 1 == index);
        last_index = Some(index);

        match wesad_condition(&label) {
            Some(condition) => match &mut current {
                Some((c, _, samples)) if *c == condition && contiguous => samples.push(value),
                _ => {
                    flush(current.take(), &mut records);
                    current = Some((condition, index, vec![value]));
                }
            },
            None if IGNORABLE_WESAD_LABELS.contains(&label.as_str()) => {
                flush(current.take(), &mut records);
            }
            None => return Err(DatasetError::UnknownLabel { line: n, label }),
        }
    }
    flush(current.take(), &mut records);
    Ok(records)
}

/// Load every `*.csv` in a converter output directory; the file stem is the
/// subject id. Records are sorted by subject, then session.
pub fn load_wesad_dir(dir: &Path) -> Result<Vec<SessionRecord>, DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort_by(|a, b| natural_cmp(&a.to_string_lossy(), &b.to_string_lossy()));
    if files.is_empty() {
        return Err(DatasetError::Invalid {
            path: dir.to_path_buf(),
            reason: "no converter CSV files".into(),
        });
    }
    let per_subject: Vec<Vec<SessionRecord>> = files
        .par_iter()
        .map(|path| {
            let subject = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let file = fs::File::open(path).map_err(|source| DatasetError::Io {
                path: path.clone(),
                source,
            })?;
            split_wesad_labels(&subject, BufReader::new(file)).map_err(|e| match e {
                DatasetError::Invalid { reason, .. } => DatasetError::Invalid {
                    path: path.clone(),
                    reason,
                },
                DatasetError::Parse { line, value, .. } => DatasetError::Parse {
                    path: path.clone(),
                    line,
                    value,
                },
                other => other,
            })
        })
        .collect::<Result<_, _>>()?;
    let mut records: Vec<SessionRecord> = per_subject.into_iter().flatten().collect();
    records.sort_by(|a, b| a.key().cmp(&b.key()));
    Ok(records)
}

/// Write a converter CSV (used for fixtures and by tests).
pub fn write_converter_csv<W: Write>(
    out: &mut W,
    rows: impl IntoIterator<Item = (u64, f32, String)>,
) -> std::io::Result<()> {
    writeln!(out, "sample_index,bvp,label")?;
    for (i, v, l) in rows {
        writeln!(out, "{i},{v},{l}")?;
    }
    Ok(())
}

/// Distinct subject ids in natural order.
pub fn subjects(records: &[SessionRecord]) -> Vec<String> {
    let mut ids: Vec<String> = records.iter().map(|r| r.subject_id.clone()).collect();
    ids.sort_by(|a, b| natural_cmp(a, b));
    ids.dedup();
    ids
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn empatica_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "BVP.csv", "1600000000.0\n64.0\n0.1\n-0.2\n");
        let s = load_bvp_csv(&p).unwrap();
        assert_eq!(s.start_epoch, 1_600_000_000.0);
        assert_eq!(s.fs_hz, 64.0);
        assert_eq!(s.samples, vec![0.1, -0.2]);
    }

    #[test]
    fn crlf_and_repeated_header_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "b.csv", "1600000000.000000\r\n64.000000\r\n1.5\r\n2.5\r\n");
        assert_eq!(load_bvp_csv(&p).unwrap().samples, vec![1.5, 2.5]);
        let p = write(dir.path(), "c.csv", "10.0, 10.0\n64.0, 64.0\n1\n");
        assert_eq!(load_bvp_csv(&p).unwrap().fs_hz, 64.0);
    }

    #[test]
    fn parse_error_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "b.csv", "0\n64\n1.0\n2.0\nabc\n");
        match load_bvp_csv(&p) {
            Err(DatasetError::Parse { line, value, .. }) => {
                assert_eq!(line, 5);
                assert_eq!(value, "abc");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_rate_and_empty_body() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "0\n0\n1.0\n");
        assert!(matches!(load_bvp_csv(&p), Err(DatasetError::Invalid { .. })));
        let p = write(dir.path(), "b.csv", "0\n64\n");
        assert!(matches!(load_bvp_csv(&p), Err(DatasetError::Invalid { .. })));
    }

    #[test]
    fn headerless_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "h.csv", "1\n2\n3\n");
        let s = load_bvp_with_layout(
            &p,
            BvpLayout::Headerless {
                fs_hz: 32.0,
                start_epoch: 5.0,
            },
        )
        .unwrap();
        assert_eq!(s.samples, vec![1.0, 2.0, 3.0]);
        assert_eq!(s.fs_hz, 32.0);
        assert_eq!(s.start_epoch, 5.0);
    }

    #[test]
    fn natural_ordering() {
        let mut v = vec!["10", "2", "1", "s2", "s10", "s1", "02"];
        v.sort_by(|a, b| natural_cmp(a, b));
        assert_eq!(v, vec!["1", "2", "02", "10", "s1", "s2", "s10"]);
    }

    #[test]
    fn condition_round_trip() {
        for c in ConditionLabel::ALL {
            assert_eq!(c.as_str().parse::<ConditionLabel>().unwrap(), c);
        }
        assert!("relaxed".parse::<ConditionLabel>().is_err());
    }

    #[test]
    fn wesad_segments_split_on_label_and_gap() {
        let csv = "sample_index,bvp,label\n\
                   0,1.0,baseline\n1,2.0,baseline\n2,3.0,transient\n\
                   3,4.0,stress\n4,5.0,stress\n5,6.0,meditation\n\
                   6,7.0,amusement\n9,8.0,amusement\n10,9.0,baseline\n";
        let recs = split_wesad_labels("S2", Cursor::new(csv)).unwrap();
        let keys: Vec<(&str, ConditionLabel, usize)> = recs
            .iter()
            .map(|r| (r.session_id.as_str(), r.condition, r.signal.len()))
            .collect();
        assert_eq!(
            keys,
            vec![
                ("baseline-1", ConditionLabel::WesadBaseline, 2),
                ("stress-1", ConditionLabel::Stress, 2),
                ("amusement-1", ConditionLabel::Amusement, 1),
                ("amusement-2", ConditionLabel::Amusement, 1),
                ("baseline-2", ConditionLabel::WesadBaseline, 1),
            ]
        );
        assert_eq!(recs[1].signal.start_epoch, 3.0 / 64.0);
        assert!(recs.iter().all(|r| r.gamified.is_none()));
    }

    #[test]
    fn wesad_unknown_label_is_an_error() {
        let csv = "sample_index,bvp,label\n0,1.0,baseline\n1,1.0,sleepy\n";
        match split_wesad_labels("S2", Cursor::new(csv)) {
            Err(DatasetError::UnknownLabel { line, label }) => {
                assert_eq!(line, 3);
                assert_eq!(label, "sleepy");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wesad_rejects_wrong_header() {
        let csv = "idx,bvp,label\n0,1.0,baseline\n";
        assert!(split_wesad_labels("S2", Cursor::new(csv)).is_err());
    }
}
