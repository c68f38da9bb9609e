use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::dataset::SessionRecord;
use crate::error::EvalError;

pub const EVENTS_HEADER: &str = "subject,session,survey,question_index,start_epoch_s,end_epoch_s";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseEvent {
    pub subject: String,
    pub session: String,
    pub survey: String,
    pub question_index: u32,
    pub start_epoch_s: f64,
    pub end_epoch_s: f64,
}

/// Parse the response-time CSV. Rejects rows whose end precedes their start.
pub fn read_events<R: BufRead>(input: R) -> Result<Vec<ResponseEvent>, EvalError> {
    let mut lines = input.lines().enumerate();
    let bad = |line: usize, msg: String| EvalError::Events(format!("line {line}: {msg}"));
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == EVENTS_HEADER => {}
        Some((_, Ok(h))) => return Err(bad(1, format!("expected header {EVENTS_HEADER:?}, found {h:?}"))),
        Some((_, Err(e))) => return Err(bad(1, e.to_string())),
        None => return Err(EvalError::Events("empty file".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        let line = line.map_err(|e| bad(n, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(bad(n, format!("expected 6 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, format!("cannot parse {s:?} as a number")));
        let ev = ResponseEvent {
            subject: f[0].to_string(),
            session: f[1].to_string(),
            survey: f[2].to_string(),
            question_index: f[3]
                .parse()
                .map_err(|_| bad(n, format!("cannot parse {:?} as a question index", f[3])))?,
            start_epoch_s: num(f[4])?,
            end_epoch_s: num(f[5])?,
        };
        if !(ev.start_epoch_s.is_finite() && ev.end_epoch_s.is_finite()) {
            return Err(bad(n, "non-finite timestamp".into()));
        }
        if ev.end_epoch_s < ev.start_epoch_s {
            return Err(bad(n, format!("end {} precedes start {}", ev.end_epoch_s, ev.start_epoch_s)));
        }
        out.push(ev);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionDuration {
    pub subject: String,
    pub session: String,
    pub survey: String,
    pub question_index: u32,
    pub seconds: f64,
    pub gamified: bool,
    /// Last question of its survey; left out of every aggregate.
    pub last_in_survey: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionDifference {
    /// 1-based position across all surveys, in survey order of first appearance.
    pub position: usize,
    pub survey: String,
    pub question_index: u32,
    pub plain_mean_s: f64,
    pub gamified_mean_s: f64,
    /// Non-gamified minus gamified.
    pub difference_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseTimeTable {
    pub durations: Vec<QuestionDuration>,
    pub gamified_mean_s: Option<f64>,
    pub plain_mean_s: Option<f64>,
    pub differences: Vec<PositionDifference>,
}

/// Gamified flag per (subject, session) taken from survey recordings.
pub fn gamified_sessions(records: &[SessionRecord]) -> BTreeMap<(String, String), bool> {
    records
        .iter()
        .filter_map(|r| r.gamified.map(|g| ((r.subject_id.clone(), r.session_id.clone()), g)))
        .collect()
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-question durations, per-condition means and the per-position
/// difference series. The last question of each survey is excluded.
pub fn response_time_analysis(
    events: &[ResponseEvent],
    gamified: &BTreeMap<(String, String), bool>,
) -> Result<ResponseTimeTable, EvalError> {
    if events.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut last: BTreeMap<(&str, &str, &str), u32> = BTreeMap::new();
    let mut survey_order: Vec<&str> = Vec::new();
    for e in events {
        if e.end_epoch_s < e.start_epoch_s {
            return Err(EvalError::Events(format!(
                "{}/{}/{} question {}: end precedes start",
                e.subject, e.session, e.survey, e.question_index
            )));
        }
        let k = last.entry((&e.subject, &e.session, &e.survey)).or_insert(e.question_index);
        *k = (*k).max(e.question_index);
        if !survey_order.contains(&e.survey.as_str()) {
            survey_order.push(&e.survey);
        }
    }
    let mut durations = Vec::with_capacity(events.len());
    for e in events {
        let g = *gamified
            .get(&(e.subject.clone(), e.session.clone()))
            .ok_or_else(|| {
                EvalError::Events(format!(
                    "no gamified flag for subject {} session {}",
                    e.subject, e.session
                ))
            })?;
        durations.push(QuestionDuration {
            subject: e.subject.clone(),
            session: e.session.clone(),
            survey: e.survey.clone(),
            question_index: e.question_index,
            seconds: e.end_epoch_s - e.start_epoch_s,
            gamified: g,
            last_in_survey: last[&(e.subject.as_str(), e.session.as_str(), e.survey.as_str())] == e.question_index,
        });
    }
    let kept = || durations.iter().filter(|d| !d.last_in_survey);
    let by_condition = |g: bool| mean(&kept().filter(|d| d.gamified == g).map(|d| d.seconds).collect::<Vec<_>>());

    // (survey rank, question) -> (plain durations, gamified durations)
    let mut positions: BTreeMap<(usize, u32), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for d in kept() {
        let rank = survey_order.iter().position(|s| *s == d.survey).expect("seen");
        let slot = positions.entry((rank, d.question_index)).or_default();
        if d.gamified {
            slot.1.push(d.seconds);
        } else {
            slot.0.push(d.seconds);
        }
    }
    let differences = positions
        .iter()
        .enumerate()
        .filter_map(|(i, ((rank, q), (plain, gam)))| {
            let (p, g) = (mean(plain)?, mean(gam)?);
            Some(PositionDifference {
                position: i + 1,
                survey: survey_order[*rank].to_string(),
                question_index: *q,
                plain_mean_s: p,
                gamified_mean_s: g,
                difference_s: p - g,
            })
        })
        .collect();
    Ok(ResponseTimeTable {
        gamified_mean_s: by_condition(true),
        plain_mean_s: by_condition(false),
        durations,
        differences,
    })
}

impl ResponseTimeTable {
    /// Per-position difference series.
    pub fn write_figure4_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "position,survey,question_index,plain_mean_s,gamified_mean_s,difference_s")?;
        for d in &self.differences {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                d.position, d.survey, d.question_index, d.plain_mean_s, d.gamified_mean_s, d.difference_s
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<ResponseEvent>, EvalError> {
        read_events(text.as_bytes())
    }

    fn flags(pairs: &[(&str, &str, bool)]) -> BTreeMap<(String, String), bool> {
        pairs.iter().map(|(a, b, g)| ((a.to_string(), b.to_string()), *g)).collect()
    }

    #[test]
    fn single_question_mean() {
        let ev = parse(&format!("{EVENTS_HEADER}\n1,s1,A,0,10,14\n1,s1,A,1,14,30\n")).unwrap();
        let t = response_time_analysis(&ev, &flags(&[("1", "s1", true)])).unwrap();
        assert_eq!(t.gamified_mean_s, Some(4.0));
        assert_eq!(t.plain_mean_s, None);
        assert!(t.durations[1].last_in_survey);
    }

    #[test]
    fn last_question_of_each_survey_is_dropped() {
        let text = format!(
            "{EVENTS_HEADER}\n\
             1,s1,A,0,0,5\n1,s1,A,1,5,11\n1,s1,A,2,11,111\n\
             1,s1,B,0,111,117\n1,s1,B,1,117,217\n\
             2,s1,A,0,0,6\n1,s2,A,0,0,6\n1,s2,A,1,6,7\n2,s1,A,1,6,106\n"
        );
        let ev = parse(&text).unwrap();
        let t = response_time_analysis(&ev, &flags(&[("1", "s1", true), ("2", "s1", false), ("1", "s2", false)])).unwrap();
        let kept: Vec<f64> = t.durations.iter().filter(|d| !d.last_in_survey).map(|d| d.seconds).collect();
        assert_eq!(kept, vec![5.0, 6.0, 6.0, 6.0, 6.0]);
        assert_eq!(t.gamified_mean_s, Some((5.0 + 6.0 + 6.0) / 3.0));
        assert_eq!(t.plain_mean_s, Some(6.0));
        // A0 has both conditions; A1 and B0 only gamified.
        assert_eq!(t.differences.len(), 1);
        assert_eq!(t.differences[0].difference_s, 6.0 - 5.0);
    }

    #[test]
    fn validation_errors() {
        assert!(parse(&format!("{EVENTS_HEADER}\n1,s1,A,0,10,9\n")).is_err());
        assert!(parse("subject,session\n").is_err());
        assert!(parse(&format!("{EVENTS_HEADER}\n1,s1,A,x,1,2\n")).is_err());
        let ev = parse(&format!("{EVENTS_HEADER}\n1,s1,A,0,1,2\n")).unwrap();
        assert!(response_time_analysis(&ev, &BTreeMap::new()).is_err());
    }
}
