use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use cogload::cnn::Protocol;
use cogload::dataset::{load_manifest, load_wesad_dir, natural_cmp, ConditionLabel, SessionRecord};
use cogload::evaluation::{
    best_stress_model, burden_percentages, calibrate_subject, classify_percentage, correlate_source_target,
    read_events, response_time_analysis, stress_leakage_check, write_figure3_csv, write_table2_csv,
    CalibrationResult, ResponseTimeTable, SurveyBurdenRow,
};
use cogload::protocols::{
    aggregate, pretrain_wesad, read_ledger, run_finetune, run_vanilla, write_ledger, AggregateTable, ProtocolOutput,
};
use serde::Serialize;
use serde_json::json;
use tracing::{info, warn};

use crate::config::{Input, RunConfig};
use crate::output::Staging;

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Ctx {
    fn hash(&self) -> String {
        self.cfg.hash()
    }

    fn stage(&self, command: &str) -> Result<Staging> {
        Staging::new(&self.out, command, &self.hash())
    }

    fn report_json<T: Serialize>(&self, body: T) -> Result<Vec<u8>> {
        let v = json!({
            "tool": format!("cogload {}", env!("CARGO_PKG_VERSION")),
            "config_hash": self.hash(),
            "report": body,
        });
        let mut s = serde_json::to_string_pretty(&v)?;
        s.push('\n');
        Ok(s.into_bytes())
    }
}

fn load_manifest_records(path: &Path) -> Result<Vec<SessionRecord>> {
    let m = load_manifest(path)?;
    info!(dataset = %m.dataset_name, records = m.records.len(), "loading manifest");
    Ok(m.load_records()?)
}

fn pilot(cfg: &RunConfig) -> Result<Vec<SessionRecord>> {
    load_manifest_records(cfg.pilot_manifest.as_deref().expect("validated"))
}

fn write_ledger_file(stage: &Staging, dir: &str, output: &ProtocolOutput) -> Result<()> {
    let base = stage.path(dir);
    stage.write_text(&format!("{dir}/ledger.jsonl"), |b| write_ledger(b, output, Some(&base)))
}

fn write_table1(stage: &Staging, rel: &str, table: &AggregateTable) -> Result<()> {
    stage.write_text(rel, |b| table.write_csv(b))
}

pub fn vanilla(ctx: &Ctx) -> Result<()> {
    ctx.cfg.validate(&[Input::Pilot])?;
    let pilot = pilot(&ctx.cfg)?;
    let stage = ctx.stage("vanilla")?;
    let pc = ctx.cfg.protocol(Some(stage.path("vanilla/weights")));
    let mut all = ProtocolOutput::default();
    for &w in &ctx.cfg.window_lens {
        info!(window = w, runs = ctx.cfg.runs, "vanilla training");
        all.merge(run_vanilla(&pilot, w, ctx.cfg.runs, &pc, ctx.cfg.master_seed)?);
    }
    let table = aggregate(&all.pool.metrics())?;
    write_ledger_file(&stage, "vanilla", &all)?;
    write_table1(&stage, "table1_vanilla.csv", &table)?;
    stage.write_raw(
        "vanilla/summary.json",
        &ctx.report_json(json!({
            "models": all.pool.len(),
            "failed_runs": all.failures.len(),
            "std": "sample (n - 1)",
            "aggregate": table,
        }))?,
    )?;
    stage.commit()?;
    Ok(())
}

/// Stress models for one window length, trained once per configuration and
/// cached under `<out>/cache/pretrain-<key>`.
fn pretrained(ctx: &Ctx, wesad: &[SessionRecord], window_len_s: u32) -> Result<(ProtocolOutput, PathBuf)> {
    let key = ctx.cfg.pretrain_key(window_len_s);
    let cache = ctx.out.join("cache");
    let dir = cache.join(format!("pretrain-{}", &key[..16]));
    let ledger = dir.join("ledger.jsonl");
    if ledger.is_file() {
        info!(window = window_len_s, cache = %dir.display(), "reusing pretrained models");
        let f = fs::File::open(&ledger)?;
        return Ok((read_ledger(BufReader::new(f), &dir)?, dir));
    }
    let tmp = cache.join(format!(".tmp-{}", &key[..16]));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    info!(window = window_len_s, runs = ctx.cfg.runs, "pretraining on WESAD");
    let pc = ctx.cfg.protocol(Some(tmp.join("weights")));
    let result = pretrain_wesad(wesad, window_len_s, ctx.cfg.runs, &pc, ctx.cfg.master_seed);
    let out = match result {
        Ok(o) => o,
        Err(e) => {
            let _ = fs::remove_dir_all(&tmp);
            return Err(e.into());
        }
    };
    let mut buf = Vec::new();
    write_ledger(&mut buf, &out, Some(&tmp))?;
    fs::write(tmp.join("ledger.jsonl"), buf)?;
    fs::rename(&tmp, &dir)?;
    let f = fs::File::open(&ledger)?;
    Ok((read_ledger(BufReader::new(f), &dir)?, dir))
}

fn wesad(cfg: &RunConfig) -> Result<Vec<SessionRecord>> {
    let dir = cfg.wesad_dir.as_deref().expect("validated");
    let records = load_wesad_dir(dir)?;
    info!(records = records.len(), "loaded WESAD");
    Ok(records)
}

fn source_rows(out: &ProtocolOutput) -> Vec<serde_json::Value> {
    out.pool
        .entries
        .iter()
        .map(|e| {
            json!({
                "run": e.metrics.fold.run_id,
                "window_s": e.metrics.window_len_s,
                "test_subject": e.metrics.fold.test_subject,
                "validation_subjects": e.metrics.fold.validation_subjects,
                "source": e.metrics.source_metrics,
            })
        })
        .collect()
}

pub fn pretrain(ctx: &Ctx) -> Result<()> {
    ctx.cfg.validate(&[Input::Wesad])?;
    let wesad = wesad(&ctx.cfg)?;
    let mut models = Vec::new();
    let mut failed = 0;
    for &w in &ctx.cfg.window_lens {
        let (out, _) = pretrained(ctx, &wesad, w)?;
        failed += out.failures.len();
        models.extend(source_rows(&out));
    }
    let stage = ctx.stage("pretrain")?;
    stage.write_raw(
        "pretrain_summary.json",
        &ctx.report_json(json!({ "models": models, "failed_runs": failed }))?,
    )?;
    stage.commit()?;
    Ok(())
}

pub fn finetune(ctx: &Ctx) -> Result<()> {
    ctx.cfg.validate(&[Input::Pilot, Input::Wesad])?;
    let pilot = pilot(&ctx.cfg)?;
    let wesad = wesad(&ctx.cfg)?;
    let mut sources = Vec::new();
    for &w in &ctx.cfg.window_lens {
        sources.push(pretrained(ctx, &wesad, w)?.0);
    }
    drop(wesad);
    let stage = ctx.stage("finetune")?;
    let pc = ctx.cfg.protocol(Some(stage.path("wesad_pretrained/weights")));
    let mut all = ProtocolOutput::default();
    for (src, &w) in sources.iter().zip(&ctx.cfg.window_lens) {
        info!(window = w, runs = ctx.cfg.runs, "fine-tuning");
        all.merge(run_finetune(&src.pool, &pilot, w, ctx.cfg.runs, &pc, ctx.cfg.master_seed)?);
    }
    let metrics = all.pool.metrics();
    let table = aggregate(&metrics)?;
    write_ledger_file(&stage, "wesad_pretrained", &all)?;
    write_table1(&stage, "table1_pretrained.csv", &table)?;
    stage.write_text("figure3.csv", |b| write_figure3_csv(b, &metrics))?;
    let correlations = match correlate_source_target(&metrics) {
        Ok(c) => json!(c),
        Err(e) => {
            warn!(error = %e, "source/target correlation undefined");
            json!({ "error": e.to_string() })
        }
    };
    stage.write_raw(
        "correlations.json",
        &ctx.report_json(json!({
            "correlations": correlations,
            "p_value": "two-sided, Student t with n - 2 df",
        }))?,
    )?;
    stage.write_raw(
        "wesad_pretrained/summary.json",
        &ctx.report_json(json!({
            "models": all.pool.len(),
            "failed_runs": all.failures.len(),
            "std": "sample (n - 1)",
            "aggregate": table,
        }))?,
    )?;
    stage.commit()?;
    Ok(())
}

fn read_pool(out: &Path, protocol: Protocol) -> Result<ProtocolOutput> {
    let dir = out.join(protocol.as_str());
    let ledger = dir.join("ledger.jsonl");
    let f = fs::File::open(&ledger).with_context(|| {
        format!(
            "no {protocol} model pool at {}; run the {} command first",
            ledger.display(),
            if protocol == Protocol::Vanilla { "vanilla" } else { "finetune" }
        )
    })?;
    Ok(read_ledger(BufReader::new(f), &dir)?)
}

fn response_table(cfg: &RunConfig) -> Result<ResponseTimeTable> {
    let survey = load_manifest(cfg.survey_manifest.as_deref().expect("validated"))?;
    let flags: BTreeMap<(String, String), bool> = survey
        .records
        .iter()
        .filter_map(|r| r.gamified.map(|g| ((r.subject_id.clone(), r.session_id.clone()), g)))
        .collect();
    let path = cfg.response_times.as_deref().expect("validated");
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let events = read_events(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?;
    Ok(response_time_analysis(&events, &flags)?)
}

fn write_response_times(ctx: &Ctx, stage: &Staging, table: &ResponseTimeTable) -> Result<()> {
    stage.write_text("figure4.csv", |b| table.write_figure4_csv(b))?;
    stage.write_raw(
        "response_times.json",
        &ctx.report_json(json!({
            "gamified_mean_s": table.gamified_mean_s,
            "plain_mean_s": table.plain_mean_s,
            "excluded": "last question of each survey",
            "durations": table.durations,
        }))?,
    )
}

#[derive(Serialize)]
struct SessionReport {
    calibration: CalibrationResult,
    burden: SurveyBurdenRow,
}

pub fn survey(ctx: &Ctx) -> Result<()> {
    let mut needs = vec![Input::Survey, Input::Wesad];
    if ctx.cfg.pilot_manifest.is_some() {
        needs.push(Input::Pilot);
    }
    if ctx.cfg.response_times.is_some() {
        needs.push(Input::ResponseTimes);
    }
    ctx.cfg.validate(&needs)?;
    let records = load_manifest_records(ctx.cfg.survey_manifest.as_deref().expect("validated"))?;
    let window = ctx.cfg.calibration_window_s;
    let pool = read_pool(&ctx.out, ctx.cfg.calibration_protocol)?
        .pool
        .select(ctx.cfg.calibration_protocol, window);
    if pool.is_empty() {
        bail!("the {} pool has no {window} s models", ctx.cfg.calibration_protocol);
    }
    let wesad = wesad(&ctx.cfg)?;
    let (sources, _) = pretrained(ctx, &wesad, ctx.cfg.stress_window_s)?;
    drop(wesad);
    let stress_entry = best_stress_model(&sources.pool, ctx.cfg.stress_window_s)
        .ok_or_else(|| anyhow!("no {} s stress model available", ctx.cfg.stress_window_s))?;
    let stress = stress_entry.load()?;
    info!(
        run = stress_entry.metrics.fold.run_id,
        val_f1 = stress_entry.metrics.source_metrics.map(|s| s.val_f1),
        "selected stress model"
    );

    let mut sessions: Vec<((String, String), Vec<&SessionRecord>)> = Vec::new();
    for r in &records {
        let key = (r.subject_id.clone(), r.session_id.clone());
        match sessions.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => sessions.push((key, vec![r])),
        }
    }
    sessions.sort_by(|a, b| natural_cmp(&a.0 .0, &b.0 .0).then_with(|| natural_cmp(&a.0 .1, &b.0 .1)));

    let mut reports = Vec::new();
    for ((subject, session), rs) in &sessions {
        let find = |c: ConditionLabel| rs.iter().copied().find(|r| r.condition == c);
        let (Some(load), Some(baseline), Some(survey)) = (
            find(ConditionLabel::CognitiveLoad),
            find(ConditionLabel::Baseline),
            rs.iter().copied().find(|r| r.condition.is_survey()),
        ) else {
            warn!(%subject, %session, "session lacks calibration or survey recordings; skipped");
            continue;
        };
        let cal = calibrate_subject(&pool, load, baseline, window, ctx.cfg.normalize)?;
        let selected = pool.entries[cal.selected].load()?;
        let cal_stress = classify_percentage(&stress, &[load, baseline], ctx.cfg.normalize)?;
        let row = burden_percentages(&cal, &selected, &stress, survey, Some(cal_stress), ctx.cfg.normalize)?;
        info!(%subject, %session, f1 = cal.calibration_f1, excluded = cal.excluded, "calibrated");
        reports.push(SessionReport {
            calibration: cal,
            burden: row,
        });
    }
    if reports.is_empty() {
        bail!("no survey session has both calibration recordings and a survey recording");
    }
    let kept = reports.iter().filter(|r| !r.calibration.excluded).count();

    let stage = ctx.stage("survey")?;
    let rows: Vec<SurveyBurdenRow> = reports.iter().map(|r| r.burden.clone()).collect();
    stage.write_text("table2.csv", |b| write_table2_csv(b, &rows))?;
    let mut leakage = None;
    if ctx.cfg.pilot_manifest.is_some() {
        let rows = stress_leakage_check(&stress, &pilot(&ctx.cfg)?, ctx.cfg.normalize)?;
        stage.write_text("leakage.csv", |b| {
            use std::io::Write;
            writeln!(b, "subject,condition,windows,stress_pct")?;
            for r in &rows {
                writeln!(b, "{},{},{},{}", r.subject_id, r.condition, r.windows, r.stress_pct)?;
            }
            Ok(())
        })?;
        leakage = Some(rows);
    }
    if ctx.cfg.response_times.is_some() {
        write_response_times(ctx, &stage, &response_table(&ctx.cfg)?)?;
    }
    stage.write_raw(
        "survey.json",
        &ctx.report_json(json!({
            "calibration_protocol": ctx.cfg.calibration_protocol,
            "pool_size": pool.len(),
            "sessions": reports,
            "participants_above_threshold": kept,
            "stress_model": {
                "run": stress_entry.metrics.fold.run_id,
                "source": stress_entry.metrics.source_metrics,
            },
            "leakage": leakage,
        }))?,
    )?;
    stage.commit()?;
    Ok(())
}

pub fn response_times(ctx: &Ctx) -> Result<()> {
    ctx.cfg.validate(&[Input::Survey, Input::ResponseTimes])?;
    let table = response_table(&ctx.cfg)?;
    let stage = ctx.stage("response-times")?;
    write_response_times(ctx, &stage, &table)?;
    stage.commit()?;
    Ok(())
}

pub fn report(ctx: &Ctx) -> Result<()> {
    ctx.cfg.validate(&[])?;
    let mut metrics = Vec::new();
    for p in [Protocol::Vanilla, Protocol::WesadPretrained] {
        if ctx.out.join(p.as_str()).join("ledger.jsonl").is_file() {
            metrics.extend(read_pool(&ctx.out, p)?.pool.metrics());
        }
    }
    if metrics.is_empty() {
        bail!("no ledgers under {}; run vanilla or finetune first", ctx.out.display());
    }
    let table = aggregate(&metrics)?;
    let gaps: Vec<_> = ctx
        .cfg
        .window_lens
        .iter()
        .filter_map(|&w| {
            let col = |p| table.columns.iter().find(|c| c.protocol == p && c.window_len_s == w);
            let (v, t) = (col(Protocol::Vanilla)?, col(Protocol::WesadPretrained)?);
            Some(json!({ "window_s": w, "vanilla": v.mean, "wesad_pretrained": t.mean, "gap": t.mean - v.mean }))
        })
        .collect();
    let stage = ctx.stage("report")?;
    write_table1(&stage, "table1.csv", &table)?;
    stage.write_raw("report.json", &ctx.report_json(json!({ "columns": table.columns, "gaps": gaps }))?)?;
    stage.commit()?;
    Ok(())
}
