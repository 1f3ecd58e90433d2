//! `report`: merge simulate summaries into long-format rows.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use modsel_core::region::{format_num, parse_num};
use serde_json::Value;

use crate::config::{CfgResult, ConfigError};
use crate::simulate::COLUMNS;

pub const METRICS: [&str; 3] = ["coverage", "width", "width_ratio"];

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    /// `(value, se)` per metric, in [`METRICS`] order.
    pub metrics: [(f64, Option<f64>); 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub setting: String,
    pub alpha: Option<f64>,
    pub rows: Vec<SummaryRow>,
}

fn parse_cell(s: &str, line: usize) -> CfgResult<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    parse_num(s).map(Some).ok_or_else(|| ConfigError::at(line, format!("not a number: {s:?}")))
}

pub fn parse_csv_summary(text: &str, fallback: &str) -> CfgResult<Summary> {
    let mut setting = None;
    let mut alpha = None;
    let mut body_start = 0;
    for (i, l) in text.lines().enumerate() {
        let Some(h) = l.strip_prefix('#') else {
            body_start = i;
            break;
        };
        if let Some((k, v)) = h.trim().split_once('=') {
            match k.trim() {
                "setting" => setting = Some(v.trim().to_string()),
                "alpha" => alpha = Some(parse_cell(v.trim(), i + 1)?.unwrap_or(f64::NAN)),
                _ => {}
            }
        }
        body_start = i + 1;
    }
    let body: String = text.lines().skip(body_start).collect::<Vec<_>>().join("\n");
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(body.as_bytes());
    let mut rows = Vec::new();
    let mut header_seen = false;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ConfigError::new(format!("csv: {e}")))?;
        let line = body_start + rec.position().map_or(1, |p| p.line() as usize);
        let cells: Vec<&str> = rec.iter().map(str::trim).collect();
        if !header_seen {
            if cells != COLUMNS {
                return Err(ConfigError::at(line, format!("unexpected summary header {cells:?}")));
            }
            header_seen = true;
            continue;
        }
        if cells.len() != COLUMNS.len() {
            return Err(ConfigError::at(line, format!("expected {} fields, found {}", COLUMNS.len(), cells.len())));
        }
        let pair = |v: usize, se: usize| -> CfgResult<(f64, Option<f64>)> {
            let value = parse_cell(cells[v], line)?.ok_or_else(|| ConfigError::at(line, "missing value"))?;
            Ok((value, parse_cell(cells[se], line)?))
        };
        rows.push(SummaryRow { method: cells[0].to_string(), metrics: [pair(1, 2)?, pair(3, 4)?, pair(5, 6)?] });
    }
    if !header_seen {
        return Err(ConfigError::at(body_start + 1, "missing summary header"));
    }
    Ok(Summary { setting: setting.unwrap_or_else(|| fallback.to_string()), alpha, rows })
}

pub fn parse_json_summary(text: &str, fallback: &str) -> CfgResult<Summary> {
    let v: Value = serde_json::from_str(text).map_err(|e| ConfigError::at(e.line(), format!("invalid JSON: {e}")))?;
    let bad = |m: &str| ConfigError::new(format!("summary schema: {m}"));
    let num = |x: &Value| -> Option<f64> {
        match x {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => parse_num(s),
            _ => None,
        }
    };
    let rows = v
        .get("rows")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing rows"))?
        .iter()
        .map(|r| {
            let method = r.get("method").and_then(Value::as_str).ok_or_else(|| bad("row without method"))?;
            let mut metrics = [(0.0, None); 3];
            for (slot, name) in metrics.iter_mut().zip(METRICS) {
                let value = r.get(name).and_then(num).ok_or_else(|| bad(&format!("row without {name}")))?;
                *slot = (value, r.get(format!("{name}_se")).and_then(num));
            }
            Ok(SummaryRow { method: method.to_string(), metrics })
        })
        .collect::<CfgResult<Vec<_>>>()?;
    Ok(Summary {
        setting: v.get("setting").and_then(Value::as_str).unwrap_or(fallback).to_string(),
        alpha: v.get("alpha").and_then(num),
        rows,
    })
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let stem = path.file_stem().map_or_else(|| "summary".into(), |s| s.to_string_lossy().into_owned());
    let parsed = if text.trim_start().starts_with('{') {
        parse_json_summary(&text, &stem)
    } else {
        parse_csv_summary(&text, &stem)
    };
    parsed.map_err(|e| anyhow::Error::new(ConfigError { msg: format!("{}: {}", path.display(), e.msg), ..e }))
}

/// Long-format rows `(setting, method, metric, value, se)`.
pub fn long_rows(summaries: &[Summary]) -> Vec<[String; 5]> {
    let mut out = Vec::new();
    for s in summaries {
        for r in &s.rows {
            for (name, (v, se)) in METRICS.iter().zip(r.metrics) {
                out.push([
                    s.setting.clone(),
                    r.method.clone(),
                    name.to_string(),
                    format_num(v),
                    se.map(format_num).unwrap_or_default(),
                ]);
            }
        }
    }
    let mut alphas: Vec<f64> = summaries.iter().filter_map(|s| s.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    if alphas.len() > 1 {
        let list: Vec<String> = alphas.into_iter().map(format_num).collect();
        out.push([
            "WARNING".into(),
            String::new(),
            "alpha".into(),
            format!("conflicting alpha: {}", list.join(" ")),
            String::new(),
        ]);
    }
    out
}

/// Human-readable merged table.
pub fn merged_table(summaries: &[Summary]) -> String {
    let mut s = format!("{:<28} {:<14} {:>18} {:>18} {:>18}\n", "setting", "method", "coverage", "width", "width_ratio");
    let cell = |(v, se): (f64, Option<f64>)| match se {
        Some(e) => format!("{v:.4} ({e:.4})"),
        None => format_num(v),
    };
    for sm in summaries {
        for r in &sm.rows {
            s.push_str(&format!(
                "{:<28} {:<14} {:>18} {:>18} {:>18}\n",
                sm.setting,
                r.method,
                cell(r.metrics[0]),
                cell(r.metrics[1]),
                cell(r.metrics[2])
            ));
        }
    }
    s
}

pub fn run(paths: &[PathBuf], out: &Path) -> Result<()> {
    let summaries = paths.iter().map(|p| read_summary(p)).collect::<Result<Vec<_>>>()?;
    let rows = long_rows(&summaries);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["setting", "method", "metric", "value", "se"])?;
    for r in &rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    std::fs::write(out, bytes).with_context(|| format!("writing {}", out.display()))?;
    print!("{}", merged_table(&summaries));
    if let Some(r) = rows.iter().find(|r| r[0] == "WARNING") {
        eprintln!("warning: {}", r[3]);
    }
    Ok(())
}
