//! `predict`: calibrate externally pretrained models read from csv files.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use modsel_core::region::format_num;
use modsel_core::{MethodOptions, ModelClass, ModelEvaluations, Responses, Session};
use serde::Serialize;

use crate::config::{CfgResult, ConfigDoc, ConfigError, InvariantError, OutputFormat, RunConfig};

#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    /// `(line, cells)`
    pub rows: Vec<(usize, Vec<String>)>,
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_table(&text)?)
}

pub fn parse_table(text: &str) -> CfgResult<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut headers: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            ConfigError::at(e.position().map_or(1, |p| p.line() as usize), format!("csv: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let cells: Vec<String> = rec.iter().map(|c| c.trim().to_string()).collect();
        if cells.iter().all(String::is_empty) {
            continue;
        }
        match &headers {
            None => headers = Some(cells),
            Some(h) => {
                if cells.len() != h.len() {
                    return Err(ConfigError::at(line, format!("expected {} fields, found {}", h.len(), cells.len())));
                }
                rows.push((line, cells));
            }
        }
    }
    let headers = headers.ok_or_else(|| ConfigError::at(1, "missing header row"))?;
    Ok(Table { headers, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Pred,
    Sigma,
    Qlo,
    Qhi,
    Prob(usize),
}

fn parse_model_column(name: &str) -> Option<(usize, Kind)> {
    let rest = name.strip_prefix('m')?;
    let (idx, kind) = rest.split_once('_')?;
    let k: usize = idx.parse().ok()?;
    let kind = match kind {
        "pred" => Kind::Pred,
        "sigma" => Kind::Sigma,
        "qlo" => Kind::Qlo,
        "qhi" => Kind::Qhi,
        p => Kind::Prob(p.strip_prefix('p')?.parse().ok()?),
    };
    Some((k, kind))
}

/// Calibration responses plus one model class per test row.
#[derive(Debug, Clone)]
pub struct PredictInput {
    pub responses: Responses,
    pub tests: Vec<(usize, ModelClass)>,
}

#[derive(Clone, Copy)]
enum Col {
    Data(usize),
    Models(usize),
}

/// Joins the data and model tables row by row and checks the schema.
pub fn assemble(data: &Table, models: &Table) -> CfgResult<PredictInput> {
    if data.rows.len() != models.rows.len() {
        let line = data.rows.len().min(models.rows.len()) + 2;
        return Err(ConfigError::at(
            line,
            format!("data has {} rows but models has {}", data.rows.len(), models.rows.len()),
        ));
    }
    let mut cols: BTreeMap<String, Col> = BTreeMap::new();
    for (which, t) in [(0, data), (1, models)] {
        for (j, h) in t.headers.iter().enumerate() {
            let known = h == "y" || h == "y_label" || h == "role" || parse_model_column(h).is_some();
            if !known && !h.starts_with('x') {
                return Err(ConfigError::at(1, format!("unexpected column {h:?}")));
            }
            if known && cols.contains_key(h) {
                if which == 1 && h != "role" {
                    return Err(ConfigError::at(1, format!("column {h:?} appears in both files")));
                }
                continue;
            }
            cols.insert(h.clone(), if which == 0 { Col::Data(j) } else { Col::Models(j) });
        }
    }
    let cell = |c: Col, r: usize| -> (&str, usize) {
        match c {
            Col::Data(j) => (data.rows[r].1[j].as_str(), data.rows[r].0),
            Col::Models(j) => (models.rows[r].1[j].as_str(), models.rows[r].0),
        }
    };
    let (ycol, labels) = match (cols.get("y"), cols.get("y_label")) {
        (Some(&c), None) => (c, false),
        (None, Some(&c)) => (c, true),
        (Some(_), Some(_)) => return Err(ConfigError::at(1, "both y and y_label present")),
        (None, None) => return Err(ConfigError::at(1, "missing y or y_label column")),
    };
    let role = cols.get("role").copied();

    let mut spec: BTreeMap<usize, BTreeMap<Kind, Col>> = BTreeMap::new();
    for (h, &c) in &cols {
        if let Some((k, kind)) = parse_model_column(h) {
            spec.entry(k).or_default().insert(kind, c);
        }
    }
    if spec.is_empty() {
        return Err(ConfigError::at(1, "no model columns"));
    }
    if spec.keys().copied().ne(0..spec.len()) {
        return Err(ConfigError::at(1, "model indices must run 0..K-1 without gaps"));
    }
    let kinds: Vec<Kind> = spec[&0].keys().copied().collect();
    if spec.values().any(|m| m.keys().copied().ne(kinds.iter().copied())) {
        return Err(ConfigError::at(1, "every model needs the same columns"));
    }
    let probs = kinds.iter().filter(|k| matches!(k, Kind::Prob(_))).count();
    let family_ok = match kinds.as_slice() {
        [Kind::Pred] | [Kind::Pred, Kind::Sigma] | [Kind::Qlo, Kind::Qhi] => !labels,
        _ => {
            labels
                && probs == kinds.len()
                && probs >= 1
                && kinds.iter().enumerate().all(|(i, k)| *k == Kind::Prob(i))
        }
    };
    if !family_ok {
        return Err(ConfigError::at(1, "model columns do not form a known score family for this response column"));
    }

    let mut calib_rows = Vec::new();
    let mut test_rows = Vec::new();
    for r in 0..data.rows.len() {
        let (y, line) = cell(ycol, r);
        let is_test = match role.map(|c| cell(c, r).0) {
            Some("TEST") => true,
            Some("" | "CALIB") | None => y.is_empty() || y == "TEST",
            Some(other) => return Err(ConfigError::at(line, format!("unknown role {other:?}"))),
        };
        if is_test {
            test_rows.push(r);
        } else {
            calib_rows.push(r);
        }
    }
    if calib_rows.is_empty() || test_rows.is_empty() {
        return Err(ConfigError::at(1, "need at least one calibration row and one TEST row"));
    }

    let num = |c: Col, r: usize| -> CfgResult<f64> {
        let (v, line) = cell(c, r);
        v.parse::<f64>().map_err(|_| ConfigError::at(line, format!("not a number: {v:?}")))
    };
    let responses = if labels {
        let mut v = Vec::new();
        for &r in &calib_rows {
            let (s, line) = cell(ycol, r);
            v.push(s.parse::<usize>().map_err(|_| ConfigError::at(line, format!("bad label {s:?}")))?);
        }
        Responses::Labels(v)
    } else {
        Responses::Real(calib_rows.iter().map(|&r| num(ycol, r)).collect::<CfgResult<_>>()?)
    };

    let column = |m: &BTreeMap<Kind, Col>, kind: Kind, rows: &[usize]| -> CfgResult<Vec<f64>> {
        rows.iter().map(|&r| num(m[&kind], r)).collect()
    };
    let mut tests = Vec::new();
    for &t in &test_rows {
        let mut evals = Vec::new();
        for m in spec.values() {
            let one = [t];
            let e = match kinds.as_slice() {
                [Kind::Pred] => ModelEvaluations::Residual {
                    pred_calib: column(m, Kind::Pred, &calib_rows)?,
                    pred_test: column(m, Kind::Pred, &one)?[0],
                },
                [Kind::Pred, Kind::Sigma] => ModelEvaluations::RescaledResidual {
                    pred_calib: column(m, Kind::Pred, &calib_rows)?,
                    pred_test: column(m, Kind::Pred, &one)?[0],
                    sigma_calib: column(m, Kind::Sigma, &calib_rows)?,
                    sigma_test: column(m, Kind::Sigma, &one)?[0],
                },
                [Kind::Qlo, Kind::Qhi] => ModelEvaluations::Cqr {
                    qlo_calib: column(m, Kind::Qlo, &calib_rows)?,
                    qhi_calib: column(m, Kind::Qhi, &calib_rows)?,
                    qlo_test: column(m, Kind::Qlo, &one)?[0],
                    qhi_test: column(m, Kind::Qhi, &one)?[0],
                },
                _ => {
                    let row = |r: usize| kinds.iter().map(|&k| num(m[&k], r)).collect::<CfgResult<Vec<f64>>>();
                    ModelEvaluations::CondDensity {
                        p_calib: calib_rows.iter().map(|&r| row(r)).collect::<CfgResult<_>>()?,
                        p_test: row(t)?,
                    }
                }
            };
            evals.push(e);
        }
        let line = cell(ycol, t).1;
        let class = ModelClass::new(evals).map_err(|e| ConfigError::at(line, e.to_string()))?;
        class.check_responses(&responses).map_err(|e| ConfigError::at(line, e.to_string()))?;
        tests.push((line, class));
    }
    Ok(PredictInput { responses, tests })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictRow {
    pub test_index: usize,
    pub method: String,
    pub region: String,
    pub selected_model: String,
    #[serde(rename = "threshold_T")]
    pub threshold: String,
    pub m_size: String,
}

pub fn predict(input: &PredictInput, cfg: &RunConfig) -> Result<Vec<PredictRow>> {
    let opts = MethodOptions { split_model: cfg.split_model, n1: cfg.n1 };
    let n_models = input.tests[0].1.len();
    if cfg.split_model >= n_models {
        return Err(ConfigError::new(format!("split_model {} out of range", cfg.split_model)).into());
    }
    if let Some(n1) = cfg.n1 {
        if n1 == 0 || n1 >= input.responses.len() {
            return Err(ConfigError::new(format!("n1 {n1} must lie in 1..n")).into());
        }
    }
    let mut rows = Vec::new();
    for (ti, (line, class)) in input.tests.iter().enumerate() {
        let session = Session::new(class.clone(), input.responses.clone(), cfg.alpha, cfg.tie_break)
            .map_err(|e| ConfigError::at(*line, e.to_string()))?;
        for &m in &cfg.methods {
            let out = session
                .run(m, &opts)
                .map_err(|e| InvariantError(format!("{m} on test row {ti}: {e}")))?;
            rows.push(PredictRow {
                test_index: ti,
                method: m.name().to_string(),
                region: out.region.to_string(),
                selected_model: out.selected_model.map(|l| l.to_string()).unwrap_or_default(),
                threshold: format_num(out.threshold),
                m_size: out.diagnostics.m_size.map(|s| s.to_string()).unwrap_or_default(),
            });
        }
    }
    Ok(rows)
}

pub fn run(data: &Path, models: &Path, config: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let doc = ConfigDoc::parse(&text)?;
    let cfg = RunConfig::from_doc(&doc)?;
    doc.finish()?;
    let input = assemble(&read_table(data)?, &read_table(models)?)?;
    let rows = predict(&input, &cfg)?;
    let bytes = match cfg.format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r)?;
            }
            w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?
        }
        OutputFormat::Json => {
            let mut v = serde_json::to_vec_pretty(&rows)?;
            v.push(b'\n');
            v
        }
    };
    std::fs::write(out, bytes).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}
