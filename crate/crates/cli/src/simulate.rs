//! `simulate`: run a Monte-Carlo experiment and write its summary.

use std::path::Path;

use anyhow::{Context, Result};
use modsel_core::region::format_num;
use modsel_simlab::{
    run_experiment_with_threads, DgpSpec, ExperimentConfig, ExperimentSummary, ScoreKind, SimError, Stat,
};
use serde_json::{json, Value};

use crate::config::{CfgResult, ConfigDoc, ConfigError, InvariantError, OutputFormat, RunConfig};

pub const COLUMNS: [&str; 7] =
    ["method", "coverage", "coverage_se", "width", "width_se", "width_ratio", "width_ratio_se"];

#[derive(Debug, Clone)]
pub struct SimulateConfig {
    pub name: String,
    pub experiment: ExperimentConfig,
    pub format: OutputFormat,
}

fn dgp_line(doc: &ConfigDoc) -> usize {
    doc.line_of("dgp").unwrap_or(1)
}

impl SimulateConfig {
    pub fn from_doc(doc: &ConfigDoc) -> CfgResult<Self> {
        let run = RunConfig::from_doc(doc)?;
        let dgp_name: String = doc.require("dgp")?;
        let d: Option<usize> = doc.get("d")?;
        let classes: Option<usize> = doc.get("classes")?;
        let c: f64 = doc.get_or("c", 1.0)?;
        let mu: f64 = doc.get_or("mu", 0.0)?;
        let dgp = DgpSpec::by_name(&dgp_name, d, classes, c, mu)
            .map_err(|e| ConfigError::at(dgp_line(doc), e.to_string()))?;
        let n: usize = doc.require("n")?;
        let n_models: usize = match dgp {
            DgpSpec::TwoModel { .. } => doc.get_or("n_models", 2)?,
            _ => doc.require("n_models")?,
        };
        let trials: usize = doc.require("trials")?;
        let seed: u64 = doc.get_or("seed", 0)?;
        let mut e = ExperimentConfig::new(dgp, n, n_models, trials, seed);
        e.alpha = run.alpha;
        e.methods = run.methods;
        e.tie_break = run.tie_break;
        e.n1 = run.n1;
        e.split_model = run.split_model;
        e.n_train = doc.get_or("n_train", e.n_train)?;
        e.test_points = doc.get_or("test_points", e.test_points)?;
        e.retrain = doc.get_or("retrain", e.retrain)?;
        e.ridge_penalty = doc.get_or("ridge_penalty", e.ridge_penalty)?;
        e.subset_frac = doc.get_or("subset_frac", e.subset_frac)?;
        e.knn_k = doc.get_or("knn_k", e.knn_k)?;
        e.score = match doc.raw("score") {
            None | Some(("residual", _)) => ScoreKind::Residual,
            Some(("rescaled", _)) => ScoreKind::Rescaled,
            Some((other, line)) => return Err(ConfigError::at(line, format!("unknown score {other:?}"))),
        };
        if matches!(e.dgp, DgpSpec::TwoModel { .. }) && e.n_models != 2 {
            return Err(ConfigError::at(doc.line_of("n_models").unwrap_or(1), "two_model has exactly two models"));
        }
        e.validate().map_err(|err| ConfigError::new(err.to_string()))?;
        let name = doc
            .get::<String>("name")?
            .unwrap_or_else(|| format!("{dgp_name}_n{n}_m{}", e.class_size()));
        Ok(Self { name, experiment: e, format: run.format })
    }
}

fn se_cell(s: &Stat, trials: usize) -> String {
    match s.se {
        Some(v) if trials > 1 => format_num(v),
        _ => String::new(),
    }
}

fn check(summary: &ExperimentSummary) -> std::result::Result<(), InvariantError> {
    for m in &summary.methods {
        if !(0.0..=1.0).contains(&m.coverage.mean) {
            return Err(InvariantError(format!("{} coverage {} outside [0,1]", m.method, m.coverage.mean)));
        }
        if m.width.mean.is_nan() || m.width.mean < 0.0 {
            return Err(InvariantError(format!("{} width {}", m.method, m.width.mean)));
        }
    }
    Ok(())
}

pub fn render(cfg: &SimulateConfig, s: &ExperimentSummary) -> Result<Vec<u8>> {
    let e = &cfg.experiment;
    match cfg.format {
        OutputFormat::Csv => {
            let mut out = Vec::new();
            let header = [
                ("setting", cfg.name.clone()),
                ("alpha", format_num(s.alpha)),
                ("trials", s.trials.to_string()),
                ("seed", e.seed.to_string()),
                ("n", e.n.to_string()),
                ("n_models", e.class_size().to_string()),
                ("best_single_model", s.best_single_model.to_string()),
                ("best_single_width", format_num(s.best_single_width)),
            ];
            for (k, v) in header {
                out.extend_from_slice(format!("# {k}={v}\n").as_bytes());
            }
            let mut w = csv::Writer::from_writer(out);
            w.write_record(COLUMNS)?;
            for m in &s.methods {
                w.write_record([
                    m.method.name().to_string(),
                    format_num(m.coverage.mean),
                    se_cell(&m.coverage, s.trials),
                    format_num(m.width.mean),
                    se_cell(&m.width, s.trials),
                    format_num(m.width_ratio.mean),
                    se_cell(&m.width_ratio, s.trials),
                ])?;
            }
            Ok(w.into_inner().map_err(|err| anyhow::anyhow!("{err}"))?)
        }
        OutputFormat::Json => {
            let num = |v: f64| if v.is_finite() { json!(v) } else { Value::String(format_num(v)) };
            let se = |st: &Stat| match st.se {
                Some(v) if s.trials > 1 => json!(v),
                _ => Value::Null,
            };
            let rows: Vec<Value> = s
                .methods
                .iter()
                .map(|m| {
                    json!({
                        "method": m.method.name(),
                        "coverage": num(m.coverage.mean),
                        "coverage_se": se(&m.coverage),
                        "width": num(m.width.mean),
                        "width_se": se(&m.width),
                        "width_ratio": num(m.width_ratio.mean),
                        "width_ratio_se": se(&m.width_ratio),
                    })
                })
                .collect();
            let doc = json!({
                "setting": cfg.name,
                "alpha": s.alpha,
                "trials": s.trials,
                "seed": e.seed,
                "n": e.n,
                "n_models": e.class_size(),
                "best_single_model": s.best_single_model,
                "best_single_width": num(s.best_single_width),
                "rows": rows,
            });
            let mut v = serde_json::to_vec_pretty(&doc)?;
            v.push(b'\n');
            Ok(v)
        }
    }
}

/// Worker cap from `MODSEL_THREADS`.
pub fn threads_from_env() -> CfgResult<Option<usize>> {
    match std::env::var("MODSEL_THREADS") {
        Err(_) => Ok(None),
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| ConfigError::new(format!("MODSEL_THREADS={v:?} is not a positive integer"))),
    }
}

pub fn run(config: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let doc = ConfigDoc::parse(&text)?;
    let cfg = SimulateConfig::from_doc(&doc)?;
    doc.finish()?;
    let threads = threads_from_env()?;
    let summary = run_experiment_with_threads(cfg.experiment.clone(), threads).map_err(|e| match e {
        SimError::Config(m) => anyhow::Error::new(ConfigError::new(m)),
        other => anyhow::Error::new(InvariantError(other.to_string())),
    })?;
    check(&summary)?;
    let bytes = render(&cfg, &summary)?;
    std::fs::write(out, bytes).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}
