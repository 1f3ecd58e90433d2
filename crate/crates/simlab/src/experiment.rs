//! Monte-Carlo runner. Trials draw fresh calibration data and are aggregated
//! in trial order.

use modsel_core::{Method, MethodOptions, MethodOutput, ModelClass, PredictionRegion, Responses, Session, TieBreaker};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{draw_class_weights, gen_classification_data, gen_regression_data, DgpSpec};
use crate::error::{Result, SimError};
use crate::train::{
    pretrain_classifiers, pretrain_ridge_subset_models, pretrain_sigma_estimators, two_model_class, ModelBank,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreKind {
    Residual,
    Rescaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dgp: DgpSpec,
    /// Regression only; the other processes fix their score.
    pub score: ScoreKind,
    pub n_train: usize,
    pub n: usize,
    pub n_models: usize,
    pub alpha: f64,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub tie_break: TieBreaker,
    /// First-half size for `yk_split`; `n / 2` when unset.
    pub n1: Option<usize>,
    pub split_model: usize,
    pub test_points: usize,
    /// Refit the model class on fresh training data every trial.
    pub retrain: bool,
    pub ridge_penalty: f64,
    pub subset_frac: f64,
    pub knn_k: usize,
    pub keep_records: bool,
}

impl ExperimentConfig {
    pub fn new(dgp: DgpSpec, n: usize, n_models: usize, trials: usize, seed: u64) -> Self {
        Self {
            dgp,
            score: ScoreKind::Residual,
            n_train: 300,
            n,
            n_models,
            alpha: 0.1,
            trials,
            seed,
            methods: Method::ALL.to_vec(),
            tie_break: TieBreaker::MinIndex,
            n1: None,
            split_model: 0,
            test_points: 1,
            retrain: false,
            ridge_penalty: 0.1,
            subset_frac: 0.1,
            knn_k: 20,
            keep_records: false,
        }
    }

    /// Effective number of models; the two-model process always has two.
    pub fn class_size(&self) -> usize {
        match self.dgp {
            DgpSpec::TwoModel { .. } => 2,
            _ => self.n_models,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::Config(m));
        self.dgp.validate()?;
        if self.trials == 0 || self.n == 0 || self.class_size() == 0 || self.test_points == 0 {
            return bad("trials, n, n_models and test_points must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0,1)", self.alpha));
        }
        if self.methods.is_empty() {
            return bad("no methods configured".into());
        }
        if self.split_model >= self.class_size() {
            return bad(format!("split_model {} out of range", self.split_model));
        }
        if let Some(n1) = self.n1 {
            if n1 == 0 || n1 >= self.n {
                return bad(format!("n1 {n1} must lie in 1..n"));
            }
        }
        if self.methods.contains(&Method::YkSplit) && self.n1.is_none() && self.n < 2 {
            return bad("yk_split needs n >= 2".into());
        }
        if !matches!(self.dgp, DgpSpec::TwoModel { .. }) {
            if self.n_train == 0 {
                return bad("n_train must be at least 1".into());
            }
            if !(self.ridge_penalty > 0.0) || !(self.subset_frac > 0.0 && self.subset_frac <= 1.0) {
                return bad("ridge_penalty must be positive and subset_frac in (0,1]".into());
            }
        }
        if self.score == ScoreKind::Rescaled {
            if !matches!(self.dgp, DgpSpec::Regression { .. }) {
                return bad("rescaled scores need a regression dgp".into());
            }
            let second = self.n_train - self.n_train / 2;
            if self.n_train < 2 || self.knn_k == 0 || self.knn_k > second {
                return bad(format!("knn_k {} must lie in 1..={second}", self.knn_k));
            }
        }
        Ok(())
    }

    fn options(&self) -> MethodOptions {
        MethodOptions { split_model: self.split_model, n1: self.n1 }
    }
}

/// Response of a test point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truth {
    Real(f64),
    Label(usize),
}

impl Truth {
    pub fn covered_by(&self, region: &PredictionRegion) -> bool {
        match *self {
            Self::Real(y) => region.contains(y),
            Self::Label(l) => region.contains_label(l),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestCase {
    pub class: ModelClass,
    pub truth: Truth,
}

/// One trial's calibration responses and its test points.
#[derive(Debug, Clone)]
pub struct Trial {
    pub responses: Responses,
    pub tests: Vec<TestCase>,
}

impl Trial {
    pub fn session(&self, j: usize, cfg: &ExperimentConfig) -> Result<Session> {
        Ok(Session::new(self.tests[j].class.clone(), self.responses.clone(), cfg.alpha, cfg.tie_break)?)
    }
}

/// Per-trial averages over the test points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub coverage: Vec<f64>,
    pub width: Vec<f64>,
    /// Split-conformal width of every single model.
    pub single_width: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Blank for one trial or a non-finite mean.
    pub se: Option<f64>,
}

impl Stat {
    pub fn from_values(v: &[f64]) -> Self {
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let se = if n < 2 || !mean.is_finite() {
            None
        } else {
            let ss = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
            Some((ss / (n - 1) as f64).sqrt() / (n as f64).sqrt())
        };
        Self { mean, se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub coverage: Stat,
    pub width: Stat,
    pub width_ratio: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub alpha: f64,
    pub trials: usize,
    pub best_single_model: usize,
    pub best_single_width: f64,
    pub methods: Vec<MethodSummary>,
    pub records: Option<Vec<TrialRecord>>,
}

impl ExperimentSummary {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

/// Random stream of trial `t`; stream 0 is reserved for pretraining.
pub fn trial_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64 + 1);
    rng
}

fn pretrain_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Configured experiment with its pretrained model class.
#[derive(Debug, Clone)]
pub struct Experiment {
    cfg: ExperimentConfig,
    class_weights: Option<Vec<Vec<f64>>>,
    bank: Option<ModelBank>,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = pretrain_rng(cfg.seed);
        let class_weights = match cfg.dgp {
            DgpSpec::Classification { d, classes } => Some(draw_class_weights(d, classes, &mut rng)),
            _ => None,
        };
        let mut exp = Self { cfg, class_weights, bank: None };
        if !exp.cfg.retrain {
            exp.bank = Some(exp.fit_bank(&mut rng)?);
        }
        Ok(exp)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn bank(&self) -> Option<&ModelBank> {
        self.bank.as_ref()
    }

    fn fit_bank(&self, rng: &mut ChaCha8Rng) -> Result<ModelBank> {
        let cfg = &self.cfg;
        match cfg.dgp {
            DgpSpec::TwoModel { c, .. } => two_model_class(c),
            DgpSpec::Regression { .. } => {
                let train = gen_regression_data(&cfg.dgp, cfg.n_train, rng)?;
                match cfg.score {
                    ScoreKind::Residual => Ok(ModelBank::Ridge(pretrain_ridge_subset_models(
                        &train,
                        cfg.n_models,
                        cfg.subset_frac,
                        cfg.ridge_penalty,
                        rng,
                    )?)),
                    ScoreKind::Rescaled => {
                        let h = cfg.n_train / 2;
                        let (first, second) = split_data(train, h);
                        let models =
                            pretrain_ridge_subset_models(&first, cfg.n_models, cfg.subset_frac, cfg.ridge_penalty, rng)?;
                        let sigma = pretrain_sigma_estimators(&second, &models, cfg.knn_k)?;
                        Ok(ModelBank::RidgeRescaled { models, sigma })
                    }
                }
            }
            DgpSpec::Classification { classes, .. } => {
                let w = self.class_weights.as_ref().expect("weights drawn for classification");
                let train = gen_classification_data(&cfg.dgp, w, cfg.n_train, rng)?;
                Ok(ModelBank::Classifiers(pretrain_classifiers(&train, classes, cfg.n_models, rng)?))
            }
        }
    }

    /// Draws trial `t` (training data too when refitting per trial).
    pub fn trial(&self, t: usize) -> Result<Trial> {
        let cfg = &self.cfg;
        let mut rng = trial_rng(cfg.seed, t);
        let fresh;
        let bank = match &self.bank {
            Some(b) => b,
            None => {
                fresh = self.fit_bank(&mut rng)?;
                &fresh
            }
        };
        let m = cfg.n + cfg.test_points;
        let (x, responses, truths) = match &cfg.dgp {
            DgpSpec::Classification { .. } => {
                let w = self.class_weights.as_ref().expect("weights drawn for classification");
                let data = gen_classification_data(&cfg.dgp, w, m, &mut rng)?;
                let truths = data.labels[cfg.n..].iter().map(|&l| Truth::Label(l)).collect::<Vec<_>>();
                (data.x, Responses::Labels(data.labels[..cfg.n].to_vec()), truths)
            }
            _ => {
                let data = gen_regression_data(&cfg.dgp, m, &mut rng)?;
                let truths = data.y[cfg.n..].iter().map(|&y| Truth::Real(y)).collect::<Vec<_>>();
                (data.x, Responses::Real(data.y[..cfg.n].to_vec()), truths)
            }
        };
        let calib = &x[..cfg.n];
        let tests = x[cfg.n..]
            .iter()
            .zip(truths)
            .map(|(xt, truth)| Ok(TestCase { class: bank.class_for(calib, xt)?, truth }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trial { responses, tests })
    }

    /// Runs every configured method on one session.
    pub fn run_methods(&self, session: &Session) -> Result<Vec<MethodOutput>> {
        let opts = self.cfg.options();
        self.cfg.methods.iter().map(|&m| Ok(session.run(m, &opts)?)).collect()
    }

    pub fn run_trial(&self, t: usize) -> Result<TrialRecord> {
        let trial = self.trial(t)?;
        let k = self.cfg.methods.len();
        let lam = self.cfg.class_size();
        let mut coverage = vec![0.0; k];
        let mut width = vec![0.0; k];
        let mut single_width = vec![0.0; lam];
        let tp = trial.tests.len() as f64;
        for (j, case) in trial.tests.iter().enumerate() {
            let s = trial.session(j, &self.cfg)?;
            for (i, out) in self.run_methods(&s)?.iter().enumerate() {
                coverage[i] += f64::from(u8::from(case.truth.covered_by(&out.region))) / tp;
                width[i] += out.region.measure() / tp;
            }
            for (l, w) in single_width.iter_mut().enumerate() {
                *w += case.class.models()[l].region_at_threshold(s.scores().q_hat(l)).measure() / tp;
            }
        }
        Ok(TrialRecord { coverage, width, single_width })
    }

    /// All trials in parallel on the current rayon pool; aggregation in trial order.
    pub fn run(&self) -> Result<ExperimentSummary> {
        let records = (0..self.cfg.trials)
            .into_par_iter()
            .map(|t| self.run_trial(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(summarize(&self.cfg, records))
    }
}

fn split_data(mut d: crate::dgp::RegressionData, at: usize) -> (crate::dgp::RegressionData, crate::dgp::RegressionData) {
    let x2 = d.x.split_off(at);
    let y2 = d.y.split_off(at);
    (d, crate::dgp::RegressionData { x: x2, y: y2 })
}

pub fn summarize(cfg: &ExperimentConfig, records: Vec<TrialRecord>) -> ExperimentSummary {
    let lam = cfg.class_size();
    let column = |f: &dyn Fn(&TrialRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    let mut best_single_model = 0;
    let mut best_single_width = f64::INFINITY;
    for l in 0..lam {
        let w = Stat::from_values(&column(&|r| r.single_width[l])).mean;
        if w < best_single_width {
            best_single_width = w;
            best_single_model = l;
        }
    }
    let methods = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let coverage = Stat::from_values(&column(&|r| r.coverage[i]));
            let width = Stat::from_values(&column(&|r| r.width[i]));
            let width_ratio = Stat {
                mean: width.mean / best_single_width,
                se: width.se.map(|s| s / best_single_width),
            };
            MethodSummary { method, coverage, width, width_ratio }
        })
        .collect();
    ExperimentSummary {
        alpha: cfg.alpha,
        trials: cfg.trials,
        best_single_model,
        best_single_width,
        methods,
        records: cfg.keep_records.then_some(records),
    }
}

pub fn run_experiment(cfg: ExperimentConfig) -> Result<ExperimentSummary> {
    Experiment::new(cfg)?.run()
}

/// Runs on a dedicated pool of `threads` workers; `None` uses the global pool.
pub fn run_experiment_with_threads(cfg: ExperimentConfig, threads: Option<usize>) -> Result<ExperimentSummary> {
    match threads {
        None => run_experiment(cfg),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| SimError::Config(format!("thread pool: {e}")))?;
            pool.install(|| run_experiment(cfg))
        }
    }
}
