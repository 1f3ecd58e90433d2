//! Synthetic data-generating processes.

use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{ChiSquared, Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThetaRule {
    /// `theta_j = 1` when `j` (1-based) is a multiple of 20.
    Sparse,
    /// `theta_j = 1/d`.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum XDist {
    Normal,
    StudentT { nu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseDist {
    Normal { sd: f64 },
    StudentT { nu: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DgpSpec {
    Regression {
        d: usize,
        theta: ThetaRule,
        x: XDist,
        noise: NoiseDist,
    },
    Classification {
        d: usize,
        classes: usize,
    },
    /// `Y = X + eps`, `X ~ N(0,1)`, `eps ~ N(mu, 1)`, models `x + c` and `x - c`.
    TwoModel { c: f64, mu: f64 },
}

impl DgpSpec {
    pub const NAMES: [&'static str; 6] = [
        "sparse_gaussian",
        "sparse_heavy",
        "dense_gaussian",
        "tx_sparse",
        "classification",
        "two_model",
    ];

    pub fn sparse_gaussian(d: usize) -> Self {
        Self::Regression { d, theta: ThetaRule::Sparse, x: XDist::Normal, noise: NoiseDist::Normal { sd: 1.0 } }
    }

    pub fn sparse_heavy(d: usize) -> Self {
        Self::Regression { d, theta: ThetaRule::Sparse, x: XDist::Normal, noise: NoiseDist::StudentT { nu: 3.0 } }
    }

    pub fn dense_gaussian(d: usize) -> Self {
        Self::Regression {
            d,
            theta: ThetaRule::Dense,
            x: XDist::Normal,
            noise: NoiseDist::Normal { sd: 1.0 / d as f64 },
        }
    }

    pub fn tx_sparse(d: usize) -> Self {
        Self::Regression { d, theta: ThetaRule::Sparse, x: XDist::StudentT { nu: 3.0 }, noise: NoiseDist::Normal { sd: 1.0 } }
    }

    pub fn classification(d: usize, classes: usize) -> Self {
        Self::Classification { d, classes }
    }

    pub fn two_model(c: f64, mu: f64) -> Self {
        Self::TwoModel { c, mu }
    }

    /// Named preset. `d` is ignored by `two_model`; `c`/`mu` only by `two_model`.
    pub fn by_name(name: &str, d: Option<usize>, classes: Option<usize>, c: f64, mu: f64) -> Result<Self> {
        let reg_d = d.unwrap_or(300);
        Ok(match name {
            "sparse_gaussian" => Self::sparse_gaussian(reg_d),
            "sparse_heavy" => Self::sparse_heavy(reg_d),
            "dense_gaussian" => Self::dense_gaussian(reg_d),
            "tx_sparse" => Self::tx_sparse(reg_d),
            "classification" => Self::classification(d.unwrap_or(50), classes.unwrap_or(10)),
            "two_model" => Self::two_model(c, mu),
            other => return Err(SimError::Config(format!("unknown dgp {other:?}"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        match *self {
            Self::Regression { d, x, noise, .. } => {
                if d == 0 {
                    return bad("d must be positive");
                }
                if let XDist::StudentT { nu } = x {
                    if !(nu > 0.0) {
                        return bad("degrees of freedom must be positive");
                    }
                }
                match noise {
                    NoiseDist::Normal { sd } if !(sd > 0.0) => bad("noise sd must be positive"),
                    NoiseDist::StudentT { nu } if !(nu > 0.0) => bad("degrees of freedom must be positive"),
                    _ => Ok(()),
                }
            }
            Self::Classification { d, classes } => {
                if d == 0 || classes < 2 {
                    bad("classification needs d >= 1 and at least two classes")
                } else {
                    Ok(())
                }
            }
            Self::TwoModel { c, mu } => {
                if !(c > 0.0) || !mu.is_finite() {
                    bad("two_model needs c > 0 and finite mu")
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        match *self {
            Self::Regression { d, .. } | Self::Classification { d, .. } => d,
            Self::TwoModel { .. } => 1,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, Self::Classification { .. })
    }
}

pub fn theta(rule: ThetaRule, d: usize) -> Vec<f64> {
    match rule {
        ThetaRule::Sparse => (1..=d).map(|j| if j % 20 == 0 { 1.0 } else { 0.0 }).collect(),
        ThetaRule::Dense => vec![1.0 / d as f64; d],
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegressionData {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassificationData {
    pub x: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

fn normal_vec<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn draw_x<R: Rng + ?Sized>(rng: &mut R, d: usize, dist: XDist) -> Vec<f64> {
    let mut x = normal_vec(rng, d);
    if let XDist::StudentT { nu } = dist {
        let chi = ChiSquared::new(nu).expect("validated nu").sample(rng);
        let s = (nu / chi).sqrt();
        x.iter_mut().for_each(|v| *v *= s);
    }
    x
}

fn draw_noise<R: Rng + ?Sized>(rng: &mut R, dist: NoiseDist) -> f64 {
    match dist {
        NoiseDist::Normal { sd } => sd * rng.sample::<f64, _>(StandardNormal),
        NoiseDist::StudentT { nu } => StudentT::new(nu).expect("validated nu").sample(rng),
    }
}

/// Draws `m` pairs from a regression or two-model process.
pub fn gen_regression_data<R: Rng + ?Sized>(spec: &DgpSpec, m: usize, rng: &mut R) -> Result<RegressionData> {
    spec.validate()?;
    let mut out = RegressionData { x: Vec::with_capacity(m), y: Vec::with_capacity(m) };
    match *spec {
        DgpSpec::Regression { d, theta: rule, x, noise } => {
            let th = theta(rule, d);
            for _ in 0..m {
                let xi = draw_x(rng, d, x);
                let mean: f64 = xi.iter().zip(&th).map(|(a, b)| a * b).sum();
                out.y.push(mean + draw_noise(rng, noise));
                out.x.push(xi);
            }
        }
        DgpSpec::TwoModel { mu, .. } => {
            for _ in 0..m {
                let xi: f64 = rng.sample(StandardNormal);
                let eps: f64 = rng.sample(StandardNormal);
                out.x.push(vec![xi]);
                out.y.push(xi + mu + eps);
            }
        }
        DgpSpec::Classification { .. } => {
            return Err(SimError::Config("classification dgp has no real response".into()))
        }
    }
    Ok(out)
}

/// Class weight vectors, one per label, each `N(0, I_d)`.
pub fn draw_class_weights<R: Rng + ?Sized>(d: usize, classes: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..classes).map(|_| normal_vec(rng, d)).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Label probabilities at `x` under the class weights.
pub fn class_probabilities(weights: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = weights
        .iter()
        .map(|b| b.iter().zip(x).map(|(u, v)| u * v).sum())
        .collect();
    softmax(&logits)
}

/// Draws `m` labelled points; `weights` come from [`draw_class_weights`].
pub fn gen_classification_data<R: Rng + ?Sized>(
    spec: &DgpSpec,
    weights: &[Vec<f64>],
    m: usize,
    rng: &mut R,
) -> Result<ClassificationData> {
    spec.validate()?;
    let DgpSpec::Classification { d, classes } = *spec else {
        return Err(SimError::Config("not a classification dgp".into()));
    };
    if weights.len() != classes || weights.iter().any(|w| w.len() != d) {
        return Err(SimError::Config("class weights do not match the dgp".into()));
    }
    let mut out = ClassificationData::default();
    for _ in 0..m {
        let mut x = Vec::with_capacity(d);
        x.push(if rng.random_bool(0.2) { 1.0 } else { -8.0 });
        x.extend((1..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let p = class_probabilities(weights, &x);
        let label = WeightedIndex::new(&p).expect("softmax weights").sample(rng);
        out.x.push(x);
        out.labels.push(label);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sparse_theta_has_fifteen_nonzeros() {
        let t = theta(ThetaRule::Sparse, 300);
        assert_eq!(t.iter().filter(|v| **v != 0.0).count(), 15);
        assert_eq!(t[19], 1.0);
        assert_eq!(t[299], 1.0);
        assert_eq!(t[20], 0.0);
    }

    #[test]
    fn dense_noise_variance() {
        let spec = DgpSpec::dense_gaussian(300);
        let th = theta(ThetaRule::Dense, 300);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = gen_regression_data(&spec, 4000, &mut rng).unwrap();
        let res: Vec<f64> = data
            .x
            .iter()
            .zip(&data.y)
            .map(|(x, y)| y - x.iter().zip(&th).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let var = res.iter().map(|r| r * r).sum::<f64>() / res.len() as f64;
        let target = 1.0 / 300f64.powi(2);
        assert!((var / target - 1.0).abs() < 0.1, "{var} vs {target}");
    }

    #[test]
    fn tx_coordinates_are_heavy_tailed() {
        let spec = DgpSpec::tx_sparse(5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = gen_regression_data(&spec, 20000, &mut rng).unwrap();
        let v: Vec<f64> = data.x.iter().map(|x| x[0]).collect();
        let var = v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64;
        // t3 has variance 3
        assert!(var > 2.0, "{var}");
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = DgpSpec::sparse_heavy(10);
        let a = gen_regression_data(&spec, 5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = gen_regression_data(&spec, 5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn classification_first_coordinate() {
        let spec = DgpSpec::classification(50, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = draw_class_weights(50, 10, &mut rng);
        let data = gen_classification_data(&spec, &w, 10000, &mut rng).unwrap();
        let ones = data.x.iter().filter(|x| x[0] == 1.0).count() as f64 / 10000.0;
        assert!((ones - 0.2).abs() < 0.015, "{ones}");
        assert!(data.x.iter().all(|x| x[0] == 1.0 || x[0] == -8.0));
        assert!(data.labels.iter().all(|&l| l < 10));
        let p = class_probabilities(&w, &data.x[0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_model_residual_centering() {
        let spec = DgpSpec::two_model(1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = gen_regression_data(&spec, 20000, &mut rng).unwrap();
        let m = data.x.iter().zip(&data.y).map(|(x, y)| y - x[0] - 1.0).sum::<f64>() / 20000.0;
        assert!(m.abs() < 0.03);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(DgpSpec::two_model(0.0, 0.0).validate().is_err());
        assert!(DgpSpec::by_name("nope", None, None, 1.0, 0.0).is_err());
    }
}
