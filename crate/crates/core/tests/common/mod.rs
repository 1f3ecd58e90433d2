#![allow(dead_code)]

use modsel_core::{ModelClass, ModelEvaluations, Responses, Session, TieBreaker};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub enum Family {
    Residual,
    Rescaled,
    Cqr,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random continuous instance: n calibration points, models with noisy
/// predictions around a shared signal.
pub fn continuous(seed: u64, family: Family, n: usize, n_models: usize) -> (ModelClass, Responses) {
    let mut r = rng(seed);
    let x: Vec<f64> = (0..=n).map(|_| r.random_range(-2.0..2.0)).collect();
    let y: Vec<f64> = x[..n].iter().map(|v| v + r.random_range(-1.0..1.0)).collect();
    let mut models = Vec::new();
    for _ in 0..n_models {
        let shift: f64 = r.random_range(-0.8..0.8);
        let slope: f64 = r.random_range(0.5..1.5);
        let pred: Vec<f64> = x.iter().map(|v| slope * v + shift).collect();
        let m = match family {
            Family::Residual => ModelEvaluations::Residual {
                pred_calib: pred[..n].to_vec(),
                pred_test: pred[n],
            },
            Family::Rescaled => {
                let sig: Vec<f64> = (0..=n).map(|_| r.random_range(0.3..2.0)).collect();
                ModelEvaluations::RescaledResidual {
                    pred_calib: pred[..n].to_vec(),
                    pred_test: pred[n],
                    sigma_calib: sig[..n].to_vec(),
                    sigma_test: sig[n],
                }
            }
            Family::Cqr => {
                let w: Vec<f64> = (0..=n).map(|_| r.random_range(0.0..1.5)).collect();
                ModelEvaluations::Cqr {
                    qlo_calib: (0..n).map(|i| pred[i] - w[i]).collect(),
                    qhi_calib: (0..n).map(|i| pred[i] + w[i]).collect(),
                    qlo_test: pred[n] - w[n],
                    qhi_test: pred[n] + w[n],
                }
            }
        };
        models.push(m);
    }
    (ModelClass::new(models).unwrap(), Responses::Real(y))
}

fn simplex(r: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| r.random_range(0.01..1.0f64).powi(2)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

/// Random label instance with `k` classes.
pub fn discrete(seed: u64, n: usize, n_models: usize, k: usize) -> (ModelClass, Responses) {
    let mut r = rng(seed);
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
    let models = (0..n_models)
        .map(|_| ModelEvaluations::CondDensity {
            p_calib: (0..n).map(|_| simplex(&mut r, k)).collect(),
            p_test: simplex(&mut r, k),
        })
        .collect();
    (ModelClass::new(models).unwrap(), Responses::Labels(labels))
}

pub fn session(class: ModelClass, y: Responses, alpha: f64) -> Session {
    Session::new(class, y, alpha, TieBreaker::MinIndex).unwrap()
}
