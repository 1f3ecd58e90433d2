//! Pretraining recipes. Each fitted bank turns feature vectors into
//! [`ModelEvaluations`] for the calibration points and one test point.

use modsel_core::{ModelClass, ModelEvaluations};
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dgp::{softmax, ClassificationData, RegressionData};
use crate::error::{Result, SimError};

/// Linear predictor supported on a feature subset.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub features: Vec<usize>,
    pub coef: Vec<f64>,
}

impl RidgeModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.features.iter().zip(&self.coef).map(|(&j, c)| x[j] * c).sum()
    }

    /// Coefficients embedded back into all `d` coordinates.
    pub fn dense_coef(&self, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; d];
        for (&j, &c) in self.features.iter().zip(&self.coef) {
            out[j] = c;
        }
        out
    }
}

/// Solves `(Z'Z + eta I) theta = Z'y` on the selected columns, no intercept.
pub fn fit_ridge(data: &RegressionData, features: &[usize], eta: f64) -> Result<RidgeModel> {
    let n = data.y.len();
    let s = features.len();
    let z = DMatrix::from_fn(n, s, |i, j| data.x[i][features[j]]);
    let y = DVector::from_column_slice(&data.y);
    let mut a = z.tr_mul(&z);
    for j in 0..s {
        a[(j, j)] += eta;
    }
    let b = z.tr_mul(&y);
    let chol = a.cholesky().ok_or(SimError::Singular)?;
    let coef = chol.solve(&b);
    Ok(RidgeModel { features: features.to_vec(), coef: coef.iter().copied().collect() })
}

/// One ridge fit per model on `floor(subset_frac * d)` uniformly drawn features.
pub fn pretrain_ridge_subset_models<R: Rng + ?Sized>(
    data: &RegressionData,
    n_models: usize,
    subset_frac: f64,
    eta: f64,
    rng: &mut R,
) -> Result<Vec<RidgeModel>> {
    let d = data.x.first().map_or(0, Vec::len);
    let s = ((subset_frac * d as f64).floor() as usize).clamp(1, d.max(1));
    if d == 0 || n_models == 0 {
        return Err(SimError::Config("ridge pretraining needs data and at least one model".into()));
    }
    (0..n_models)
        .map(|_| {
            let mut f = sample(rng, d, s).into_vec();
            f.sort_unstable();
            fit_ridge(data, &f, eta)
        })
        .collect()
}

/// Local scale: mean absolute training residual over the `k` nearest points.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnSigma {
    x: Vec<Vec<f64>>,
    /// `abs_res[lambda][j]`
    abs_res: Vec<Vec<f64>>,
    k: usize,
}

pub const SIGMA_FLOOR: f64 = 1e-6;

impl KnnSigma {
    /// Indices of the `k` nearest training points, ties to the lower index.
    pub fn neighbors(&self, x: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(j, t)| (t.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum(), j))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.truncate(self.k);
        d.into_iter().map(|(_, j)| j).collect()
    }

    pub fn sigma_at(&self, lambda: usize, neighbors: &[usize]) -> f64 {
        let r = &self.abs_res[lambda];
        let m = neighbors.iter().map(|&j| r[j]).sum::<f64>() / neighbors.len() as f64;
        m.max(SIGMA_FLOOR)
    }

    pub fn sigma(&self, lambda: usize, x: &[f64]) -> f64 {
        self.sigma_at(lambda, &self.neighbors(x))
    }
}

pub fn pretrain_sigma_estimators(data: &RegressionData, models: &[RidgeModel], k: usize) -> Result<KnnSigma> {
    if k == 0 || k > data.y.len() {
        return Err(SimError::Config(format!("knn k={k} must lie in 1..={}", data.y.len())));
    }
    let abs_res = models
        .iter()
        .map(|m| data.x.iter().zip(&data.y).map(|(x, y)| (y - m.predict(x)).abs()).collect())
        .collect();
    Ok(KnnSigma { x: data.x.clone(), abs_res, k })
}

/// Multinomial logistic model on standardized features plus intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier {
    pub features: Vec<usize>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// `weights[class]`, intercept last.
    weights: Vec<Vec<f64>>,
}

impl SoftmaxClassifier {
    fn design(&self, x: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = self
            .features
            .iter()
            .enumerate()
            .map(|(k, &j)| (x[j] - self.mean[k]) / self.scale[k])
            .collect();
        z.push(1.0);
        z
    }

    fn probs_from_design(&self, z: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self.weights.iter().map(|w| w.iter().zip(z).map(|(a, b)| a * b).sum()).collect();
        softmax(&logits)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        self.probs_from_design(&self.design(x))
    }
}

pub const GD_STEPS: usize = 500;
pub const GD_RATE: f64 = 0.1;

/// Full-batch gradient descent on mean cross-entropy.
pub fn fit_classifier<R: Rng + ?Sized>(
    data: &ClassificationData,
    classes: usize,
    features: Vec<usize>,
    steps: usize,
    rate: f64,
    rng: &mut R,
) -> SoftmaxClassifier {
    let n = data.labels.len();
    let s = features.len();
    let mut mean = vec![0.0; s];
    let mut scale = vec![1.0; s];
    for (k, &j) in features.iter().enumerate() {
        let m = data.x.iter().map(|x| x[j]).sum::<f64>() / n as f64;
        let v = data.x.iter().map(|x| (x[j] - m).powi(2)).sum::<f64>() / n as f64;
        mean[k] = m;
        scale[k] = if v > 0.0 { v.sqrt() } else { 1.0 };
    }
    let weights = (0..classes)
        .map(|_| (0..=s).map(|_| 0.01 * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut model = SoftmaxClassifier { features, mean, scale, weights };
    let zs: Vec<Vec<f64>> = data.x.iter().map(|x| model.design(x)).collect();
    let mut grad = vec![vec![0.0; s + 1]; classes];
    for _ in 0..steps {
        grad.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
        for (z, &label) in zs.iter().zip(&data.labels) {
            let p = model.probs_from_design(z);
            for (c, g) in grad.iter_mut().enumerate() {
                let e = p[c] - if c == label { 1.0 } else { 0.0 };
                g.iter_mut().zip(z).for_each(|(gv, zv)| *gv += e * zv);
            }
        }
        let step = rate / n as f64;
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            w.iter_mut().zip(g).for_each(|(wv, gv)| *wv -= step * gv);
        }
    }
    model
}

/// One classifier per model on a random half of the features.
pub fn pretrain_classifiers<R: Rng + ?Sized>(
    data: &ClassificationData,
    classes: usize,
    n_models: usize,
    rng: &mut R,
) -> Result<Vec<SoftmaxClassifier>> {
    let d = data.x.first().map_or(0, Vec::len);
    if d == 0 || n_models == 0 {
        return Err(SimError::Config("classifier pretraining needs data and at least one model".into()));
    }
    let s = (d / 2).max(1);
    Ok((0..n_models)
        .map(|_| {
            let mut f = sample(rng, d, s).into_vec();
            f.sort_unstable();
            fit_classifier(data, classes, f, GD_STEPS, GD_RATE, rng)
        })
        .collect())
}

/// Fitted model class able to evaluate itself on fresh points.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelBank {
    Ridge(Vec<RidgeModel>),
    RidgeRescaled { models: Vec<RidgeModel>, sigma: KnnSigma },
    /// Predictors `x + c` (index 0) and `x - c` (index 1) on the first coordinate.
    TwoModel { c: f64 },
    Classifiers(Vec<SoftmaxClassifier>),
}

pub fn two_model_class(c: f64) -> Result<ModelBank> {
    if !(c > 0.0) {
        return Err(SimError::Config("two_model needs c > 0".into()));
    }
    Ok(ModelBank::TwoModel { c })
}

impl ModelBank {
    pub fn len(&self) -> usize {
        match self {
            Self::Ridge(m) => m.len(),
            Self::RidgeRescaled { models, .. } => models.len(),
            Self::TwoModel { .. } => 2,
            Self::Classifiers(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Evaluations at the calibration features and one test feature vector.
    pub fn class_for(&self, calib: &[Vec<f64>], test: &[f64]) -> Result<ModelClass> {
        let models = match self {
            Self::Ridge(ms) => ms
                .iter()
                .map(|m| ModelEvaluations::Residual {
                    pred_calib: calib.iter().map(|x| m.predict(x)).collect(),
                    pred_test: m.predict(test),
                })
                .collect(),
            Self::RidgeRescaled { models, sigma } => {
                let nb_calib: Vec<Vec<usize>> = calib.iter().map(|x| sigma.neighbors(x)).collect();
                let nb_test = sigma.neighbors(test);
                models
                    .iter()
                    .enumerate()
                    .map(|(l, m)| ModelEvaluations::RescaledResidual {
                        pred_calib: calib.iter().map(|x| m.predict(x)).collect(),
                        pred_test: m.predict(test),
                        sigma_calib: nb_calib.iter().map(|nb| sigma.sigma_at(l, nb)).collect(),
                        sigma_test: sigma.sigma_at(l, &nb_test),
                    })
                    .collect()
            }
            Self::TwoModel { c } => [*c, -*c]
                .into_iter()
                .map(|off| ModelEvaluations::Residual {
                    pred_calib: calib.iter().map(|x| x[0] + off).collect(),
                    pred_test: test[0] + off,
                })
                .collect(),
            Self::Classifiers(ms) => ms
                .iter()
                .map(|m| ModelEvaluations::CondDensity {
                    p_calib: calib.iter().map(|x| m.predict_proba(x)).collect(),
                    p_test: m.predict_proba(test),
                })
                .collect(),
        };
        Ok(ModelClass::new(models)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{draw_class_weights, gen_classification_data, gen_regression_data, DgpSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(s: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(s)
    }

    #[test]
    fn scalar_ridge_formula() {
        let data = RegressionData { x: vec![vec![1.0], vec![2.0], vec![-1.0]], y: vec![1.0, 3.0, 0.5] };
        let m = fit_ridge(&data, &[0], 0.1).unwrap();
        let sxy = 1.0 + 6.0 - 0.5;
        let sxx = 1.0 + 4.0 + 1.0;
        assert!((m.coef[0] - sxy / (sxx + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn heavy_shrinkage_vanishes() {
        let data = gen_regression_data(&DgpSpec::sparse_gaussian(40), 50, &mut rng(1)).unwrap();
        let ms = pretrain_ridge_subset_models(&data, 3, 0.1, 1e12, &mut rng(2)).unwrap();
        for m in &ms {
            assert_eq!(m.features.len(), 4);
            assert!(m.predict(&data.x[0]).abs() < 1e-8);
        }
    }

    #[test]
    fn subsets_vary_across_models() {
        let data = gen_regression_data(&DgpSpec::sparse_gaussian(300), 60, &mut rng(3)).unwrap();
        let ms = pretrain_ridge_subset_models(&data, 5, 0.1, 0.1, &mut rng(4)).unwrap();
        assert!(ms.iter().all(|m| m.features.len() == 30));
        assert!(ms.windows(2).any(|w| w[0].features != w[1].features));
        assert_eq!(ms[0].dense_coef(300).iter().filter(|c| **c != 0.0).count(), 30);
    }

    #[test]
    fn knn_sigma_limits() {
        let data = RegressionData {
            x: (0..10).map(|i| vec![i as f64]).collect(),
            y: (0..10).map(|i| if i % 2 == 0 { 2.0 } else { -2.0 }).collect(),
        };
        let zero = RidgeModel { features: vec![0], coef: vec![0.0] };
        let s = pretrain_sigma_estimators(&data, &[zero.clone()], 3).unwrap();
        assert_eq!(s.sigma(0, &[4.2]), 2.0);
        let all = pretrain_sigma_estimators(&data, &[zero], 10).unwrap();
        assert_eq!(all.sigma(0, &[100.0]), 2.0);
        let exact = RegressionData { x: data.x.clone(), y: vec![0.0; 10] };
        let z = pretrain_sigma_estimators(&exact, &[RidgeModel { features: vec![0], coef: vec![0.0] }], 2).unwrap();
        assert_eq!(z.sigma(0, &[1.0]), SIGMA_FLOOR);
        assert!(pretrain_sigma_estimators(&data, &[], 11).is_err());
    }

    #[test]
    fn classifiers_output_distributions_and_differ() {
        let spec = DgpSpec::classification(10, 4);
        let w = draw_class_weights(10, 4, &mut rng(5));
        let data = gen_classification_data(&spec, &w, 120, &mut rng(6)).unwrap();
        let ms = pretrain_classifiers(&data, 4, 2, &mut rng(7)).unwrap();
        let probe = gen_classification_data(&spec, &w, 5, &mut rng(8)).unwrap();
        let mut differ = false;
        for x in &probe.x {
            let a = ms[0].predict_proba(x);
            let b = ms[1].predict_proba(x);
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            differ |= a.iter().zip(&b).any(|(u, v)| (u - v).abs() > 1e-6);
        }
        assert!(differ);
    }

    #[test]
    fn classifier_learns_something() {
        let spec = DgpSpec::classification(6, 3);
        let w = draw_class_weights(6, 3, &mut rng(9));
        let train = gen_classification_data(&spec, &w, 400, &mut rng(10)).unwrap();
        let m = fit_classifier(&train, 3, (0..6).collect(), GD_STEPS, GD_RATE, &mut rng(11));
        let test = gen_classification_data(&spec, &w, 400, &mut rng(12)).unwrap();
        let acc = test
            .x
            .iter()
            .zip(&test.labels)
            .filter(|(x, &l)| {
                let p = m.predict_proba(x);
                (0..3).all(|c| p[c] <= p[l])
            })
            .count() as f64
            / 400.0;
        assert!(acc > 0.5, "{acc}");
    }

    #[test]
    fn untrained_classifier_is_near_uniform() {
        let data = ClassificationData { x: vec![vec![0.5, -1.0], vec![1.5, 2.0]], labels: vec![0, 1] };
        let m = fit_classifier(&data, 3, vec![0, 1], 0, GD_RATE, &mut rng(13));
        let p = m.predict_proba(&[0.0, 0.0]);
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 0.05));
    }

    #[test]
    fn two_model_scores() {
        let bank = two_model_class(5.0).unwrap();
        let class = bank.class_for(&[vec![1.0]], &[2.0]).unwrap();
        match &class.models()[0] {
            ModelEvaluations::Residual { pred_calib, pred_test } => {
                assert_eq!(pred_calib[0], 6.0);
                assert_eq!(*pred_test, 7.0);
            }
            _ => panic!(),
        }
        match &class.models()[1] {
            ModelEvaluations::Residual { pred_test, .. } => assert_eq!(*pred_test, -3.0),
            _ => panic!(),
        }
        assert!(two_model_class(0.0).is_err());
    }
}
