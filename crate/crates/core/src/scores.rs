//! Conformity-score families and the geometry of their level sets.
//!
//! A pretrained model only enters through its evaluations at the calibration
//! points and at the test point. Four families are supported:
//!
//! | family            | score `S(x, y)`                       |
//! |-------------------|---------------------------------------|
//! | residual          | `abs(y - f(x))`                       |
//! | rescaled residual | `abs(y - f(x)) / sigma(x)`            |
//! | CQR               | `max(qlo(x) - y, y - qhi(x))`         |
//! | conditional prob. | `-p(y / x)` over a finite label space |

use serde::{Deserialize, Serialize};

use crate::error::{ModselError, Result};
use crate::pwl::PiecewiseLinearFn;
use crate::region::{Interval, PredictionRegion};

/// Evaluation point: a calibration index or the test point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Point {
    Calib(usize),
    Test,
}

/// Observed calibration responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Responses {
    Real(Vec<f64>),
    Labels(Vec<usize>),
}

impl Responses {
    pub fn len(&self) -> usize {
        match self {
            Self::Real(v) => v.len(),
            Self::Labels(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        match self {
            Self::Real(v) => Self::Real(idx.iter().map(|&i| v[i]).collect()),
            Self::Labels(v) => Self::Labels(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreFamily {
    Residual,
    RescaledResidual,
    Cqr,
    CondDensity,
}

impl ScoreFamily {
    pub fn is_continuous(self) -> bool {
        !matches!(self, Self::CondDensity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelEvaluations {
    Residual {
        pred_calib: Vec<f64>,
        pred_test: f64,
    },
    RescaledResidual {
        pred_calib: Vec<f64>,
        pred_test: f64,
        sigma_calib: Vec<f64>,
        sigma_test: f64,
    },
    Cqr {
        qlo_calib: Vec<f64>,
        qhi_calib: Vec<f64>,
        qlo_test: f64,
        qhi_test: f64,
    },
    CondDensity {
        p_calib: Vec<Vec<f64>>,
        p_test: Vec<f64>,
    },
}

/// Score profile of the test point as a function of the candidate response.
#[derive(Debug, Clone, PartialEq)]
pub enum TestProfile {
    Continuous(PiecewiseLinearFn),
    Labels(Vec<f64>),
}

impl ModelEvaluations {
    pub fn family(&self) -> ScoreFamily {
        match self {
            Self::Residual { .. } => ScoreFamily::Residual,
            Self::RescaledResidual { .. } => ScoreFamily::RescaledResidual,
            Self::Cqr { .. } => ScoreFamily::Cqr,
            Self::CondDensity { .. } => ScoreFamily::CondDensity,
        }
    }

    /// Number of calibration points.
    pub fn n(&self) -> usize {
        match self {
            Self::Residual { pred_calib, .. } | Self::RescaledResidual { pred_calib, .. } => {
                pred_calib.len()
            }
            Self::Cqr { qlo_calib, .. } => qlo_calib.len(),
            Self::CondDensity { p_calib, .. } => p_calib.len(),
        }
    }

    /// Label count for the conditional-probability family.
    pub fn classes(&self) -> Option<usize> {
        match self {
            Self::CondDensity { p_test, .. } => Some(p_test.len()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let bad = |msg: &str| Err(ModselError::InvalidModelClass(msg.to_string()));
        match self {
            Self::Residual { pred_test, pred_calib } => {
                if !pred_test.is_finite() || pred_calib.iter().any(|v| !v.is_finite()) {
                    return bad("non-finite prediction");
                }
            }
            Self::RescaledResidual {
                pred_calib,
                pred_test,
                sigma_calib,
                sigma_test,
            } => {
                if sigma_calib.len() != n {
                    return bad("sigma length differs from calibration size");
                }
                if !pred_test.is_finite() || pred_calib.iter().any(|v| !v.is_finite()) {
                    return bad("non-finite prediction");
                }
                if !(*sigma_test > 0.0) || sigma_calib.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
                    return bad("sigma must be positive");
                }
            }
            Self::Cqr {
                qlo_calib,
                qhi_calib,
                qlo_test,
                qhi_test,
            } => {
                if qhi_calib.len() != n {
                    return bad("quantile columns differ in length");
                }
                if qlo_test > qhi_test || qlo_calib.iter().zip(qhi_calib).any(|(l, h)| l > h) {
                    return bad("lower quantile exceeds upper quantile");
                }
                if !qlo_test.is_finite() || !qhi_test.is_finite() {
                    return bad("non-finite quantile");
                }
            }
            Self::CondDensity { p_calib, p_test } => {
                let k = p_test.len();
                if k == 0 {
                    return bad("empty label space");
                }
                for p in p_calib.iter().chain(std::iter::once(p_test)) {
                    if p.len() != k {
                        return bad("probability vectors differ in length");
                    }
                    if p.iter().any(|v| !(*v >= 0.0)) {
                        return bad("negative probability");
                    }
                    if (p.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
                        return bad("probabilities do not sum to one");
                    }
                }
            }
        }
        Ok(())
    }

    fn check_index(&self, i: usize) -> Result<()> {
        let n = self.n();
        if i >= n {
            Err(ModselError::IndexOutOfRange { index: i, len: n })
        } else {
            Ok(())
        }
    }

    /// Score of the real response `y` at a point (continuous families).
    pub fn score_real(&self, point: Point, y: f64) -> Result<f64> {
        if let Point::Calib(i) = point {
            self.check_index(i)?;
        }
        let pick = |calib: &[f64], test: f64| match point {
            Point::Calib(i) => calib[i],
            Point::Test => test,
        };
        Ok(match self {
            Self::Residual { pred_calib, pred_test } => (y - pick(pred_calib, *pred_test)).abs(),
            Self::RescaledResidual {
                pred_calib,
                pred_test,
                sigma_calib,
                sigma_test,
            } => (y - pick(pred_calib, *pred_test)).abs() / pick(sigma_calib, *sigma_test),
            Self::Cqr {
                qlo_calib,
                qhi_calib,
                qlo_test,
                qhi_test,
            } => (pick(qlo_calib, *qlo_test) - y).max(y - pick(qhi_calib, *qhi_test)),
            Self::CondDensity { .. } => return Err(ModselError::NeedsContinuous),
        })
    }

    /// Score of label `y` at a point (conditional-probability family).
    pub fn score_label(&self, point: Point, y: usize) -> Result<f64> {
        let Self::CondDensity { p_calib, p_test } = self else {
            return Err(ModselError::NeedsDiscrete);
        };
        let p = match point {
            Point::Calib(i) => {
                self.check_index(i)?;
                &p_calib[i]
            }
            Point::Test => p_test,
        };
        p.get(y)
            .map(|v| -v)
            .ok_or(ModselError::LabelOutOfRange {
                label: y,
                classes: p.len(),
            })
    }

    /// Calibration score `S(X_i, Y_i)`.
    pub fn score_calib(&self, i: usize, y: &Responses) -> Result<f64> {
        match y {
            Responses::Real(v) => {
                let yi = *v.get(i).ok_or(ModselError::IndexOutOfRange { index: i, len: v.len() })?;
                self.score_real(Point::Calib(i), yi)
            }
            Responses::Labels(v) => {
                let yi = *v.get(i).ok_or(ModselError::IndexOutOfRange { index: i, len: v.len() })?;
                self.score_label(Point::Calib(i), yi)
            }
        }
    }

    /// `y -> S(x_test, y)`.
    pub fn score_profile_test(&self) -> TestProfile {
        match self {
            Self::Residual { pred_test, .. } => {
                TestProfile::Continuous(PiecewiseLinearFn::v_shape(*pred_test, 1.0))
            }
            Self::RescaledResidual {
                pred_test,
                sigma_test,
                ..
            } => TestProfile::Continuous(PiecewiseLinearFn::v_shape(*pred_test, 1.0 / sigma_test)),
            Self::Cqr { qlo_test, qhi_test, .. } => {
                let mid = 0.5 * (qlo_test + qhi_test);
                let depth = -0.5 * (qhi_test - qlo_test);
                let f = PiecewiseLinearFn::new(vec![mid], depth, vec![-1.0, 1.0])
                    .expect("finite CQR quantiles");
                TestProfile::Continuous(f)
            }
            Self::CondDensity { p_test, .. } => {
                TestProfile::Labels(p_test.iter().map(|p| -p).collect())
            }
        }
    }

    /// `{ y : S(x_test, y) <= q }`.
    pub fn region_at_threshold(&self, q: f64) -> PredictionRegion {
        if q.is_nan() || q == f64::NEG_INFINITY {
            return PredictionRegion::Empty;
        }
        if q == f64::INFINITY && self.family().is_continuous() {
            return PredictionRegion::EntireSpace;
        }
        match self {
            Self::Residual { pred_test, .. } => {
                if q < 0.0 {
                    PredictionRegion::Empty
                } else {
                    PredictionRegion::from_intervals(vec![Interval::new(pred_test - q, pred_test + q)])
                }
            }
            Self::RescaledResidual {
                pred_test,
                sigma_test,
                ..
            } => {
                if q < 0.0 {
                    PredictionRegion::Empty
                } else {
                    let h = q * sigma_test;
                    PredictionRegion::from_intervals(vec![Interval::new(pred_test - h, pred_test + h)])
                }
            }
            Self::Cqr { qlo_test, qhi_test, .. } => {
                PredictionRegion::from_intervals(vec![Interval::new(qlo_test - q, qhi_test + q)])
            }
            Self::CondDensity { p_test, .. } => PredictionRegion::from_labels(
                p_test
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| **p >= -q)
                    .map(|(y, _)| y)
                    .collect(),
            ),
        }
    }

    /// Restriction to a subset of the calibration points, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let n = self.n();
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(ModselError::IndexOutOfRange { index: bad, len: n });
        }
        let take = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Ok(match self {
            Self::Residual { pred_calib, pred_test } => Self::Residual {
                pred_calib: take(pred_calib),
                pred_test: *pred_test,
            },
            Self::RescaledResidual {
                pred_calib,
                pred_test,
                sigma_calib,
                sigma_test,
            } => Self::RescaledResidual {
                pred_calib: take(pred_calib),
                pred_test: *pred_test,
                sigma_calib: take(sigma_calib),
                sigma_test: *sigma_test,
            },
            Self::Cqr {
                qlo_calib,
                qhi_calib,
                qlo_test,
                qhi_test,
            } => Self::Cqr {
                qlo_calib: take(qlo_calib),
                qhi_calib: take(qhi_calib),
                qlo_test: *qlo_test,
                qhi_test: *qhi_test,
            },
            Self::CondDensity { p_calib, p_test } => Self::CondDensity {
                p_calib: idx.iter().map(|&i| p_calib[i].clone()).collect(),
                p_test: p_test.clone(),
            },
        })
    }

    /// `|C_q(x)|` at one point: width for continuous families, cardinality
    /// for labels.
    pub fn set_size(&self, point: Point, q: f64) -> Result<f64> {
        if let Point::Calib(i) = point {
            self.check_index(i)?;
        }
        if q == f64::INFINITY {
            return Ok(match self {
                Self::CondDensity { p_test, .. } => p_test.len() as f64,
                _ => f64::INFINITY,
            });
        }
        let pick = |calib: &[f64], test: f64| match point {
            Point::Calib(i) => calib[i],
            Point::Test => test,
        };
        Ok(match self {
            Self::Residual { .. } => (2.0 * q).max(0.0),
            Self::RescaledResidual {
                sigma_calib,
                sigma_test,
                ..
            } => (2.0 * q).max(0.0) * pick(sigma_calib, *sigma_test),
            Self::Cqr {
                qlo_calib,
                qhi_calib,
                qlo_test,
                qhi_test,
            } => {
                let gap = pick(qhi_calib, *qhi_test) - pick(qlo_calib, *qlo_test);
                (gap + 2.0 * q).max(0.0)
            }
            Self::CondDensity { p_calib, p_test } => {
                let p = match point {
                    Point::Calib(i) => &p_calib[i],
                    Point::Test => p_test,
                };
                p.iter().filter(|v| **v >= -q).count() as f64
            }
        })
    }
}

/// A finite collection of pretrained models sharing one score family.
/// Indices `0..len()` are the canonical order used for tie-breaking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelClass {
    models: Vec<ModelEvaluations>,
}

impl ModelClass {
    pub fn new(models: Vec<ModelEvaluations>) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| ModselError::InvalidModelClass("no models".into()))?;
        let family = first.family();
        let n = first.n();
        let classes = first.classes();
        for m in &models {
            if m.family() != family {
                return Err(ModselError::InvalidModelClass("mixed score families".into()));
            }
            if m.n() != n {
                return Err(ModselError::InvalidModelClass(
                    "models disagree on calibration size".into(),
                ));
            }
            if m.classes() != classes {
                return Err(ModselError::InvalidModelClass(
                    "models disagree on label count".into(),
                ));
            }
            m.validate()?;
        }
        if n == 0 {
            return Err(ModselError::InvalidModelClass("no calibration points".into()));
        }
        Ok(Self { models })
    }

    pub fn models(&self) -> &[ModelEvaluations] {
        &self.models
    }

    pub fn model(&self, lambda: usize) -> Result<&ModelEvaluations> {
        self.models.get(lambda).ok_or(ModselError::IndexOutOfRange {
            index: lambda,
            len: self.models.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn family(&self) -> ScoreFamily {
        self.models[0].family()
    }

    pub fn n(&self) -> usize {
        self.models[0].n()
    }

    pub fn classes(&self) -> Option<usize> {
        self.models[0].classes()
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let models = self
            .models
            .iter()
            .map(|m| m.subset(idx))
            .collect::<Result<Vec<_>>>()?;
        Self::new(models)
    }

    /// The region returned when no finite threshold exists.
    pub fn full_region(&self) -> PredictionRegion {
        match self.classes() {
            Some(k) => PredictionRegion::from_labels((0..k).collect()),
            None => PredictionRegion::EntireSpace,
        }
    }

    /// Checks that responses match the class in length and kind.
    pub fn check_responses(&self, y: &Responses) -> Result<()> {
        if y.len() != self.n() {
            return Err(ModselError::InvalidModelClass(format!(
                "{} responses for {} calibration points",
                y.len(),
                self.n()
            )));
        }
        match (y, self.classes()) {
            (Responses::Real(v), None) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(ModselError::InvalidModelClass("non-finite response".into()));
                }
            }
            (Responses::Labels(v), Some(k)) => {
                if let Some(&bad) = v.iter().find(|&&l| l >= k) {
                    return Err(ModselError::LabelOutOfRange { label: bad, classes: k });
                }
            }
            _ => return Err(ModselError::ResponseMismatch),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(f: f64) -> ModelEvaluations {
        ModelEvaluations::Residual {
            pred_calib: vec![f],
            pred_test: f,
        }
    }

    fn cqr(lo: f64, hi: f64) -> ModelEvaluations {
        ModelEvaluations::Cqr {
            qlo_calib: vec![lo],
            qhi_calib: vec![hi],
            qlo_test: lo,
            qhi_test: hi,
        }
    }

    fn density(p: Vec<f64>) -> ModelEvaluations {
        ModelEvaluations::CondDensity {
            p_calib: vec![p.clone()],
            p_test: p,
        }
    }

    #[test]
    fn calibration_scores() {
        let y = Responses::Real(vec![5.0]);
        assert_eq!(residual(2.0).score_calib(0, &y).unwrap(), 3.0);
        let y = Responses::Real(vec![2.0]);
        assert_eq!(cqr(1.0, 3.0).score_calib(0, &y).unwrap(), -1.0);
        let y = Responses::Labels(vec![1]);
        assert_eq!(density(vec![0.5, 0.3, 0.2]).score_calib(0, &y).unwrap(), -0.3);
        assert!(matches!(
            residual(2.0).score_calib(3, &Responses::Real(vec![5.0])),
            Err(ModselError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn test_profiles() {
        let TestProfile::Continuous(f) = residual(2.0).score_profile_test() else { panic!() };
        assert_eq!(f.eval(2.0), 0.0);
        assert_eq!(f.eval(-1.0), 3.0);
        let TestProfile::Continuous(f) = cqr(1.0, 3.0).score_profile_test() else { panic!() };
        assert_eq!(f.eval(2.0), -1.0);
        assert_eq!(f.eval(0.0), 1.0);
        assert_eq!(f.eval(5.0), 2.0);
        let m = ModelEvaluations::RescaledResidual {
            pred_calib: vec![0.0],
            pred_test: 0.0,
            sigma_calib: vec![1.0],
            sigma_test: 2.0,
        };
        let TestProfile::Continuous(f) = m.score_profile_test() else { panic!() };
        assert_eq!(f.eval(3.0), 1.5);
    }

    #[test]
    fn regions() {
        assert_eq!(residual(2.0).region_at_threshold(1.0).to_string(), "[1.0,3.0]");
        assert_eq!(residual(2.0).region_at_threshold(-0.5), PredictionRegion::Empty);
        assert_eq!(
            density(vec![0.5, 0.3, 0.2]).region_at_threshold(-0.25),
            PredictionRegion::LabelSet(vec![0, 1])
        );
        assert_eq!(cqr(1.0, 3.0).region_at_threshold(-1.5), PredictionRegion::Empty);
        assert_eq!(cqr(1.0, 3.0).region_at_threshold(-1.0).to_string(), "[2.0,2.0]");
        assert_eq!(
            residual(0.0).region_at_threshold(f64::INFINITY),
            PredictionRegion::EntireSpace
        );
    }

    #[test]
    fn set_sizes() {
        assert_eq!(residual(0.0).set_size(Point::Test, 1.0).unwrap(), 2.0);
        assert_eq!(cqr(0.0, 2.0).set_size(Point::Calib(0), 0.5).unwrap(), 3.0);
        let m = ModelEvaluations::RescaledResidual {
            pred_calib: vec![0.0],
            pred_test: 0.0,
            sigma_calib: vec![3.0],
            sigma_test: 3.0,
        };
        assert_eq!(m.set_size(Point::Calib(0), -1.0).unwrap(), 0.0);
        assert_eq!(m.set_size(Point::Calib(0), f64::INFINITY).unwrap(), f64::INFINITY);
        assert_eq!(density(vec![0.5, 0.3, 0.2]).set_size(Point::Test, -0.25).unwrap(), 2.0);
    }

    #[test]
    fn class_validation() {
        assert!(ModelClass::new(vec![]).is_err());
        assert!(ModelClass::new(vec![residual(0.0), cqr(0.0, 1.0)]).is_err());
        assert!(ModelClass::new(vec![density(vec![0.5, 0.6])]).is_err());
        let c = ModelClass::new(vec![residual(0.0), residual(1.0)]).unwrap();
        assert!(c.check_responses(&Responses::Labels(vec![0])).is_err());
        assert!(c.check_responses(&Responses::Real(vec![0.0])).is_ok());
    }
}
