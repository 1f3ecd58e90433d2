//! Mean set-size loss over a fixed set of evaluation points, its exact
//! profile in the threshold `q`, and the inverse of that profile.

use crate::error::{ModselError, Result};
use crate::pwl::{tol_eq, PiecewiseLinearFn};
use crate::scores::{ModelClass, ModelEvaluations, Point};

/// Points the loss averages over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalPoints {
    pub calib: Vec<usize>,
    pub include_test: bool,
}

impl EvalPoints {
    /// All `n` calibration points plus the test point.
    pub fn all(n: usize) -> Self {
        Self {
            calib: (0..n).collect(),
            include_test: true,
        }
    }

    pub fn calib_only(calib: Vec<usize>) -> Self {
        Self {
            calib,
            include_test: false,
        }
    }

    pub fn len(&self) -> usize {
        self.calib.len() + usize::from(self.include_test)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn points(&self) -> impl Iterator<Item = Point> + '_ {
        self.calib
            .iter()
            .map(|&i| Point::Calib(i))
            .chain(self.include_test.then_some(Point::Test))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum LossModel {
    Residual,
    Rescaled { mean_sigma: f64 },
    // gaps ascending with suffix sums, suffix[j] = sum of gaps[j..]
    Cqr { gaps: Vec<f64>, suffix: Vec<f64> },
    // every probability at every eval point, ascending
    Discrete { probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossContext {
    models: Vec<LossModel>,
    profiles: Vec<Option<PiecewiseLinearFn>>,
    m: usize,
}

impl LossContext {
    pub fn new(class: &ModelClass, eval: &EvalPoints) -> Result<Self> {
        if eval.is_empty() {
            return Err(ModselError::Empty);
        }
        let m = eval.len();
        let mut models = Vec::with_capacity(class.len());
        for model in class.models() {
            models.push(Self::summarize(model, eval)?);
        }
        let mut ctx = Self {
            models,
            profiles: Vec::new(),
            m,
        };
        ctx.profiles = (0..ctx.models.len()).map(|l| ctx.build_profile(l)).collect();
        Ok(ctx)
    }

    fn summarize(model: &ModelEvaluations, eval: &EvalPoints) -> Result<LossModel> {
        let m = eval.len() as f64;
        Ok(match model {
            ModelEvaluations::Residual { .. } => LossModel::Residual,
            ModelEvaluations::RescaledResidual { .. } => {
                // set_size at q = 1/2 is exactly sigma; summing in sorted
                // order keeps the mean independent of point order
                let mut sig = Vec::with_capacity(eval.len());
                for p in eval.points() {
                    sig.push(model.set_size(p, 0.5)?);
                }
                sig.sort_by(f64::total_cmp);
                LossModel::Rescaled {
                    mean_sigma: sig.iter().sum::<f64>() / m,
                }
            }
            ModelEvaluations::Cqr { .. } => {
                let mut gaps = Vec::with_capacity(eval.len());
                for p in eval.points() {
                    gaps.push(model.set_size(p, 0.0)?);
                }
                gaps.sort_by(f64::total_cmp);
                let mut suffix = vec![0.0; gaps.len() + 1];
                for j in (0..gaps.len()).rev() {
                    suffix[j] = suffix[j + 1] + gaps[j];
                }
                LossModel::Cqr { gaps, suffix }
            }
            ModelEvaluations::CondDensity { p_calib, p_test } => {
                let mut probs = Vec::new();
                for p in eval.points() {
                    match p {
                        Point::Calib(i) => {
                            let row = p_calib.get(i).ok_or(ModselError::IndexOutOfRange {
                                index: i,
                                len: p_calib.len(),
                            })?;
                            probs.extend_from_slice(row);
                        }
                        Point::Test => probs.extend_from_slice(p_test),
                    }
                }
                probs.sort_by(f64::total_cmp);
                LossModel::Discrete { probs }
            }
        })
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    /// Number of evaluation points.
    pub fn eval_count(&self) -> usize {
        self.m
    }

    fn check(&self, lambda: usize) -> Result<()> {
        if lambda >= self.models.len() {
            Err(ModselError::IndexOutOfRange {
                index: lambda,
                len: self.models.len(),
            })
        } else {
            Ok(())
        }
    }

    /// `L(lambda, q)`; for discrete families `q = +inf` gives the label count.
    pub fn loss(&self, lambda: usize, q: f64) -> Result<f64> {
        self.check(lambda)?;
        Ok(self.eval(lambda, q))
    }

    /// Unchecked [`Self::loss`] for hot loops.
    pub(crate) fn eval(&self, lambda: usize, q: f64) -> f64 {
        if q == f64::NEG_INFINITY {
            return 0.0;
        }
        let m = self.m as f64;
        match &self.models[lambda] {
            LossModel::Residual => (2.0 * q).max(0.0),
            LossModel::Rescaled { mean_sigma } => (2.0 * q).max(0.0) * mean_sigma,
            LossModel::Cqr { gaps, suffix } => {
                if q == f64::INFINITY {
                    return f64::INFINITY;
                }
                let start = gaps.partition_point(|&g| g + 2.0 * q <= 0.0);
                ((suffix[start] + 2.0 * q * (gaps.len() - start) as f64) / m).max(0.0)
            }
            LossModel::Discrete { probs } => {
                let below = probs.partition_point(|&p| p < -q);
                (probs.len() - below) as f64 / m
            }
        }
    }

    fn build_profile(&self, lambda: usize) -> Option<PiecewiseLinearFn> {
        match &self.models[lambda] {
            LossModel::Residual => Some(PiecewiseLinearFn::new(vec![0.0], 0.0, vec![0.0, 2.0]).ok()?),
            LossModel::Rescaled { mean_sigma } => {
                Some(PiecewiseLinearFn::new(vec![0.0], 0.0, vec![0.0, 2.0 * mean_sigma]).ok()?)
            }
            LossModel::Cqr { gaps, .. } => {
                let mut knots: Vec<f64> = gaps.iter().rev().map(|g| -0.5 * g).collect();
                knots.dedup();
                let points: Vec<(f64, f64)> =
                    knots.iter().map(|&t| (t, self.eval(lambda, t))).collect();
                Some(PiecewiseLinearFn::from_points(&points, 0.0, 2.0))
            }
            LossModel::Discrete { .. } => None,
        }
    }

    /// Exact profile `q -> L(lambda, q)` for continuous families.
    pub fn loss_profile(&self, lambda: usize) -> Result<&PiecewiseLinearFn> {
        self.check(lambda)?;
        self.profiles[lambda].as_ref().ok_or(ModselError::NeedsContinuous)
    }

    /// `sup { q : L(lambda, q) <= target }`.
    ///
    /// For label sets the loss is a step function and the supremum is not
    /// attained: the returned `q` is the first threshold where the count
    /// exceeds the budget.
    pub fn invert_loss(&self, lambda: usize, target: f64) -> Result<f64> {
        self.check(lambda)?;
        if let Some(p) = &self.profiles[lambda] {
            return Ok(p.invert_monotone(target));
        }
        let LossModel::Discrete { probs } = &self.models[lambda] else {
            unreachable!("continuous families carry a profile")
        };
        if target.is_nan() {
            return Ok(f64::NAN);
        }
        let budget = target * self.m as f64;
        if budget < -tol_eq(budget) {
            return Ok(f64::NEG_INFINITY);
        }
        if budget == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        let c_max = (budget + tol_eq(budget)).floor() as usize;
        if c_max >= probs.len() {
            return Ok(f64::INFINITY);
        }
        Ok(-probs[probs.len() - 1 - c_max])
    }

    /// `inf { q : L(lambda, q) >= target }`.
    pub fn invert_loss_strict(&self, lambda: usize, target: f64) -> Result<f64> {
        self.check(lambda)?;
        if let Some(p) = &self.profiles[lambda] {
            return Ok(p.invert_monotone_strict(target));
        }
        let LossModel::Discrete { probs } = &self.models[lambda] else {
            unreachable!("continuous families carry a profile")
        };
        if target.is_nan() {
            return Ok(f64::NAN);
        }
        let need = target * self.m as f64;
        if need == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        let c_min = (need - tol_eq(need)).ceil();
        if c_min <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let c_min = c_min as usize;
        if c_min > probs.len() {
            return Ok(f64::INFINITY);
        }
        Ok(-probs[probs.len() - c_min])
    }
}
