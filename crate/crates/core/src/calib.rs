//! Empirical quantiles of calibration scores. Test-augmented and
//! leave-one-out thresholds are clamps of the test score between
//! neighbouring order statistics.

use crate::error::{ModselError, Result};
use crate::pwl::PiecewiseLinearFn;
use crate::scores::{ModelClass, Responses};

/// `ceil(x)`, except that values within rounding noise of an integer are
/// taken to be that integer. `0.9 * 10` must give 9, not 10.
pub fn robust_ceil(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as i64
    } else {
        x.ceil() as i64
    }
}

/// 1-based order statistic of sorted values: `-inf` for `k <= 0`, `+inf`
/// past the end.
pub fn order_stat(sorted: &[f64], k: i64) -> f64 {
    if k <= 0 {
        f64::NEG_INFINITY
    } else if k as usize > sorted.len() {
        f64::INFINITY
    } else {
        sorted[k as usize - 1]
    }
}

/// `Quantile_tau` of a multiset: the `ceil(tau * m)`-th smallest value.
pub fn empirical_quantile(values: &[f64], tau: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(ModselError::Empty);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(order_stat(&v, robust_ceil(tau * v.len() as f64)))
}

/// Order index `k = ceil((1 - alpha)(n + 1))` of the calibrated threshold.
pub fn calibration_rank(n: usize, alpha: f64) -> i64 {
    robust_ceil((1.0 - alpha) * (n as f64 + 1.0))
}

/// Position of a left-out point relative to the threshold order index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LooVariant {
    Below,
    At,
    Above,
}

impl LooVariant {
    pub const ALL: [LooVariant; 3] = [LooVariant::Below, LooVariant::At, LooVariant::Above];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Leave-one-out threshold profile in `y`.
#[derive(Debug, Clone, PartialEq)]
pub enum LooProfile {
    Profile(PiecewiseLinearFn),
    /// The order index exceeds the sample size; the threshold is `+inf`.
    Infinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationScores {
    alpha: f64,
    n: usize,
    k: i64,
    raw: Vec<Vec<f64>>,
    sorted: Vec<Vec<f64>>,
    // rank[lambda][i]: 1-based position of point i in sorted[lambda]
    rank: Vec<Vec<usize>>,
}

impl CalibrationScores {
    pub fn new(class: &ModelClass, responses: &Responses, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        class.check_responses(responses)?;
        let n = class.n();
        let mut raw = Vec::with_capacity(class.len());
        for m in class.models() {
            raw.push(
                (0..n)
                    .map(|i| m.score_calib(i, responses))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(Self::from_raw(raw, alpha))
    }

    /// Builds from per-model raw scores `[lambda][i]`.
    pub fn from_scores(raw: Vec<Vec<f64>>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let n = raw.first().map(Vec::len).ok_or(ModselError::Empty)?;
        if n == 0 || raw.iter().any(|r| r.len() != n) {
            return Err(ModselError::InvalidModelClass("ragged score table".into()));
        }
        if raw.iter().flatten().any(|s| s.is_nan()) {
            return Err(ModselError::InvalidModelClass("NaN score".into()));
        }
        Ok(Self::from_raw(raw, alpha))
    }

    fn from_raw(raw: Vec<Vec<f64>>, alpha: f64) -> Self {
        let n = raw[0].len();
        let mut sorted = Vec::with_capacity(raw.len());
        let mut rank = Vec::with_capacity(raw.len());
        for scores in &raw {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
            let mut r = vec![0; n];
            for (pos, &i) in order.iter().enumerate() {
                r[i] = pos + 1;
            }
            sorted.push(order.iter().map(|&i| scores[i]).collect());
            rank.push(r);
        }
        Self {
            alpha,
            n,
            k: calibration_rank(n, alpha),
            raw,
            sorted,
            rank,
        }
    }

    /// Same scores at another miscoverage level.
    pub fn at_level(&self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let mut out = self.clone();
        out.alpha = alpha;
        out.k = calibration_rank(self.n, alpha);
        Ok(out)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Order index of the calibrated threshold.
    pub fn k(&self) -> i64 {
        self.k
    }

    pub fn n_models(&self) -> usize {
        self.raw.len()
    }

    /// Scores in calibration order.
    pub fn scores(&self, lambda: usize) -> &[f64] {
        &self.raw[lambda]
    }

    pub fn sorted(&self, lambda: usize) -> &[f64] {
        &self.sorted[lambda]
    }

    pub fn rank(&self, lambda: usize, i: usize) -> usize {
        self.rank[lambda][i]
    }

    pub fn order_stat(&self, lambda: usize, k: i64) -> f64 {
        order_stat(&self.sorted[lambda], k)
    }

    pub fn q_hat(&self, lambda: usize) -> f64 {
        self.order_stat(lambda, self.k)
    }

    pub fn q_hat_minus(&self, lambda: usize) -> f64 {
        self.order_stat(lambda, self.k - 1)
    }

    pub fn q_hat_plus(&self, lambda: usize) -> f64 {
        self.order_stat(lambda, self.k + 1)
    }

    /// Threshold over the calibration scores augmented with `s_test`.
    pub fn q_hat_aug(&self, lambda: usize, s_test: f64) -> f64 {
        let lo = self.order_stat(lambda, self.k - 1);
        let hi = self.order_stat(lambda, self.k);
        s_test.max(lo).min(hi)
    }

    /// True when every leave-one-out threshold is `+inf`.
    pub fn loo_is_infinite(&self) -> bool {
        self.k > self.n as i64
    }

    pub fn loo_variant(&self, lambda: usize, i: usize) -> LooVariant {
        let r = self.rank[lambda][i] as i64;
        match r.cmp(&self.k) {
            std::cmp::Ordering::Less => LooVariant::Below,
            std::cmp::Ordering::Equal => LooVariant::At,
            std::cmp::Ordering::Greater => LooVariant::Above,
        }
    }

    /// Clamp bounds `(b_(k-1), b_(k))` of the retained scores when a point of
    /// the given variant is left out.
    pub fn variant_bounds(&self, lambda: usize, v: LooVariant) -> (f64, f64) {
        let k = self.k;
        match v {
            LooVariant::Below => (self.order_stat(lambda, k), self.order_stat(lambda, k + 1)),
            LooVariant::At => (self.order_stat(lambda, k - 1), self.order_stat(lambda, k + 1)),
            LooVariant::Above => (self.order_stat(lambda, k - 1), self.order_stat(lambda, k)),
        }
    }

    pub fn loo_bounds(&self, lambda: usize, i: usize) -> Result<(f64, f64)> {
        self.check_index(i)?;
        Ok(self.variant_bounds(lambda, self.loo_variant(lambda, i)))
    }

    /// Threshold over the scores without point `i`, plus `s_test`.
    pub fn q_hat_loo(&self, lambda: usize, i: usize, s_test: f64) -> Result<f64> {
        self.check_index(i)?;
        if self.loo_is_infinite() {
            return Ok(f64::INFINITY);
        }
        let (lo, hi) = self.loo_bounds(lambda, i)?;
        Ok(s_test.max(lo).min(hi))
    }

    /// `y -> q_hat_loo(lambda, i, test_profile(y))` as a clamp of the profile.
    pub fn q_hat_loo_profile(
        &self,
        lambda: usize,
        i: usize,
        test_profile: &PiecewiseLinearFn,
    ) -> Result<LooProfile> {
        self.check_index(i)?;
        if self.loo_is_infinite() {
            return Ok(LooProfile::Infinite);
        }
        let (lo, hi) = self.loo_bounds(lambda, i)?;
        Ok(LooProfile::Profile(test_profile.clamp(lo, hi)?))
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n {
            Err(ModselError::IndexOutOfRange { index: i, len: self.n })
        } else {
            Ok(())
        }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(ModselError::InvalidAlpha(alpha))
    }
}
