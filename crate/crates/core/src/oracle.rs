//! Brute-force evaluation of the selection-aware set definitions, used as a
//! reference in tests.
//!
//! Every candidate response is checked directly: order statistics come from
//! inserting the test score into the sorted calibration scores, and model
//! selection minimizes over the whole class. Nothing here goes through the
//! competing sets or the piecewise-linear machinery.

use crate::error::{ModselError, Result};
use crate::region::{Interval, PredictionRegion};
use crate::scores::Point;
use crate::select::Session;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    /// Bisect each accept/reject transition down to rounding level.
    pub refine: bool,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        let g = Self {
            lo,
            hi,
            step,
            refine: true,
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid over `[lo, hi]` with the given number of steps.
    pub fn with_steps(lo: f64, hi: f64, steps: usize) -> Result<Self> {
        Self::new(lo, hi, (hi - lo) / steps.max(1) as f64)
    }

    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.lo <= self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            Err(ModselError::EmptyGrid)
        } else {
            Ok(())
        }
    }

    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.step).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, j: usize) -> f64 {
        self.lo + j as f64 * self.step
    }

    /// A grid covering every response either set definition can accept,
    /// padded by a quarter of its width, with `steps` steps.
    pub fn default_for(session: &Session, steps: usize) -> Result<Self> {
        let nm = session.n_models();
        let mut top = f64::NEG_INFINITY;
        for l in 0..nm {
            for i in 0..session.n() {
                top = top.max(session.calib_loss(l, i));
            }
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for l in 0..nm {
            let model = session.class().model(l)?;
            let q = session.ctx().invert_loss(l, top)?;
            let cover = match model.region_at_threshold(q).hull() {
                Some(h) if h.lo.is_finite() && h.hi.is_finite() => h,
                _ => {
                    // unbounded: fall back to the point prediction region at 0
                    let s = model.region_at_threshold(0.0).hull().unwrap_or(Interval::new(0.0, 0.0));
                    Interval::new(s.lo - 10.0, s.hi + 10.0)
                }
            };
            lo = lo.min(cover.lo);
            hi = hi.max(cover.hi);
        }
        let pad = 0.25 * (hi - lo).max(1e-3);
        Self::with_steps(lo - pad, hi + pad, steps)
    }
}

/// `k`-th smallest (1-based) of `sorted` with `s` inserted.
fn kth_with_insert(sorted: &[f64], s: f64, k: i64) -> f64 {
    let m = sorted.len() as i64 + 1;
    if k <= 0 {
        return f64::NEG_INFINITY;
    }
    if k > m {
        return f64::INFINITY;
    }
    let p = sorted.partition_point(|&a| a < s) as i64;
    if k <= p {
        sorted[k as usize - 1]
    } else if k == p + 1 {
        s
    } else {
        sorted[k as usize - 2]
    }
}

/// `k`-th smallest of `sorted` with the element at 1-based position `r`
/// removed and `s` inserted.
fn kth_swap(sorted: &[f64], r: usize, s: f64, k: i64) -> f64 {
    let m = sorted.len() as i64;
    if k <= 0 {
        return f64::NEG_INFINITY;
    }
    if k > m {
        return f64::INFINITY;
    }
    let b = |j: i64| -> f64 {
        // 1-based position in the retained scores
        if (j as usize) < r {
            sorted[j as usize - 1]
        } else {
            sorted[j as usize]
        }
    };
    let pa = sorted.partition_point(|&a| a < s);
    let p = (pa - usize::from(r <= pa)) as i64;
    if k <= p {
        b(k)
    } else if k == p + 1 {
        s
    } else {
        b(k - 1)
    }
}

fn accept_augmented(session: &Session, y: f64) -> Result<bool> {
    let cs = session.scores();
    let k = cs.k();
    let mut vals = Vec::with_capacity(session.n_models());
    let mut parts = Vec::with_capacity(session.n_models());
    for (l, model) in session.class().models().iter().enumerate() {
        let s = model.score_real(Point::Test, y)?;
        let q = kth_with_insert(cs.sorted(l), s, k);
        vals.push((l, session.ctx().loss(l, q)?));
        parts.push((s, q));
    }
    let chosen = session.tie_rule().argmin(&vals);
    Ok(parts[chosen].0 <= parts[chosen].1)
}

fn accept_loo(session: &Session, y: f64) -> Result<bool> {
    let cs = session.scores();
    let k = cs.k();
    let n = session.n();
    let lam = session.select_lambda_hat();
    let s: Vec<f64> = session
        .class()
        .models()
        .iter()
        .map(|m| m.score_real(Point::Test, y))
        .collect::<Result<_>>()?;
    let mut chosen_losses = Vec::with_capacity(n);
    let mut vals = Vec::with_capacity(session.n_models());
    for i in 0..n {
        vals.clear();
        for l in 0..session.n_models() {
            let q = kth_swap(cs.sorted(l), cs.rank(l, i), s[l], k);
            vals.push((l, session.ctx().loss(l, q)?));
        }
        let c = session.tie_rule().argmin(&vals);
        chosen_losses.push(session.calib_loss(c, i));
    }
    chosen_losses.sort_by(f64::total_cmp);
    let r = crate::calib::order_stat(&chosen_losses, k);
    Ok(session.ctx().loss(lam, s[lam])? <= r)
}

fn scan(grid: &GridSpec, accept: impl Fn(f64) -> Result<bool>) -> Result<PredictionRegion> {
    grid.validate()?;
    let len = grid.len();
    let flags = (0..len)
        .map(|j| accept(grid.point(j)))
        .collect::<Result<Vec<bool>>>()?;
    let bisect = |inside: f64, outside: f64| -> Result<f64> {
        let (mut a, mut b) = (inside, outside);
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if mid == a || mid == b {
                break;
            }
            if accept(mid)? {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(a)
    };
    let mut out = Vec::new();
    let mut j = 0;
    while j < len {
        if !flags[j] {
            j += 1;
            continue;
        }
        let start = j;
        while j + 1 < len && flags[j + 1] {
            j += 1;
        }
        let mut lo = grid.point(start);
        let mut hi = grid.point(j);
        if grid.refine {
            if start > 0 {
                lo = bisect(lo, grid.point(start - 1))?;
            }
            if j + 1 < len {
                hi = bisect(hi, grid.point(j + 1))?;
            }
        }
        out.push(Interval::new(lo, hi));
        j += 1;
    }
    Ok(PredictionRegion::from_intervals(out))
}

/// Grid evaluation of the test-augmented selection set.
pub fn grid_modsel_cp(session: &Session, grid: &GridSpec) -> Result<PredictionRegion> {
    if !session.class().family().is_continuous() {
        return Err(ModselError::NeedsContinuous);
    }
    scan(grid, |y| accept_augmented(session, y))
}

/// Grid evaluation of the leave-one-out selection set.
pub fn grid_modsel_cp_loo(session: &Session, grid: &GridSpec) -> Result<PredictionRegion> {
    if !session.class().family().is_continuous() {
        return Err(ModselError::NeedsContinuous);
    }
    scan(grid, |y| accept_loo(session, y))
}

/// Whether a single response is accepted by the test-augmented definition.
pub fn accepts_modsel_cp(session: &Session, y: f64) -> Result<bool> {
    accept_augmented(session, y)
}

/// Whether a single response is accepted by the leave-one-out definition.
pub fn accepts_modsel_cp_loo(session: &Session, y: f64) -> Result<bool> {
    accept_loo(session, y)
}

fn sorted_quantile(mut values: Vec<f64>, k: i64) -> f64 {
    values.sort_by(f64::total_cmp);
    crate::calib::order_stat(&values, k)
}

/// Label-by-label evaluation of the test-augmented definition with explicit
/// multisets.
pub fn enumerate_modsel_cp(session: &Session) -> Result<PredictionRegion> {
    let classes = session.class().classes().ok_or(ModselError::NeedsDiscrete)?;
    let cs = session.scores();
    let mut labels = Vec::new();
    for y in 0..classes {
        let mut vals = Vec::new();
        let mut parts = Vec::new();
        for (l, model) in session.class().models().iter().enumerate() {
            let s = model.score_label(Point::Test, y)?;
            let mut multiset = cs.scores(l).to_vec();
            multiset.push(s);
            let q = sorted_quantile(multiset, cs.k());
            vals.push((l, session.ctx().loss(l, q)?));
            parts.push((s, q));
        }
        let c = session.tie_rule().argmin(&vals);
        if parts[c].0 <= parts[c].1 {
            labels.push(y);
        }
    }
    Ok(PredictionRegion::from_labels(labels))
}

/// Label-by-label evaluation of the leave-one-out definition with explicit
/// multisets.
pub fn enumerate_modsel_cp_loo(session: &Session) -> Result<PredictionRegion> {
    let classes = session.class().classes().ok_or(ModselError::NeedsDiscrete)?;
    let cs = session.scores();
    let n = session.n();
    let lam = session.select_lambda_hat();
    let mut labels = Vec::new();
    for y in 0..classes {
        let s: Vec<f64> = session
            .class()
            .models()
            .iter()
            .map(|m| m.score_label(Point::Test, y))
            .collect::<Result<_>>()?;
        let mut chosen = Vec::with_capacity(n);
        for i in 0..n {
            let mut vals = Vec::new();
            for l in 0..session.n_models() {
                let mut multiset: Vec<f64> = cs
                    .scores(l)
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &v)| v)
                    .collect();
                multiset.push(s[l]);
                vals.push((l, session.ctx().loss(l, sorted_quantile(multiset, cs.k()))?));
            }
            let c = session.tie_rule().argmin(&vals);
            chosen.push(session.calib_loss(c, i));
        }
        if session.ctx().loss(lam, s[lam])? <= sorted_quantile(chosen, cs.k()) {
            labels.push(y);
        }
    }
    Ok(PredictionRegion::from_labels(labels))
}

/// Measure (or cardinality) of the symmetric difference.
pub fn region_diff_measure(a: &PredictionRegion, b: &PredictionRegion) -> Result<f64> {
    a.symmetric_difference_measure(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::{ModelClass, ModelEvaluations, Responses};
    use crate::select::TieBreaker;

    fn hand(second: f64) -> Session {
        let class = ModelClass::new(
            [0.0, second]
                .iter()
                .map(|&f| ModelEvaluations::Residual {
                    pred_calib: vec![f; 3],
                    pred_test: f,
                })
                .collect(),
        )
        .unwrap();
        Session::new(class, Responses::Real(vec![0.5, 1.0, 2.0]), 0.5, TieBreaker::MinIndex).unwrap()
    }

    fn coarse(lo: f64, hi: f64) -> GridSpec {
        GridSpec {
            refine: false,
            ..GridSpec::new(lo, hi, 1e-3).unwrap()
        }
    }

    #[test]
    fn insertion_order_statistics() {
        let a = [0.5, 1.0, 2.0];
        assert_eq!(kth_with_insert(&a, 0.7, 2), 0.7);
        assert_eq!(kth_with_insert(&a, 5.0, 2), 1.0);
        assert_eq!(kth_with_insert(&a, 0.1, 2), 0.5);
        assert_eq!(kth_with_insert(&a, 0.1, 5), f64::INFINITY);
        // drop the 1.0 (position 2), insert 3.0: {0.5, 2, 3}
        assert_eq!(kth_swap(&a, 2, 3.0, 2), 2.0);
        assert_eq!(kth_swap(&a, 2, 3.0, 3), 3.0);
        assert_eq!(kth_swap(&a, 1, 0.0, 1), 0.0);
        assert_eq!(kth_swap(&a, 3, 0.7, 3), 1.0);
    }

    #[test]
    fn grid_hand_cases() {
        let s = hand(1.5);
        let g = grid_modsel_cp(&s, &coarse(-3.0, 4.0)).unwrap();
        let want: PredictionRegion = "[-0.5,0.5];[1.0,2.0]".parse().unwrap();
        assert!(region_diff_measure(&g, &want).unwrap() <= 4e-3, "{g}");
        let refined = grid_modsel_cp(&s, &GridSpec::new(-3.0, 4.0, 1e-2).unwrap()).unwrap();
        assert!(region_diff_measure(&refined, &want).unwrap() <= 1e-9, "{refined}");

        let s = hand(10.0);
        let g = grid_modsel_cp(&s, &coarse(-3.0, 13.0)).unwrap();
        let want: PredictionRegion = "[-1.0,1.0]".parse().unwrap();
        assert!(region_diff_measure(&g, &want).unwrap() <= 2e-3, "{g}");
    }

    #[test]
    fn loo_grid_matches_breakpoint_algorithm_on_hand_case() {
        let s = hand(1.5);
        let grid = GridSpec::new(-3.0, 4.0, 1e-3).unwrap();
        let g = grid_modsel_cp_loo(&s, &grid).unwrap();
        let exact = s.modsel_cp_loo().unwrap().region;
        assert!(region_diff_measure(&g, &exact).unwrap() <= 5e-3, "{g} vs {exact}");
    }

    #[test]
    fn default_grid_covers_outputs() {
        let s = hand(1.5);
        let g = GridSpec::default_for(&s, 1000).unwrap();
        assert!(g.lo < -0.5 && g.hi > 2.0);
        assert!(GridSpec::new(1.0, 0.0, 0.1).is_err());
        assert!(GridSpec::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn diff_measure() {
        let a: PredictionRegion = "[0.0,1.0]".parse().unwrap();
        let b: PredictionRegion = "[0.0,2.0]".parse().unwrap();
        assert_eq!(region_diff_measure(&a, &a).unwrap(), 0.0);
        assert_eq!(region_diff_measure(&a, &b).unwrap(), 1.0);
        let x = PredictionRegion::from_labels(vec![0, 1]);
        assert!(region_diff_measure(&a, &x).is_err());
    }
}
