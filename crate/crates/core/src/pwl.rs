//! Continuous piecewise-linear functions of one real variable.
//!
//! A function is stored as its strictly increasing knots, its value at the
//! first knot and one slope per piece, the two unbounded end pieces included.
//! Clamping and composition insert new knots exactly where the function
//! crosses a clamp level or a knot of the outer function, so the algebra
//! stays closed and exact up to floating rounding.
//!
//! Score profiles `y -> S(x_test, y)` and the width loss in `q` are both
//! represented this way.

use crate::error::{ModselError, Result};

/// Equality tolerance used for intersections and inversions at a given
/// data scale.
pub fn tol_eq(scale: f64) -> f64 {
    1e-9 * (1.0 + scale.abs())
}

/// `v + s * dy` without producing NaN on flat pieces at infinite offsets.
fn affine(v: f64, s: f64, dy: f64) -> f64 {
    if s == 0.0 {
        v
    } else {
        v + s * dy
    }
}

fn sign_with_tol(v: f64, tol: f64) -> i8 {
    if v > tol {
        1
    } else if v < -tol {
        -1
    } else {
        0
    }
}

fn sign(v: f64) -> i8 {
    sign_with_tol(v, 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearFn {
    knots: Vec<f64>,
    value_at_first_knot: f64,
    slopes: Vec<f64>,
    // f(knots[j]), derived from the three fields above
    values: Vec<f64>,
}

/// Result of [`PiecewiseLinearFn::intersections`].
#[derive(Debug, Clone, PartialEq)]
pub struct Intersections {
    /// Sign-changing crossings and finite endpoints of coincidence intervals.
    pub points: Vec<f64>,
    /// Set when the two functions agree everywhere.
    pub identical: bool,
}

impl PiecewiseLinearFn {
    pub fn new(knots: Vec<f64>, value_at_first_knot: f64, slopes: Vec<f64>) -> Result<Self> {
        if slopes.len() != knots.len() + 1 {
            return Err(ModselError::MalformedPwl(format!(
                "{} knots need {} slopes, got {}",
                knots.len(),
                knots.len() + 1,
                slopes.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) || slopes.iter().any(|s| !s.is_finite()) {
            return Err(ModselError::MalformedPwl("non-finite knot or slope".into()));
        }
        if !value_at_first_knot.is_finite() {
            return Err(ModselError::MalformedPwl("non-finite value".into()));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModselError::MalformedPwl("knots not strictly increasing".into()));
        }
        if knots.is_empty() && slopes[0] != 0.0 {
            return Err(ModselError::MalformedPwl(
                "a function without knots must be constant".into(),
            ));
        }
        Ok(Self::from_parts(knots, value_at_first_knot, slopes))
    }

    fn from_parts(knots: Vec<f64>, value_at_first_knot: f64, slopes: Vec<f64>) -> Self {
        let mut values = Vec::with_capacity(knots.len());
        if !knots.is_empty() {
            values.push(value_at_first_knot);
            for j in 1..knots.len() {
                let prev = values[j - 1];
                values.push(prev + slopes[j] * (knots[j] - knots[j - 1]));
            }
        }
        Self {
            knots,
            value_at_first_knot,
            slopes,
            values,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_parts(Vec::new(), c, vec![0.0])
    }

    /// `y -> slope * y + intercept`.
    pub fn linear(slope: f64, intercept: f64) -> Self {
        if slope == 0.0 {
            Self::constant(intercept)
        } else {
            Self::from_parts(vec![0.0], intercept, vec![slope, slope])
        }
    }

    /// `y -> scale * |y - center|`.
    pub fn v_shape(center: f64, scale: f64) -> Self {
        if scale == 0.0 {
            Self::constant(0.0)
        } else {
            Self::from_parts(vec![center], 0.0, vec![-scale, scale])
        }
    }

    /// Builds the function through `points` (x strictly increasing after
    /// near-duplicates are dropped) with the given end slopes. Collinear
    /// interior points are removed.
    pub fn from_points(points: &[(f64, f64)], left_slope: f64, right_slope: f64) -> Self {
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(points.len());
        for &(x, v) in points {
            match pts.last() {
                Some(&(px, _)) if x - px <= 1e-12 * (1.0 + px.abs().max(x.abs())) => {}
                _ => pts.push((x, v)),
            }
        }
        if pts.is_empty() {
            return Self::constant(0.0);
        }
        let seg = |a: (f64, f64), b: (f64, f64)| (b.1 - a.1) / (b.0 - a.0);
        // Drop interior points where the incoming and outgoing slopes agree.
        let mut kept: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
        for j in 0..pts.len() {
            let before = match kept.last() {
                Some(&p) => seg(p, pts[j]),
                None => left_slope,
            };
            let after = if j + 1 < pts.len() {
                seg(pts[j], pts[j + 1])
            } else {
                right_slope
            };
            let scale = 1.0 + before.abs().max(after.abs());
            if (before - after).abs() > 1e-12 * scale {
                kept.push(pts[j]);
            }
        }
        if kept.is_empty() {
            if left_slope == 0.0 && right_slope == 0.0 {
                return Self::constant(pts[0].1);
            }
            kept.push(pts[0]);
        }
        let mut slopes = Vec::with_capacity(kept.len() + 1);
        slopes.push(left_slope);
        for w in kept.windows(2) {
            slopes.push(seg(w[0], w[1]));
        }
        slopes.push(right_slope);
        let knots: Vec<f64> = kept.iter().map(|p| p.0).collect();
        let mut out = Self::from_parts(knots, kept[0].1, slopes);
        // Keep knot values exact rather than accumulated.
        out.values = kept.iter().map(|p| p.1).collect();
        out
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn value_at_first_knot(&self) -> f64 {
        self.value_at_first_knot
    }

    /// Values at the knots.
    pub fn knot_values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.slopes.iter().all(|&s| s >= 0.0)
    }

    pub fn eval(&self, y: f64) -> f64 {
        if self.knots.is_empty() {
            return self.value_at_first_knot;
        }
        let idx = self.knots.partition_point(|&k| k <= y);
        if idx == 0 {
            affine(self.values[0], self.slopes[0], y - self.knots[0])
        } else {
            affine(self.values[idx - 1], self.slopes[idx], y - self.knots[idx - 1])
        }
    }

    /// Slope of the piece containing `y` (right-continuous at knots).
    pub fn slope_at(&self, y: f64) -> f64 {
        self.slopes[self.knots.partition_point(|&k| k <= y)]
    }

    /// Anchor `(x, f(x))` and slope for piece `j`, where piece 0 is the left
    /// ray and piece `knots.len()` the right ray.
    fn piece(&self, j: usize) -> (f64, f64, f64, f64, f64) {
        let lo = if j == 0 { f64::NEG_INFINITY } else { self.knots[j - 1] };
        let hi = if j == self.knots.len() {
            f64::INFINITY
        } else {
            self.knots[j]
        };
        let (ax, av) = if j == 0 {
            (self.knots[0], self.values[0])
        } else {
            (self.knots[j - 1], self.values[j - 1])
        };
        (lo, hi, ax, av, self.slopes[j])
    }

    /// Abscissae strictly inside pieces where the function equals `level`.
    fn level_crossings(&self, level: f64, out: &mut Vec<f64>) {
        if self.knots.is_empty() || !level.is_finite() {
            return;
        }
        for j in 0..=self.knots.len() {
            let (lo, hi, ax, av, s) = self.piece(j);
            if s == 0.0 {
                continue;
            }
            let x = ax + (level - av) / s;
            if x > lo && x < hi {
                out.push(x);
            }
        }
    }

    /// `y -> min(hi, max(lo, f(y)))`.
    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Self> {
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(ModselError::InvalidBounds { lo, hi });
        }
        if lo == f64::INFINITY || hi == f64::NEG_INFINITY {
            return Err(ModselError::MalformedPwl(
                "clamp to an infinite constant".into(),
            ));
        }
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            return Ok(self.clone());
        }
        let clamp_v = |v: f64| v.max(lo).min(hi);
        if self.knots.is_empty() {
            return Ok(Self::constant(clamp_v(self.value_at_first_knot)));
        }
        let mut xs = self.knots.clone();
        self.level_crossings(lo, &mut xs);
        self.level_crossings(hi, &mut xs);
        xs.sort_by(f64::total_cmp);
        let points: Vec<(f64, f64)> = xs.iter().map(|&x| (x, clamp_v(self.eval(x)))).collect();
        let inside = |v: f64| v > lo && v < hi;
        let first = xs[0];
        let last = xs[xs.len() - 1];
        let left = if inside(self.eval(first - 1.0)) {
            self.slopes[0]
        } else {
            0.0
        };
        let right = if inside(self.eval(last + 1.0)) {
            self.slopes[self.slopes.len() - 1]
        } else {
            0.0
        };
        Ok(Self::from_points(&points, left, right))
    }

    /// `y -> outer(self(y))` for a nondecreasing `outer`.
    pub fn compose_monotone(outer: &Self, inner: &Self) -> Result<Self> {
        if !outer.is_nondecreasing() {
            return Err(ModselError::NotMonotone);
        }
        if inner.knots.is_empty() {
            return Ok(Self::constant(outer.eval(inner.value_at_first_knot)));
        }
        let mut xs = inner.knots.clone();
        for &c in &outer.knots {
            inner.level_crossings(c, &mut xs);
        }
        xs.sort_by(f64::total_cmp);
        let points: Vec<(f64, f64)> = xs.iter().map(|&x| (x, outer.eval(inner.eval(x)))).collect();
        let first = xs[0];
        let last = xs[xs.len() - 1];
        let s_left = inner.slopes[0];
        let s_right = inner.slopes[inner.slopes.len() - 1];
        let left = if s_left == 0.0 {
            0.0
        } else {
            s_left * outer.slope_at(inner.eval(first - 1.0))
        };
        let right = if s_right == 0.0 {
            0.0
        } else {
            s_right * outer.slope_at(inner.eval(last + 1.0))
        };
        Ok(Self::from_points(&points, left, right))
    }

    /// Points where `f - g` changes sign, plus the finite endpoints of every
    /// interval on which the two coincide (within [`tol_eq`]).
    pub fn intersections(f: &Self, g: &Self) -> Intersections {
        let mut xs: Vec<f64> = f.knots.iter().chain(g.knots.iter()).copied().collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let slope_l = f.slopes[0] - g.slopes[0];
        let slope_r = f.slopes[f.slopes.len() - 1] - g.slopes[g.slopes.len() - 1];
        if xs.is_empty() {
            let d = f.value_at_first_knot - g.value_at_first_knot;
            let tol = tol_eq(f.value_at_first_knot.abs().max(g.value_at_first_knot.abs()));
            return Intersections {
                points: Vec::new(),
                identical: d.abs() <= tol,
            };
        }
        let m = xs.len() - 1;
        let mut h = Vec::with_capacity(xs.len());
        let mut s = Vec::with_capacity(xs.len());
        for &x in &xs {
            let (fv, gv) = (f.eval(x), g.eval(x));
            let d = fv - gv;
            h.push(d);
            s.push(sign_with_tol(d, tol_eq(fv.abs().max(gv.abs()))));
        }
        // signs of f - g far out on each ray
        let s_left = if slope_l == 0.0 { s[0] } else { -sign(slope_l) };
        let s_right = if slope_r == 0.0 { s[m] } else { sign(slope_r) };

        let mut points = Vec::new();
        if s[0] != 0 && s_left == -s[0] {
            points.push(xs[0] - h[0] / slope_l);
        }
        if s[m] != 0 && s_right == -s[m] {
            points.push(xs[m] - h[m] / slope_r);
        }
        for j in 0..m {
            if s[j] * s[j + 1] == -1 {
                let t = h[j] / (h[j] - h[j + 1]);
                points.push(xs[j] + t * (xs[j + 1] - xs[j]));
            }
        }
        let mut j = 0;
        while j <= m {
            if s[j] != 0 {
                j += 1;
                continue;
            }
            let a = j;
            while j < m && s[j + 1] == 0 {
                j += 1;
            }
            let b = j;
            j += 1;
            let before = if a == 0 { s_left } else { s[a - 1] };
            let after = if b == m { s_right } else { s[b + 1] };
            if before == 0 && after == 0 {
                return Intersections {
                    points: Vec::new(),
                    identical: true,
                };
            }
            if a < b || before == 0 || after == 0 {
                if before != 0 {
                    points.push(xs[a]);
                }
                if after != 0 {
                    points.push(xs[b]);
                }
            } else if before == -after {
                points.push(xs[a]);
            }
        }
        points.sort_by(f64::total_cmp);
        points.dedup();
        Intersections {
            points,
            identical: false,
        }
    }

    /// `sup { q : g(q) <= target }` for nondecreasing `g`; `+inf` when `g`
    /// never exceeds the target and `-inf` when it always does.
    pub fn invert_monotone(&self, target: f64) -> f64 {
        if target.is_nan() {
            return f64::NAN;
        }
        if target == f64::INFINITY {
            return f64::INFINITY;
        }
        if self.knots.is_empty() {
            return if self.value_at_first_knot <= target + tol_eq(target) {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
        }
        let tol = tol_eq(target);
        let m = self.knots.len() - 1;
        // number of knots with value within the target
        let below = self.values.partition_point(|&v| v <= target + tol);
        if below == 0 {
            let s = self.slopes[0];
            return if s > 0.0 {
                self.knots[0] + (target - self.values[0]) / s
            } else {
                f64::NEG_INFINITY
            };
        }
        let j = below - 1;
        let s = self.slopes[j + 1];
        if j == m && s == 0.0 {
            return f64::INFINITY;
        }
        if s <= 0.0 {
            return self.knots[j];
        }
        self.knots[j] + (target - self.values[j]).max(0.0) / s
    }

    /// `inf { q : g(q) >= target }` for nondecreasing `g`: the right end of
    /// the open set where `g` stays strictly below the target.
    pub fn invert_monotone_strict(&self, target: f64) -> f64 {
        if target.is_nan() {
            return f64::NAN;
        }
        if target == f64::INFINITY {
            return f64::INFINITY;
        }
        if self.knots.is_empty() {
            return if self.value_at_first_knot < target {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
        }
        let m = self.knots.len() - 1;
        let below = self.values.partition_point(|&v| v < target);
        if below == 0 {
            let s = self.slopes[0];
            return if s > 0.0 {
                self.knots[0] + (target - self.values[0]) / s
            } else {
                f64::NEG_INFINITY
            };
        }
        let j = below - 1;
        let s = self.slopes[j + 1];
        if j == m && s == 0.0 {
            return f64::INFINITY;
        }
        if s <= 0.0 {
            return self.knots[j];
        }
        let q = self.knots[j] + (target - self.values[j]) / s;
        if j < m {
            q.min(self.knots[j + 1])
        } else {
            q
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs() -> PiecewiseLinearFn {
        PiecewiseLinearFn::v_shape(0.0, 1.0)
    }

    #[test]
    fn eval_basic() {
        assert_eq!(PiecewiseLinearFn::v_shape(2.0, 1.0).eval(5.0), 3.0);
        assert_eq!(PiecewiseLinearFn::constant(7.0).eval(-10.0), 7.0);
        let c = abs().clamp(0.5, 2.0).unwrap();
        assert_eq!(c.eval(1.0), 1.0);
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(PiecewiseLinearFn::new(vec![], 1.0, vec![2.0]).is_err());
        assert!(PiecewiseLinearFn::new(vec![1.0, 0.0], 0.0, vec![0.0; 3]).is_err());
        assert!(PiecewiseLinearFn::new(vec![0.0], 0.0, vec![1.0]).is_err());
        assert!(PiecewiseLinearFn::new(vec![0.0], 0.0, vec![-1.0, 1.0]).is_ok());
    }

    #[test]
    fn clamp_of_abs() {
        let c = abs().clamp(0.5, 2.0).unwrap();
        assert_eq!(c.knots(), &[-2.0, -0.5, 0.5, 2.0]);
        assert_eq!(c.slopes(), &[0.0, -1.0, 0.0, 1.0, 0.0]);
        assert_eq!(c.eval(0.0), 0.5);
        assert_eq!(c.eval(-0.3), 0.5);
        assert_eq!(c.eval(1.5), 1.5);
        assert_eq!(c.eval(10.0), 2.0);
        assert_eq!(c.eval(-10.0), 2.0);
    }

    #[test]
    fn clamp_noop_and_constant() {
        let f = abs();
        assert_eq!(f.clamp(f64::NEG_INFINITY, f64::INFINITY).unwrap(), f);
        let c = PiecewiseLinearFn::constant(3.0).clamp(0.0, 1.0).unwrap();
        assert!(c.knots().is_empty());
        assert_eq!(c.eval(123.0), 1.0);
        assert!(matches!(
            f.clamp(2.0, 1.0),
            Err(ModselError::InvalidBounds { .. })
        ));
    }

    #[test]
    fn clamp_one_sided() {
        let f = abs().clamp(1.0, f64::INFINITY).unwrap();
        assert_eq!(f.eval(0.0), 1.0);
        assert_eq!(f.eval(3.0), 3.0);
        let g = abs().clamp(f64::NEG_INFINITY, 1.0).unwrap();
        assert_eq!(g.eval(0.25), 0.25);
        assert_eq!(g.eval(-7.0), 1.0);
    }

    #[test]
    fn compose_doubles() {
        let g = PiecewiseLinearFn::linear(2.0, 0.0);
        let f = PiecewiseLinearFn::v_shape(2.0, 1.0);
        let h = PiecewiseLinearFn::compose_monotone(&g, &f).unwrap();
        for y in [-3.0, 0.0, 2.0, 2.5, 9.0] {
            assert_eq!(h.eval(y), 2.0 * (y - 2.0_f64).abs());
        }
        let id = PiecewiseLinearFn::linear(1.0, 0.0);
        let h = PiecewiseLinearFn::compose_monotone(&id, &f).unwrap();
        assert_eq!(h.knots(), f.knots());
        assert_eq!(h.slopes(), f.slopes());
    }

    #[test]
    fn compose_with_hinge() {
        // g(q) = max(0, 3 + 2q), f = |y|: since |y| >= 0 > -1.5 the hinge is
        // never active and the result is 3 + 2|y|.
        let g = PiecewiseLinearFn::new(vec![-1.5], 0.0, vec![0.0, 2.0]).unwrap();
        let h = PiecewiseLinearFn::compose_monotone(&g, &abs()).unwrap();
        for y in [-4.0, -1.0, 0.0, 0.7, 5.0] {
            assert!((h.eval(y) - (3.0 + 2.0 * f64::abs(y))).abs() < 1e-12);
        }
        // with a shifted inner function the hinge does bite
        let f = PiecewiseLinearFn::v_shape(0.0, 1.0)
            .clamp(f64::NEG_INFINITY, 10.0)
            .unwrap();
        let inner = PiecewiseLinearFn::compose_monotone(&PiecewiseLinearFn::linear(1.0, -3.0), &f).unwrap();
        let h = PiecewiseLinearFn::compose_monotone(&g, &inner).unwrap();
        for y in [-20.0, -2.0, -1.0, 0.0, 1.2, 2.0, 20.0] {
            let expect = (3.0 + 2.0 * (f64::abs(y).min(10.0) - 3.0)).max(0.0);
            assert!((h.eval(y) - expect).abs() < 1e-12, "y={y}");
        }
    }

    #[test]
    fn compose_rejects_decreasing_outer() {
        let g = PiecewiseLinearFn::linear(-1.0, 0.0);
        assert_eq!(
            PiecewiseLinearFn::compose_monotone(&g, &abs()),
            Err(ModselError::NotMonotone)
        );
    }

    #[test]
    fn intersections_of_vees() {
        let r = PiecewiseLinearFn::intersections(&abs(), &PiecewiseLinearFn::v_shape(2.0, 1.0));
        assert_eq!(r.points, vec![1.0]);
        assert!(!r.identical);
    }

    #[test]
    fn intersections_disjoint() {
        let shifted = PiecewiseLinearFn::compose_monotone(&PiecewiseLinearFn::linear(1.0, 1.0), &abs()).unwrap();
        let r = PiecewiseLinearFn::intersections(&abs(), &shifted);
        assert!(r.points.is_empty());
        assert!(!r.identical);
    }

    #[test]
    fn intersections_identical() {
        let r = PiecewiseLinearFn::intersections(&abs(), &abs());
        assert!(r.identical);
        assert!(r.points.is_empty());
    }

    #[test]
    fn intersections_with_plateaus() {
        // Both functions sit at 2 on (-inf, -2] and [3.5, inf), and cross once at 0.75.
        let f = abs().clamp(0.5, 2.0).unwrap();
        let g = PiecewiseLinearFn::v_shape(1.5, 1.0).clamp(0.5, 2.0).unwrap();
        let r = PiecewiseLinearFn::intersections(&f, &g);
        assert_eq!(r.points.len(), 3);
        assert!((r.points[0] + 2.0).abs() < 1e-12);
        assert!((r.points[1] - 0.75).abs() < 1e-12);
        assert!((r.points[2] - 3.5).abs() < 1e-12);
        // dense sign scan agrees
        let mut last = 0i8;
        let mut x_last = -10.0;
        for k in 0..=20_000 {
            let y = -10.0 + k as f64 * 1e-3;
            let d = f.eval(y) - g.eval(y);
            let sgn = sign_with_tol(d, 1e-12);
            if sgn != 0 && last != 0 && sgn != last {
                assert!(r.points.iter().any(|p| (p - y).abs() <= 1e-3 + 1e-12 || (p - x_last).abs() <= 1e-3));
            }
            if sgn != 0 {
                last = sgn;
                x_last = y;
            }
        }
    }

    #[test]
    fn touching_point_is_not_a_crossing() {
        let f = abs();
        let r = PiecewiseLinearFn::intersections(&f, &PiecewiseLinearFn::constant(0.0));
        assert!(r.points.is_empty());
    }

    #[test]
    fn invert_linear_and_hinge() {
        let g = PiecewiseLinearFn::linear(2.0, 0.0);
        assert_eq!(g.invert_monotone(2.0), 1.0);
        // g(q) = (max(0, 2+2q) + max(0, 4+2q)) / 2
        let g = PiecewiseLinearFn::new(vec![-2.0, -1.0], 0.0, vec![0.0, 1.0, 2.0]).unwrap();
        assert!((g.invert_monotone(0.5) + 1.5).abs() < 1e-15);
        assert_eq!(PiecewiseLinearFn::constant(0.0).invert_monotone(1.0), f64::INFINITY);
        assert_eq!(PiecewiseLinearFn::constant(2.0).invert_monotone(1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn invert_on_plateau_goes_to_right_end() {
        // 0 up to q = 0, then slope 2: sup{g <= 0} = 0, inf{g >= 0} = -inf
        let g = PiecewiseLinearFn::new(vec![0.0], 0.0, vec![0.0, 2.0]).unwrap();
        assert_eq!(g.invert_monotone(0.0), 0.0);
        assert_eq!(g.invert_monotone_strict(0.0), f64::NEG_INFINITY);
        assert_eq!(g.invert_monotone(-1.0), f64::NEG_INFINITY);
        assert_eq!(g.invert_monotone_strict(4.0), 2.0);
        // bounded function: anything at or above the cap maps to +inf
        let capped = g.clamp(f64::NEG_INFINITY, 3.0).unwrap();
        assert_eq!(capped.invert_monotone(3.0), f64::INFINITY);
        assert_eq!(capped.invert_monotone_strict(3.0), 1.5);
    }
}
