//! Prediction-set methods built on a calibration session: split conformal,
//! the uncorrected and corrected selection baselines, and the two
//! selection-aware conformal sets (test-augmented and leave-one-out).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calib::{calibration_rank, check_alpha, order_stat, CalibrationScores, LooVariant};
use crate::error::{ModselError, Result};
use crate::loss::{EvalPoints, LossContext};
use crate::pwl::{tol_eq, PiecewiseLinearFn};
use crate::region::{Interval, PredictionRegion};
use crate::scores::{ModelClass, Point, Responses, TestProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TieBreaker {
    #[default]
    MinIndex,
    Seeded(u64),
}

impl FromStr for TieBreaker {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s == "min_index" {
            return Ok(Self::MinIndex);
        }
        if let Some(seed) = s.strip_prefix("seeded:") {
            return seed
                .trim()
                .parse()
                .map(Self::Seeded)
                .map_err(|_| format!("bad tie-break seed {seed:?}"));
        }
        Err(format!("unknown tie-break rule {s:?}"))
    }
}

impl fmt::Display for TieBreaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MinIndex => f.write_str("min_index"),
            Self::Seeded(s) => write!(f, "seeded:{s}"),
        }
    }
}

/// Tie-breaking map with its uniform draw fixed for the session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TieRule {
    xi: Option<f64>,
}

impl TieRule {
    pub fn new(tb: TieBreaker) -> Self {
        match tb {
            TieBreaker::MinIndex => Self { xi: None },
            TieBreaker::Seeded(seed) => Self {
                xi: Some(ChaCha8Rng::seed_from_u64(seed).random::<f64>()),
            },
        }
    }

    /// Picks from a tie set sorted by model index.
    pub fn pick(&self, ties: &[usize]) -> usize {
        match self.xi {
            None => ties[0],
            Some(xi) => ties[((xi * ties.len() as f64) as usize).min(ties.len() - 1)],
        }
    }

    /// Minimizer of `(index, value)` pairs given in increasing index order;
    /// ties use exact equality.
    pub fn argmin(&self, vals: &[(usize, f64)]) -> usize {
        let best = vals.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
        let first = vals
            .iter()
            .position(|v| v.1 == best)
            .expect("argmin over an empty candidate set");
        if self.xi.is_none() {
            return vals[first].0;
        }
        let ties: Vec<usize> = vals.iter().filter(|v| v.1 == best).map(|v| v.0).collect();
        self.pick(&ties)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Split,
    YkBaseline,
    YkAdjust,
    YkSplit,
    ModselCp,
    ModselCpLoo,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Split,
        Method::YkBaseline,
        Method::YkAdjust,
        Method::YkSplit,
        Method::ModselCp,
        Method::ModselCpLoo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Split => "split",
            Self::YkBaseline => "yk_baseline",
            Self::YkAdjust => "yk_adjust",
            Self::YkSplit => "yk_split",
            Self::ModselCp => "modsel_cp",
            Self::ModselCpLoo => "modsel_cp_loo",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// Per-method knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MethodOptions {
    /// Model used by plain split conformal.
    pub split_model: usize,
    /// First-half size for the data-splitting baseline; `n / 2` when unset.
    pub n1: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub m_size: Option<usize>,
    pub m_minus_size: Option<usize>,
    pub mean_mi_size: Option<f64>,
    pub alpha_tilde: Option<f64>,
    pub breakpoints: Option<usize>,
    /// Threshold was infinite and the full space returned.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutput {
    pub method: Method,
    pub region: PredictionRegion,
    pub selected_model: Option<usize>,
    /// Loss budget of the selected model.
    pub threshold: f64,
    /// Inner bound, continuous test-augmented method only.
    pub lower: Option<PredictionRegion>,
    pub diagnostics: Diagnostics,
}

impl MethodOutput {
    fn new(method: Method, region: PredictionRegion, selected: Option<usize>, threshold: f64) -> Self {
        Self {
            method,
            region,
            selected_model: selected,
            threshold,
            lower: None,
            diagnostics: Diagnostics::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompetingSets {
    pub m: Vec<usize>,
    pub m_minus: Vec<usize>,
    pub m_i: Vec<Vec<usize>>,
    /// `l[i][lambda]`
    pub l: Vec<Vec<f64>>,
    /// `u[i][lambda]`
    pub u: Vec<Vec<f64>>,
}

/// Corrected level for the concentration-adjusted baseline.
pub fn alpha_tilde(alpha: f64, n: usize, n_models: usize) -> f64 {
    let n = n as f64;
    let num = (0.5 * (2.0 * n_models as f64).ln()).sqrt() + 1.0 / 3.0 - (1.0 - alpha) / n.sqrt();
    alpha - num / (n.sqrt() * (1.0 + 1.0 / n))
}

/// Everything fixed by one calibration set: models, responses, level, tie
/// rule, scores and the loss over the calibration points plus the test point.
#[derive(Debug, Clone)]
pub struct Session {
    class: ModelClass,
    responses: Responses,
    tie: TieRule,
    scores: CalibrationScores,
    ctx: LossContext,
    // lcal[lambda][i] = L(lambda, S_lambda(X_i, Y_i))
    lcal: Vec<Vec<f64>>,
}

impl Session {
    pub fn new(class: ModelClass, responses: Responses, alpha: f64, tb: TieBreaker) -> Result<Self> {
        check_alpha(alpha)?;
        let scores = CalibrationScores::new(&class, &responses, alpha)?;
        let ctx = LossContext::new(&class, &EvalPoints::all(class.n()))?;
        let lcal = (0..class.len())
            .map(|l| scores.scores(l).iter().map(|&s| ctx.eval(l, s)).collect())
            .collect();
        Ok(Self {
            class,
            responses,
            tie: TieRule::new(tb),
            scores,
            ctx,
            lcal,
        })
    }

    pub fn class(&self) -> &ModelClass {
        &self.class
    }

    pub fn responses(&self) -> &Responses {
        &self.responses
    }

    pub fn scores(&self) -> &CalibrationScores {
        &self.scores
    }

    pub fn ctx(&self) -> &LossContext {
        &self.ctx
    }

    pub fn tie_rule(&self) -> &TieRule {
        &self.tie
    }

    pub fn alpha(&self) -> f64 {
        self.scores.alpha()
    }

    pub fn n(&self) -> usize {
        self.scores.n()
    }

    pub fn n_models(&self) -> usize {
        self.class.len()
    }

    /// `L(lambda, S_lambda(X_i, Y_i))`.
    pub fn calib_loss(&self, lambda: usize, i: usize) -> f64 {
        self.lcal[lambda][i]
    }

    fn select_at(&self, cs: &CalibrationScores) -> usize {
        let vals: Vec<(usize, f64)> = (0..self.n_models())
            .map(|l| (l, self.ctx.eval(l, cs.q_hat(l))))
            .collect();
        self.tie.argmin(&vals)
    }

    /// Model with the smallest loss at its own calibrated threshold.
    pub fn select_lambda_hat(&self) -> usize {
        self.select_at(&self.scores)
    }

    /// Loss budget `L(lambda_hat, q_hat(lambda_hat))`.
    pub fn threshold(&self) -> f64 {
        let l = self.select_lambda_hat();
        self.ctx.eval(l, self.scores.q_hat(l))
    }

    pub fn run(&self, method: Method, opts: &MethodOptions) -> Result<MethodOutput> {
        match method {
            Method::Split => self.split_conformal(opts.split_model),
            Method::YkBaseline => Ok(self.yk_baseline()),
            Method::YkAdjust => self.yk_adjust(),
            Method::YkSplit => self.yk_split(opts.n1.unwrap_or(self.n() / 2)),
            Method::ModselCp => self.modsel_cp(),
            Method::ModselCpLoo => self.modsel_cp_loo(),
        }
    }

    pub fn split_conformal(&self, lambda: usize) -> Result<MethodOutput> {
        let model = self.class.model(lambda)?;
        let q = self.scores.q_hat(lambda);
        Ok(MethodOutput::new(
            Method::Split,
            model.region_at_threshold(q),
            Some(lambda),
            self.ctx.eval(lambda, q),
        ))
    }

    fn baseline_at(&self, cs: &CalibrationScores, method: Method) -> MethodOutput {
        let l = self.select_at(cs);
        let q = cs.q_hat(l);
        MethodOutput::new(
            method,
            self.class.models()[l].region_at_threshold(q),
            Some(l),
            self.ctx.eval(l, q),
        )
    }

    pub fn yk_baseline(&self) -> MethodOutput {
        self.baseline_at(&self.scores, Method::YkBaseline)
    }

    pub fn yk_adjust(&self) -> Result<MethodOutput> {
        let at = alpha_tilde(self.alpha(), self.n(), self.n_models());
        let mut out = if at <= 0.0 {
            let mut o = MethodOutput::new(Method::YkAdjust, self.class.full_region(), None, f64::INFINITY);
            o.diagnostics.degenerate = true;
            o
        } else {
            self.baseline_at(&self.scores.at_level(at)?, Method::YkAdjust)
        };
        out.diagnostics.alpha_tilde = Some(at);
        Ok(out)
    }

    pub fn yk_split(&self, n1: usize) -> Result<MethodOutput> {
        let n = self.n();
        if n1 == 0 || n1 >= n {
            return Err(ModselError::InvalidSplit { n1, n });
        }
        let alpha = self.alpha();
        let first: Vec<usize> = (0..n1).collect();
        let first_scores: Vec<Vec<f64>> = (0..self.n_models())
            .map(|l| self.scores.scores(l)[..n1].to_vec())
            .collect();
        let second_scores: Vec<Vec<f64>> = (0..self.n_models())
            .map(|l| self.scores.scores(l)[n1..].to_vec())
            .collect();
        let cs1 = CalibrationScores::from_scores(first_scores, alpha)?;
        let cs2 = CalibrationScores::from_scores(second_scores, alpha)?;
        let ctx1 = LossContext::new(&self.class, &EvalPoints::calib_only(first))?;
        let vals: Vec<(usize, f64)> = (0..self.n_models())
            .map(|l| (l, ctx1.eval(l, cs1.q_hat(l))))
            .collect();
        let l = self.tie.argmin(&vals);
        let q = cs2.q_hat(l);
        Ok(MethodOutput::new(
            Method::YkSplit,
            self.class.models()[l].region_at_threshold(q),
            Some(l),
            self.ctx.eval(l, q),
        ))
    }

    pub fn competing_sets(&self) -> CompetingSets {
        let lam = self.select_lambda_hat();
        let t = self.ctx.eval(lam, self.scores.q_hat(lam));
        let nm = self.n_models();
        let l_q: Vec<f64> = (0..nm).map(|l| self.ctx.eval(l, self.scores.q_hat(l))).collect();
        let l_minus: Vec<f64> = (0..nm)
            .map(|l| self.ctx.eval(l, self.scores.q_hat_minus(l)))
            .collect();
        let l_plus: Vec<f64> = (0..nm)
            .map(|l| self.ctx.eval(l, self.scores.q_hat_plus(l)))
            .collect();
        let m = (0..nm).filter(|&l| l_minus[l] <= t).collect();
        let m_minus = (0..nm).filter(|&l| l_minus[l] < t).collect();
        let n = self.n();
        let mut l_all = Vec::with_capacity(n);
        let mut u_all = Vec::with_capacity(n);
        let mut m_i = Vec::with_capacity(n);
        for i in 0..n {
            let mut lo = Vec::with_capacity(nm);
            let mut up = Vec::with_capacity(nm);
            for l in 0..nm {
                let li = self.lcal[l][i];
                lo.push(if li < l_q[l] { l_q[l] } else { l_minus[l] });
                up.push(if li <= l_q[l] { l_plus[l] } else { l_q[l] });
            }
            let cap = up.iter().copied().fold(f64::INFINITY, f64::min);
            // a hair of slack: membership only narrows an argmin that the
            // full minimizer set always satisfies
            let cap = cap + 1e-12 * (1.0 + cap.abs());
            m_i.push((0..nm).filter(|&l| lo[l] <= cap).collect());
            l_all.push(lo);
            u_all.push(up);
        }
        CompetingSets {
            m,
            m_minus,
            m_i,
            l: l_all,
            u: u_all,
        }
    }

    fn continuous_profile(&self, lambda: usize) -> Result<PiecewiseLinearFn> {
        match self.class.models()[lambda].score_profile_test() {
            TestProfile::Continuous(p) => Ok(p),
            TestProfile::Labels(_) => Err(ModselError::NeedsContinuous),
        }
    }

    fn degenerate(&self, method: Method, lam: usize) -> MethodOutput {
        let mut o = MethodOutput::new(method, self.class.full_region(), Some(lam), f64::INFINITY);
        o.diagnostics.degenerate = true;
        o
    }

    /// Test-augmented selection set. Continuous families get the outer
    /// bound (with the inner bound in `lower`); label sets are enumerated.
    pub fn modsel_cp(&self) -> Result<MethodOutput> {
        if !self.class.family().is_continuous() {
            return self.modsel_cp_discrete();
        }
        let lam = self.select_lambda_hat();
        let t = self.threshold();
        if t == f64::INFINITY {
            return Ok(self.degenerate(Method::ModselCp, lam));
        }
        let sets = self.competing_sets();
        let mut upper = PredictionRegion::Empty;
        for &l in &sets.m {
            let q = self.ctx.invert_loss(l, t)?;
            upper = upper.union(&self.class.models()[l].region_at_threshold(q))?;
        }
        let mut lower = PredictionRegion::Empty;
        for &l in &sets.m_minus {
            let q = self.ctx.invert_loss_strict(l, t)?;
            lower = lower.union(&self.class.models()[l].region_at_threshold(q))?;
        }
        let mut out = MethodOutput::new(Method::ModselCp, upper, Some(lam), t);
        out.lower = Some(lower);
        out.diagnostics.m_size = Some(sets.m.len());
        out.diagnostics.m_minus_size = Some(sets.m_minus.len());
        Ok(out)
    }

    /// Augmented selection `lambda_hat(y)` for a label.
    pub fn lambda_hat_label(&self, y: usize) -> Result<usize> {
        let vals = (0..self.n_models())
            .map(|l| {
                let s = self.class.models()[l].score_label(Point::Test, y)?;
                Ok((l, self.ctx.eval(l, self.scores.q_hat_aug(l, s))))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.tie.argmin(&vals))
    }

    pub fn modsel_cp_discrete(&self) -> Result<MethodOutput> {
        let k = self.class.classes().ok_or(ModselError::NeedsDiscrete)?;
        let mut labels = Vec::new();
        for y in 0..k {
            let l = self.lambda_hat_label(y)?;
            let s = self.class.models()[l].score_label(Point::Test, y)?;
            if s <= self.scores.q_hat_aug(l, s) {
                labels.push(y);
            }
        }
        let lam = self.select_lambda_hat();
        let mut out = MethodOutput::new(
            Method::ModselCp,
            PredictionRegion::from_labels(labels),
            Some(lam),
            self.threshold(),
        );
        out.diagnostics.m_size = Some(self.competing_sets().m.len());
        Ok(out)
    }

    /// `L(lambda, q_hat_{-i}(lambda, y))` as a function of `y`, one per
    /// model and leave-out variant.
    fn loo_loss_profiles(&self) -> Result<Vec<[PiecewiseLinearFn; 3]>> {
        (0..self.n_models())
            .map(|l| {
                let test = self.continuous_profile(l)?;
                let outer = self.ctx.loss_profile(l)?;
                let mut out = Vec::with_capacity(3);
                for v in LooVariant::ALL {
                    let (lo, hi) = self.scores.variant_bounds(l, v);
                    out.push(PiecewiseLinearFn::compose_monotone(outer, &test.clamp(lo, hi)?)?);
                }
                Ok(out.try_into().expect("three variants"))
            })
            .collect()
    }

    /// Sorted points of the response line between which every leave-one-out
    /// selection is constant.
    pub fn loo_breakpoints(&self, sets: &CompetingSets) -> Result<Vec<f64>> {
        if self.scores.loo_is_infinite() {
            return Ok(Vec::new());
        }
        let profiles = self.loo_loss_profiles()?;
        self.breakpoints_from(&profiles, sets)
    }

    fn breakpoints_from(
        &self,
        profiles: &[[PiecewiseLinearFn; 3]],
        sets: &CompetingSets,
    ) -> Result<Vec<f64>> {
        let mut pts = Vec::new();
        for l in 0..self.n_models() {
            let test = self.continuous_profile(l)?;
            for v in LooVariant::ALL {
                let (lo, hi) = self.scores.variant_bounds(l, v);
                pts.extend_from_slice(test.clamp(lo, hi)?.knots());
            }
            for p in &profiles[l] {
                pts.extend_from_slice(p.knots());
            }
        }
        let mut seen = HashSet::new();
        for (i, mi) in sets.m_i.iter().enumerate() {
            for (a, &la) in mi.iter().enumerate() {
                let va = self.scores.loo_variant(la, i);
                for &lb in &mi[a + 1..] {
                    let vb = self.scores.loo_variant(lb, i);
                    if !seen.insert((la, va, lb, vb)) {
                        continue;
                    }
                    let r = PiecewiseLinearFn::intersections(
                        &profiles[la][va.index()],
                        &profiles[lb][vb.index()],
                    );
                    pts.extend(r.points);
                }
            }
        }
        pts.retain(|x| x.is_finite());
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        Ok(pts)
    }

    pub fn modsel_cp_loo(&self) -> Result<MethodOutput> {
        if !self.class.family().is_continuous() {
            return self.modsel_cp_loo_discrete();
        }
        let lam = self.select_lambda_hat();
        let t = self.threshold();
        if t == f64::INFINITY || self.scores.loo_is_infinite() {
            return Ok(self.degenerate(Method::ModselCpLoo, lam));
        }
        let n = self.n();
        let k = calibration_rank(n, self.alpha());
        let sets = self.competing_sets();
        let lam_model = &self.class.models()[lam];

        // Outer hull: every selected leave-one-out model lies in M_i, so the
        // quantile never exceeds the one built from per-point maxima.
        let mut caps: Vec<f64> = sets
            .m_i
            .iter()
            .enumerate()
            .map(|(i, mi)| mi.iter().map(|&l| self.lcal[l][i]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        caps.sort_by(f64::total_cmp);
        let r_ub = order_stat(&caps, k);
        let hull_region = lam_model.region_at_threshold(self.ctx.invert_loss(lam, r_ub)?);
        let Some(hull) = hull_region.hull() else {
            let mut out = MethodOutput::new(Method::ModselCpLoo, PredictionRegion::Empty, Some(lam), t);
            out.diagnostics.breakpoints = Some(0);
            return Ok(out);
        };

        let profiles = self.loo_loss_profiles()?;
        let all = self.breakpoints_from(&profiles, &sets)?;
        let n_breaks = all.len();
        let mut cuts: Vec<f64> = all
            .into_iter()
            .filter(|&x| x > hull.lo && x < hull.hi)
            .collect();
        if hull.lo.is_finite() {
            cuts.insert(0, hull.lo);
        }
        if hull.hi.is_finite() {
            cuts.push(hull.hi);
        }
        // (cell, representative)
        let mut cells: Vec<(Interval, f64)> = Vec::with_capacity(cuts.len() + 1);
        match (cuts.first().copied(), cuts.last().copied()) {
            (None, _) | (_, None) => cells.push((Interval::new(hull.lo, hull.hi), 0.0)),
            (Some(first), Some(last)) => {
                if !hull.lo.is_finite() {
                    cells.push((Interval::new(f64::NEG_INFINITY, first), first - 1.0));
                }
                if !hull.hi.is_finite() {
                    cells.push((Interval::new(last, f64::INFINITY), last + 1.0));
                }
            }
        }
        for w in cuts.windows(2) {
            cells.push((Interval::new(w[0], w[1]), 0.5 * (w[0] + w[1])));
        }

        // Points sharing M_i and their leave-out variants select alike.
        let mut groups: BTreeMap<Vec<(usize, LooVariant)>, Vec<usize>> = BTreeMap::new();
        for (i, mi) in sets.m_i.iter().enumerate() {
            let key = mi.iter().map(|&l| (l, self.scores.loo_variant(l, i))).collect();
            groups.entry(key).or_default().push(i);
        }
        let groups: Vec<(Vec<(usize, LooVariant)>, Vec<usize>)> = groups.into_iter().collect();

        let nm = self.n_models();
        let mut score_at = vec![f64::NAN; nm];
        let mut buf = Vec::with_capacity(n);
        let mut vals = Vec::with_capacity(nm);
        let mut pieces = Vec::new();
        for (cell, rep) in cells {
            for (l, s) in score_at.iter_mut().enumerate() {
                *s = self.class.models()[l].score_real(Point::Test, rep)?;
            }
            buf.clear();
            for (key, members) in &groups {
                vals.clear();
                for &(l, v) in key {
                    let (lo, hi) = self.scores.variant_bounds(l, v);
                    vals.push((l, self.ctx.eval(l, score_at[l].max(lo).min(hi))));
                }
                let chosen = self.tie.argmin(&vals);
                buf.extend(members.iter().map(|&i| self.lcal[chosen][i]));
            }
            let r = kth_smallest(&mut buf, k);
            let q = self.ctx.invert_loss(lam, r)?;
            let part = lam_model.region_at_threshold(q).intersect_interval(cell);
            pieces.extend_from_slice(part.intervals());
            if part == PredictionRegion::EntireSpace {
                pieces.push(cell);
            }
        }
        let mut out = MethodOutput::new(
            Method::ModselCpLoo,
            PredictionRegion::from_intervals(pieces),
            Some(lam),
            t,
        );
        out.diagnostics.m_size = Some(sets.m.len());
        out.diagnostics.mean_mi_size =
            Some(sets.m_i.iter().map(Vec::len).sum::<usize>() as f64 / n as f64);
        out.diagnostics.breakpoints = Some(n_breaks);
        Ok(out)
    }

    /// Leave-one-out selection for point `i` at test score vector `s_test`
    /// (one score per model), minimizing over `candidates`.
    fn lambda_hat_loo_at(&self, i: usize, s_test: &[f64], candidates: &[usize]) -> usize {
        let vals: Vec<(usize, f64)> = candidates
            .iter()
            .map(|&l| {
                let (lo, hi) = self.scores.variant_bounds(l, self.scores.loo_variant(l, i));
                let q = if self.scores.loo_is_infinite() {
                    f64::INFINITY
                } else {
                    s_test[l].max(lo).min(hi)
                };
                (l, self.ctx.eval(l, q))
            })
            .collect();
        self.tie.argmin(&vals)
    }

    pub fn modsel_cp_loo_discrete(&self) -> Result<MethodOutput> {
        let kk = self.class.classes().ok_or(ModselError::NeedsDiscrete)?;
        let lam = self.select_lambda_hat();
        let n = self.n();
        let k = calibration_rank(n, self.alpha());
        let sets = self.competing_sets();
        let mut labels = Vec::new();
        let mut buf = Vec::with_capacity(n);
        for y in 0..kk {
            let s: Vec<f64> = self
                .class
                .models()
                .iter()
                .map(|m| m.score_label(Point::Test, y))
                .collect::<Result<_>>()?;
            buf.clear();
            for i in 0..n {
                let chosen = self.lambda_hat_loo_at(i, &s, &sets.m_i[i]);
                buf.push(self.lcal[chosen][i]);
            }
            let r = kth_smallest(&mut buf, k);
            if self.ctx.eval(lam, s[lam]) <= r {
                labels.push(y);
            }
        }
        let mut out = MethodOutput::new(
            Method::ModselCpLoo,
            PredictionRegion::from_labels(labels),
            Some(lam),
            self.threshold(),
        );
        out.diagnostics.m_size = Some(sets.m.len());
        Ok(out)
    }

    /// Leave-one-out selection at a real response, minimizing over every
    /// model.
    pub fn lambda_hat_loo(&self, i: usize, y: f64) -> Result<usize> {
        if i >= self.n() {
            return Err(ModselError::IndexOutOfRange { index: i, len: self.n() });
        }
        let s: Vec<f64> = self
            .class
            .models()
            .iter()
            .map(|m| m.score_real(Point::Test, y))
            .collect::<Result<_>>()?;
        let all: Vec<usize> = (0..self.n_models()).collect();
        Ok(self.lambda_hat_loo_at(i, &s, &all))
    }
}

/// 1-based k-th smallest, reordering the buffer.
fn kth_smallest(buf: &mut [f64], k: i64) -> f64 {
    if k <= 0 {
        return f64::NEG_INFINITY;
    }
    if k as usize > buf.len() {
        return f64::INFINITY;
    }
    let (_, v, _) = buf.select_nth_unstable_by(k as usize - 1, f64::total_cmp);
    *v
}

/// Whether two losses agree to the equality tolerance.
pub fn loss_close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= tol_eq(a.abs().max(b.abs()))
}
