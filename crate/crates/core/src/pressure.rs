//! Two-scale partition sums and pressure.
//!
//! At dyadic scales an `(n, δ)`-separated set picks at most one point from
//! each class of words on the δ ball window, so
//! `Λ(C, φ, δ, ε, n) = Σ_classes max_{x ∈ class ∩ C_n} e^{Φ_ε(x, n)}`
//! is a finite computation over the words on a single hull window.

use crate::error::{Error, Result};
use crate::interval::{LogSumExp, ValueInterval};
use crate::potentials::Potential;
use crate::symbolic::{ball_window, DyadicScale, ShiftSystem, Window};
use serde::Serialize;
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

/// Splits an orbit segment into prefix, good and suffix parts.
pub trait SegmentClassifier: Send + Sync + fmt::Debug {
    /// `(p, g, s)` for a segment word in the domain, `None` outside it.
    fn split(&self, w: &[u8]) -> Option<(usize, usize, usize)>;
    fn in_prefix(&self, w: &[u8]) -> bool;
    fn in_good(&self, w: &[u8]) -> bool;
    fn in_suffix(&self, w: &[u8]) -> bool;
    fn name(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Part {
    Prefix,
    Good,
    Suffix,
    PrefixOrSuffix,
    GoodCore(usize),
    Domain,
    DomainComplement,
}

type WordPredicate = Arc<dyn Fn(&[u8]) -> bool + Send + Sync>;

/// A collection `C ⊂ X × N`, decided on the segment word `x_0 ... x_{n-1}`.
#[derive(Clone)]
pub enum SegmentCollection {
    All,
    Empty,
    Predicate { name: String, pred: WordPredicate },
    Rule { rule: Arc<dyn SegmentClassifier>, part: Part },
    Complement(Box<SegmentCollection>),
    Union(Box<SegmentCollection>, Box<SegmentCollection>),
    Intersection(Box<SegmentCollection>, Box<SegmentCollection>),
}

impl fmt::Debug for SegmentCollection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

impl SegmentCollection {
    pub fn predicate(name: &str, pred: impl Fn(&[u8]) -> bool + Send + Sync + 'static) -> Self {
        Self::Predicate { name: name.to_string(), pred: Arc::new(pred) }
    }

    pub fn rule(rule: Arc<dyn SegmentClassifier>, part: Part) -> Self {
        Self::Rule { rule, part }
    }

    pub fn complement(self) -> Self {
        Self::Complement(Box::new(self))
    }

    pub fn union(self, other: Self) -> Self {
        Self::Union(Box::new(self), Box::new(other))
    }

    pub fn intersect(self, other: Self) -> Self {
        Self::Intersection(Box::new(self), Box::new(other))
    }

    pub fn contains(&self, w: &[u8]) -> bool {
        match self {
            Self::All => true,
            Self::Empty => false,
            Self::Predicate { pred, .. } => pred(w),
            Self::Rule { rule, part } => match part {
                Part::Prefix => rule.in_prefix(w),
                Part::Good => rule.in_good(w),
                Part::Suffix => rule.in_suffix(w),
                Part::PrefixOrSuffix => rule.in_prefix(w) || rule.in_suffix(w),
                Part::GoodCore(m) => matches!(rule.split(w), Some((p, _, s)) if p <= *m && s <= *m),
                Part::Domain => rule.split(w).is_some(),
                Part::DomainComplement => rule.split(w).is_none(),
            },
            Self::Complement(c) => !c.contains(w),
            Self::Union(a, b) => a.contains(w) || b.contains(w),
            Self::Intersection(a, b) => a.contains(w) && b.contains(w),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::All => "All".into(),
            Self::Empty => "Empty".into(),
            Self::Predicate { name, .. } => name.clone(),
            Self::Rule { rule, part } => format!("{}:{:?}", rule.name(), part),
            Self::Complement(c) => format!("Complement({})", c.describe()),
            Self::Union(a, b) => format!("Union({}, {})", a.describe(), b.describe()),
            Self::Intersection(a, b) => format!("Intersection({}, {})", a.describe(), b.describe()),
        }
    }
}

/// The coordinate windows behind one partition sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Layout {
    pub n: usize,
    /// Separation classes (empty when δ = 1).
    pub delta_window: Window,
    /// Coordinates fixed inside the ε ball; `None` means `Φ_0` is used.
    pub eps_window: Option<Window>,
    /// Coordinates read by `Φ_0(x, n)`.
    pub read_window: Window,
    pub hull: Window,
}

impl Layout {
    pub fn new(n: usize, depth: usize, delta: DyadicScale, eps: Option<DyadicScale>) -> Result<Self> {
        let seg = Window::new(0, n as i64 - 1);
        let delta_window = scale_window(n, delta)?;
        let eps_window = eps.map(|e| scale_window(n, e)).transpose()?;
        let read_window = Window::new(0, (n + depth.max(1)) as i64 - 2);
        let mut hull = seg.hull(&delta_window).hull(&read_window);
        if let Some(w) = eps_window {
            hull = hull.hull(&w);
        }
        Ok(Self { n, delta_window, eps_window, read_window, hull })
    }
}

fn scale_window(n: usize, s: DyadicScale) -> Result<Window> {
    if s.m == 0 {
        Ok(Window::new(0, -1))
    } else {
        ball_window(n, s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartitionSumValue {
    /// `log Λ`; `-inf` when `C_n` is empty.
    pub log_value: ValueInterval,
    pub n: usize,
    pub delta: DyadicScale,
    pub eps: Option<DyadicScale>,
    /// Number of separation classes meeting `C_n`.
    pub classes: u64,
}

impl PartitionSumValue {
    pub fn is_empty(&self) -> bool {
        self.classes == 0
    }
}

fn pack(w: &[u8], k: u64) -> u64 {
    w.iter().fold(0u64, |c, &a| c * k + a as u64)
}

/// `Λ(C, φ, δ, ε, n)`; `eps = None` gives the single-scale sum with `Φ_0`.
pub fn partition_sum(
    sys: &ShiftSystem,
    c: &SegmentCollection,
    phi: &Potential,
    delta: DyadicScale,
    eps: Option<DyadicScale>,
    n: usize,
) -> Result<PartitionSumValue> {
    let maxima = class_maxima(sys, c, phi, delta, eps, n)?;
    let mut acc = LogSumExp::new();
    for (_, v) in &maxima {
        acc.push(ValueInterval::point(*v));
    }
    let err = phi.sum_error_bound(n);
    let log_value = if err > 0.0 && !acc.is_empty() { acc.value().inflate(err) } else { acc.value() };
    Ok(PartitionSumValue { log_value, n, delta, eps, classes: maxima.len() as u64 })
}

/// For every δ-class meeting `C_n`, the packed class word and `max Φ_ε` over the class.
///
/// Classes come back sorted by their packed window word.
pub fn class_maxima(
    sys: &ShiftSystem,
    c: &SegmentCollection,
    phi: &Potential,
    delta: DyadicScale,
    eps: Option<DyadicScale>,
    n: usize,
) -> Result<Vec<(u64, f64)>> {
    if n == 0 {
        return Err(Error::Invalid("partition sums need n >= 1".into()));
    }
    let lay = Layout::new(n, phi.depth(), delta, eps)?;
    let k = sys.k() as u64;
    let v = lay.hull;
    let seg_off = Window::new(0, 0).offset_in(&v);
    let d_off = lay.delta_window.offset_in(&v);
    let d_len = lay.delta_window.len();
    let r_off = lay.read_window.offset_in(&v);
    let eps_w = lay.eps_window.unwrap_or(lay.read_window);
    let e_off = eps_w.offset_in(&v);
    let e_len = eps_w.len();
    let direct = eps_w.contains_window(&lay.read_window);

    // Φ_ε as a function of the word on the ε window
    let phi_eps: Option<HashMap<u64, f64>> = if direct {
        None
    } else {
        Some(sys.fold_words(
            v.len(),
            HashMap::new,
            |acc: &mut HashMap<u64, f64>, w: &[u8]| {
                let key = pack(&w[e_off..e_off + e_len], k);
                let s = phi.sum_on(w, r_off, n);
                let e = acc.entry(key).or_insert(f64::NEG_INFINITY);
                if s > *e {
                    *e = s;
                }
            },
            merge_max,
        )?)
    };
    let value = |w: &[u8]| match &phi_eps {
        None => phi.sum_on(w, r_off, n),
        Some(m) => m[&pack(&w[e_off..e_off + e_len], k)],
    };

    if lay.delta_window == v {
        // every hull word is its own class; words arrive in lexicographic order
        return sys.fold_words(
            v.len(),
            Vec::new,
            |acc: &mut Vec<(u64, f64)>, w: &[u8]| {
                if c.contains(&w[seg_off..seg_off + n]) {
                    acc.push((pack(w, k), value(w)));
                }
            },
            |mut a, mut b| {
                a.append(&mut b);
                a
            },
        );
    }
    let classes = sys.fold_words(
        v.len(),
        HashMap::new,
        |acc: &mut HashMap<u64, f64>, w: &[u8]| {
            if c.contains(&w[seg_off..seg_off + n]) {
                let s = value(w);
                let e = acc.entry(pack(&w[d_off..d_off + d_len], k)).or_insert(f64::NEG_INFINITY);
                if s > *e {
                    *e = s;
                }
            }
        },
        merge_max,
    )?;
    let mut out: Vec<(u64, f64)> = classes.into_iter().collect();
    out.sort_unstable_by_key(|(key, _)| *key);
    Ok(out)
}

fn merge_max(mut a: HashMap<u64, f64>, b: HashMap<u64, f64>) -> HashMap<u64, f64> {
    for (key, v) in b {
        let e = a.entry(key).or_insert(f64::NEG_INFINITY);
        if v > *e {
            *e = v;
        }
    }
    a
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PressureEstimate {
    /// `(n, log Λ(n))` for `n = 1..=n_max`.
    pub log_lambda: Vec<(usize, ValueInterval)>,
    /// `log Λ(n+1) - log Λ(n)` midpoints, indexed from `n = 1`.
    pub ratios: Vec<f64>,
    /// Aitken extrapolation of the ratio sequence, before clamping.
    pub extrapolated: f64,
    /// Reported value: the extrapolation clamped to the range of the last five ratios.
    pub value: f64,
    /// Spread of the last five ratios.
    pub spread: f64,
    /// Whether the tail of the ratio sequence is monotone.
    pub monotone: bool,
    /// `C_n` is empty from some `n` on; the value is then reported as 0.
    pub eventually_empty: bool,
}

impl PressureEstimate {
    /// `[min, max]` of the last five ratios.
    pub fn ratio_range(&self) -> (f64, f64) {
        tail_range(&self.ratios)
    }

    /// `[min, max]` of the last five `(log Λ(n) - log Λ(n - span)) / span`,
    /// which absorbs period-`span` oscillation of the ratios.
    pub fn averaged_range(&self, span: usize) -> (f64, f64) {
        let l: Vec<f64> = self.log_lambda.iter().map(|(_, v)| v.mid()).collect();
        if span == 0 || l.len() <= span {
            return self.ratio_range();
        }
        let avg: Vec<f64> = (span..l.len()).map(|i| (l[i] - l[i - span]) / span as f64).filter(|v| v.is_finite()).collect();
        tail_range(&avg)
    }
}

fn tail_range(r: &[f64]) -> (f64, f64) {
    let tail = &r[r.len().saturating_sub(5)..];
    tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Ratio-method pressure estimate from `Λ(n)`, `n = 1..=n_max`.
pub fn pressure(
    sys: &ShiftSystem,
    c: &SegmentCollection,
    phi: &Potential,
    delta: DyadicScale,
    eps: Option<DyadicScale>,
    n_max: usize,
) -> Result<PressureEstimate> {
    if n_max < 4 {
        return Err(Error::Invalid(format!("pressure needs n_max >= 4, got {n_max}")));
    }
    let log_lambda = (1..=n_max)
        .map(|n| partition_sum(sys, c, phi, delta, eps, n).map(|v| (n, v.log_value)))
        .collect::<Result<Vec<_>>>()?;
    Ok(estimate_from_sums(log_lambda))
}

/// Build a [`PressureEstimate`] from a table of `log Λ(n)` for consecutive `n`.
pub fn estimate_from_sums(log_lambda: Vec<(usize, ValueInterval)>) -> PressureEstimate {
    let finite: Vec<f64> = log_lambda.iter().map(|(_, v)| v.mid()).collect();
    let eventually_empty = finite.last().map_or(true, |v| !v.is_finite());
    if eventually_empty {
        return PressureEstimate {
            log_lambda,
            ratios: Vec::new(),
            extrapolated: 0.0,
            value: 0.0,
            spread: 0.0,
            monotone: true,
            eventually_empty: true,
        };
    }
    let ratios: Vec<f64> = finite
        .windows(2)
        .filter(|p| p[0].is_finite() && p[1].is_finite())
        .map(|p| p[1] - p[0])
        .collect();
    let (lo, hi) = tail_range(&ratios);
    let r = &ratios;
    let extrapolated = if r.len() >= 3 {
        let (a, b, c) = (r[r.len() - 3], r[r.len() - 2], r[r.len() - 1]);
        let denom = (c - b) - (b - a);
        if denom.abs() > 1e-14 * (1.0 + c.abs()) {
            c - (c - b) * (c - b) / denom
        } else {
            c
        }
    } else {
        *r.last().unwrap_or(&finite[finite.len() - 1])
    };
    let value = if lo.is_finite() { extrapolated.clamp(lo, hi) } else { extrapolated };
    let tail = &r[r.len().saturating_sub(6)..];
    let diffs: Vec<f64> = tail.windows(2).map(|p| p[1] - p[0]).collect();
    let monotone = diffs.iter().all(|d| *d >= -1e-12) || diffs.iter().all(|d| *d <= 1e-12);
    PressureEstimate {
        log_lambda,
        ratios,
        extrapolated,
        value,
        spread: if lo.is_finite() { hi - lo } else { 0.0 },
        monotone,
        eventually_empty: false,
    }
}

/// Three-way outcome of an interval comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// `a <= b`, allowing the absolute tolerance `tol` for rounding of equal quantities.
    pub fn le(a: &ValueInterval, b: &ValueInterval, tol: f64) -> Self {
        if a.upper <= b.lower + tol {
            Verdict::Pass
        } else if a.lower > b.upper + tol {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn positive(margin: &ValueInterval) -> Self {
        if margin.lower > 0.0 {
            Verdict::Pass
        } else if margin.upper <= 0.0 {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn and(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::Pass, Verdict::Pass) => Verdict::Pass,
            _ => Verdict::Inconclusive,
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

/// Tolerance used when comparing partition sums that may be equal in exact arithmetic.
pub const COMPARISON_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityRow {
    pub label: String,
    pub lhs: ValueInterval,
    pub rhs: ValueInterval,
    /// `rhs - lhs`.
    pub slack: ValueInterval,
    pub verdict: Verdict,
}

impl InequalityRow {
    pub fn new(label: String, lhs: ValueInterval, rhs: ValueInterval) -> Self {
        let slack = rhs - lhs;
        let verdict = Verdict::le(&lhs, &rhs, COMPARISON_TOL);
        Self { label, lhs, rhs, slack, verdict }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub rows: Vec<InequalityRow>,
}

impl InequalityReport {
    pub fn verdict(&self) -> Verdict {
        self.rows.iter().fold(Verdict::Pass, |v, r| v.and(r.verdict))
    }

    pub fn min_slack(&self) -> f64 {
        self.rows.iter().map(|r| r.slack.lower).fold(f64::INFINITY, f64::min)
    }
}

/// `log Λ(X, 2γ, n_1 + ... + n_k) <= Σ_j log Λ(X, γ, γ, n_j)` for each split.
pub fn product_bound_check(
    sys: &ShiftSystem,
    phi: &Potential,
    gamma: DyadicScale,
    splits: &[Vec<usize>],
) -> Result<InequalityReport> {
    if gamma.m < 2 {
        return Err(Error::ScaleLadder("2γ must be below 1".into()));
    }
    let all = SegmentCollection::All;
    let two_gamma = DyadicScale::new(gamma.m - 1);
    let mut rows = Vec::new();
    for split in splits {
        let total: usize = split.iter().sum();
        let lhs = partition_sum(sys, &all, phi, two_gamma, None, total)?.log_value;
        let mut rhs = ValueInterval::zero();
        for &nj in split {
            rhs = rhs + partition_sum(sys, &all, phi, gamma, Some(gamma), nj)?.log_value;
        }
        rows.push(InequalityRow::new(format!("split {split:?}"), lhs, rhs));
    }
    Ok(InequalityReport { rows })
}

/// `e^{n Var} Λ(C, δ, ε, n) >= Λ(C, δ, n) >= e^{-n Var} Λ(C, δ, ε, n)` in log form.
pub fn sandwich_check(
    sys: &ShiftSystem,
    c: &SegmentCollection,
    phi: &Potential,
    delta: DyadicScale,
    eps: DyadicScale,
    n: usize,
) -> Result<InequalityReport> {
    let two = partition_sum(sys, c, phi, delta, Some(eps), n)?.log_value;
    let one = partition_sum(sys, c, phi, delta, None, n)?.log_value;
    let nvar = phi.variation(sys, eps)?.scale(n as f64);
    Ok(InequalityReport {
        rows: vec![
            InequalityRow::new(format!("n={n} upper"), one, two + nvar),
            InequalityRow::new(format!("n={n} lower"), two - nvar, one),
        ],
    })
}

/// `log Λ(X, γ, γ, n) >= n P(φ) - tol` for `n = 1..=n_max`.
pub fn lower_bound_check(
    sys: &ShiftSystem,
    phi: &Potential,
    gamma: DyadicScale,
    n_max: usize,
    oracle_p: f64,
    tol: f64,
) -> Result<InequalityReport> {
    let mut rows = Vec::new();
    for n in 1..=n_max {
        let lam = partition_sum(sys, &SegmentCollection::All, phi, gamma, Some(gamma), n)?.log_value;
        let target = ValueInterval::rounded(n as f64 * oracle_p - tol);
        rows.push(InequalityRow::new(format!("n={n}"), target, lam));
    }
    Ok(InequalityReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> DyadicScale {
        DyadicScale::new(1)
    }

    #[test]
    fn full_shift_counts() {
        let sys = ShiftSystem::full(2).unwrap();
        let v = partition_sum(&sys, &SegmentCollection::All, &Potential::zero(&sys), half(), Some(half()), 3).unwrap();
        assert!(v.log_value.contains(3.0 * 2f64.ln()));
        assert_eq!(v.classes, 8);
    }

    #[test]
    fn weighted_single_symbol() {
        let sys = ShiftSystem::full(2).unwrap();
        let phi = Potential::symbol_weights(&sys, &[0.0, 2f64.ln()]).unwrap();
        let v = partition_sum(&sys, &SegmentCollection::All, &phi, half(), Some(half()), 1).unwrap();
        assert!(v.log_value.contains(3f64.ln()));
        assert!(v.log_value.width() < 1e-14);
    }

    #[test]
    fn golden_four_words() {
        let sys = ShiftSystem::golden_mean();
        let v = partition_sum(&sys, &SegmentCollection::All, &Potential::zero(&sys), half(), Some(half()), 4).unwrap();
        assert!(v.log_value.contains(8f64.ln()));
    }

    #[test]
    fn full_shift_pressure_is_log_two() {
        let sys = ShiftSystem::full(2).unwrap();
        let est = pressure(&sys, &SegmentCollection::All, &Potential::zero(&sys), half(), Some(half()), 8).unwrap();
        for r in &est.ratios {
            assert!((r - 2f64.ln()).abs() < 1e-14);
        }
        assert!((est.value - 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn golden_pressure_ratio_method() {
        let sys = ShiftSystem::golden_mean();
        let est = pressure(&sys, &SegmentCollection::All, &Potential::zero(&sys), half(), Some(half()), 24).unwrap();
        let golden = ((1.0 + 5f64.sqrt()) / 2.0).ln();
        assert!((est.value - golden).abs() < 1e-6, "{}", est.value);
        let (lo, hi) = est.ratio_range();
        assert!(lo <= est.value && est.value <= hi);
    }

    #[test]
    fn empty_collection_reports_zero() {
        let sys = ShiftSystem::full(2).unwrap();
        let est = pressure(&sys, &SegmentCollection::Empty, &Potential::zero(&sys), half(), Some(half()), 5).unwrap();
        assert!(est.eventually_empty);
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn separation_window_class_count() {
        let sys = ShiftSystem::full(2).unwrap();
        let v = partition_sum(&sys, &SegmentCollection::All, &Potential::zero(&sys), DyadicScale::new(2), Some(half()), 2)
            .unwrap();
        assert_eq!(v.classes, 16);
    }

    #[test]
    fn product_bound_examples() {
        let sys = ShiftSystem::full(2).unwrap();
        let gamma = DyadicScale::new(2);
        let r = product_bound_check(&sys, &Potential::zero(&sys), gamma, &[vec![2, 4], vec![3, 3], vec![6]]).unwrap();
        assert_eq!(r.verdict(), Verdict::Pass);
        let g = ShiftSystem::golden_mean();
        let phi = Potential::symbol_weights(&g, &[0.2, -0.7]).unwrap();
        let r = product_bound_check(&g, &phi, gamma, &[vec![3, 3]]).unwrap();
        assert_eq!(r.verdict(), Verdict::Pass);
        assert!(r.min_slack() > 0.0);
    }

    #[test]
    fn sandwich_equal_for_depth_one() {
        let sys = ShiftSystem::full(2).unwrap();
        let phi = Potential::symbol_weights(&sys, &[0.1, 0.9]).unwrap();
        let r = sandwich_check(&sys, &SegmentCollection::All, &phi, DyadicScale::new(2), half(), 5).unwrap();
        assert_eq!(r.verdict(), Verdict::Pass);
        assert!((r.rows[0].lhs.mid() - r.rows[0].rhs.mid()).abs() < 1e-12);
    }

    #[test]
    fn sandwich_holds_for_holder() {
        let sys = ShiftSystem::full(2).unwrap();
        let phi = Potential::dyadic_digits(&sys, 5).unwrap();
        for n in 1..=6 {
            let r = sandwich_check(&sys, &SegmentCollection::All, &phi, DyadicScale::new(3), DyadicScale::new(2), n).unwrap();
            assert_eq!(r.verdict(), Verdict::Pass, "{r:?}");
        }
    }

    #[test]
    fn lower_bound_full_shift() {
        let sys = ShiftSystem::full(2).unwrap();
        let r = lower_bound_check(&sys, &Potential::zero(&sys), DyadicScale::new(2), 8, 2f64.ln(), 1e-12).unwrap();
        assert_eq!(r.verdict(), Verdict::Pass);
    }

    #[test]
    fn union_is_subadditive() {
        let sys = ShiftSystem::golden_mean();
        let phi = Potential::symbol_weights(&sys, &[0.3, -0.4]).unwrap();
        let a = SegmentCollection::predicate("starts0", |w| w[0] == 0);
        let b = SegmentCollection::predicate("ends0", |w| w[w.len() - 1] == 0);
        for n in 1..=6 {
            let s = |c: &SegmentCollection| partition_sum(&sys, c, &phi, DyadicScale::new(2), Some(half()), n).unwrap().log_value;
            let u = s(&a.clone().union(b.clone()));
            let (la, lb) = (s(&a).mid().exp(), s(&b).mid().exp());
            assert!(u.mid().exp() <= (la + lb) * (1.0 + 1e-12));
        }
    }
}
