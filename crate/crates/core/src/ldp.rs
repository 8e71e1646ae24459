//! Level-2 large deviations: empirical measures, convex constraint sets on
//! cylinder marginals, the variational rate bound, exact tail probabilities
//! and the upper-energy-function check.

use crate::equilibrium::{gibbs_upper_check, rpf_solve, CylinderMass, MarkovMeasure};
use crate::error::{Error, Result};
use crate::potentials::Potential;
use crate::pressure::{class_maxima, Layout, SegmentCollection, Verdict};
use crate::symbolic::{DyadicScale, Point, ShiftSystem, Window, Word};
use crate::potentials::decode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

/// Depth-`k` cylinder frequencies of `x_0 ... x_{n+k-2}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMeasure {
    pub depth: usize,
    pub n: usize,
    pub counts: BTreeMap<Word, usize>,
}

impl EmpiricalMeasure {
    pub fn freq(&self, w: &[u8]) -> f64 {
        *self.counts.get(w).unwrap_or(&0) as f64 / self.n as f64
    }
}

pub fn empirical_measure(x: &Point, n: usize, depth: usize) -> Result<EmpiricalMeasure> {
    if n == 0 || depth == 0 {
        return Err(Error::Invalid("need n >= 1 and depth >= 1".into()));
    }
    let w = x.read(&Window::new(0, (n + depth) as i64 - 2))?;
    let mut counts = BTreeMap::new();
    for j in 0..n {
        *counts.entry(w[j..j + depth].to_vec()).or_insert(0) += 1;
    }
    Ok(EmpiricalMeasure { depth, n, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Ge,
    Le,
    Eq,
}

/// `Σ_w coeffs[w] ν[w]  (≥ | ≤ | =)  rhs` over words of one length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearConstraint {
    pub coeffs: BTreeMap<Word, f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn depth(&self) -> usize {
        self.coeffs.keys().map(|w| w.len()).max().unwrap_or(1)
    }

    fn lhs(&self, mass: impl Fn(&[u8]) -> f64) -> f64 {
        self.coeffs.iter().map(|(w, a)| a * mass(w)).sum()
    }

    fn holds(&self, lhs: f64, tol: f64) -> bool {
        match self.relation {
            Relation::Ge => lhs >= self.rhs - tol,
            Relation::Le => lhs <= self.rhs + tol,
            Relation::Eq => (lhs - self.rhs).abs() <= tol,
        }
    }
}

/// A closed convex set of measures cut out by linear constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ConstraintSet {
    pub constraints: Vec<LinearConstraint>,
}

impl ConstraintSet {
    pub fn all() -> Self {
        Self::default()
    }

    /// `ν[symbol] (rel) value`.
    pub fn symbol_frequency(symbol: u8, relation: Relation, value: f64) -> Self {
        Self {
            constraints: vec![LinearConstraint { coeffs: BTreeMap::from([(vec![symbol], 1.0)]), relation, rhs: value }],
        }
    }

    pub fn and(mut self, other: ConstraintSet) -> Self {
        self.constraints.extend(other.constraints);
        self
    }

    pub fn depth(&self) -> usize {
        self.constraints.iter().map(|c| c.depth()).max().unwrap_or(1)
    }

    pub fn contains(&self, mass: &dyn CylinderMass, tol: f64) -> bool {
        self.constraints.iter().all(|c| c.holds(c.lhs(|w| mass.mass(w).unwrap_or(0.0)), tol))
    }

    fn contains_empirical(&self, e: &EmpiricalMeasure) -> bool {
        self.constraints.iter().all(|c| c.holds(c.lhs(|w| e.freq(w)), 1e-12))
    }

    /// Constraint functional `g = Σ a_w 1_{[w]}` as a potential.
    fn functional(sys: &ShiftSystem, c: &LinearConstraint) -> Result<Potential> {
        let d = c.depth();
        Potential::from_fn(sys, d, |w| c.coeffs.iter().filter(|(v, _)| w.starts_with(v)).map(|(_, a)| a).sum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateBound {
    /// `inf_λ [P(φ + Σ λ_i g_i) - Σ λ_i b_i] - P(φ)`, an upper bound for the constrained sup.
    pub value: f64,
    /// `h_ν + ∫φ dν - P(φ)` at the equilibrium state `ν` of the tilted potential.
    pub primal: f64,
    pub primal_feasible: bool,
    pub multipliers: Vec<f64>,
    pub argmax: MarkovMeasure,
}

/// `sup_{ν ∈ A} (h_ν + ∫φ dν - P(φ))` by convex duality over the constraint multipliers.
pub fn rate_upper_bound(sys: &ShiftSystem, phi: &Potential, a: &ConstraintSet) -> Result<RateBound> {
    let p0 = rpf_solve(sys, phi)?.pressure;
    // every constraint is rewritten as ∫g >= b (or = b)
    let mut gs = Vec::new();
    let mut bs = Vec::new();
    let mut free = Vec::new();
    for c in &a.constraints {
        let g = ConstraintSet::functional(sys, c)?;
        match c.relation {
            Relation::Ge => {
                gs.push(g);
                bs.push(c.rhs);
                free.push(false);
            }
            Relation::Le => {
                gs.push(g.combine(sys, -1.0, &Potential::zero(sys), 0.0)?);
                bs.push(-c.rhs);
                free.push(false);
            }
            Relation::Eq => {
                gs.push(g);
                bs.push(c.rhs);
                free.push(true);
            }
        }
    }
    for (g, b) in gs.iter().zip(&bs) {
        // sup_ν ∫g from the zero-temperature limit of P(λg)/λ
        let big = 1e4;
        let top = rpf_solve(sys, &g.combine(sys, big, &Potential::zero(sys), 0.0)?)?.pressure / big;
        if top < b - 1e-3 {
            return Err(Error::Infeasible);
        }
    }
    let tilted = |lam: &[f64]| -> Result<Potential> {
        let mut p = phi.clone();
        for (g, l) in gs.iter().zip(lam) {
            if *l != 0.0 {
                p = p.combine(sys, 1.0, g, *l)?;
            }
        }
        Ok(p)
    };
    // derivative in λ_i is ∫g_i dμ_λ - b_i; coordinate bisection on this monotone function
    let slope = |lam: &[f64], i: usize| -> Result<f64> {
        let sol = rpf_solve(sys, &tilted(lam)?)?;
        Ok(sol.measure.integral(sys, &gs[i])? - bs[i])
    };
    let mut lam = vec![0.0; gs.len()];
    for _sweep in 0..if gs.len() > 1 { 60 } else { 1 } {
        let before = lam.clone();
        for i in 0..gs.len() {
            let mut probe = lam.clone();
            probe[i] = if free[i] { -1.0 } else { 0.0 };
            let mut lo = probe[i];
            if !free[i] && slope(&probe, i)? >= 0.0 {
                lam[i] = 0.0;
                continue;
            }
            while slope(&probe, i)? > 0.0 {
                lo *= 2.0;
                probe[i] = lo;
                if lo < -1e6 {
                    return Err(Error::Infeasible);
                }
            }
            let mut hi = lo.max(0.0) + 1.0;
            probe[i] = hi;
            while slope(&probe, i)? < 0.0 {
                hi *= 2.0;
                probe[i] = hi;
                if hi > 1e6 {
                    return Err(Error::Infeasible);
                }
            }
            let (mut a_, mut b_) = (lo, hi);
            while b_ - a_ > 1e-12 * (1.0 + b_.abs()) {
                let mid = 0.5 * (a_ + b_);
                probe[i] = mid;
                if slope(&probe, i)? < 0.0 {
                    a_ = mid;
                } else {
                    b_ = mid;
                }
            }
            lam[i] = 0.5 * (a_ + b_);
        }
        if lam.iter().zip(&before).all(|(x, y)| (x - y).abs() < 1e-12) {
            break;
        }
    }
    let sol = rpf_solve(sys, &tilted(&lam)?)?;
    let dual = sol.pressure - lam.iter().zip(&bs).map(|(l, b)| l * b).sum::<f64>() - p0;
    let nu = sol.measure;
    let primal = nu.entropy() + nu.integral(sys, phi)? - p0;
    let primal_feasible = a.contains(&nu, 1e-9);
    Ok(RateBound { value: dual, primal, primal_feasible, multipliers: lam, argmax: nu })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRow {
    pub n: usize,
    /// `(1/n) log μ{x : E_n(x) ∈ A}`; `-inf` when the event is empty.
    pub value: f64,
    pub method: String,
    /// Monte Carlo only: the estimate is an upper bound from zero hits.
    pub upper_bound_only: bool,
}

/// `(1/n) log μ(E_n^{-1}(A))`: exact by symbol-count dynamic programming for
/// depth-1 constraints, Monte Carlo (seeded) otherwise.
pub fn empirical_decay_rate(
    sys: &ShiftSystem,
    mu: &MarkovMeasure,
    a: &ConstraintSet,
    ns: &[usize],
    samples: usize,
    seed: u64,
) -> Result<Vec<DecayRow>> {
    let k = sys.k();
    ns.iter()
        .map(|&n| {
            if n == 0 {
                return Err(Error::Invalid("n must be positive".into()));
            }
            if a.depth() == 1 {
                let p = count_tail(mu, k, n, |counts| {
                    let e = EmpiricalMeasure {
                        depth: 1,
                        n,
                        counts: counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(s, &c)| (vec![s as u8], c as usize)).collect(),
                    };
                    a.contains_empirical(&e)
                })?;
                let value = if p > 0.0 { p.ln() / n as f64 } else { f64::NEG_INFINITY };
                Ok(DecayRow { n, value, method: "exact".into(), upper_bound_only: false })
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ n as u64);
                let d = a.depth();
                let mut hits = 0usize;
                for _ in 0..samples {
                    let w = sample_word(mu, n + d - 1, &mut rng);
                    let x = Point::window_only(&w, Window::new(0, w.len() as i64 - 1));
                    if a.contains_empirical(&empirical_measure(&x, n, d)?) {
                        hits += 1;
                    }
                }
                let (p, only) = if hits == 0 { (3.0 / samples as f64, true) } else { (hits as f64 / samples as f64, false) };
                Ok(DecayRow { n, value: p.ln() / n as f64, method: "monte-carlo".into(), upper_bound_only: only })
            }
        })
        .collect()
}

fn sample_word(mu: &MarkovMeasure, len: usize, rng: &mut ChaCha8Rng) -> Word {
    let pick = |weights: &mut dyn Iterator<Item = (usize, f64)>, rng: &mut ChaCha8Rng| {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, w) in weights {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    };
    let mut s = pick(&mut mu.pi.iter().copied().enumerate(), rng);
    let mut w = Vec::with_capacity(len);
    for _ in 0..len {
        let row = &mu.next[s];
        let a = pick(&mut row.iter().enumerate().filter_map(|(a, e)| e.map(|(_, p)| (a, p))), rng);
        w.push(a as u8);
        s = row[a].unwrap().0;
    }
    w
}

/// `μ{x : counts of x_0..x_{n-1} satisfy pred}` by dynamic programming over (state, counts).
fn count_tail(mu: &MarkovMeasure, k: usize, n: usize, pred: impl Fn(&[u32]) -> bool) -> Result<f64> {
    let mut layer: HashMap<(usize, Vec<u32>), f64> = HashMap::new();
    for (s, &p) in mu.pi.iter().enumerate() {
        if p > 0.0 {
            layer.insert((s, vec![0; k]), p);
        }
    }
    for _ in 0..n {
        let mut next: HashMap<(usize, Vec<u32>), f64> = HashMap::with_capacity(layer.len() * 2);
        for ((s, counts), p) in &layer {
            for (a, e) in mu.next[*s].iter().enumerate() {
                if let Some((t, q)) = e {
                    let mut c = counts.clone();
                    c[a] += 1;
                    *next.entry((*t, c)).or_insert(0.0) += p * q;
                }
            }
        }
        if next.len() > 1 << 22 {
            return Err(Error::Budget { needed: next.len() as u128, budget: 1 << 22 });
        }
        layer = next;
    }
    // summation in a fixed order keeps the result reproducible
    let mut terms: Vec<(&(usize, Vec<u32>), &f64)> = layer.iter().filter(|((_, c), _)| pred(c)).collect();
    terms.sort_by(|a, b| a.0.cmp(b.0));
    Ok(terms.iter().map(|(_, p)| **p).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub decay: f64,
    pub slack: f64,
    /// `bound + slack - decay`.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub bound: RateBound,
    /// Slack is `(C log(n + 1) + log Q) / n` with `C` the number of cylinder types.
    pub slack_c: f64,
    pub log_q: f64,
    pub rows: Vec<RateRow>,
    pub verdict: Verdict,
}

/// Decay rates under the equilibrium state of `φ` against the variational bound.
pub fn ldp_upper_check(sys: &ShiftSystem, phi: &Potential, a: &ConstraintSet, ns: &[usize]) -> Result<RateReport> {
    let sol = rpf_solve(sys, phi)?;
    let bound = rate_upper_bound(sys, phi, a)?;
    let decay = empirical_decay_rate(sys, &sol.measure, a, ns, 200_000, 0)?;
    let half = DyadicScale::new(1);
    let gibbs = gibbs_upper_check(sys, phi, half, 1..=8, &sol.measure, sol.pressure)?;
    let log_q = gibbs.q_upper.max(1.0).ln();
    let slack_c = (sys.k() as f64).powi(a.depth() as i32);
    let rows: Vec<RateRow> = decay
        .iter()
        .map(|d| {
            let slack = (slack_c * ((d.n + 1) as f64).ln() + log_q) / d.n as f64;
            let margin = if d.value == f64::NEG_INFINITY { f64::INFINITY } else { bound.value + slack - d.value };
            RateRow { n: d.n, decay: d.value, slack, margin }
        })
        .collect();
    let verdict = if rows.iter().all(|r| r.margin >= -1e-9) { Verdict::Pass } else { Verdict::Fail };
    Ok(RateReport { bound, slack_c, log_q, rows, verdict })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UefRow {
    pub n: usize,
    /// `sup_x (1/n)(log μ(B_n(x, γ)) + n P - S_n φ(x))`.
    pub sup: f64,
    /// `Var(φ, γ) + (log Q) / n`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UefReport {
    pub gamma: DyadicScale,
    pub log_q: f64,
    pub var_gamma: f64,
    pub rows: Vec<UefRow>,
    pub passed: bool,
}

/// Check that `e_μ = P(φ) - φ` is an upper energy function for `μ` at scale `γ`.
pub fn upper_energy_check(
    sys: &ShiftSystem,
    phi: &Potential,
    mu: &dyn CylinderMass,
    p: f64,
    gamma: DyadicScale,
    n_max: usize,
) -> Result<UefReport> {
    let gibbs = gibbs_upper_check(sys, phi, gamma, 1..=n_max, mu, p)?;
    let log_q = gibbs.q_upper.ln();
    let var_gamma = phi.variation(sys, gamma)?.upper;
    let neg = phi.combine(sys, -1.0, &Potential::zero(sys), 0.0)?;
    let mut rows = Vec::new();
    for n in 1..=n_max {
        let lay = Layout::new(n, phi.depth(), gamma, None)?;
        let len = lay.delta_window.len();
        let mut sup = f64::NEG_INFINITY;
        // max over the class of -S_n φ
        for (code, neg_min) in class_maxima(sys, &SegmentCollection::All, &neg, gamma, None, n)? {
            let w = decode(code as usize, sys.k(), len);
            let m = mu.mass(&w).ok_or_else(|| Error::Depth(format!("measure too shallow for length {len}")))?;
            if m > 0.0 {
                sup = sup.max((m.ln() + n as f64 * p + neg_min) / n as f64);
            }
        }
        rows.push(UefRow { n, sup, bound: var_gamma + log_q / n as f64 });
    }
    let passed = rows.iter().all(|r| r.sup <= r.bound + 1e-9);
    Ok(UefReport { gamma, log_q, var_gamma, rows, passed })
}
