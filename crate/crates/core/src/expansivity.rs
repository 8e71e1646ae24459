//! Non-expansive sets, `h*`, cylinder-partition entropies, and the
//! combinatorial lemmas behind the entropy-expansivity inequality.

use crate::equilibrium::{pressure_oracle, CylinderMass, MarkovMeasure};
use crate::error::{Error, Result};
use crate::potentials::Potential;
use crate::symbolic::{ball_window, DyadicScale, Point, ShiftSystem, Window, Word};
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

/// `Γ_ε(x)` seen through the horizon `|n| <= N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaDescriptor {
    pub eps: DyadicScale,
    pub horizon: usize,
    /// Coordinates that must agree with `x`; `None` when `Γ_ε` is the whole space.
    pub window: Option<Window>,
    /// The window word of `x` (the only window word of a point of `Γ_ε(x)`).
    pub word: Word,
    /// `Γ_ε(x) = {x}` and the description is exact.
    pub singleton: bool,
    pub degenerate: bool,
}

pub fn gamma_set(x: &Point, eps: DyadicScale, horizon: usize) -> Result<GammaDescriptor> {
    if eps.m == 0 {
        return Ok(GammaDescriptor { eps, horizon, window: None, word: Vec::new(), singleton: false, degenerate: true });
    }
    // d(σ^n x, σ^n y) <= 2^-m for |n| <= N  <=>  agreement on [-(N+m-1), N+m-1]
    let r = (horizon + eps.m as usize - 1) as i64;
    let window = Window::new(-r, r);
    let word = x.read(&window)?;
    Ok(GammaDescriptor { eps, horizon, window: Some(window), word, singleton: true, degenerate: false })
}

/// `μ(NE(ε))` for a probability measure on a shift.
pub fn ne_mass(eps: DyadicScale) -> f64 {
    if eps.m == 0 {
        1.0
    } else {
        0.0
    }
}

/// Essential supremum of `h(Γ_ε(x))`: zero below scale 1, the topological entropy at scale 1.
pub fn h_star(sys: &ShiftSystem, eps: DyadicScale) -> Result<f64> {
    if eps.m > 0 {
        return Ok(0.0);
    }
    Ok(pressure_oracle(sys, &Potential::zero(sys))?.value.mid())
}

/// `-Σ μ[w] log μ[w]` over admissible words of length `len`.
pub fn block_entropy(sys: &ShiftSystem, mu: &dyn CylinderMass, len: usize) -> Result<f64> {
    let mut h = 0.0;
    for w in sys.enumerate_words(len)? {
        let m = mu.mass(&w).ok_or_else(|| Error::Depth(format!("measure too shallow for length {len}")))?;
        if m > 0.0 {
            h -= m * m.ln();
        }
    }
    Ok(h)
}

/// Cylinder partition by the coordinates in `window` (which must contain 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CylinderPartition {
    pub window: Window,
}

impl CylinderPartition {
    pub fn new(window: Window) -> Result<Self> {
        if !window.contains(0) {
            return Err(Error::Invalid(format!("partition window [{}, {}] must contain 0", window.lo, window.hi)));
        }
        Ok(Self { window })
    }

    /// Cylinders on `[-r, r]`.
    pub fn centered(r: usize) -> Self {
        Self { window: Window::new(-(r as i64), r as i64) }
    }

    pub fn depth(&self) -> usize {
        self.window.len()
    }

    /// Largest distance within one element: `2^-(r+1)` with `r = min(-lo, hi)`.
    pub fn diameter(&self) -> DyadicScale {
        DyadicScale::new((-self.window.lo).min(self.window.hi) as u32 + 1)
    }

    /// Words of length `n + depth - 1` index `A^n` (shift invariance lets the window start at 0).
    pub fn join_len(&self, n: usize) -> usize {
        n + self.depth() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalEntropy {
    pub n: usize,
    pub h_a: f64,
    pub h_join: f64,
    /// `Σ_A μ(A) Σ_{B ⊂ A} -μ(B|A) log μ(B|A)`.
    pub h_b_given_a: f64,
    /// `|H(A∨B) - H(A) - H(B|A)|`.
    pub chain_defect: f64,
}

/// `H_μ(B^n | A^n)` for cylinder partitions of depths `a_depth` and `b_depth`.
pub fn conditional_entropy(
    sys: &ShiftSystem,
    mu: &dyn CylinderMass,
    a_depth: usize,
    b_depth: usize,
    n: usize,
) -> Result<ConditionalEntropy> {
    if a_depth == 0 || b_depth == 0 || n == 0 {
        return Err(Error::Depth("partition depths and n must be positive".into()));
    }
    let la = n + a_depth - 1;
    let lj = n + a_depth.max(b_depth) - 1;
    let h_a = block_entropy(sys, mu, la)?;
    let h_join = block_entropy(sys, mu, lj)?;
    let mut groups: BTreeMap<Word, Vec<f64>> = BTreeMap::new();
    for w in sys.enumerate_words(lj)? {
        let m = mu.mass(&w).ok_or_else(|| Error::Depth(format!("measure too shallow for length {lj}")))?;
        groups.entry(w[..la].to_vec()).or_default().push(m);
    }
    let mut h_b_given_a = 0.0;
    for ms in groups.values() {
        let total: f64 = ms.iter().sum();
        if total <= 0.0 {
            continue;
        }
        let inner: f64 = ms.iter().filter(|&&m| m > 0.0).map(|&m| -(m / total) * (m / total).ln()).sum();
        h_b_given_a += total * inner;
    }
    let chain_defect = (h_join - h_a - h_b_given_a).abs();
    Ok(ConditionalEntropy { n, h_a, h_join, h_b_given_a, chain_defect })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyEstimate {
    /// `(n, H(A^n) / n)`.
    pub plug_in: Vec<(usize, f64)>,
    /// `(n, H(A^n) - H(A^{n-1}))`, nonincreasing with the same limit.
    pub increments: Vec<(usize, f64)>,
    pub h: f64,
    /// Gap between the last plug-in value and the last increment.
    pub diagnostic: f64,
    pub subadditive: bool,
}

/// `h_μ(f, A)` from exact block entropies up to `n_max`.
pub fn partition_entropy(
    sys: &ShiftSystem,
    mu: &dyn CylinderMass,
    part: &CylinderPartition,
    n_max: usize,
) -> Result<EntropyEstimate> {
    if n_max < 2 {
        return Err(Error::Invalid("n_max must be at least 2".into()));
    }
    let mut hs = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        hs.push(block_entropy(sys, mu, part.join_len(n))?);
    }
    let plug_in: Vec<(usize, f64)> = hs.iter().enumerate().map(|(i, h)| (i + 1, h / (i + 1) as f64)).collect();
    let increments: Vec<(usize, f64)> = (1..n_max).map(|i| (i + 1, hs[i] - hs[i - 1])).collect();
    let tol = 1e-12;
    let subadditive =
        (0..n_max).all(|i| (0..n_max).all(|j| i + j + 1 >= n_max || hs[i + j + 1] <= hs[i] + hs[j] + tol));
    let h = increments.last().unwrap().1;
    let diagnostic = plug_in.last().unwrap().1 - h;
    Ok(EntropyEstimate { plug_in, increments, h, diagnostic, subadditive })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AeeReport {
    pub eps: DyadicScale,
    pub partition: CylinderPartition,
    pub h_mu: f64,
    pub h_mu_a: f64,
    pub h_star: f64,
    pub tolerance: f64,
    /// `h_μ(f) <= h_μ(f, A) + h*(μ, ε)` within tolerance.
    pub inequality_holds: bool,
    /// Below scale 1: `|h_μ(f, A) - h_μ(f)|` within tolerance.
    pub equality_holds: Option<bool>,
    pub estimate: EntropyEstimate,
}

pub const AEE_TOL: f64 = 1e-3;

pub fn aee_check(
    sys: &ShiftSystem,
    mu: &MarkovMeasure,
    eps: DyadicScale,
    part: &CylinderPartition,
    n_max: usize,
) -> Result<AeeReport> {
    if part.diameter().m < eps.m {
        return Err(Error::Domain(format!(
            "partition diameter 2^-{} exceeds eps 2^-{}",
            part.diameter().m,
            eps.m
        )));
    }
    let estimate = partition_entropy(sys, mu, part, n_max)?;
    let h_mu = mu.entropy();
    let hs = h_star(sys, eps)?;
    let tolerance = AEE_TOL;
    let h_mu_a = estimate.h;
    let inequality_holds = h_mu <= h_mu_a + hs + tolerance;
    let equality_holds = (eps.m > 0).then(|| (h_mu_a - h_mu).abs() <= tolerance);
    Ok(AeeReport { eps, partition: *part, h_mu, h_mu_a, h_star: hs, tolerance, inequality_holds, equality_holds, estimate })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HammingReport {
    pub n: usize,
    pub b_depth: usize,
    pub delta: DyadicScale,
    pub beta: f64,
    pub pairs_checked: u64,
    pub counterexamples: u64,
    pub first_counterexample: Option<(Word, Word)>,
}

/// Exponent `e` with `d_n(x, y) = 2^-e` when `x`, `y` agree outside `[0, len)`;
/// `None` when the words are equal.
fn dn_exponent(x: &[u8], y: &[u8], n: usize) -> Option<usize> {
    let first = (0..x.len()).find(|&i| x[i] != y[i])?;
    Some(first.saturating_sub(n - 1))
}

/// Exhaustive check that B-codings at Hamming distance `> βn` give `d_n > 2δ`.
pub fn hamming_check(sys: &ShiftSystem, b_depth: usize, delta: DyadicScale, beta: f64, n: usize) -> Result<HammingReport> {
    if b_depth == 0 || n == 0 || delta.m == 0 {
        return Err(Error::Invalid("need b_depth >= 1, n >= 1 and delta < 1".into()));
    }
    let len = n + b_depth - 1;
    let words = sys.enumerate_words(len)?;
    let pairs = (words.len() as u128) * (words.len() as u128);
    if pairs > 4 * sys.budget as u128 {
        return Err(Error::Budget { needed: pairs, budget: 4 * sys.budget });
    }
    // pairs agreeing off the window minimize d_n, so they are the only candidates
    let threshold = beta * n as f64;
    let (count, first) = words
        .par_iter()
        .map(|x| {
            let mut count = 0u64;
            let mut first = None;
            for y in &words {
                let hamming = (0..n).filter(|&k| x[k..k + b_depth] != y[k..k + b_depth]).count();
                if (hamming as f64) <= threshold {
                    continue;
                }
                // d_n > 2δ = 2^-(m-1)  <=>  exponent < m - 1
                let e = dn_exponent(x, y, n).unwrap();
                if e + 1 >= delta.m as usize {
                    count += 1;
                    first.get_or_insert_with(|| (x.clone(), y.clone()));
                }
            }
            (count, first)
        })
        .reduce(|| (0, None), |a, b| (a.0 + b.0, a.1.or(b.1)));
    Ok(HammingReport {
        n,
        b_depth,
        delta,
        beta,
        pairs_checked: pairs as u64,
        counterexamples: count,
        first_counterexample: first,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StirlingRow {
    pub beta: f64,
    /// `(n, Σ_{j <= βn} C(n, j), K_n)` with `K_n = sum / e^{(-β log β) n}`.
    pub per_n: Vec<(usize, String, f64)>,
    /// Least `K` valid for all `n <= n_max`.
    pub k_needed: f64,
    /// The running maximum of `K_n` is constant over the second half of the range.
    pub stabilizes: bool,
    /// `sum <= e^{H(β) n}` with `H` the binary entropy, for every `n`.
    pub binary_entropy_bound_holds: bool,
}

pub fn stirling_bound_check(n_max: usize, betas: &[f64]) -> Result<Vec<StirlingRow>> {
    betas
        .iter()
        .map(|&beta| {
            if !(beta > 0.0 && beta < 0.5) {
                return Err(Error::Invalid(format!("beta = {beta} outside (0, 1/2)")));
            }
            let rate = -beta * beta.ln();
            let hb = rate - (1.0 - beta) * (1.0 - beta).ln();
            let mut per_n = Vec::with_capacity(n_max);
            let mut running = Vec::with_capacity(n_max);
            let mut binary_ok = true;
            for n in 1..=n_max {
                let jmax = (beta * n as f64).floor() as usize;
                let mut c = BigUint::one();
                let mut sum = BigUint::zero();
                for j in 0..=jmax {
                    if j > 0 {
                        c = c * BigUint::from(n - j + 1) / BigUint::from(j);
                    }
                    sum += &c;
                }
                let ln_sum = big_ln(&sum);
                let kn = (ln_sum - rate * n as f64).exp();
                binary_ok &= ln_sum <= hb * n as f64 + 1e-12;
                let prev: f64 = running.last().copied().unwrap_or(0.0);
                running.push(prev.max(kn));
                per_n.push((n, sum.to_string(), kn));
            }
            let k_needed = running.last().copied().unwrap_or(1.0);
            let half = running.len() / 2;
            let stabilizes = running.len() >= 2 && running[half..].iter().all(|&r| r == running[half]);
            Ok(StirlingRow { beta, per_n, k_needed, stabilizes, binary_entropy_bound_holds: binary_ok })
        })
        .collect()
}

fn big_ln(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits < 1000 {
        return x.to_f64().unwrap().ln();
    }
    let shift = bits - 64;
    (x >> shift).to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptedPartition {
    pub n: usize,
    pub gamma: DyadicScale,
    pub window: Window,
    /// One representative window word per element.
    pub elements: Vec<Word>,
    /// `B_n(x, γ/2)` window contains the element window, which equals the `B̄_n(x, γ)` window.
    pub certificates_ok: bool,
    pub disjoint_and_covering: bool,
}

pub fn adapted_partition(sys: &ShiftSystem, n: usize, gamma: DyadicScale) -> Result<AdaptedPartition> {
    let window = ball_window(n, gamma)?;
    // the open ball of radius 2^-(m+1) is the closed ball of radius 2^-(m+2)
    let inner = ball_window(n, gamma.finer(2))?;
    let outer = ball_window(n, gamma)?;
    let elements = sys.enumerate_words(window.len())?;
    let certificates_ok = inner.contains_window(&window) && outer == window;
    let distinct = elements.windows(2).all(|w| w[0] < w[1]);
    let disjoint_and_covering = distinct && elements.len() as u128 == sys.count_words(window.len());
    Ok(AdaptedPartition { n, gamma, window, elements, certificates_ok, disjoint_and_covering })
}
