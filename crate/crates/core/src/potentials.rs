//! Potentials given by finite tables, Birkhoff sums, two-scale sums and variation.
//!
//! A potential of depth `d` reads `x_0 ... x_{d-1}`. A Hölder potential is
//! stored as its depth-`D` table together with a declared modulus
//! `Var(φ, 2^{-m}) <= C_h 2^{-αm}`; the modulus is checked against the table
//! when the potential is built.

use crate::error::{Error, Result};
use crate::interval::ValueInterval;
use crate::symbolic::{ball_window, word_string, DyadicScale, Point, ShiftSystem, Window, Word};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialKind {
    LocallyConstant,
    Holder { c_h: f64, alpha: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    k: usize,
    depth: usize,
    /// Indexed by the base-`k` code of the `depth`-word; NaN on inadmissible words.
    table: Vec<f64>,
    kind: PotentialKind,
}

const MAX_TABLE: usize = 1 << 24;

impl Potential {
    /// Tabulate `f` on every admissible word of length `depth`.
    pub fn from_fn(sys: &ShiftSystem, depth: usize, f: impl Fn(&[u8]) -> f64) -> Result<Self> {
        let k = sys.k();
        let size = k.checked_pow(depth as u32).filter(|&s| s <= MAX_TABLE).ok_or_else(|| {
            Error::InvalidPotential(format!("table of depth {depth} over {k} symbols is too large"))
        })?;
        let mut table = vec![f64::NAN; size];
        for w in sys.enumerate_words(depth)? {
            let v = f(&w);
            if !v.is_finite() {
                return Err(Error::InvalidPotential(format!("non-finite value on {}", word_string(&w))));
            }
            table[code(&w, k)] = v;
        }
        Ok(Self { k, depth, table, kind: PotentialKind::LocallyConstant })
    }

    pub fn zero(sys: &ShiftSystem) -> Self {
        Self::from_fn(sys, 0, |_| 0.0).expect("depth 0 table")
    }

    pub fn constant(sys: &ShiftSystem, c: f64) -> Self {
        Self::from_fn(sys, 0, |_| c).expect("depth 0 table")
    }

    /// `φ(x) = values[x_0]`.
    pub fn symbol_weights(sys: &ShiftSystem, values: &[f64]) -> Result<Self> {
        if values.len() != sys.k() {
            return Err(Error::InvalidPotential(format!("expected {} symbol weights", sys.k())));
        }
        Self::from_fn(sys, 1, |w| values[w[0] as usize])
    }

    /// Locally constant potential from explicit entries; every admissible word needs one.
    pub fn from_table(sys: &ShiftSystem, depth: usize, entries: &HashMap<Word, f64>) -> Result<Self> {
        for w in sys.enumerate_words(depth)? {
            if !entries.contains_key(&w) {
                return Err(Error::InvalidPotential(format!("missing table entry for {}", word_string(&w))));
            }
        }
        for (w, _) in entries.iter() {
            if w.len() != depth {
                return Err(Error::InvalidPotential(format!("entry {} has wrong length", word_string(w))));
            }
        }
        Self::from_fn(sys, depth, |w| entries[w])
    }

    /// Hölder potential defined by its depth-`depth` table, with the modulus validated.
    pub fn holder(sys: &ShiftSystem, depth: usize, f: impl Fn(&[u8]) -> f64, c_h: f64, alpha: f64) -> Result<Self> {
        if !(c_h >= 0.0) || !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidPotential(format!("bad Hölder data C_h={c_h}, α={alpha}")));
        }
        let mut p = Self::from_fn(sys, depth, f)?;
        p.kind = PotentialKind::Holder { c_h, alpha };
        for m in 0..=depth as u32 {
            let var = p.exact_variation(sys, DyadicScale::new(m))?;
            let bound = c_h * (-(alpha * m as f64)).exp2();
            if var > bound * (1.0 + 1e-12) + 1e-300 {
                return Err(Error::InvalidPotential(format!(
                    "Var(φ, 2^-{m}) = {var} exceeds declared modulus {bound}"
                )));
            }
        }
        Ok(p)
    }

    /// `φ(x) = Σ_{j<depth} 2^{-j} x_j` on a binary system; Hölder with `C_h = 2(k-1)`, `α = 1`.
    pub fn dyadic_digits(sys: &ShiftSystem, depth: usize) -> Result<Self> {
        let f = |w: &[u8]| w.iter().enumerate().map(|(j, &a)| a as f64 * (-(j as f64)).exp2()).sum();
        let c = (sys.k() - 1) as f64;
        Self::holder(sys, depth, f, 2.0 * c, 1.0)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    pub fn alphabet_size(&self) -> usize {
        self.k
    }

    /// `φ` on a `depth`-word.
    pub fn value(&self, w: &[u8]) -> f64 {
        self.table[code(&w[..self.depth], self.k)]
    }

    pub fn eval(&self, x: &Point) -> Result<f64> {
        let w = x.segment(self.depth)?;
        Ok(self.value(&w))
    }

    pub fn max_abs(&self) -> f64 {
        self.table.iter().filter(|v| !v.is_nan()).fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn max_value(&self) -> f64 {
        self.table.iter().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, |a, &v| a.max(v))
    }

    pub fn min_value(&self) -> f64 {
        self.table.iter().filter(|v| !v.is_nan()).fold(f64::INFINITY, |a, &v| a.min(v))
    }

    /// Entries `(word, value)` for every admissible `depth`-word.
    pub fn entries(&self) -> Vec<(Word, f64)> {
        (0..self.table.len())
            .filter(|&c| !self.table[c].is_nan())
            .map(|c| (decode(c, self.k, self.depth), self.table[c]))
            .collect()
    }

    /// `a·self + b·other`, tabulated at the larger depth.
    pub fn combine(&self, sys: &ShiftSystem, a: f64, other: &Potential, b: f64) -> Result<Self> {
        let depth = self.depth.max(other.depth);
        let mut p = Self::from_fn(sys, depth, |w| a * self.value(w) + b * other.value(w))?;
        p.kind = match (self.kind, other.kind) {
            (PotentialKind::LocallyConstant, PotentialKind::LocallyConstant) => PotentialKind::LocallyConstant,
            (x, y) => {
                let (c1, a1) = holder_data(x);
                let (c2, a2) = holder_data(y);
                PotentialKind::Holder { c_h: a.abs() * c1 + b.abs() * c2, alpha: a1.min(a2) }
            }
        };
        Ok(p)
    }

    /// Sum of `φ` over the `n` positions starting at `start`; reads `word[start .. start + n + depth - 1]`.
    pub fn sum_on(&self, word: &[u8], start: usize, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        if self.depth == 0 {
            return self.table[0] * n as f64;
        }
        let k = self.k;
        let modulus = k.pow(self.depth as u32);
        let mut c = code(&word[start..start + self.depth - 1], k);
        let mut s = 0.0;
        for j in 0..n {
            c = (c * k + word[start + self.depth - 1 + j] as usize) % modulus;
            s += self.table[c];
        }
        s
    }

    /// A-priori bound on the rounding error of [`Self::sum_on`] with `n` terms.
    pub fn sum_error_bound(&self, n: usize) -> f64 {
        let n = n as f64;
        if self.depth == 0 {
            return (self.table[0] * n).abs() * f64::EPSILON;
        }
        n * n * self.max_abs() * f64::EPSILON
    }

    /// Enclosure of `Σ φ` over `n` positions, exact (width 0) when no rounding occurs.
    pub fn sum_interval(&self, word: &[u8], start: usize, n: usize) -> ValueInterval {
        if n == 0 {
            return ValueInterval::zero();
        }
        let (s, err, exact) = if self.depth == 0 {
            let v = self.table[0];
            let s = v * n as f64;
            (s, 0.0, v.mul_add(n as f64, -s) == 0.0)
        } else {
            let k = self.k;
            let modulus = k.pow(self.depth as u32);
            let mut c = code(&word[start..start + self.depth - 1], k);
            let (mut s, mut comp) = (0.0f64, 0.0f64);
            let mut exact = true;
            for j in 0..n {
                c = (c * k + word[start + self.depth - 1 + j] as usize) % modulus;
                let v = self.table[c];
                let t = s + v;
                let e = if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
                if e != 0.0 {
                    exact = false;
                }
                comp += e;
                s = t;
            }
            (s + comp, comp.abs() * (n as f64) * f64::EPSILON, exact)
        };
        if exact {
            ValueInterval::point(s)
        } else {
            ValueInterval::rounded(s).inflate(err)
        }
    }

    /// `Φ_0(x, n) = Σ_{k<n} φ(σ^k x)`.
    pub fn birkhoff_sum(&self, x: &Point, n: usize) -> Result<ValueInterval> {
        if n == 0 {
            return Ok(ValueInterval::zero());
        }
        let w = x.read(&Window::new(0, (n + self.depth) as i64 - 2))?;
        Ok(self.sum_interval(&w, 0, n))
    }

    /// `Φ_ε(x, n) = sup { Φ_0(y, n) : d_n(x, y) <= ε }`.
    pub fn phi_eps(&self, sys: &ShiftSystem, x: &Point, n: usize, eps: DyadicScale) -> Result<ValueInterval> {
        if n == 0 {
            return Ok(ValueInterval::zero());
        }
        let read = Window::new(0, (n + self.depth) as i64 - 2);
        let ball = if eps.m == 0 { Window::new(0, -1) } else { ball_window(n, eps)? };
        if ball.contains_window(&read) {
            return self.birkhoff_sum(x, n);
        }
        let hull = ball.hull(&read);
        let fixed = if ball.is_empty() { Vec::new() } else { x.read(&ball)? };
        let state = sys.scan(&fixed).ok_or_else(|| Error::InvalidWord(word_string(&fixed)))?;
        let off = read.offset_in(&hull);
        let mut best = ValueInterval::point(f64::NEG_INFINITY);
        sys.extend_dfs(&fixed, state, hull.len(), &mut |w| {
            best = best.max(&self.sum_interval(w, off, n));
        });
        Ok(best)
    }

    /// `Var(φ, ε) = sup { |φ(x) - φ(y)| : d(x, y) <= ε }`.
    pub fn variation(&self, sys: &ShiftSystem, eps: DyadicScale) -> Result<ValueInterval> {
        let v = self.exact_variation(sys, eps)?;
        Ok(if v == 0.0 { ValueInterval::zero() } else { ValueInterval::rounded(v) })
    }

    fn exact_variation(&self, sys: &ShiftSystem, eps: DyadicScale) -> Result<f64> {
        let m = eps.m as usize;
        if self.depth == 0 || (m >= 1 && m >= self.depth) {
            return Ok(0.0);
        }
        if m == 0 {
            return Ok(self.max_value() - self.min_value());
        }
        // words on [-(m-1), depth-1]; classes are the restrictions to [-(m-1), m-1]
        let len = (m - 1) + self.depth;
        let key_len = 2 * m - 1;
        let groups = sys.fold_words(
            len,
            HashMap::new,
            |acc: &mut HashMap<Word, (f64, f64)>, w: &[u8]| {
                let v = self.value(&w[m - 1..]);
                let e = acc.entry(w[..key_len].to_vec()).or_insert((v, v));
                e.0 = e.0.min(v);
                e.1 = e.1.max(v);
            },
            |mut a, b| {
                for (key, (lo, hi)) in b {
                    let e = a.entry(key).or_insert((lo, hi));
                    e.0 = e.0.min(lo);
                    e.1 = e.1.max(hi);
                }
                a
            },
        )?;
        Ok(groups.values().fold(0.0, |a, (lo, hi)| a.max(hi - lo)))
    }

    /// The declared modulus `C_h 2^{-αm}`, if any.
    pub fn modulus_bound(&self, eps: DyadicScale) -> Option<f64> {
        match self.kind {
            PotentialKind::LocallyConstant => None,
            PotentialKind::Holder { c_h, alpha } => Some(c_h * (-(alpha * eps.m as f64)).exp2()),
        }
    }
}

fn holder_data(kind: PotentialKind) -> (f64, f64) {
    match kind {
        PotentialKind::LocallyConstant => (0.0, 1.0),
        PotentialKind::Holder { c_h, alpha } => (c_h, alpha),
    }
}

pub(crate) fn code(w: &[u8], k: usize) -> usize {
    w.iter().fold(0, |c, &a| c * k + a as usize)
}

pub(crate) fn decode(mut c: usize, k: usize, len: usize) -> Word {
    let mut w = vec![0u8; len];
    for i in (0..len).rev() {
        w[i] = (c % k) as u8;
        c /= k;
    }
    w
}
