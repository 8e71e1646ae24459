//! Closed real intervals with outward rounding.
//!
//! Every arithmetic result is widened by one ulp in each direction, so an
//! interval computed from exact inputs always contains the exact real result.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueInterval {
    pub lower: f64,
    pub upper: f64,
}

fn down(x: f64) -> f64 {
    if x.is_finite() {
        x.next_down()
    } else {
        x
    }
}

fn up(x: f64) -> f64 {
    if x.is_finite() {
        x.next_up()
    } else {
        x
    }
}

impl ValueInterval {
    pub fn new(lower: f64, upper: f64) -> Self {
        debug_assert!(lower <= upper, "inverted interval [{lower}, {upper}]");
        Self { lower, upper }
    }

    pub fn point(x: f64) -> Self {
        Self { lower: x, upper: x }
    }

    /// A point value known only to floating-point accuracy: widened by one ulp.
    pub fn rounded(x: f64) -> Self {
        Self { lower: down(x), upper: up(x) }
    }

    pub fn zero() -> Self {
        Self::point(0.0)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// Widen by an absolute error bound.
    pub fn inflate(&self, err: f64) -> Self {
        Self { lower: down(self.lower - err), upper: up(self.upper + err) }
    }

    pub fn scale(&self, c: f64) -> Self {
        let (a, b) = (self.lower * c, self.upper * c);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        Self { lower: down(lo), upper: up(hi) }
    }

    pub fn max(&self, other: &Self) -> Self {
        Self { lower: self.lower.max(other.lower), upper: self.upper.max(other.upper) }
    }

    pub fn min(&self, other: &Self) -> Self {
        Self { lower: self.lower.min(other.lower), upper: self.upper.min(other.upper) }
    }

    pub fn hull(&self, other: &Self) -> Self {
        Self { lower: self.lower.min(other.lower), upper: self.upper.max(other.upper) }
    }

    pub fn exp(&self) -> Self {
        // libm exp is accurate to < 1 ulp; two ulps of widening is a safe enclosure.
        Self { lower: down(down(self.lower.exp())), upper: up(up(self.upper.exp())) }
    }

    pub fn ln(&self) -> Self {
        Self { lower: down(down(self.lower.ln())), upper: up(up(self.upper.ln())) }
    }

    /// Every value of `self` is `<=` every value of `other`.
    pub fn certainly_le(&self, other: &Self) -> bool {
        self.upper <= other.lower
    }

    pub fn certainly_lt(&self, other: &Self) -> bool {
        self.upper < other.lower
    }

    pub fn certainly_positive(&self) -> bool {
        self.lower > 0.0
    }

    pub fn possibly_le(&self, other: &Self) -> bool {
        self.lower <= other.upper
    }
}

impl Add for ValueInterval {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self { lower: down(self.lower + rhs.lower), upper: up(self.upper + rhs.upper) }
    }
}

impl Sub for ValueInterval {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self { lower: down(self.lower - rhs.upper), upper: up(self.upper - rhs.lower) }
    }
}

impl Neg for ValueInterval {
    type Output = Self;
    fn neg(self) -> Self {
        Self { lower: -self.upper, upper: -self.lower }
    }
}

impl fmt::Display for ValueInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.12}, {:.12}]", self.lower, self.upper)
    }
}

/// Streaming log-sum-exp over interval-valued exponents.
///
/// Terms are rescaled by a running maximum, so sums of `e^0` stay exact
/// integers and nothing overflows. The enclosure accounts for the relative
/// rounding of every addition.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    shift: f64,
    lo_sum: f64,
    hi_sum: f64,
    terms: u64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self { shift: f64::NEG_INFINITY, lo_sum: 0.0, hi_sum: 0.0, terms: 0 }
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn terms(&self) -> u64 {
        self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms == 0
    }

    fn rescale(&mut self, new_shift: f64) {
        if self.terms > 0 && new_shift > self.shift {
            let f = (self.shift - new_shift).exp();
            self.lo_sum = down(down(self.lo_sum * f));
            self.hi_sum = up(up(self.hi_sum * f));
        }
        if new_shift > self.shift {
            self.shift = new_shift;
        }
    }

    pub fn push(&mut self, v: ValueInterval) {
        if v.upper == f64::NEG_INFINITY {
            return;
        }
        if v.upper > self.shift {
            self.rescale(v.upper);
        }
        let lo = if v.lower == f64::NEG_INFINITY { 0.0 } else { (v.lower - self.shift).exp() };
        let hi = (v.upper - self.shift).exp();
        if lo == 1.0 && hi == 1.0 {
            self.lo_sum += 1.0;
            self.hi_sum += 1.0;
        } else {
            self.lo_sum = down(self.lo_sum + down(down(lo)));
            self.hi_sum = up(self.hi_sum + up(up(hi)));
        }
        self.terms += 1;
    }

    pub fn merge(&mut self, other: &LogSumExp) {
        if other.terms == 0 {
            return;
        }
        if self.terms == 0 {
            *self = *other;
            return;
        }
        let mut o = *other;
        if o.shift > self.shift {
            self.rescale(o.shift);
        } else {
            o.rescale(self.shift);
        }
        self.lo_sum = down(self.lo_sum + o.lo_sum);
        self.hi_sum = up(self.hi_sum + o.hi_sum);
        if self.shift == 0.0 && o.shift == 0.0 && self.lo_sum.fract() == 0.0 {
            // unit-count sums at a common shift are exact; undo the widening
            let exact = (self.lo_sum.next_up()).round();
            self.lo_sum = exact;
            self.hi_sum = exact;
        }
        self.terms += o.terms;
    }

    /// Enclosure of `log Σ e^{v_i}`; `-inf` for an empty sum.
    pub fn value(&self) -> ValueInterval {
        if self.terms == 0 {
            return ValueInterval::point(f64::NEG_INFINITY);
        }
        // Integer sums below 2^53 of unit terms are exact; otherwise add a
        // relative error allowance of terms * eps.
        let exact = self.lo_sum == self.hi_sum && self.lo_sum.fract() == 0.0 && self.lo_sum < 9.0e15;
        let (lo, hi) = if exact {
            (self.lo_sum, self.hi_sum)
        } else {
            let rel = (self.terms as f64 + 2.0) * f64::EPSILON;
            (self.lo_sum * (1.0 - rel), self.hi_sum * (1.0 + rel))
        };
        if exact && self.shift == 0.0 {
            let l = lo.ln();
            return ValueInterval { lower: down(down(l)), upper: up(up(l)) };
        }
        ValueInterval {
            lower: down(down(lo.ln()) + self.shift),
            upper: up(up(hi.ln()) + self.shift),
        }
    }

    /// Exact integer count when every term was `e^0`.
    pub fn exact_count(&self) -> Option<u64> {
        if self.shift == 0.0 && self.lo_sum == self.hi_sum && self.lo_sum.fract() == 0.0 {
            Some(self.lo_sum as u64)
        } else {
            None
        }
    }
}
