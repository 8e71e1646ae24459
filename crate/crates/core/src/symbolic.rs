//! Two-sided shift spaces over a finite alphabet.
//!
//! The metric is `d(x, y) = 2^{-min{|i| : x_i != y_i}}`, scales are dyadic, and
//! every Bowen ball is a coordinate window. All enumeration goes through
//! [`ShiftSystem::fold_words`], which shards by word prefix and merges shard
//! results in lexicographic order so that results do not depend on thread count.

use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::fmt;

pub type Word = Vec<u8>;

/// Default cap on `k^n` for exhaustive enumeration.
pub const DEFAULT_BUDGET: u64 = 1 << 26;

/// Longest supported β truncation depth (tie sets are `u128` bitsets).
pub const MAX_BETA_DEPTH: usize = 127;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alphabet {
    size: u8,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if !(2..=255).contains(&size) {
            return Err(Error::InvalidSystem(format!("alphabet size {size} outside 2..=255")));
        }
        Ok(Self { size: size as u8 })
    }

    pub fn size(&self) -> usize {
        self.size as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdmissibilityRule {
    Full,
    /// `matrix[a][b] == 1` allows `b` to follow `a`.
    Sft { matrix: Vec<Vec<u8>> },
    /// Truncated quasi-greedy expansion `d*` of 1; its length is the depth `T_β`.
    Beta { expansion: Vec<u8> },
    /// Binary sequences whose runs of 0 between consecutive 1s have lengths in `gaps`.
    /// Gap lengths above `cap` are ignored.
    SGap { gaps: BTreeSet<usize>, cap: usize },
}

/// Incremental admissibility state after reading a word left to right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScanState {
    Free,
    Start,
    Last(u8),
    /// Bit `l` set when the suffix of length `l` equals `d*[0..l]`.
    Beta { tied: u128, len: u16 },
    Gap { seen_one: bool, run: u16 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicScale {
    pub m: u32,
}

impl DyadicScale {
    pub fn new(m: u32) -> Self {
        Self { m }
    }

    pub fn value(&self) -> f64 {
        (-(self.m as f64)).exp2()
    }

    /// The scale `2^{-j}` times this one.
    pub fn finer(&self, j: u32) -> Self {
        Self { m: self.m + j }
    }

    /// Accepts `2^-m`, `1/2^m`, `1/n` for a power of two `n`, or a decimal power of two.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Invalid(format!("not a dyadic scale: {s:?}"));
        if let Some(rest) = s.strip_prefix("2^") {
            let e: i64 = rest.trim_start_matches('(').trim_end_matches(')').parse().map_err(|_| bad())?;
            if e > 0 {
                return Err(bad());
            }
            return Ok(Self { m: (-e) as u32 });
        }
        let v: f64 = if let Some(den) = s.strip_prefix("1/") {
            let den = den.trim_start_matches("2^");
            if s.contains("2^") {
                let e: u32 = den.parse().map_err(|_| bad())?;
                return Ok(Self { m: e });
            }
            let d: f64 = den.parse().map_err(|_| bad())?;
            1.0 / d
        } else {
            s.parse().map_err(|_| bad())?
        };
        if !(v > 0.0 && v <= 1.0) {
            return Err(bad());
        }
        let m = -v.log2();
        if (m - m.round()).abs() > 1e-12 {
            return Err(bad());
        }
        Ok(Self { m: m.round() as u32 })
    }
}

impl fmt::Display for DyadicScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "2^-{}", self.m)
    }
}

/// Inclusive integer coordinate range `[lo, hi]`; empty when `hi < lo`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    pub fn new(lo: i64, hi: i64) -> Self {
        Self { lo, hi }
    }

    pub fn len(&self) -> usize {
        if self.hi < self.lo {
            0
        } else {
            (self.hi - self.lo + 1) as usize
        }
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    pub fn contains(&self, i: i64) -> bool {
        self.lo <= i && i <= self.hi
    }

    pub fn contains_window(&self, other: &Window) -> bool {
        other.is_empty() || (self.lo <= other.lo && other.hi <= self.hi)
    }

    pub fn hull(&self, other: &Window) -> Window {
        if self.is_empty() {
            return *other;
        }
        if other.is_empty() {
            return *self;
        }
        Window { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }

    pub fn shifted(&self, k: i64) -> Window {
        Window { lo: self.lo + k, hi: self.hi + k }
    }

    /// Offsets of this window's coordinates inside `outer`.
    pub fn offset_in(&self, outer: &Window) -> usize {
        (self.lo - outer.lo) as usize
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Coordinates `y` must share with `x` for `d_n(x, y) <= 2^{-m}`.
pub fn ball_window(n: usize, scale: DyadicScale) -> Result<Window> {
    if scale.m == 0 {
        return Err(Error::DegenerateScale(0));
    }
    let r = scale.m as i64 - 1;
    Ok(Window::new(-r, n as i64 - 1 + r))
}

/// A bi-infinite sequence `... L L L central R R R ...` with `central[origin]` at coordinate 0.
///
/// An empty tail leaves that side undescribed; reading there fails with
/// [`Error::InsufficientWindow`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub left: Word,
    pub central: Word,
    pub right: Word,
    pub origin: i64,
}

impl Point {
    pub fn new(left: Word, central: Word, right: Word, origin: i64) -> Self {
        Self { left, central, right, origin }
    }

    /// `w^∞` in both directions with `w[0]` at coordinate 0.
    pub fn periodic(block: &[u8]) -> Self {
        Self { left: block.to_vec(), central: block.to_vec(), right: block.to_vec(), origin: 0 }
    }

    /// A point known only on `window`, carrying `word` there.
    pub fn window_only(word: &[u8], window: Window) -> Self {
        Self { left: Vec::new(), central: word.to_vec(), right: Vec::new(), origin: -window.lo }
    }

    pub fn coord(&self, i: i64) -> Option<u8> {
        let idx = i + self.origin;
        let c = self.central.len() as i64;
        if idx < 0 {
            let l = self.left.len() as i64;
            if l == 0 {
                return None;
            }
            Some(self.left[(idx.rem_euclid(l)) as usize])
        } else if idx < c {
            Some(self.central[idx as usize])
        } else {
            let r = self.right.len() as i64;
            if r == 0 {
                return None;
            }
            Some(self.right[((idx - c) % r) as usize])
        }
    }

    pub fn shift(&self, k: i64) -> Self {
        let mut p = self.clone();
        p.origin += k;
        p
    }

    pub fn read(&self, window: &Window) -> Result<Word> {
        (window.lo..=window.hi)
            .map(|i| self.coord(i).ok_or(Error::InsufficientWindow(i)))
            .collect()
    }

    /// The word `x_0 ... x_{n-1}`.
    pub fn segment(&self, n: usize) -> Result<Word> {
        self.read(&Window::new(0, n as i64 - 1))
    }

    /// Whether both tails are present.
    pub fn is_complete(&self) -> bool {
        !self.left.is_empty() && !self.right.is_empty()
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = |w: &[u8]| w.iter().map(|c| c.to_string()).collect::<String>();
        let o = self.origin.clamp(0, self.central.len() as i64) as usize;
        write!(
            f,
            "({})^∞ {}.{} ({})^∞",
            s(&self.left),
            s(&self.central[..o]),
            s(&self.central[o..]),
            s(&self.right)
        )
    }
}

/// Result of [`metric`] or [`d_n`]: the distance and whether the scan ran off the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distance {
    pub value: f64,
    pub exponent: Option<u32>,
    pub truncated: bool,
}

/// `2^{-j}` for the least `|i| = j <= horizon` with `x_i != y_i`.
pub fn metric(x: &Point, y: &Point, horizon: u32) -> Distance {
    for j in 0..=horizon as i64 {
        for i in [j, -j] {
            match (x.coord(i), y.coord(i)) {
                (Some(a), Some(b)) if a != b => {
                    return Distance { value: (-(j as f64)).exp2(), exponent: Some(j as u32), truncated: false }
                }
                (Some(_), Some(_)) => {}
                _ => return Distance { value: 0.0, exponent: None, truncated: true },
            }
        }
    }
    Distance { value: 0.0, exponent: None, truncated: true }
}

/// `max_{0 <= k < n} d(σ^k x, σ^k y)` with each scan limited to `horizon`.
pub fn d_n(x: &Point, y: &Point, n: usize, horizon: u32) -> Distance {
    let mut best = Distance { value: 0.0, exponent: None, truncated: false };
    for k in 0..n as i64 {
        let d = metric(&x.shift(k), &y.shift(k), horizon);
        best.truncated |= d.truncated && d.exponent.is_none();
        if d.value > best.value {
            best.value = d.value;
            best.exponent = d.exponent;
        }
    }
    if best.exponent.is_some() {
        best.truncated = false;
    }
    best
}

/// Closed Bowen ball membership `d_n(x, y) <= 2^{-m}`.
pub fn in_bowen_ball(x: &Point, y: &Point, n: usize, scale: DyadicScale) -> Result<bool> {
    if scale.m == 0 {
        return Ok(true);
    }
    let w = ball_window(n, scale)?;
    Ok(x.read(&w)? == y.read(&w)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftSystem {
    pub alphabet: Alphabet,
    pub rule: AdmissibilityRule,
    pub budget: u64,
}

impl ShiftSystem {
    pub fn new(k: usize, rule: AdmissibilityRule) -> Result<Self> {
        let alphabet = Alphabet::new(k)?;
        validate_rule(k, &rule)?;
        Ok(Self { alphabet, rule, budget: DEFAULT_BUDGET })
    }

    pub fn full(k: usize) -> Result<Self> {
        Self::new(k, AdmissibilityRule::Full)
    }

    pub fn sft(matrix: Vec<Vec<u8>>) -> Result<Self> {
        Self::new(matrix.len(), AdmissibilityRule::Sft { matrix })
    }

    /// Binary SFT forbidding the word `11`.
    pub fn golden_mean() -> Self {
        Self::sft(vec![vec![1, 1], vec![1, 0]]).expect("valid matrix")
    }

    /// β-shift for `d* = expansion` (alphabet `0..=d*_1`).
    pub fn beta(expansion: Vec<u8>) -> Result<Self> {
        let k = *expansion.first().ok_or_else(|| Error::InvalidSystem("empty β expansion".into()))? as usize + 1;
        Self::new(k, AdmissibilityRule::Beta { expansion })
    }

    /// β-shift for the golden ratio, `d* = (10)^∞` truncated at `depth`.
    pub fn golden_beta(depth: usize) -> Self {
        let exp = (0..depth).map(|i| if i % 2 == 0 { 1 } else { 0 }).collect();
        Self::beta(exp).expect("golden expansion is valid")
    }

    pub fn s_gap(gaps: impl IntoIterator<Item = usize>) -> Result<Self> {
        let gaps: BTreeSet<usize> = gaps.into_iter().collect();
        let cap = gaps.iter().next_back().copied().unwrap_or(0);
        Self::new(2, AdmissibilityRule::SGap { gaps, cap })
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn k(&self) -> usize {
        self.alphabet.size()
    }

    /// Length of the longest word the rule can judge (`T_β` for β-shifts).
    pub fn max_word_len(&self) -> Option<usize> {
        match &self.rule {
            AdmissibilityRule::Beta { expansion } => Some(expansion.len()),
            _ => None,
        }
    }

    /// Markov memory: admissibility of a word is decided by its subwords of length `memory + 1`.
    pub fn memory(&self) -> Option<usize> {
        match &self.rule {
            AdmissibilityRule::Full => Some(0),
            AdmissibilityRule::Sft { .. } => Some(1),
            AdmissibilityRule::SGap { .. } => Some(self.max_gap() + 1),
            AdmissibilityRule::Beta { .. } => None,
        }
    }

    fn max_gap(&self) -> usize {
        match &self.rule {
            AdmissibilityRule::SGap { gaps, cap } => gaps.range(..=*cap).next_back().copied().unwrap_or(0),
            _ => 0,
        }
    }

    pub fn start_state(&self) -> ScanState {
        match &self.rule {
            AdmissibilityRule::Full => ScanState::Free,
            AdmissibilityRule::Sft { .. } => ScanState::Start,
            AdmissibilityRule::Beta { .. } => ScanState::Beta { tied: 1, len: 0 },
            AdmissibilityRule::SGap { .. } => ScanState::Gap { seen_one: false, run: 0 },
        }
    }

    /// Extend an admissible word by `a`; `None` when the result is not admissible.
    pub fn step(&self, state: ScanState, a: u8) -> Option<ScanState> {
        if a as usize >= self.k() {
            return None;
        }
        match (&self.rule, state) {
            (AdmissibilityRule::Full, s) => Some(s),
            (AdmissibilityRule::Sft { .. }, ScanState::Start) => Some(ScanState::Last(a)),
            (AdmissibilityRule::Sft { matrix }, ScanState::Last(b)) => {
                (matrix[b as usize][a as usize] == 1).then_some(ScanState::Last(a))
            }
            (AdmissibilityRule::Beta { expansion }, ScanState::Beta { tied, len }) => {
                if len as usize + 1 > expansion.len() {
                    return None;
                }
                let mut next: u128 = 1;
                let mut t = tied;
                while t != 0 {
                    let l = t.trailing_zeros() as usize;
                    t &= t - 1;
                    let d = expansion[l];
                    if a > d {
                        return None;
                    }
                    if a == d {
                        next |= 1u128 << (l + 1);
                    }
                }
                Some(ScanState::Beta { tied: next, len: len + 1 })
            }
            (AdmissibilityRule::SGap { gaps, cap }, ScanState::Gap { seen_one, run }) => {
                let max = self.max_gap();
                if a == 0 {
                    (run as usize + 1 <= max).then_some(ScanState::Gap { seen_one, run: run + 1 })
                } else {
                    let r = run as usize;
                    if seen_one && (r > *cap || !gaps.contains(&r)) {
                        return None;
                    }
                    Some(ScanState::Gap { seen_one: true, run: 0 })
                }
            }
            _ => None,
        }
    }

    pub fn scan(&self, word: &[u8]) -> Option<ScanState> {
        word.iter().try_fold(self.start_state(), |s, &a| self.step(s, a))
    }

    pub fn is_admissible(&self, word: &[u8]) -> bool {
        self.scan(word).is_some()
    }

    /// Admissibility of every subword of bounded length; for β-shifts this
    /// checks all windows of length `T_β`, for the rest it is [`Self::is_admissible`].
    pub fn is_locally_admissible(&self, word: &[u8]) -> bool {
        match self.max_word_len() {
            Some(t) if word.len() > t => word.windows(t).all(|w| self.is_admissible(w)),
            _ => self.is_admissible(word),
        }
    }

    pub fn check_budget(&self, len: usize) -> Result<()> {
        let needed = (self.k() as u128).checked_pow(len as u32).unwrap_or(u128::MAX);
        if needed > self.budget as u128 {
            return Err(Error::Budget { needed, budget: self.budget });
        }
        Ok(())
    }

    /// Number of admissible words of length `n`, by dynamic programming over scanner states.
    pub fn count_words(&self, n: usize) -> u128 {
        let mut layer: HashMap<ScanState, u128> = HashMap::from([(self.start_state(), 1)]);
        for _ in 0..n {
            let mut next: HashMap<ScanState, u128> = HashMap::new();
            for (s, c) in &layer {
                for a in 0..self.k() as u8 {
                    if let Some(t) = self.step(*s, a) {
                        *next.entry(t).or_insert(0) += c;
                    }
                }
            }
            layer = next;
        }
        layer.values().sum()
    }

    /// Admissible words of length `n` in lexicographic order.
    pub fn enumerate_words(&self, n: usize) -> Result<Vec<Word>> {
        self.fold_words(
            n,
            Vec::new,
            |acc: &mut Vec<Word>, w: &[u8]| acc.push(w.to_vec()),
            |mut a, mut b| {
                a.append(&mut b);
                a
            },
        )
    }

    /// Fold over all admissible words of length `len` in lexicographic order.
    ///
    /// Work is split by prefix across threads; the per-prefix accumulators
    /// are merged left to right, so the result is deterministic whenever
    /// `merge` is associative.
    pub fn fold_words<T, I, F, M>(&self, len: usize, identity: I, fold: F, merge: M) -> Result<T>
    where
        T: Send,
        I: Fn() -> T + Sync + Send,
        F: Fn(&mut T, &[u8]) + Sync + Send,
        M: Fn(T, T) -> T + Sync + Send,
    {
        self.check_budget(len)?;
        let k = self.k();
        let mut p = 0;
        let mut width = 1usize;
        while p < len && width < 256 {
            width *= k;
            p += 1;
        }
        let mut prefixes: Vec<(Word, ScanState)> = vec![(Vec::new(), self.start_state())];
        for _ in 0..p {
            let mut next = Vec::with_capacity(prefixes.len() * k);
            for (w, s) in &prefixes {
                for a in 0..k as u8 {
                    if let Some(t) = self.step(*s, a) {
                        let mut w2 = w.clone();
                        w2.push(a);
                        next.push((w2, t));
                    }
                }
            }
            prefixes = next;
        }
        let parts: Vec<T> = prefixes
            .par_iter()
            .map(|(w, s)| {
                let mut acc = identity();
                self.extend_dfs(w, *s, len, &mut |word| fold(&mut acc, word));
                acc
            })
            .collect();
        Ok(parts.into_iter().fold(identity(), &merge))
    }

    /// Visit every admissible extension of `prefix` (in state `state`) to length `len`.
    pub fn extend_dfs(&self, prefix: &[u8], state: ScanState, len: usize, visit: &mut dyn FnMut(&[u8])) {
        let k = self.k() as u8;
        let mut word = prefix.to_vec();
        if word.len() >= len {
            visit(&word[..len]);
            return;
        }
        let base = word.len();
        let mut states = vec![state];
        let mut next_sym = vec![0u8];
        loop {
            let depth = states.len() - 1;
            let pos = base + depth;
            if next_sym[depth] >= k {
                states.pop();
                next_sym.pop();
                if states.is_empty() {
                    return;
                }
                word.pop();
                continue;
            }
            let a = next_sym[depth];
            next_sym[depth] += 1;
            if let Some(t) = self.step(states[depth], a) {
                word.push(a);
                if pos + 1 == len {
                    visit(&word);
                    word.pop();
                } else {
                    states.push(t);
                    next_sym.push(0);
                }
            }
        }
    }

    /// A point carrying `word` on `[0, |word|)` with periodic tails.
    pub fn complete(&self, word: &[u8]) -> Result<Point> {
        if !self.is_admissible(word) {
            return Err(Error::InvalidWord(word_string(word)));
        }
        if word.is_empty() {
            let seed = self.enumerate_words(1)?.into_iter().next().ok_or_else(|| {
                Error::InvalidSystem("no admissible symbol".into())
            })?;
            let mut p = self.complete(&seed)?;
            p.central.clear();
            p.origin = 0;
            return Ok(p);
        }
        match &self.rule {
            AdmissibilityRule::Full | AdmissibilityRule::Beta { .. } => {
                Ok(Point::new(vec![0], word.to_vec(), vec![0], 0))
            }
            AdmissibilityRule::Sft { matrix } => {
                let k = self.k();
                let succ = |b: usize| (0..k).find(|&c| matrix[b][c] == 1).unwrap();
                let pred = |b: usize| (0..k).find(|&c| matrix[c][b] == 1).unwrap();
                let (right_path, right_cycle) = walk_to_cycle(*word.last().unwrap() as usize, succ);
                let (left_path, left_cycle) = walk_to_cycle(word[0] as usize, pred);
                let mut central: Word = left_path.iter().rev().map(|&c| c as u8).collect();
                let origin = central.len() as i64;
                central.extend_from_slice(word);
                central.extend(right_path.iter().map(|&c| c as u8));
                let right: Word = right_cycle.iter().map(|&c| c as u8).collect();
                let left: Word = left_cycle.iter().rev().map(|&c| c as u8).collect();
                Ok(Point::new(left, central, right, origin))
            }
            AdmissibilityRule::SGap { .. } => {
                let s = self.max_gap();
                let lead = word.iter().take_while(|&&c| c == 0).count();
                let trail = word.iter().rev().take_while(|&&c| c == 0).count();
                let mut central = vec![1u8];
                let origin;
                if lead == word.len() {
                    central.extend(std::iter::repeat(0).take(s - lead));
                    origin = central.len() as i64;
                    central.extend_from_slice(word);
                } else {
                    central.extend(std::iter::repeat(0).take(s - lead));
                    origin = central.len() as i64;
                    central.extend_from_slice(word);
                    central.extend(std::iter::repeat(0).take(s - trail));
                }
                central.push(1);
                let mut left = vec![1u8];
                left.extend(std::iter::repeat(0).take(s));
                let mut right = vec![0u8; s];
                right.push(1);
                Ok(Point::new(left, central, right, origin))
            }
        }
    }

    /// A point carrying `word` on `window`.
    pub fn complete_on(&self, word: &[u8], window: Window) -> Result<Point> {
        let mut p = self.complete(word)?;
        p.origin -= window.lo;
        Ok(p)
    }

    /// Check the finite description of `x` against the rule.
    pub fn validate_point(&self, x: &Point) -> Result<()> {
        let reps = |b: &[u8]| if b.is_empty() { 0 } else { 2 + 2 * self.memory().unwrap_or(0) / b.len() + 2 };
        let mut w: Word = Vec::new();
        for _ in 0..reps(&x.left) {
            w.extend_from_slice(&x.left);
        }
        w.extend_from_slice(&x.central);
        for _ in 0..reps(&x.right) {
            w.extend_from_slice(&x.right);
        }
        if self.is_locally_admissible(&w) {
            Ok(())
        } else {
            Err(Error::InvalidWord(word_string(&w)))
        }
    }

    /// Maximal `(n, 2^{-m})`-separated set for a predicate on `x_0 ... x_{n-1}`.
    ///
    /// Separation classes are the admissible words on the ball window; one
    /// representative is taken per class, in lexicographic order.
    pub fn separated_set<P>(&self, n: usize, scale: DyadicScale, pred: P) -> Result<SeparatedSet>
    where
        P: Fn(&[u8]) -> bool + Sync + Send,
    {
        let window = ball_window(n, scale)?;
        let off = (-window.lo) as usize;
        let words = self.fold_words(
            window.len(),
            Vec::new,
            |acc: &mut Vec<Word>, w: &[u8]| {
                if pred(&w[off..off + n]) {
                    acc.push(w.to_vec())
                }
            },
            |mut a, mut b| {
                a.append(&mut b);
                a
            },
        )?;
        Ok(SeparatedSet { window, words })
    }
}

/// Representatives of separation classes, given by their symbols on `window`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeparatedSet {
    pub window: Window,
    pub words: Vec<Word>,
}

impl SeparatedSet {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Follow `next` from `start` until a symbol repeats: returns the symbols after
/// `start` and the cycle that the walk ends in.
fn walk_to_cycle(start: usize, next: impl Fn(usize) -> usize) -> (Vec<usize>, Vec<usize>) {
    let mut seq = vec![start];
    loop {
        let c = next(*seq.last().unwrap());
        if let Some(i) = seq.iter().position(|&s| s == c) {
            return (seq[1..].to_vec(), seq[i..].to_vec());
        }
        seq.push(c);
    }
}

pub fn word_string(w: &[u8]) -> String {
    if w.iter().all(|&c| c < 10) {
        w.iter().map(|c| char::from(b'0' + c)).collect()
    } else {
        w.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
    }
}

/// Parse `"0110"` or `"0,1,10"` into a word.
pub fn parse_word(s: &str) -> Result<Word> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    if s.contains(',') {
        s.split(',').map(|t| t.trim().parse::<u8>().map_err(|_| Error::InvalidWord(s.into()))).collect()
    } else {
        s.chars()
            .map(|c| c.to_digit(10).map(|d| d as u8).ok_or_else(|| Error::InvalidWord(s.into())))
            .collect()
    }
}

fn validate_rule(k: usize, rule: &AdmissibilityRule) -> Result<()> {
    match rule {
        AdmissibilityRule::Full => Ok(()),
        AdmissibilityRule::Sft { matrix } => {
            if matrix.len() != k || matrix.iter().any(|r| r.len() != k) {
                return Err(Error::InvalidSystem(format!("transition matrix must be {k}x{k}")));
            }
            if matrix.iter().flatten().any(|&e| e > 1) {
                return Err(Error::InvalidSystem("transition matrix entries must be 0 or 1".into()));
            }
            for a in 0..k {
                if !matrix[a].contains(&1) || !(0..k).any(|b| matrix[b][a] == 1) {
                    return Err(Error::InvalidSystem(format!("symbol {a} is stranded")));
                }
            }
            Ok(())
        }
        AdmissibilityRule::Beta { expansion } => {
            let t = expansion.len();
            if t == 0 || t > MAX_BETA_DEPTH {
                return Err(Error::InvalidSystem(format!("β depth {t} outside 1..={MAX_BETA_DEPTH}")));
            }
            if expansion[0] == 0 || expansion[0] as usize + 1 != k {
                return Err(Error::InvalidSystem("β alphabet must be 0..=d*_1 with d*_1 >= 1".into()));
            }
            for s in 1..t {
                if expansion[s..] > expansion[..t - s] {
                    return Err(Error::InvalidSystem(format!(
                        "β expansion is not shift-maximal (shift {s})"
                    )));
                }
            }
            Ok(())
        }
        AdmissibilityRule::SGap { gaps, cap } => {
            if k != 2 {
                return Err(Error::InvalidSystem("S-gap shifts are binary".into()));
            }
            if gaps.range(..=*cap).next().is_none() {
                return Err(Error::InvalidSystem("S-gap set is empty below the cap".into()));
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(sys: &ShiftSystem, n: usize) -> Vec<Word> {
        let k = sys.k();
        let mut out = Vec::new();
        for code in 0..k.pow(n as u32) {
            let mut w = vec![0u8; n];
            let mut c = code;
            for i in (0..n).rev() {
                w[i] = (c % k) as u8;
                c /= k;
            }
            if sys.is_admissible(&w) {
                out.push(w);
            }
        }
        out
    }

    #[test]
    fn full_two_shift_has_eight_three_words() {
        assert_eq!(ShiftSystem::full(2).unwrap().enumerate_words(3).unwrap().len(), 8);
    }

    #[test]
    fn golden_sft_three_words() {
        let w = ShiftSystem::golden_mean().enumerate_words(3).unwrap();
        let expect: Vec<Word> = ["000", "001", "010", "100", "101"].iter().map(|s| parse_word(s).unwrap()).collect();
        assert_eq!(w, expect);
    }

    #[test]
    fn zero_length_is_the_empty_word() {
        for sys in [ShiftSystem::full(3).unwrap(), ShiftSystem::golden_beta(20), ShiftSystem::s_gap([1, 2]).unwrap()] {
            assert_eq!(sys.enumerate_words(0).unwrap(), vec![Vec::<u8>::new()]);
        }
    }

    #[test]
    fn enumeration_matches_brute_force_and_counts() {
        let systems = [
            ShiftSystem::full(3).unwrap(),
            ShiftSystem::golden_mean(),
            ShiftSystem::golden_beta(30),
            ShiftSystem::beta(vec![2, 1, 0, 2, 1, 0, 2, 1, 0, 2, 1, 0]).unwrap(),
            ShiftSystem::s_gap([1, 3]).unwrap(),
        ];
        for sys in &systems {
            for n in 0..9 {
                let e = sys.enumerate_words(n).unwrap();
                assert_eq!(e, brute(sys, n), "{:?} n={n}", sys.rule);
                assert_eq!(e.len() as u128, sys.count_words(n));
            }
        }
    }

    #[test]
    fn golden_beta_agrees_with_golden_sft() {
        let b = ShiftSystem::golden_beta(40);
        let s = ShiftSystem::golden_mean();
        for n in 0..=14 {
            assert_eq!(b.enumerate_words(n).unwrap(), s.enumerate_words(n).unwrap());
        }
    }

    #[test]
    fn beta_rejects_words_beyond_depth() {
        let b = ShiftSystem::golden_beta(5);
        assert!(b.is_admissible(&[0, 0, 0, 0, 0]));
        assert!(!b.is_admissible(&[0, 0, 0, 0, 0, 0]));
    }

    #[test]
    fn invalid_systems_rejected() {
        assert!(ShiftSystem::sft(vec![vec![1, 0], vec![1, 0]]).is_err());
        assert!(ShiftSystem::beta(vec![1, 1, 0]).is_ok());
        assert!(ShiftSystem::beta(vec![1, 0, 1, 1]).is_err());
        assert!(ShiftSystem::s_gap([]).is_err());
        assert!(Alphabet::new(1).is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let sys = ShiftSystem::full(2).unwrap().with_budget(1000);
        assert!(matches!(sys.enumerate_words(10), Err(Error::Budget { .. })));
        assert!(sys.enumerate_words(9).is_ok());
    }

    #[test]
    fn metric_examples() {
        let x = Point::periodic(&[0]);
        assert_eq!(metric(&x, &x, 20).value, 0.0);
        let mut y = x.clone();
        y.central = vec![1];
        assert_eq!(metric(&x, &y, 20).value, 1.0);
        let z = Point::new(vec![0], vec![1, 0, 0, 0, 0, 1], vec![0], 2);
        assert_eq!(metric(&x, &z, 20).value, 0.25);
        assert_eq!(d_n(&x, &y, 3, 20).value, 1.0);
        assert!(d_n(&x, &y, 3, 20).value >= d_n(&x, &y, 1, 20).value);
    }

    #[test]
    fn ball_window_examples() {
        assert_eq!(ball_window(4, DyadicScale::new(1)).unwrap(), Window::new(0, 3));
        assert_eq!(ball_window(1, DyadicScale::new(2)).unwrap(), Window::new(-1, 1));
        assert!(ball_window(3, DyadicScale::new(0)).is_err());
    }

    #[test]
    fn ball_window_matches_exhaustive_distance() {
        let sys = ShiftSystem::full(2).unwrap();
        let outer = Window::new(-6, 11);
        for n in 1..=4 {
            for m in 1..=3 {
                let scale = DyadicScale::new(m);
                let w = ball_window(n, scale).unwrap();
                for a in 0..256u32 {
                    for b in [0u32, 1, 5, 17, 130, 255, a ^ 1, a ^ 64] {
                        let mk = |bits: u32| {
                            let mut word = vec![0u8; outer.len()];
                            for j in 0..8 {
                                word[(j + 4) as usize] = ((bits >> j) & 1) as u8;
                            }
                            Point::new(vec![0], word, vec![0], -outer.lo)
                        };
                        let (x, y) = (mk(a), mk(b));
                        let close = d_n(&x, &y, n, 12).value <= scale.value();
                        assert_eq!(close, x.read(&w).unwrap() == y.read(&w).unwrap());
                    }
                }
                let _ = &sys;
            }
        }
    }

    #[test]
    fn separated_set_examples() {
        let full = ShiftSystem::full(2).unwrap();
        assert_eq!(full.separated_set(2, DyadicScale::new(1), |_| true).unwrap().len(), 4);
        assert_eq!(full.separated_set(2, DyadicScale::new(2), |_| true).unwrap().len(), 16);
        let g = ShiftSystem::golden_mean();
        assert_eq!(g.separated_set(3, DyadicScale::new(1), |_| true).unwrap().len(), 5);
        assert!(g.separated_set(3, DyadicScale::new(1), |_| false).unwrap().is_empty());
    }

    #[test]
    fn completions_are_admissible() {
        let systems = [
            ShiftSystem::full(2).unwrap(),
            ShiftSystem::golden_mean(),
            ShiftSystem::sft(vec![vec![0, 1, 0], vec![0, 0, 1], vec![1, 1, 0]]).unwrap(),
            ShiftSystem::golden_beta(60),
            ShiftSystem::s_gap([2, 3]).unwrap(),
        ];
        for sys in &systems {
            for w in sys.enumerate_words(5).unwrap() {
                let p = sys.complete(&w).unwrap();
                assert!(p.is_complete());
                assert_eq!(p.segment(5).unwrap(), w);
                let long = p.read(&Window::new(-25, 29)).unwrap();
                assert!(sys.is_locally_admissible(&long), "{:?} {}", sys.rule, p);
            }
        }
    }

    #[test]
    fn scale_parsing() {
        assert_eq!(DyadicScale::parse("2^-3").unwrap().m, 3);
        assert_eq!(DyadicScale::parse("0.25").unwrap().m, 2);
        assert_eq!(DyadicScale::parse("1/8").unwrap().m, 3);
        assert_eq!(DyadicScale::parse("1").unwrap().m, 0);
        assert!(DyadicScale::parse("0.3").is_err());
    }
}
