//! Suspension flows over shifts: exact rational flow arithmetic, the flow
//! Bowen metric on a time grid, continuous-time partition sums, the
//! root-equation pressure oracle, Abramov's formula and bracket collections.
//!
//! Flow potentials are constant on fibers: `φ(x, s) = ψ(x)` for a base
//! potential `ψ`, so `∫_0^t φ(f_s y) ds` is a finite sum of fiber lengths.

use crate::decomposition::DecompositionRule;
use crate::equilibrium::{pressure_oracle, CylinderMass, MarkovMeasure};
use crate::error::{Error, Result};
use crate::interval::{LogSumExp, ValueInterval};
use crate::potentials::{code, Potential};
use crate::pressure::{estimate_from_sums, Part, PressureEstimate, SegmentCollection, Verdict};
use crate::symbolic::{metric, DyadicScale, Point, ScanState, ShiftSystem, Window, Word};
use num_rational::Rational64;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::Arc;

pub type Q = Rational64;

/// Base-metric coordinates scanned when comparing flow points.
const BASE_HORIZON: u32 = 32;

pub fn qf(q: Q) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Parse `"3/2"`, `"2"` or a finite decimal such as `"1.25"`.
pub fn parse_rational(s: &str) -> Result<Q> {
    let s = s.trim();
    if let Ok(q) = s.parse::<Q>() {
        return Ok(q);
    }
    let bad = || Error::Invalid(format!("cannot parse {s:?} as a rational"));
    let (int, frac) = s.split_once('.').ok_or_else(bad)?;
    if frac.len() > 12 || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let den = 10i64.pow(frac.len() as u32);
    let neg = int.starts_with('-');
    let ip: i64 = if int.is_empty() || int == "-" { 0 } else { int.parse().map_err(|_| bad())? };
    let fp: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
    let num = ip.abs() * den + fp;
    Ok(Q::new(if neg { -num } else { num }, den))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoofFunction {
    k: usize,
    depth: usize,
    #[serde(serialize_with = "ser_rationals")]
    table: Vec<Q>,
}

fn ser_rationals<S: serde::Serializer>(v: &[Q], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|q| q.to_string()))
}

impl RoofFunction {
    /// Roof of depth `depth` indexed by the base-`k` code of the word.
    pub fn new(k: usize, depth: usize, table: Vec<Q>) -> Result<Self> {
        if table.len() != k.pow(depth as u32) {
            return Err(Error::InvalidSystem(format!("roof table needs {} entries", k.pow(depth as u32))));
        }
        if table.iter().any(|r| !r.is_positive()) {
            return Err(Error::InvalidSystem("roof values must be positive".into()));
        }
        Ok(Self { k, depth, table })
    }

    pub fn constant(k: usize, r: Q) -> Result<Self> {
        Self::new(k, 0, vec![r])
    }

    /// `r(x) = values[x_0]`.
    pub fn symbols(values: &[Q]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn value(&self, w: &[u8]) -> Q {
        self.table[code(&w[..self.depth], self.k)]
    }

    pub fn r_min(&self) -> Q {
        *self.table.iter().min().unwrap()
    }

    pub fn r_max(&self) -> Q {
        *self.table.iter().max().unwrap()
    }

    fn at(&self, x: &Point) -> Result<Q> {
        let w = x.read(&Window::new(0, self.depth as i64 - 1))?;
        Ok(self.value(&w))
    }
}

#[derive(Debug, Clone)]
pub struct SuspensionFlow {
    pub base: ShiftSystem,
    pub roof: RoofFunction,
    /// Largest `|t|` accepted by [`SuspensionFlow::flow`].
    pub horizon: Q,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowPoint {
    pub base: Point,
    pub height: Q,
}

impl SuspensionFlow {
    pub fn new(base: ShiftSystem, roof: RoofFunction) -> Result<Self> {
        if roof.k != base.k() {
            return Err(Error::InvalidSystem("roof alphabet differs from the base alphabet".into()));
        }
        Ok(Self { base, roof, horizon: Q::from_integer(1 << 20) })
    }

    pub fn with_horizon(mut self, horizon: Q) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn point(&self, base: Point, height: Q) -> Result<FlowPoint> {
        let r = self.roof.at(&base)?;
        if height.is_negative() || height >= r {
            return Err(Error::Domain(format!("height {height} outside [0, {r})")));
        }
        Ok(FlowPoint { base, height })
    }

    /// `f_t(p)`, exact in rational arithmetic.
    pub fn flow(&self, p: &FlowPoint, t: Q) -> Result<FlowPoint> {
        if t.abs() > self.horizon {
            return Err(Error::Horizon { t: qf(t), horizon: qf(self.horizon) });
        }
        let mut x = p.base.clone();
        let mut s = p.height + t;
        loop {
            let r = self.roof.at(&x)?;
            if s < r {
                break;
            }
            s -= r;
            x = x.shift(1);
        }
        while s.is_negative() {
            x = x.shift(-1);
            s += self.roof.at(&x)?;
        }
        Ok(FlowPoint { base: x, height: s })
    }

    /// `max(d(x, y), |s - u| / r_min)`, minimized over the representatives
    /// obtained by moving one of the points across its roof.
    pub fn flow_metric(&self, p: &FlowPoint, q: &FlowPoint) -> Result<f64> {
        let rmin = qf(self.roof.r_min());
        let d = |x: &Point, s: Q, y: &Point, u: Q| metric(x, y, BASE_HORIZON).value.max(qf((s - u).abs()) / rmin);
        let p1 = (p.base.shift(1), p.height - self.roof.at(&p.base)?);
        let q1 = (q.base.shift(1), q.height - self.roof.at(&q.base)?);
        Ok(d(&p.base, p.height, &q.base, q.height)
            .min(d(&p1.0, p1.1, &q.base, q.height))
            .min(d(&p.base, p.height, &q1.0, q1.1)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowDistance {
    /// Maximum over the grid: a lower bound for `d_t`.
    pub lower: f64,
    /// Height drift within one grid step, `Δ / r_min`.
    pub grid_slack: f64,
}

/// `max_{s ∈ {0, Δ, 2Δ, ..., t}} d(f_s p, f_s q)`.
pub fn flow_d_t(flow: &SuspensionFlow, p: &FlowPoint, q: &FlowPoint, t: Q, dt: Q) -> Result<FlowDistance> {
    if !dt.is_positive() || t.is_negative() {
        return Err(Error::Invalid("need dt > 0 and t >= 0".into()));
    }
    let steps = (t / dt).floor().to_integer();
    let (mut a, mut b) = (p.clone(), q.clone());
    let mut lower = flow.flow_metric(&a, &b)?;
    for _ in 0..steps {
        a = flow.flow(&a, dt)?;
        b = flow.flow(&b, dt)?;
        lower = lower.max(flow.flow_metric(&a, &b)?);
    }
    let rest = t - dt * Q::from_integer(steps);
    if rest.is_positive() {
        a = flow.flow(&a, rest)?;
        b = flow.flow(&b, rest)?;
        lower = lower.max(flow.flow_metric(&a, &b)?);
    }
    Ok(FlowDistance { lower, grid_slack: qf(dt / flow.roof.r_min()) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallIdentityReport {
    pub eps: f64,
    pub n: usize,
    pub t: String,
    pub dt: String,
    pub pairs: usize,
    pub flow_members: usize,
    pub map_members: usize,
    pub disagreements: usize,
}

fn random_word(sys: &ShiftSystem, len: usize, rng: &mut ChaCha8Rng) -> Result<Word> {
    for _ in 0..1000 {
        let mut w = Vec::with_capacity(len);
        let mut state = sys.start_state();
        for _ in 0..len {
            let options: Vec<(u8, ScanState)> =
                (0..sys.k() as u8).filter_map(|a| sys.step(state, a).map(|s| (a, s))).collect();
            if options.is_empty() {
                break;
            }
            let (a, s) = options[rng.gen_range(0..options.len())];
            w.push(a);
            state = s;
        }
        if w.len() == len {
            return Ok(w);
        }
    }
    Err(Error::InvalidSystem(format!("no admissible word of length {len} found")))
}

/// Compare `B_{nt}(x, ε; F)` with `B_n(x, ε; f_t)` on random pairs near `x`.
pub fn time_t_ball_check(
    flow: &SuspensionFlow,
    eps: f64,
    n: usize,
    t: Q,
    pairs: usize,
    seed: u64,
) -> Result<BallIdentityReport> {
    if !(eps > 0.0) || n == 0 || !t.is_positive() {
        return Err(Error::Invalid("need eps > 0, n >= 1 and t > 0".into()));
    }
    let m = (4.0 * qf(t) / eps).ceil() as i64;
    let dt = t / Q::from_integer(m);
    let total = t * Q::from_integer(n as i64);
    let reach = (qf(total) / qf(flow.roof.r_min())).ceil() as i64 + BASE_HORIZON as i64 + 4;
    let window = Window::new(-reach, reach);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut flow_members, mut map_members, mut disagreements) = (0, 0, 0);
    for _ in 0..pairs {
        let wx = random_word(&flow.base, window.len(), &mut rng)?;
        let x = Point::window_only(&wx, window);
        let rx = flow.roof.at(&x)?;
        let hx = rx * Q::new(rng.gen_range(0..64), 64);
        // y: x with coordinates resampled beyond a random radius, height nudged
        let cut = rng.gen_range(0..8i64);
        let mut wy = wx.clone();
        for _ in 0..20 {
            let mut cand = wx.clone();
            for i in window.lo..=window.hi {
                if i.abs() >= cut && rng.gen_bool(0.5) {
                    let idx = (i - window.lo) as usize;
                    cand[idx] = rng.gen_range(0..flow.base.k() as u8);
                }
            }
            if flow.base.is_admissible(&cand) {
                wy = cand;
                break;
            }
        }
        let y = Point::window_only(&wy, window);
        let ry = flow.roof.at(&y)?;
        let nudge = dt * Q::from_integer(rng.gen_range(-8..=8));
        let mut hy = hx + nudge;
        if hy.is_negative() {
            hy = Q::zero();
        }
        if hy >= ry {
            hy = ry - dt.min(ry / Q::from_integer(2));
        }
        let px = flow.point(x, hx)?;
        let py = flow.point(y, hy)?;
        let in_flow = flow_d_t(flow, &px, &py, total, dt)?.lower < eps;
        let mut in_map = true;
        let (mut a, mut b) = (px.clone(), py.clone());
        for k in 0..n {
            if k > 0 {
                a = flow.flow(&a, t)?;
                b = flow.flow(&b, t)?;
            }
            if flow_d_t(flow, &a, &b, t, dt)?.lower >= eps {
                in_map = false;
                break;
            }
        }
        flow_members += in_flow as usize;
        map_members += in_map as usize;
        disagreements += (in_flow != in_map) as usize;
    }
    Ok(BallIdentityReport { eps, n, t: t.to_string(), dt: dt.to_string(), pairs, flow_members, map_members, disagreements })
}

/// Collections of flow orbit segments `(x, t)`. The base word of a segment is
/// the run of fibers from the starting fiber up to, not including, the fiber
/// where it ends.
#[derive(Debug, Clone)]
pub enum FlowCollection {
    All,
    Empty,
    /// Durations in `[lo, hi]`.
    Duration { lo: Q, hi: Q },
    /// Segments whose base word lies in a base collection.
    Base(SegmentCollection),
    Union(Vec<FlowCollection>),
}

impl FlowCollection {
    pub fn contains(&self, word: &[u8], duration: Q) -> bool {
        match self {
            FlowCollection::All => true,
            FlowCollection::Empty => false,
            FlowCollection::Duration { lo, hi } => *lo <= duration && duration <= *hi,
            FlowCollection::Base(c) => c.contains(word),
            FlowCollection::Union(cs) => cs.iter().any(|c| c.contains(word, duration)),
        }
    }

    /// The lift of `P ∪ S` for a base decomposition rule.
    pub fn prefix_suffix(rule: &Arc<DecompositionRule>) -> Self {
        FlowCollection::Union(vec![
            FlowCollection::Base(rule.collection(Part::Prefix)),
            FlowCollection::Base(rule.collection(Part::Suffix)),
        ])
    }

}

/// Coordinates `x_i` for `i` in a window, indexed relative to coordinate 0.
struct Coords<'a> {
    word: &'a [u8],
    offset: usize,
}

impl Coords<'_> {
    fn slice(&self, from: i64, to: i64) -> &[u8] {
        &self.word[(self.offset as i64 + from) as usize..(self.offset as i64 + to) as usize]
    }
}

/// Fiber start times `T_q` relative to the start of fiber 0, for `q` in `lo..=hi`.
fn fiber_times(roof: &RoofFunction, c: &Coords, lo: i64, hi: i64) -> Vec<Q> {
    let mut t = vec![Q::zero(); (hi - lo + 1) as usize];
    let z = (-lo) as usize;
    for q in 0..hi {
        t[z + q as usize + 1] = t[z + q as usize] + roof.value(c.slice(q, q + roof.depth as i64));
    }
    for q in (lo..0).rev() {
        t[(q - lo) as usize] = t[(q - lo + 1) as usize] - roof.value(c.slice(q, q + roof.depth as i64));
    }
    t
}

/// Index of the fiber containing time `tau`, given times for fibers `lo..`.
fn fiber_of(times: &[Q], lo: i64, tau: Q) -> i64 {
    let i = times.partition_point(|&s| s <= tau);
    lo + i as i64 - 1
}

/// `[C]`: `(x, n)` with `(f_{-s} x, n + s + t) ∈ C` for some `s, t ∈ [0, 1]`.
#[derive(Debug, Clone)]
pub struct BracketCollection {
    pub inner: FlowCollection,
}

impl BracketCollection {
    pub fn new(inner: FlowCollection) -> Self {
        Self { inner }
    }

    pub fn contains(&self, flow: &SuspensionFlow, p: &FlowPoint, n: usize) -> Result<bool> {
        let rmin = qf(flow.roof.r_min());
        let back = (1.0 / rmin).ceil() as i64 + 1;
        let fwd = ((n as f64 + 2.0 + qf(flow.roof.r_max())) / rmin).ceil() as i64 + flow.roof.depth as i64 + 1;
        let w = p.base.read(&Window::new(-back, fwd))?;
        let c = Coords { word: &w, offset: back as usize };
        Ok(bracket_member(&self.inner, &flow.roof, &c, -back, fwd - flow.roof.depth as i64, p.height, n))
    }
}

fn bracket_member(inner: &FlowCollection, roof: &RoofFunction, c: &Coords, lo: i64, hi: i64, h: Q, n: usize) -> bool {
    let times = fiber_times(roof, c, lo, hi);
    let one = Q::from_integer(1);
    let nq = Q::from_integer(n as i64);
    let atoms: Vec<&FlowCollection> = match inner {
        FlowCollection::Union(cs) => cs.iter().collect(),
        other => vec![other],
    };
    let j_lo = fiber_of(&times, lo, h - one);
    let j_hi = fiber_of(&times, lo, h);
    let e_lo = fiber_of(&times, lo, h + nq);
    let e_hi = fiber_of(&times, lo, h + nq + one);
    atoms.iter().any(|atom| match atom {
        FlowCollection::Duration { lo: a, hi: b } => *a <= nq + one + one && nq <= *b,
        FlowCollection::Union(_) => bracket_member(atom, roof, c, lo, hi, h, n),
        _ => (j_lo..=j_hi).any(|j| (e_lo..=e_hi).any(|e| atom.contains(c.slice(j, e.max(j)), nq))),
    })
}

/// Which segments a flow partition sum ranges over.
#[derive(Debug, Clone)]
pub enum FlowSegments {
    Segments(FlowCollection),
    /// `[C]` at integer durations.
    Bracket(FlowCollection),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowPartitionSum {
    pub t: String,
    pub log_value: ValueInterval,
    pub classes: u64,
    pub heights: usize,
    pub degenerate: bool,
}

struct SumSetup<'a> {
    flow: &'a SuspensionFlow,
    set: &'a FlowSegments,
    psi: &'a Potential,
    t: Q,
    m_delta: i64,
    m_eps: Option<i64>,
    back: i64,
    fwd_margin: i64,
    lookahead: Q,
}

#[derive(Default)]
struct Acc {
    direct: LogSumExp,
    /// δ-class key -> ε-class key for classes in the collection.
    members: HashMap<Word, Word>,
    /// ε-class key -> max Φ.
    eps_max: HashMap<Word, f64>,
    leaves: u64,
}

impl SumSetup<'_> {
    fn fast(&self) -> bool {
        matches!(self.set, FlowSegments::Segments(_)) && self.m_eps.is_none() && self.back == self.m_delta - 1
    }

    /// Φ over `[h, h + t)` from fiber times.
    fn integral(&self, c: &Coords, times: &[Q], lo: i64, h: Q) -> f64 {
        let end = h + self.t;
        let d = self.psi.depth() as i64;
        let mut s = 0.0;
        for (i, w) in times.windows(2).enumerate() {
            let q = lo + i as i64;
            let a = w[0].max(h);
            let b = w[1].min(end);
            if b > a {
                s += self.psi.value(c.slice(q, q + d)) * qf(b - a);
            }
            if w[0] >= end {
                break;
            }
        }
        s
    }

    fn leaf(&self, word: &[u8], h: Q, end_fiber: i64, acc: &mut Acc) {
        acc.leaves += 1;
        let c = Coords { word, offset: self.back as usize };
        let hi = (word.len() as i64 - self.back) - self.flow.roof.depth as i64;
        let times = fiber_times(&self.flow.roof, &c, -self.back, hi);
        let phi = self.integral(&c, &times, -self.back, h);
        let j_t = fiber_of(&times, -self.back, h + self.t);
        let member = match self.set {
            FlowSegments::Segments(col) => col.contains(c.slice(0, j_t.max(0)), self.t),
            FlowSegments::Bracket(col) => {
                let n = self.t.to_integer() as usize;
                bracket_member(col, &self.flow.roof, &c, -self.back, hi, h, n)
            }
        };
        if self.fast() {
            if member {
                acc.direct.push(ValueInterval::point(phi));
            }
            return;
        }
        let _ = end_fiber;
        let md = self.m_delta - 1;
        let dkey = c.slice(-md, j_t + md.max(self.fwd_margin) + 1).to_vec();
        let me = self.m_eps.unwrap_or(self.m_delta) - 1;
        let ekey = match self.m_eps {
            Some(_) => {
                let mut k = c.slice(-me, (j_t + me + 1).min(hi + self.flow.roof.depth as i64)).to_vec();
                k.extend_from_slice(&j_t.to_le_bytes());
                k
            }
            None => dkey.clone(),
        };
        let e = acc.eps_max.entry(ekey.clone()).or_insert(f64::NEG_INFINITY);
        *e = e.max(phi);
        if member {
            acc.members.insert(dkey, ekey);
        }
    }

    fn dfs(&self, word: &mut Word, state: ScanState, times: &mut Vec<Q>, h: Q, acc: &mut Acc, prefix: &[u8]) -> Result<()> {
        if acc.leaves > self.flow.base.budget {
            return Err(Error::Budget { needed: acc.leaves as u128, budget: self.flow.base.budget });
        }
        let i = word.len() as i64 - self.back - 1;
        let dr = self.flow.roof.depth as i64;
        // times[q] = T_q for q >= 0; extend with the newest roof
        let q = i - dr + 1;
        let pushed = if q >= 0 && times.len() as i64 == q + 1 {
            let c = Coords { word, offset: self.back as usize };
            let r = self.flow.roof.value(c.slice(q, q + dr));
            if q == 0 && h >= r {
                return Ok(());
            }
            times.push(times[q as usize] + r);
            true
        } else {
            false
        };
        let horizon = h + self.t + self.lookahead;
        let end_fiber = if *times.last().unwrap() > horizon {
            Some(fiber_of(times, 0, horizon))
        } else {
            None
        };
        match end_fiber {
            Some(j) if i >= j + self.fwd_margin => self.leaf(word, h, j, acc),
            _ => {
                let symbols = match prefix.get(word.len()) {
                    Some(&a) => a..a + 1,
                    None => 0..self.flow.base.k() as u8,
                };
                for a in symbols {
                    if let Some(s) = self.flow.base.step(state, a) {
                        word.push(a);
                        self.dfs(word, s, times, h, acc, prefix)?;
                        word.pop();
                    }
                }
            }
        }
        if pushed {
            times.pop();
        }
        Ok(())
    }
}

/// `Λ(C, φ, δ, ε, t)` by class sums: candidates are base words covering the
/// segment (with `δ`-margins) at heights spaced more than `δ·r_min` apart.
pub fn flow_partition_sum(
    flow: &SuspensionFlow,
    set: &FlowSegments,
    psi: &Potential,
    delta: DyadicScale,
    eps: Option<DyadicScale>,
    t: Q,
) -> Result<FlowPartitionSum> {
    if delta.m == 0 || eps.map_or(false, |e| e.m == 0) {
        return Err(Error::DegenerateScale(0));
    }
    if t.is_zero() {
        return Ok(FlowPartitionSum {
            t: t.to_string(),
            log_value: ValueInterval::point(f64::NEG_INFINITY),
            classes: 0,
            heights: 0,
            degenerate: true,
        });
    }
    if let FlowSegments::Bracket(_) = set {
        if !t.is_integer() {
            return Err(Error::Invalid("bracket collections need integer durations".into()));
        }
    }
    let roof = &flow.roof;
    let rmin = roof.r_min();
    let dval = Q::new(1, 1i64 << delta.m);
    let dt = dval / Q::from_integer(4);
    let step = ((dval * rmin) / dt).floor() * dt + dt;
    let m_delta = delta.m as i64;
    let needs_back = match set {
        FlowSegments::Bracket(_) => true,
        FlowSegments::Segments(_) => false,
    };
    let lookback = if needs_back { (1.0 / qf(rmin)).ceil() as i64 + 1 } else { 0 };
    let back = (m_delta - 1).max(lookback);
    let fwd_margin = (m_delta - 1).max(roof.depth as i64 - 1).max(psi.depth() as i64 - 1);
    let lookahead = if needs_back { Q::from_integer(1) } else { Q::zero() };
    let setup = SumSetup {
        flow,
        set,
        psi,
        t,
        m_delta,
        m_eps: eps.map(|e| e.m as i64),
        back,
        fwd_margin,
        lookahead,
    };
    let mut heights = Vec::new();
    let mut h = Q::zero();
    while h < roof.r_max() {
        heights.push(h);
        h += step;
    }
    // shard over (height, first symbols) and merge in a fixed order
    let prefix_len = back as usize + 3;
    let prefixes = flow.base.enumerate_words(prefix_len)?;
    let jobs: Vec<(Q, &Word)> = heights.iter().flat_map(|&h| prefixes.iter().map(move |p| (h, p))).collect();
    let parts: Vec<Acc> = jobs
        .par_iter()
        .map(|(h, p)| {
            let mut acc = Acc::default();
            let mut word = Vec::with_capacity(64);
            let mut times = vec![Q::zero()];
            setup.dfs(&mut word, flow.base.start_state(), &mut times, *h, &mut acc, p).map(|_| acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = LogSumExp::new();
    let classes: u64;
    let mut leaves = 0u64;
    if setup.fast() {
        for a in &parts {
            total.merge(&a.direct);
            leaves += a.leaves;
        }
        classes = total.terms();
    } else {
        let mut eps_max: HashMap<Word, f64> = HashMap::new();
        let mut members: Vec<(Q, Word, Word)> = Vec::new();
        for ((h, _), a) in jobs.iter().zip(&parts) {
            leaves += a.leaves;
            for (k, v) in &a.eps_max {
                let mut key = k.clone();
                key.extend_from_slice(&h.numer().to_le_bytes());
                key.extend_from_slice(&h.denom().to_le_bytes());
                let e = eps_max.entry(key).or_insert(f64::NEG_INFINITY);
                *e = e.max(*v);
            }
            for (d, e) in &a.members {
                members.push((*h, d.clone(), e.clone()));
            }
        }
        members.sort();
        members.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
        for (h, _, e) in &members {
            let mut key = e.clone();
            key.extend_from_slice(&h.numer().to_le_bytes());
            key.extend_from_slice(&h.denom().to_le_bytes());
            total.push(ValueInterval::point(eps_max[&key]));
        }
        classes = members.len() as u64;
    }
    if leaves > flow.base.budget {
        return Err(Error::Budget { needed: leaves as u128, budget: flow.base.budget });
    }
    let mut log_value = total.value();
    if let Some(e) = eps {
        // heights within ε·r_min shift the integral by at most twice that times ‖ψ‖
        let slack = 2.0 * e.value() * qf(rmin) * psi.max_abs();
        log_value = ValueInterval::new(log_value.lower, log_value.upper + slack);
    }
    Ok(FlowPartitionSum { t: t.to_string(), log_value, classes, heights: heights.len(), degenerate: false })
}


#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowPressureEstimate {
    /// `(t, log Λ(t))`.
    pub log_lambda: Vec<(String, ValueInterval)>,
    /// `(t, (1/t) log Λ(t))`.
    pub raw: Vec<(String, f64)>,
    /// `(t, (log Λ(t) - log Λ(t/2)) / (t/2))`, which cancels the height-grid factor.
    pub ratio: Vec<(String, f64)>,
}

/// Grid estimates of the flow pressure at each `t` in `ts` (each paired with `t/2`).
pub fn flow_pressure(
    flow: &SuspensionFlow,
    set: &FlowSegments,
    psi: &Potential,
    delta: DyadicScale,
    eps: Option<DyadicScale>,
    ts: &[Q],
) -> Result<FlowPressureEstimate> {
    let mut log_lambda = Vec::new();
    let mut raw = Vec::new();
    let mut ratio = Vec::new();
    for &t in ts {
        let full = flow_partition_sum(flow, set, psi, delta, eps, t)?;
        let half = flow_partition_sum(flow, set, psi, delta, eps, t / Q::from_integer(2))?;
        let (a, b) = (full.log_value.mid(), half.log_value.mid());
        log_lambda.push((t.to_string(), full.log_value));
        raw.push((t.to_string(), a / qf(t)));
        ratio.push((t.to_string(), (a - b) / qf(t / Q::from_integer(2))));
    }
    Ok(FlowPressureEstimate { log_lambda, raw, ratio })
}

/// `ψ·r - c·r` on the base.
fn induced(flow: &SuspensionFlow, psi: &Potential, c: f64) -> Result<Potential> {
    let d = flow.roof.depth.max(psi.depth());
    let (dr, dp) = (flow.roof.depth, psi.depth());
    Potential::from_fn(&flow.base, d, |w| {
        let r = qf(flow.roof.value(&w[..dr]));
        (psi.value(&w[..dp]) - c) * r
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootOracle {
    pub value: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
}

pub const ROOT_TOL: f64 = 1e-10;

/// The `c` with `P_base(ψ·r - c·r) = 0`, by bisection.
pub fn flow_pressure_root(flow: &SuspensionFlow, psi: &Potential) -> Result<RootOracle> {
    let p = |c: f64| -> Result<f64> { Ok(pressure_oracle(&flow.base, &induced(flow, psi, c)?)?.value.mid()) };
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let mut expand = 0;
    while p(lo)? < 0.0 {
        lo = 2.0 * lo - 1.0;
        expand += 1;
        if expand > 60 {
            return Err(Error::Bracketing("no lower bracket".into()));
        }
    }
    while p(hi)? > 0.0 {
        hi = 2.0 * hi + 1.0;
        expand += 1;
        if expand > 120 {
            return Err(Error::Bracketing("no upper bracket".into()));
        }
    }
    let bracket = (lo, hi);
    let mut iterations = 0;
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        if p(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    Ok(RootOracle { value: 0.5 * (lo + hi), iterations, bracket })
}

/// `H(T)`: entropy of the fibers visited during `[0, T)` from a point drawn
/// from the suspension of `μ`.
pub fn visit_entropy(flow: &SuspensionFlow, mu: &MarkovMeasure, horizon: Q) -> Result<f64> {
    let mean = mean_roof(flow, mu)?;
    let dr = flow.roof.depth as i64;
    fn rec(
        flow: &SuspensionFlow,
        mu: &MarkovMeasure,
        word: &mut Word,
        state: ScanState,
        times: &mut Vec<Q>,
        horizon: Q,
        mean: f64,
        dr: i64,
        out: &mut (f64, f64, u64),
    ) -> Result<()> {
        out.2 += 1;
        if out.2 > flow.base.budget {
            return Err(Error::Budget { needed: out.2 as u128, budget: flow.base.budget });
        }
        let q = word.len() as i64 - dr;
        let mut pushed = false;
        if q >= 0 && times.len() as i64 == q + 1 {
            let r = flow.roof.value(&word[q as usize..(q + dr) as usize]);
            times.push(times[q as usize] + r);
            pushed = true;
            let r0 = times[1];
            // heights h in [0, r0) whose end h + T falls in fiber q
            let a = (times[q as usize] - horizon).max(Q::zero());
            let b = (times[q as usize + 1] - horizon).min(r0);
            if b > a {
                let m = mu.mass(word).unwrap_or(0.0);
                let p = m * qf(b - a) / mean;
                if p > 0.0 {
                    out.0 -= p * p.ln();
                    out.1 += p;
                }
            }
            if times[q as usize + 1] - horizon >= r0 {
                times.pop();
                return Ok(());
            }
        }
        for a in 0..flow.base.k() as u8 {
            if let Some(s) = flow.base.step(state, a) {
                word.push(a);
                rec(flow, mu, word, s, times, horizon, mean, dr, out)?;
                word.pop();
            }
        }
        if pushed {
            times.pop();
        }
        Ok(())
    }
    let mut out = (0.0, 0.0, 0u64);
    rec(flow, mu, &mut Vec::new(), flow.base.start_state(), &mut vec![Q::zero()], horizon, mean, dr, &mut out)?;
    if (out.1 - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("visit distribution has mass {}", out.1)));
    }
    Ok(out.0)
}

/// `∫ r dμ`.
pub fn mean_roof(flow: &SuspensionFlow, mu: &MarkovMeasure) -> Result<f64> {
    Ok(flow
        .base
        .enumerate_words(flow.roof.depth)?
        .iter()
        .map(|w| mu.mass(w).unwrap_or(0.0) * qf(flow.roof.value(w)))
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbramovReport {
    pub base_entropy: f64,
    pub mean_roof: f64,
    /// `h_μ(σ) / ∫ r dμ`.
    pub flow_entropy: f64,
    pub root: f64,
    pub entropy_le_root: bool,
    /// `(t, H(T0 + t) - H(T0))`.
    pub estimates: Vec<(f64, f64)>,
    pub h1: f64,
    pub slope: f64,
    /// `|slope - h1| <= 3% h1`.
    pub linear: bool,
}

pub fn abramov_check(flow: &SuspensionFlow, mu: &MarkovMeasure, ts: &[Q], t0: Q) -> Result<AbramovReport> {
    let base_entropy = mu.entropy();
    let mean = mean_roof(flow, mu)?;
    let flow_entropy = base_entropy / mean;
    let root = flow_pressure_root(flow, &Potential::zero(&flow.base))?.value;
    let h0 = visit_entropy(flow, mu, t0)?;
    let est = |t: Q| -> Result<f64> { Ok(visit_entropy(flow, mu, t0 + t)? - h0) };
    let h1 = est(Q::from_integer(1))?;
    let estimates = ts.iter().map(|&t| Ok((qf(t), est(t)?))).collect::<Result<Vec<_>>>()?;
    let n = estimates.len() as f64;
    let (sx, sy) = estimates.iter().fold((0.0, 0.0), |a, e| (a.0 + e.0, a.1 + e.1));
    let (mx, my) = (sx / n, sy / n);
    let sxx: f64 = estimates.iter().map(|e| (e.0 - mx).powi(2)).sum();
    let sxy: f64 = estimates.iter().map(|e| (e.0 - mx) * (e.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { my / mx };
    Ok(AbramovReport {
        base_entropy,
        mean_roof: mean,
        flow_entropy,
        root,
        entropy_le_root: flow_entropy <= root + 1e-9,
        estimates,
        h1,
        slope,
        linear: (slope - h1).abs() <= 0.03 * h1.abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BernoulliOptimum {
    pub p: f64,
    pub flow_entropy: f64,
    pub root: f64,
    pub gap: f64,
}

/// Maximize `H(p) / ∫ r dBernoulli(1-p, p)` over `p` for a two-symbol full shift base.
pub fn optimize_bernoulli(flow: &SuspensionFlow) -> Result<BernoulliOptimum> {
    if flow.base.k() != 2 || !matches!(flow.base.rule, crate::symbolic::AdmissibilityRule::Full) {
        return Err(Error::Invalid("Bernoulli optimization needs the full 2-shift as base".into()));
    }
    let f = |p: f64| -> Result<f64> {
        let mu = MarkovMeasure::bernoulli(&[1.0 - p, p])?;
        Ok(mu.entropy() / mean_roof(flow, &mu)?)
    };
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (1e-9, 1.0 - 1e-9);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > 1e-12 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    let p = 0.5 * (a + b);
    let flow_entropy = f(p)?;
    let root = flow_pressure_root(flow, &Potential::zero(&flow.base))?.value;
    Ok(BernoulliOptimum { p, flow_entropy, root, gap: root - flow_entropy })
}

/// Variation of the fiber-constant potential on the flow space at scale `ε`:
/// the base variation plus the jump `|ψ(x) - ψ(σx)|` across the roof.
pub fn flow_variation(flow: &SuspensionFlow, psi: &Potential, eps: DyadicScale) -> Result<ValueInterval> {
    let base = psi.variation(&flow.base, eps)?;
    let d = psi.depth();
    let jump = flow
        .base
        .enumerate_words(d + 1)?
        .iter()
        .map(|w| (psi.value(&w[..d]) - psi.value(&w[1..])).abs())
        .fold(0.0, f64::max);
    Ok(ValueInterval::new(base.lower + jump, base.upper + jump))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowCertificate {
    pub delta: DyadicScale,
    pub eps: DyadicScale,
    pub p_phi: f64,
    pub p_prefix_suffix: PressureEstimate,
    pub var_eps: ValueInterval,
    /// `P(φ) - P([P] ∪ [S], φ, δ) - Var(φ, ε)`.
    pub margin: ValueInterval,
    pub verdict: Verdict,
}

/// Flow analogue of the map-side certificate: `P([P] ∪ [S], φ, δ) + Var(φ, ε) < P(φ)`.
pub fn flow_hypothesis_report(
    flow: &SuspensionFlow,
    psi: &Potential,
    rule: &Arc<DecompositionRule>,
    delta: DyadicScale,
    eps: DyadicScale,
    n_max: usize,
) -> Result<FlowCertificate> {
    if n_max < 4 {
        return Err(Error::Invalid("n_max must be at least 4".into()));
    }
    let set = FlowSegments::Bracket(FlowCollection::prefix_suffix(rule));
    let sums = (1..=n_max)
        .map(|n| flow_partition_sum(flow, &set, psi, delta, None, Q::from_integer(n as i64)).map(|s| (n, s.log_value)))
        .collect::<Result<Vec<_>>>()?;
    let est = estimate_from_sums(sums);
    let p_phi = flow_pressure_root(flow, psi)?.value;
    let var_eps = flow_variation(flow, psi, eps)?;
    let (lo, hi) = if est.eventually_empty { (0.0, 0.0) } else { est.ratio_range() };
    let ps = ValueInterval::new(lo.min(est.value), hi.max(est.value));
    let margin = ValueInterval::point(p_phi).inflate(ROOT_TOL) - ps - var_eps;
    let verdict = Verdict::positive(&margin);
    Ok(FlowCertificate { delta, eps, p_phi, p_prefix_suffix: est, var_eps, margin, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Q {
        Q::new(n, d)
    }

    fn roof12() -> SuspensionFlow {
        let base = ShiftSystem::full(2).unwrap();
        SuspensionFlow::new(base, RoofFunction::symbols(&[q(1, 1), q(2, 1)]).unwrap()).unwrap()
    }

    fn golden() -> f64 {
        ((1.0 + 5f64.sqrt()) / 2.0).ln()
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(parse_rational("3/2").unwrap(), q(3, 2));
        assert_eq!(parse_rational("1.25").unwrap(), q(5, 4));
        assert_eq!(parse_rational("-0.5").unwrap(), q(-1, 2));
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn flow_examples() {
        let f = roof12();
        let x = Point::periodic(&[1, 0]);
        let p = f.point(x.clone(), q(3, 2)).unwrap();
        let y = f.flow(&p, q(1, 1)).unwrap();
        assert_eq!(y.base, x.shift(1));
        assert_eq!(y.height, q(1, 2));
        assert_eq!(f.flow(&p, Q::zero()).unwrap(), p);
        let unit = SuspensionFlow::new(ShiftSystem::full(2).unwrap(), RoofFunction::constant(2, q(1, 1)).unwrap()).unwrap();
        let p = unit.point(x.clone(), q(1, 3)).unwrap();
        let y = unit.flow(&p, q(1, 1)).unwrap();
        assert_eq!((y.base, y.height), (x.shift(1), q(1, 3)));
        let short = roof12().with_horizon(q(5, 1));
        assert!(matches!(short.flow(&p, q(6, 1)), Err(Error::Horizon { .. })));
    }

    #[test]
    fn group_law() {
        let f = roof12();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let w = random_word(&f.base, 9, &mut rng).unwrap();
            let x = Point::periodic(&w);
            let r = f.roof.at(&x).unwrap();
            let p = f.point(x, r * q(rng.gen_range(0..10), 10)).unwrap();
            let a = q(rng.gen_range(-40..40), rng.gen_range(1..7));
            let b = q(rng.gen_range(-40..40), rng.gen_range(1..7));
            let lhs = f.flow(&f.flow(&p, a).unwrap(), b).unwrap();
            let rhs = f.flow(&p, a + b).unwrap();
            assert_eq!(lhs.height, rhs.height);
            assert_eq!(lhs.base.origin, rhs.base.origin);
        }
    }

    #[test]
    fn flow_metric_examples() {
        let unit = SuspensionFlow::new(ShiftSystem::full(2).unwrap(), RoofFunction::constant(2, q(1, 1)).unwrap()).unwrap();
        let x = Point::periodic(&[0, 1, 1]);
        let p = unit.point(x.clone(), q(1, 4)).unwrap();
        let d = flow_d_t(&unit, &p, &p, q(3, 1), q(1, 16)).unwrap();
        assert_eq!(d.lower, 0.0);
        let p2 = unit.point(x.clone(), q(1, 4) + q(1, 32)).unwrap();
        let d = flow_d_t(&unit, &p, &p2, q(3, 1), q(1, 16)).unwrap();
        assert!((d.lower - 1.0 / 32.0).abs() < 1e-15);
        let y = Point::periodic(&[1, 1, 1]);
        let p3 = unit.point(y, q(1, 4)).unwrap();
        assert_eq!(unit.flow_metric(&p, &p3).unwrap(), 1.0);
    }

    #[test]
    fn ball_identity() {
        let f = roof12();
        let r = time_t_ball_check(&f, 0.25, 4, q(3, 2), 200, 1).unwrap();
        assert_eq!(r.disagreements, 0);
        assert!(r.flow_members > 0 && r.flow_members < 200);
        let unit = SuspensionFlow::new(ShiftSystem::golden_mean(), RoofFunction::constant(2, q(1, 1)).unwrap()).unwrap();
        let r = time_t_ball_check(&unit, 0.25, 1, q(1, 1), 50, 2).unwrap();
        assert_eq!(r.disagreements, 0);
    }

    #[test]
    fn root_oracle_examples() {
        let f = roof12();
        let zero = Potential::zero(&f.base);
        assert!((flow_pressure_root(&f, &zero).unwrap().value - golden()).abs() < 1e-9);
        let unit = SuspensionFlow::new(ShiftSystem::full(2).unwrap(), RoofFunction::constant(2, q(1, 1)).unwrap()).unwrap();
        assert!((flow_pressure_root(&unit, &zero).unwrap().value - 2f64.ln()).abs() < 1e-9);
        let g = SuspensionFlow::new(ShiftSystem::golden_mean(), RoofFunction::constant(2, q(1, 1)).unwrap()).unwrap();
        assert!((flow_pressure_root(&g, &Potential::zero(&g.base)).unwrap().value - golden()).abs() < 1e-9);
    }

    #[test]
    fn unit_roof_sum_matches_base() {
        let unit = SuspensionFlow::new(ShiftSystem::full(2).unwrap(), RoofFunction::constant(2, q(1, 1)).unwrap()).unwrap();
        let set = FlowSegments::Segments(FlowCollection::All);
        let zero = Potential::zero(&unit.base);
        let half = DyadicScale::new(1);
        let a = flow_partition_sum(&unit, &set, &zero, half, None, q(6, 1)).unwrap();
        let b = flow_partition_sum(&unit, &set, &zero, half, None, q(7, 1)).unwrap();
        assert!((b.log_value.mid() - a.log_value.mid() - 2f64.ln()).abs() < 1e-12);
        let z = flow_partition_sum(&unit, &set, &zero, half, None, Q::zero()).unwrap();
        assert!(z.degenerate);
    }

    #[test]
    fn grid_pressure_approaches_root() {
        let f = roof12();
        let zero = Potential::zero(&f.base);
        let est = flow_pressure(
            &f,
            &FlowSegments::Segments(FlowCollection::All),
            &zero,
            DyadicScale::new(2),
            None,
            &[q(10, 1), q(16, 1)],
        )
        .unwrap();
        let errs: Vec<f64> = est.ratio.iter().map(|r| (r.1 - golden()).abs()).collect();
        assert!(errs[1] < 0.1, "{errs:?}");
    }

    #[test]
    fn abramov_examples() {
        let unit = SuspensionFlow::new(ShiftSystem::full(2).unwrap(), RoofFunction::constant(2, q(1, 1)).unwrap()).unwrap();
        let mu = MarkovMeasure::bernoulli(&[0.5, 0.5]).unwrap();
        let r = abramov_check(&unit, &mu, &[q(1, 1), q(2, 1), q(3, 1)], q(4, 1)).unwrap();
        assert!((r.flow_entropy - 2f64.ln()).abs() < 1e-12);
        assert!(r.linear);
        let f = roof12();
        let r = abramov_check(&f, &mu, &[q(1, 1), q(2, 1), q(3, 1), q(4, 1)], q(8, 1)).unwrap();
        assert!((r.flow_entropy - 0.462098).abs() < 1e-6);
        assert!(r.entropy_le_root);
        assert!(r.linear, "{r:?}");
        let opt = optimize_bernoulli(&f).unwrap();
        assert!(opt.gap.abs() < 1e-4);
        assert!((opt.p - 0.381966).abs() < 1e-3);
    }

    #[test]
    fn bracket_examples() {
        let unit = SuspensionFlow::new(ShiftSystem::full(2).unwrap(), RoofFunction::constant(2, q(1, 1)).unwrap()).unwrap();
        let x = unit.point(Point::periodic(&[0, 1]), Q::zero()).unwrap();
        let all = BracketCollection::new(FlowCollection::All);
        let none = BracketCollection::new(FlowCollection::Empty);
        let dur = BracketCollection::new(FlowCollection::Duration { lo: q(2, 1), hi: q(3, 1) });
        for n in 1..8 {
            assert!(all.contains(&unit, &x, n).unwrap());
            assert!(!none.contains(&unit, &x, n).unwrap());
            assert_eq!(dur.contains(&unit, &x, n).unwrap(), n <= 3, "n = {n}");
        }
        // base word of length at most one
        let short = BracketCollection::new(FlowCollection::Base(SegmentCollection::predicate("len<=1", |w| w.len() <= 1)));
        let found: Vec<usize> = (1..6).filter(|&n| short.contains(&unit, &x, n).unwrap()).collect();
        assert_eq!(found, vec![1]);
    }

    #[test]
    fn certificate_examples() {
        let unit = SuspensionFlow::new(ShiftSystem::full(2).unwrap(), RoofFunction::constant(2, q(1, 1)).unwrap()).unwrap();
        let zero = Potential::zero(&unit.base);
        let rule = Arc::new(DecompositionRule::Trivial);
        let c = flow_hypothesis_report(&unit, &zero, &rule, DyadicScale::new(2), DyadicScale::new(1), 6).unwrap();
        assert!(c.p_prefix_suffix.eventually_empty);
        assert_eq!(c.verdict, Verdict::Pass);

        let beta = ShiftSystem::golden_beta(24);
        let f = SuspensionFlow::new(beta.clone(), RoofFunction::constant(2, q(1, 1)).unwrap()).unwrap();
        let rule = Arc::new(DecompositionRule::beta_suffix(&beta).unwrap());
        let zero = Potential::zero(&beta);
        let c = flow_hypothesis_report(&f, &zero, &rule, DyadicScale::new(2), DyadicScale::new(1), 8).unwrap();
        assert_eq!(c.verdict, Verdict::Pass, "{:?}", c.margin);
        let loud = Potential::symbol_weights(&beta, &[0.0, 3.0]).unwrap();
        let c = flow_hypothesis_report(&f, &loud, &rule, DyadicScale::new(2), DyadicScale::new(1), 6).unwrap();
        assert_eq!(c.verdict, Verdict::Fail);
    }
}
