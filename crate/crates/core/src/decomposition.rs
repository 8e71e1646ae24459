//! Orbit-segment decompositions `(P, G, S)`, good cores, gluing and the
//! hypothesis certificate for uniqueness of equilibrium states.
//!
//! Segments are words `x_0 ... x_{n-1}`. Whenever a scale `δ = 2^{-m}` is in
//! play a segment carries its ball window `[-(m-1), n-1+(m-1)]`, and gluing
//! copies that whole window into the shadowing orbit.

use crate::equilibrium::pressure_oracle;
use crate::error::{Error, Result};
use crate::interval::ValueInterval;
use crate::potentials::Potential;
use crate::pressure::{partition_sum, pressure, Part, SegmentClassifier, SegmentCollection, Verdict};
use crate::symbolic::{word_string, AdmissibilityRule, DyadicScale, Point, ShiftSystem, Window, Word};
use serde::Serialize;
use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

#[derive(Clone, PartialEq)]
pub enum DecompositionRule {
    /// `p = s = 0`.
    Trivial,
    /// `p = 0` and `s` the longest suffix equal to a prefix of `d*`.
    BetaSuffix { expansion: Word },
    /// Explicit splits for the words of the domain.
    UserTable {
        entries: HashMap<Word, (usize, usize, usize)>,
        prefix: HashSet<Word>,
        good: HashSet<Word>,
        suffix: HashSet<Word>,
    },
}

impl fmt::Debug for DecompositionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl DecompositionRule {
    /// The β-suffix rule for a β-shift, using its own expansion.
    pub fn beta_suffix(sys: &ShiftSystem) -> Result<Self> {
        match &sys.rule {
            AdmissibilityRule::Beta { expansion } => Ok(Self::BetaSuffix { expansion: expansion.clone() }),
            _ => Err(Error::InvalidSystem("the β-suffix rule needs a β-shift".into())),
        }
    }

    /// A table rule; each entry must split consistently with the three word sets.
    pub fn user_table(
        entries: HashMap<Word, (usize, usize, usize)>,
        prefix: HashSet<Word>,
        good: HashSet<Word>,
        suffix: HashSet<Word>,
    ) -> Result<Self> {
        let rule = Self::UserTable { entries, prefix, good, suffix };
        if let Self::UserTable { entries, .. } = &rule {
            for (w, &(p, g, s)) in entries {
                if p + g + s != w.len() {
                    return Err(Error::Invalid(format!("split of {} does not sum to its length", word_string(w))));
                }
                let ev = rule.evidence(w, (p, g, s));
                if !(ev.prefix_ok && ev.good_ok && ev.suffix_ok) {
                    return Err(Error::Invalid(format!("split of {} violates the P/G/S sets", word_string(w))));
                }
            }
        }
        Ok(rule)
    }

    fn tied_suffix(expansion: &[u8], w: &[u8]) -> usize {
        (0..=w.len().min(expansion.len())).rev().find(|&l| w[w.len() - l..] == expansion[..l]).unwrap_or(0)
    }

    fn evidence(&self, w: &[u8], (p, g, s): (usize, usize, usize)) -> Decomposition {
        Decomposition {
            p,
            g,
            s,
            prefix_ok: self.in_prefix(&w[..p]),
            good_ok: self.in_good(&w[p..p + g]),
            suffix_ok: self.in_suffix(&w[p + g..]),
        }
    }

    pub fn collection(self: &Arc<Self>, part: Part) -> SegmentCollection {
        SegmentCollection::rule(self.clone() as Arc<dyn SegmentClassifier>, part)
    }
}

impl SegmentClassifier for DecompositionRule {
    fn split(&self, w: &[u8]) -> Option<(usize, usize, usize)> {
        let n = w.len();
        match self {
            Self::Trivial => Some((0, n, 0)),
            Self::BetaSuffix { expansion } => {
                let s = Self::tied_suffix(expansion, w);
                Some((0, n - s, s))
            }
            Self::UserTable { entries, .. } => {
                if n == 0 {
                    Some((0, 0, 0))
                } else {
                    entries.get(w).copied()
                }
            }
        }
    }

    fn in_prefix(&self, w: &[u8]) -> bool {
        match self {
            Self::UserTable { prefix, .. } => w.is_empty() || prefix.contains(w),
            _ => w.is_empty(),
        }
    }

    fn in_good(&self, w: &[u8]) -> bool {
        match self {
            Self::Trivial => true,
            Self::BetaSuffix { expansion } => Self::tied_suffix(expansion, w) == 0,
            Self::UserTable { good, .. } => w.is_empty() || good.contains(w),
        }
    }

    fn in_suffix(&self, w: &[u8]) -> bool {
        match self {
            Self::Trivial => w.is_empty(),
            Self::BetaSuffix { expansion } => w.len() <= expansion.len() && w == &expansion[..w.len()],
            Self::UserTable { suffix, .. } => w.is_empty() || suffix.contains(w),
        }
    }

    fn name(&self) -> String {
        match self {
            Self::Trivial => "trivial".into(),
            Self::BetaSuffix { .. } => "beta-suffix".into(),
            Self::UserTable { entries, .. } => format!("table[{}]", entries.len()),
        }
    }
}

/// `(p, g, s)` with the three membership conditions as evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Decomposition {
    pub p: usize,
    pub g: usize,
    pub s: usize,
    pub prefix_ok: bool,
    pub good_ok: bool,
    pub suffix_ok: bool,
}

impl Decomposition {
    pub fn is_valid(&self) -> bool {
        self.prefix_ok && self.good_ok && self.suffix_ok
    }
}

pub fn decompose(rule: &DecompositionRule, x: &Point, n: usize) -> Result<Decomposition> {
    let w = x.segment(n)?;
    decompose_word(rule, &w)
}

pub fn decompose_word(rule: &DecompositionRule, w: &[u8]) -> Result<Decomposition> {
    let split = rule.split(w).ok_or_else(|| Error::Domain(word_string(w)))?;
    Ok(rule.evidence(w, split))
}

/// Connectors used to glue segments.
#[derive(Debug, Clone, PartialEq)]
pub struct GluingSpec {
    /// Largest connector length.
    pub tau: usize,
    /// Shortest connector for each symbol pair, for SFTs and full shifts.
    pub table: Option<Vec<Vec<Option<Word>>>>,
    /// Cap on glued tuples per check; larger families are strided.
    pub max_tuples: u64,
}

pub const DEFAULT_MAX_TUPLES: u64 = 1 << 18;

impl GluingSpec {
    /// Breadth-first connector table for SFTs and full shifts; a bounded
    /// search with connectors up to `max_len` otherwise.
    pub fn new(sys: &ShiftSystem, max_len: usize) -> Self {
        let k = sys.k();
        let matrix: Vec<Vec<u8>> = match &sys.rule {
            AdmissibilityRule::Full => vec![vec![1; k]; k],
            AdmissibilityRule::Sft { matrix } => matrix.clone(),
            _ => return Self { tau: max_len, table: None, max_tuples: DEFAULT_MAX_TUPLES },
        };
        let mut table = vec![vec![None; k]; k];
        let mut tau = 0;
        for a in 0..k {
            // BFS over paths a -> ... -> b; prev[b] records the predecessor
            let mut prev: Vec<Option<usize>> = vec![None; k];
            let mut dist = vec![usize::MAX; k];
            let mut queue = VecDeque::new();
            for b in 0..k {
                if matrix[a][b] == 1 {
                    dist[b] = 0;
                    queue.push_back(b);
                }
            }
            while let Some(b) = queue.pop_front() {
                for c in 0..k {
                    if matrix[b][c] == 1 && dist[c] == usize::MAX {
                        dist[c] = dist[b] + 1;
                        prev[c] = Some(b);
                        queue.push_back(c);
                    }
                }
            }
            for b in 0..k {
                if dist[b] != usize::MAX {
                    let mut conn = Vec::new();
                    let mut cur = b;
                    while let Some(p) = prev[cur] {
                        conn.push(p as u8);
                        cur = p;
                    }
                    conn.reverse();
                    tau = tau.max(conn.len());
                    table[a][b] = Some(conn);
                }
            }
        }
        Self { tau, table: Some(table), max_tuples: DEFAULT_MAX_TUPLES }
    }

    /// Shortest connector `c` with `left · c · right` admissible.
    pub fn connector(&self, sys: &ShiftSystem, left: &[u8], right: &[u8]) -> Result<Word> {
        if left.is_empty() || right.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(t) = &self.table {
            let (a, b) = (*left.last().unwrap() as usize, right[0] as usize);
            return t[a][b].clone().ok_or_else(|| Error::NoConnector {
                from: vec![a as u8],
                to: vec![b as u8],
                max_len: self.tau,
            });
        }
        let ctx_len = sys.memory().unwrap_or_else(|| sys.max_word_len().unwrap_or(64));
        let ctx = &left[left.len().saturating_sub(ctx_len)..];
        let nxt = &right[..right.len().min(ctx_len.max(1))];
        for len in 0..=self.tau {
            let mut found = None;
            let total = sys.k().pow(len as u32);
            for code in 0..total {
                let c = crate::potentials::decode(code, sys.k(), len);
                let cand: Word = [ctx, &c, nxt].concat();
                if sys.is_locally_admissible(&cand) {
                    found = Some(c);
                    break;
                }
            }
            if let Some(c) = found {
                return Ok(c);
            }
        }
        Err(Error::NoConnector { from: ctx.to_vec(), to: nxt.to_vec(), max_len: self.tau })
    }
}

/// An orbit segment of length `n` carried by its window word at radius `r`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct GlueSegment {
    pub window_word: Word,
    pub n: usize,
    pub r: usize,
}

impl GlueSegment {
    /// A segment at scale 1/2, where the window is the segment itself.
    pub fn word(w: &[u8]) -> Self {
        Self { window_word: w.to_vec(), n: w.len(), r: 0 }
    }

    pub fn from_point(x: &Point, n: usize, delta: DyadicScale) -> Result<Self> {
        let r = delta.m.saturating_sub(1) as usize;
        let w = x.read(&Window::new(-(r as i64), (n + r) as i64 - 1))?;
        Ok(Self { window_word: w, n, r })
    }

    pub fn segment(&self) -> &[u8] {
        &self.window_word[self.r..self.r + self.n]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlueResult {
    pub y: Point,
    /// Coordinate in `y` where segment `j` starts.
    pub starts: Vec<i64>,
    /// Gap `τ_j` between the end of segment `j` and the start of segment `j+1`.
    pub gaps: Vec<usize>,
}

/// Build `y` shadowing each segment at scale `δ`, then verify the shadowing.
pub fn glue(sys: &ShiftSystem, segments: &[GlueSegment], spec: &GluingSpec, delta: DyadicScale) -> Result<GlueResult> {
    let r = delta.m.saturating_sub(1) as usize;
    if segments.is_empty() {
        let y = sys.complete(&[])?;
        return Ok(GlueResult { y, starts: Vec::new(), gaps: Vec::new() });
    }
    let mut body: Word = Vec::new();
    let mut starts = Vec::new();
    let mut gaps = Vec::new();
    for (j, seg) in segments.iter().enumerate() {
        if seg.r < r || seg.window_word.len() != seg.n + 2 * seg.r {
            return Err(Error::Invalid(format!("segment {j} lacks the window for scale {delta}")));
        }
        if !sys.is_locally_admissible(&seg.window_word) {
            return Err(Error::InvalidWord(word_string(&seg.window_word)));
        }
        // only the radius-r part of the window is copied
        let part = &seg.window_word[seg.r - r..seg.r + seg.n + r];
        if j > 0 {
            let c = spec.connector(sys, &body, part)?;
            body.extend_from_slice(&c);
            gaps.push(2 * r + c.len());
        }
        starts.push((body.len() + r) as i64);
        body.extend_from_slice(part);
    }
    let closing = spec.connector(sys, &body, &body).ok();
    let y = match closing {
        Some(c) => {
            let mut block = body.clone();
            block.extend_from_slice(&c);
            let p = Point::new(block.clone(), block, Vec::new(), 0);
            let p = Point { right: p.left.clone(), ..p };
            if sys.validate_point(&p).is_ok() {
                p
            } else {
                sys.complete(&body)?
            }
        }
        None => sys.complete(&body)?,
    };
    for (j, seg) in segments.iter().enumerate() {
        let w = Window::new(starts[j] - r as i64, starts[j] + (seg.n + r) as i64 - 1);
        if y.read(&w)?[..] != seg.window_word[seg.r - r..seg.r + seg.n + r] {
            return Err(Error::Invalid(format!("glued orbit misses segment {j}")));
        }
    }
    Ok(GlueResult { y, starts, gaps })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecificationReport {
    pub delta: DyadicScale,
    pub cases: u64,
    pub max_gap: usize,
    pub tau: usize,
    /// Segments available and segments actually used in tuples.
    pub segments: usize,
    pub used: usize,
    /// First tuple that could not be glued within `τ`, with the reason.
    pub failure: Option<(Vec<String>, String)>,
    pub passed: bool,
}

/// Segments of length `n_min..=n_max` in `c`, as windows at radius `r`,
/// with the total number of members. At most about `limit` windows of each
/// length are kept, taking every `s`-th admissible window in lexicographic order.
fn collection_segments(
    sys: &ShiftSystem,
    c: &SegmentCollection,
    n_min: usize,
    n_max: usize,
    r: usize,
    limit: usize,
) -> Result<(Vec<GlueSegment>, usize)> {
    let mut out = Vec::new();
    let mut total = 0usize;
    for n in n_min.max(1)..=n_max {
        let len = n + 2 * r;
        sys.check_budget(len)?;
        let count = sys.count_words(len);
        let stride = count.div_ceil(limit.max(1) as u128).max(1);
        let mut seen = 0u128;
        sys.extend_dfs(&[], sys.start_state(), len, &mut |w| {
            if c.contains(&w[r..r + n]) {
                total += 1;
                if seen % stride == 0 {
                    out.push(GlueSegment { window_word: w.to_vec(), n, r });
                }
            }
            seen += 1;
        });
    }
    Ok((out, total))
}

fn slot_limit(spec: &GluingSpec, k_max: usize) -> usize {
    (spec.max_tuples as f64).powf(1.0 / k_max.max(1) as f64).floor().max(1.0) as usize
}

fn glue_tuples(
    sys: &ShiftSystem,
    segs: &[GlueSegment],
    spec: &GluingSpec,
    delta: DyadicScale,
    k_max: usize,
    tau_bound: usize,
    members: usize,
    check: &dyn Fn(&[GlueSegment], &GlueResult) -> bool,
) -> SpecificationReport {
    let per_slot = slot_limit(spec, k_max);
    let strided: Vec<GlueSegment>;
    let segs = if segs.len() > per_slot {
        let step = segs.len().div_ceil(per_slot);
        strided = segs.iter().step_by(step).cloned().collect();
        &strided[..]
    } else {
        segs
    };
    let mut report = SpecificationReport {
        delta,
        cases: 0,
        max_gap: 0,
        tau: tau_bound,
        segments: members,
        used: segs.len(),
        failure: None,
        passed: true,
    };
    let mut idx = vec![0usize];
    'outer: for k in 1..=k_max {
        idx.resize(k, 0);
        idx.iter_mut().for_each(|i| *i = 0);
        if segs.is_empty() {
            break;
        }
        loop {
            let tuple: Vec<GlueSegment> = idx.iter().map(|&i| segs[i].clone()).collect();
            report.cases += 1;
            let names = || tuple.iter().map(|s| word_string(&s.window_word)).collect::<Vec<_>>();
            match glue(sys, &tuple, spec, delta) {
                Ok(res) => {
                    let g = res.gaps.iter().copied().max().unwrap_or(0);
                    report.max_gap = report.max_gap.max(g);
                    if g > tau_bound || !check(&tuple, &res) {
                        report.failure = Some((names(), format!("gap {g} or shadowing check failed")));
                        report.passed = false;
                        break 'outer;
                    }
                }
                Err(e) => {
                    report.failure = Some((names(), e.to_string()));
                    report.passed = false;
                    break 'outer;
                }
            }
            // odometer over tuples
            let mut pos = k;
            loop {
                if pos == 0 {
                    continue 'outer;
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < segs.len() {
                    break;
                }
                idx[pos] = 0;
            }
        }
    }
    report
}

/// Glue every tuple of at most `k_max` segments of length `<= n_max` from `c`.
pub fn specification_check(
    sys: &ShiftSystem,
    c: &SegmentCollection,
    delta: DyadicScale,
    spec: &GluingSpec,
    k_max: usize,
    n_max: usize,
) -> Result<SpecificationReport> {
    let r = delta.m.saturating_sub(1) as usize;
    let (segs, members) = collection_segments(sys, c, 1, n_max, r, 4 * slot_limit(spec, k_max))?;
    let tau_bound = spec.tau + 2 * r;
    Ok(glue_tuples(sys, &segs, spec, delta, k_max, tau_bound, members, &|_, _| true))
}

/// Specification of `G^M` at scale `δ` for `n >= 2M + n0`, obtained by gluing
/// the good cores at the finer scale `2^{-(m_δ + M)}` and checking that the
/// glued orbit shadows the full segments at scale `δ`.
pub fn good_core_specification_check(
    sys: &ShiftSystem,
    rule: &Arc<DecompositionRule>,
    m: usize,
    delta: DyadicScale,
    spec: &GluingSpec,
    n0: usize,
    k_max: usize,
    n_extra: usize,
) -> Result<SpecificationReport> {
    let fine = delta.finer(m as u32);
    let r_fine = fine.m.saturating_sub(1) as usize;
    let r = delta.m.saturating_sub(1) as usize;
    let n_min = 2 * m + n0;
    let gm = rule.collection(Part::GoodCore(m));
    let (full, members) = collection_segments(sys, &gm, n_min, n_min + n_extra, r_fine, 4 * slot_limit(spec, k_max))?;
    // each G^M segment is replaced by its core, carried at the fine radius
    let mut cores = Vec::with_capacity(full.len());
    let mut originals = HashMap::new();
    for seg in &full {
        let d = decompose_word(rule, seg.segment())?;
        let core = GlueSegment {
            window_word: seg.window_word[d.p..d.p + d.g + 2 * r_fine].to_vec(),
            n: d.g,
            r: r_fine,
        };
        originals.insert(cores.len(), (seg.clone(), d));
        cores.push(core);
    }
    let lookup: HashMap<GlueSegment, Vec<usize>> = cores.iter().enumerate().fold(HashMap::new(), |mut acc, (i, c)| {
        acc.entry(c.clone()).or_default().push(i);
        acc
    });
    let tau_bound = spec.tau + 2 * r_fine + 2 * m;
    let check = |tuple: &[GlueSegment], res: &GlueResult| {
        tuple.iter().zip(&res.starts).all(|(core, &start)| {
            lookup[core].iter().any(|&i| {
                let (seg, d) = &originals[&i];
                let w = Window::new(start - d.p as i64 - r as i64, start - d.p as i64 + (seg.n + r) as i64 - 1);
                match res.y.read(&w) {
                    Ok(got) => got[..] == seg.window_word[r_fine - r..r_fine + seg.n + r],
                    Err(_) => false,
                }
            })
        })
    };
    let mut report = glue_tuples(sys, &cores, spec, fine, k_max, tau_bound, members, &check);
    report.delta = delta;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BowenReport {
    pub eps: DyadicScale,
    /// `(n, sup |Φ_0(x,n) - Φ_0(y,n)|)` over `x ∈ C_n`, `y` in the closed Bowen ball.
    pub per_n: Vec<(usize, f64)>,
    pub k: ValueInterval,
    /// `2 Σ_j Var(φ, 2^{-j} ε)`, the bound valid for every `n`.
    pub analytic: ValueInterval,
    pub var_eps: ValueInterval,
    pub within_analytic: bool,
}

impl BowenReport {
    /// `K(M) = K + 2M Var(φ, ε)`.
    pub fn k_of_m(&self, m: usize) -> ValueInterval {
        self.k + self.var_eps.scale(2.0 * m as f64)
    }
}

/// Largest distortion of Birkhoff sums across ε Bowen balls centred in `c`.
pub fn bowen_distortion(
    sys: &ShiftSystem,
    phi: &Potential,
    c: &SegmentCollection,
    eps: DyadicScale,
    n_max: usize,
) -> Result<BowenReport> {
    if eps.m == 0 {
        return Err(Error::DegenerateScale(0));
    }
    let k = sys.k() as u64;
    let mut per_n = Vec::new();
    let mut worst = 0.0f64;
    for n in 1..=n_max {
        let ball = crate::symbolic::ball_window(n, eps)?;
        let read = Window::new(0, (n + phi.depth().max(1)) as i64 - 2);
        let v = ball.hull(&read);
        let (b_off, r_off, s_off) = (ball.offset_in(&v), read.offset_in(&v), Window::new(0, 0).offset_in(&v));
        // per ball class: (min all, max all, min in C, max in C)
        let groups = sys.fold_words(
            v.len(),
            HashMap::new,
            |acc: &mut HashMap<u64, [f64; 4]>, w: &[u8]| {
                let key = w[b_off..b_off + ball.len()].iter().fold(0u64, |c, &a| c * k + a as u64);
                let s = phi.sum_on(w, r_off, n);
                let inside = c.contains(&w[s_off..s_off + n]);
                let e = acc.entry(key).or_insert([f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY]);
                e[0] = e[0].min(s);
                e[1] = e[1].max(s);
                if inside {
                    e[2] = e[2].min(s);
                    e[3] = e[3].max(s);
                }
            },
            |mut a, b| {
                for (key, x) in b {
                    let e = a.entry(key).or_insert([f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY]);
                    e[0] = e[0].min(x[0]);
                    e[1] = e[1].max(x[1]);
                    e[2] = e[2].min(x[2]);
                    e[3] = e[3].max(x[3]);
                }
                a
            },
        )?;
        let kn = groups
            .values()
            .filter(|g| g[3] > f64::NEG_INFINITY)
            .map(|g| (g[3] - g[0]).max(g[1] - g[2]))
            .fold(0.0f64, f64::max);
        worst = worst.max(kn);
        per_n.push((n, worst));
    }
    let err = phi.sum_error_bound(n_max) * 2.0;
    let kint = ValueInterval::rounded(worst).inflate(err);
    let mut analytic = ValueInterval::zero();
    let mut j = 0;
    loop {
        let v = phi.variation(sys, eps.finer(j))?;
        if v.upper == 0.0 || j > 64 {
            if j > 64 {
                // geometric tail of the declared modulus
                if let Some(b) = phi.modulus_bound(eps.finer(j)) {
                    analytic = analytic + ValueInterval::rounded(b * 2.0);
                }
            }
            break;
        }
        analytic = analytic + v;
        j += 1;
    }
    let analytic = analytic.scale(2.0);
    let var_eps = phi.variation(sys, eps)?;
    let within_analytic = kint.lower <= analytic.upper;
    Ok(BowenReport { eps, per_n, k: kint, analytic, var_eps, within_analytic })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub name: String,
    pub margin: ValueInterval,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCertificate {
    pub delta: DyadicScale,
    pub eps: DyadicScale,
    /// `ε / δ`.
    pub ratio: f64,
    pub specification: Vec<(usize, SpecificationReport)>,
    pub bowen: BowenReport,
    pub k_of_m: Vec<(usize, ValueInterval)>,
    pub p_phi: ValueInterval,
    pub p_prefix_suffix: ValueInterval,
    pub var_eps: ValueInterval,
    pub var_15_delta: ValueInterval,
    pub p_with_domain_complement: ValueInterval,
    /// The shift is expansive at every scale `<= 1/2`, so the obstruction
    /// to expansivity has pressure `-inf` at scale ε when `ε <= 1/2`.
    pub expansive_at_eps: bool,
    pub conditions: Vec<ConditionReport>,
    pub verdict: Verdict,
}

/// Settings for [`hypothesis_certificate`].
#[derive(Debug, Clone)]
pub struct CertificateSettings {
    pub m_list: Vec<usize>,
    /// Largest `n` for pressure estimates of `P ∪ S`.
    pub n_max: usize,
    /// Largest `n` for the Bowen-distortion scan.
    pub bowen_n_max: usize,
    /// Tuple size and extra segment lengths for specification checks.
    pub k_max: usize,
    pub spec_n_extra: usize,
    pub connector_max: usize,
    /// Cap on glued tuples for each `M`.
    pub max_tuples: u64,
}

impl Default for CertificateSettings {
    fn default() -> Self {
        Self { m_list: vec![0, 1, 2], n_max: 10, bowen_n_max: 8, k_max: 2, spec_n_extra: 2, connector_max: 4, max_tuples: 1 << 14 }
    }
}

fn pressure_interval(sys: &ShiftSystem, c: &SegmentCollection, phi: &Potential, delta: DyadicScale, n_max: usize) -> Result<ValueInterval> {
    let est = pressure(sys, c, phi, delta, None, n_max)?;
    if est.eventually_empty {
        return Ok(ValueInterval::zero());
    }
    let (lo, hi) = est.averaged_range(2);
    if est.monotone {
        return Ok(ValueInterval::new(lo.min(est.value), hi.max(est.value)));
    }
    Ok(ValueInterval::new(lo, hi))
}

/// Check conditions (I)-(III) for `(sys, φ)` with the decomposition `rule`.
pub fn hypothesis_certificate(
    sys: &ShiftSystem,
    phi: &Potential,
    rule: &Arc<DecompositionRule>,
    delta: DyadicScale,
    eps: DyadicScale,
    settings: &CertificateSettings,
) -> Result<HypothesisCertificate> {
    if delta.m < eps.m + 6 {
        return Err(Error::ScaleLadder(format!(
            "need ε > 40δ on the dyadic ladder (m_δ >= m_ε + 6), got ε = {eps}, δ = {delta}"
        )));
    }
    let spec = GluingSpec { max_tuples: settings.max_tuples, ..GluingSpec::new(sys, settings.connector_max) };
    let mut specification = Vec::new();
    for &m in &settings.m_list {
        let rep = good_core_specification_check(sys, rule, m, delta, &spec, 1, settings.k_max, settings.spec_n_extra)?;
        specification.push((m, rep));
    }
    let good = rule.collection(Part::Good);
    let bowen = bowen_distortion(sys, phi, &good, eps, settings.bowen_n_max)?;
    let k_of_m = settings.m_list.iter().map(|&m| (m, bowen.k_of_m(m))).collect();
    let p_phi = pressure_oracle(sys, phi)?.value;
    let ps = rule.collection(Part::PrefixOrSuffix);
    let p_prefix_suffix = pressure_interval(sys, &ps, phi, delta, settings.n_max)?;
    let var_eps = phi.variation(sys, eps)?;
    // 15δ < 16δ = 2^{-(m_δ - 4)}
    let var_15_delta = phi.variation(sys, DyadicScale::new(delta.m - 4))?;
    let dc = rule.collection(Part::DomainComplement).union(ps.clone());
    let p_with_domain_complement = pressure_interval(sys, &dc, phi, delta, settings.n_max)?;
    let expansive_at_eps = eps.m >= 1;

    let spec_ok = specification.iter().all(|(_, r)| r.passed);
    let mut conditions = vec![ConditionReport {
        name: "I: specification of G^M".into(),
        margin: ValueInterval::point(if spec_ok { 1.0 } else { -1.0 }),
        verdict: if spec_ok { Verdict::Pass } else { Verdict::Fail },
        detail: specification
            .iter()
            .map(|(m, r)| format!("M={m}: {} cases over {} of {} segments, max gap {}", r.cases, r.used, r.segments, r.max_gap))
            .collect::<Vec<_>>()
            .join("; "),
    }];
    let bowen_margin = bowen.analytic - bowen.k;
    let stable = bowen.per_n.len() < 2 || {
        let l = bowen.per_n.len();
        (bowen.per_n[l - 1].1 - bowen.per_n[l - 2].1).abs() <= 1e-9 * (1.0 + bowen.per_n[l - 1].1)
    };
    let bowen_verdict = if bowen_margin.lower >= -1e-12 && stable {
        Verdict::Pass
    } else if bowen_margin.upper < 0.0 {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    };
    conditions.push(ConditionReport {
        name: "II: Bowen property on G".into(),
        margin: bowen_margin,
        verdict: bowen_verdict,
        detail: format!("K = {}, analytic bound {}", bowen.k, bowen.analytic),
    });
    let m3 = p_phi - p_prefix_suffix - var_eps;
    conditions.push(ConditionReport {
        name: "III: P(P∪S, δ) + Var(φ, ε) < P(φ)".into(),
        margin: m3,
        verdict: Verdict::positive(&m3),
        detail: format!("P(φ) = {p_phi}, P(P∪S) = {p_prefix_suffix}, Var = {var_eps}"),
    });
    let m3b = p_phi - p_prefix_suffix - var_15_delta;
    conditions.push(ConditionReport {
        name: "III': P(P∪S, δ) + Var(φ, 15δ) < P(φ)".into(),
        margin: m3b,
        verdict: Verdict::positive(&m3b),
        detail: "Var(φ, 15δ) bounded by Var(φ, 16δ)".into(),
    });
    let m3c = p_phi - p_with_domain_complement - var_15_delta;
    conditions.push(ConditionReport {
        name: "III'': P(D^c ∪ P ∪ S, δ) + Var(φ, 15δ) < P(φ)".into(),
        margin: m3c,
        verdict: Verdict::positive(&m3c),
        detail: String::new(),
    });
    let verdict = conditions[..3].iter().fold(
        if expansive_at_eps { Verdict::Pass } else { Verdict::Inconclusive },
        |v, c| v.and(c.verdict),
    );
    Ok(HypothesisCertificate {
        delta,
        eps,
        ratio: 2f64.powi((delta.m - eps.m) as i32),
        specification,
        bowen,
        k_of_m,
        p_phi,
        p_prefix_suffix,
        var_eps,
        var_15_delta,
        p_with_domain_complement,
        expansive_at_eps,
        conditions,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoreDensityReport {
    /// `(M, n, Λ(C ∩ G^M) / Λ(C))` at scales `2γ, 2γ`.
    pub table: Vec<(usize, usize, f64)>,
    pub least_m: Option<usize>,
    /// `(M, n)` where `C ∩ G^M` was empty while `C` was not.
    pub empty_witness: Option<(usize, usize)>,
}

/// Least `M` in `m_ladder` with `Λ(C ∩ G^M, 2γ, 2γ, n) >= (1 - α_2) Λ(C, 2γ, 2γ, n)` for `n` in `n_range`.
pub fn core_density_check(
    sys: &ShiftSystem,
    phi: &Potential,
    rule: &Arc<DecompositionRule>,
    c: &SegmentCollection,
    gamma: DyadicScale,
    alpha_2: f64,
    m_ladder: &[usize],
    n_range: std::ops::RangeInclusive<usize>,
) -> Result<CoreDensityReport> {
    if gamma.m < 2 {
        return Err(Error::ScaleLadder("2γ must be below 1".into()));
    }
    let two = DyadicScale::new(gamma.m - 1);
    let mut table = Vec::new();
    let mut least_m = None;
    let mut empty_witness = None;
    let base: Vec<(usize, f64)> = n_range
        .clone()
        .map(|n| partition_sum(sys, c, phi, two, Some(two), n).map(|v| (n, v.log_value.mid())))
        .collect::<Result<_>>()?;
    for &m in m_ladder {
        let cm = c.clone().intersect(rule.collection(Part::GoodCore(m)));
        let mut ok = true;
        for &(n, lb) in &base {
            let lm = partition_sum(sys, &cm, phi, two, Some(two), n)?.log_value.mid();
            let ratio = if lb.is_finite() { (lm - lb).exp() } else { 1.0 };
            if !lm.is_finite() && lb.is_finite() && empty_witness.is_none() {
                empty_witness = Some((m, n));
            }
            table.push((m, n, ratio));
            ok &= ratio >= 1.0 - alpha_2;
        }
        if ok && least_m.is_none() {
            least_m = Some(m);
        }
    }
    if least_m.is_some() {
        empty_witness = None;
    }
    Ok(CoreDensityReport { table, least_m, empty_witness })
}
