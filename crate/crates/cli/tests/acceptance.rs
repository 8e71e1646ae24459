//! Acceptance suite: one line per criterion. Reference values come from
//! closed forms computed here, not from the library.

use ergolab_cli::catalog::EXAMPLES;
use ergolab_cli::config::ExperimentConfig;
use ergolab_core::decomposition::{
    glue, hypothesis_certificate, specification_check, CertificateSettings, DecompositionRule, GlueSegment, GluingSpec,
};
use ergolab_core::equilibrium::{gibbs_lower_check, gibbs_upper_check, pressure_oracle, rpf_solve, MarkovMeasure};
use ergolab_core::expansivity::{aee_check, hamming_check, stirling_bound_check, CylinderPartition};
use ergolab_core::ldp::{empirical_decay_rate, ldp_upper_check, rate_upper_bound, upper_energy_check, ConstraintSet, Relation};
use ergolab_core::potentials::Potential;
use ergolab_core::pressure::{
    lower_bound_check, partition_sum, pressure, product_bound_check, sandwich_check, SegmentCollection, Verdict,
};
use ergolab_core::suspension::{
    abramov_check, flow_pressure, flow_pressure_root, optimize_bernoulli, time_t_ball_check, FlowCollection,
    FlowSegments, RoofFunction, SuspensionFlow, Q,
};
use ergolab_core::{DyadicScale, ShiftSystem, Window};
use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Instant;

/// Criteria that cannot be met as stated; see the project notes.
const UNATTAINABLE: &[usize] = &[11];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn golden() -> f64 {
    ((1.0 + 5f64.sqrt()) / 2.0).ln()
}

fn half() -> DyadicScale {
    DyadicScale::new(1)
}

fn full2() -> ShiftSystem {
    ShiftSystem::full(2).unwrap()
}

fn compositions(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 1..=n {
        for mut rest in compositions(n - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn c1_full_shift_exact() -> Outcome {
    let t = Instant::now();
    let sys = full2();
    let phi = Potential::zero(&sys);
    let mut worst = 0.0f64;
    let mut counts_ok = true;
    for n in 1..=20 {
        let v = partition_sum(&sys, &SegmentCollection::All, &phi, half(), Some(half()), n).unwrap();
        counts_ok &= v.classes == 1 << n && v.log_value.contains(n as f64 * 2f64.ln());
        worst = worst.max((v.log_value.mid() - n as f64 * 2f64.ln()).abs());
    }
    let p = pressure(&sys, &SegmentCollection::All, &phi, half(), Some(half()), 20).unwrap();
    let err = (p.value - 2f64.ln()).abs();
    let secs = t.elapsed().as_secs_f64();
    outcome(
        counts_ok && err <= 1e-12 && secs < 1.0,
        format!("Λ(n) = 2^n for n ≤ 20 ({counts_ok}), max log error {worst:.1e}, |P - log 2| = {err:.1e}, {secs:.2}s"),
    )
}

fn c2_spectral_oracle() -> Outcome {
    let t = Instant::now();
    let g = ShiftSystem::golden_mean();
    let pg = pressure(&g, &SegmentCollection::All, &Potential::zero(&g), half(), None, 24).unwrap();
    let eg = (pg.value - golden()).abs();
    let sys = full2();
    let phi = Potential::symbol_weights(&sys, &[0.0, 2f64.ln()]).unwrap();
    let pw = pressure(&sys, &SegmentCollection::All, &phi, half(), None, 20).unwrap();
    let ew = (pw.value - 3f64.ln()).abs();
    let secs = t.elapsed().as_secs_f64();
    outcome(
        eg <= 1e-6 && ew <= 1e-9 && secs < 30.0,
        format!("golden |P - log φ| = {eg:.1e} at n = 24, weighted |P - log 3| = {ew:.1e}, {secs:.1}s"),
    )
}

fn c3_sandwich_and_product() -> Outcome {
    let systems = [("full-2", full2()), ("golden", ShiftSystem::golden_mean())];
    let mut checked = 0usize;
    let mut bad = 0usize;
    let mut min_slack = f64::INFINITY;
    for (_, sys) in &systems {
        let potentials = [Potential::zero(sys), Potential::symbol_weights(sys, &[0.25, -0.5]).unwrap()];
        for phi in &potentials {
            for n in 1..=10 {
                let s = sandwich_check(sys, &SegmentCollection::All, phi, DyadicScale::new(2), half(), n).unwrap();
                let p = product_bound_check(sys, phi, DyadicScale::new(2), &compositions(n)).unwrap();
                for r in s.rows.iter().chain(&p.rows) {
                    checked += 1;
                    bad += usize::from(r.verdict != Verdict::Pass);
                    min_slack = min_slack.min(r.slack.lower);
                }
            }
        }
    }
    outcome(bad == 0, format!("{checked} inequalities, {bad} counterexamples, least slack {min_slack:.3e}"))
}

/// Distinct (system, potential) pairs of the shipped configs that have a transfer-matrix oracle.
fn shipped_pairs() -> Vec<(String, ShiftSystem, Potential)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for e in EXAMPLES {
        let cfg = e.config().unwrap();
        let key = serde_json::to_string(&(&cfg.system, &cfg.potential)).unwrap();
        if cfg.system.is_none() || !seen.insert(key) {
            continue;
        }
        let sys = cfg.system().unwrap();
        let phi = cfg.potential(&sys).unwrap();
        if pressure_oracle(&sys, &phi).is_ok() {
            out.push((e.name.to_string(), sys, phi));
        }
    }
    out
}

fn c4_lower_bound() -> Outcome {
    let mut worst = f64::INFINITY;
    let mut names = Vec::new();
    for (name, sys, phi) in shipped_pairs() {
        let p = pressure_oracle(&sys, &phi).unwrap().value.mid();
        for m in [2, 3] {
            let r = lower_bound_check(&sys, &phi, DyadicScale::new(m), 20, p, 0.0).unwrap();
            worst = worst.min(r.min_slack());
        }
        names.push(name);
    }
    outcome(worst >= -1e-9, format!("least margin {worst:.3e} over γ ∈ {{1/4, 1/8}}, n ≤ 20, on {}", names.join(", ")))
}

fn c5_gibbs() -> Outcome {
    let mut worst = 0.0f64;
    let cases: Vec<(ShiftSystem, Vec<f64>)> = vec![
        (full2(), vec![0.0, 0.0]),
        (full2(), vec![0.0, 2f64.ln()]),
        (ShiftSystem::full(3).unwrap(), vec![0.3, -0.7, 1.1]),
    ];
    for (sys, w) in &cases {
        let phi = Potential::symbol_weights(sys, w).unwrap();
        let sol = rpf_solve(sys, &phi).unwrap();
        let lo = gibbs_lower_check(sys, &phi, &SegmentCollection::All, half(), 1..=14, &sol.measure, sol.pressure).unwrap();
        let up = gibbs_upper_check(sys, &phi, half(), 1..=14, &sol.measure, sol.pressure).unwrap();
        for q in [lo.q_lower, lo.q_upper, up.q_lower, up.q_upper] {
            worst = worst.max((q - 1.0).abs());
        }
    }
    let g = ShiftSystem::golden_mean();
    let zero = Potential::zero(&g);
    let parry = rpf_solve(&g, &zero).unwrap();
    let quarter = DyadicScale::new(2);
    let lo = gibbs_lower_check(&g, &zero, &SegmentCollection::All, quarter, 6..=18, &parry.measure, parry.pressure).unwrap();
    let up = gibbs_upper_check(&g, &zero, quarter, 6..=18, &parry.measure, parry.pressure).unwrap();
    let (q, big_q) = (lo.q_lower.min(up.q_lower), lo.q_upper.max(up.q_upper));
    let banded = q > 0.0 && big_q.is_finite() && !lo.decay_trend && !up.decay_trend;
    outcome(
        worst <= 1e-10 && banded,
        format!("full shifts: max |ratio - 1| = {worst:.1e} for n ≤ 14; Parry at 1/4: ratios in [{q:.4}, {big_q:.4}] for n ∈ [6, 18]"),
    )
}

fn c6_certificate() -> Outcome {
    let t = Instant::now();
    let sys = ShiftSystem::golden_beta(60);
    let rule = Arc::new(DecompositionRule::beta_suffix(&sys).unwrap());
    let (delta, eps) = (DyadicScale::new(7), DyadicScale::new(1));
    let settings = CertificateSettings::default();
    let cert = hypothesis_certificate(&sys, &Potential::zero(&sys), &rule, delta, eps, &settings).unwrap();
    let first_three = cert.conditions[..3].iter().all(|c| c.verdict == Verdict::Pass)
        && cert.conditions[0].margin.lower > 0.0
        && cert.conditions[2].margin.lower > 0.0;
    let ps_zero = cert.p_prefix_suffix.lower.abs() < 1e-12 && cert.p_prefix_suffix.upper.abs() < 1e-12;
    let k_zero = cert.bowen.k.lower.abs() < 1e-12 && cert.bowen.k.upper.abs() < 1e-12;
    let p_ok = (cert.p_phi.mid() - golden()).abs() < 1e-9;
    // φ depends on x_1, so Var(φ, 1/2) = 5 swamps the pressure gap
    let loud = Potential::from_fn(&sys, 2, |w| 5.0 * w[1] as f64).unwrap();
    let bad = hypothesis_certificate(&sys, &loud, &rule, delta, eps, &settings).unwrap();
    let iii = &bad.conditions[2];
    let fails = iii.verdict == Verdict::Fail && iii.margin.upper < 0.0;
    let secs = t.elapsed().as_secs_f64();
    outcome(
        first_three && ps_zero && k_zero && p_ok && fails && secs < 60.0,
        format!(
            "(I)(II)(III) pass: {first_three}, P(P∪S) = {}, K = {}, (III) margin {:.4}; high-amplitude (III) margin {:.4}; {secs:.1}s",
            cert.p_prefix_suffix, cert.bowen.k, cert.conditions[2].margin.lower, iii.margin.upper
        ),
    )
}

fn c7_gluing() -> Outcome {
    let sys = ShiftSystem::golden_mean();
    let spec = GluingSpec::new(&sys, 2);
    let report = specification_check(&sys, &SegmentCollection::All, half(), &spec, 3, 6).unwrap();
    let exhaustive = report.used == report.segments;
    let words: Vec<Vec<u8>> = (1..=6).flat_map(|n| sys.enumerate_words(n).unwrap()).collect();
    let mut tuples = 0usize;
    let mut shadow_bad = 0usize;
    let mut causal_bad = 0usize;
    let mut max_gap = 0usize;
    let mut check = |tuple: &[&Vec<u8>]| -> Vec<usize> {
        let segs: Vec<GlueSegment> = tuple.iter().map(|w| GlueSegment::word(w)).collect();
        let r = glue(&sys, &segs, &spec, half()).unwrap();
        tuples += 1;
        for (w, &s) in tuple.iter().zip(&r.starts) {
            if r.y.read(&Window::new(s, s + w.len() as i64 - 1)).unwrap() != **w {
                shadow_bad += 1;
            }
        }
        for pair in r.starts.windows(2).zip(tuple) {
            let gap = (pair.0[1] - pair.0[0]) as usize - pair.1.len();
            max_gap = max_gap.max(gap);
        }
        r.gaps
    };
    for a in &words {
        for b in &words {
            let two = check(&[a, b]);
            for c in &words {
                let three = check(&[a, b, c]);
                causal_bad += usize::from(three[0] != two[0]);
            }
        }
    }
    let pass = report.passed && exhaustive && spec.tau == 1 && shadow_bad == 0 && causal_bad == 0 && max_gap <= 1;
    outcome(
        pass,
        format!(
            "τ = {}, {tuples} pairs/triples of {} segments, max gap {max_gap}, {shadow_bad} shadowing and {causal_bad} causality violations",
            spec.tau,
            words.len()
        ),
    )
}

fn c8_entropy() -> Outcome {
    let full = full2();
    let g = ShiftSystem::golden_mean();
    let bern = MarkovMeasure::bernoulli(&[0.5, 0.5]).unwrap();
    let parry = rpf_solve(&g, &Potential::zero(&g)).unwrap().measure;
    let part = CylinderPartition::new(Window::new(0, 0)).unwrap();
    let a = aee_check(&full, &bern, half(), &part, 14).unwrap();
    let b = aee_check(&g, &parry, half(), &part, 14).unwrap();
    let (ea, eb) = ((a.h_mu_a - 2f64.ln()).abs(), (b.h_mu_a - golden()).abs());
    let mut hamming_bad = 0u64;
    for n in 1..=12 {
        for beta in [0.1, 0.25] {
            hamming_bad += hamming_check(&full, 1, DyadicScale::new(2), beta, n).unwrap().counterexamples;
        }
    }
    let stirling = stirling_bound_check(12, &[0.1, 0.25, 0.4]).unwrap();
    let stirling_ok = stirling.iter().all(|r| r.binary_entropy_bound_holds);
    outcome(
        ea <= 1e-3 && eb <= 1e-3 && a.inequality_holds && b.inequality_holds && hamming_bad == 0 && stirling_ok,
        format!(
            "|h(A) - h| = {ea:.1e} (Bernoulli), {eb:.1e} (Parry) at n = 14; Hamming counterexamples {hamming_bad}; binomial bound holds: {stirling_ok}"
        ),
    )
}

fn roof12() -> SuspensionFlow {
    SuspensionFlow::new(full2(), RoofFunction::symbols(&[Q::from_integer(1), Q::from_integer(2)]).unwrap()).unwrap()
}

fn c9_flow() -> Outcome {
    let t = Instant::now();
    let f = roof12();
    let zero = Potential::zero(&f.base);
    let root = flow_pressure_root(&f, &zero).unwrap();
    let e_root = (root.value - golden()).abs();
    let ts: Vec<Q> = [10, 20, 30].into_iter().map(Q::from_integer).collect();
    let est = flow_pressure(&f, &FlowSegments::Segments(FlowCollection::All), &zero, half(), None, &ts).unwrap();
    let errs: Vec<f64> = est.ratio.iter().map(|(_, r)| (r - golden()).abs()).collect();
    let improving = errs.windows(2).all(|w| w[1] <= w[0]);
    let bern = MarkovMeasure::bernoulli(&[0.5, 0.5]).unwrap();
    let small: Vec<Q> = (1..=4).map(Q::from_integer).collect();
    let ab = abramov_check(&f, &bern, &small, Q::from_integer(8)).unwrap();
    let e_ab = (ab.flow_entropy - 2f64.ln() / 1.5).abs();
    let opt = optimize_bernoulli(&f).unwrap();
    let e_opt = (opt.flow_entropy - golden()).abs();
    let secs = t.elapsed().as_secs_f64();
    let pass = e_root <= 1e-10
        && errs.last().is_some_and(|e| *e <= 5e-2)
        && improving
        && e_ab <= 1e-6
        && ab.flow_entropy <= root.value
        && e_opt <= 1e-4
        && secs < 120.0;
    outcome(
        pass,
        format!(
            "root error {e_root:.1e}; grid errors at t = 10, 20, 30: {:.1e}, {:.1e}, {:.1e}; Bernoulli(1/2) {:.6}; optimum error {e_opt:.1e}; {secs:.1}s",
            errs[0], errs[1], errs[2], ab.flow_entropy
        ),
    )
}

fn c10_balls() -> Outcome {
    let mut total = 0usize;
    let mut bad = 0usize;
    let mut configs = 0usize;
    for e in EXAMPLES {
        let cfg = e.config().unwrap();
        let Some(spec) = &cfg.flow else { continue };
        configs += 1;
        let sys = cfg.system().unwrap();
        let flow = cfg.flow(&sys).unwrap();
        for (n, t) in [(spec.ball_n, spec.ball_t.0), (2, Q::new(1, 2)), (3, Q::from_integer(2))] {
            let r = time_t_ball_check(&flow, spec.delta.0.value(), n, t, 200, cfg.seed).unwrap();
            total += r.pairs;
            bad += r.disagreements;
        }
    }
    outcome(configs > 0 && bad == 0, format!("{configs} flow configs, {total} sampled pairs, {bad} disagreements"))
}

fn binomial_tail_rate(n: u32, k_min: u32) -> f64 {
    let mut c: u128 = 1;
    let mut sum: u128 = 0;
    for k in 0..=n {
        if k >= k_min {
            sum += c;
        }
        c = c * (n - k) as u128 / (k + 1) as u128;
    }
    ((sum as f64).ln() - n as f64 * 2f64.ln()) / n as f64
}

fn c11_ldp() -> Outcome {
    let sys = full2();
    let zero = Potential::zero(&sys);
    let a = ConstraintSet::symbol_frequency(1, Relation::Ge, 0.75);
    let target = -(0.75 * 0.75f64.ln() + 0.25 * 0.25f64.ln()) - 2f64.ln();
    let bern = MarkovMeasure::bernoulli(&[0.5, 0.5]).unwrap();
    let decay = empirical_decay_rate(&sys, &bern, &a, &[40], 0, 1).unwrap();
    let exact = binomial_tail_rate(40, 30);
    let agrees = (decay[0].value - exact).abs() < 1e-12;
    let rate = rate_upper_bound(&sys, &zero, &a).unwrap().value;
    let report = ldp_upper_check(&sys, &zero, &a, &[10, 20, 40]).unwrap();
    let mut uef_ok = true;
    for e in EXAMPLES {
        let cfg = e.config().unwrap();
        let gamma = match (&cfg.ldp, &cfg.gibbs, &cfg.entropy) {
            (Some(l), _, _) => l.gamma.map(|g| g.0),
            (_, Some(g), _) => Some(g.rho.0),
            (_, _, Some(en)) => Some(en.eps.0),
            _ => None,
        };
        let (Some(gamma), Some(_)) = (gamma, &cfg.measure) else { continue };
        let s = cfg.system().unwrap();
        let phi = cfg.potential(&s).unwrap();
        let mu = cfg.measure(&s, &phi).unwrap();
        let p = pressure_oracle(&s, &phi).unwrap().value.mid();
        uef_ok &= upper_energy_check(&s, &phi, &mu, p, gamma, 14).unwrap().passed;
    }
    let decay_ok = (exact - target).abs() <= 2e-2;
    let rate_ok = (rate - target).abs() <= 1e-6;
    outcome(
        decay_ok && rate_ok && report.verdict == Verdict::Pass && uef_ok && agrees,
        format!(
            "exact rate at n = 40 is {:.6} (independent binomial sum {exact:.6}), target {target:.6}, off by {:.4} > 2e-2; rate bound error {:.1e}; upper check {:?}; upper energy {uef_ok}",
            decay[0].value,
            (exact - target).abs(),
            (rate - target).abs(),
            report.verdict
        ),
    )
}

fn c12_determinism() -> Outcome {
    let mut differing = Vec::new();
    for e in EXAMPLES {
        let cfg: ExperimentConfig = e.config().unwrap();
        let a = ergolab_cli::run(&cfg, None).unwrap().0.body_json();
        let b = ergolab_cli::run(&cfg, None).unwrap().0.body_json();
        if a != b {
            differing.push(e.name);
        }
    }
    outcome(differing.is_empty(), format!("{} configs run twice, differing bodies: {differing:?}", EXAMPLES.len()))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("pressure exactness on the full shift", c1_full_shift_exact),
        ("pressure against the spectral oracle", c2_spectral_oracle),
        ("two-scale sandwich and product bound", c3_sandwich_and_product),
        ("lower bound by e^{nP}", c4_lower_bound),
        ("Gibbs sandwich", c5_gibbs),
        ("hypothesis certificate", c6_certificate),
        ("specification gluing", c7_gluing),
        ("entropy at a scale, Hamming and binomial counts", c8_entropy),
        ("suspension flow entropy", c9_flow),
        ("flow and time-t map Bowen balls", c10_balls),
        ("large-deviation upper bound", c11_ldp),
        ("determinism of CLI reports", c12_determinism),
    ];
    let mut unexpected = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        let o = f();
        let known = UNATTAINABLE.contains(&id);
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && known { " [known: not attainable as stated]" } else { "" };
        println!("{tag} criterion {id:>2}: {name}: {}{note}", o.detail);
        if !o.pass && !known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
