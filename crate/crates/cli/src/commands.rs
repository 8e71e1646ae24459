//! One pipeline per subcommand: build inputs from the config, run the core
//! checks, and collect verdicts, JSON results and CSV tables.

use crate::config::{Command, ExperimentConfig, PressureSpec, Scale};
use crate::report::{Check, Outcome, Table};
use crate::CliError;
use ergolab_core::decomposition::{
    decompose_word, glue, hypothesis_certificate, specification_check, CertificateSettings, GlueSegment, GluingSpec,
};
use ergolab_core::equilibrium::{gibbs_lower_check, gibbs_upper_check, pressure_oracle};
use ergolab_core::expansivity::{aee_check, hamming_check, stirling_bound_check, CylinderPartition, AEE_TOL};
use ergolab_core::ldp::{empirical_decay_rate, ldp_upper_check, upper_energy_check};
use ergolab_core::pressure::{pressure, Part, SegmentCollection, Verdict};
use ergolab_core::suspension::{
    abramov_check, flow_pressure, flow_pressure_root, optimize_bernoulli, time_t_ball_check, FlowCollection,
    FlowSegments, Q,
};
use ergolab_core::symbolic::{word_string, AdmissibilityRule};
use ergolab_core::{DyadicScale, ShiftSystem, ValueInterval, Window};
use serde_json::json;

pub fn dispatch(command: Command, cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    match command {
        Command::Pressure => run_pressure(cfg),
        Command::Certify => run_certify(cfg),
        Command::Gibbs => run_gibbs(cfg),
        Command::Entropy => run_entropy(cfg),
        Command::FlowPressure => run_flow(cfg),
        Command::Ldp => run_ldp(cfg),
        Command::Glue => run_glue(cfg),
        Command::Decompose => run_decompose(cfg),
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn to_json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("report serializes")
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    s.as_ref().ok_or_else(|| CliError::missing(name))
}

fn collection(cfg: &ExperimentConfig, sys: &ShiftSystem, name: &str) -> Result<SegmentCollection, CliError> {
    let part = match name {
        "all" => return Ok(SegmentCollection::All),
        "prefix" => Part::Prefix,
        "good" => Part::Good,
        "suffix" => Part::Suffix,
        "prefix-or-suffix" => Part::PrefixOrSuffix,
        other => return Err(CliError::config("pressure.collection", format!("unknown collection {other:?}"))),
    };
    Ok(cfg.decomposition(sys)?.collection(part))
}

fn run_pressure(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let sys = cfg.system()?;
    let phi = cfg.potential(&sys)?;
    let default = PressureSpec { delta: Scale(DyadicScale::new(1)), eps: None, collection: "all".into(), tolerance: None };
    let spec = cfg.pressure.as_ref().unwrap_or(&default);
    if spec.delta.0.m == 0 {
        return Err(CliError::config("pressure.delta", "δ must be below 1"));
    }
    let c = collection(cfg, &sys, &spec.collection)?;
    let est = pressure(&sys, &c, &phi, spec.delta.0, spec.eps.map(|e| e.0), cfg.budget.n_max)?;
    let mut table = Table::new("partition_sums", &["n", "log_lambda_lower", "log_lambda_upper", "ratio"]);
    for (i, (n, v)) in est.log_lambda.iter().enumerate() {
        let ratio = if i == 0 { String::new() } else { est.ratios.get(i - 1).map(|r| num(*r)).unwrap_or_default() };
        table.push(vec![n.to_string(), num(v.lower), num(v.upper), ratio]);
    }
    let oracle = pressure_oracle(&sys, &phi).ok();
    let mut checks = Vec::new();
    if let Some(tol) = spec.tolerance {
        let o = oracle.as_ref().ok_or_else(|| CliError::Compute("no pressure oracle for this system".into()))?;
        if spec.collection != "all" {
            return Err(CliError::config("pressure.tolerance", "the oracle comparison needs collection = \"all\""));
        }
        checks.push(Check::close("pressure matches oracle", est.value, o.value.mid(), tol));
    }
    checks.push(Check::flag("ratio tail monotone", est.monotone, format!("spread {}", est.spread)).informational());
    Ok(Outcome {
        checks,
        results: json!({ "estimate": to_json(&est), "oracle": to_json(&oracle) }),
        tables: vec![table],
    })
}

fn run_certify(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let ladder = section(&cfg.ladder, "ladder")?.derive()?;
    let sys = cfg.system()?;
    let phi = cfg.potential(&sys)?;
    let rule = cfg.decomposition(&sys)?;
    let settings = CertificateSettings { n_max: cfg.budget.n_max, ..Default::default() };
    let cert = hypothesis_certificate(&sys, &phi, &rule, ladder.delta, ladder.eps, &settings)?;
    let mut checks: Vec<Check> = cert
        .conditions
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let check = Check::new(&c.name, c.verdict, Some(c.margin), c.detail.clone());
            if i < 3 {
                check
            } else {
                check.informational()
            }
        })
        .collect();
    checks.push(Check::flag("expansive at scale ε", cert.expansive_at_eps, format!("ε = {}", ladder.eps)));
    let mut table = Table::new("conditions", &["condition", "verdict", "margin_lower", "margin_upper"]);
    for c in &cert.conditions {
        table.push(vec![c.name.clone(), format!("{:?}", c.verdict), num(c.margin.lower), num(c.margin.upper)]);
    }
    Ok(Outcome { checks, results: json!({ "scales": to_json(&ladder), "certificate": to_json(&cert) }), tables: vec![table] })
}

fn run_gibbs(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = section(&cfg.gibbs, "gibbs")?;
    if spec.n_min == 0 || spec.n_min > spec.n_max {
        return Err(CliError::config("gibbs.n_min", "need 1 <= n_min <= n_max"));
    }
    let sys = cfg.system()?;
    let phi = cfg.potential(&sys)?;
    let mu = cfg.measure(&sys, &phi)?;
    let p = pressure_oracle(&sys, &phi)?.value.mid();
    let range = spec.n_min..=spec.n_max;
    let lower = gibbs_lower_check(&sys, &phi, &SegmentCollection::All, spec.rho.0, range.clone(), &mu, p)?;
    let upper = gibbs_upper_check(&sys, &phi, spec.rho.0, range, &mu, p)?;
    let mut checks = vec![
        Check::flag(
            "lower Gibbs ratio bounded below",
            lower.q_lower > 0.0 && !lower.decay_trend,
            format!("q = {}, decay trend {}", lower.q_lower, lower.decay_trend),
        ),
        Check::flag("upper Gibbs ratio bounded above", upper.q_upper.is_finite(), format!("Q = {}", upper.q_upper)),
    ];
    if let Some(tol) = spec.unit_tolerance {
        let dev = [lower.q_lower, lower.q_upper, upper.q_lower, upper.q_upper]
            .iter()
            .map(|q| (q - 1.0).abs())
            .fold(0.0, f64::max);
        checks.push(Check::close("Gibbs ratios identically 1", dev, 0.0, tol));
    }
    let mut table = Table::new("gibbs", &["n", "lower_min", "lower_max", "upper_min", "upper_max"]);
    for (l, u) in lower.per_n.iter().zip(&upper.per_n) {
        table.push(vec![l.0.to_string(), num(l.1), num(l.2), num(u.1), num(u.2)]);
    }
    Ok(Outcome {
        checks,
        results: json!({ "pressure": p, "measure": to_json(&mu), "lower": to_json(&lower), "upper": to_json(&upper) }),
        tables: vec![table],
    })
}

fn run_entropy(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = section(&cfg.entropy, "entropy")?;
    let sys = cfg.system()?;
    let phi = cfg.potential(&sys)?;
    let mu = cfg.measure(&sys, &phi)?;
    let part = CylinderPartition::new(Window::new(spec.partition[0], spec.partition[1]))
        .map_err(|e| CliError::config("entropy.partition", e.to_string()))?;
    let aee = aee_check(&sys, &mu, spec.eps.0, &part, spec.n_max)?;
    let mut checks = vec![Check::flag(
        "entropy inequality",
        aee.inequality_holds,
        format!("h = {}, h(A) = {}, h* = {}", aee.h_mu, aee.h_mu_a, aee.h_star),
    )];
    if aee.equality_holds.is_some() {
        checks.push(Check::close("h(f, A) matches oracle entropy", aee.h_mu_a, aee.h_mu, AEE_TOL));
    }
    let mut table = Table::new("entropy", &["n", "increment"]);
    for (n, h) in &aee.estimate.increments {
        table.push(vec![n.to_string(), num(*h)]);
    }
    let mut counting = json!(null);
    if spec.counting_n > 0 {
        let quarter = DyadicScale::new(2);
        let hamming = spec
            .betas
            .iter()
            .map(|&b| hamming_check(&sys, 1, quarter, b, spec.counting_n))
            .collect::<Result<Vec<_>, _>>()?;
        let stirling = stirling_bound_check(spec.counting_n, &spec.betas)?;
        let bad: u64 = hamming.iter().map(|h| h.counterexamples).sum();
        checks.push(Check::flag("Hamming separation", bad == 0, format!("{bad} counterexamples")));
        let bound = stirling.iter().all(|r| r.binary_entropy_bound_holds);
        checks.push(Check::flag("binomial sums below e^{H(β) n}", bound, String::new()));
        let stab = stirling.iter().all(|r| r.stabilizes);
        let ks: Vec<String> = stirling.iter().map(|r| format!("β={}: K={}", r.beta, r.k_needed)).collect();
        checks.push(Check::flag("binomial constant with exponent -β log β stabilizes", stab, ks.join(", ")).informational());
        counting = json!({ "hamming": to_json(&hamming), "stirling": to_json(&stirling) });
    }
    Ok(Outcome { checks, results: json!({ "aee": to_json(&aee), "counting": counting }), tables: vec![table] })
}

fn run_flow(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = section(&cfg.flow, "flow")?;
    let sys = cfg.system()?;
    let phi = cfg.potential(&sys)?;
    let flow = cfg.flow(&sys)?;
    if spec.times.is_empty() {
        return Err(CliError::config("flow.times", "need at least one time"));
    }
    let root = flow_pressure_root(&flow, &phi)?;
    let ts: Vec<Q> = spec.times.iter().map(|t| t.0).collect();
    let set = FlowSegments::Segments(FlowCollection::All);
    let est = flow_pressure(&flow, &set, &phi, spec.delta.0, None, &ts)?;
    let mut checks = Vec::new();
    let errs: Vec<f64> = est.ratio.iter().map(|(_, r)| (r - root.value).abs()).collect();
    if let Some(tol) = spec.tolerance {
        let last = est.ratio.last().map(|r| r.1).unwrap_or(f64::NAN);
        checks.push(Check::close("grid pressure matches root oracle", last, root.value, tol));
        let improving = errs.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        checks.push(Check::flag("grid error decreases with t", improving, format!("{errs:?}")));
    }
    let ball = time_t_ball_check(&flow, spec.delta.0.value(), spec.ball_n, spec.ball_t.0, spec.pairs, cfg.seed)?;
    checks.push(Check::flag(
        "flow ball equals time-t map ball",
        ball.disagreements == 0,
        format!("{} disagreements over {} pairs", ball.disagreements, ball.pairs),
    ));
    let probs: Vec<f64> = match &spec.abramov_probabilities {
        Some(p) => p.iter().map(|x| x.0).collect(),
        None => vec![1.0 / sys.k() as f64; sys.k()],
    };
    let mu = ergolab_core::equilibrium::MarkovMeasure::bernoulli(&probs)
        .map_err(|e| CliError::config("flow.abramov_probabilities", e.to_string()))?;
    let small: Vec<Q> = (1..=4).map(Q::from_integer).collect();
    let abramov = if matches!(sys.rule, AdmissibilityRule::Full) {
        Some(abramov_check(&flow, &mu, &small, Q::from_integer(8))?)
    } else {
        None
    };
    if let Some(a) = &abramov {
        checks.push(Check::flag(
            "Abramov entropy below oracle",
            a.entropy_le_root,
            format!("h = {}, root = {}", a.flow_entropy, a.root),
        ));
    }
    let optimum = if sys.k() == 2 && matches!(sys.rule, AdmissibilityRule::Full) && phi.max_abs() == 0.0 {
        let o = optimize_bernoulli(&flow)?;
        checks.push(Check::close("Bernoulli family attains oracle", o.flow_entropy, o.root, 1e-4));
        Some(o)
    } else {
        None
    };
    let mut table = Table::new("flow_pressure", &["t", "log_lambda_lower", "log_lambda_upper", "raw", "ratio"]);
    for (((t, ll), (_, raw)), (_, ratio)) in est.log_lambda.iter().zip(&est.raw).zip(&est.ratio) {
        table.push(vec![t.clone(), num(ll.lower), num(ll.upper), num(*raw), num(*ratio)]);
    }
    Ok(Outcome {
        checks,
        results: json!({
            "root": to_json(&root),
            "estimate": to_json(&est),
            "ball_identity": to_json(&ball),
            "abramov": to_json(&abramov),
            "bernoulli_optimum": to_json(&optimum),
        }),
        tables: vec![table],
    })
}

fn run_ldp(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = section(&cfg.ldp, "ldp")?;
    let sys = cfg.system()?;
    let phi = cfg.potential(&sys)?;
    let a = cfg.constraints()?;
    let mu = cfg.measure(&sys, &phi)?;
    let report = ldp_upper_check(&sys, &phi, &a, &spec.ns)?;
    let decay = empirical_decay_rate(&sys, &mu, &a, &spec.ns, spec.samples, cfg.seed)?;
    let mut checks = vec![Check::new(
        "large-deviation upper bound",
        report.verdict,
        report.rows.iter().map(|r| ValueInterval::point(r.margin)).reduce(|x, y| x.min(&y)),
        format!("rate bound {}", report.bound.value),
    )];
    let uef = match spec.gamma {
        Some(g) => {
            let p = pressure_oracle(&sys, &phi)?.value.mid();
            let u = upper_energy_check(&sys, &phi, &mu, p, g.0, spec.uef_n_max)?;
            checks.push(Check::flag("upper energy function", u.passed, format!("γ = {}, log Q = {}", u.gamma, u.log_q)));
            Some(u)
        }
        None => None,
    };
    let mut table = Table::new("ldp", &["n", "decay", "method", "slack", "margin"]);
    for (r, d) in report.rows.iter().zip(&decay) {
        table.push(vec![r.n.to_string(), num(d.value), d.method.clone(), num(r.slack), num(r.margin)]);
    }
    Ok(Outcome {
        checks,
        results: json!({ "rate": to_json(&report), "decay": to_json(&decay), "upper_energy": to_json(&uef) }),
        tables: vec![table],
    })
}

fn run_glue(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = section(&cfg.glue, "glue")?;
    let sys = cfg.system()?;
    let gs = GluingSpec::new(&sys, spec.connector_max);
    let c = match &cfg.decomposition {
        Some(_) => cfg.decomposition(&sys)?.collection(Part::Good),
        None => SegmentCollection::All,
    };
    let report = specification_check(&sys, &c, spec.delta.0, &gs, spec.k_max, spec.n_max)?;
    let mut checks = vec![Check::flag(
        "specification",
        report.passed,
        format!("{} tuples, max gap {} (bound {})", report.cases, report.max_gap, report.tau),
    )];
    let mut table = Table::new("glue", &["segment", "start", "gap_after"]);
    let mut explicit = json!(null);
    if !spec.segments.is_empty() {
        if spec.delta.0.m > 1 {
            return Err(CliError::config("glue.segments", "explicit segments are glued at δ = 1/2 only"));
        }
        let words = ExperimentConfig::words(&sys, "glue.segments", &spec.segments)?;
        let segs: Vec<GlueSegment> = words.iter().map(|w| GlueSegment::word(w)).collect();
        let r = glue(&sys, &segs, &gs, spec.delta.0)?;
        for (j, w) in words.iter().enumerate() {
            let gap = r.gaps.get(j).map(|g| g.to_string()).unwrap_or_default();
            table.push(vec![word_string(w), r.starts[j].to_string(), gap]);
        }
        checks.push(Check::flag("explicit gluing", r.gaps.iter().all(|&g| g <= gs.tau), format!("gaps {:?}", r.gaps)));
        explicit = to_json(&r);
    }
    Ok(Outcome { checks, results: json!({ "specification": to_json(&report), "explicit": explicit }), tables: vec![table] })
}

fn run_decompose(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = section(&cfg.decompose, "decompose")?;
    let sys = cfg.system()?;
    let rule = cfg.decomposition(&sys)?;
    let mut table = Table::new("decompose", &["word", "p", "g", "s", "valid"]);
    let mut all_valid = true;
    for w in ExperimentConfig::words(&sys, "decompose.words", &spec.words)? {
        let d = decompose_word(&rule, &w)?;
        all_valid &= d.is_valid();
        table.push(vec![word_string(&w), d.p.to_string(), d.g.to_string(), d.s.to_string(), d.is_valid().to_string()]);
    }
    let mut stats = Table::new("lengths", &["n", "words", "outside_domain", "mean_p", "mean_g", "mean_s"]);
    let mut rows = Vec::new();
    for n in 1..=spec.n_max {
        let words = sys.enumerate_words(n)?;
        let (mut out, mut p, mut g, mut s) = (0usize, 0usize, 0usize, 0usize);
        for w in &words {
            match decompose_word(&rule, w) {
                Ok(d) => {
                    all_valid &= d.is_valid();
                    p += d.p;
                    g += d.g;
                    s += d.s;
                }
                Err(_) => out += 1,
            }
        }
        let inside = (words.len() - out).max(1) as f64;
        let row = (n, words.len(), out, p as f64 / inside, g as f64 / inside, s as f64 / inside);
        stats.push(vec![n.to_string(), row.1.to_string(), out.to_string(), num(row.3), num(row.4), num(row.5)]);
        rows.push(json!({ "n": n, "words": row.1, "outside_domain": out, "mean_p": row.3, "mean_g": row.4, "mean_s": row.5 }));
    }
    let checks = vec![Check::flag("splits consistent with P/G/S", all_valid, String::new())];
    let verdict = if all_valid { Verdict::Pass } else { Verdict::Fail };
    Ok(Outcome { checks, results: json!({ "verdict": to_json(&verdict), "lengths": rows }), tables: vec![table, stats] })
}
