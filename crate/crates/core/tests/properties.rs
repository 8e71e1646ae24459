use ergolab_core::decomposition::{glue, GlueSegment, GluingSpec};
use ergolab_core::equilibrium::{rpf_solve, CylinderMass, MarkovMeasure};
use ergolab_core::expansivity::conditional_entropy;
use ergolab_core::potentials::Potential;
use ergolab_core::pressure::{partition_sum, sandwich_check, SegmentCollection, Verdict};
use ergolab_core::suspension::{Q, RoofFunction, SuspensionFlow};
use ergolab_core::symbolic::{d_n, metric};
use ergolab_core::{DyadicScale, Point, ShiftSystem};
use proptest::prelude::*;

fn word(len: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..2, len)
}

fn golden_word(len: usize) -> impl Strategy<Value = Vec<u8>> {
    word(len).prop_map(|mut w| {
        for i in 1..w.len() {
            if w[i - 1] == 1 {
                w[i] = 0;
            }
        }
        w
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_is_an_ultrametric(a in word(9), b in word(9), c in word(9)) {
        let (x, y, z) = (Point::periodic(&a), Point::periodic(&b), Point::periodic(&c));
        let dxy = metric(&x, &y, 20).value;
        prop_assert_eq!(dxy, metric(&y, &x, 20).value);
        prop_assert!(dxy <= metric(&x, &z, 20).value.max(metric(&z, &y, 20).value));
        prop_assert!(dxy <= 1.0);
    }

    #[test]
    fn bowen_distance_grows_with_n(a in word(7), b in word(7), n in 1usize..10) {
        let (x, y) = (Point::periodic(&a), Point::periodic(&b));
        prop_assert!(d_n(&x, &y, n, 20).value <= d_n(&x, &y, n + 1, 20).value);
    }

    #[test]
    fn finer_scales_have_larger_sums(w0 in -1.0f64..1.0, w1 in -1.0f64..1.0, n in 1usize..8) {
        let sys = ShiftSystem::full(2).unwrap();
        let phi = Potential::symbol_weights(&sys, &[w0, w1]).unwrap();
        let all = SegmentCollection::All;
        let coarse = partition_sum(&sys, &all, &phi, DyadicScale::new(1), None, n).unwrap().log_value;
        let fine = partition_sum(&sys, &all, &phi, DyadicScale::new(2), None, n).unwrap().log_value;
        prop_assert!(coarse.upper <= fine.upper + 1e-12);
    }

    #[test]
    fn subcollections_have_smaller_sums(n in 2usize..9) {
        let sys = ShiftSystem::golden_mean();
        let phi = Potential::zero(&sys);
        let half = DyadicScale::new(1);
        let all = partition_sum(&sys, &SegmentCollection::All, &phi, half, None, n).unwrap().log_value;
        let sub = SegmentCollection::predicate("starts with 0", |w| w.first() == Some(&0));
        let part = partition_sum(&sys, &sub, &phi, half, None, n).unwrap().log_value;
        prop_assert!(part.upper <= all.upper + 1e-12);
    }

    #[test]
    fn sandwich_holds_for_depth_two(vals in prop::collection::vec(-2.0f64..2.0, 4), n in 1usize..8) {
        let sys = ShiftSystem::full(2).unwrap();
        let phi = Potential::from_fn(&sys, 2, |w| vals[(w[0] * 2 + w[1]) as usize]).unwrap();
        let r = sandwich_check(&sys, &SegmentCollection::All, &phi, DyadicScale::new(2), DyadicScale::new(1), n).unwrap();
        prop_assert_eq!(r.verdict(), Verdict::Pass);
    }

    #[test]
    fn rpf_measure_is_an_equilibrium(vals in prop::collection::vec(-2.0f64..2.0, 4)) {
        let sys = ShiftSystem::full(2).unwrap();
        let phi = Potential::from_fn(&sys, 2, |w| vals[(w[0] * 2 + w[1]) as usize]).unwrap();
        let sol = rpf_solve(&sys, &phi).unwrap();
        let (stat, rows) = sol.measure.defects();
        prop_assert!(stat < 1e-10 && rows < 1e-10);
        let free = sol.measure.entropy() + sol.measure.integral(&sys, &phi).unwrap();
        prop_assert!((free - sol.pressure).abs() < 1e-9);
    }

    #[test]
    fn variational_inequality_for_bernoulli(p in 0.01f64..0.99, w1 in -2.0f64..2.0) {
        let sys = ShiftSystem::full(2).unwrap();
        let phi = Potential::symbol_weights(&sys, &[0.0, w1]).unwrap();
        let pressure = rpf_solve(&sys, &phi).unwrap().pressure;
        let mu = MarkovMeasure::bernoulli(&[1.0 - p, p]).unwrap();
        prop_assert!(mu.entropy() + mu.integral(&sys, &phi).unwrap() <= pressure + 1e-12);
    }

    #[test]
    fn chain_rule(p in 0.05f64..0.95, n in 1usize..6, a in 1usize..3, b in 1usize..4) {
        let sys = ShiftSystem::full(2).unwrap();
        let mu = MarkovMeasure::bernoulli(&[1.0 - p, p]).unwrap();
        let c = conditional_entropy(&sys, &mu, a, b, n).unwrap();
        prop_assert!(c.chain_defect < 1e-12);
        prop_assert!(c.h_b_given_a >= -1e-15);
    }

    #[test]
    fn glued_points_shadow_segments(segs in prop::collection::vec(golden_word(5), 1..4)) {
        let sys = ShiftSystem::golden_mean();
        let spec = GluingSpec::new(&sys, 4);
        let pieces: Vec<GlueSegment> = segs.iter().map(|w| GlueSegment::word(w)).collect();
        let r = glue(&sys, &pieces, &spec, DyadicScale::new(1)).unwrap();
        for (s, start) in segs.iter().zip(&r.starts) {
            let seen = r.y.shift(*start).segment(s.len()).unwrap();
            prop_assert_eq!(&seen, s);
        }
        prop_assert!(r.gaps.iter().all(|&g| g <= spec.tau));
    }

    #[test]
    fn markov_masses_are_consistent(w in golden_word(6)) {
        let sys = ShiftSystem::golden_mean();
        let m = rpf_solve(&sys, &Potential::zero(&sys)).unwrap().measure;
        let whole = m.mass(&w).unwrap();
        let split: f64 = (0..2u8).map(|a| { let mut v = w.clone(); v.push(a); m.mass(&v).unwrap() }).sum();
        prop_assert!((whole - split).abs() < 1e-14);
    }

    #[test]
    fn flow_group_law(block in word(6), h in 0i64..8, a in -30i64..30, b in -30i64..30, d in 1i64..5) {
        let base = ShiftSystem::full(2).unwrap();
        let f = SuspensionFlow::new(base, RoofFunction::symbols(&[Q::new(1, 1), Q::new(3, 2)]).unwrap()).unwrap();
        let x = Point::periodic(&block);
        let p = f.point(x, Q::new(h, 8)).unwrap();
        let (s, t) = (Q::new(a, d), Q::new(b, d + 1));
        let lhs = f.flow(&f.flow(&p, s).unwrap(), t).unwrap();
        let rhs = f.flow(&p, s + t).unwrap();
        prop_assert_eq!(lhs.height, rhs.height);
        prop_assert_eq!(lhs.base.origin, rhs.base.origin);
    }
}
