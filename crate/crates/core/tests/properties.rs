mod common;

use proptest::prelude::*;

use common::{nested_masks, rng, Engine, RandProgram};
use slash::lang::parse_program;
use slash::same::{apply_masks, covered_mass, same_prune, SameRule};
use slash::solver::enumerate_solutions;
use slash::wmc::query_prob;

fn distribution(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 1..=max).prop_filter_map("positive mass", |w| {
        let s: f64 = w.iter().sum();
        (s > 1e-6).then(|| w.iter().map(|x| x / s).collect())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn masking_is_monotone(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = RandProgram::random(&mut r, 3, 5);
        let probs = p.random_probs(&mut r);
        let e = Engine::new(&p, &probs);
        let (outer, inner) = nested_masks(&mut r, &p.outcomes);
        let big = enumerate_solutions(&apply_masks(&e.gp, &e.masks(&outer)).unwrap(), &e.query).unwrap();
        let small = enumerate_solutions(&apply_masks(&e.gp, &e.masks(&inner)).unwrap(), &e.query).unwrap();
        for s in &small {
            prop_assert!(big.iter().any(|b| b.assignment == s.assignment));
        }
        let mut want = p.solutions(Some(&inner));
        want.sort();
        let mut got: Vec<Vec<usize>> = small.iter().map(|s| e.to_oracle(&s.assignment)).collect();
        got.sort();
        prop_assert_eq!(got, want);
    }
}

proptest! {
    #[test]
    fn cover_mask_is_minimal_and_sufficient(p in distribution(12), t in 0.01f64..=1.0) {
        let mask = same_prune(&p, t, SameRule::Cover);
        let mass = covered_mass(&p, &mask);
        prop_assert!(mass >= t - 1e-9);
        let best = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(p.iter().zip(&mask).any(|(&v, &m)| m && v == best));
        // every kept outcome is at least as likely as every dropped one
        let min_kept = p.iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| *v).fold(f64::INFINITY, f64::min);
        prop_assert!(p.iter().zip(&mask).filter(|(_, &m)| !m).all(|(v, _)| *v < min_kept));
        // dropping the least likely kept outcomes (all ties at once) falls short
        if mask.iter().any(|&m| !m) {
            prop_assert!(mass - p.iter().zip(&mask).filter(|(v, &m)| m && **v == min_kept).map(|(v, _)| v).sum::<f64>() < t + 1e-9);
        }
    }

    #[test]
    fn threshold_nesting(p in distribution(12), a in 0.01f64..=1.0, b in 0.01f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let small = same_prune(&p, lo, SameRule::Cover);
        let large = same_prune(&p, hi, SameRule::Cover);
        prop_assert!(small.iter().zip(&large).all(|(s, l)| !s || *l));
    }

    #[test]
    fn leq_keeps_at_least_one(p in distribution(12), t in 0.0f64..=1.0) {
        let mask = same_prune(&p, t, SameRule::Leq);
        prop_assert!(mask.iter().any(|&m| m));
    }

    #[test]
    fn canonical_text_round_trips(seed in any::<u64>()) {
        let p = RandProgram::random(&mut rng(seed), 3, 5);
        let prog = parse_program(&p.text()).unwrap();
        let printed = prog.to_string();
        prop_assert_eq!(parse_program(&printed).unwrap(), prog);
    }

    #[test]
    fn query_probability_is_a_probability(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = RandProgram::random(&mut r, 3, 5);
        let e = Engine::new(&p, &p.random_probs(&mut r));
        let q = query_prob(&enumerate_solutions(&e.gp, &e.query).unwrap()).value;
        prop_assert!((0.0..=1.0 + 1e-12).contains(&q));
    }
}
