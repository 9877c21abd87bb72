mod common;

use common::{rng, Engine, RandProgram};
use slash::learning::grad_logpq;
use slash::solver::{enumerate_par, enumerate_solutions, topk_search, SolveOptions};
use slash::wmc::query_prob;

fn cases() -> impl Iterator<Item = (RandProgram, Vec<Vec<f64>>)> {
    (0..150u64).map(|seed| {
        let mut r = rng(1000 + seed);
        let p = RandProgram::random(&mut r, 3, 6);
        let probs = p.random_probs(&mut r);
        (p, probs)
    })
}

#[test]
fn solutions_match_brute_force() {
    for (p, probs) in cases() {
        let e = Engine::new(&p, &probs);
        let sols = enumerate_solutions(&e.gp, &e.query).unwrap();
        let mut got: Vec<Vec<usize>> = sols.iter().map(|s| e.to_oracle(&s.assignment)).collect();
        got.sort();
        assert_eq!(got, p.solutions(None), "{}\n{}", p.text(), p.query_text());
        let q = query_prob(&sols).value;
        assert!((q - p.prob(&probs)).abs() <= 1e-12, "{q} vs {}", p.prob(&probs));
    }
}

#[test]
fn parallel_enumeration_is_identical() {
    for (p, probs) in cases().take(40) {
        let e = Engine::new(&p, &probs);
        let seq = enumerate_solutions(&e.gp, &e.query).unwrap();
        let par = enumerate_par(&e.gp, &e.query, &SolveOptions::default()).unwrap();
        assert_eq!(seq, par);
    }
}

#[test]
fn rewards_are_multilinear_partials() {
    for (p, probs) in cases() {
        let e = Engine::new(&p, &probs);
        let sols = enumerate_solutions(&e.gp, &e.query).unwrap();
        let Ok(report) = grad_logpq(&sols, &e.gp) else {
            assert!(p.prob(&probs) <= 1e-12);
            continue;
        };
        for (i, &g) in e.index.iter().enumerate() {
            for j in 0..p.outcomes[i] {
                let want = p.partial(&probs, i, j);
                assert!((report.npps[g].alpha[j] - want).abs() <= 1e-10);
            }
            let total: f64 = report.npps[g].alpha.iter().sum();
            for j in 0..p.outcomes[i] {
                assert!((report.npps[g].beta[j] - (total - report.npps[g].alpha[j])).abs() <= 1e-12);
            }
        }
        assert!(report.identity_residual <= 1e-9);
    }
}

#[test]
fn topk_keeps_the_most_probable() {
    for (p, probs) in cases().take(60) {
        let e = Engine::new(&p, &probs);
        let all = enumerate_solutions(&e.gp, &e.query).unwrap();
        for k in [1, 2, 5] {
            let top = topk_search(&e.gp, &e.query, k).unwrap();
            assert_eq!(top.len(), k.min(all.len()));
            let kth = top.iter().map(|s| s.prob).fold(f64::INFINITY, f64::min);
            let dropped = all.iter().filter(|s| !top.contains(s));
            for s in dropped {
                assert!(s.prob <= kth + 1e-15);
            }
        }
        let every = topk_search(&e.gp, &e.query, all.len().max(1)).unwrap();
        assert_eq!(every, all);
    }
}
