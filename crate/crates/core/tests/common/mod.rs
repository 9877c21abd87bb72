//! Random stratified programs and a brute-force reference evaluator that
//! never touches the grounder or the solver.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slash::ground::{ground, GroundConstraint, GroundProgram};
use slash::lang::{parse_program, parse_query};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lit {
    Atom { id: usize, neg: bool },
    Npp { npp: usize, outcome: usize, neg: bool },
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub head: usize,
    pub body: Vec<Lit>,
}

/// Propositional atoms `p0..pk`, NPPs `c0(x)..` with outcomes `0..n`.
/// Atom `i` lives on stratum `level[i]`; a rule may use positive atoms of its
/// head's stratum or below and negated atoms strictly below it.
#[derive(Debug, Clone)]
pub struct RandProgram {
    pub outcomes: Vec<usize>,
    pub level: Vec<usize>,
    pub facts: Vec<usize>,
    pub rules: Vec<Rule>,
    pub constraints: Vec<Vec<Lit>>,
    pub query: Vec<Lit>,
}

fn lit_text(l: &Lit) -> String {
    match *l {
        Lit::Atom { id, neg } => format!("{}p{id}", if neg { "not " } else { "" }),
        Lit::Npp { npp, outcome, neg } => format!("{}c{npp}(x,{outcome})", if neg { "not " } else { "" }),
    }
}

fn body_text(body: &[Lit]) -> String {
    body.iter().map(lit_text).collect::<Vec<_>>().join(", ")
}

impl RandProgram {
    pub fn random(rng: &mut impl Rng, max_npps: usize, max_outcomes: usize) -> Self {
        let outcomes: Vec<usize> = (0..rng.gen_range(1..=max_npps)).map(|_| rng.gen_range(2..=max_outcomes)).collect();
        let atoms = rng.gen_range(2..8);
        let level: Vec<usize> = (0..atoms).map(|_| rng.gen_range(0..3)).collect();
        let facts = (0..atoms).filter(|_| rng.gen_bool(0.1)).collect();
        let mut p = RandProgram {
            outcomes,
            level,
            facts,
            rules: Vec::new(),
            constraints: Vec::new(),
            query: Vec::new(),
        };
        for _ in 0..rng.gen_range(1..12) {
            let head = rng.gen_range(0..atoms);
            let len = rng.gen_range(1..4);
            let body = (0..len).filter_map(|_| p.random_lit(rng, Some(p.level[head]))).collect::<Vec<_>>();
            if !body.is_empty() {
                p.rules.push(Rule { head, body });
            }
        }
        for _ in 0..rng.gen_range(0..2) {
            let c: Vec<Lit> = (0..rng.gen_range(1..3)).filter_map(|_| p.random_lit(rng, None)).collect();
            if !c.is_empty() {
                p.constraints.push(c);
            }
        }
        while p.query.is_empty() {
            p.query = (0..rng.gen_range(1..3)).filter_map(|_| p.random_lit(rng, None)).collect();
        }
        p
    }

    fn random_lit(&self, rng: &mut impl Rng, head_level: Option<usize>) -> Option<Lit> {
        let neg = rng.gen_bool(0.3);
        if rng.gen_bool(0.5) {
            let npp = rng.gen_range(0..self.outcomes.len());
            return Some(Lit::Npp {
                npp,
                outcome: rng.gen_range(0..self.outcomes[npp]),
                neg,
            });
        }
        let id = rng.gen_range(0..self.level.len());
        match head_level {
            Some(h) if neg && self.level[id] >= h => None,
            Some(h) if self.level[id] > h => None,
            _ => Some(Lit::Atom { id, neg }),
        }
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        for (i, n) in self.outcomes.iter().enumerate() {
            let vals: Vec<String> = (0..*n).map(|v| v.to_string()).collect();
            s.push_str(&format!("npp(c{i}(x),[{}]).\n", vals.join(",")));
        }
        for f in &self.facts {
            s.push_str(&format!("p{f}.\n"));
        }
        for r in &self.rules {
            s.push_str(&format!("p{} :- {}.\n", r.head, body_text(&r.body)));
        }
        for c in &self.constraints {
            s.push_str(&format!(":- {}.\n", body_text(c)));
        }
        s
    }

    /// The query as a constraint text `:- body.`
    pub fn query_text(&self) -> String {
        format!(":- {}.", body_text(&self.query))
    }

    fn holds(&self, l: &Lit, model: &[bool], assignment: &[usize]) -> bool {
        match *l {
            Lit::Atom { id, neg } => model[id] != neg,
            Lit::Npp { npp, outcome, neg } => (assignment[npp] == outcome) != neg,
        }
    }

    /// Stable model under an outcome assignment: naive fixpoint per stratum.
    pub fn model(&self, assignment: &[usize]) -> Vec<bool> {
        let mut m = vec![false; self.level.len()];
        for &f in &self.facts {
            m[f] = true;
        }
        for lvl in 0..3 {
            loop {
                let mut changed = false;
                for r in self.rules.iter().filter(|r| self.level[r.head] == lvl) {
                    if !m[r.head] && r.body.iter().all(|l| self.holds(l, &m, assignment)) {
                        m[r.head] = true;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
        }
        m
    }

    pub fn assignments(&self) -> Vec<Vec<usize>> {
        let mut all = vec![Vec::new()];
        for &n in &self.outcomes {
            all = all
                .into_iter()
                .flat_map(|a| {
                    (0..n).map(move |v| {
                        let mut b = a.clone();
                        b.push(v);
                        b
                    })
                })
                .collect();
        }
        all
    }

    /// Assignments whose model violates no program constraint and no query
    /// constraint, restricted to the active outcomes, in lexicographic order.
    pub fn solutions(&self, active: Option<&[Vec<bool>]>) -> Vec<Vec<usize>> {
        self.assignments()
            .into_iter()
            .filter(|a| active.is_none_or(|m| a.iter().zip(m).all(|(v, mask)| mask[*v])))
            .filter(|a| {
                let m = self.model(a);
                self.constraints
                    .iter()
                    .chain(std::iter::once(&self.query))
                    .all(|c| !c.iter().all(|l| self.holds(l, &m, a)))
            })
            .collect()
    }

    /// `P(Q)` as a sum of products over satisfying assignments.
    pub fn prob(&self, probs: &[Vec<f64>]) -> f64 {
        self.solutions(None)
            .iter()
            .map(|a| a.iter().enumerate().map(|(i, &v)| probs[i][v]).product::<f64>())
            .sum()
    }

    /// `∂P(Q)/∂p_{i,j}`: `P(Q)` is multilinear, so the derivative is `P(Q)`
    /// with NPP `i` replaced by the indicator of outcome `j`.
    pub fn partial(&self, probs: &[Vec<f64>], i: usize, j: usize) -> f64 {
        let mut p = probs.to_vec();
        p[i] = (0..self.outcomes[i]).map(|k| (k == j) as u8 as f64).collect();
        self.prob(&p)
    }

    pub fn random_probs(&self, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        self.outcomes
            .iter()
            .map(|&n| {
                let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
                let s: f64 = w.iter().sum();
                w.into_iter().map(|x| x / s).collect()
            })
            .collect()
    }
}

/// Engine-side view of a random program: ground program with the given
/// probabilities (indexed like the oracle's NPPs) and the ground query.
pub struct Engine {
    pub gp: GroundProgram,
    pub query: Vec<GroundConstraint>,
    /// Ground NPP index of oracle NPP `i`.
    pub index: Vec<usize>,
}

impl Engine {
    pub fn new(p: &RandProgram, probs: &[Vec<f64>]) -> Self {
        let prog = parse_program(&p.text()).unwrap_or_else(|e| panic!("{e}\n{}", p.text()));
        let mut gp = ground(&prog, None).unwrap_or_else(|e| panic!("{e}\n{}", p.text()));
        let index: Vec<usize> = (0..p.outcomes.len())
            .map(|i| gp.find_npp(&format!("c{i}"), "x").expect("npp is ground"))
            .collect();
        for (i, &g) in index.iter().enumerate() {
            gp.npps[g].probs = probs[i].clone();
        }
        let query = gp.ground_query(&parse_query(&p.query_text()).unwrap()).unwrap();
        Engine { gp, query, index }
    }

    /// Engine assignment translated to oracle NPP order.
    pub fn to_oracle(&self, assignment: &[usize]) -> Vec<usize> {
        self.index.iter().map(|&g| assignment[g]).collect()
    }

    /// Oracle-ordered masks translated to ground NPP order.
    pub fn masks(&self, oracle_masks: &[Vec<bool>]) -> Vec<Vec<bool>> {
        let mut out = vec![Vec::new(); self.index.len()];
        for (i, &g) in self.index.iter().enumerate() {
            out[g] = oracle_masks[i].clone();
        }
        out
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random nested masks `outer ⊇ inner`, each keeping at least one outcome.
pub fn nested_masks(rng: &mut impl Rng, outcomes: &[usize]) -> (Vec<Vec<bool>>, Vec<Vec<bool>>) {
    outcomes
        .iter()
        .map(|&n| {
            let keep = rng.gen_range(0..n);
            let outer: Vec<bool> = (0..n).map(|j| j == keep || rng.gen_bool(0.6)).collect();
            let inner: Vec<bool> = (0..n).map(|j| j == keep || (outer[j] && rng.gen_bool(0.5))).collect();
            (outer, inner)
        })
        .unzip()
}
