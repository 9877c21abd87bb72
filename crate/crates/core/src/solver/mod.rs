//! Potential-solution enumeration for stratified ground programs.
//!
//! Every NPP outcome assignment (restricted to active outcomes) is visited
//! depth-first in canonical order; the rest of the program has a unique
//! stable model per assignment, computed stratum by stratum.

mod plan;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering as AtomicOrdering};

use rayon::prelude::*;

use crate::ground::{AtomId, GroundConstraint, GroundProgram};
use crate::wmc::assignment_prob;
use plan::{Body, ConstraintPlan};
pub use plan::RulePlan;

pub const DEFAULT_SOLUTION_BUDGET: usize = 1_000_000;

/// Chosen outcome index per ground NPP, in NPP order.
pub type NppAssignment = Vec<usize>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("query `{query}` has more than {budget} potential solutions")]
    Budget { query: String, budget: usize },
    #[error("top-k selection needs k >= 1")]
    ZeroK,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub budget: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            budget: DEFAULT_SOLUTION_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSolution {
    pub assignment: NppAssignment,
    /// Atoms of the stable model that are not facts: the chosen NPP atoms and
    /// everything derived from them, sorted by id.
    pub atoms: Vec<AtomId>,
    pub prob: f64,
}

impl PotentialSolution {
    /// The full stable model, facts included, sorted by id.
    pub fn model(&self, gp: &GroundProgram) -> Vec<AtomId> {
        let mut m: Vec<AtomId> = gp.facts().iter().chain(&self.atoms).copied().collect();
        m.sort_unstable();
        m
    }

    /// Sum of log-probabilities of the chosen outcomes; the top-k ranking key.
    pub fn score(&self, gp: &GroundProgram) -> f64 {
        score(gp, &self.assignment)
    }

    pub fn describe(&self, gp: &GroundProgram) -> String {
        gp.npps
            .iter()
            .zip(&self.assignment)
            .map(|(n, &j)| format!("{n}={}", n.outcomes[j]))
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn score(gp: &GroundProgram, assignment: &[usize]) -> f64 {
    gp.npps
        .iter()
        .zip(assignment)
        .map(|(n, &j)| n.probs[j].ln())
        .sum()
}

fn plan(gp: &GroundProgram) -> &RulePlan {
    gp.plan.get_or_init(|| RulePlan::build(gp))
}

/// Per-search scratch: truth and rule counters are stamped so that nothing
/// needs clearing between leaves.
struct Scratch {
    stamp: u32,
    truth: Vec<u32>,
    counter_stamp: Vec<u32>,
    counter: Vec<u32>,
    queue: Vec<AtomId>,
    derived: Vec<AtomId>,
    active: Vec<u32>,
}

impl Scratch {
    fn new(atoms: usize, rules: usize) -> Self {
        Scratch {
            stamp: 0,
            truth: vec![0; atoms],
            counter_stamp: vec![0; rules],
            counter: vec![0; rules],
            queue: Vec::new(),
            derived: Vec::new(),
            active: Vec::new(),
        }
    }

    fn next_stamp(&mut self) {
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.truth.fill(0);
            self.counter_stamp.fill(0);
            self.stamp = 1;
        }
    }

    #[inline]
    fn is_true(&self, a: AtomId) -> bool {
        self.truth[a as usize] == self.stamp
    }
}

fn body_holds(body: &Body, sc: &Scratch, assignment: &[usize]) -> bool {
    body.conds.iter().all(|c| c.holds(assignment))
        && body.pos.iter().all(|&a| sc.is_true(a))
        && !body.neg.iter().any(|&a| sc.is_true(a))
}

/// Least model of the activated rules, stratum by stratum. Leaves the
/// derived atoms (in derivation order) in `sc.derived`.
fn fixpoint(plan: &RulePlan, sc: &mut Scratch, assignment: &[usize], rules: &[u32]) {
    sc.next_stamp();
    sc.derived.clear();
    let mut start = 0;
    while start < rules.len() {
        let stratum = plan.rules[rules[start] as usize].stratum;
        let mut end = start;
        while end < rules.len() && plan.rules[rules[end] as usize].stratum == stratum {
            end += 1;
        }
        // negative literals only mention lower strata or NPP atoms, so they
        // are decided here; positive ones are counted down as atoms appear
        sc.queue.clear();
        for &r in &rules[start..end] {
            let rule = &plan.rules[r as usize];
            let b = &rule.body;
            if !b.conds.iter().all(|c| c.holds(assignment)) || b.neg.iter().any(|&a| sc.is_true(a)) {
                continue;
            }
            let missing = b.pos.iter().filter(|&&a| !sc.is_true(a)).count() as u32;
            sc.counter_stamp[r as usize] = sc.stamp;
            sc.counter[r as usize] = missing;
            if missing == 0 {
                sc.queue.push(rule.head);
            }
        }
        let mut qi = 0;
        // heads are marked when popped so that counters set above stay exact
        while qi < sc.queue.len() {
            let a = sc.queue[qi];
            qi += 1;
            if sc.is_true(a) {
                continue;
            }
            sc.truth[a as usize] = sc.stamp;
            sc.derived.push(a);
            for &r in &plan.watch[a as usize] {
                let ri = r as usize;
                if sc.counter_stamp[ri] != sc.stamp || plan.rules[ri].stratum != stratum {
                    continue;
                }
                sc.counter[ri] -= 1;
                if sc.counter[ri] == 0 {
                    sc.queue.push(plan.rules[ri].head);
                }
            }
        }
        start = end;
    }
}

/// The unique stable model of `gp` with the NPP atoms fixed by `assignment`,
/// facts included, sorted by id.
pub fn fixpoint_eval(gp: &GroundProgram, assignment: &[usize]) -> Vec<AtomId> {
    assert_eq!(assignment.len(), gp.npps.len(), "one outcome per NPP instance");
    let plan = plan(gp);
    let mut sc = Scratch::new(gp.atoms().len(), plan.rules.len());
    let mut rules: Vec<u32> = (0..plan.rules.len() as u32).collect();
    rules.sort_by_key(|&r| plan.rules[r as usize].stratum);
    fixpoint(plan, &mut sc, assignment, &rules);
    let mut model: Vec<AtomId> = gp.facts().to_vec();
    model.extend(gp.npps.iter().zip(assignment).map(|(n, &j)| n.atom_ids[j]));
    model.extend_from_slice(&sc.derived);
    model.sort_unstable();
    model
}

trait Visitor {
    /// Called after an outcome is fixed at `depth`; `false` prunes the subtree.
    fn enter(&mut self, _depth: usize, _assignment: &[usize]) -> bool {
        true
    }
    fn leaf(&mut self, assignment: &[usize], atoms: Vec<AtomId>) -> Result<(), SolveError>;
    fn stopped(&self) -> bool {
        false
    }
}

struct Search<'a, V> {
    gp: &'a GroundProgram,
    plan: &'a RulePlan,
    constraints: &'a ConstraintPlan,
    sc: Scratch,
    assignment: Vec<usize>,
    activated: Vec<u32>,
    live: Vec<Vec<u32>>,
    visitor: V,
}

impl<'a, V: Visitor> Search<'a, V> {
    fn new(gp: &'a GroundProgram, constraints: &'a ConstraintPlan, visitor: V) -> Self {
        let plan = plan(gp);
        let n = gp.npps.len();
        let mut live = vec![Vec::new(); n + 1];
        live[0].push(0);
        Search {
            gp,
            plan,
            constraints,
            sc: Scratch::new(gp.atoms().len(), plan.rules.len()),
            assignment: vec![0; n],
            activated: Vec::new(),
            live,
            visitor,
        }
    }

    /// Explores every assignment, or only those starting with `first`.
    fn run(&mut self, first: Option<usize>) -> Result<(), SolveError> {
        if self.constraints.always_violated {
            return Ok(());
        }
        self.descend(0, first)
    }

    fn descend(&mut self, depth: usize, only: Option<usize>) -> Result<(), SolveError> {
        if depth == self.gp.npps.len() {
            return self.leaf();
        }
        let npp = &self.gp.npps[depth];
        for j in 0..npp.outcomes.len() {
            if !npp.active[j] || only.is_some_and(|o| o != j) {
                continue;
            }
            if self.visitor.stopped() {
                return Ok(());
            }
            self.assignment[depth] = j;
            let prefix = &self.assignment[..=depth];
            if self.constraints.early[depth]
                .iter()
                .any(|conds| conds.iter().all(|c| c.holds(prefix)))
            {
                continue;
            }
            if !self.visitor.enter(depth, prefix) {
                continue;
            }
            let mark = self.activated.len();
            self.advance(depth, j);
            self.descend(depth + 1, None)?;
            self.activated.truncate(mark);
        }
        Ok(())
    }

    /// Moves trie cursors across the edge `(depth, j)`.
    fn advance(&mut self, depth: usize, j: usize) {
        let (cur, next) = self.live.split_at_mut(depth + 1);
        let (cur, next) = (&cur[depth], &mut next[0]);
        next.clear();
        let edge = (depth as u32, j as u32);
        for &node in cur {
            let n = &self.plan.trie[node as usize];
            if n.max_next.is_some_and(|m| m as usize > depth) {
                next.push(node);
            }
            if let Some(&child) = n.children.get(&edge) {
                let c = &self.plan.trie[child as usize];
                self.activated.extend_from_slice(&c.rules);
                if c.max_next.is_some() {
                    next.push(child);
                }
            }
        }
    }

    fn leaf(&mut self) -> Result<(), SolveError> {
        let mut active = std::mem::take(&mut self.sc.active);
        active.clear();
        active.extend_from_slice(&self.plan.base);
        active.extend_from_slice(&self.activated);
        // rule ids follow the ground program's stratum order
        active.sort_unstable();
        fixpoint(self.plan, &mut self.sc, &self.assignment, &active);
        self.sc.active = active;
        for c in &self.constraints.late {
            if body_holds(c, &self.sc, &self.assignment) {
                return Ok(());
            }
        }
        let mut atoms: Vec<AtomId> = self
            .gp
            .npps
            .iter()
            .zip(&self.assignment)
            .map(|(n, &j)| n.atom_ids[j])
            .collect();
        atoms.extend_from_slice(&self.sc.derived);
        atoms.sort_unstable();
        self.visitor.leaf(&self.assignment, atoms)
    }
}

fn describe_query(gp: &GroundProgram, query: &[GroundConstraint]) -> String {
    let lits: Vec<String> = query
        .iter()
        .flat_map(|c| {
            c.pos
                .iter()
                .map(|&a| gp.atom_text(a))
                .chain(c.neg.iter().map(|&a| format!("not {}", gp.atom_text(a))))
        })
        .collect();
    format!(":- {}.", lits.join(", "))
}

struct Collect<'a> {
    gp: &'a GroundProgram,
    out: Vec<PotentialSolution>,
    budget: usize,
    /// Solutions found across all workers of one enumeration.
    shared: Option<(&'a AtomicUsize, &'a AtomicBool)>,
    query: &'a [GroundConstraint],
}

impl Visitor for Collect<'_> {
    fn leaf(&mut self, assignment: &[usize], atoms: Vec<AtomId>) -> Result<(), SolveError> {
        let count = match self.shared {
            Some((n, _)) => n.fetch_add(1, AtomicOrdering::Relaxed) + 1,
            None => self.out.len() + 1,
        };
        if count > self.budget {
            if let Some((_, stop)) = self.shared {
                stop.store(true, AtomicOrdering::Relaxed);
            }
            return Err(SolveError::Budget {
                query: describe_query(self.gp, self.query),
                budget: self.budget,
            });
        }
        self.out.push(PotentialSolution {
            assignment: assignment.to_vec(),
            atoms,
            prob: assignment_prob(self.gp, assignment),
        });
        Ok(())
    }

    fn stopped(&self) -> bool {
        self.shared.is_some_and(|(_, s)| s.load(AtomicOrdering::Relaxed))
    }
}

fn constraint_plan(gp: &GroundProgram, query: &[GroundConstraint]) -> ConstraintPlan {
    ConstraintPlan::build(gp, gp.constraints.iter().chain(query))
}

/// All potential solutions of `gp` satisfying its constraints and `query`,
/// in canonical (lexicographic assignment) order, with probabilities filled.
pub fn enumerate_solutions(
    gp: &GroundProgram,
    query: &[GroundConstraint],
) -> Result<Vec<PotentialSolution>, SolveError> {
    enumerate_with(gp, query, &SolveOptions::default())
}

pub fn enumerate_with(
    gp: &GroundProgram,
    query: &[GroundConstraint],
    opts: &SolveOptions,
) -> Result<Vec<PotentialSolution>, SolveError> {
    let constraints = constraint_plan(gp, query);
    let mut search = Search::new(
        gp,
        &constraints,
        Collect {
            gp,
            out: Vec::new(),
            budget: opts.budget,
            shared: None,
            query,
        },
    );
    search.run(None)?;
    Ok(search.visitor.out)
}

/// Like [`enumerate_with`], with the first NPP's outcomes split across the
/// current rayon pool. Output order and content match the sequential version.
pub fn enumerate_par(
    gp: &GroundProgram,
    query: &[GroundConstraint],
    opts: &SolveOptions,
) -> Result<Vec<PotentialSolution>, SolveError> {
    if gp.npps.is_empty() {
        return enumerate_with(gp, query, opts);
    }
    let constraints = constraint_plan(gp, query);
    let found = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let parts: Vec<Result<Vec<PotentialSolution>, SolveError>> = (0..gp.npps[0].outcomes.len())
        .into_par_iter()
        .filter(|&j| gp.npps[0].active[j])
        .map(|j| {
            let mut search = Search::new(
                gp,
                &constraints,
                Collect {
                    gp,
                    out: Vec::new(),
                    budget: opts.budget,
                    shared: Some((&found, &stop)),
                    query,
                },
            );
            search.run(Some(j))?;
            Ok(search.visitor.out)
        })
        .collect();
    let mut out = Vec::new();
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct Ranked {
    score: f64,
    assignment: Vec<usize>,
    atoms: Vec<AtomId>,
}

impl Ranked {
    /// Greater is better: higher score, then earlier canonical position.
    fn rank(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.assignment.cmp(&self.assignment))
    }
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.rank(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    // reversed so that the max-heap keeps the worst retained solution on top
    fn cmp(&self, other: &Self) -> Ordering {
        other.rank(self)
    }
}

struct TopK<'a> {
    gp: &'a GroundProgram,
    k: usize,
    heap: BinaryHeap<Ranked>,
    /// Best achievable log-probability of NPPs `d..`, per depth.
    suffix_best: Vec<f64>,
    prefix: Vec<f64>,
}

impl Visitor for TopK<'_> {
    fn enter(&mut self, depth: usize, assignment: &[usize]) -> bool {
        let p = self.gp.npps[depth].probs[assignment[depth]].ln();
        let before = if depth == 0 { 0.0 } else { self.prefix[depth - 1] };
        self.prefix[depth] = before + p;
        if self.heap.len() < self.k {
            return true;
        }
        let worst = self.heap.peek().map(|r| r.score).unwrap_or(f64::NEG_INFINITY);
        let bound = self.prefix[depth] + self.suffix_best[depth + 1];
        // slack keeps rounding differences from pruning an exact tie
        bound >= worst - 1e-9 * (1.0 + worst.abs())
    }

    fn leaf(&mut self, assignment: &[usize], atoms: Vec<AtomId>) -> Result<(), SolveError> {
        let cand = Ranked {
            score: score(self.gp, assignment),
            assignment: assignment.to_vec(),
            atoms,
        };
        if self.heap.len() < self.k {
            self.heap.push(cand);
        } else if let Some(worst) = self.heap.peek() {
            if cand.rank(worst) == Ordering::Greater {
                self.heap.pop();
                self.heap.push(cand);
            }
        }
        Ok(())
    }
}

/// The `k` most probable potential solutions, found by branch-and-bound on
/// the summed log-probabilities and returned in canonical order.
pub fn topk_search(
    gp: &GroundProgram,
    query: &[GroundConstraint],
    k: usize,
) -> Result<Vec<PotentialSolution>, SolveError> {
    if k == 0 {
        return Err(SolveError::ZeroK);
    }
    let n = gp.npps.len();
    let mut suffix_best = vec![0.0; n + 1];
    for d in (0..n).rev() {
        let npp = &gp.npps[d];
        let best = (0..npp.outcomes.len())
            .filter(|&j| npp.active[j])
            .map(|j| npp.probs[j].ln())
            .fold(f64::NEG_INFINITY, f64::max);
        suffix_best[d] = suffix_best[d + 1] + best;
    }
    let constraints = constraint_plan(gp, query);
    let mut search = Search::new(
        gp,
        &constraints,
        TopK {
            gp,
            k,
            heap: BinaryHeap::new(),
            suffix_best,
            prefix: vec![0.0; n],
        },
    );
    search.run(None)?;
    let mut kept: Vec<Ranked> = search.visitor.heap.into_vec();
    kept.sort_by(|a, b| a.assignment.cmp(&b.assignment));
    Ok(kept
        .into_iter()
        .map(|r| PotentialSolution {
            prob: assignment_prob(gp, &r.assignment),
            assignment: r.assignment,
            atoms: r.atoms,
        })
        .collect())
}

/// Keeps the `k` highest-scoring solutions of an already enumerated list;
/// ties go to the canonically earlier assignment. Output is in canonical order.
pub fn topk_solutions(
    gp: &GroundProgram,
    solutions: Vec<PotentialSolution>,
    k: usize,
) -> Result<Vec<PotentialSolution>, SolveError> {
    if k == 0 {
        return Err(SolveError::ZeroK);
    }
    let mut ranked: Vec<(f64, PotentialSolution)> = solutions.into_iter().map(|s| (s.score(gp), s)).collect();
    ranked.sort_by(|(sa, a), (sb, b)| sb.total_cmp(sa).then_with(|| a.assignment.cmp(&b.assignment)));
    ranked.truncate(k);
    let mut out: Vec<PotentialSolution> = ranked.into_iter().map(|(_, s)| s).collect();
    out.sort_by(|a, b| a.assignment.cmp(&b.assignment));
    Ok(out)
}
