//! Solver-side view of a ground program: rules split into their NPP
//! conditions and ordinary body atoms, indexed for incremental activation.

use std::collections::HashMap;

use crate::ground::{AtomId, GroundConstraint, GroundProgram};

/// A condition on the NPP assignment: instance `npp` chose (or did not
/// choose) outcome `outcome`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) struct Cond {
    pub npp: u32,
    pub outcome: u32,
    pub chosen: bool,
}

impl Cond {
    #[inline]
    pub fn holds(self, assignment: &[usize]) -> bool {
        (assignment[self.npp as usize] == self.outcome as usize) == self.chosen
    }
}

/// A rule or constraint body split by atom kind.
#[derive(Debug, Clone, Default)]
pub(crate) struct Body {
    pub pos: Vec<AtomId>,
    pub neg: Vec<AtomId>,
    /// Sorted by NPP index.
    pub conds: Vec<Cond>,
}

impl Body {
    /// `None` if the NPP conditions contradict each other (two different
    /// outcomes required of one instance, or one both required and excluded).
    pub fn split(gp: &GroundProgram, pos: &[AtomId], neg: &[AtomId]) -> Option<Body> {
        let mut body = Body::default();
        for (ids, chosen) in [(pos, true), (neg, false)] {
            for &a in ids {
                match gp.npp_atom(a) {
                    Some((i, j)) => body.conds.push(Cond {
                        npp: i as u32,
                        outcome: j as u32,
                        chosen,
                    }),
                    None if chosen => body.pos.push(a),
                    None => body.neg.push(a),
                }
            }
        }
        body.conds.sort_unstable();
        body.conds.dedup();
        for group in body.conds.chunk_by(|a, b| a.npp == b.npp) {
            let mut required = group.iter().filter(|c| c.chosen);
            if let Some(r) = required.next() {
                if required.next().is_some() || group.iter().any(|c| !c.chosen && c.outcome == r.outcome) {
                    return None;
                }
            }
        }
        Some(body)
    }

    pub fn required(&self) -> impl Iterator<Item = Cond> + '_ {
        self.conds.iter().copied().filter(|c| c.chosen)
    }

    /// Largest NPP index mentioned, if any.
    pub fn last_npp(&self) -> Option<usize> {
        self.conds.last().map(|c| c.npp as usize)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct PlanRule {
    pub head: AtomId,
    pub stratum: usize,
    pub body: Body,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct TrieNode {
    pub children: HashMap<(u32, u32), u32>,
    /// Rules whose required NPP choices are exactly the path to this node.
    pub rules: Vec<u32>,
    /// Largest NPP index on any outgoing edge; a cursor is dead once the
    /// search has passed it.
    pub max_next: Option<u32>,
}

/// Rule index built once per ground program and shared by every query
/// solved against it.
#[derive(Debug, Clone, Default)]
pub struct RulePlan {
    pub(crate) rules: Vec<PlanRule>,
    /// Rules without required NPP choices, sorted.
    pub(crate) base: Vec<u32>,
    pub(crate) trie: Vec<TrieNode>,
    /// Atom -> rules with that atom among their ordinary positive literals.
    pub(crate) watch: Vec<Vec<u32>>,
}

impl RulePlan {
    pub(crate) fn build(gp: &GroundProgram) -> RulePlan {
        let mut plan = RulePlan {
            trie: vec![TrieNode::default()],
            watch: vec![Vec::new(); gp.atoms().len()],
            ..RulePlan::default()
        };
        for (idx, r) in gp.rules().iter().enumerate() {
            let Some(body) = Body::split(gp, &r.pos, &r.neg) else {
                continue;
            };
            let id = plan.rules.len() as u32;
            for &a in &body.pos {
                plan.watch[a as usize].push(id);
            }
            let path: Vec<(u32, u32)> = body.required().map(|c| (c.npp, c.outcome)).collect();
            if path.is_empty() {
                plan.base.push(id);
            } else {
                let mut node = 0usize;
                for &edge in &path {
                    let next = match plan.trie[node].children.get(&edge) {
                        Some(&n) => n as usize,
                        None => {
                            let n = plan.trie.len();
                            plan.trie.push(TrieNode::default());
                            plan.trie[node].children.insert(edge, n as u32);
                            let m = &mut plan.trie[node].max_next;
                            *m = Some(m.map_or(edge.0, |v| v.max(edge.0)));
                            n
                        }
                    };
                    node = next;
                }
                plan.trie[node].rules.push(id);
            }
            plan.rules.push(PlanRule {
                head: r.head,
                stratum: gp.rule_stratum(idx),
                body,
            });
        }
        plan
    }
}

/// Constraints (program and query) split into those decided by the NPP
/// assignment alone, grouped by the depth at which they become decidable,
/// and those that need the model.
#[derive(Debug, Clone, Default)]
pub(crate) struct ConstraintPlan {
    pub early: Vec<Vec<Vec<Cond>>>,
    pub late: Vec<Body>,
    /// A constraint with an empty body: nothing can satisfy the program.
    pub always_violated: bool,
}

impl ConstraintPlan {
    pub fn build<'c>(gp: &GroundProgram, constraints: impl Iterator<Item = &'c GroundConstraint>) -> Self {
        let mut plan = ConstraintPlan {
            early: vec![Vec::new(); gp.npps.len()],
            ..ConstraintPlan::default()
        };
        for c in constraints {
            let Some(body) = Body::split(gp, &c.pos, &c.neg) else {
                continue;
            };
            if body.pos.is_empty() && body.neg.is_empty() {
                match body.last_npp() {
                    Some(d) => plan.early[d].push(body.conds),
                    None => plan.always_violated = true,
                }
            } else {
                plan.late.push(body);
            }
        }
        plan
    }
}
