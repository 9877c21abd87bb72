//! Grounding: instantiate variables over the finite Herbrand domain, expand
//! NPP declarations into ground choice sets and simplify against the atoms
//! that hold in every model.
//!
//! Atoms whose predicate does not depend on any NPP are decided here; the
//! ground program handed to the solver only keeps rules whose truth depends
//! on an NPP choice.

mod atoms;
mod instantiate;
mod stratify;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, OnceLock};

pub use atoms::{AtomId, AtomTable, GroundAtom, Value};
pub use stratify::DepGraph;

use crate::lang::{validate, validate_query, Constraint, NppQueryKind, NppSignatures, ParseError, Program, Rule, Term};
use instantiate::{body_keys, CRule};

pub const DEFAULT_ATOM_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GroundError {
    #[error("unsafe variable `{variable}` in `{rule}`: it must occur in a positive body literal")]
    Unsafe { rule: String, variable: String },
    #[error("negation is not stratified: cycle through negation among {}", predicates.join(", "))]
    NotStratified { predicates: Vec<String> },
    #[error("grounding `{rule}` exceeded the atom budget of {budget}")]
    AtomBudget { rule: String, budget: usize },
    #[error("the body of `{decl}` does not hold unconditionally; NPP declaration bodies must be decided at grounding time")]
    UncertainNppBody { decl: String },
    #[error(transparent)]
    Invalid(#[from] ParseError),
}

#[derive(Debug, Clone, Copy)]
pub struct GroundOptions {
    pub atom_budget: usize,
}

impl Default for GroundOptions {
    fn default() -> Self {
        GroundOptions {
            atom_budget: DEFAULT_ATOM_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundRule {
    pub head: AtomId,
    pub pos: Vec<AtomId>,
    pub neg: Vec<AtomId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundConstraint {
    pub pos: Vec<AtomId>,
    pub neg: Vec<AtomId>,
}

/// One ground NPP instance `h(x)` with its choice set `1{h(x)=v1;...;h(x)=vn}1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundNpp {
    pub name: Arc<str>,
    pub instance: Vec<Value>,
    pub outcomes: Vec<Value>,
    /// One atom per outcome, `name(instance..., v_j)`.
    pub atom_ids: Vec<AtomId>,
    /// SAME pruning state. Masked outcomes keep their probability.
    pub active: Vec<bool>,
    pub probs: Vec<f64>,
    pub kind: NppQueryKind,
}

impl GroundNpp {
    /// Data key under which query records store this instance's input:
    /// the instance terms joined by commas, e.g. `i1`.
    pub fn instance_key(&self) -> String {
        self.instance
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn num_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn outcome_index(&self, v: &Value) -> Option<usize> {
        self.outcomes.iter().position(|o| o == v)
    }
}

impl fmt::Display for GroundNpp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.instance_key())
    }
}

#[derive(Debug, Clone)]
pub struct GroundProgram {
    atoms: Arc<AtomTable>,
    certain: Arc<Vec<bool>>,
    facts: Arc<Vec<AtomId>>,
    /// Sorted by stratum of the head predicate.
    rules: Arc<Vec<GroundRule>>,
    rule_strata: Arc<Vec<usize>>,
    strata: Arc<BTreeMap<String, usize>>,
    npp_of_atom: Arc<HashMap<AtomId, (usize, usize)>>,
    signatures: Arc<NppSignatures>,
    pub constraints: Vec<GroundConstraint>,
    pub npps: Vec<GroundNpp>,
    pub(crate) plan: Arc<OnceLock<crate::solver::RulePlan>>,
}

impl PartialEq for GroundProgram {
    fn eq(&self, other: &Self) -> bool {
        self.atoms.len() == other.atoms.len()
            && self.atoms.iter().zip(other.atoms.iter()).all(|(a, b)| a == b)
            && self.certain == other.certain
            && self.rules == other.rules
            && self.constraints == other.constraints
            && self.npps == other.npps
    }
}

impl GroundProgram {
    pub fn atoms(&self) -> &AtomTable {
        &self.atoms
    }

    /// Atoms true in every model (facts and everything derivable from them
    /// without any NPP choice), in id order.
    pub fn facts(&self) -> &[AtomId] {
        &self.facts
    }

    pub fn is_certain(&self, id: AtomId) -> bool {
        self.certain[id as usize]
    }

    pub fn rules(&self) -> &[GroundRule] {
        &self.rules
    }

    pub fn rule_stratum(&self, idx: usize) -> usize {
        self.rule_strata[idx]
    }

    /// Stratum per predicate (`name/arity`) of the ground rules; NPP
    /// predicates are stratum-0 externals.
    pub fn strata(&self) -> &BTreeMap<String, usize> {
        &self.strata
    }

    /// `(npp index, outcome index)` if the atom is an NPP choice atom.
    pub fn npp_atom(&self, id: AtomId) -> Option<(usize, usize)> {
        self.npp_of_atom.get(&id).copied()
    }

    pub fn signatures(&self) -> &NppSignatures {
        &self.signatures
    }

    pub fn find_npp(&self, name: &str, instance_key: &str) -> Option<usize> {
        self.npps
            .iter()
            .position(|n| &*n.name == name && n.instance_key() == instance_key)
    }

    /// Grounds a query constraint against this program's atoms.
    pub fn ground_query(&self, query: &Constraint) -> Result<Vec<GroundConstraint>, GroundError> {
        validate_query(query, &self.signatures)?;
        let rule = CRule::compile(None, &[], &query.body, query.to_string())?;
        let mut out: Vec<GroundConstraint> = rule
            .instances(&self.atoms, &self.certain)
            .into_iter()
            .map(|i| GroundConstraint { pos: i.pos, neg: i.neg })
            .collect();
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// Returns a copy with the grounded query appended to the constraints.
    pub fn with_query(&self, query: &Constraint) -> Result<GroundProgram, GroundError> {
        let mut gp = self.clone();
        gp.constraints.extend(self.ground_query(query)?);
        Ok(gp)
    }

    /// Total number of NPP choice atoms.
    pub fn num_choice_atoms(&self) -> usize {
        self.npps.iter().map(|n| n.atom_ids.len()).sum()
    }

    pub fn atom_text(&self, id: AtomId) -> String {
        self.atoms.atom(id).to_string()
    }
}

/// Recomputes the predicate-level stratification of a ground program's rules,
/// treating NPP predicates as externals of stratum 0.
pub fn stratify(gp: &GroundProgram) -> Result<BTreeMap<String, usize>, GroundError> {
    stratify_rules(&gp.atoms, &gp.rules, gp.npps.iter().flat_map(|n| n.atom_ids.iter().copied()))
}

fn pred_key(atom: &GroundAtom) -> String {
    format!("{}/{}", atom.predicate, atom.args.len())
}

fn stratify_rules(
    atoms: &AtomTable,
    rules: &[GroundRule],
    npp_atoms: impl Iterator<Item = AtomId>,
) -> Result<BTreeMap<String, usize>, GroundError> {
    let mut g = DepGraph::default();
    for a in npp_atoms {
        g.node(&pred_key(atoms.atom(a)));
    }
    let mut seen = HashSet::new();
    for r in rules {
        let head = pred_key(atoms.atom(r.head));
        g.node(&head);
        for (ids, neg) in [(&r.pos, false), (&r.neg, true)] {
            for &b in ids {
                let body = pred_key(atoms.atom(b));
                if seen.insert((head.clone(), body.clone(), neg)) {
                    g.depend(&head, &body, neg);
                }
            }
        }
    }
    g.stratify()
}

pub fn ground(program: &Program, query: Option<&Constraint>) -> Result<GroundProgram, GroundError> {
    ground_with(program, query, &GroundOptions::default())
}

enum Compiled {
    Rule(CRule),
    Npp { rule: CRule, decl: usize },
    Constraint(CRule),
}

struct Builder<'p> {
    program: &'p Program,
    sigs: NppSignatures,
    table: AtomTable,
    certain: Vec<bool>,
    rules: Vec<GroundRule>,
    rule_set: HashSet<GroundRule>,
    npps: Vec<GroundNpp>,
    npp_index: HashMap<(Arc<str>, Vec<Value>), usize>,
    budget: usize,
}

impl Builder<'_> {
    fn intern(&mut self, atom: GroundAtom, source: &str) -> Result<(AtomId, bool), GroundError> {
        let (id, fresh) = self.table.intern(atom);
        if fresh {
            self.certain.push(false);
            if self.table.len() > self.budget {
                return Err(GroundError::AtomBudget {
                    rule: source.to_string(),
                    budget: self.budget,
                });
            }
        }
        Ok((id, fresh))
    }

    /// One pass of a rule; returns whether anything changed.
    fn apply_rule(&mut self, rule: &CRule) -> Result<bool, GroundError> {
        let mut changed = false;
        for inst in rule.instances(&self.table, &self.certain) {
            let head = inst.head.expect("normal rules have heads");
            let (id, fresh) = self.intern(head, &rule.source)?;
            changed |= fresh;
            if inst.pos.is_empty() && inst.neg.is_empty() {
                if !self.certain[id as usize] {
                    self.certain[id as usize] = true;
                    changed = true;
                }
            } else {
                let gr = GroundRule {
                    head: id,
                    pos: inst.pos,
                    neg: inst.neg,
                };
                if self.rule_set.insert(gr.clone()) {
                    self.rules.push(gr);
                    changed = true;
                }
            }
        }
        Ok(changed)
    }

    fn apply_npp(
        &mut self,
        rule: &CRule,
        decl: usize,
        pending: &mut BTreeMap<(Arc<str>, Vec<Value>), String>,
    ) -> Result<bool, GroundError> {
        let Rule::Npp(d) = &self.program.rules[decl] else { unreachable!() };
        let name: Arc<str> = Arc::from(d.name.as_str());
        let sig = self.sigs.by_name[&d.name].clone();
        let mut changed = false;
        for inst in rule.instances(&self.table, &self.certain) {
            let key = (name.clone(), inst.npp_values.clone());
            if self.npp_index.contains_key(&key) {
                continue;
            }
            if !(inst.pos.is_empty() && inst.neg.is_empty()) {
                pending.entry(key).or_insert_with(|| rule.source.clone());
                continue;
            }
            let outcomes: Vec<Value> = sig
                .outcomes
                .iter()
                .map(|t| match t {
                    Term::Int(i) => Value::Int(*i),
                    Term::Const(c) => Value::sym(c),
                    other => unreachable!("outcome terms are constants, got {other}"),
                })
                .collect();
            let mut atom_ids = Vec::with_capacity(outcomes.len());
            for o in &outcomes {
                let mut args = inst.npp_values.clone();
                args.push(o.clone());
                let (id, _) = self.intern(GroundAtom { predicate: name.clone(), args }, &rule.source)?;
                atom_ids.push(id);
            }
            let n = outcomes.len();
            self.npp_index.insert(key, self.npps.len());
            self.npps.push(GroundNpp {
                name: name.clone(),
                instance: inst.npp_values,
                outcomes,
                atom_ids,
                active: vec![true; n],
                probs: vec![1.0 / n as f64; n],
                kind: sig.kind,
            });
            changed = true;
        }
        Ok(changed)
    }
}

pub fn ground_with(
    program: &Program,
    query: Option<&Constraint>,
    opts: &GroundOptions,
) -> Result<GroundProgram, GroundError> {
    let sigs = validate(program, None)?;

    // program-level stratification decides evaluation order
    let mut graph = DepGraph::default();
    let mut compiled = Vec::with_capacity(program.rules.len());
    let mut head_keys = Vec::with_capacity(program.rules.len());
    for (idx, rule) in program.rules.iter().enumerate() {
        let source = rule.to_string();
        let (c, key) = match rule {
            Rule::Fact(h) => {
                let r = CRule::compile(Some(h), &[], &[], source)?;
                (Compiled::Rule(r), Some(format!("{}/{}", h.predicate, h.arity())))
            }
            Rule::Normal { head, body } => {
                let r = CRule::compile(Some(head), &[], body, source)?;
                (Compiled::Rule(r), Some(format!("{}/{}", head.predicate, head.arity())))
            }
            Rule::Npp(d) => {
                let r = CRule::compile(None, &d.terms, &d.body, source)?;
                (
                    Compiled::Npp { rule: r, decl: idx },
                    Some(format!("{}/{}", d.name, d.atom_arity())),
                )
            }
            Rule::Constraint(c) => (Compiled::Constraint(CRule::compile(None, &[], &c.body, source)?), None),
        };
        if let Some(k) = &key {
            graph.node(k);
            let r = match &c {
                Compiled::Rule(r) | Compiled::Npp { rule: r, .. } => r,
                Compiled::Constraint(_) => unreachable!(),
            };
            for (body, neg) in body_keys(r) {
                graph.depend(k, &body, neg);
            }
        }
        compiled.push(c);
        head_keys.push(key);
    }
    let query_rule = match query {
        Some(q) => {
            validate_query(q, &sigs)?;
            Some(CRule::compile(None, &[], &q.body, q.to_string())?)
        }
        None => None,
    };
    let levels = graph.stratify()?;

    let mut by_stratum: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (idx, key) in head_keys.iter().enumerate() {
        if let Some(k) = key {
            by_stratum.entry(levels[k]).or_default().push(idx);
        }
    }

    let mut b = Builder {
        program,
        sigs,
        table: AtomTable::default(),
        certain: Vec::new(),
        rules: Vec::new(),
        rule_set: HashSet::new(),
        npps: Vec::new(),
        npp_index: HashMap::new(),
        budget: opts.atom_budget,
    };

    for members in by_stratum.values() {
        let mut pending = BTreeMap::new();
        loop {
            let mut changed = false;
            for &idx in members {
                changed |= match &compiled[idx] {
                    Compiled::Rule(r) => b.apply_rule(r)?,
                    Compiled::Npp { rule, decl } => b.apply_npp(rule, *decl, &mut pending)?,
                    Compiled::Constraint(_) => false,
                };
            }
            if !changed {
                break;
            }
        }
        for (key, source) in pending {
            if !b.npp_index.contains_key(&key) {
                return Err(GroundError::UncertainNppBody { decl: source });
            }
        }
    }

    // drop literals that became certain after the rule was emitted
    let certain = b.certain;
    let mut seen = HashSet::new();
    let mut rules = Vec::with_capacity(b.rules.len());
    for mut r in b.rules {
        if certain[r.head as usize] || r.neg.iter().any(|&a| certain[a as usize]) {
            continue;
        }
        r.pos.retain(|&a| !certain[a as usize]);
        if r.pos.is_empty() && r.neg.is_empty() {
            // only reachable if a body atom turned certain late; the head is
            // then certain as well, which the fixpoint already recorded
            continue;
        }
        if seen.insert(r.clone()) {
            rules.push(r);
        }
    }

    let mut constraints = Vec::new();
    for c in compiled.iter().filter_map(|c| match c {
        Compiled::Constraint(r) => Some(r),
        _ => None,
    }) {
        for inst in c.instances(&b.table, &certain) {
            constraints.push(GroundConstraint { pos: inst.pos, neg: inst.neg });
        }
    }
    let mut npp_of_atom = HashMap::new();
    for (i, n) in b.npps.iter().enumerate() {
        for (j, &a) in n.atom_ids.iter().enumerate() {
            npp_of_atom.insert(a, (i, j));
        }
    }

    let strata = stratify_rules(&b.table, &rules, b.npps.iter().flat_map(|n| n.atom_ids.iter().copied()))?;
    let mut order: Vec<(usize, usize)> = rules
        .iter()
        .enumerate()
        .map(|(i, r)| (strata[&pred_key(b.table.atom(r.head))], i))
        .collect();
    order.sort();
    let rule_strata = order.iter().map(|&(s, _)| s).collect();
    let rules: Vec<GroundRule> = order.into_iter().map(|(_, i)| rules[i].clone()).collect();
    let facts = (0..certain.len() as AtomId).filter(|&a| certain[a as usize]).collect();

    let mut gp = GroundProgram {
        atoms: Arc::new(b.table),
        certain: Arc::new(certain),
        facts: Arc::new(facts),
        rules: Arc::new(rules),
        rule_strata: Arc::new(rule_strata),
        strata: Arc::new(strata),
        npp_of_atom: Arc::new(npp_of_atom),
        signatures: Arc::new(b.sigs),
        constraints,
        npps: b.npps,
        plan: Arc::new(OnceLock::new()),
    };
    if let Some(q) = query_rule {
        let mut extra: Vec<GroundConstraint> = q
            .instances(&gp.atoms, &gp.certain)
            .into_iter()
            .map(|i| GroundConstraint { pos: i.pos, neg: i.neg })
            .collect();
        extra.sort();
        extra.dedup();
        gp.constraints.extend(extra);
    }
    Ok(gp)
}

fn write_body(f: &mut fmt::Formatter<'_>, gp: &GroundProgram, pos: &[AtomId], neg: &[AtomId]) -> fmt::Result {
    let mut first = true;
    for &a in pos {
        if !first {
            f.write_str(", ")?;
        }
        first = false;
        write!(f, "{}", gp.atoms.atom(a))?;
    }
    for &a in neg {
        if !first {
            f.write_str(", ")?;
        }
        first = false;
        write!(f, "not {}", gp.atoms.atom(a))?;
    }
    Ok(())
}

/// Canonical text: facts, choice sets over the active outcomes, rules,
/// constraints.
impl fmt::Display for GroundProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &a in self.facts.iter() {
            writeln!(f, "{}.", self.atoms.atom(a))?;
        }
        for n in &self.npps {
            f.write_str("1{")?;
            let mut first = true;
            for (j, &a) in n.atom_ids.iter().enumerate() {
                if !n.active[j] {
                    continue;
                }
                if !first {
                    f.write_str(";")?;
                }
                first = false;
                write!(f, "{}", self.atoms.atom(a))?;
            }
            writeln!(f, "}}1.")?;
        }
        for r in self.rules.iter() {
            write!(f, "{} :- ", self.atoms.atom(r.head))?;
            write_body(f, self, &r.pos, &r.neg)?;
            writeln!(f, ".")?;
        }
        for c in &self.constraints {
            f.write_str(":- ")?;
            write_body(f, self, &c.pos, &c.neg)?;
            writeln!(f, ".")?;
        }
        Ok(())
    }
}

/// Set of predicates (`name/arity`) that are NPP predicates.
pub fn npp_predicates(gp: &GroundProgram) -> BTreeSet<String> {
    gp.signatures
        .by_name
        .iter()
        .map(|(n, s)| format!("{n}/{}", s.atom_arity))
        .collect()
}
