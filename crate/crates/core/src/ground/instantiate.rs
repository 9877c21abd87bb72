//! Rule compilation (variables to slots, literal ordering, safety) and the
//! join that enumerates ground instances against an atom table.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::sync::Arc;

use crate::lang::{ArithOp, Atom, Literal, RelOp, Term};

use super::atoms::{AtomId, AtomTable, GroundAtom, Value};
use super::GroundError;

#[derive(Debug, Clone)]
pub(crate) enum CTerm {
    Val(Value),
    Var(usize),
    Arith(ArithOp, Box<CTerm>, Box<CTerm>),
}

#[derive(Debug, Clone)]
pub(crate) struct CAtom {
    pub pred: Arc<str>,
    pub args: Vec<CTerm>,
}

#[derive(Debug, Clone)]
enum CLit {
    Pos(CAtom),
    Neg(CAtom),
    Cmp(CTerm, RelOp, CTerm),
    /// `Var = expr` with the variable unbound at this point of the plan.
    Assign(usize, CTerm),
}

/// A rule compiled for grounding: literals in evaluation order.
#[derive(Debug, Clone)]
pub(crate) struct CRule {
    pub head: Option<CAtom>,
    /// Instance terms of an NPP declaration.
    pub npp_terms: Vec<CTerm>,
    plan: Vec<CLit>,
    nvars: usize,
    pub source: String,
}

/// One ground instance of a rule body after simplification against the
/// certain atoms.
#[derive(Debug, Clone)]
pub(crate) struct Instance {
    pub head: Option<GroundAtom>,
    pub npp_values: Vec<Value>,
    pub pos: Vec<AtomId>,
    pub neg: Vec<AtomId>,
}

struct VarMap {
    names: Vec<String>,
}

impl VarMap {
    fn slot(&mut self, name: &str) -> usize {
        if let Some(i) = self.names.iter().position(|n| n == name) {
            return i;
        }
        self.names.push(name.to_string());
        self.names.len() - 1
    }
}

fn compile_term(t: &Term, vars: &mut VarMap) -> CTerm {
    match t {
        Term::Const(c) => CTerm::Val(Value::sym(c)),
        Term::Int(i) => CTerm::Val(Value::Int(*i)),
        Term::Var(v) => CTerm::Var(vars.slot(v)),
        Term::Arith(op, l, r) => {
            let l = compile_term(l, vars);
            let r = compile_term(r, vars);
            match (&l, &r) {
                (CTerm::Val(a), CTerm::Val(b)) => match arith(*op, a, b) {
                    Some(v) => CTerm::Val(v),
                    None => CTerm::Arith(*op, Box::new(l), Box::new(r)),
                },
                _ => CTerm::Arith(*op, Box::new(l), Box::new(r)),
            }
        }
    }
}

fn compile_atom(a: &Atom, vars: &mut VarMap) -> CAtom {
    CAtom {
        pred: Arc::from(a.predicate.as_str()),
        args: a.terms().map(|t| compile_term(t, vars)).collect(),
    }
}

fn term_vars(t: &CTerm, out: &mut Vec<usize>) {
    match t {
        CTerm::Val(_) => {}
        CTerm::Var(v) => out.push(*v),
        CTerm::Arith(_, l, r) => {
            term_vars(l, out);
            term_vars(r, out);
        }
    }
}

fn all_bound(t: &CTerm, bound: &[bool]) -> bool {
    let mut vs = Vec::new();
    term_vars(t, &mut vs);
    vs.iter().all(|&v| bound[v])
}

/// Integer arithmetic; `None` when undefined (symbols, division by zero, overflow).
fn arith(op: ArithOp, a: &Value, b: &Value) -> Option<Value> {
    let (a, b) = (a.as_int()?, b.as_int()?);
    let v = match op {
        ArithOp::Add => a.checked_add(b)?,
        ArithOp::Sub => a.checked_sub(b)?,
        ArithOp::Mul => a.checked_mul(b)?,
        ArithOp::Div => a.checked_div(b)?,
    };
    Some(Value::Int(v))
}

pub(crate) fn compare(op: RelOp, a: &Value, b: &Value) -> bool {
    let ord = a.cmp(b);
    match op {
        RelOp::Eq => ord == Ordering::Equal,
        RelOp::Ne => ord != Ordering::Equal,
        RelOp::Lt => ord == Ordering::Less,
        RelOp::Le => ord != Ordering::Greater,
        RelOp::Gt => ord == Ordering::Greater,
        RelOp::Ge => ord != Ordering::Less,
    }
}

impl CRule {
    /// Compiles a rule given as head (optional), extra head-side terms (NPP
    /// instance terms), and body. Fails if a variable is not bound by a
    /// positive body atom or an assignment.
    pub fn compile(
        head: Option<&Atom>,
        npp_terms: &[Term],
        body: &[Literal],
        source: String,
    ) -> Result<CRule, GroundError> {
        let mut vars = VarMap { names: Vec::new() };
        let head = head.map(|h| compile_atom(h, &mut vars));
        let npp_terms: Vec<CTerm> = npp_terms.iter().map(|t| compile_term(t, &mut vars)).collect();
        let mut pending: Vec<CLit> = body
            .iter()
            .map(|l| match l {
                Literal::Pos(a) => CLit::Pos(compile_atom(a, &mut vars)),
                Literal::Neg(a) => CLit::Neg(compile_atom(a, &mut vars)),
                Literal::Cmp(l, op, r) => {
                    CLit::Cmp(compile_term(l, &mut vars), *op, compile_term(r, &mut vars))
                }
            })
            .collect();
        let nvars = vars.names.len();
        let mut bound = vec![false; nvars];
        let mut plan = Vec::with_capacity(pending.len());
        let unsafe_var = |bound: &[bool], t: &CTerm| -> Option<usize> {
            let mut vs = Vec::new();
            term_vars(t, &mut vs);
            vs.into_iter().find(|&v| !bound[v])
        };

        loop {
            // ready comparisons first: they filter early
            if let Some(i) = pending.iter().position(|l| match l {
                CLit::Cmp(a, RelOp::Eq, b) => {
                    (all_bound(a, &bound) && all_bound(b, &bound))
                        || (matches!(a, CTerm::Var(v) if !bound[*v]) && all_bound(b, &bound))
                        || (matches!(b, CTerm::Var(v) if !bound[*v]) && all_bound(a, &bound))
                }
                CLit::Cmp(a, _, b) => all_bound(a, &bound) && all_bound(b, &bound),
                _ => false,
            }) {
                let lit = pending.remove(i);
                let CLit::Cmp(a, op, b) = lit else { unreachable!() };
                match (&a, &b) {
                    (CTerm::Var(v), _) if !bound[*v] => {
                        bound[*v] = true;
                        plan.push(CLit::Assign(*v, b));
                    }
                    (_, CTerm::Var(v)) if !bound[*v] => {
                        bound[*v] = true;
                        plan.push(CLit::Assign(*v, a));
                    }
                    _ => plan.push(CLit::Cmp(a, op, b)),
                }
                continue;
            }
            // next positive atom whose arithmetic arguments are evaluable
            if let Some(i) = pending.iter().position(|l| match l {
                CLit::Pos(a) => a
                    .args
                    .iter()
                    .all(|t| matches!(t, CTerm::Var(_) | CTerm::Val(_)) || all_bound(t, &bound)),
                _ => false,
            }) {
                let lit = pending.remove(i);
                if let CLit::Pos(a) = &lit {
                    for t in &a.args {
                        if let CTerm::Var(v) = t {
                            bound[*v] = true;
                        }
                    }
                }
                plan.push(lit);
                continue;
            }
            break;
        }
        for lit in pending {
            let offending = match &lit {
                CLit::Pos(a) | CLit::Neg(a) => a.args.iter().find_map(|t| unsafe_var(&bound, t)),
                CLit::Cmp(a, _, b) => unsafe_var(&bound, a).or_else(|| unsafe_var(&bound, b)),
                CLit::Assign(..) => None,
            };
            if let Some(v) = offending {
                return Err(GroundError::Unsafe {
                    rule: source,
                    variable: vars.names[v].clone(),
                });
            }
            plan.push(lit);
        }
        let head_terms = head.iter().flat_map(|h| h.args.iter()).chain(npp_terms.iter());
        for t in head_terms {
            if let Some(v) = unsafe_var(&bound, t) {
                return Err(GroundError::Unsafe {
                    rule: source,
                    variable: vars.names[v].clone(),
                });
            }
        }
        Ok(CRule {
            head,
            npp_terms,
            plan,
            nvars,
            source,
        })
    }

    pub fn body_predicates(&self) -> impl Iterator<Item = (&CAtom, bool)> {
        self.plan.iter().filter_map(|l| match l {
            CLit::Pos(a) => Some((a, false)),
            CLit::Neg(a) => Some((a, true)),
            _ => None,
        })
    }

    /// Enumerates ground instances of the rule against `table`. Positive
    /// literals that are certain are dropped, as are negative literals over
    /// atoms absent from the table; instances with a certain negated atom are
    /// discarded.
    pub fn instances(&self, table: &AtomTable, certain: &[bool]) -> Vec<Instance> {
        let mut ctx = JoinCtx {
            table,
            certain,
            subst: vec![None; self.nvars],
            pos: Vec::new(),
            neg: Vec::new(),
            out: Vec::new(),
        };
        ctx.step(self, 0);
        let mut out = ctx.out;
        // canonical body order makes duplicate instances comparable
        for inst in &mut out {
            inst.pos.sort_unstable();
            inst.pos.dedup();
            inst.neg.sort_unstable();
            inst.neg.dedup();
        }
        out
    }
}

struct JoinCtx<'a> {
    table: &'a AtomTable,
    certain: &'a [bool],
    subst: Vec<Option<Value>>,
    pos: Vec<AtomId>,
    neg: Vec<AtomId>,
    out: Vec<Instance>,
}

impl JoinCtx<'_> {
    fn eval(&self, t: &CTerm) -> Option<Value> {
        match t {
            CTerm::Val(v) => Some(v.clone()),
            CTerm::Var(i) => self.subst[*i].clone(),
            CTerm::Arith(op, l, r) => arith(*op, &self.eval(l)?, &self.eval(r)?),
        }
    }

    fn ground_atom(&self, a: &CAtom) -> Option<GroundAtom> {
        let args = a.args.iter().map(|t| self.eval(t)).collect::<Option<Vec<_>>>()?;
        Some(GroundAtom {
            predicate: a.pred.clone(),
            args,
        })
    }

    fn emit(&mut self, rule: &CRule) {
        let head = match &rule.head {
            Some(h) => match self.ground_atom(h) {
                Some(g) => Some(g),
                None => return,
            },
            None => None,
        };
        let npp_values = match rule.npp_terms.iter().map(|t| self.eval(t)).collect::<Option<Vec<_>>>() {
            Some(v) => v,
            None => return,
        };
        self.out.push(Instance {
            head,
            npp_values,
            pos: self.pos.clone(),
            neg: self.neg.clone(),
        });
    }

    fn step(&mut self, rule: &CRule, idx: usize) {
        let Some(lit) = rule.plan.get(idx) else {
            self.emit(rule);
            return;
        };
        match lit {
            CLit::Assign(v, t) => {
                if let Some(val) = self.eval(t) {
                    self.subst[*v] = Some(val);
                    self.step(rule, idx + 1);
                    self.subst[*v] = None;
                }
            }
            CLit::Cmp(a, op, b) => {
                if let (Some(x), Some(y)) = (self.eval(a), self.eval(b)) {
                    if compare(*op, &x, &y) {
                        self.step(rule, idx + 1);
                    }
                }
            }
            CLit::Neg(a) => {
                let Some(g) = self.ground_atom(a) else { return };
                match self.table.get(&g) {
                    None => self.step(rule, idx + 1),
                    Some(id) if self.certain[id as usize] => {}
                    Some(id) => {
                        self.neg.push(id);
                        self.step(rule, idx + 1);
                        self.neg.pop();
                    }
                }
            }
            CLit::Pos(a) => {
                // fully bound atoms are a lookup, not a scan
                if a.args.iter().all(|t| self.eval(t).is_some()) {
                    let Some(g) = self.ground_atom(a) else { return };
                    if let Some(id) = self.table.get(&g) {
                        self.with_pos(rule, idx, id);
                    }
                    return;
                }
                let table = self.table;
                let candidates = table.of_predicate(&a.pred, a.args.len());
                let mut newly = Vec::with_capacity(a.args.len());
                'cand: for &id in candidates {
                    let atom = table.atom(id);
                    newly.clear();
                    for (t, v) in a.args.iter().zip(&atom.args) {
                        match t {
                            CTerm::Var(s) => match &self.subst[*s] {
                                Some(bound) if bound != v => {
                                    for &s in &newly {
                                        self.subst[s] = None;
                                    }
                                    continue 'cand;
                                }
                                Some(_) => {}
                                None => {
                                    self.subst[*s] = Some(v.clone());
                                    newly.push(*s);
                                }
                            },
                            other => {
                                if self.eval(other).as_ref() != Some(v) {
                                    for &s in &newly {
                                        self.subst[s] = None;
                                    }
                                    continue 'cand;
                                }
                            }
                        }
                    }
                    self.with_pos(rule, idx, id);
                    for &s in &newly {
                        self.subst[s] = None;
                    }
                }
            }
        }
    }

    fn with_pos(&mut self, rule: &CRule, idx: usize, id: AtomId) {
        if self.certain[id as usize] {
            self.step(rule, idx + 1);
        } else {
            self.pos.push(id);
            self.step(rule, idx + 1);
            self.pos.pop();
        }
    }
}

/// Predicates in a compiled rule body as `name/arity` keys, deduplicated.
pub(crate) fn body_keys(rule: &CRule) -> BTreeSet<(String, bool)> {
    rule.body_predicates()
        .map(|(a, neg)| (format!("{}/{}", a.pred, a.args.len()), neg))
        .collect()
}
