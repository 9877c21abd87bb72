//! Static checks that need the whole program: arities, annotation legality,
//! NPP declarations.

use std::collections::BTreeMap;

use super::ast::*;
use super::{ParseError, ParseErrorKind};

/// Facts gathered about the NPP declarations of a program.
#[derive(Debug, Clone, Default)]
pub struct NppSignatures {
    /// name -> (atom arity, outcomes, query kind)
    pub by_name: BTreeMap<String, NppSignature>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NppSignature {
    pub atom_arity: usize,
    pub outcomes: Vec<Term>,
    pub kind: NppQueryKind,
}

impl NppSignatures {
    pub fn is_npp(&self, predicate: &str, arity: usize) -> bool {
        self.by_name
            .get(predicate)
            .is_some_and(|s| s.atom_arity == arity)
    }
}

struct Checker<'a> {
    src: Option<&'a str>,
    program: &'a Program,
    arities: BTreeMap<&'a str, usize>,
    npps: NppSignatures,
    // kind fixed by the first marked use, with its rule index
    kinds: BTreeMap<String, (NppQueryKind, usize)>,
}

impl<'a> Checker<'a> {
    fn error(&self, rule_idx: usize, kind: ParseErrorKind, message: String) -> ParseError {
        let span = self.program.span_of(rule_idx);
        let mut err = match self.src {
            Some(src) => ParseError::at(src, span, message),
            None => ParseError::without_source(span, message),
        };
        err.kind = kind;
        err
    }

    fn note_arity(&mut self, atom: &'a Atom, rule_idx: usize) -> Result<(), ParseError> {
        let arity = atom.arity();
        match self.arities.get(atom.predicate.as_str()) {
            Some(&prev) if prev != arity => Err(self.error(
                rule_idx,
                ParseErrorKind::ArityClash,
                format!(
                    "predicate `{}` used with arity {arity} but elsewhere with arity {prev}",
                    atom.predicate
                ),
            )),
            Some(_) => Ok(()),
            None => {
                self.arities.insert(&atom.predicate, arity);
                Ok(())
            }
        }
    }

    fn collect_decls(&mut self) -> Result<(), ParseError> {
        for (idx, rule) in self.program.rules.iter().enumerate() {
            let Rule::Npp(decl) = rule else { continue };
            let mut seen = Vec::with_capacity(decl.outcomes.len());
            for o in &decl.outcomes {
                if seen.contains(&o) {
                    return Err(self.error(
                        idx,
                        ParseErrorKind::DuplicateOutcome,
                        format!("outcome `{o}` listed twice in NPP `{}`", decl.name),
                    ));
                }
                seen.push(o);
            }
            let sig = NppSignature {
                atom_arity: decl.atom_arity(),
                outcomes: decl.outcomes.clone(),
                kind: NppQueryKind::CondClassGivenData,
            };
            match self.npps.by_name.get(&decl.name) {
                Some(prev) if prev.atom_arity != sig.atom_arity || prev.outcomes != sig.outcomes => {
                    return Err(self.error(
                        idx,
                        ParseErrorKind::ArityClash,
                        format!(
                            "NPP `{}` redeclared with a different instance arity or outcome list",
                            decl.name
                        ),
                    ));
                }
                Some(_) => {}
                None => {
                    self.npps.by_name.insert(decl.name.clone(), sig);
                }
            }
        }
        Ok(())
    }

    fn check_atom(&mut self, atom: &'a Atom, rule_idx: usize, in_head: bool) -> Result<(), ParseError> {
        self.note_arity(atom, rule_idx)?;
        let is_npp = self.npps.is_npp(&atom.predicate, atom.arity());
        if in_head && is_npp {
            return Err(self.error(
                rule_idx,
                ParseErrorKind::NppInHead,
                format!("NPP predicate `{}` may not appear in a rule head", atom.predicate),
            ));
        }
        if !is_npp {
            if atom.has_marks() {
                return Err(self.error(
                    rule_idx,
                    ParseErrorKind::IllegalAnnotation,
                    format!(
                        "`+`/`-` annotations are only allowed on NPP atoms, but `{}` is not an NPP",
                        atom.predicate
                    ),
                ));
            }
            return Ok(());
        }
        if !atom.has_marks() {
            return Ok(());
        }
        let (outcome, data) = atom.args.split_last().expect("NPP atoms have an outcome slot");
        let mut data_mark = None;
        for a in data {
            match (data_mark, a.mark) {
                (_, None) => {}
                (None, Some(m)) => data_mark = Some(m),
                (Some(prev), Some(m)) if prev != m => {
                    return Err(self.error(
                        rule_idx,
                        ParseErrorKind::InconsistentAnnotation,
                        format!("mixed `+`/`-` marks on the data arguments of `{atom}`"),
                    ))
                }
                _ => {}
            }
        }
        let kind = NppQueryKind::from_marks(
            data_mark.unwrap_or(Mark::Plus),
            outcome.mark.unwrap_or(Mark::Minus),
        );
        match self.kinds.get(&atom.predicate) {
            Some(&(prev, _)) if prev != kind => Err(self.error(
                rule_idx,
                ParseErrorKind::InconsistentAnnotation,
                format!(
                    "NPP `{}` is queried as {kind:?} here but as {prev:?} elsewhere",
                    atom.predicate
                ),
            )),
            Some(_) => Ok(()),
            None => {
                self.kinds.insert(atom.predicate.clone(), (kind, rule_idx));
                Ok(())
            }
        }
    }

    fn check_body(&mut self, body: &'a [Literal], rule_idx: usize) -> Result<(), ParseError> {
        for lit in body {
            if let Some(a) = lit.atom() {
                self.check_atom(a, rule_idx, false)?;
            }
        }
        Ok(())
    }

    fn run(mut self) -> Result<NppSignatures, ParseError> {
        self.collect_decls()?;
        for (idx, rule) in self.program.rules.iter().enumerate() {
            match rule {
                Rule::Fact(a) => {
                    self.check_atom(a, idx, true)?;
                    if a.terms().any(|t| !t.is_ground()) {
                        return Err(self.error(
                            idx,
                            ParseErrorKind::Syntax,
                            format!("fact `{a}` contains variables"),
                        ));
                    }
                }
                Rule::Normal { head, body } => {
                    self.check_atom(head, idx, true)?;
                    self.check_body(body, idx)?;
                }
                Rule::Constraint(c) => self.check_body(&c.body, idx)?,
                Rule::Npp(d) => {
                    if self.arities.get(d.name.as_str()).is_some_and(|&a| a != d.atom_arity()) {
                        return Err(self.error(
                            idx,
                            ParseErrorKind::ArityClash,
                            format!("NPP `{}` clashes with another use of the predicate", d.name),
                        ));
                    }
                    self.arities.insert(&d.name, d.atom_arity());
                    self.check_body(&d.body, idx)?;
                }
            }
        }
        for (name, (kind, _)) in std::mem::take(&mut self.kinds) {
            if let Some(sig) = self.npps.by_name.get_mut(&name) {
                sig.kind = kind;
            }
        }
        Ok(self.npps)
    }
}

/// Validates a syntactically parsed program and returns its NPP signatures.
/// `src` is used only to turn spans into line/column positions.
pub fn validate(program: &Program, src: Option<&str>) -> Result<NppSignatures, ParseError> {
    Checker {
        src,
        program,
        arities: BTreeMap::new(),
        npps: NppSignatures::default(),
        kinds: BTreeMap::new(),
    }
    .run()
}

/// Checks a query constraint against the program's NPP signatures.
pub fn validate_query(query: &Constraint, npps: &NppSignatures) -> Result<(), ParseError> {
    for lit in &query.body {
        if let Some(a) = lit.atom() {
            if a.has_marks() && !npps.is_npp(&a.predicate, a.arity()) {
                let mut err = ParseError::without_source(
                    Span::default(),
                    format!("`+`/`-` annotations are only allowed on NPP atoms, but `{}` is not an NPP", a.predicate),
                );
                err.kind = ParseErrorKind::IllegalAnnotation;
                return Err(err);
            }
        }
    }
    Ok(())
}
