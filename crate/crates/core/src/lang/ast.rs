//! Abstract syntax for SLASH programs and queries.

use std::fmt;

/// Byte range into the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            ArithOp::Add | ArithOp::Sub => 1,
            ArithOp::Mul | ArithOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Const(String),
    Var(String),
    Int(i64),
    Arith(ArithOp, Box<Term>, Box<Term>),
}

impl Term {
    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Const(_) | Term::Int(_) => true,
            Term::Arith(_, l, r) => l.is_ground() && r.is_ground(),
        }
    }

    /// Pushes every variable name occurring in the term, in order of appearance.
    pub fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Term::Var(v) => out.push(v),
            Term::Const(_) | Term::Int(_) => {}
            Term::Arith(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }
}

/// `+` or `-` prefix on an NPP atom argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mark {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Arg {
    pub mark: Option<Mark>,
    pub term: Term,
}

impl Arg {
    pub fn plain(term: Term) -> Self {
        Arg { mark: None, term }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Arg>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, terms: Vec<Term>) -> Self {
        Atom {
            predicate: predicate.into(),
            args: terms.into_iter().map(Arg::plain).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn has_marks(&self) -> bool {
        self.args.iter().any(|a| a.mark.is_some())
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.args.iter().map(|a| &a.term)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl RelOp {
    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Eq => "=",
            RelOp::Ne => "!=",
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    Pos(Atom),
    Neg(Atom),
    Cmp(Term, RelOp, Term),
}

impl Literal {
    pub fn atom(&self) -> Option<&Atom> {
        match self {
            Literal::Pos(a) | Literal::Neg(a) => Some(a),
            Literal::Cmp(..) => None,
        }
    }
}

/// `npp(name(terms), [outcomes]) :- body.`
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NppDecl {
    pub name: String,
    pub terms: Vec<Term>,
    pub outcomes: Vec<Term>,
    pub body: Vec<Literal>,
}

impl NppDecl {
    /// Arity of the ground atoms `name(terms..., outcome)`.
    pub fn atom_arity(&self) -> usize {
        self.terms.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Constraint {
    pub body: Vec<Literal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Rule {
    Fact(Atom),
    Normal { head: Atom, body: Vec<Literal> },
    Constraint(Constraint),
    Npp(NppDecl),
}

/// A parsed program. Source spans are kept for diagnostics only and do not
/// take part in equality.
#[derive(Debug, Clone, Default)]
pub struct Program {
    pub rules: Vec<Rule>,
    pub spans: Vec<Span>,
}

impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.rules == other.rules
    }
}

impl Program {
    pub fn from_rules(rules: Vec<Rule>) -> Self {
        let spans = vec![Span::default(); rules.len()];
        Program { rules, spans }
    }

    pub fn npp_decls(&self) -> impl Iterator<Item = &NppDecl> {
        self.rules.iter().filter_map(|r| match r {
            Rule::Npp(d) => Some(d),
            _ => None,
        })
    }

    pub fn span_of(&self, idx: usize) -> Span {
        self.spans.get(idx).copied().unwrap_or_default()
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// Which distribution an NPP atom asks for, read off its `+`/`-` marks:
/// the data arguments first, the outcome slot last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum NppQueryKind {
    /// `name(+X, -C)`: P(C | X).
    CondClassGivenData,
    /// `name(-X, +C)`: P(X | C).
    CondDataGivenClass,
    /// `name(+X, +C)`: P(X, C).
    Joint,
    /// `name(-X, -C)`: P(C).
    Prior,
}

impl NppQueryKind {
    pub fn from_marks(data: Mark, outcome: Mark) -> Self {
        match (data, outcome) {
            (Mark::Plus, Mark::Minus) => NppQueryKind::CondClassGivenData,
            (Mark::Minus, Mark::Plus) => NppQueryKind::CondDataGivenClass,
            (Mark::Plus, Mark::Plus) => NppQueryKind::Joint,
            (Mark::Minus, Mark::Minus) => NppQueryKind::Prior,
        }
    }

    pub fn needs_data(self) -> bool {
        matches!(
            self,
            NppQueryKind::CondClassGivenData | NppQueryKind::Joint
        )
    }
}
