//! Canonical text form. `parse_program(&p.to_string())` reproduces `p`.

use std::fmt;

use super::ast::*;

fn write_operand(f: &mut fmt::Formatter<'_>, t: &Term, parent: ArithOp, right: bool) -> fmt::Result {
    match t {
        Term::Arith(op, _, _)
            if op.precedence() < parent.precedence()
                || (right && op.precedence() == parent.precedence()) =>
        {
            write!(f, "({t})")
        }
        _ => write!(f, "{t}"),
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => f.write_str(c),
            Term::Var(v) => f.write_str(v),
            Term::Int(i) if *i < 0 => write!(f, "({i})"),
            Term::Int(i) => write!(f, "{i}"),
            Term::Arith(op, l, r) => {
                write_operand(f, l, *op, false)?;
                write!(f, " {} ", op.symbol())?;
                write_operand(f, r, *op, true)
            }
        }
    }
}

impl fmt::Display for Mark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mark::Plus => "+",
            Mark::Minus => "-",
        })
    }
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(m) = self.mark {
            write!(f, "{m}")?;
        }
        write!(f, "{}", self.term)
    }
}

fn write_list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T], sep: &str) -> fmt::Result {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(sep)?;
        }
        write!(f, "{item}")?;
    }
    Ok(())
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.predicate)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            write_list(f, &self.args, ",")?;
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Pos(a) => write!(f, "{a}"),
            Literal::Neg(a) => write!(f, "not {a}"),
            Literal::Cmp(l, op, r) => write!(f, "{l} {} {r}", op.symbol()),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(":- ")?;
        write_list(f, &self.body, ", ")?;
        f.write_str(".")
    }
}

impl fmt::Display for NppDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "npp({}(", self.name)?;
        write_list(f, &self.terms, ",")?;
        f.write_str("),[")?;
        for (i, o) in self.outcomes.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            // outcome lists accept bare negative integers
            match o {
                Term::Int(v) => write!(f, "{v}")?,
                other => write!(f, "{other}")?,
            }
        }
        f.write_str("])")?;
        if !self.body.is_empty() {
            f.write_str(" :- ")?;
            write_list(f, &self.body, ", ")?;
        }
        f.write_str(".")
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Fact(a) => write!(f, "{a}."),
            Rule::Normal { head, body } => {
                write!(f, "{head} :- ")?;
                write_list(f, body, ", ")?;
                f.write_str(".")
            }
            Rule::Constraint(c) => write!(f, "{c}"),
            Rule::Npp(d) => write!(f, "{d}"),
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for rule in &self.rules {
            writeln!(f, "{rule}")?;
        }
        Ok(())
    }
}
