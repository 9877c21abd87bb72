use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

/// Dense id of an interned ground atom.
pub type AtomId = u32;

/// A ground term. Integers order before symbols; symbols order lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Sym(Arc<str>),
}

impl Value {
    pub fn sym(s: &str) -> Self {
        Value::Sym(Arc::from(s))
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            Value::Sym(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Sym(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundAtom {
    pub predicate: Arc<str>,
    pub args: Vec<Value>,
}

impl GroundAtom {
    pub fn new(predicate: &str, args: Vec<Value>) -> Self {
        GroundAtom {
            predicate: Arc::from(predicate),
            args,
        }
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.predicate)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{a}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// Interning table. Ids are handed out in insertion order, so a deterministic
/// grounding produces a deterministic numbering.
#[derive(Debug, Clone, Default)]
pub struct AtomTable {
    atoms: Vec<GroundAtom>,
    index: HashMap<GroundAtom, AtomId>,
    by_pred: HashMap<Arc<str>, BTreeMap<usize, Vec<AtomId>>>,
}

impl AtomTable {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn get(&self, atom: &GroundAtom) -> Option<AtomId> {
        self.index.get(atom).copied()
    }

    pub fn atom(&self, id: AtomId) -> &GroundAtom {
        &self.atoms[id as usize]
    }

    /// Returns the id and whether the atom was new.
    pub fn intern(&mut self, atom: GroundAtom) -> (AtomId, bool) {
        if let Some(&id) = self.index.get(&atom) {
            return (id, false);
        }
        let id = self.atoms.len() as AtomId;
        self.by_pred
            .entry(atom.predicate.clone())
            .or_default()
            .entry(atom.args.len())
            .or_default()
            .push(id);
        self.index.insert(atom.clone(), id);
        self.atoms.push(atom);
        (id, true)
    }

    pub fn of_predicate(&self, predicate: &str, arity: usize) -> &[AtomId] {
        self.by_pred
            .get(predicate)
            .and_then(|m| m.get(&arity))
            .map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (AtomId, &GroundAtom)> {
        self.atoms.iter().enumerate().map(|(i, a)| (i as AtomId, a))
    }

    /// Parses `pred(a,1)` style text and looks it up.
    pub fn find(&self, text: &str) -> Option<AtomId> {
        let text = text.trim();
        let (pred, args) = match text.find('(') {
            Some(i) if text.ends_with(')') => {
                let inner = &text[i + 1..text.len() - 1];
                let args = inner
                    .split(',')
                    .map(|s| {
                        let s = s.trim();
                        s.parse::<i64>().map(Value::Int).unwrap_or_else(|_| Value::sym(s))
                    })
                    .collect();
                (&text[..i], args)
            }
            _ => (text, Vec::new()),
        };
        self.get(&GroundAtom::new(pred, args))
    }
}
