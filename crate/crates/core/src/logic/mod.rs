//! Propositional formulas over entity predicates.
//!
//! An [`Atom`] is a predicate such as "there is a cat on the right" or
//! "there are three dogs". Atoms are compared structurally, so `cat@right`
//! and `cat@left` are independent propositional variables: no exclusivity
//! between positions is encoded.

mod eval;
mod laws;
mod parse;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eval::{counterexample, equivalent, evaluate, Assignment, MAX_EQUIVALENCE_ATOMS};
pub use laws::{apply_law, Law, LawVariant};
pub use parse::parse_formula;

pub const MIN_COUNT: u8 = 1;
pub const MAX_COUNT: u8 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogicError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("count {count} at byte {offset} is outside [1, 10]")]
    CountOutOfRange { offset: usize, count: u64 },
    #[error("invalid entity label {0:?}")]
    InvalidEntity(String),
    #[error("assignment does not cover atom `{0}`")]
    MissingAtom(Atom),
    #[error("{count} distinct atoms exceed the truth-table budget of {max}")]
    AtomBudgetExceeded { count: usize, max: usize },
    #[error("{law}/{variant} does not apply: expected root of shape {expected}")]
    PatternMismatch {
        law: Law,
        variant: LawVariant,
        expected: &'static str,
    },
    #[error("{op} needs at least two operands, got {got}")]
    TooFewOperands { op: &'static str, got: usize },
}

/// Spatial qualifier attached to an entity predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    Left,
    Right,
    Top,
    Bottom,
    Middle,
}

impl Position {
    pub const ALL: [Position; 5] = [
        Position::Left,
        Position::Right,
        Position::Top,
        Position::Bottom,
        Position::Middle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Position::Left => "left",
            Position::Right => "right",
            Position::Top => "top",
            Position::Bottom => "bottom",
            Position::Middle => "middle",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Position::ALL.into_iter().find(|p| p.as_str() == name)
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Atom {
    entity: String,
    position: Option<Position>,
    count: Option<u8>,
}

impl Atom {
    /// Builds an atom, lowercasing the entity label.
    ///
    /// Labels must be non-empty words separated by single spaces.
    pub fn new(
        entity: &str,
        position: Option<Position>,
        count: Option<u8>,
    ) -> Result<Self, LogicError> {
        let entity = entity.to_lowercase();
        if !is_valid_label(&entity) {
            return Err(LogicError::InvalidEntity(entity));
        }
        if let Some(c) = count {
            if !(MIN_COUNT..=MAX_COUNT).contains(&c) {
                return Err(LogicError::CountOutOfRange {
                    offset: 0,
                    count: c.into(),
                });
            }
        }
        Ok(Atom {
            entity,
            position,
            count,
        })
    }

    pub fn entity(&self) -> &str {
        &self.entity
    }

    pub fn position(&self) -> Option<Position> {
        self.position
    }

    pub fn count(&self) -> Option<u8> {
        self.count
    }

    pub fn with_entity(&self, entity: &str) -> Result<Self, LogicError> {
        Atom::new(entity, self.position, self.count)
    }
}

pub(crate) fn is_label_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

pub(crate) fn is_valid_label(label: &str) -> bool {
    !label.is_empty()
        && label
            .split(' ')
            .all(|word| !word.is_empty() && word.chars().all(is_label_char))
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.entity)?;
        if let Some(p) = self.position {
            write!(f, "@{p}")?;
        }
        if let Some(c) = self.count {
            write!(f, "#{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Atom(Atom),
    Not(Box<Formula>),
    /// Conjunction of two or more children, order preserved.
    And(Vec<Formula>),
    /// Disjunction of two or more children, order preserved.
    Or(Vec<Formula>),
}

impl Formula {
    pub fn atom(atom: Atom) -> Self {
        Formula::Atom(atom)
    }

    /// Shorthand for a bare entity atom. Panics on an invalid label, so
    /// only use it with literals.
    pub fn var(entity: &str) -> Self {
        Formula::Atom(Atom::new(entity, None, None).expect("valid entity literal"))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(child: Formula) -> Self {
        Formula::Not(Box::new(child))
    }

    pub fn and(children: Vec<Formula>) -> Result<Self, LogicError> {
        if children.len() < 2 {
            return Err(LogicError::TooFewOperands {
                op: "and",
                got: children.len(),
            });
        }
        Ok(Formula::And(children))
    }

    pub fn or(children: Vec<Formula>) -> Result<Self, LogicError> {
        if children.len() < 2 {
            return Err(LogicError::TooFewOperands {
                op: "or",
                got: children.len(),
            });
        }
        Ok(Formula::Or(children))
    }

    pub fn and2(a: Formula, b: Formula) -> Self {
        Formula::And(vec![a, b])
    }

    pub fn or2(a: Formula, b: Formula) -> Self {
        Formula::Or(vec![a, b])
    }

    /// Distinct atoms in the formula, in sorted order.
    pub fn atoms(&self) -> BTreeSet<Atom> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<Atom>) {
        match self {
            Formula::Atom(a) => {
                out.insert(a.clone());
            }
            Formula::Not(c) => c.collect_atoms(out),
            Formula::And(cs) | Formula::Or(cs) => cs.iter().for_each(|c| c.collect_atoms(out)),
        }
    }

    /// Rewrites every atom through `f`, keeping the tree shape.
    pub fn map_atoms<E>(&self, f: &mut impl FnMut(&Atom) -> Result<Atom, E>) -> Result<Self, E> {
        Ok(match self {
            Formula::Atom(a) => Formula::Atom(f(a)?),
            Formula::Not(c) => Formula::Not(Box::new(c.map_atoms(f)?)),
            Formula::And(cs) => {
                Formula::And(cs.iter().map(|c| c.map_atoms(f)).collect::<Result<_, E>>()?)
            }
            Formula::Or(cs) => {
                Formula::Or(cs.iter().map(|c| c.map_atoms(f)).collect::<Result<_, E>>()?)
            }
        })
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::Atom(_) => 1,
            Formula::Not(c) => 1 + c.depth(),
            Formula::And(cs) | Formula::Or(cs) => 1 + cs.iter().map(Formula::depth).max().unwrap_or(0),
        }
    }
}

// Canonical printing. `!` binds tightest, then `&`, then `|`. A nested
// operator of the same kind is parenthesized so that n-ary grouping
// survives a parse round trip.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::Not(c) => match **c {
                Formula::Atom(_) | Formula::Not(_) => write!(f, "!{c}"),
                _ => write!(f, "!({c})"),
            },
            Formula::And(cs) => write_joined(f, cs, " & ", |c| {
                matches!(c, Formula::And(_) | Formula::Or(_))
            }),
            Formula::Or(cs) => write_joined(f, cs, " | ", |c| {
                matches!(c, Formula::And(_) | Formula::Or(_))
            }),
        }
    }
}

fn write_joined(
    f: &mut fmt::Formatter<'_>,
    children: &[Formula],
    sep: &str,
    needs_parens: impl Fn(&Formula) -> bool,
) -> fmt::Result {
    for (i, c) in children.iter().enumerate() {
        if i > 0 {
            f.write_str(sep)?;
        }
        if needs_parens(c) {
            write!(f, "({c})")?;
        } else {
            write!(f, "{c}")?;
        }
    }
    Ok(())
}

impl Serialize for Formula {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Formula {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_formula(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atom_rejects_bad_labels() {
        assert!(Atom::new("", None, None).is_err());
        assert!(Atom::new("hot  dog", None, None).is_err());
        assert!(Atom::new(" cat", None, None).is_err());
        assert!(Atom::new("hot dog", None, None).is_ok());
        assert!(Atom::new("cat", None, Some(0)).is_err());
        assert!(Atom::new("cat", None, Some(11)).is_err());
    }

    #[test]
    fn atom_identity_is_all_fields() {
        let a = Atom::new("cat", Some(Position::Right), None).unwrap();
        let b = Atom::new("cat", Some(Position::Left), None).unwrap();
        let c = Atom::new("CAT", Some(Position::Right), None).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn printing_parenthesizes_nested_groups() {
        let f = Formula::and2(Formula::and2(Formula::var("p"), Formula::var("q")), Formula::var("r"));
        assert_eq!(f.to_string(), "(p & q) & r");
        let g = Formula::not(Formula::or2(Formula::var("p"), Formula::not(Formula::var("q"))));
        assert_eq!(g.to_string(), "!(p | !q)");
    }

    #[test]
    fn and_requires_two_operands() {
        assert!(Formula::and(vec![Formula::var("cat")]).is_err());
        assert!(Formula::or(vec![]).is_err());
    }
}
