//! Root-level equivalence rewrites.
//!
//! Each law maps its left-hand pattern to the right-hand side:
//!
//! | law          | and                         | or                          |
//! |--------------|-----------------------------|-----------------------------|
//! | commutative  | `P & Q` → `Q & P`           | `P \| Q` → `Q \| P`         |
//! | associative  | `(P & Q) & R` → `P & (Q & R)` | `(P \| Q) \| R` → `P \| (Q \| R)` |
//! | distributive | `P & (Q \| R)` → `(P & Q) \| (P & R)` | `P \| (Q & R)` → `(P \| Q) & (P \| R)` |
//! | complement   | `!!P` → `P`                 | same                        |
//! | demorgan     | `!(P & Q)` → `!P \| !Q`     | `!(P \| Q)` → `!P & !Q`     |
//!
//! N-ary nodes generalize naturally: commutative reverses the children,
//! distributive spreads over every disjunct (conjunct), De Morgan negates
//! every child.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Formula, LogicError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Law {
    Commutative,
    Associative,
    Distributive,
    Complement,
    Demorgan,
}

impl Law {
    pub const ALL: [Law; 5] = [
        Law::Commutative,
        Law::Associative,
        Law::Distributive,
        Law::Complement,
        Law::Demorgan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Law::Commutative => "commutative",
            Law::Associative => "associative",
            Law::Distributive => "distributive",
            Law::Complement => "complement",
            Law::Demorgan => "demorgan",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Law::ALL.into_iter().find(|l| l.as_str() == s)
    }
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LawVariant {
    And,
    Or,
}

impl LawVariant {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "and" => Some(LawVariant::And),
            "or" => Some(LawVariant::Or),
            _ => None,
        }
    }
}

impl fmt::Display for LawVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LawVariant::And => "and",
            LawVariant::Or => "or",
        })
    }
}

pub fn apply_law(f: &Formula, law: Law, variant: LawVariant) -> Result<Formula, LogicError> {
    let mismatch = |expected| LogicError::PatternMismatch {
        law,
        variant,
        expected,
    };
    match (law, variant) {
        (Law::Commutative, LawVariant::And) => match f {
            Formula::And(cs) => Ok(Formula::And(cs.iter().rev().cloned().collect())),
            _ => Err(mismatch("P & Q")),
        },
        (Law::Commutative, LawVariant::Or) => match f {
            Formula::Or(cs) => Ok(Formula::Or(cs.iter().rev().cloned().collect())),
            _ => Err(mismatch("P | Q")),
        },
        (Law::Associative, LawVariant::And) => match f {
            Formula::And(cs) if cs.len() == 2 => match &cs[0] {
                Formula::And(inner) if inner.len() == 2 => Ok(Formula::and2(
                    inner[0].clone(),
                    Formula::and2(inner[1].clone(), cs[1].clone()),
                )),
                _ => Err(mismatch("(P & Q) & R")),
            },
            _ => Err(mismatch("(P & Q) & R")),
        },
        (Law::Associative, LawVariant::Or) => match f {
            Formula::Or(cs) if cs.len() == 2 => match &cs[0] {
                Formula::Or(inner) if inner.len() == 2 => Ok(Formula::or2(
                    inner[0].clone(),
                    Formula::or2(inner[1].clone(), cs[1].clone()),
                )),
                _ => Err(mismatch("(P | Q) | R")),
            },
            _ => Err(mismatch("(P | Q) | R")),
        },
        (Law::Distributive, LawVariant::And) => match f {
            Formula::And(cs) if cs.len() == 2 => match &cs[1] {
                Formula::Or(alts) => Ok(Formula::Or(
                    alts.iter()
                        .map(|q| Formula::and2(cs[0].clone(), q.clone()))
                        .collect(),
                )),
                _ => Err(mismatch("P & (Q | R)")),
            },
            _ => Err(mismatch("P & (Q | R)")),
        },
        (Law::Distributive, LawVariant::Or) => match f {
            Formula::Or(cs) if cs.len() == 2 => match &cs[1] {
                Formula::And(parts) => Ok(Formula::And(
                    parts
                        .iter()
                        .map(|q| Formula::or2(cs[0].clone(), q.clone()))
                        .collect(),
                )),
                _ => Err(mismatch("P | (Q & R)")),
            },
            _ => Err(mismatch("P | (Q & R)")),
        },
        (Law::Complement, _) => match f {
            Formula::Not(inner) => match &**inner {
                Formula::Not(p) => Ok((**p).clone()),
                _ => Err(mismatch("!!P")),
            },
            _ => Err(mismatch("!!P")),
        },
        (Law::Demorgan, LawVariant::And) => match f {
            Formula::Not(inner) => match &**inner {
                Formula::And(cs) => Ok(Formula::Or(cs.iter().cloned().map(Formula::not).collect())),
                _ => Err(mismatch("!(P & Q)")),
            },
            _ => Err(mismatch("!(P & Q)")),
        },
        (Law::Demorgan, LawVariant::Or) => match f {
            Formula::Not(inner) => match &**inner {
                Formula::Or(cs) => Ok(Formula::And(cs.iter().cloned().map(Formula::not).collect())),
                _ => Err(mismatch("!(P | Q)")),
            },
            _ => Err(mismatch("!(P | Q)")),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{equivalent, parse_formula};

    fn rw(src: &str, law: Law, v: LawVariant) -> String {
        apply_law(&parse_formula(src).unwrap(), law, v).unwrap().to_string()
    }

    #[test]
    fn rewrites() {
        assert_eq!(rw("cat & dog", Law::Commutative, LawVariant::And), "dog & cat");
        assert_eq!(rw("cat | dog", Law::Commutative, LawVariant::Or), "dog | cat");
        assert_eq!(rw("!!cat", Law::Complement, LawVariant::And), "cat");
        assert_eq!(rw("!(cat | dog)", Law::Demorgan, LawVariant::Or), "!cat & !dog");
        assert_eq!(rw("!(cat & dog)", Law::Demorgan, LawVariant::And), "!cat | !dog");
        assert_eq!(rw("(p & q) & r", Law::Associative, LawVariant::And), "p & (q & r)");
        assert_eq!(rw("(p | q) | r", Law::Associative, LawVariant::Or), "p | (q | r)");
        assert_eq!(rw("p & (q | r)", Law::Distributive, LawVariant::And), "(p & q) | (p & r)");
        assert_eq!(rw("p | q & r", Law::Distributive, LawVariant::Or), "(p | q) & (p | r)");
    }

    #[test]
    fn rewrites_are_equivalences() {
        for (src, law, v) in [
            ("p & (q | r | s)", Law::Distributive, LawVariant::And),
            ("p | (q & r & s)", Law::Distributive, LawVariant::Or),
            ("!(a & b & c)", Law::Demorgan, LawVariant::And),
        ] {
            let f = parse_formula(src).unwrap();
            assert!(equivalent(&f, &apply_law(&f, law, v).unwrap()).unwrap(), "{src}");
        }
    }

    #[test]
    fn mismatches_describe_shape() {
        let err = apply_law(&parse_formula("cat | dog").unwrap(), Law::Commutative, LawVariant::And)
            .unwrap_err();
        assert_eq!(err.to_string(), "commutative/and does not apply: expected root of shape P & Q");
        assert!(apply_law(&parse_formula("!cat").unwrap(), Law::Complement, LawVariant::Or).is_err());
        assert!(apply_law(&parse_formula("p & q & r").unwrap(), Law::Associative, LawVariant::And).is_err());
        assert!(apply_law(&parse_formula("(p | q) & r").unwrap(), Law::Distributive, LawVariant::And).is_err());
    }
}
