use std::collections::{BTreeMap, HashMap};

use super::{Atom, Formula, LogicError};

pub type Assignment = HashMap<Atom, bool>;

/// Truth tables are enumerated exhaustively; 2^20 rows is the ceiling.
pub const MAX_EQUIVALENCE_ATOMS: usize = 20;

pub fn evaluate(f: &Formula, assignment: &Assignment) -> Result<bool, LogicError> {
    Ok(match f {
        Formula::Atom(a) => *assignment
            .get(a)
            .ok_or_else(|| LogicError::MissingAtom(a.clone()))?,
        Formula::Not(c) => !evaluate(c, assignment)?,
        Formula::And(cs) => {
            // Every child is evaluated so a missing atom is always reported.
            let mut acc = true;
            for c in cs {
                acc &= evaluate(c, assignment)?;
            }
            acc
        }
        Formula::Or(cs) => {
            let mut acc = false;
            for c in cs {
                acc |= evaluate(c, assignment)?;
            }
            acc
        }
    })
}

/// True iff `f` and `g` agree on every assignment over the union of their atoms.
pub fn equivalent(f: &Formula, g: &Formula) -> Result<bool, LogicError> {
    counterexample(f, g).map(|c| c.is_none())
}

/// The first assignment (in binary counting order over sorted atoms) on which
/// `f` and `g` disagree, or `None` when they are equivalent.
pub fn counterexample(f: &Formula, g: &Formula) -> Result<Option<BTreeMap<Atom, bool>>, LogicError> {
    let mut atoms = f.atoms();
    atoms.extend(g.atoms());
    if atoms.len() > MAX_EQUIVALENCE_ATOMS {
        return Err(LogicError::AtomBudgetExceeded {
            count: atoms.len(),
            max: MAX_EQUIVALENCE_ATOMS,
        });
    }
    let index: HashMap<&Atom, usize> = atoms.iter().enumerate().map(|(i, a)| (a, i)).collect();
    let fi = Indexed::compile(f, &index);
    let gi = Indexed::compile(g, &index);
    for row in 0u32..(1u32 << atoms.len()) {
        if fi.eval(row) != gi.eval(row) {
            let assignment = atoms
                .iter()
                .enumerate()
                .map(|(i, a)| (a.clone(), row & (1 << i) != 0))
                .collect();
            return Ok(Some(assignment));
        }
    }
    Ok(None)
}

/// Formula with atoms replaced by bit indices, for fast row evaluation.
enum Indexed {
    Var(usize),
    Not(Box<Indexed>),
    And(Vec<Indexed>),
    Or(Vec<Indexed>),
}

impl Indexed {
    fn compile(f: &Formula, index: &HashMap<&Atom, usize>) -> Self {
        match f {
            Formula::Atom(a) => Indexed::Var(index[a]),
            Formula::Not(c) => Indexed::Not(Box::new(Self::compile(c, index))),
            Formula::And(cs) => Indexed::And(cs.iter().map(|c| Self::compile(c, index)).collect()),
            Formula::Or(cs) => Indexed::Or(cs.iter().map(|c| Self::compile(c, index)).collect()),
        }
    }

    fn eval(&self, row: u32) -> bool {
        match self {
            Indexed::Var(i) => row & (1 << i) != 0,
            Indexed::Not(c) => !c.eval(row),
            Indexed::And(cs) => cs.iter().all(|c| c.eval(row)),
            Indexed::Or(cs) => cs.iter().any(|c| c.eval(row)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_formula;

    fn assign(pairs: &[(&str, bool)]) -> Assignment {
        pairs
            .iter()
            .map(|(e, v)| (Atom::new(e, None, None).unwrap(), *v))
            .collect()
    }

    #[test]
    fn conjunction_rows() {
        let f = parse_formula("cat & dog").unwrap();
        assert!(evaluate(&f, &assign(&[("cat", true), ("dog", true)])).unwrap());
        assert!(!evaluate(&f, &assign(&[("cat", true), ("dog", false)])).unwrap());
    }

    #[test]
    fn demorgan_lhs_row() {
        // !(!F & !F) = !(T & T) = F
        let f = parse_formula("!(!cat & !dog)").unwrap();
        assert!(!evaluate(&f, &assign(&[("cat", false), ("dog", false)])).unwrap());
    }

    #[test]
    fn missing_atom_is_named() {
        let f = parse_formula("cat & dog").unwrap();
        let err = evaluate(&f, &assign(&[("cat", true)])).unwrap_err();
        assert_eq!(err, LogicError::MissingAtom(Atom::new("dog", None, None).unwrap()));
        assert_eq!(err.to_string(), "assignment does not cover atom `dog`");
    }

    #[test]
    fn table_one_equivalences() {
        let eq = |a: &str, b: &str| equivalent(&parse_formula(a).unwrap(), &parse_formula(b).unwrap()).unwrap();
        assert!(eq("p & q", "q & p"));
        assert!(eq("!(p | q)", "!p & !q"));
        assert!(!eq("p & q", "p | q"));
    }

    #[test]
    fn counterexample_for_and_vs_or() {
        let cx = counterexample(&parse_formula("p & q").unwrap(), &parse_formula("p | q").unwrap())
            .unwrap()
            .unwrap();
        let p = Atom::new("p", None, None).unwrap();
        let q = Atom::new("q", None, None).unwrap();
        assert_ne!(cx[&p], cx[&q]);
    }

    #[test]
    fn budget_guard() {
        let many: Vec<String> = (0..21).map(|i| format!("e{i}")).collect();
        let f = parse_formula(&many.join(" & ")).unwrap();
        assert_eq!(
            equivalent(&f, &f).unwrap_err(),
            LogicError::AtomBudgetExceeded { count: 21, max: 20 }
        );
        let f20 = parse_formula(&many[..20].join(" | ")).unwrap();
        assert!(equivalent(&f20, &f20).unwrap());
    }
}
