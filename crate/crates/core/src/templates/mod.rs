//! Prompt-pair templates and their instantiation.
//!
//! A [`TemplatePair`] holds two natural-language skeletons with `(e1)`,
//! `(e2)`, `(e3)` entity slots and the propositional encoding of each side
//! over slot atoms named `e1`, `e2`, `e3`. Rendering substitutes entity
//! labels with the right article or number agreement; the scene semantics
//! describe what a faithful image of either prompt must contain.

mod registry;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inflect::{pluralize, parse_number_word, with_article};
use crate::logic::{is_valid_label, Atom, Formula, Law, LogicError, Position};

pub use registry::{
    find_template, logic_templates, numbering_template, template_registry,
    DEFAULT_NUMBERING_ENTITIES,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {id} takes {expected} entities, got {got}")]
    Arity { id: String, expected: usize, got: usize },
    #[error("entity {0:?} appears more than once")]
    DuplicateEntity(String),
    #[error("invalid entity label {0:?}")]
    InvalidEntity(String),
    #[error("template {id} requires a count")]
    MissingCount { id: String },
    #[error("template {id} does not take a count")]
    UnexpectedCount { id: String },
    #[error("template {id} is for count {expected}, got {got}")]
    CountMismatch { id: String, expected: u8, got: u8 },
    #[error("template {id} numbers {expected:?}, but the numbered slot holds {got:?}")]
    NumberedEntityMismatch { id: String, expected: String, got: String },
    #[error(transparent)]
    Logic(#[from] LogicError),
}

/// Law family of a template. Numbering is commutative conjunction with a
/// counted entity, kept separate for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateLaw {
    Logic(Law),
    Numbering,
}

impl TemplateLaw {
    pub const ALL: [TemplateLaw; 6] = [
        TemplateLaw::Logic(Law::Commutative),
        TemplateLaw::Logic(Law::Associative),
        TemplateLaw::Logic(Law::Distributive),
        TemplateLaw::Logic(Law::Complement),
        TemplateLaw::Logic(Law::Demorgan),
        TemplateLaw::Numbering,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateLaw::Logic(l) => l.as_str(),
            TemplateLaw::Numbering => "numbering",
        }
    }
}

impl fmt::Display for TemplateLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateLaw {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "numbering" {
            return Ok(TemplateLaw::Numbering);
        }
        Law::from_name(s)
            .map(TemplateLaw::Logic)
            .ok_or_else(|| format!("unknown law {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modifier {
    And,
    Or,
    X,
    Y,
    /// Numbering category with the given count (`n1`..`n10`).
    Count(u8),
}

impl Modifier {
    pub fn axis(self) -> Option<Axis> {
        match self {
            Modifier::X => Some(Axis::X),
            Modifier::Y => Some(Axis::Y),
            _ => None,
        }
    }

    pub fn kind(self) -> ModifierKind {
        match self {
            Modifier::And => ModifierKind::And,
            Modifier::Or => ModifierKind::Or,
            Modifier::X => ModifierKind::X,
            Modifier::Y => ModifierKind::Y,
            Modifier::Count(_) => ModifierKind::Number,
        }
    }
}

impl fmt::Display for Modifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modifier::And => f.write_str("and"),
            Modifier::Or => f.write_str("or"),
            Modifier::X => f.write_str("x"),
            Modifier::Y => f.write_str("y"),
            Modifier::Count(n) => write!(f, "n{n}"),
        }
    }
}

impl FromStr for Modifier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "and" => Ok(Modifier::And),
            "or" => Ok(Modifier::Or),
            "x" => Ok(Modifier::X),
            "y" => Ok(Modifier::Y),
            _ => s
                .strip_prefix('n')
                .and_then(|n| n.parse::<u8>().ok())
                .filter(|n| (1..=10).contains(n))
                .map(Modifier::Count)
                .ok_or_else(|| format!("unknown modifier {s:?}")),
        }
    }
}

/// Modifier without the count, used for suite filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModifierKind {
    And,
    Or,
    X,
    Y,
    Number,
}

macro_rules! serde_via_str {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

serde_via_str!(TemplateLaw);
serde_via_str!(Modifier);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    LeftOf,
    RightOf,
    Above,
    Below,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExpectedRelation {
    pub subject: String,
    pub relation: Relation,
    pub object: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplatePair {
    pub id: String,
    pub law: TemplateLaw,
    pub modifier: Modifier,
    pub slots: usize,
    pub skeleton_a: String,
    pub skeleton_b: String,
    /// Encodings over slot atoms `e1`..`e3`.
    pub formula_a: Formula,
    pub formula_b: Formula,
    /// For numbering categories: the entity that must fill slot `e2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numbered_entity: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub expected_entities: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<Axis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_relations: Option<Vec<ExpectedRelation>>,
}

impl SceneSpec {
    pub fn expected_count(&self, label: &str) -> u32 {
        self.expected_entities.get(label).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u32 {
        self.expected_entities.values().sum()
    }
}

impl TemplatePair {
    pub fn axis(&self) -> Option<Axis> {
        self.modifier.axis()
    }

    pub fn count(&self) -> Option<u8> {
        match self.modifier {
            Modifier::Count(n) => Some(n),
            _ => None,
        }
    }

    /// Slot placeholders present in `skeleton`, as 1-based indices.
    pub fn placeholders(skeleton: &str) -> Vec<usize> {
        let mut out = Vec::new();
        let mut rest = skeleton;
        while let Some(i) = rest.find("(e") {
            rest = &rest[i + 2..];
            if let Some(end) = rest.find(')') {
                if let Ok(n) = rest[..end].parse::<usize>() {
                    out.push(n);
                }
            }
        }
        out
    }

    /// Substitutes entity labels into both formulas.
    pub fn instantiate(&self, entities: &[&str]) -> Result<(Formula, Formula), TemplateError> {
        let map = |f: &Formula| {
            f.map_atoms(&mut |a: &Atom| {
                let slot: usize = a.entity()[1..].parse().expect("slot atom");
                a.with_entity(entities[slot - 1])
            })
        };
        Ok((map(&self.formula_a)?, map(&self.formula_b)?))
    }

    fn check_args(&self, entities: &[&str], count: Option<u8>) -> Result<Vec<String>, TemplateError> {
        if entities.len() != self.slots {
            return Err(TemplateError::Arity {
                id: self.id.clone(),
                expected: self.slots,
                got: entities.len(),
            });
        }
        let labels: Vec<String> = entities.iter().map(|e| e.trim().to_lowercase()).collect();
        let mut seen = HashSet::new();
        for l in &labels {
            if !is_valid_label(l) {
                return Err(TemplateError::InvalidEntity(l.clone()));
            }
            if !seen.insert(l.as_str()) {
                return Err(TemplateError::DuplicateEntity(l.clone()));
            }
        }
        match (self.count(), count) {
            (Some(_), None) => return Err(TemplateError::MissingCount { id: self.id.clone() }),
            (None, Some(_)) => return Err(TemplateError::UnexpectedCount { id: self.id.clone() }),
            (Some(expected), Some(got)) if expected != got => {
                return Err(TemplateError::CountMismatch {
                    id: self.id.clone(),
                    expected,
                    got,
                })
            }
            _ => {}
        }
        if let Some(numbered) = &self.numbered_entity {
            if labels[1] != *numbered {
                return Err(TemplateError::NumberedEntityMismatch {
                    id: self.id.clone(),
                    expected: numbered.clone(),
                    got: labels[1].clone(),
                });
            }
        }
        Ok(labels)
    }
}

/// Renders both prompts of a pair.
///
/// Slots become "a cat" / "an apple"; after "no" they are bare ("no cat");
/// after a number word they agree in number ("two dogs").
pub fn render(
    tp: &TemplatePair,
    entities: &[&str],
    count: Option<u8>,
) -> Result<(String, String), TemplateError> {
    let labels = tp.check_args(entities, count)?;
    Ok((
        render_skeleton(&tp.skeleton_a, &labels),
        render_skeleton(&tp.skeleton_b, &labels),
    ))
}

fn render_skeleton(skeleton: &str, labels: &[String]) -> String {
    let mut out = String::with_capacity(skeleton.len() + 32);
    let mut rest = skeleton;
    while let Some(start) = rest.find("(e") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find(')').expect("closed placeholder");
        let slot: usize = after[..end].parse().expect("numeric placeholder");
        let label = &labels[slot - 1];
        let prev = out.split_whitespace().last().unwrap_or("").to_lowercase();
        if prev == "no" {
            out.push_str(label);
        } else if let Some(n) = parse_number_word(&prev) {
            if n == 1 {
                out.push_str(label);
            } else {
                out.push_str(&pluralize(label));
            }
        } else {
            out.push_str(&with_article(label));
        }
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    if !out.ends_with('.') {
        out.push('.');
    }
    out
}

/// The scene both prompts describe.
///
/// Derived from the atoms of the first formula: every slot entity is
/// expected once (or with its count), double negations read as presence,
/// and positional atoms yield pairwise relations along the template axis.
pub fn expected_semantics(
    tp: &TemplatePair,
    entities: &[&str],
    count: Option<u8>,
) -> Result<SceneSpec, TemplateError> {
    let labels = tp.check_args(entities, count)?;
    let mut slots: Vec<(Option<Position>, u32)> = vec![(None, 1); tp.slots];
    for atom in tp.formula_a.atoms() {
        let slot: usize = atom.entity()[1..].parse().expect("slot atom");
        let entry = &mut slots[slot - 1];
        if atom.position().is_some() {
            entry.0 = atom.position();
        }
        if let Some(c) = atom.count() {
            entry.1 = u32::from(c);
        }
    }

    let expected_entities = labels
        .iter()
        .zip(&slots)
        .map(|(l, (_, c))| (l.clone(), *c))
        .collect();

    let axis = tp.axis();
    let expected_relations = axis.map(|axis| {
        let mut rels = Vec::new();
        for i in 0..tp.slots {
            for j in i + 1..tp.slots {
                let (Some(pi), Some(pj)) = (slots[i].0, slots[j].0) else {
                    continue;
                };
                let (ri, rj) = (rank(pi), rank(pj));
                if ri == rj {
                    continue;
                }
                let relation = match (axis, ri < rj) {
                    (Axis::X, true) => Relation::LeftOf,
                    (Axis::X, false) => Relation::RightOf,
                    (Axis::Y, true) => Relation::Above,
                    (Axis::Y, false) => Relation::Below,
                };
                rels.push(ExpectedRelation {
                    subject: labels[i].clone(),
                    relation,
                    object: labels[j].clone(),
                });
            }
        }
        rels
    });

    Ok(SceneSpec {
        expected_entities,
        axis,
        expected_relations,
    })
}

// Ascending image coordinate: left < middle < right, top < middle < bottom.
fn rank(p: Position) -> u8 {
    match p {
        Position::Left | Position::Top => 0,
        Position::Middle => 1,
        Position::Right | Position::Bottom => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{apply_law, equivalent, LawVariant};

    fn get(id: &str) -> TemplatePair {
        find_template(id).unwrap_or_else(|| panic!("no template {id}"))
    }

    #[test]
    fn registry_shape() {
        let reg = template_registry();
        assert_eq!(reg.len(), 60);
        let logic = reg.iter().filter(|t| matches!(t.law, TemplateLaw::Logic(_))).count();
        assert_eq!(logic, 20);
        assert_eq!(reg.iter().filter(|t| t.law == TemplateLaw::Numbering).count(), 40);
        // Tables 3 and 4 together carry ten positional rows.
        assert_eq!(reg.iter().filter(|t| t.axis().is_some()).count(), 10);
        let ids: HashSet<_> = reg.iter().map(|t| t.id.as_str()).collect();
        assert_eq!(ids.len(), 60);
        for law in Law::ALL {
            let mods: Vec<_> = reg
                .iter()
                .filter(|t| t.law == TemplateLaw::Logic(law))
                .map(|t| t.modifier)
                .collect();
            assert_eq!(mods, [Modifier::And, Modifier::Or, Modifier::X, Modifier::Y], "{law}");
        }
    }

    #[test]
    fn skeleton_text() {
        assert_eq!(get("commutative-and").skeleton_a, "There is (e1) and (e2).");
    }

    #[test]
    fn placeholders_match_slots() {
        for t in template_registry() {
            for sk in [&t.skeleton_a, &t.skeleton_b] {
                let mut p = TemplatePair::placeholders(sk);
                p.sort_unstable();
                p.dedup();
                assert_eq!(p, (1..=t.slots).collect::<Vec<_>>(), "{}", t.id);
            }
            let atoms: HashSet<String> =
                t.formula_a.atoms().iter().map(|a| a.entity().to_string()).collect();
            assert_eq!(atoms.len(), t.slots, "{}", t.id);
        }
    }

    #[test]
    fn slot_formulas_are_equivalent() {
        for t in template_registry() {
            assert!(equivalent(&t.formula_a, &t.formula_b).unwrap(), "{}", t.id);
        }
    }

    #[test]
    fn single_rewrite_witnesses() {
        // Where one root rewrite carries side a to side b, check it literally.
        for (id, law, v) in [
            ("commutative-and", Law::Commutative, LawVariant::And),
            ("commutative-or", Law::Commutative, LawVariant::Or),
            ("commutative-x", Law::Commutative, LawVariant::And),
            ("associative-and", Law::Associative, LawVariant::And),
            ("associative-x", Law::Associative, LawVariant::And),
            ("associative-y", Law::Associative, LawVariant::And),
            ("distributive-and", Law::Distributive, LawVariant::And),
            ("distributive-x", Law::Distributive, LawVariant::And),
            ("demorgan-and", Law::Demorgan, LawVariant::And),
            ("demorgan-or", Law::Demorgan, LawVariant::Or),
            ("demorgan-y", Law::Demorgan, LawVariant::And),
        ] {
            let t = get(id);
            assert_eq!(apply_law(&t.formula_a, law, v).unwrap(), t.formula_b, "{id}");
        }
        for id in ["complement-and", "complement-or", "complement-x", "complement-y"] {
            let t = get(id);
            assert_eq!(apply_law(&t.formula_b, Law::Complement, LawVariant::And).unwrap(), t.formula_a);
        }
    }

    #[test]
    fn render_examples() {
        assert_eq!(
            render(&get("commutative-and"), &["cat", "dog"], None).unwrap(),
            ("There is a cat and a dog.".into(), "There is a dog and a cat.".into())
        );
        assert_eq!(
            render(&numbering_template(2, None), &["cat", "dog"], Some(2)).unwrap(),
            ("There is a cat and two dogs.".into(), "There are two dogs and a cat.".into())
        );
        assert_eq!(
            render(&get("complement-and"), &["cat", "dog"], None).unwrap(),
            (
                "There is a cat and a dog.".into(),
                "It is not the case that there is not a cat and a dog.".into()
            )
        );
        assert_eq!(
            render(&get("demorgan-or"), &["apple", "cow"], None).unwrap().1,
            "There isn't no apple and no cow and there isn't no cow and no apple."
        );
        assert_eq!(
            render(&numbering_template(1, None), &["apple", "banana"], Some(1)).unwrap(),
            ("There is an apple and one banana.".into(), "There is one banana and an apple.".into())
        );
    }

    #[test]
    fn render_errors() {
        let t = get("commutative-and");
        assert!(matches!(render(&t, &["cat"], None), Err(TemplateError::Arity { .. })));
        assert!(matches!(render(&t, &["cat", "cat"], None), Err(TemplateError::DuplicateEntity(_))));
        assert!(matches!(render(&t, &["cat", "dog"], Some(2)), Err(TemplateError::UnexpectedCount { .. })));
        let n = get("numbering-dog-3");
        assert!(matches!(render(&n, &["cat", "dog"], None), Err(TemplateError::MissingCount { .. })));
        assert!(matches!(render(&n, &["cat", "dog"], Some(4)), Err(TemplateError::CountMismatch { .. })));
        assert!(matches!(
            render(&n, &["dog", "cat"], Some(3)),
            Err(TemplateError::NumberedEntityMismatch { .. })
        ));
        assert!(render(&n, &["cat", "dog"], Some(3)).is_ok());
    }

    #[test]
    fn semantics_examples() {
        let s = expected_semantics(&get("commutative-x"), &["cat", "dog"], None).unwrap();
        assert_eq!(s.expected_entities, BTreeMap::from([("cat".into(), 1), ("dog".into(), 1)]));
        assert_eq!(s.axis, Some(Axis::X));
        assert_eq!(
            s.expected_relations.unwrap(),
            vec![ExpectedRelation { subject: "cat".into(), relation: Relation::RightOf, object: "dog".into() }]
        );

        let s = expected_semantics(&get("complement-and"), &["cat", "dog"], None).unwrap();
        assert_eq!(s.expected_entities, BTreeMap::from([("cat".into(), 1), ("dog".into(), 1)]));
        assert_eq!(s.axis, None);
        assert_eq!(s.expected_relations, None);

        let s = expected_semantics(&numbering_template(5, None), &["cat", "banana"], Some(5)).unwrap();
        assert_eq!(s.expected_entities, BTreeMap::from([("cat".into(), 1), ("banana".into(), 5)]));

        let s = expected_semantics(&get("associative-y"), &["cat", "dog", "cow"], None).unwrap();
        let rels = s.expected_relations.unwrap();
        assert_eq!(rels.len(), 3);
        assert_eq!(rels[0].relation, Relation::Below);
        assert_eq!(rels[2], ExpectedRelation { subject: "dog".into(), relation: Relation::Above, object: "cow".into() });
    }

    #[test]
    fn modifier_strings_roundtrip() {
        for m in [Modifier::And, Modifier::Or, Modifier::X, Modifier::Y, Modifier::Count(7)] {
            assert_eq!(m.to_string().parse::<Modifier>().unwrap(), m);
        }
        assert!("n11".parse::<Modifier>().is_err());
    }
}
