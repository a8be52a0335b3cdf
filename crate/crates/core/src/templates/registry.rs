use crate::inflect::number_word;
use crate::logic::{parse_formula, Law, MAX_COUNT, MIN_COUNT};

use super::{Modifier, TemplateLaw, TemplatePair};

/// Numbered entities of the default numbering categories.
pub const DEFAULT_NUMBERING_ENTITIES: [&str; 4] = ["cat", "dog", "apple", "banana"];

struct Row {
    law: Law,
    modifier: Modifier,
    slots: usize,
    skeleton_a: &'static str,
    skeleton_b: &'static str,
    formula_a: &'static str,
    formula_b: &'static str,
}

const fn row(
    law: Law,
    modifier: Modifier,
    slots: usize,
    skeleton_a: &'static str,
    skeleton_b: &'static str,
    formula_a: &'static str,
    formula_b: &'static str,
) -> Row {
    Row {
        law,
        modifier,
        slots,
        skeleton_a,
        skeleton_b,
        formula_a,
        formula_b,
    }
}

use Law::*;
use Modifier::{And, Or, X, Y};

// Bracketed groupings in the source tables are grouping marks for the
// reader, not prompt text, so they are dropped here.
#[rustfmt::skip]
const LOGIC_ROWS: [Row; 20] = [
    row(Commutative, And, 2,
        "There is (e1) and (e2).",
        "There is (e2) and (e1).",
        "e1 & e2",
        "e2 & e1"),
    row(Commutative, Or, 2,
        "There is (e1) and (e2) or (e2) and (e1).",
        "There is (e2) and (e1) or (e1) and (e2).",
        "(e1 & e2) | (e2 & e1)",
        "(e2 & e1) | (e1 & e2)"),
    row(Commutative, X, 2,
        "There is (e1) on the right and (e2) on the left.",
        "There is (e2) on the left and (e1) on the right.",
        "e1@right & e2@left",
        "e2@left & e1@right"),
    row(Commutative, Y, 2,
        "There is (e1) on the bottom and (e2) on top.",
        "There is (e2) on top and (e1) on the bottom.",
        "e1@bottom & e2@top",
        "e2@top & e1@bottom"),
    row(Associative, And, 3,
        "There is both (e1) and (e2), along with (e3).",
        "There is (e1), along with both (e2) and (e3).",
        "(e1 & e2) & e3",
        "e1 & (e2 & e3)"),
    row(Associative, Or, 3,
        "There is either (e1) and (e2) and (e3) or (e1) and (e3) and (e2), otherwise there is (e2) and (e1) and (e3).",
        "There is (e1) and (e2) and (e3), otherwise there is (e1) and (e3) and (e2) or (e2) and (e1) and (e3).",
        "((e1 & e2 & e3) | (e1 & e3 & e2)) | (e2 & e1 & e3)",
        "(e1 & e2 & e3) | ((e1 & e3 & e2) | (e2 & e1 & e3))"),
    row(Associative, X, 3,
        "There is both (e1) on the right and (e2) on the left, along with (e3) in the middle.",
        "There is (e1) on the right, along with both (e2) on the left and (e3) in the middle.",
        "(e1@right & e2@left) & e3@middle",
        "e1@right & (e2@left & e3@middle)"),
    row(Associative, Y, 3,
        "There is both (e1) on the bottom and (e2) on top, along with (e3) in the middle.",
        "There is (e1) on the bottom, along with both (e2) on top and (e3) in the middle.",
        "(e1@bottom & e2@top) & e3@middle",
        "e1@bottom & (e2@top & e3@middle)"),
    row(Distributive, And, 3,
        "There is (e1) with either both (e2) and (e3) or both (e3) and (e2).",
        "There is (e1) with both (e2) and (e3) or (e1) with both (e3) and (e2).",
        "e1 & ((e2 & e3) | (e3 & e2))",
        "(e1 & (e2 & e3)) | (e1 & (e3 & e2))"),
    row(Distributive, Or, 3,
        "There is either (e1), (e2) and (e3) or both (e1), (e3) and (e2) and (e2), (e3) and (e1).",
        "There is either (e1), (e2) and (e3) or (e1), (e3) and (e2), and there is either (e1), (e2) and (e3) or (e2), (e3) and (e1).",
        "(e1 & e2 & e3) | ((e1 & e3 & e2) & (e2 & e3 & e1))",
        "((e1 & e2 & e3) | (e1 & e3 & e2)) & ((e1 & e2 & e3) | (e2 & e3 & e1))"),
    row(Distributive, X, 3,
        "There is (e1) on the right with either both (e2) on the left and (e3) in the middle or both (e3) in the middle and (e2) on the left.",
        "There is (e1) on the right with both (e2) on the left and (e3) in the middle or (e1) on the right with both (e3) in the middle and (e2) on the left.",
        "e1@right & ((e2@left & e3@middle) | (e3@middle & e2@left))",
        "(e1@right & (e2@left & e3@middle)) | (e1@right & (e3@middle & e2@left))"),
    row(Distributive, Y, 3,
        "There is (e1) on the bottom with either both (e2) on top and (e3) in the middle or both (e3) in the middle and (e2) on top.",
        "There is (e1) on the bottom with both (e2) on top and (e3) in the middle or (e1) on the bottom with both (e3) in the middle and (e2) on top.",
        "e1@bottom & ((e2@top & e3@middle) | (e3@middle & e2@top))",
        "(e1@bottom & (e2@top & e3@middle)) | (e1@bottom & (e3@middle & e2@top))"),
    row(Complement, And, 2,
        "There is (e1) and (e2).",
        "It is not the case that there is not (e1) and (e2).",
        "e1 & e2",
        "!!(e1 & e2)"),
    row(Complement, Or, 2,
        "There is (e1) and (e2) or (e2) and (e1).",
        "It is not the case that there is not (e1) and (e2) or (e2) and (e1).",
        "(e1 & e2) | (e2 & e1)",
        "!!((e1 & e2) | (e2 & e1))"),
    row(Complement, X, 2,
        "There is (e1) on the right and (e2) on the left.",
        "It is not the case that there is not (e1) on the right and (e2) on the left.",
        "e1@right & e2@left",
        "!!(e1@right & e2@left)"),
    row(Complement, Y, 2,
        "There is (e1) on the bottom and (e2) on top.",
        "It is not the case that there is not (e1) on the bottom and (e2) on top.",
        "e1@bottom & e2@top",
        "!!(e1@bottom & e2@top)"),
    row(Demorgan, And, 2,
        "It is not the case that there is no (e1) and no (e2) and no (e2) and no (e1).",
        "There isn't no (e1) and no (e2) or there isn't no (e2) and no (e1).",
        "!((!e1 & !e2) & (!e2 & !e1))",
        "!(!e1 & !e2) | !(!e2 & !e1)"),
    row(Demorgan, Or, 2,
        "It is not the case that there is no (e1) and no (e2) or no (e2) and no (e1).",
        "There isn't no (e1) and no (e2) and there isn't no (e2) and no (e1).",
        "!((!e1 & !e2) | (!e2 & !e1))",
        "!(!e1 & !e2) & !(!e2 & !e1)"),
    row(Demorgan, X, 2,
        "It is not the case that there is no (e1) on the right and no (e2) on the left and no (e2) on the left and no (e1) on the right.",
        "There isn't no (e1) on the right and no (e2) on the left or there isn't no (e2) on the left and no (e1) on the right.",
        "!((!e1@right & !e2@left) & (!e2@left & !e1@right))",
        "!(!e1@right & !e2@left) | !(!e2@left & !e1@right)"),
    row(Demorgan, Y, 2,
        "It is not the case that there is no (e1) on the bottom and no (e2) on top and no (e2) on top and no (e1) on the bottom.",
        "There isn't no (e1) on the bottom and no (e2) on top or there isn't no (e2) on top and no (e1) on the bottom.",
        "!((!e1@bottom & !e2@top) & (!e2@top & !e1@bottom))",
        "!(!e1@bottom & !e2@top) | !(!e2@top & !e1@bottom)"),
];

/// The five-law templates, in registry order.
pub fn logic_templates() -> Vec<TemplatePair> {
    LOGIC_ROWS
        .iter()
        .map(|r| TemplatePair {
            id: format!("{}-{}", r.law, r.modifier),
            law: TemplateLaw::Logic(r.law),
            modifier: r.modifier,
            slots: r.slots,
            skeleton_a: r.skeleton_a.to_string(),
            skeleton_b: r.skeleton_b.to_string(),
            formula_a: parse_formula(r.formula_a).expect("registry formula parses"),
            formula_b: parse_formula(r.formula_b).expect("registry formula parses"),
            numbered_entity: None,
        })
        .collect()
}

/// The parametric numbering template: a commutative conjunction where the
/// second entity carries a count. With `numbered` set, the template is bound
/// to one numbered entity (one numbering category); otherwise any entity may
/// fill the numbered slot.
///
/// Panics if `count` is outside 1..=10.
pub fn numbering_template(count: u8, numbered: Option<&str>) -> TemplatePair {
    assert!((MIN_COUNT..=MAX_COUNT).contains(&count), "count {count} out of range");
    let word = number_word(count).expect("count in range");
    let be = if count == 1 { "is" } else { "are" };
    let id = match numbered {
        Some(e) => format!("numbering-{}-{count}", e.replace(' ', "_")),
        None => format!("numbering-{count}"),
    };
    TemplatePair {
        id,
        law: TemplateLaw::Numbering,
        modifier: Modifier::Count(count),
        slots: 2,
        skeleton_a: format!("There is (e1) and {word} (e2)."),
        skeleton_b: format!("There {be} {word} (e2) and (e1)."),
        formula_a: parse_formula(&format!("e1 & e2#{count}")).expect("numbering formula"),
        formula_b: parse_formula(&format!("e2#{count} & e1")).expect("numbering formula"),
        numbered_entity: numbered.map(str::to_string),
    }
}

/// All 60 prompt-pair categories: 20 logic templates followed by the 40
/// numbering categories (four entities × counts one through ten).
pub fn template_registry() -> Vec<TemplatePair> {
    let mut out = logic_templates();
    for entity in DEFAULT_NUMBERING_ENTITIES {
        for count in MIN_COUNT..=MAX_COUNT {
            out.push(numbering_template(count, Some(entity)));
        }
    }
    out
}

pub fn find_template(id: &str) -> Option<TemplatePair> {
    if let Some(t) = template_registry().into_iter().find(|t| t.id == id) {
        return Some(t);
    }
    // Unbound numbering templates ("numbering-3") are not registry entries
    // but are addressable.
    let n: u8 = id.strip_prefix("numbering-")?.parse().ok()?;
    (MIN_COUNT..=MAX_COUNT)
        .contains(&n)
        .then(|| numbering_template(n, None))
}
