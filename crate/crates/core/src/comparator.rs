//! Pairwise image comparison from detection results.
//!
//! Stage one compares entity multisets. Stage two, only for positional
//! cases whose multisets agree, compares the relative order of entity
//! centroids along the case axis.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{Detection, DetectionResult};
use crate::classifier::ErrorCategory;
use crate::inflect::singularize;
use crate::suite::TestCase;
use crate::templates::{Axis, Relation};

/// Namespace for detected labels outside the case's entities.
pub const EXTRA_PREFIX: &str = "extra:";

pub const DEFAULT_EPSILON_FRACTION: f64 = 0.01;

/// Default synonym table, applied after singularization.
pub const DEFAULT_SYNONYMS: &[(&str, &str)] = &[
    ("puppy", "dog"),
    ("doggy", "dog"),
    ("hound", "dog"),
    ("canine", "dog"),
    ("kitten", "cat"),
    ("kitty", "cat"),
    ("feline", "cat"),
    ("calf", "cow"),
    ("cattle", "cow"),
    ("bull", "cow"),
    ("ox", "cow"),
    ("foal", "horse"),
    ("pony", "horse"),
    ("lamb", "sheep"),
    ("ram", "sheep"),
    ("automobile", "car"),
    ("motorbike", "motorcycle"),
    ("aeroplane", "airplane"),
    ("plane", "airplane"),
    ("sofa", "couch"),
    ("television", "tv"),
    ("cellphone", "cell phone"),
    ("mobile phone", "cell phone"),
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtraLabelMode {
    /// Out-of-universe labels count toward presence differences.
    #[default]
    Count,
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComparatorConfig {
    pub epsilon_fraction: f64,
    pub extra_label_mode: ExtraLabelMode,
    /// Added to (and overriding) the default synonym table.
    pub synonyms: BTreeMap<String, String>,
}

impl Default for ComparatorConfig {
    fn default() -> Self {
        ComparatorConfig {
            epsilon_fraction: DEFAULT_EPSILON_FRACTION,
            extra_label_mode: ExtraLabelMode::Count,
            synonyms: BTreeMap::new(),
        }
    }
}

impl ComparatorConfig {
    pub fn violations(&self, prefix: &str) -> Vec<String> {
        let mut v = Vec::new();
        if !(0.0..0.5).contains(&self.epsilon_fraction) {
            v.push(format!(
                "{prefix}epsilon_fraction: {} is outside [0, 0.5)",
                self.epsilon_fraction
            ));
        }
        for (k, val) in &self.synonyms {
            if clean(k).is_empty() || clean(val).is_empty() {
                v.push(format!("{prefix}synonyms.{k}: empty label"));
            }
        }
        v
    }

    pub fn synonym_table(&self) -> SynonymTable {
        let mut t = SynonymTable::default();
        for (k, v) in &self.synonyms {
            t.0.insert(clean(k), clean(v));
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynonymTable(BTreeMap<String, String>);

impl Default for SynonymTable {
    fn default() -> Self {
        SynonymTable(
            DEFAULT_SYNONYMS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }
}

impl SynonymTable {
    pub fn empty() -> Self {
        SynonymTable(BTreeMap::new())
    }

    /// Lowercases, trims, collapses whitespace, singularizes the head noun
    /// and maps through the table.
    pub fn normalize(&self, raw: &str) -> String {
        let cleaned = clean(raw);
        if let Some(s) = self.0.get(&cleaned) {
            return s.clone();
        }
        let single = singularize(&cleaned);
        self.0.get(&single).cloned().unwrap_or(single)
    }
}

fn clean(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// The labels a case is about, keyed by normalized form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Universe {
    canonical: BTreeMap<String, String>,
}

impl Universe {
    pub fn new<'a>(labels: impl IntoIterator<Item = &'a str>, synonyms: &SynonymTable) -> Self {
        Universe {
            canonical: labels
                .into_iter()
                .map(|l| (synonyms.normalize(l), l.to_string()))
                .collect(),
        }
    }

    pub fn for_case(case: &TestCase, synonyms: &SynonymTable) -> Self {
        Universe::new(case.scene.expected_entities.keys().map(String::as_str), synonyms)
    }

    /// Canonical label for a raw detection, or the normalized label if it is
    /// outside the universe.
    pub fn resolve(&self, raw: &str, synonyms: &SynonymTable) -> Result<String, String> {
        let n = synonyms.normalize(raw);
        match self.canonical.get(&n) {
            Some(c) => Ok(c.clone()),
            None => Err(n),
        }
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.canonical.values().map(String::as_str)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMultiset {
    pub counts: BTreeMap<String, u32>,
    pub total: u32,
}

impl EntityMultiset {
    pub fn get(&self, label: &str) -> u32 {
        self.counts.get(label).copied().unwrap_or(0)
    }

    fn add(&mut self, label: String) {
        *self.counts.entry(label).or_insert(0) += 1;
        self.total += 1;
    }
}

pub fn entity_multiset(
    detections: &[Detection],
    universe: &Universe,
    synonyms: &SynonymTable,
    mode: ExtraLabelMode,
) -> EntityMultiset {
    let mut m = EntityMultiset::default();
    for d in detections {
        match universe.resolve(&d.label, synonyms) {
            Ok(label) => m.add(label),
            Err(other) if mode == ExtraLabelMode::Count => m.add(format!("{EXTRA_PREFIX}{other}")),
            Err(_) => {}
        }
    }
    m
}

pub type PresenceDiff = BTreeMap<String, (u32, u32)>;

/// Every label whose counts differ, with `(count_a, count_b)`.
pub fn compare_presence(a: &EntityMultiset, b: &EntityMultiset) -> PresenceDiff {
    let labels: BTreeSet<&String> = a.counts.keys().chain(b.counts.keys()).collect();
    labels
        .into_iter()
        .filter_map(|l| {
            let (ca, cb) = (a.get(l), b.get(l));
            (ca != cb).then(|| (l.clone(), (ca, cb)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    Before,
    After,
    Tied,
}

impl Order {
    pub fn flip(self) -> Order {
        match self {
            Order::Before => Order::After,
            Order::After => Order::Before,
            Order::Tied => Order::Tied,
        }
    }

    fn conflicts(self, other: Order) -> bool {
        matches!((self, other), (Order::Before, Order::After) | (Order::After, Order::Before))
    }
}

/// An entity instance: label plus its index in ascending axis order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceKey {
    pub label: String,
    pub index: u32,
}

impl fmt::Display for InstanceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.label, self.index)
    }
}

/// Pairwise orders between instances of different labels. Only the
/// canonical direction (`first < second`) is stored; [`OrderRelation::order`]
/// answers either direction.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderRelation {
    pub axis: Axis,
    pub relations: BTreeMap<(InstanceKey, InstanceKey), Order>,
    centroids: BTreeMap<InstanceKey, f64>,
}

impl OrderRelation {
    pub fn order(&self, i: &InstanceKey, j: &InstanceKey) -> Option<Order> {
        if i < j {
            self.relations.get(&(i.clone(), j.clone())).copied()
        } else {
            self.relations.get(&(j.clone(), i.clone())).map(|o| o.flip())
        }
    }

    pub fn centroid(&self, k: &InstanceKey) -> Option<f64> {
        self.centroids.get(k).copied()
    }
}

fn axis_coord(d: &Detection, axis: Axis) -> (f64, f64) {
    let (cx, cy) = d.bbox.centroid();
    match axis {
        Axis::X => (cx, cy),
        Axis::Y => (cy, cx),
    }
}

/// Orders in-universe instances by centroid along `axis`. Differences
/// within `epsilon_fraction` of the axis dimension are ties. Smaller y is
/// higher in the image.
pub fn relative_order(
    det: &DetectionResult,
    axis: Axis,
    universe: &Universe,
    synonyms: &SynonymTable,
    epsilon_fraction: f64,
) -> OrderRelation {
    let dim = f64::from(match axis {
        Axis::X => det.image_size.0,
        Axis::Y => det.image_size.1,
    });
    let eps = epsilon_fraction * dim;

    let mut by_label: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for d in &det.detections {
        if let Ok(label) = universe.resolve(&d.label, synonyms) {
            by_label.entry(label).or_default().push(axis_coord(d, axis));
        }
    }
    let mut centroids = BTreeMap::new();
    for (label, coords) in &mut by_label {
        coords.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
        for (i, (c, _)) in coords.iter().enumerate() {
            centroids.insert(
                InstanceKey {
                    label: label.clone(),
                    index: i as u32,
                },
                *c,
            );
        }
    }

    let keys: Vec<(&InstanceKey, f64)> = centroids.iter().map(|(k, c)| (k, *c)).collect();
    let mut relations = BTreeMap::new();
    for (n, (ki, ci)) in keys.iter().enumerate() {
        for (kj, cj) in &keys[n + 1..] {
            if ki.label == kj.label {
                continue;
            }
            let delta = cj - ci;
            let order = if delta.abs() <= eps {
                Order::Tied
            } else if delta > 0.0 {
                Order::Before
            } else {
                Order::After
            };
            relations.insert(((*ki).clone(), (*kj).clone()), order);
        }
    }
    OrderRelation {
        axis,
        relations,
        centroids,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionConflict {
    pub first: InstanceKey,
    pub second: InstanceKey,
    pub order_a: Order,
    pub order_b: Order,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub case_id: String,
    pub aligned: bool,
    pub presence_diff: PresenceDiff,
    pub position_diff: Vec<PositionConflict>,
    pub categories: Vec<ErrorCategory>,
    /// Misaligned but no category matched.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub uncategorized: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompareError {
    #[error("detection for case {found:?} passed to case {expected:?}")]
    CaseMismatch { expected: String, found: String },
}

/// Compares the two detection results of a case. Categories are left
/// empty; see [`crate::classifier::classify`].
pub fn compare_pair(
    case: &TestCase,
    det_a: &DetectionResult,
    det_b: &DetectionResult,
    config: &ComparatorConfig,
) -> Result<Verdict, CompareError> {
    for d in [det_a, det_b] {
        if d.image.case_id != case.case_id {
            return Err(CompareError::CaseMismatch {
                expected: case.case_id.clone(),
                found: d.image.case_id.clone(),
            });
        }
    }
    let synonyms = config.synonym_table();
    let universe = Universe::for_case(case, &synonyms);
    let ma = entity_multiset(&det_a.detections, &universe, &synonyms, config.extra_label_mode);
    let mb = entity_multiset(&det_b.detections, &universe, &synonyms, config.extra_label_mode);
    let presence_diff = compare_presence(&ma, &mb);

    let mut position_diff = Vec::new();
    let mut notes = Vec::new();
    if let (Some(axis), true) = (case.scene.axis, presence_diff.is_empty()) {
        let oa = relative_order(det_a, axis, &universe, &synonyms, config.epsilon_fraction);
        let ob = relative_order(det_b, axis, &universe, &synonyms, config.epsilon_fraction);
        for ((i, j), &order_a) in &oa.relations {
            if let Some(order_b) = ob.order(i, j) {
                if order_a.conflicts(order_b) {
                    position_diff.push(PositionConflict {
                        first: i.clone(),
                        second: j.clone(),
                        order_a,
                        order_b,
                    });
                }
            }
        }
        for (side, rel) in [("a", &oa), ("b", &ob)] {
            notes.extend(prompt_relation_notes(case, side, rel));
        }
    }

    Ok(Verdict {
        case_id: case.case_id.clone(),
        aligned: presence_diff.is_empty() && position_diff.is_empty(),
        presence_diff,
        position_diff,
        categories: vec![],
        uncategorized: false,
        notes,
    })
}

// Advisory only: prompt-declared relations that the image does not show
// for the first instance of each label.
fn prompt_relation_notes(case: &TestCase, side: &str, rel: &OrderRelation) -> Vec<String> {
    let mut notes = Vec::new();
    for r in case.scene.expected_relations.iter().flatten() {
        let key = |l: &str| InstanceKey {
            label: l.to_string(),
            index: 0,
        };
        let want = match r.relation {
            Relation::LeftOf | Relation::Above => Order::Before,
            Relation::RightOf | Relation::Below => Order::After,
        };
        if let Some(got) = rel.order(&key(&r.subject), &key(&r.object)) {
            if got != want {
                notes.push(format!(
                    "image {side}: prompt says {} {} {}, observed {:?}",
                    r.subject,
                    serde_json::to_value(r.relation).expect("enum").as_str().unwrap_or(""),
                    r.object,
                    got
                ));
            }
        }
    }
    notes
}
