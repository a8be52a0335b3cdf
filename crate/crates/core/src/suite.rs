//! Combination prompting: expanding templates over an entity vocabulary
//! into a deterministic suite of test cases, and the line-delimited JSON
//! manifest that records it.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::logic::{is_valid_label, MAX_COUNT, MIN_COUNT};
use crate::templates::{
    expected_semantics, logic_templates, numbering_template, render, Modifier, ModifierKind,
    SceneSpec, TemplateError, TemplateLaw, TemplatePair,
};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Identifies how sampling and per-side seeds are derived, so another
/// implementation can reproduce a manifest.
pub const RNG_ALGORITHM: &str = "category-shuffle: ChaCha8 (rand_chacha 0.9) keyed by \
sha256(\"<seed>:<category_id>\"), Fisher-Yates via rand 0.9 SliceRandom::shuffle; \
side-seed: first 8 bytes (little endian) of sha256(\"<seed>:<case_id>:<side>\")";

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("cannot draw {k}-tuples from a vocabulary of {n}")]
    Arity { k: usize, n: usize },
    #[error("invalid suite config:\n  {}", .0.join("\n  "))]
    InvalidConfig(Vec<String>),
    #[error("filters leave no categories to generate")]
    Empty,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountRange {
    pub min: u8,
    pub max: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub vocabulary: Vec<String>,
    /// `None` keeps every law.
    pub laws: Option<Vec<TemplateLaw>>,
    /// `None` keeps every modifier.
    pub modifiers: Option<Vec<ModifierKind>>,
    pub numbering_entities: Vec<String>,
    pub counts: CountRange,
    pub max_cases_per_category: Option<usize>,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            vocabulary: ["cat", "dog", "apple", "banana", "cow"].map(String::from).to_vec(),
            laws: None,
            modifiers: None,
            numbering_entities: ["cat", "dog", "apple", "banana"].map(String::from).to_vec(),
            counts: CountRange { min: 1, max: 10 },
            max_cases_per_category: None,
            seed: 0,
        }
    }
}

impl SuiteConfig {
    /// Every violation, each prefixed with its path under `prefix`.
    pub fn violations(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        check_labels(&self.vocabulary, &format!("{prefix}vocabulary"), &mut out);
        check_labels(&self.numbering_entities, &format!("{prefix}numbering_entities"), &mut out);
        if self.vocabulary.len() < 2 {
            out.push(format!("{prefix}vocabulary: needs at least 2 entities"));
        }
        let CountRange { min, max } = self.counts;
        if !(MIN_COUNT..=MAX_COUNT).contains(&min) || !(MIN_COUNT..=MAX_COUNT).contains(&max) || min > max {
            out.push(format!("{prefix}counts: {{min = {min}, max = {max}}} must lie within 1..=10 with min <= max"));
        }
        if self.max_cases_per_category == Some(0) {
            out.push(format!("{prefix}max_cases_per_category: must be at least 1"));
        }
        out
    }

    fn wants(&self, law: TemplateLaw, modifier: Modifier) -> bool {
        self.laws.as_ref().is_none_or(|ls| ls.contains(&law))
            && self.modifiers.as_ref().is_none_or(|ms| ms.contains(&modifier.kind()))
    }
}

fn check_labels(labels: &[String], path: &str, out: &mut Vec<String>) {
    let mut seen = HashSet::new();
    for (i, l) in labels.iter().enumerate() {
        if *l != l.to_lowercase() || !is_valid_label(l) {
            out.push(format!("{path}[{i}]: {l:?} is not a lowercase entity label"));
        }
        if !seen.insert(l) {
            out.push(format!("{path}[{i}]: duplicate entity {l:?}"));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub case_id: String,
    pub category: String,
    pub template_id: String,
    pub law: TemplateLaw,
    pub modifier: Modifier,
    pub entities: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u8>,
    pub prompt_a: String,
    pub prompt_b: String,
    pub scene: SceneSpec,
    pub seed_a: u64,
    pub seed_b: u64,
}

impl TestCase {
    /// Builds one case from a template and an entity tuple.
    pub fn new(tp: &TemplatePair, entities: &[&str], count: Option<u8>, seed: u64) -> Result<Self, TemplateError> {
        let (prompt_a, prompt_b) = render(tp, entities, count)?;
        let scene = expected_semantics(tp, entities, count)?;
        let tuple: Vec<String> = entities.iter().map(|e| e.trim().to_lowercase()).collect();
        let case_id = format!(
            "{}__{}",
            tp.id,
            tuple.iter().map(|e| e.replace(' ', "_")).collect::<Vec<_>>().join("+")
        );
        Ok(TestCase {
            seed_a: side_seed(seed, &case_id, "a"),
            seed_b: side_seed(seed, &case_id, "b"),
            case_id,
            category: tp.id.clone(),
            template_id: tp.id.clone(),
            law: tp.law,
            modifier: tp.modifier,
            entities: tuple,
            count,
            prompt_a,
            prompt_b,
            scene,
        })
    }

    /// The numbered entity of a numbering case.
    pub fn numbered_entity(&self) -> Option<&str> {
        self.count.and(self.entities.get(1)).map(String::as_str)
    }
}

pub fn side_seed(seed: u64, case_id: &str, side: &str) -> u64 {
    let digest = Sha256::digest(format!("{seed}:{case_id}:{side}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn category_rng(seed: u64, category: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(format!("{seed}:{category}").as_bytes());
    ChaCha8Rng::from_seed(digest.into())
}

/// All ordered `k`-tuples without repetition, in lexicographic order of
/// vocabulary indices.
pub fn entity_combinations(vocab: &[String], k: usize) -> Result<Vec<Vec<String>>, SuiteError> {
    if k == 0 || k > vocab.len() {
        return Err(SuiteError::Arity { k, n: vocab.len() });
    }
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    let mut used = vec![false; vocab.len()];
    permute(vocab, k, &mut used, &mut current, &mut out);
    Ok(out)
}

fn permute(
    vocab: &[String],
    k: usize,
    used: &mut [bool],
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<String>>,
) {
    if current.len() == k {
        out.push(current.iter().map(|&i| vocab[i].clone()).collect());
        return;
    }
    for i in 0..vocab.len() {
        if !used[i] {
            used[i] = true;
            current.push(i);
            permute(vocab, k, used, current, out);
            current.pop();
            used[i] = false;
        }
    }
}

/// Partner for a numbered entity: the next vocabulary entry after it,
/// wrapping, or the first other entry if it is not in the vocabulary.
pub fn numbering_partner<'a>(vocab: &'a [String], numbered: &str) -> Option<&'a str> {
    match vocab.iter().position(|v| v == numbered) {
        Some(i) => {
            let p = &vocab[(i + 1) % vocab.len()];
            (p != numbered).then_some(p.as_str())
        }
        None => vocab.iter().find(|v| *v != numbered).map(String::as_str),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub rng: String,
    pub config: SuiteConfig,
    pub total_cases: usize,
    pub categories: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum ManifestRecord {
    Header(ManifestHeader),
    Case(TestCase),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Suite {
    pub header: ManifestHeader,
    pub cases: Vec<TestCase>,
}

impl Suite {
    pub fn get(&self, case_id: &str) -> Option<&TestCase> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    pub fn index(&self) -> BTreeMap<&str, &TestCase> {
        self.cases.iter().map(|c| (c.case_id.as_str(), c)).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), SuiteError> {
        serde_json::to_writer(&mut w, &ManifestRecord::Header(self.header.clone()))?;
        w.write_all(b"\n")?;
        for case in &self.cases {
            serde_json::to_writer(&mut w, &ManifestRecord::Case(case.clone()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, SuiteError> {
        let mut header = None;
        let mut cases = Vec::new();
        let mut ids = HashSet::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| SuiteError::Manifest { line: i + 1, message };
            let rec: ManifestRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            match rec {
                ManifestRecord::Header(h) if header.is_none() && cases.is_empty() => header = Some(h),
                ManifestRecord::Header(_) => return Err(err("unexpected second header".into())),
                ManifestRecord::Case(_) if header.is_none() => return Err(err("case before header".into())),
                ManifestRecord::Case(c) => {
                    if !ids.insert(c.case_id.clone()) {
                        return Err(err(format!("duplicate case_id {}", c.case_id)));
                    }
                    cases.push(c);
                }
            }
        }
        let header = header.ok_or(SuiteError::Manifest {
            line: 0,
            message: "missing header record".into(),
        })?;
        Ok(Suite { header, cases })
    }
}

pub fn generate_suite(config: &SuiteConfig) -> Result<Suite, SuiteError> {
    let violations = config.violations("");
    if !violations.is_empty() {
        return Err(SuiteError::InvalidConfig(violations));
    }

    let mut cases = Vec::new();
    let mut categories = BTreeMap::new();

    for tp in logic_templates() {
        if !config.wants(tp.law, tp.modifier) {
            continue;
        }
        let mut tuples = entity_combinations(&config.vocabulary, tp.slots)?;
        if let Some(cap) = config.max_cases_per_category {
            if tuples.len() > cap {
                let mut order: Vec<usize> = (0..tuples.len()).collect();
                order.shuffle(&mut category_rng(config.seed, &tp.id));
                order.truncate(cap);
                order.sort_unstable();
                tuples = order.into_iter().map(|i| std::mem::take(&mut tuples[i])).collect();
            }
        }
        categories.insert(tp.id.clone(), tuples.len());
        for tuple in tuples {
            let refs: Vec<&str> = tuple.iter().map(String::as_str).collect();
            cases.push(TestCase::new(&tp, &refs, None, config.seed)?);
        }
    }

    for entity in &config.numbering_entities {
        for count in config.counts.min..=config.counts.max {
            let tp = numbering_template(count, Some(entity));
            if !config.wants(tp.law, tp.modifier) {
                continue;
            }
            let partner = numbering_partner(&config.vocabulary, entity).ok_or(SuiteError::Arity {
                k: 2,
                n: config.vocabulary.len(),
            })?;
            categories.insert(tp.id.clone(), 1);
            cases.push(TestCase::new(&tp, &[partner, entity], Some(count), config.seed)?);
        }
    }

    if cases.is_empty() {
        return Err(SuiteError::Empty);
    }

    Ok(Suite {
        header: ManifestHeader {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool: "metalogic".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            rng: RNG_ALGORITHM.into(),
            config: config.clone(),
            total_cases: cases.len(),
            categories,
        },
        cases,
    })
}
