//! Error categories for misaligned verdicts.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::backends::{BBox, DetectionResult, OcrRegion};
use crate::comparator::{Verdict, EXTRA_PREFIX};
use crate::suite::TestCase;
use crate::templates::Axis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    OpticalCharacter,
    EntityOmission,
    EntityDuplication,
    XMisposition,
    YMisposition,
}

impl ErrorCategory {
    /// Output order of [`classify`].
    pub const ALL: [ErrorCategory; 5] = [
        ErrorCategory::OpticalCharacter,
        ErrorCategory::EntityOmission,
        ErrorCategory::EntityDuplication,
        ErrorCategory::XMisposition,
        ErrorCategory::YMisposition,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::OpticalCharacter => "optical_character",
            ErrorCategory::EntityOmission => "entity_omission",
            ErrorCategory::EntityDuplication => "entity_duplication",
            ErrorCategory::XMisposition => "x_misposition",
            ErrorCategory::YMisposition => "y_misposition",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const UNCATEGORIZED: &str = "uncategorized";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// OCR coverage, as a fraction of image area, that counts as text fallback.
    pub ocr_area_fraction: f64,
    /// Distinct prompt words in OCR text that count as text fallback.
    pub ocr_prompt_words: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            ocr_area_fraction: 0.05,
            ocr_prompt_words: 4,
        }
    }
}

impl ClassifierConfig {
    pub fn violations(&self, prefix: &str) -> Vec<String> {
        let mut v = Vec::new();
        if !(0.0..=1.0).contains(&self.ocr_area_fraction) {
            v.push(format!("{prefix}ocr_area_fraction: {} is outside [0, 1]", self.ocr_area_fraction));
        }
        if self.ocr_prompt_words == 0 {
            v.push(format!("{prefix}ocr_prompt_words: must be at least 1"));
        }
        v
    }
}

/// Area covered by the union of `boxes`.
pub fn union_area(boxes: &[BBox]) -> f64 {
    let boxes: Vec<&BBox> = boxes.iter().filter(|b| b.is_proper()).collect();
    let mut xs: Vec<f64> = boxes.iter().flat_map(|b| [b.x1, b.x2]).collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup();
    let mut area = 0.0;
    for w in xs.windows(2) {
        let (l, r) = (w[0], w[1]);
        let mut spans: Vec<(f64, f64)> = boxes
            .iter()
            .filter(|b| b.x1 <= l && b.x2 >= r)
            .map(|b| (b.y1, b.y2))
            .collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut covered = 0.0;
        let mut cur: Option<(f64, f64)> = None;
        for (y1, y2) in spans {
            cur = match cur {
                Some((a, b)) if y1 <= b => Some((a, b.max(y2))),
                Some((a, b)) => {
                    covered += b - a;
                    Some((y1, y2))
                }
                None => Some((y1, y2)),
            };
        }
        if let Some((a, b)) = cur {
            covered += b - a;
        }
        area += covered * (r - l);
    }
    area
}

fn words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Whether an image shows the prompt as text rather than as a scene.
pub fn shows_text_fallback(det: &DetectionResult, prompt: &str, config: &ClassifierConfig) -> bool {
    if det.ocr_regions.is_empty() {
        return false;
    }
    let boxes: Vec<BBox> = det.ocr_regions.iter().map(|o: &OcrRegion| o.bbox).collect();
    let image_area = f64::from(det.image_size.0) * f64::from(det.image_size.1);
    if image_area > 0.0 && union_area(&boxes) / image_area > config.ocr_area_fraction {
        return true;
    }
    let ocr_words: BTreeSet<String> = det.ocr_regions.iter().flat_map(|o| words(&o.text)).collect();
    words(prompt).intersection(&ocr_words).count() >= config.ocr_prompt_words
}

/// Categorizes a misaligned verdict. Rules, in order:
///
/// 1. `optical_character` if either image shows text fallback;
/// 2. otherwise, per differing label, `entity_omission` when the smaller
///    count is below the expected count and `entity_duplication` when the
///    larger count exceeds it (labels outside the scene expect zero);
/// 3. `x_misposition` or `y_misposition`, by case axis, for position conflicts.
///
/// Rule 2 is skipped under text fallback, since an image that renders the
/// prompt as text loses its entities as a consequence.
pub fn classify(
    verdict: &Verdict,
    det_a: &DetectionResult,
    det_b: &DetectionResult,
    case: &TestCase,
    config: &ClassifierConfig,
) -> Vec<ErrorCategory> {
    if verdict.aligned {
        return vec![];
    }
    let mut found = BTreeSet::new();
    let fallback = shows_text_fallback(det_a, &case.prompt_a, config) || shows_text_fallback(det_b, &case.prompt_b, config);
    if fallback {
        found.insert(ErrorCategory::OpticalCharacter);
    } else {
        for (label, &(ca, cb)) in &verdict.presence_diff {
            let expected = if label.starts_with(EXTRA_PREFIX) {
                0
            } else {
                case.scene.expected_count(label)
            };
            if ca.min(cb) < expected {
                found.insert(ErrorCategory::EntityOmission);
            }
            if ca.max(cb) > expected {
                found.insert(ErrorCategory::EntityDuplication);
            }
        }
    }
    if !verdict.position_diff.is_empty() {
        match case.scene.axis {
            Some(Axis::X) => {
                found.insert(ErrorCategory::XMisposition);
            }
            Some(Axis::Y) => {
                found.insert(ErrorCategory::YMisposition);
            }
            None => {}
        }
    }
    found.into_iter().collect()
}

/// Fills `verdict.categories` and the uncategorized flag.
pub fn annotate(
    verdict: &mut Verdict,
    det_a: &DetectionResult,
    det_b: &DetectionResult,
    case: &TestCase,
    config: &ClassifierConfig,
) {
    verdict.categories = classify(verdict, det_a, det_b, case, config);
    verdict.uncategorized = !verdict.aligned && verdict.categories.is_empty();
}
