#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use metalogic::backends::{BBox, Detection, DetectionResult, ImageRef, OcrRegion, Side, WireDetections, DEFAULT_SCORE_THRESHOLD};
use metalogic::classifier::{annotate, ClassifierConfig};
use metalogic::comparator::{compare_pair, ComparatorConfig, Verdict};
use metalogic::suite::TestCase;
use metalogic::templates::find_template;
use serde::Deserialize;

pub fn case(template: &str, entities: &[&str]) -> TestCase {
    let tp = find_template(template).unwrap_or_else(|| panic!("no template {template}"));
    TestCase::new(&tp, entities, tp.count(), 0).expect("valid instantiation")
}

pub fn detection(label: &str, b: [f64; 4]) -> Detection {
    Detection {
        label: label.to_string(),
        score: 0.9,
        bbox: BBox::new(b[0], b[1], b[2], b[3]),
    }
}

pub fn image_ref(case: &TestCase, side: Side) -> ImageRef {
    ImageRef {
        case_id: case.case_id.clone(),
        side,
        path: PathBuf::from(format!("{side}.png")),
        sha256: String::new(),
        backend_name: "test".into(),
        latency_ms: 0,
    }
}

pub fn result(case: &TestCase, side: Side, size: (u32, u32), dets: Vec<Detection>, ocr: Vec<OcrRegion>) -> DetectionResult {
    DetectionResult {
        image: image_ref(case, side),
        detections: dets,
        ocr_regions: ocr,
        image_size: size,
    }
}

/// Compares and classifies with default classifier thresholds.
pub fn judge(case: &TestCase, a: &DetectionResult, b: &DetectionResult, cfg: &ComparatorConfig) -> Verdict {
    let mut v = compare_pair(case, a, b, cfg).unwrap();
    annotate(&mut v, a, b, case, &ClassifierConfig::default());
    v
}

#[derive(Deserialize)]
pub struct Expect {
    pub aligned: bool,
    pub categories: Vec<String>,
    pub presence_diff: BTreeMap<String, (u32, u32)>,
    pub position_conflicts: usize,
}

#[derive(Deserialize)]
pub struct Fixture {
    pub template: String,
    pub entities: Vec<String>,
    #[serde(default)]
    pub comparator: ComparatorConfig,
    pub a: WireDetections,
    pub b: WireDetections,
    pub expect: Expect,
}

impl Fixture {
    pub fn materialize(&self) -> (TestCase, DetectionResult, DetectionResult) {
        let ents: Vec<&str> = self.entities.iter().map(String::as_str).collect();
        let c = case(&self.template, &ents);
        let a = DetectionResult::from_wire(image_ref(&c, Side::A), self.a.clone(), DEFAULT_SCORE_THRESHOLD).unwrap();
        let b = DetectionResult::from_wire(image_ref(&c, Side::B), self.b.clone(), DEFAULT_SCORE_THRESHOLD).unwrap();
        (c, a, b)
    }

    /// Mismatches between the verdict and the expectation, both directions.
    pub fn check(&self) -> Vec<String> {
        let (c, a, b) = self.materialize();
        let mut errs = Vec::new();
        let v = judge(&c, &a, &b, &self.comparator);
        let cats: Vec<String> = v.categories.iter().map(|c| c.as_str().to_string()).collect();
        if v.aligned != self.expect.aligned {
            errs.push(format!("aligned {} != {}", v.aligned, self.expect.aligned));
        }
        if cats != self.expect.categories {
            errs.push(format!("categories {cats:?} != {:?}", self.expect.categories));
        }
        if v.presence_diff != self.expect.presence_diff {
            errs.push(format!("presence {:?} != {:?}", v.presence_diff, self.expect.presence_diff));
        }
        if v.position_diff.len() != self.expect.position_conflicts {
            errs.push(format!("{} position conflicts != {}", v.position_diff.len(), self.expect.position_conflicts));
        }
        if v.uncategorized {
            errs.push("uncategorized".into());
        }
        let back = judge(&c, &b, &a, &self.comparator);
        if back.aligned != v.aligned || back.categories != v.categories {
            errs.push("not symmetric".into());
        }
        errs
    }
}

pub fn load_fixtures() -> Vec<(String, Fixture)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/comparator");
    let mut out: Vec<(String, Fixture)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let fx = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
            (name, fx)
        })
        .collect();
    out.sort_by(|x, y| x.0.cmp(&y.0));
    out
}
