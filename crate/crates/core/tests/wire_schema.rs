use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use metalogic::backends::{mock_scene, FailureConfig, WireDetections};
use metalogic::suite::{generate_suite, SuiteConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn schema() -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schema/detection.schema.json");
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn resolve<'a>(root: &'a Value, node: &'a Value) -> &'a Value {
    match node.get("$ref").and_then(Value::as_str) {
        Some(r) => {
            let name = r.strip_prefix("#/$defs/").expect("local ref");
            &root["$defs"][name]
        }
        None => node,
    }
}

// Checks the subset of JSON Schema the detection schema uses.
fn check(root: &Value, schema: &Value, v: &Value, at: &str) -> Vec<String> {
    let schema = resolve(root, schema);
    let mut errs = Vec::new();
    let ty = schema["type"].as_str().unwrap_or("any");
    let ok = match ty {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "number" => v.is_number(),
        "integer" => v.is_u64() || v.is_i64(),
        _ => true,
    };
    if !ok {
        return vec![format!("{at}: expected {ty}, got {v}")];
    }
    if let Some(n) = v.as_f64() {
        if schema["minimum"].as_f64().is_some_and(|m| n < m) || schema["maximum"].as_f64().is_some_and(|m| n > m) {
            errs.push(format!("{at}: {n} out of range"));
        }
    }
    if let (Some(s), Some(min)) = (v.as_str(), schema["minLength"].as_u64()) {
        if (s.chars().count() as u64) < min {
            errs.push(format!("{at}: string too short"));
        }
    }
    if let Some(items) = v.as_array() {
        if schema["minItems"].as_u64().is_some_and(|m| (items.len() as u64) < m)
            || schema["maxItems"].as_u64().is_some_and(|m| (items.len() as u64) > m)
        {
            errs.push(format!("{at}: wrong length {}", items.len()));
        }
        for (i, item) in items.iter().enumerate() {
            errs.extend(check(root, &schema["items"], item, &format!("{at}[{i}]")));
        }
    }
    if let Some(obj) = v.as_object() {
        let props = schema["properties"].as_object().cloned().unwrap_or_default();
        for req in schema["required"].as_array().into_iter().flatten() {
            if !obj.contains_key(req.as_str().unwrap()) {
                errs.push(format!("{at}: missing {req}"));
            }
        }
        for (k, child) in obj {
            match props.get(k) {
                Some(s) => errs.extend(check(root, s, child, &format!("{at}.{k}"))),
                None if schema["additionalProperties"] == Value::Bool(false) => errs.push(format!("{at}: unexpected {k}")),
                None => {}
            }
        }
    }
    errs
}

fn validate(v: &Value) -> Vec<String> {
    let root = schema();
    check(&root, &root, v, "$")
}

#[test]
fn serialized_wire_detections_conform() {
    let suite = generate_suite(&SuiteConfig::default()).unwrap();
    let failures = FailureConfig {
        p_omit: 0.3,
        p_duplicate: 0.3,
        p_swap_position: 0.3,
        p_text_fallback: 0.3,
        ..FailureConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut saw_ocr = false;
    for case in suite.cases.iter().step_by(7) {
        let scene = mock_scene(&case.scene, &case.prompt_a, &failures, true, (256, 256), &mut rng);
        saw_ocr |= !scene.detections.ocr.is_empty();
        let v = serde_json::to_value(&scene.detections).unwrap();
        let errs = validate(&v);
        assert!(errs.is_empty(), "{}: {errs:?}", case.case_id);
    }
    assert!(saw_ocr);
}

#[test]
fn schema_and_wire_type_agree_on_fields() {
    let root = schema();
    let keys = |v: &Value| -> BTreeSet<String> { v.as_object().unwrap().keys().cloned().collect() };
    let required = |v: &Value| -> BTreeSet<String> {
        v["required"].as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect()
    };
    let sample = WireDetections {
        detections: vec![serde_json::from_value(serde_json::json!({"label": "dog", "score": 0.5, "bbox": [0, 0, 1, 1]})).unwrap()],
        ocr: vec![serde_json::from_value(serde_json::json!({"text": "x", "bbox": [0, 0, 1, 1]})).unwrap()],
        width: 2,
        height: 2,
    };
    let v = serde_json::to_value(&sample).unwrap();
    assert_eq!(keys(&v), keys(&root["properties"]));
    assert_eq!(keys(&v), required(&root));
    assert_eq!(keys(&v["detections"][0]), required(&root["properties"]["detections"]["items"]));
    assert_eq!(keys(&v["ocr"][0]), required(&root["properties"]["ocr"]["items"]));
}

#[test]
fn comparator_fixtures_conform() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/comparator");
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let fx: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        for side in ["a", "b"] {
            let errs = validate(&fx[side]);
            assert!(errs.is_empty(), "{}:{side}: {errs:?}", path.display());
        }
    }
}

#[test]
fn validator_rejects_malformed_bodies() {
    let bad = [
        serde_json::json!({"detections": [], "ocr": [], "width": 0, "height": 4}),
        serde_json::json!({"detections": [], "width": 4, "height": 4}),
        serde_json::json!({"detections": [{"label": "dog", "score": 1.5, "bbox": [0, 0, 1, 1]}], "ocr": [], "width": 4, "height": 4}),
        serde_json::json!({"detections": [{"label": "dog", "score": 0.5, "bbox": [0, 0, 1]}], "ocr": [], "width": 4, "height": 4}),
        serde_json::json!({"detections": [], "ocr": [], "width": 4, "height": 4, "model": "x"}),
    ];
    for v in bad {
        assert!(!validate(&v).is_empty(), "{v}");
    }
}
