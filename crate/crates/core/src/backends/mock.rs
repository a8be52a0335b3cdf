//! Offline backends that synthesize a scene and its detections together.
//!
//! The generator lays out one box per expected entity instance, applies the
//! configured failure modes, renders a flat placeholder image and embeds the
//! synthesized detections in a PNG text chunk. The detector reads them back.

use std::collections::BTreeMap;
use std::io::Cursor;

use image::{Rgb, RgbImage};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BBox, BackendError, Detection, GenerationRequest, ImageGenerator, ObjectDetector, OcrRegion, Side, WireDetections};
use crate::suite::TestCase;
use crate::templates::{Axis, Relation, SceneSpec};

/// PNG text keyword carrying the embedded detections.
pub const MOCK_TEXT_KEY: &str = "metalogic:detections";

pub const DEFAULT_MOCK_SIZE: u32 = 256;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureSides {
    #[default]
    Both,
    A,
    B,
}

impl FailureSides {
    pub fn includes(self, side: Side) -> bool {
        match self {
            FailureSides::Both => true,
            FailureSides::A => side == Side::A,
            FailureSides::B => side == Side::B,
        }
    }
}

/// Per-image failure probabilities for the mock generator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FailureConfig {
    pub p_omit: f64,
    pub p_duplicate: f64,
    pub p_swap_position: f64,
    pub p_text_fallback: f64,
    pub seed: u64,
    /// Which images of a pair failures may hit.
    pub sides: FailureSides,
}

impl FailureConfig {
    pub fn none() -> Self {
        FailureConfig::default()
    }

    pub fn violations(&self, prefix: &str) -> Vec<String> {
        [
            ("p_omit", self.p_omit),
            ("p_duplicate", self.p_duplicate),
            ("p_swap_position", self.p_swap_position),
            ("p_text_fallback", self.p_text_fallback),
        ]
        .into_iter()
        .filter(|(_, p)| !(0.0..=1.0).contains(p))
        .map(|(k, p)| format!("{prefix}{k}: {p} is not a probability in [0, 1]"))
        .collect()
    }
}

#[derive(Debug, Clone)]
struct Instance {
    label: String,
    cx: f64,
    cy: f64,
    half: f64,
}

/// Synthesized image content before rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct MockScene {
    pub detections: WireDetections,
}

impl MockScene {
    pub fn render(&self) -> RgbImage {
        render(&self.detections)
    }

    pub fn to_png(&self) -> Vec<u8> {
        encode_mock_png(&self.detections)
    }
}

/// Lays out `scene` on a `width` x `height` canvas and applies `failures`
/// when `inject` is set. Failure draws happen in a fixed order (omit,
/// duplicate, swap, text fallback), each an independent Bernoulli trial.
pub fn mock_scene<R: Rng + ?Sized>(
    scene: &SceneSpec,
    prompt: &str,
    failures: &FailureConfig,
    inject: bool,
    (width, height): (u32, u32),
    rng: &mut R,
) -> MockScene {
    let (w, h) = (f64::from(width), f64::from(height));
    let mut instances = match scene.axis {
        Some(axis) => positional_layout(scene, axis, w, h, rng),
        None => grid_layout(scene, w, h, rng),
    };
    let mut ocr = Vec::new();

    if inject {
        let omit = rng.random_bool(failures.p_omit);
        let duplicate = rng.random_bool(failures.p_duplicate);
        let swap = rng.random_bool(failures.p_swap_position);
        let fallback = rng.random_bool(failures.p_text_fallback);

        if omit && !instances.is_empty() {
            let i = rng.random_range(0..instances.len());
            instances.remove(i);
        }
        if duplicate {
            let labels: Vec<&String> = scene.expected_entities.keys().collect();
            if let Some(label) = labels.choose(rng) {
                let half = instances.first().map_or(w.min(h) / 8.0, |i| i.half);
                instances.push(Instance {
                    label: (*label).clone(),
                    cx: rng.random_range(half..=w - half),
                    cy: rng.random_range(half..=h - half),
                    half,
                });
            }
        }
        if swap {
            if let Some(axis) = scene.axis {
                swap_centroids(&mut instances, axis, rng);
            }
        }
        if fallback {
            instances.clear();
            ocr.push(OcrRegion {
                text: prompt.to_string(),
                bbox: BBox::new((w * 0.1).round(), (h * 0.35).round(), (w * 0.9).round(), (h * 0.65).round()),
            });
        }
    }

    let detections = instances
        .into_iter()
        .map(|i| Detection {
            score: (rng.random_range(0.6..0.99_f64) * 1000.0).round() / 1000.0,
            bbox: BBox::new(
                (i.cx - i.half).round(),
                (i.cy - i.half).round(),
                (i.cx + i.half).round(),
                (i.cy + i.half).round(),
            ),
            label: i.label,
        })
        .collect();

    MockScene {
        detections: WireDetections {
            detections,
            ocr,
            width,
            height,
        },
    }
}

fn instance_labels(scene: &SceneSpec) -> Vec<String> {
    scene
        .expected_entities
        .iter()
        .flat_map(|(l, &n)| std::iter::repeat_n(l.clone(), n as usize))
        .collect()
}

// Shuffled cells of a square grid with one spare cell for a duplicate.
fn grid_layout<R: Rng + ?Sized>(scene: &SceneSpec, w: f64, h: f64, rng: &mut R) -> Vec<Instance> {
    let labels = instance_labels(scene);
    let cols = ((labels.len() + 1) as f64).sqrt().ceil().max(1.0) as usize;
    let (cw, ch) = (w / cols as f64, h / cols as f64);
    let half = cw.min(ch) * 0.3;
    let jitter = cw.min(ch) * 0.1;
    let mut cells: Vec<usize> = (0..cols * cols).collect();
    cells.shuffle(rng);
    labels
        .into_iter()
        .zip(cells)
        .map(|(label, cell)| Instance {
            label,
            cx: (cell % cols) as f64 * cw + cw / 2.0 + rng.random_range(-jitter..=jitter),
            cy: (cell / cols) as f64 * ch + ch / 2.0 + rng.random_range(-jitter..=jitter),
            half,
        })
        .collect()
}

// Evenly spaced slots along the axis, ordered by the expected relations.
// Extra instances of a label stack along the other axis.
fn positional_layout<R: Rng + ?Sized>(scene: &SceneSpec, axis: Axis, w: f64, h: f64, rng: &mut R) -> Vec<Instance> {
    let mut after: BTreeMap<&str, usize> = scene.expected_entities.keys().map(|l| (l.as_str(), 0)).collect();
    for r in scene.expected_relations.iter().flatten() {
        let later = match r.relation {
            Relation::LeftOf | Relation::Above => &r.object,
            Relation::RightOf | Relation::Below => &r.subject,
        };
        if let Some(n) = after.get_mut(later.as_str()) {
            *n += 1;
        }
    }
    let mut order: Vec<(&str, usize)> = after.into_iter().collect();
    order.sort_by_key(|&(l, n)| (n, l));

    let (along, across) = match axis {
        Axis::X => (w, h),
        Axis::Y => (h, w),
    };
    let slots = order.len() as f64 + 1.0;
    let spacing = along / slots;
    let mut out = Vec::new();
    for (idx, (label, _)) in order.iter().enumerate() {
        let n = scene.expected_count(label) as usize;
        let rows = n as f64 + 1.0;
        let half = (spacing.min(across / rows) * 0.3).max(1.0);
        for k in 0..n {
            let a = spacing * (idx as f64 + 1.0) + rng.random_range(-spacing * 0.1..=spacing * 0.1);
            let c = across / rows * (k as f64 + 1.0) + rng.random_range(-half * 0.3..=half * 0.3);
            let (cx, cy) = match axis {
                Axis::X => (a, c),
                Axis::Y => (c, a),
            };
            out.push(Instance {
                label: label.to_string(),
                cx,
                cy,
                half,
            });
        }
    }
    out
}

fn swap_centroids<R: Rng + ?Sized>(instances: &mut [Instance], axis: Axis, rng: &mut R) {
    if instances.len() < 2 {
        return;
    }
    let i = rng.random_range(0..instances.len());
    let partners: Vec<usize> = (0..instances.len())
        .filter(|&j| instances[j].label != instances[i].label)
        .collect();
    let Some(&j) = partners.choose(rng) else {
        return;
    };
    match axis {
        Axis::X => {
            let t = instances[i].cx;
            instances[i].cx = instances[j].cx;
            instances[j].cx = t;
        }
        Axis::Y => {
            let t = instances[i].cy;
            instances[i].cy = instances[j].cy;
            instances[j].cy = t;
        }
    }
}

fn label_color(label: &str) -> Rgb<u8> {
    let d = Sha256::digest(label.as_bytes());
    Rgb([64 + d[0] / 2, 64 + d[1] / 2, 64 + d[2] / 2])
}

fn fill(img: &mut RgbImage, b: &BBox, color: Rgb<u8>, stripe: Option<u32>) {
    let (w, h) = img.dimensions();
    let x1 = b.x1.max(0.0) as u32;
    let y1 = b.y1.max(0.0) as u32;
    let x2 = (b.x2.max(0.0) as u32).min(w);
    let y2 = (b.y2.max(0.0) as u32).min(h);
    for y in y1..y2 {
        if stripe.is_some_and(|s| (y - y1) % s >= s / 2) {
            continue;
        }
        for x in x1..x2 {
            img.put_pixel(x, y, color);
        }
    }
}

fn render(wire: &WireDetections) -> RgbImage {
    let mut img = RgbImage::from_pixel(wire.width, wire.height, Rgb([245, 245, 240]));
    for d in &wire.detections {
        fill(&mut img, &d.bbox, label_color(&d.label), None);
    }
    for o in &wire.ocr {
        fill(&mut img, &o.bbox, Rgb([20, 20, 20]), Some(8));
    }
    img
}

/// Renders `wire` and embeds it in the PNG as an iTXt chunk.
pub fn encode_mock_png(wire: &WireDetections) -> Vec<u8> {
    let img = render(wire);
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, wire.width, wire.height);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let json = serde_json::to_string(wire).expect("detections serialize");
    enc.add_itxt_chunk(MOCK_TEXT_KEY.to_string(), json).expect("valid keyword");
    let mut writer = enc.write_header().expect("in-memory png header");
    writer.write_image_data(img.as_raw()).expect("in-memory png data");
    writer.finish().expect("in-memory png finish");
    out
}

/// Reads embedded detections back. `Ok(None)` for a PNG without them.
pub fn decode_mock_png(bytes: &[u8]) -> Result<Option<WireDetections>, BackendError> {
    let reader = png::Decoder::new(Cursor::new(bytes))
        .read_info()
        .map_err(|e| BackendError::UndecodableImage(e.to_string()))?;
    let Some(chunk) = reader.info().utf8_text.iter().find(|c| c.keyword == MOCK_TEXT_KEY) else {
        return Ok(None);
    };
    let text = chunk
        .get_text()
        .map_err(|e| BackendError::UndecodableImage(e.to_string()))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| BackendError::InvalidResponse(format!("embedded detections: {e}")))
}

#[derive(Debug, Clone)]
pub struct MockGenerator {
    pub name: String,
    pub failures: FailureConfig,
    pub size: (u32, u32),
}

impl MockGenerator {
    pub fn new(name: &str, failures: FailureConfig) -> Self {
        MockGenerator {
            name: name.to_string(),
            failures,
            size: (DEFAULT_MOCK_SIZE, DEFAULT_MOCK_SIZE),
        }
    }

    /// The scene this generator draws for one side of a case.
    pub fn scene_for(&self, req: &GenerationRequest, case: &TestCase, side: Side) -> MockScene {
        let seed = req.seed.unwrap_or_else(|| side.seed(case));
        let key = Sha256::digest(format!("mock:{}:{seed}", self.failures.seed));
        let mut rng = ChaCha8Rng::from_seed(key.into());
        mock_scene(
            &case.scene,
            &req.prompt,
            &self.failures,
            self.failures.sides.includes(side),
            self.size,
            &mut rng,
        )
    }
}

impl ImageGenerator for MockGenerator {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, req: &GenerationRequest, case: &TestCase, side: Side) -> Result<Vec<u8>, BackendError> {
        Ok(self.scene_for(req, case, side).to_png())
    }
}

/// Returns detections embedded by [`MockGenerator`]; any other image
/// yields no detections.
#[derive(Debug, Clone, Default)]
pub struct MockDetector;

impl ObjectDetector for MockDetector {
    fn name(&self) -> &str {
        "mock"
    }

    fn detect(&self, image_bytes: &[u8]) -> Result<WireDetections, BackendError> {
        if image_bytes.starts_with(b"\x89PNG") {
            if let Some(wire) = decode_mock_png(image_bytes)? {
                return Ok(wire);
            }
        }
        let (width, height) = image::ImageReader::new(Cursor::new(image_bytes))
            .with_guessed_format()
            .map_err(|e| BackendError::UndecodableImage(e.to_string()))?
            .into_dimensions()
            .map_err(|e| BackendError::UndecodableImage(e.to_string()))?;
        Ok(WireDetections {
            detections: vec![],
            ocr: vec![],
            width,
            height,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::templates::ExpectedRelation;

    fn scene(entities: &[(&str, u32)], axis: Option<Axis>) -> SceneSpec {
        SceneSpec {
            expected_entities: entities.iter().map(|(l, n)| (l.to_string(), *n)).collect(),
            axis,
            expected_relations: axis.map(|_| {
                vec![ExpectedRelation {
                    subject: "cat".into(),
                    relation: Relation::LeftOf,
                    object: "dog".into(),
                }]
            }),
        }
    }

    fn run(s: &SceneSpec, f: &FailureConfig, seed: u64) -> WireDetections {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        mock_scene(s, "There is a cat and a dog.", f, true, (256, 256), &mut rng).detections
    }

    fn labels(w: &WireDetections) -> Vec<&str> {
        let mut v: Vec<&str> = w.detections.iter().map(|d| d.label.as_str()).collect();
        v.sort();
        v
    }

    #[test]
    fn identity_scene() {
        let w = run(&scene(&[("cat", 1), ("dog", 1)], None), &FailureConfig::none(), 1);
        assert_eq!(labels(&w), ["cat", "dog"]);
        assert!(w.ocr.is_empty());
    }

    #[test]
    fn forced_omission() {
        let f = FailureConfig { p_omit: 1.0, ..Default::default() };
        for seed in 0..20 {
            assert_eq!(run(&scene(&[("cat", 1), ("dog", 1)], None), &f, seed).detections.len(), 1);
        }
    }

    #[test]
    fn forced_duplicate() {
        let f = FailureConfig { p_duplicate: 1.0, ..Default::default() };
        let w = run(&scene(&[("cat", 1), ("dog", 3)], None), &f, 3);
        assert_eq!(w.detections.len(), 5);
    }

    #[test]
    fn forced_fallback() {
        let f = FailureConfig { p_text_fallback: 1.0, ..Default::default() };
        let w = run(&scene(&[("cat", 1), ("dog", 1)], None), &f, 1);
        assert!(w.detections.is_empty());
        assert_eq!(w.ocr.len(), 1);
        assert_eq!(w.ocr[0].text, "There is a cat and a dog.");
    }

    #[test]
    fn positional_layout_follows_relations_and_swap_reverses() {
        let s = scene(&[("cat", 1), ("dog", 1)], Some(Axis::X));
        let cx = |w: &WireDetections, l: &str| w.detections.iter().find(|d| d.label == l).unwrap().bbox.centroid().0;
        let w = run(&s, &FailureConfig::none(), 5);
        assert!(cx(&w, "cat") < cx(&w, "dog"));
        let f = FailureConfig { p_swap_position: 1.0, ..Default::default() };
        let w = run(&s, &f, 5);
        assert!(cx(&w, "cat") > cx(&w, "dog"));
    }

    #[test]
    fn boxes_stay_inside_canvas_for_large_counts() {
        let f = FailureConfig { p_duplicate: 1.0, ..Default::default() };
        for seed in 0..10 {
            let w = run(&scene(&[("cat", 1), ("dog", 10)], None), &f, seed);
            assert_eq!(w.detections.len(), 12);
            for d in &w.detections {
                assert!(d.bbox.is_proper());
                assert!(d.bbox.x1 >= 0.0 && d.bbox.y1 >= 0.0 && d.bbox.x2 <= 256.0 && d.bbox.y2 <= 256.0);
            }
        }
    }

    #[test]
    fn detector_reads_embedded_detections_exactly() {
        let wire = WireDetections {
            detections: vec![Detection {
                label: "cat".into(),
                score: 0.9,
                bbox: BBox::new(10., 10., 100., 100.),
            }],
            ocr: vec![],
            width: 256,
            height: 256,
        };
        let png = encode_mock_png(&wire);
        assert_eq!(MockDetector.detect(&png).unwrap(), wire);
    }

    #[test]
    fn detector_on_foreign_image_returns_nothing() {
        let img = RgbImage::new(8, 4);
        let mut bytes = Vec::new();
        img.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png).unwrap();
        let w = MockDetector.detect(&bytes).unwrap();
        assert!(w.detections.is_empty());
        assert_eq!((w.width, w.height), (8, 4));
        assert!(MockDetector.detect(b"not an image").is_err());
    }

    #[test]
    fn probabilities_are_validated() {
        let f = FailureConfig { p_omit: 1.5, p_text_fallback: -0.1, ..Default::default() };
        let v = f.violations("failures.");
        assert_eq!(v.len(), 2);
        assert!(v[0].starts_with("failures.p_omit"));
    }
}
