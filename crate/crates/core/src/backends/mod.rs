//! Image generation and object detection adapters.
//!
//! Generators turn a prompt into PNG bytes; detectors turn PNG bytes into
//! labelled boxes in the shared detection wire format. [`generate_image`]
//! and [`detect_objects`] wrap any backend with persistence, retries and
//! score filtering.

mod http;
mod mock;
mod retry;

use std::fmt;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::suite::TestCase;

pub use http::{GenerationApi, HttpDetector, HttpGenerator, HttpGeneratorConfig};
pub use mock::{
    decode_mock_png, encode_mock_png, mock_scene, FailureConfig, FailureSides, MockDetector,
    MockGenerator, MockScene, MOCK_TEXT_KEY,
};
pub use retry::{RateLimiter, RetryPolicy};

/// Prefix that asks a prompt-rewriting generator to use the prompt verbatim.
pub const LITERAL_PREFIX: &str = "I NEED to test how the tool works with extremely simple prompts. \
DO NOT add any detail, just use it AS-IS:";

pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    A,
    B,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::A, Side::B];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::A => "a",
            Side::B => "b",
        }
    }

    pub fn prompt(self, case: &TestCase) -> &str {
        match self {
            Side::A => &case.prompt_a,
            Side::B => &case.prompt_b,
        }
    }

    pub fn seed(self, case: &TestCase) -> u64 {
        match self {
            Side::A => case.seed_a,
            Side::B => case.seed_b,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub seed: Option<u64>,
    pub model_profile: String,
    pub literal_prefix: bool,
}

impl GenerationRequest {
    /// The prompt as sent over the wire.
    pub fn transmitted_prompt(&self) -> String {
        if self.literal_prefix {
            format!("{LITERAL_PREFIX} {}", self.prompt)
        } else {
            self.prompt.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub case_id: String,
    pub side: Side,
    pub path: PathBuf,
    pub sha256: String,
    pub backend_name: String,
    pub latency_ms: u64,
}

impl ImageRef {
    /// Checks the file still exists and hashes to the recorded digest.
    pub fn verify(&self) -> Result<Vec<u8>, BackendError> {
        let bytes = fs::read(&self.path).map_err(|e| BackendError::Io(self.path.clone(), e))?;
        let digest = sha256_hex(&bytes);
        if digest != self.sha256 {
            return Err(BackendError::DigestMismatch {
                path: self.path.clone(),
                expected: self.sha256.clone(),
                actual: digest,
            });
        }
        Ok(bytes)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Axis-aligned box in pixels, serialized as `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl From<[f64; 4]> for BBox {
    fn from([x1, y1, x2, y2]: [f64; 4]) -> Self {
        BBox { x1, y1, x2, y2 }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    pub fn centroid(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1).max(0.0) * (self.y2 - self.y1).max(0.0)
    }

    pub fn is_proper(&self) -> bool {
        self.x1 < self.x2 && self.y1 < self.y2
    }

    fn clipped(&self, width: f64, height: f64) -> BBox {
        BBox {
            x1: self.x1.clamp(0.0, width),
            y1: self.y1.clamp(0.0, height),
            x2: self.x2.clamp(0.0, width),
            y2: self.y2.clamp(0.0, height),
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox::new(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }

    pub fn scaled(&self, k: f64) -> BBox {
        BBox::new(self.x1 * k, self.y1 * k, self.x2 * k, self.y2 * k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub score: f64,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrRegion {
    pub text: String,
    pub bbox: BBox,
}

/// Detector response body, shared with any out-of-process detection service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDetections {
    pub detections: Vec<Detection>,
    #[serde(default)]
    pub ocr: Vec<OcrRegion>,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub image: ImageRef,
    pub detections: Vec<Detection>,
    pub ocr_regions: Vec<OcrRegion>,
    /// `(width, height)` in pixels.
    pub image_size: (u32, u32),
}

impl DetectionResult {
    /// Builds a result from wire data: scores outside `[0, 1]` are rejected,
    /// boxes are clipped to the image and dropped if degenerate, and
    /// detections below `threshold` are removed. Labels pass through verbatim.
    pub fn from_wire(image: ImageRef, wire: WireDetections, threshold: f64) -> Result<Self, BackendError> {
        let (w, h) = (f64::from(wire.width), f64::from(wire.height));
        if wire.width == 0 || wire.height == 0 {
            return Err(BackendError::InvalidResponse("zero image dimension".into()));
        }
        let mut detections = Vec::with_capacity(wire.detections.len());
        for d in wire.detections {
            if !(0.0..=1.0).contains(&d.score) || d.score.is_nan() {
                return Err(BackendError::InvalidResponse(format!(
                    "score {} for {:?} is outside [0, 1]",
                    d.score, d.label
                )));
            }
            let bbox = d.bbox.clipped(w, h);
            if d.score >= threshold && bbox.is_proper() {
                detections.push(Detection { bbox, ..d });
            }
        }
        let ocr_regions = wire
            .ocr
            .into_iter()
            .map(|o| OcrRegion { bbox: o.bbox.clipped(w, h), ..o })
            .filter(|o| o.bbox.is_proper())
            .collect();
        Ok(DetectionResult {
            image,
            detections,
            ocr_regions,
            image_size: (wire.width, wire.height),
        })
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimitExhausted { attempts: u32 },
    #[error("content policy rejection: {0}")]
    ContentPolicy(String),
    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    /// Retryable failure; surfaces as `Transport` once retries run out.
    #[error("transient failure: {0}")]
    Transient(String),
    /// Retryable 429; surfaces as `RateLimitExhausted`.
    #[error("rate limited")]
    RateLimited,
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("undecodable image: {0}")]
    UndecodableImage(String),
    #[error("invalid backend response: {0}")]
    InvalidResponse(String),
    #[error("missing credential: environment variable {0} is not set")]
    MissingCredential(String),
    #[error("{}: digest mismatch (recorded {expected}, found {actual})", .path.display())]
    DigestMismatch { path: PathBuf, expected: String, actual: String },
    #[error("{path}: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, #[source] std::io::Error),
}

impl BackendError {
    /// Content-policy rejections are skipped cases, not infrastructure errors.
    pub fn kind(&self) -> FailureKind {
        match self {
            BackendError::ContentPolicy(_) => FailureKind::Skipped,
            _ => FailureKind::Errored,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureKind {
    Errored,
    Skipped,
}

pub trait ImageGenerator: Send + Sync {
    fn name(&self) -> &str;

    /// Produces encoded image bytes (PNG or JPEG). `case` and `side` are
    /// available for backends that synthesize from the scene; remote
    /// backends only look at `req`.
    fn generate(&self, req: &GenerationRequest, case: &TestCase, side: Side) -> Result<Vec<u8>, BackendError>;
}

pub trait ObjectDetector: Send + Sync {
    fn name(&self) -> &str;

    fn detect(&self, image_bytes: &[u8]) -> Result<WireDetections, BackendError>;
}

/// Generates one side of a case and persists it as
/// `<images_dir>/<case_id>/<side>.png`.
pub fn generate_image(
    backend: &dyn ImageGenerator,
    req: &GenerationRequest,
    case: &TestCase,
    side: Side,
    images_dir: &Path,
    retry: &RetryPolicy,
    limiter: Option<&RateLimiter>,
) -> Result<ImageRef, BackendError> {
    let started = Instant::now();
    let bytes = retry.run(|attempt| {
        if let Some(l) = limiter {
            l.acquire();
        }
        log::debug!("{} {}/{} attempt {attempt}", backend.name(), case.case_id, side);
        backend.generate(req, case, side)
    })?;
    let latency_ms = started.elapsed().as_millis() as u64;
    let png = ensure_png(bytes)?;

    let dir = images_dir.join(&case.case_id);
    fs::create_dir_all(&dir).map_err(|e| BackendError::Io(dir.clone(), e))?;
    let path = dir.join(format!("{side}.png"));
    fs::write(&path, &png).map_err(|e| BackendError::Io(path.clone(), e))?;
    log::info!("generated {} ({} bytes, {latency_ms} ms)", path.display(), png.len());

    Ok(ImageRef {
        case_id: case.case_id.clone(),
        side,
        sha256: sha256_hex(&png),
        path,
        backend_name: backend.name().to_string(),
        latency_ms,
    })
}

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

fn ensure_png(bytes: Vec<u8>) -> Result<Vec<u8>, BackendError> {
    if bytes.starts_with(PNG_MAGIC) {
        return Ok(bytes);
    }
    let img = image::load_from_memory(&bytes).map_err(|e| BackendError::UndecodableImage(e.to_string()))?;
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png)
        .map_err(|e| BackendError::UndecodableImage(e.to_string()))?;
    Ok(out)
}

/// Runs a detector on a persisted image and applies the score threshold.
pub fn detect_objects(
    backend: &dyn ObjectDetector,
    image: &ImageRef,
    threshold: f64,
) -> Result<DetectionResult, BackendError> {
    let bytes = image.verify()?;
    image::guess_format(&bytes).map_err(|e| BackendError::UndecodableImage(e.to_string()))?;
    let wire = backend.detect(&bytes)?;
    DetectionResult::from_wire(image.clone(), wire, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_ref() -> ImageRef {
        ImageRef {
            case_id: "c".into(),
            side: Side::A,
            path: "x.png".into(),
            sha256: String::new(),
            backend_name: "t".into(),
            latency_ms: 0,
        }
    }

    fn wire(dets: Vec<Detection>) -> WireDetections {
        WireDetections { detections: dets, ocr: vec![], width: 200, height: 100 }
    }

    fn det(label: &str, score: f64, b: [f64; 4]) -> Detection {
        Detection { label: label.into(), score, bbox: b.into() }
    }

    #[test]
    fn literal_prefix() {
        let mut req = GenerationRequest {
            prompt: "There is a cat.".into(),
            seed: None,
            model_profile: "p".into(),
            literal_prefix: true,
        };
        assert!(req.transmitted_prompt().starts_with("I NEED to test how the tool works with extremely simple prompts."));
        assert!(req.transmitted_prompt().ends_with("AS-IS: There is a cat."));
        req.literal_prefix = false;
        assert_eq!(req.transmitted_prompt(), "There is a cat.");
    }

    #[test]
    fn threshold_excludes_low_scores() {
        let r = DetectionResult::from_wire(
            image_ref(),
            wire(vec![det("cat", 0.25, [0., 0., 10., 10.]), det("Dog", 0.30, [0., 0., 10., 10.])]),
            0.30,
        )
        .unwrap();
        assert_eq!(r.detections.len(), 1);
        assert_eq!(r.detections[0].label, "Dog");
    }

    #[test]
    fn boxes_are_clipped_and_degenerates_dropped() {
        let r = DetectionResult::from_wire(
            image_ref(),
            wire(vec![det("cat", 0.9, [-5., 10., 250., 90.]), det("dog", 0.9, [300., 0., 400., 10.])]),
            0.3,
        )
        .unwrap();
        assert_eq!(r.detections.len(), 1);
        assert_eq!(r.detections[0].bbox, BBox::new(0., 10., 200., 90.));
    }

    #[test]
    fn scores_outside_unit_interval_are_rejected() {
        let e = DetectionResult::from_wire(image_ref(), wire(vec![det("cat", 1.5, [0., 0., 1., 1.])]), 0.3);
        assert!(matches!(e, Err(BackendError::InvalidResponse(_))));
    }

    #[test]
    fn bbox_wire_shape() {
        let d: Detection = serde_json::from_str(r#"{"label":"cat","score":0.5,"bbox":[1,2,3,4]}"#).unwrap();
        assert_eq!(d.bbox, BBox::new(1., 2., 3., 4.));
        assert_eq!(d.bbox.centroid(), (2., 3.));
        assert_eq!(serde_json::to_string(&d.bbox).unwrap(), "[1.0,2.0,3.0,4.0]");
    }
}
