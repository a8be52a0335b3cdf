//! Stage orchestration over a run directory.
//!
//! ```text
//! <out>/suite.jsonl
//! <out>/images/<model>/<case_id>/<side>.png       generated image
//! <out>/images/<model>/<case_id>/<side>.json      ImageRef (paths relative to <out>)
//! <out>/detections/<model>/<case_id>/<side>.json  DetectionResult
//! <out>/verdicts.jsonl
//! <out>/report.{json,csv,html}
//! <out>/counterexamples/<model>/<case_id>__<categories>/
//! ```
//!
//! A failed generation or detection leaves `<side>.error.json` in place of
//! the artifact; the compare stage turns it into an errored verdict.
//! Generate and detect skip sides whose artifact already exists unless
//! `force` is set. Compare and report always rebuild their outputs, which
//! are deterministic functions of the artifacts.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{detect_objects, generate_image, DetectionResult, FailureKind, GenerationRequest, ImageRef, Side};
use crate::classifier::annotate;
use crate::comparator::compare_pair;
use crate::config::{ConfigError, Generator, RunConfig};
use crate::report::{aggregate, emit_report, log_counterexample, read_verdicts, write_verdicts, PairEvidence, VerdictRecord};
use crate::suite::{generate_suite, Suite, SuiteError, TestCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    GenSuite,
    Generate,
    Detect,
    Compare,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::GenSuite, Stage::Generate, Stage::Detect, Stage::Compare, Stage::Report];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::GenSuite => "gen-suite",
            Stage::Generate => "generate",
            Stage::Detect => "detect",
            Stage::Compare => "compare",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?} (expected gen-suite, generate, detect, compare or report)"))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage {stage} needs {}, which does not exist; run the earlier stages first", .path.display())]
    MissingStageInput { stage: Stage, path: PathBuf },
    #[error("{} was generated from a different suite config; rerun gen-suite with --force", .0.display())]
    StaleSuite(PathBuf),
    #[error("suite: {0}")]
    Suite(#[from] SuiteError),
    #[error("report: {0}")]
    Report(#[from] crate::report::ReportError),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", .path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn require_dir(path: PathBuf, stage: Stage) -> Result<(), PipelineError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(PipelineError::MissingStageInput { stage, path })
    }
}

/// Why a side has no artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub kind: FailureKind,
    pub stage: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StageCounts {
    pub done: usize,
    pub reused: usize,
    pub failed: usize,
    /// Failures that are policy skips rather than errors.
    pub skipped: usize,
    /// Sides with no upstream input.
    pub missing_input: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub stages: Vec<String>,
    pub cases: usize,
    pub generate: StageCounts,
    pub detect: StageCounts,
    pub verdicts: usize,
    pub misaligned: usize,
    pub errored_verdicts: usize,
    pub counterexamples: usize,
}

impl RunSummary {
    fn has_errors(&self) -> bool {
        self.errored_verdicts > 0
            || self.generate.failed > self.generate.skipped
            || self.detect.failed > self.detect.skipped
    }

    /// 0 on success, 2 if any case errored.
    pub fn exit_code(&self) -> i32 {
        if self.has_errors() {
            2
        } else {
            0
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub stages: BTreeSet<Stage>,
    pub force: bool,
}

impl RunOptions {
    pub fn all() -> Self {
        RunOptions {
            stages: Stage::ALL.into_iter().collect(),
            force: false,
        }
    }

    pub fn only(stage: Stage) -> Self {
        RunOptions {
            stages: BTreeSet::from([stage]),
            force: false,
        }
    }
}

/// Paths inside a run directory.
#[derive(Debug, Clone)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunLayout { root: root.into() }
    }

    pub fn suite(&self) -> PathBuf {
        self.root.join("suite.jsonl")
    }

    pub fn verdicts(&self) -> PathBuf {
        self.root.join("verdicts.jsonl")
    }

    pub fn counterexamples(&self) -> PathBuf {
        self.root.join("counterexamples")
    }

    pub fn images_rel(model: &str) -> PathBuf {
        Path::new("images").join(model)
    }

    pub fn image_dir(&self, model: &str) -> PathBuf {
        self.root.join(Self::images_rel(model))
    }

    pub fn image_meta(&self, model: &str, case_id: &str, side: Side) -> PathBuf {
        self.image_dir(model).join(case_id).join(format!("{side}.json"))
    }

    pub fn image_error(&self, model: &str, case_id: &str, side: Side) -> PathBuf {
        self.image_dir(model).join(case_id).join(format!("{side}.error.json"))
    }

    pub fn detection_dir(&self, model: &str) -> PathBuf {
        self.root.join("detections").join(model)
    }

    pub fn detection(&self, model: &str, case_id: &str, side: Side) -> PathBuf {
        self.detection_dir(model).join(case_id).join(format!("{side}.json"))
    }

    pub fn detection_error(&self, model: &str, case_id: &str, side: Side) -> PathBuf {
        self.detection_dir(model).join(case_id).join(format!("{side}.error.json"))
    }

    /// Absolute location of an image recorded relative to the run root.
    pub fn resolve(&self, image: &ImageRef) -> ImageRef {
        ImageRef {
            path: self.root.join(&image.path),
            ..image.clone()
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut body = serde_json::to_string_pretty(value).expect("artifact serializes");
    body.push('\n');
    fs::write(path, body).map_err(io_err(path))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| PipelineError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn remove_if_exists(path: &Path) -> Result<(), PipelineError> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(io_err(path)(e)),
        _ => Ok(()),
    }
}

pub fn load_suite(layout: &RunLayout, stage: Stage) -> Result<Suite, PipelineError> {
    let path = layout.suite();
    let file = match fs::File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(PipelineError::MissingStageInput { stage, path });
        }
        Err(e) => return Err(io_err(&path)(e)),
    };
    Ok(Suite::read_jsonl(BufReader::new(file))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Done,
    Reused,
    Failed(FailureKind),
    NoInput,
}

impl StageCounts {
    fn tally(steps: &[Step]) -> Self {
        let mut c = StageCounts::default();
        for s in steps {
            match s {
                Step::Done => c.done += 1,
                Step::Reused => c.reused += 1,
                Step::Failed(k) => {
                    c.failed += 1;
                    if *k == FailureKind::Skipped {
                        c.skipped += 1;
                    }
                }
                Step::NoInput => c.missing_input += 1,
            }
        }
        c
    }

    fn merge(&mut self, o: StageCounts) {
        self.done += o.done;
        self.reused += o.reused;
        self.failed += o.failed;
        self.skipped += o.skipped;
        self.missing_input += o.missing_input;
    }
}

pub struct Pipeline {
    pub config: RunConfig,
    pub layout: RunLayout,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let layout = RunLayout::new(&config.output_dir);
        Ok(Pipeline { config, layout })
    }

    pub fn run(&self, opts: &RunOptions) -> Result<RunSummary, PipelineError> {
        fs::create_dir_all(&self.layout.root).map_err(io_err(&self.layout.root))?;
        let mut summary = RunSummary {
            stages: opts.stages.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        };
        let generators = if opts.stages.contains(&Stage::Generate) {
            self.config
                .generation
                .iter()
                .map(|g| g.build())
                .collect::<Result<Vec<_>, _>>()?
        } else {
            vec![]
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.concurrency.max_in_flight)
            .build()
            .map_err(|e| PipelineError::Pool(e.to_string()))?;

        let mut suite = None;
        if opts.stages.contains(&Stage::GenSuite) {
            let s = self.gen_suite(opts.force)?;
            summary.cases = s.cases.len();
            suite = Some(s);
        }
        for stage in [Stage::Generate, Stage::Detect, Stage::Compare, Stage::Report] {
            if !opts.stages.contains(&stage) {
                continue;
            }
            if suite.is_none() {
                suite = Some(load_suite(&self.layout, stage)?);
            }
            let s = suite.as_ref().expect("loaded");
            summary.cases = s.cases.len();
            log::info!("stage {stage}: {} cases", s.cases.len());
            match stage {
                Stage::Generate => {
                    for g in &generators {
                        summary.generate.merge(pool.install(|| self.generate(s, g, opts.force))?);
                    }
                }
                Stage::Detect => summary.detect = pool.install(|| self.detect(s, opts.force))?,
                Stage::Compare => {
                    let records = self.compare(s)?;
                    summary.verdicts = records.len();
                    summary.misaligned = records
                        .iter()
                        .filter(|r| r.verdict().is_some_and(|v| !v.aligned))
                        .count();
                    summary.errored_verdicts = records
                        .iter()
                        .filter(|r| {
                            matches!(
                                r.outcome,
                                crate::report::Outcome::Errored {
                                    kind: FailureKind::Errored,
                                    ..
                                }
                            )
                        })
                        .count();
                }
                Stage::Report => summary.counterexamples = pool.install(|| self.report(s))?,
                Stage::GenSuite => unreachable!(),
            }
        }
        Ok(summary)
    }

    fn gen_suite(&self, force: bool) -> Result<Suite, PipelineError> {
        let path = self.layout.suite();
        if path.exists() && !force {
            let existing = load_suite(&self.layout, Stage::GenSuite)?;
            if existing.header.config != self.config.suite {
                return Err(PipelineError::StaleSuite(path));
            }
            log::info!("reusing {}", path.display());
            return Ok(existing);
        }
        let suite = generate_suite(&self.config.suite)?;
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        suite.write_jsonl(BufWriter::new(file))?;
        log::info!("wrote {} cases to {}", suite.cases.len(), path.display());
        Ok(suite)
    }

    fn sides(suite: &Suite) -> Vec<(&TestCase, Side)> {
        suite
            .cases
            .iter()
            .flat_map(|c| Side::BOTH.into_iter().map(move |s| (c, s)))
            .collect()
    }

    fn generate(&self, suite: &Suite, g: &Generator, force: bool) -> Result<StageCounts, PipelineError> {
        let model = g.profile.name.as_str();
        let images_dir = self.layout.image_dir(model);
        let progress = AtomicUsize::new(0);
        let total = suite.cases.len() * 2;
        let steps = Self::sides(suite)
            .into_par_iter()
            .map(|(case, side)| -> Result<Step, PipelineError> {
                let meta = self.layout.image_meta(model, &case.case_id, side);
                let err_path = self.layout.image_error(model, &case.case_id, side);
                if meta.exists() && !force {
                    return Ok(Step::Reused);
                }
                let req = GenerationRequest {
                    prompt: side.prompt(case).to_string(),
                    seed: g.profile.send_seed.then(|| side.seed(case)),
                    model_profile: model.to_string(),
                    literal_prefix: g.profile.literal_prefix,
                };
                let result = generate_image(
                    g.backend.as_ref(),
                    &req,
                    case,
                    side,
                    &images_dir,
                    &self.config.retry,
                    g.limiter.as_ref(),
                );
                let n = progress.fetch_add(1, Ordering::Relaxed) + 1;
                match result {
                    Ok(mut image) => {
                        image.path = image
                            .path
                            .strip_prefix(&self.layout.root)
                            .map(Path::to_path_buf)
                            .unwrap_or(image.path);
                        write_json(&meta, &image)?;
                        remove_if_exists(&err_path)?;
                        log::debug!("[{model} {n}/{total}] {} {side} ok", case.case_id);
                        Ok(Step::Done)
                    }
                    Err(e) => {
                        log::warn!("[{model} {n}/{total}] {} {side}: {e}", case.case_id);
                        let failure = StageFailure {
                            kind: e.kind(),
                            stage: Stage::Generate.to_string(),
                            reason: e.to_string(),
                        };
                        remove_if_exists(&meta)?;
                        write_json(&err_path, &failure)?;
                        Ok(Step::Failed(failure.kind))
                    }
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let counts = StageCounts::tally(&steps);
        log::info!("generate {model}: {counts:?}");
        Ok(counts)
    }

    fn detect(&self, suite: &Suite, force: bool) -> Result<StageCounts, PipelineError> {
        let detector = self.config.detection.build();
        let threshold = self.config.detection.score_threshold;
        let mut counts = StageCounts::default();
        for g in &self.config.generation {
            let model = g.name.as_str();
            require_dir(self.layout.image_dir(model), Stage::Detect)?;
            let det_dir = self.layout.detection_dir(model);
            fs::create_dir_all(&det_dir).map_err(io_err(&det_dir))?;
            let steps = Self::sides(suite)
                .into_par_iter()
                .map(|(case, side)| -> Result<Step, PipelineError> {
                    let meta = self.layout.image_meta(model, &case.case_id, side);
                    let out = self.layout.detection(model, &case.case_id, side);
                    let err_path = self.layout.detection_error(model, &case.case_id, side);
                    if !meta.exists() {
                        return Ok(Step::NoInput);
                    }
                    if out.exists() && !force {
                        return Ok(Step::Reused);
                    }
                    let image: ImageRef = read_json(&meta)?;
                    match detect_objects(detector.as_ref(), &self.layout.resolve(&image), threshold) {
                        Ok(mut det) => {
                            det.image = image;
                            write_json(&out, &det)?;
                            remove_if_exists(&err_path)?;
                            Ok(Step::Done)
                        }
                        Err(e) => {
                            log::warn!("detect {model} {} {side}: {e}", case.case_id);
                            remove_if_exists(&out)?;
                            write_json(
                                &err_path,
                                &StageFailure {
                                    kind: FailureKind::Errored,
                                    stage: Stage::Detect.to_string(),
                                    reason: e.to_string(),
                                },
                            )?;
                            Ok(Step::Failed(FailureKind::Errored))
                        }
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            let c = StageCounts::tally(&steps);
            log::info!("detect {model}: {c:?}");
            counts.merge(c);
        }
        Ok(counts)
    }

    /// Loads both detections of a case, or the reason they are unusable.
    fn evidence(&self, model: &str, case: &TestCase) -> Result<Result<[DetectionResult; 2], StageFailure>, PipelineError> {
        let mut out = Vec::with_capacity(2);
        for side in Side::BOTH {
            let id = &case.case_id;
            for err in [
                self.layout.image_error(model, id, side),
                self.layout.detection_error(model, id, side),
            ] {
                if err.exists() {
                    return Ok(Err(read_json(&err)?));
                }
            }
            let missing = |what: &str, stage: Stage| StageFailure {
                kind: FailureKind::Errored,
                stage: stage.to_string(),
                reason: format!("missing {what} for side {side}"),
            };
            let meta = self.layout.image_meta(model, id, side);
            if !meta.exists() {
                return Ok(Err(missing("image", Stage::Generate)));
            }
            let det_path = self.layout.detection(model, id, side);
            if !det_path.exists() {
                return Ok(Err(missing("detection", Stage::Detect)));
            }
            let image: ImageRef = read_json(&meta)?;
            let det: DetectionResult = read_json(&det_path)?;
            if det.image.sha256 != image.sha256 {
                return Ok(Err(StageFailure {
                    kind: FailureKind::Errored,
                    stage: Stage::Detect.to_string(),
                    reason: format!("detection for side {side} was computed on a different image; rerun detect"),
                }));
            }
            if let Err(e) = self.layout.resolve(&image).verify() {
                return Ok(Err(StageFailure {
                    kind: FailureKind::Errored,
                    stage: Stage::Compare.to_string(),
                    reason: e.to_string(),
                }));
            }
            out.push(det);
        }
        let b = out.pop().expect("two sides");
        let a = out.pop().expect("two sides");
        Ok(Ok([a, b]))
    }

    fn compare(&self, suite: &Suite) -> Result<Vec<VerdictRecord>, PipelineError> {
        let mut records = Vec::new();
        for g in &self.config.generation {
            let model = g.name.as_str();
            require_dir(self.layout.detection_dir(model), Stage::Compare)?;
            for case in &suite.cases {
                let rec = match self.evidence(model, case)? {
                    Err(f) => VerdictRecord::errored(model, &case.case_id, f.kind, &f.stage, f.reason),
                    Ok([a, b]) => match compare_pair(case, &a, &b, &self.config.comparator) {
                        Ok(mut v) => {
                            annotate(&mut v, &a, &b, case, &self.config.classifier);
                            VerdictRecord::evaluated(model, v)
                        }
                        Err(e) => VerdictRecord::errored(
                            model,
                            &case.case_id,
                            FailureKind::Errored,
                            Stage::Compare.as_str(),
                            e.to_string(),
                        ),
                    },
                };
                log::debug!("compare {model} {}: {:?}", case.case_id, rec.verdict().map(|v| v.aligned));
                records.push(rec);
            }
        }
        let path = self.layout.verdicts();
        write_verdicts(&path, &records)?;
        log::info!("wrote {} verdicts to {}", records.len(), path.display());
        Ok(records)
    }

    fn report(&self, suite: &Suite) -> Result<usize, PipelineError> {
        let path = self.layout.verdicts();
        if !path.exists() {
            return Err(PipelineError::MissingStageInput {
                stage: Stage::Report,
                path,
            });
        }
        let records = read_verdicts(&path)?;
        let report = aggregate(&records, suite)?;
        emit_report(&report, &self.layout.root)?;

        let root = self.layout.counterexamples();
        if root.exists() {
            fs::remove_dir_all(&root).map_err(io_err(&root))?;
        }
        let index = suite.index();
        let written = records
            .par_iter()
            .filter_map(|r| r.verdict().filter(|v| !v.aligned).map(|v| (r, v)))
            .map(|(r, v)| -> Result<usize, PipelineError> {
                let case = index[r.case_id.as_str()];
                let dets: Vec<DetectionResult> = Side::BOTH
                    .into_iter()
                    .map(|s| read_json(&self.layout.detection(&r.model, &r.case_id, s)))
                    .collect::<Result<_, _>>()?;
                let images: Vec<PathBuf> = dets.iter().map(|d| self.layout.root.join(&d.image.path)).collect();
                let ev = PairEvidence {
                    case,
                    verdict: v,
                    images: [&images[0], &images[1]],
                    detections: [&dets[0], &dets[1]],
                };
                Ok(log_counterexample(&root.join(&r.model), &ev)?.map_or(0, |_| 1))
            })
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .sum();
        log::info!(
            "report: overall {}% over {} verdicts, {written} counterexamples",
            report.rates.overall.rate_pct.as_deref().unwrap_or("n/a"),
            records.len()
        );
        Ok(written)
    }
}

/// Convenience wrapper: validate, build and run.
pub fn run_pipeline(config: RunConfig, opts: &RunOptions) -> Result<RunSummary, PipelineError> {
    Pipeline::new(config)?.run(opts)
}
