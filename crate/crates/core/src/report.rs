//! Verdict records, rate tables and the counterexample archive.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BBox, DetectionResult, FailureKind};
use crate::classifier::{ErrorCategory, UNCATEGORIZED};
use crate::comparator::Verdict;
use crate::suite::{Suite, TestCase};
use crate::templates::{ModifierKind, TemplateLaw};

pub const VERDICT_SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("verdict for unknown case {case_id:?} (model {model})")]
    UnknownCase { model: String, case_id: String },
    #[error("duplicate verdict for case {case_id:?} (model {model})")]
    DuplicateVerdict { model: String, case_id: String },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("image {}: {source}", .path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One line of `verdicts.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub schema_version: u32,
    pub model: String,
    pub case_id: String,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Outcome {
    Evaluated { verdict: Verdict },
    /// Not judged: an API failure, policy rejection or missing artifact.
    Errored {
        kind: FailureKind,
        stage: String,
        reason: String,
    },
}

impl VerdictRecord {
    pub fn evaluated(model: &str, verdict: Verdict) -> Self {
        VerdictRecord {
            schema_version: VERDICT_SCHEMA_VERSION,
            model: model.to_string(),
            case_id: verdict.case_id.clone(),
            outcome: Outcome::Evaluated { verdict },
        }
    }

    pub fn errored(model: &str, case_id: &str, kind: FailureKind, stage: &str, reason: String) -> Self {
        VerdictRecord {
            schema_version: VERDICT_SCHEMA_VERSION,
            model: model.to_string(),
            case_id: case_id.to_string(),
            outcome: Outcome::Errored {
                kind,
                stage: stage.to_string(),
                reason,
            },
        }
    }

    pub fn verdict(&self) -> Option<&Verdict> {
        match &self.outcome {
            Outcome::Evaluated { verdict } => Some(verdict),
            Outcome::Errored { .. } => None,
        }
    }
}

pub fn write_verdicts(path: &Path, records: &[VerdictRecord]) -> Result<(), ReportError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("verdict serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn read_verdicts(path: &Path) -> Result<Vec<VerdictRecord>, ReportError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| ReportError::Parse { line: i + 1, source }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub total: u64,
    pub aligned: u64,
    pub misaligned: u64,
    /// Not judged; includes `skipped`.
    pub errored: u64,
    /// Policy rejections.
    pub skipped: u64,
    pub uncategorized: u64,
    pub categories: BTreeMap<ErrorCategory, u64>,
}

impl Default for Tally {
    fn default() -> Self {
        Tally {
            total: 0,
            aligned: 0,
            misaligned: 0,
            errored: 0,
            skipped: 0,
            uncategorized: 0,
            categories: ErrorCategory::ALL.iter().map(|c| (*c, 0)).collect(),
        }
    }
}

impl Tally {
    fn add(&mut self, outcome: &Outcome) {
        self.total += 1;
        match outcome {
            Outcome::Evaluated { verdict } if verdict.aligned => self.aligned += 1,
            Outcome::Evaluated { verdict } => {
                self.misaligned += 1;
                if verdict.uncategorized {
                    self.uncategorized += 1;
                }
                for c in &verdict.categories {
                    *self.categories.entry(*c).or_insert(0) += 1;
                }
            }
            Outcome::Errored { kind, .. } => {
                self.errored += 1;
                if *kind == FailureKind::Skipped {
                    self.skipped += 1;
                }
            }
        }
    }

    pub fn evaluated(&self) -> u64 {
        self.total - self.errored
    }

    /// Misaligned over evaluated pairs; `None` when nothing was evaluated.
    pub fn rate(&self) -> Option<f64> {
        match self.evaluated() {
            0 => None,
            n => Some(self.misaligned as f64 / n as f64),
        }
    }
}

/// Percentage with one decimal, e.g. `45.8`.
pub fn format_pct(rate: f64) -> String {
    format!("{:.1}", rate * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub law: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub modifier: Option<String>,
    #[serde(flatten)]
    pub tally: Tally,
    pub rate: Option<f64>,
    pub rate_pct: Option<String>,
}

impl RateRow {
    fn new(model: Option<&str>, law: Option<&str>, modifier: Option<&str>, tally: Tally) -> Self {
        let rate = tally.rate();
        RateRow {
            model: model.map(str::to_string),
            law: law.map(str::to_string),
            modifier: modifier.map(str::to_string),
            tally,
            rate,
            rate_pct: rate.map(format_pct),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    /// One row per populated (model, law, modifier).
    pub cells: Vec<RateRow>,
    pub by_law: Vec<RateRow>,
    pub by_modifier: Vec<RateRow>,
    pub by_model: Vec<RateRow>,
    pub overall: RateRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub count: u8,
    pub total: u64,
    pub errored: u64,
    pub misaligned: u64,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumberingCurve {
    pub model: String,
    pub entity: String,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub cases_in_manifest: usize,
    pub models: Vec<String>,
    /// Manifest cases with no verdict record, per model.
    pub missing: BTreeMap<String, usize>,
    pub rates: RateTable,
    pub numbering: Vec<NumberingCurve>,
}

/// Tallies verdict records against the manifest. Counting is exact and
/// the output depends only on the set of records, not their order.
pub fn aggregate<'a>(records: impl IntoIterator<Item = &'a VerdictRecord>, suite: &Suite) -> Result<Report, ReportError> {
    let index = suite.index();
    let mut seen: BTreeSet<(&str, &str)> = BTreeSet::new();
    let mut cells: BTreeMap<(String, TemplateLaw, ModifierKind), Tally> = BTreeMap::new();
    let mut by_law: BTreeMap<TemplateLaw, Tally> = BTreeMap::new();
    let mut by_modifier: BTreeMap<ModifierKind, Tally> = BTreeMap::new();
    let mut by_model: BTreeMap<String, Tally> = BTreeMap::new();
    let mut overall = Tally::default();
    let mut curves: BTreeMap<(String, String), BTreeMap<u8, Tally>> = BTreeMap::new();

    for r in records {
        let Some(case) = index.get(r.case_id.as_str()) else {
            return Err(ReportError::UnknownCase {
                model: r.model.clone(),
                case_id: r.case_id.clone(),
            });
        };
        if !seen.insert((r.model.as_str(), r.case_id.as_str())) {
            return Err(ReportError::DuplicateVerdict {
                model: r.model.clone(),
                case_id: r.case_id.clone(),
            });
        }
        let kind = case.modifier.kind();
        cells.entry((r.model.clone(), case.law, kind)).or_default().add(&r.outcome);
        by_law.entry(case.law).or_default().add(&r.outcome);
        by_modifier.entry(kind).or_default().add(&r.outcome);
        by_model.entry(r.model.clone()).or_default().add(&r.outcome);
        overall.add(&r.outcome);
        if let (Some(entity), Some(count)) = (case.numbered_entity(), case.count) {
            curves
                .entry((r.model.clone(), entity.to_string()))
                .or_default()
                .entry(count)
                .or_default()
                .add(&r.outcome);
        }
    }

    let models: Vec<String> = by_model.keys().cloned().collect();
    let missing = models
        .iter()
        .map(|m| {
            let have = seen.iter().filter(|(sm, _)| sm == m).count();
            (m.clone(), suite.cases.len() - have)
        })
        .collect();

    let rates = RateTable {
        cells: cells
            .into_iter()
            .map(|((m, l, k), t)| RateRow::new(Some(&m), Some(l.as_str()), Some(modifier_name(k)), t))
            .collect(),
        by_law: by_law
            .into_iter()
            .map(|(l, t)| RateRow::new(None, Some(l.as_str()), None, t))
            .collect(),
        by_modifier: by_modifier
            .into_iter()
            .map(|(k, t)| RateRow::new(None, None, Some(modifier_name(k)), t))
            .collect(),
        by_model: by_model
            .into_iter()
            .map(|(m, t)| RateRow::new(Some(&m), None, None, t))
            .collect(),
        overall: RateRow::new(None, None, None, overall),
    };
    let numbering = curves
        .into_iter()
        .map(|((model, entity), points)| NumberingCurve {
            model,
            entity,
            points: points
                .into_iter()
                .map(|(count, t)| CurvePoint {
                    count,
                    total: t.total,
                    errored: t.errored,
                    misaligned: t.misaligned,
                    rate: t.rate(),
                })
                .collect(),
        })
        .collect();

    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        cases_in_manifest: suite.cases.len(),
        models,
        missing,
        rates,
        numbering,
    })
}

fn modifier_name(k: ModifierKind) -> &'static str {
    match k {
        ModifierKind::And => "and",
        ModifierKind::Or => "or",
        ModifierKind::X => "x",
        ModifierKind::Y => "y",
        ModifierKind::Number => "number",
    }
}

pub fn report_json(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub const CSV_HEADER: &[&str] = &[
    "scope",
    "model",
    "law",
    "modifier",
    "total",
    "aligned",
    "misaligned",
    "errored",
    "skipped",
    "uncategorized",
    "optical_character",
    "entity_omission",
    "entity_duplication",
    "x_misposition",
    "y_misposition",
    "rate",
    "rate_pct",
];

/// One row per populated cell, then law, modifier, model and overall
/// marginals. `rate` uses the shortest representation that parses back to
/// the same value as in the JSON report.
pub fn report_csv(report: &Report) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    let t = &report.rates;
    let scoped = t
        .cells
        .iter()
        .map(|r| ("cell", r))
        .chain(t.by_law.iter().map(|r| ("law", r)))
        .chain(t.by_modifier.iter().map(|r| ("modifier", r)))
        .chain(t.by_model.iter().map(|r| ("model", r)))
        .chain(std::iter::once(("overall", &t.overall)));
    for (scope, r) in scoped {
        let mut rec = vec![
            scope.to_string(),
            r.model.clone().unwrap_or_default(),
            r.law.clone().unwrap_or_default(),
            r.modifier.clone().unwrap_or_default(),
        ];
        let n = &r.tally;
        rec.extend([n.total, n.aligned, n.misaligned, n.errored, n.skipped, n.uncategorized].map(|v| v.to_string()));
        rec.extend(ErrorCategory::ALL.iter().map(|c| n.categories.get(c).copied().unwrap_or(0).to_string()));
        rec.push(r.rate.map(|v| v.to_string()).unwrap_or_default());
        rec.push(r.rate_pct.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Io {
        path: PathBuf::from("report.csv"),
        source: e.into_error(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn pct_cell(r: &RateRow) -> String {
    r.rate_pct.as_deref().map_or("n/a".to_string(), |p| format!("{p}%"))
}

fn named(rows: &[RateRow], key: fn(&RateRow) -> Option<&String>) -> Vec<(String, &RateRow)> {
    rows.iter().map(|r| (key(r).cloned().unwrap_or_default(), r)).collect()
}

fn bar_chart(out: &mut String, title: &str, rows: &[(String, &RateRow)]) {
    let _ = writeln!(out, "<h3>{}</h3>\n<div class=\"chart\">", esc(title));
    for (name, r) in rows {
        let width = r.rate.unwrap_or(0.0) * 100.0;
        let _ = writeln!(
            out,
            "<div class=\"bar-row\"><span class=\"bar-label\">{}</span><span class=\"bar\" style=\"width:{width:.1}%\"></span><span class=\"bar-value\">{}</span></div>",
            esc(name),
            pct_cell(r)
        );
    }
    out.push_str("</div>\n");
}

fn rate_table(out: &mut String, rows: &[RateRow]) {
    out.push_str("<table>\n<tr><th>model</th><th>law</th><th>modifier</th><th>total</th><th>aligned</th><th>misaligned</th><th>errored</th><th>rate</th></tr>\n");
    for r in rows {
        let t = &r.tally;
        let _ = writeln!(
            out,
            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
            esc(r.model.as_deref().unwrap_or("all")),
            esc(r.law.as_deref().unwrap_or("all")),
            esc(r.modifier.as_deref().unwrap_or("all")),
            t.total,
            t.aligned,
            t.misaligned,
            t.errored,
            pct_cell(r)
        );
    }
    out.push_str("</table>\n");
}

/// A self-contained page: inline styles, no scripts, no external resources.
pub fn report_html(report: &Report) -> String {
    let t = &report.rates;
    let mut out = String::from(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>metalogic report</title>\n<style>\n\
body{font-family:sans-serif;margin:2em;color:#222}\ntable{border-collapse:collapse;margin-bottom:1.5em}\n\
td,th{border:1px solid #bbb;padding:3px 8px;text-align:right}\nth{background:#eee}\n\
.chart{width:640px;margin-bottom:1.5em}\n.bar-row{display:flex;align-items:center;margin:2px 0}\n\
.bar-label{width:160px;text-align:right;padding-right:8px}\n.bar{display:inline-block;height:14px;background:#c0504d;max-width:400px}\n\
.bar-value{padding-left:6px}\n</style>\n</head>\n<body>\n",
    );
    let _ = writeln!(
        out,
        "<h1>Misalignment report</h1>\n<p>{} {} &middot; {} cases in manifest &middot; models: {}</p>",
        esc(&report.tool),
        esc(&report.version),
        report.cases_in_manifest,
        esc(&report.models.join(", "))
    );
    let o = &t.overall;
    let _ = writeln!(
        out,
        "<h2>Overall: {}</h2>\n<p>{} misaligned of {} evaluated ({} errored, {} uncategorized)</p>",
        pct_cell(o),
        o.tally.misaligned,
        o.tally.evaluated(),
        o.tally.errored,
        o.tally.uncategorized
    );

    out.push_str("<h2>Charts</h2>\n");
    bar_chart(&mut out, "By law", &named(&t.by_law, |r| r.law.as_ref()));
    bar_chart(&mut out, "By modifier", &named(&t.by_modifier, |r| r.modifier.as_ref()));
    bar_chart(&mut out, "By model", &named(&t.by_model, |r| r.model.as_ref()));

    out.push_str("<h2>Categories</h2>\n<table>\n<tr><th>category</th><th>misaligned pairs</th></tr>\n");
    for c in ErrorCategory::ALL {
        let _ = writeln!(out, "<tr><td>{c}</td><td>{}</td></tr>", o.tally.categories.get(&c).copied().unwrap_or(0));
    }
    let _ = writeln!(out, "<tr><td>{UNCATEGORIZED}</td><td>{}</td></tr>\n</table>", o.tally.uncategorized);

    out.push_str("<h2>Cells</h2>\n");
    rate_table(&mut out, &t.cells);
    out.push_str("<h2>Marginals</h2>\n");
    rate_table(&mut out, &t.by_law);
    rate_table(&mut out, &t.by_modifier);
    rate_table(&mut out, &t.by_model);

    if !report.numbering.is_empty() {
        out.push_str("<h2>Numbering</h2>\n");
        for curve in &report.numbering {
            let rows: Vec<RateRow> = curve
                .points
                .iter()
                .map(|p| {
                    RateRow::new(
                        None,
                        None,
                        None,
                        Tally {
                            total: p.total,
                            errored: p.errored,
                            misaligned: p.misaligned,
                            ..Tally::default()
                        },
                    )
                })
                .collect();
            let named: Vec<(String, &RateRow)> = curve.points.iter().zip(&rows).map(|(p, r)| (p.count.to_string(), r)).collect();
            bar_chart(&mut out, &format!("{} / {}", curve.model, curve.entity), &named);
        }
    }
    out.push_str("</body>\n</html>\n");
    out
}

/// Writes `report.json`, `report.csv` and `report.html` into `dir`.
pub fn emit_report(report: &Report, dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (name, body) in [
        ("report.json", report_json(report)),
        ("report.csv", report_csv(report)?),
        ("report.html", report_html(report)),
    ] {
        let p = dir.join(name);
        fs::write(&p, body).map_err(io_err(&p))?;
    }
    Ok(())
}

/// Folder name for a misaligned pair: `<case_id>__<cat1>+<cat2>`.
pub fn counterexample_name(verdict: &Verdict) -> String {
    let cats = if verdict.categories.is_empty() {
        UNCATEGORIZED.to_string()
    } else {
        verdict.categories.iter().map(|c| c.as_str()).collect::<Vec<_>>().join("+")
    };
    format!("{}__{cats}", verdict.case_id)
}

/// Pixel position of the centroid marker for a box.
pub fn centroid_marker(b: &BBox) -> (i64, i64) {
    let (cx, cy) = b.centroid();
    (cx.round() as i64, cy.round() as i64)
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn outline(img: &mut RgbImage, b: &BBox, c: Rgb<u8>) {
    let (x1, y1) = (b.x1.round() as i64, b.y1.round() as i64);
    let (x2, y2) = (b.x2.round() as i64 - 1, b.y2.round() as i64 - 1);
    for t in 0..2 {
        for x in x1..=x2 {
            put(img, x, y1 + t, c);
            put(img, x, y2 - t, c);
        }
        for y in y1..=y2 {
            put(img, x1 + t, y, c);
            put(img, x2 - t, y, c);
        }
    }
}

/// Draws detection boxes, OCR boxes and a cross at every box centroid.
pub fn draw_overlay(img: &mut RgbImage, det: &DetectionResult) {
    const BOX: Rgb<u8> = Rgb([220, 30, 30]);
    const OCR: Rgb<u8> = Rgb([30, 60, 220]);
    const MARK: Rgb<u8> = Rgb([20, 200, 20]);
    for d in &det.detections {
        outline(img, &d.bbox, BOX);
    }
    for o in &det.ocr_regions {
        outline(img, &o.bbox, OCR);
    }
    for b in det.detections.iter().map(|d| &d.bbox).chain(det.ocr_regions.iter().map(|o| &o.bbox)) {
        let (cx, cy) = centroid_marker(b);
        for k in -4..=4 {
            put(img, cx + k, cy, MARK);
            put(img, cx, cy + k, MARK);
        }
    }
}

pub struct PairEvidence<'a> {
    pub case: &'a TestCase,
    pub verdict: &'a Verdict,
    /// Absolute paths of the two images.
    pub images: [&'a Path; 2],
    pub detections: [&'a DetectionResult; 2],
}

/// Archives a misaligned pair under `root/<counterexample_name>`. Aligned
/// verdicts are not archived.
pub fn log_counterexample(root: &Path, ev: &PairEvidence<'_>) -> Result<Option<PathBuf>, ReportError> {
    if ev.verdict.aligned {
        return Ok(None);
    }
    let dir = root.join(counterexample_name(ev.verdict));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let write = |name: &str, body: &[u8]| {
        let p = dir.join(name);
        fs::write(&p, body).map_err(io_err(&p))
    };
    write("prompt_a.txt", format!("{}\n", ev.case.prompt_a).as_bytes())?;
    write("prompt_b.txt", format!("{}\n", ev.case.prompt_b).as_bytes())?;
    let mut verdict = serde_json::to_string_pretty(ev.verdict).expect("verdict serializes");
    verdict.push('\n');
    write("verdict.json", verdict.as_bytes())?;
    for (side, (src, det)) in ["a", "b"].iter().zip(ev.images.iter().zip(ev.detections)) {
        let bytes = fs::read(src).map_err(io_err(src))?;
        write(&format!("{side}.png"), &bytes)?;
        let mut json = serde_json::to_string_pretty(det).expect("detections serialize");
        json.push('\n');
        write(&format!("{side}.detections.json"), json.as_bytes())?;
        let mut img = image::load_from_memory(&bytes)
            .map_err(|source| ReportError::Image {
                path: src.to_path_buf(),
                source,
            })?
            .to_rgb8();
        draw_overlay(&mut img, det);
        let p = dir.join(format!("{side}.overlay.png"));
        img.save(&p).map_err(|source| ReportError::Image { path: p.clone(), source })?;
    }
    Ok(Some(dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suite::{generate_suite, SuiteConfig};

    fn verdict(case_id: &str, aligned: bool, cats: &[ErrorCategory]) -> Verdict {
        Verdict {
            case_id: case_id.into(),
            aligned,
            presence_diff: if aligned {
                BTreeMap::new()
            } else {
                BTreeMap::from([("cat".to_string(), (1, 0))])
            },
            position_diff: vec![],
            categories: cats.to_vec(),
            uncategorized: !aligned && cats.is_empty(),
            notes: vec![],
        }
    }

    fn small_suite() -> Suite {
        generate_suite(&SuiteConfig {
            max_cases_per_category: Some(2),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_misaligned_is_zero_percent() {
        let suite = small_suite();
        let recs: Vec<_> = suite.cases[..4]
            .iter()
            .map(|c| VerdictRecord::evaluated("m", verdict(&c.case_id, true, &[])))
            .collect();
        let r = aggregate(&recs, &suite).unwrap();
        assert_eq!(r.rates.overall.rate_pct.as_deref(), Some("0.0"));
        assert_eq!(r.missing["m"], suite.cases.len() - 4);
    }

    #[test]
    fn errored_cases_leave_the_denominator() {
        let suite = small_suite();
        let c = &suite.cases;
        let recs = vec![
            VerdictRecord::evaluated("m", verdict(&c[0].case_id, false, &[ErrorCategory::EntityOmission])),
            VerdictRecord::evaluated("m", verdict(&c[1].case_id, true, &[])),
            VerdictRecord::errored("m", &c[2].case_id, FailureKind::Skipped, "generate", "policy".into()),
        ];
        let r = aggregate(&recs, &suite).unwrap();
        let o = &r.rates.overall.tally;
        assert_eq!((o.total, o.errored, o.skipped, o.misaligned), (3, 1, 1, 1));
        assert_eq!(r.rates.overall.rate, Some(0.5));
        assert_eq!(o.categories[&ErrorCategory::EntityOmission], 1);
    }

    #[test]
    fn unknown_and_duplicate_verdicts_are_rejected() {
        let suite = small_suite();
        let id = &suite.cases[0].case_id;
        let dup = vec![
            VerdictRecord::evaluated("m", verdict(id, true, &[])),
            VerdictRecord::evaluated("m", verdict(id, true, &[])),
        ];
        assert!(matches!(aggregate(&dup, &suite), Err(ReportError::DuplicateVerdict { .. })));
        let other_model = vec![
            VerdictRecord::evaluated("m", verdict(id, true, &[])),
            VerdictRecord::evaluated("n", verdict(id, true, &[])),
        ];
        assert!(aggregate(&other_model, &suite).is_ok());
        let unknown = vec![VerdictRecord::evaluated("m", verdict("nope", true, &[]))];
        assert!(matches!(aggregate(&unknown, &suite), Err(ReportError::UnknownCase { .. })));
    }

    #[test]
    fn record_wire_shape() {
        let r = VerdictRecord::errored("m", "c1", FailureKind::Errored, "detect", "boom".into());
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["status"], "errored");
        assert_eq!(v["kind"], "errored");
        let back: VerdictRecord = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
        let r = VerdictRecord::evaluated("m", verdict("c1", false, &[ErrorCategory::XMisposition]));
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains(r#""status":"evaluated""#));
        assert_eq!(serde_json::from_str::<VerdictRecord>(&s).unwrap(), r);
    }

    #[test]
    fn counterexample_names() {
        assert_eq!(
            counterexample_name(&verdict("c1", false, &[ErrorCategory::EntityOmission])),
            "c1__entity_omission"
        );
        assert_eq!(
            counterexample_name(&verdict(
                "c1",
                false,
                &[ErrorCategory::OpticalCharacter, ErrorCategory::YMisposition]
            )),
            "c1__optical_character+y_misposition"
        );
        assert_eq!(counterexample_name(&verdict("c1", false, &[])), "c1__uncategorized");
    }

    #[test]
    fn centroid_marker_is_box_center() {
        assert_eq!(centroid_marker(&BBox::new(10., 20., 30., 60.)), (20, 40));
    }

    #[test]
    fn html_is_self_contained() {
        let suite = small_suite();
        let recs: Vec<_> = suite
            .cases
            .iter()
            .map(|c| VerdictRecord::evaluated("m", verdict(&c.case_id, true, &[])))
            .collect();
        let html = report_html(&aggregate(&recs, &suite).unwrap());
        assert!(!html.contains("http://") && !html.contains("https://"));
        assert!(!html.contains("<script"));
    }
}
