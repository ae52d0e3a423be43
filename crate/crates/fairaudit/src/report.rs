//! The report document and its JSON, Markdown and tidy-table renderings.

use std::fmt::Write as _;

use fairaudit_core::compare::PairResult;
use fairaudit_core::{ErrorKind, GroupKey, GroupOutcome, IntervalEstimate, PrevalenceEstimate, SdtEstimate};
use serde::{Deserialize, Serialize};

use crate::ingest::{Format, IngestSummary};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// The one field outside the determinism contract.
pub const TIMESTAMP_FIELD: &str = "generated_at";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool: Tool,
    pub command: String,
    pub generated_at: String,
    pub seed: u64,
    pub input: InputEcho,
    pub config: serde_json::Value,
    pub estimates: Vec<EstimateEntry>,
    pub comparisons: Vec<ComparisonEntry>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tool {
    pub name: String,
    pub version: String,
}

impl Default for Tool {
    fn default() -> Self {
        Self {
            name: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputEcho {
    pub path: String,
    #[serde(flatten)]
    pub summary: IngestSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Estimated,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub kind: String,
    pub message: String,
}

impl Problem {
    pub fn from_error(e: &fairaudit_core::Error) -> Self {
        Self {
            kind: kind_name(e.kind()).into(),
            message: e.to_string(),
        }
    }
}

pub fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Input => "input",
        ErrorKind::Degenerate => "degenerate",
        ErrorKind::Unstable => "unstable",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub replicates: usize,
    pub failed: usize,
}

impl From<&IntervalEstimate> for Interval {
    fn from(i: &IntervalEstimate) -> Self {
        Self {
            lower: i.lower,
            upper: i.upper,
            level: i.level,
            replicates: i.replicates,
            failed: i.failed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEstimate {
    pub implied_threshold: f64,
    /// Absent when the implied threshold is 0 or 1.
    pub cost_ratio: Option<f64>,
    pub raw_intercept: f64,
    pub slope: f64,
    pub halfwidth: f64,
    pub effective_n: f64,
    pub records_in_window: usize,
    pub degenerate: bool,
    pub clamped: bool,
    pub window_saturated: bool,
    pub interval: Option<Interval>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEstimate {
    pub criterion: f64,
    pub separation: f64,
    pub prevalence: f64,
    pub implied_threshold: f64,
    /// Absent when it overflows.
    pub cost_ratio: Option<f64>,
    pub fpr: f64,
    pub fnr: f64,
    pub counts: Counts,
    pub correction_applied: bool,
    pub low_confidence: bool,
    pub anti_correlated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateEntry {
    pub group: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<LabelEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<Problem>,
}

impl EstimateEntry {
    pub fn implied_threshold(&self) -> Option<f64> {
        self.model
            .as_ref()
            .map(|m| m.implied_threshold)
            .or(self.label.as_ref().map(|l| l.implied_threshold))
    }

    pub fn cost_ratio(&self) -> Option<f64> {
        match (&self.model, &self.label) {
            (Some(m), _) => m.cost_ratio,
            (_, Some(l)) => l.cost_ratio,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub group_a: String,
    pub group_b: String,
    pub metric: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difference: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<Interval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excludes_zero: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<Problem>,
}

/// A condition worth a reader's attention. `flag` is the name of the
/// estimate field that raised it, or one of `skipped`, `cost_ratio_undefined`,
/// `rows_rejected`, `comparison_failed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub flag: String,
    pub message: String,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn warn(group: &GroupKey, threshold: Option<f64>, flag: &str, message: String) -> Warning {
    Warning {
        group: Some(group.to_string()),
        threshold,
        flag: flag.into(),
        message,
    }
}

/// Report entry and warnings for one model-audit group.
pub fn model_entry(group: &GroupKey, t: f64, outcome: &GroupOutcome<PrevalenceEstimate>) -> (EstimateEntry, Vec<Warning>) {
    let mut warnings = Vec::new();
    let mut entry = EstimateEntry {
        group: group.to_string(),
        threshold: Some(t),
        status: Status::Estimated,
        model: None,
        label: None,
        problem: None,
    };
    match outcome {
        GroupOutcome::Skipped(e) => {
            entry.status = Status::Skipped;
            entry.problem = Some(Problem::from_error(e));
            warnings.push(warn(group, Some(t), "skipped", e.to_string()));
        }
        GroupOutcome::Estimated(e) => {
            let cost_ratio = fairaudit_core::implied_cost_ratio(e.implied_threshold)
                .ok()
                .map(|c| c.value())
                .and_then(finite);
            if e.degenerate {
                warnings.push(warn(group, Some(t), "degenerate", "all weighted scores are equal; the intercept is the weighted mean outcome".into()));
            }
            if e.clamped {
                warnings.push(warn(group, Some(t), "clamped", format!("intercept {} was clamped to [0, 1]", e.raw_intercept)));
            }
            if e.window_saturated {
                warnings.push(warn(group, Some(t), "window_saturated", format!("the window reached its maximum half-width {} before the effective sample size target", e.halfwidth)));
            }
            if cost_ratio.is_none() {
                warnings.push(warn(group, Some(t), "cost_ratio_undefined", format!("implied threshold {} has no finite cost ratio", e.implied_threshold)));
            }
            entry.model = Some(ModelEstimate {
                implied_threshold: e.implied_threshold,
                cost_ratio,
                raw_intercept: e.raw_intercept,
                slope: e.slope,
                halfwidth: e.halfwidth,
                effective_n: e.effective_n,
                records_in_window: e.records_in_window,
                degenerate: e.degenerate,
                clamped: e.clamped,
                window_saturated: e.window_saturated,
                interval: e.interval.as_ref().map(Interval::from),
            });
        }
    }
    (entry, warnings)
}

/// Report entry and warnings for one label-audit partition.
pub fn label_entry(group: &GroupKey, outcome: &GroupOutcome<SdtEstimate>) -> (EstimateEntry, Vec<Warning>) {
    let mut warnings = Vec::new();
    let mut entry = EstimateEntry {
        group: group.to_string(),
        threshold: None,
        status: Status::Estimated,
        model: None,
        label: None,
        problem: None,
    };
    match outcome {
        GroupOutcome::Skipped(e) => {
            entry.status = Status::Skipped;
            entry.problem = Some(Problem::from_error(e));
            warnings.push(warn(group, None, "skipped", e.to_string()));
        }
        GroupOutcome::Estimated(e) => {
            let c = &e.confusion;
            if c.correction_applied {
                warnings.push(warn(group, None, "correction_applied", "an error rate of 0 or 1 was replaced by the half-count correction".into()));
            }
            if e.low_confidence {
                warnings.push(warn(group, None, "low_confidence", format!("only {} truth-positive and {} truth-negative records", c.positives(), c.negatives())));
            }
            if e.anti_correlated {
                warnings.push(warn(group, None, "anti_correlated", format!("separation {} is negative", e.separation)));
            }
            let cost_ratio = finite(e.cost_ratio);
            if cost_ratio.is_none() {
                warnings.push(warn(group, None, "cost_ratio_undefined", "the cost ratio overflows".into()));
            }
            entry.label = Some(LabelEstimate {
                criterion: e.criterion,
                separation: e.separation,
                prevalence: e.prevalence,
                implied_threshold: e.implied_threshold,
                cost_ratio,
                fpr: c.fpr,
                fnr: c.fnr,
                counts: Counts {
                    true_positives: c.true_positives,
                    false_positives: c.false_positives,
                    false_negatives: c.false_negatives,
                    true_negatives: c.true_negatives,
                },
                correction_applied: c.correction_applied,
                low_confidence: e.low_confidence,
                anti_correlated: e.anti_correlated,
            });
        }
    }
    (entry, warnings)
}

pub fn comparison_entry(result: &PairResult, metric: &str) -> (ComparisonEntry, Option<Warning>) {
    let mut entry = ComparisonEntry {
        group_a: result.group_a.to_string(),
        group_b: result.group_b.to_string(),
        metric: metric.into(),
        status: Status::Estimated,
        estimate_a: None,
        estimate_b: None,
        difference: None,
        interval: None,
        excludes_zero: None,
        problem: None,
    };
    match &result.outcome {
        Ok(c) => {
            entry.estimate_a = Some(c.estimate_a);
            entry.estimate_b = Some(c.estimate_b);
            entry.difference = Some(c.difference);
            entry.interval = Some(Interval::from(&c.interval));
            entry.excludes_zero = Some(c.excludes_zero);
            (entry, None)
        }
        Err(e) => {
            entry.status = Status::Failed;
            entry.problem = Some(Problem::from_error(e));
            let warning = Warning {
                group: Some(format!("{} vs {}", result.group_a, result.group_b)),
                threshold: None,
                flag: "comparison_failed".into(),
                message: e.to_string(),
            };
            (entry, Some(warning))
        }
    }
}

pub fn rejection_warning(summary: &IngestSummary) -> Option<Warning> {
    (summary.rejected > 0).then(|| Warning {
        group: None,
        threshold: None,
        flag: "rows_rejected".into(),
        message: format!("{} of {} input rows were rejected", summary.rejected, summary.rows),
    })
}

pub fn timestamp_now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn render_json(doc: &ReportDocument) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("report values serialize");
    s.push('\n');
    s
}

fn num(x: f64) -> String {
    format!("{x:.4}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), num)
}

fn interval_cell(i: Option<&Interval>) -> String {
    i.map_or_else(|| "n/a".into(), |i| format!("[{}, {}]", num(i.lower), num(i.upper)))
}

pub fn render_markdown(doc: &ReportDocument) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {} report\n", doc.command);
    let _ = writeln!(s, "- tool: {} {}", doc.tool.name, doc.tool.version);
    let _ = writeln!(s, "- generated at: {}", doc.generated_at);
    let format = match doc.input.summary.format {
        Format::Csv => "csv",
        Format::Jsonl => "jsonl",
    };
    let _ = writeln!(s, "- input: `{}` ({format}), sha256 `{}`", doc.input.path, doc.input.summary.sha256);
    let _ = writeln!(
        s,
        "- rows: {} read, {} accepted, {} rejected",
        doc.input.summary.rows, doc.input.summary.accepted, doc.input.summary.rejected
    );
    let _ = writeln!(s, "- seed: {}", doc.seed);

    if !doc.estimates.is_empty() {
        s.push_str("\n## Estimates\n\n");
        let model = doc.estimates.iter().any(|e| e.threshold.is_some());
        if model {
            s.push_str("| group | threshold | implied threshold | interval | cost ratio | half-width | effective n | flags |\n");
            s.push_str("|---|---|---|---|---|---|---|---|\n");
        } else {
            s.push_str("| group | criterion | separation | prevalence | implied threshold | cost ratio | FPR | FNR | flags |\n");
            s.push_str("|---|---|---|---|---|---|---|---|---|\n");
        }
        for e in &doc.estimates {
            let flags = doc
                .warnings
                .iter()
                .filter(|w| w.group.as_deref() == Some(e.group.as_str()) && w.threshold == e.threshold)
                .map(|w| w.flag.as_str())
                .collect::<Vec<_>>()
                .join(", ");
            match (&e.model, &e.label) {
                (Some(m), _) => {
                    let _ = writeln!(
                        s,
                        "| {} | {} | {} | {} | {} | {} | {:.1} | {} |",
                        e.group,
                        opt(e.threshold),
                        num(m.implied_threshold),
                        interval_cell(m.interval.as_ref()),
                        opt(m.cost_ratio),
                        num(m.halfwidth),
                        m.effective_n,
                        flags
                    );
                }
                (_, Some(l)) => {
                    let _ = writeln!(
                        s,
                        "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                        e.group,
                        num(l.criterion),
                        num(l.separation),
                        num(l.prevalence),
                        num(l.implied_threshold),
                        opt(l.cost_ratio),
                        num(l.fpr),
                        num(l.fnr),
                        flags
                    );
                }
                _ => {
                    let reason = e.problem.as_ref().map_or("", |p| p.message.as_str());
                    let blanks = if model { 6 } else { 7 };
                    let _ = writeln!(s, "| {} | {}{} |", e.group, "skipped | ".repeat(blanks), reason);
                }
            }
        }
    }

    if !doc.comparisons.is_empty() {
        s.push_str("\n## Comparisons\n\n");
        s.push_str("| group a | group b | metric | estimate a | estimate b | difference | interval | excludes zero |\n");
        s.push_str("|---|---|---|---|---|---|---|---|\n");
        for c in &doc.comparisons {
            let verdict = match (c.excludes_zero, &c.problem) {
                (Some(x), _) => if x { "yes" } else { "no" }.to_string(),
                (None, Some(p)) => format!("failed: {}", p.message),
                (None, None) => "n/a".into(),
            };
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                c.group_a,
                c.group_b,
                c.metric,
                opt(c.estimate_a),
                opt(c.estimate_b),
                opt(c.difference),
                interval_cell(c.interval.as_ref()),
                verdict
            );
        }
    }

    if !doc.warnings.is_empty() {
        s.push_str("\n## Warnings\n\n");
        for w in &doc.warnings {
            let scope = match (&w.group, w.threshold) {
                (Some(g), Some(t)) => format!("{g} at {t}: "),
                (Some(g), None) => format!("{g}: "),
                _ => String::new(),
            };
            let _ = writeln!(s, "- `{}` {scope}{}", w.flag, w.message);
        }
    }
    s
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per (group, threshold, metric), for external plotting.
pub fn tidy_estimates(doc: &ReportDocument) -> Vec<u8> {
    let mut rows = Vec::new();
    for e in &doc.estimates {
        let mut push = |metric: &str, value: Option<f64>, iv: Option<&Interval>| {
            rows.push(vec![
                e.group.clone(),
                cell(e.threshold),
                metric.to_string(),
                cell(value),
                cell(iv.map(|i| i.lower)),
                cell(iv.map(|i| i.upper)),
            ]);
        };
        if let Some(m) = &e.model {
            push("implied_threshold", Some(m.implied_threshold), m.interval.as_ref());
            push("cost_ratio", m.cost_ratio, None);
        }
        if let Some(l) = &e.label {
            for (name, v) in [
                ("criterion", Some(l.criterion)),
                ("separation", Some(l.separation)),
                ("prevalence", Some(l.prevalence)),
                ("implied_threshold", Some(l.implied_threshold)),
                ("cost_ratio", l.cost_ratio),
                ("fpr", Some(l.fpr)),
                ("fnr", Some(l.fnr)),
            ] {
                push(name, v, None);
            }
        }
    }
    csv_bytes(&["group", "threshold", "metric", "value", "lower", "upper"], rows)
}

/// One row per compared pair.
pub fn tidy_comparisons(doc: &ReportDocument) -> Vec<u8> {
    let rows = doc
        .comparisons
        .iter()
        .map(|c| {
            vec![
                c.group_a.clone(),
                c.group_b.clone(),
                c.metric.clone(),
                cell(c.estimate_a),
                cell(c.estimate_b),
                cell(c.difference),
                cell(c.interval.map(|i| i.lower)),
                cell(c.interval.map(|i| i.upper)),
                c.excludes_zero.map(|x| x.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    csv_bytes(
        &["group_a", "group_b", "metric", "estimate_a", "estimate_b", "difference", "lower", "upper", "excludes_zero"],
        rows,
    )
}

/// `json` with the timestamp line removed, for determinism checks.
pub fn without_timestamp(json: &str) -> String {
    let needle = format!("\"{TIMESTAMP_FIELD}\":");
    json.lines()
        .filter(|l| !l.trim_start().starts_with(&needle))
        .flat_map(|l| [l, "\n"])
        .collect()
}
