//! Orchestration: ingest, audit, compare, and assemble the report.

use std::collections::BTreeMap;
use std::path::PathBuf;

use fairaudit_core::compare::{all_pairs, compare_groups, ComparisonData};
use fairaudit_core::synth::{gen_labels, gen_scored, ScoreModel, SdtWorld};
use fairaudit_core::{
    audit_labels, audit_model, BootstrapConfig, CorrectionPolicy, Error, GroupKey, GroupOutcome, LabelGrouping, Metric,
    MinCounts, Seed, WindowPolicy,
};
use serde::Serialize;

use crate::cli::{echo, Cli, Command, ConfigFile, OutputFormat};
use crate::emit::{save_decisions, save_labels};
use crate::error::{CliError, Result};
use crate::ingest::{ingest_decisions, ingest_labels, Format, IngestSchema, IngestSummary};
use crate::output::write_to;
use crate::report::{
    comparison_entry, label_entry, model_entry, rejection_warning, render_json, render_markdown, tidy_comparisons,
    tidy_estimates, timestamp_now, EstimateEntry, InputEcho, ReportDocument, Status, Tool, Warning,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSettings {
    pub thresholds: Vec<f64>,
    pub window: WindowPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelSettings {
    /// `group`, `labeler` or `group-and-labeler`.
    pub by: String,
    pub correction: CorrectionPolicy,
    pub min_counts: MinCounts,
}

impl LabelSettings {
    pub fn grouping(&self, dims: &[String]) -> LabelGrouping {
        match self.by.as_str() {
            "labeler" => LabelGrouping::Labeler,
            "group-and-labeler" => LabelGrouping::GroupAndLabeler(dims.to_vec()),
            _ => LabelGrouping::Group(dims.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelAuditSettings {
    pub input: PathBuf,
    pub schema: IngestSchema,
    pub model: ModelSettings,
    /// Per-group intervals; `None` skips the bootstrap.
    pub bootstrap: Option<BootstrapConfig>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelAuditSettings {
    pub input: PathBuf,
    pub schema: IngestSchema,
    pub labels: LabelSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AuditKind {
    Model(ModelSettings),
    Label(LabelSettings),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareSettings {
    pub input: PathBuf,
    pub schema: IngestSchema,
    pub audit: AuditKind,
    pub metric: Metric,
    /// Empty means every pair of groups present.
    pub pairs: Vec<[String; 2]>,
    pub bootstrap: BootstrapConfig,
}

#[derive(Debug, Clone)]
pub struct OutputSettings {
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Simulation {
    Scored {
        model: ScoreModel,
        /// Score offset per group label.
        offsets: BTreeMap<String, f64>,
    },
    Labels {
        world: SdtWorld,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSettings {
    pub output: PathBuf,
    pub format: Format,
    pub simulation: Simulation,
    /// Records per group.
    pub n: usize,
    pub group_dim: String,
    pub groups: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulateSummary {
    pub path: PathBuf,
    pub records: usize,
    /// Pass these as `--group` when auditing the file.
    pub group_columns: Vec<String>,
}

struct Collected {
    estimates: Vec<EstimateEntry>,
    warnings: Vec<Warning>,
    first_skip: Option<(GroupKey, Error)>,
}

impl Collected {
    fn new(summary: &IngestSummary) -> Self {
        Self {
            estimates: Vec::new(),
            warnings: rejection_warning(summary).into_iter().collect(),
            first_skip: None,
        }
    }

    fn push<T>(&mut self, key: &GroupKey, outcome: &GroupOutcome<T>, (entry, warnings): (EstimateEntry, Vec<Warning>)) {
        if let (None, Some(e)) = (&self.first_skip, outcome.skip_reason()) {
            self.first_skip = Some((key.clone(), e.clone()));
        }
        self.estimates.push(entry);
        self.warnings.extend(warnings);
    }

    /// Fails when no group could be estimated, with the first group's reason.
    fn require_estimate(&self) -> Result<()> {
        if self.estimates.iter().any(|e| e.status == Status::Estimated) {
            return Ok(());
        }
        match &self.first_skip {
            Some((key, e)) => Err(CliError::in_context(format!("no group could be estimated; {key}"), e.clone())),
            None => Err(CliError::Core(Error::EmptyInput)),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn document(
    command: &str,
    seed: u64,
    input: &std::path::Path,
    summary: IngestSummary,
    config: serde_json::Value,
    collected: Collected,
    comparisons: Vec<crate::report::ComparisonEntry>,
    extra_warnings: Vec<Warning>,
) -> ReportDocument {
    let mut warnings = collected.warnings;
    warnings.extend(extra_warnings);
    ReportDocument {
        tool: Tool::default(),
        command: command.into(),
        generated_at: timestamp_now(),
        seed,
        input: InputEcho {
            path: input.display().to_string(),
            summary,
        },
        config,
        estimates: collected.estimates,
        comparisons,
        warnings,
    }
}

pub fn run_model_audit(s: &ModelAuditSettings) -> Result<ReportDocument> {
    let data = ingest_decisions(&s.input, &s.schema)?;
    let mut collected = Collected::new(&data.summary);
    for &t in &s.model.thresholds {
        let groups = audit_model(&data.records, t, &s.schema.group, &s.model.window, s.bootstrap.as_ref())
            .map_err(|e| CliError::in_context(format!("model audit at threshold {t}"), e))?;
        for (key, outcome) in &groups {
            collected.push(key, outcome, model_entry(key, t, outcome));
        }
    }
    collected.require_estimate()?;
    Ok(document("model-audit", s.seed, &s.input, data.summary, echo(s), collected, Vec::new(), Vec::new()))
}

pub fn run_label_audit(s: &LabelAuditSettings) -> Result<ReportDocument> {
    let data = ingest_labels(&s.input, &s.schema)?;
    let grouping = s.labels.grouping(&s.schema.group);
    let groups = audit_labels(&data.records, &grouping, s.labels.correction, s.labels.min_counts)
        .map_err(|e| CliError::in_context("label audit", e))?;
    let mut collected = Collected::new(&data.summary);
    for (key, outcome) in &groups {
        collected.push(key, outcome, label_entry(key, outcome));
    }
    collected.require_estimate()?;
    Ok(document("label-audit", 0, &s.input, data.summary, echo(s), collected, Vec::new(), Vec::new()))
}

/// Turns user-supplied pair names into keys. A bare label is accepted when
/// the grouping has a single dimension.
fn resolve_pairs(raw: &[[String; 2]], dims: &[String], present: &[GroupKey]) -> Result<Vec<(GroupKey, GroupKey)>> {
    let key = |name: &str| -> Result<GroupKey> {
        if name.contains('=') {
            Ok(GroupKey::parse(name)?)
        } else if let [dim] = dims {
            Ok(GroupKey::single(dim, name)?)
        } else {
            Err(CliError::Input(format!(
                "group `{name}` must be written as a full key such as `dim=label|dim2=label2`"
            )))
        }
    };
    if raw.is_empty() {
        let pairs = all_pairs(present);
        if pairs.is_empty() {
            return Err(CliError::Input("comparison needs at least two groups".into()));
        }
        return Ok(pairs);
    }
    raw.iter().map(|[a, b]| Ok((key(a)?, key(b)?))).collect()
}

pub fn run_compare(s: &CompareSettings) -> Result<ReportDocument> {
    let decisions;
    let labels;
    let label_grouping;
    let (summary, collected, data, dims) = match &s.audit {
        AuditKind::Model(m) => {
            let &[t] = m.thresholds.as_slice() else {
                return Err(CliError::Input("compare takes exactly one decision threshold".into()));
            };
            let ingested = ingest_decisions(&s.input, &s.schema)?;
            decisions = ingested.records;
            let mut collected = Collected::new(&ingested.summary);
            let groups = audit_model(&decisions, t, &s.schema.group, &m.window, None)
                .map_err(|e| CliError::in_context(format!("model audit at threshold {t}"), e))?;
            for (key, outcome) in &groups {
                collected.push(key, outcome, model_entry(key, t, outcome));
            }
            let data = ComparisonData::Model {
                records: &decisions,
                grouping: &s.schema.group,
                threshold: t,
                policy: m.window,
            };
            (ingested.summary, collected, data, s.schema.group.clone())
        }
        AuditKind::Label(l) => {
            let ingested = ingest_labels(&s.input, &s.schema)?;
            labels = ingested.records;
            label_grouping = l.grouping(&s.schema.group);
            let groups = audit_labels(&labels, &label_grouping, l.correction, l.min_counts)
                .map_err(|e| CliError::in_context("label audit", e))?;
            let mut collected = Collected::new(&ingested.summary);
            for (key, outcome) in &groups {
                collected.push(key, outcome, label_entry(key, outcome));
            }
            let dims = match &label_grouping {
                LabelGrouping::Group(d) => d.clone(),
                LabelGrouping::Labeler => vec!["labeler".to_string()],
                LabelGrouping::GroupAndLabeler(d) => d.iter().cloned().chain(["labeler".to_string()]).collect(),
            };
            let data = ComparisonData::Label {
                records: &labels,
                grouping: &label_grouping,
                correction: l.correction,
                min_counts: l.min_counts,
            };
            (ingested.summary, collected, data, dims)
        }
    };

    let present: Vec<GroupKey> = collected
        .estimates
        .iter()
        .map(|e| GroupKey::parse(&e.group))
        .collect::<std::result::Result<_, _>>()?;
    let pairs = resolve_pairs(&s.pairs, &dims, &present)?;
    let results = compare_groups(&data, &pairs, s.metric, &s.bootstrap).map_err(|e| CliError::in_context("compare", e))?;

    let mut comparisons = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in &results {
        let (entry, warning) = comparison_entry(r, s.metric.name());
        comparisons.push(entry);
        failures.extend(warning);
    }
    if let Some(first) = results.iter().find_map(|r| r.outcome.as_ref().err().map(|e| (r, e))) {
        if failures.len() == results.len() {
            let (r, e) = first;
            return Err(CliError::in_context(
                format!("every comparison failed; {} vs {}", r.group_a, r.group_b),
                e.clone(),
            ));
        }
    }
    Ok(document(
        "compare",
        s.bootstrap.seed.0,
        &s.input,
        summary,
        echo(s),
        collected,
        comparisons,
        failures,
    ))
}

pub fn run_simulate(s: &SimulateSettings) -> Result<SimulateSummary> {
    let keys = s
        .groups
        .iter()
        .map(|g| GroupKey::single(&s.group_dim, g))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    // Each group draws from its own stream, derived from the seed and the key.
    let seed_for = |key: &GroupKey| Seed(s.seed).derive_str(&key.to_string());
    let records = match &s.simulation {
        Simulation::Scored { model, offsets } => {
            let mut records = Vec::with_capacity(s.n * keys.len());
            for (label, key) in s.groups.iter().zip(&keys) {
                let model = match offsets.get(label) {
                    Some(&offset) => model.with_score_offset(offset)?,
                    None => *model,
                };
                records.extend(gen_scored(&model, s.n, key, seed_for(key))?);
            }
            save_decisions(&s.output, &records, s.format)?;
            records.len()
        }
        Simulation::Labels { world } => {
            let mut records = Vec::with_capacity(s.n * keys.len());
            for key in &keys {
                records.extend(gen_labels(world, s.n, key, seed_for(key))?);
            }
            save_labels(&s.output, &records, s.format)?;
            records.len()
        }
    };
    Ok(SimulateSummary {
        path: s.output.clone(),
        records,
        group_columns: vec![s.group_dim.clone()],
    })
}

/// Writes the report and, if asked, the tidy table.
pub fn write_report(doc: &ReportDocument, out: &OutputSettings) -> Result<()> {
    let body = match out.format {
        OutputFormat::Json => render_json(doc),
        OutputFormat::Markdown => render_markdown(doc),
    };
    write_to(out.path.as_deref(), body.as_bytes())?;
    if let Some(table) = &out.table {
        let bytes = if doc.command == "compare" {
            tidy_comparisons(doc)
        } else {
            tidy_estimates(doc)
        };
        write_to(Some(table), &bytes)?;
    }
    Ok(())
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::ModelAudit(cmd) => {
            let (settings, out) = crate::cli::resolve_model_audit(cmd, file)?;
            write_report(&run_model_audit(&settings)?, &out)
        }
        Command::LabelAudit(cmd) => {
            let (settings, out) = crate::cli::resolve_label_audit(cmd, file)?;
            write_report(&run_label_audit(&settings)?, &out)
        }
        Command::Compare(cmd) => {
            let (settings, out) = crate::cli::resolve_compare(cmd, file)?;
            write_report(&run_compare(&settings)?, &out)
        }
        Command::Simulate(cmd) => {
            let settings = crate::cli::resolve_simulate(cmd, file)?;
            let summary = run_simulate(&settings)?;
            eprintln!(
                "wrote {} records to {} (group column: {})",
                summary.records,
                summary.path.display(),
                summary.group_columns.join(", ")
            );
            Ok(())
        }
    }
}
