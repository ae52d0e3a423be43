//! Command-line arguments, the TOML config file, and their resolution into
//! run settings. A flag given on the command line wins over the same key in
//! the config file, which wins over the built-in default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fairaudit_core::model_audit::DEFAULT_MIN_EFFECTIVE_N;
use fairaudit_core::synth::{Calibration, ScoreDensity, ScoreModel, SdtParams, SdtWorld};
use fairaudit_core::{BootstrapConfig, CorrectionPolicy, Metric, MinCounts, Seed, WindowPolicy};
use serde::{Deserialize, Serialize};

use crate::commands::{
    AuditKind, CompareSettings, LabelAuditSettings, LabelSettings, ModelAuditSettings, ModelSettings, OutputSettings,
    SimulateSettings, Simulation,
};
use crate::error::{CliError, Result};
use crate::ingest::{DecisionColumns, Format, IngestSchema, LabelColumns, NullPolicy, DEFAULT_MAX_REJECTED};

pub const DEFAULT_REPLICATES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_FIXED_HALFWIDTH: f64 = 0.05;
pub const DEFAULT_MAX_HALFWIDTH: f64 = 0.5;

#[derive(Debug, Parser)]
#[command(name = "fairaudit", version, about = "Implied-threshold audits of binary decisions")]
pub struct Cli {
    /// TOML file supplying defaults for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the implied threshold of scored decisions per group.
    ModelAudit(ModelAuditCmd),
    /// Fit a signal detection model to human labels per group or labeler.
    LabelAudit(LabelAuditCmd),
    /// Bootstrap comparison of a metric between pairs of groups.
    Compare(CompareCmd),
    /// Write a synthetic dataset with known ground truth.
    Simulate(SimulateCmd),
}

#[derive(Debug, Args)]
pub struct ModelAuditCmd {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub bootstrap: BootstrapArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct LabelAuditCmd {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CompareCmd {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub compare: CompareArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[command(flatten)]
    pub bootstrap: BootstrapArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateCmd {
    #[command(flatten)]
    pub simulate: SimulateArgs,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct InputArgs {
    /// Input file: CSV with a header row, or line-delimited JSON.
    #[arg(short, long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Input format [default: from the file extension].
    #[arg(long, value_enum)]
    pub input_format: Option<Format>,
    /// Group dimension column; repeat for composite keys.
    #[arg(short, long = "group", value_name = "COLUMN")]
    pub group: Vec<String>,
    /// Handling of rows with missing or unparseable values [default: reject-row].
    #[arg(long, value_enum)]
    pub null_policy: Option<NullPolicy>,
    /// Largest tolerated fraction of rejected rows [default: 0.01].
    #[arg(long, value_name = "FRACTION")]
    pub max_rejected: Option<f64>,
    #[arg(long, value_name = "COLUMN")]
    pub score_column: Option<String>,
    #[arg(long, value_name = "COLUMN")]
    pub outcome_column: Option<String>,
    #[arg(long, value_name = "COLUMN")]
    pub label_column: Option<String>,
    #[arg(long, value_name = "COLUMN")]
    pub truth_column: Option<String>,
    #[arg(long, value_name = "COLUMN")]
    pub labeler_column: Option<String>,
    #[arg(long, value_name = "COLUMN")]
    pub item_column: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ModelArgs {
    /// Decision threshold; repeat to audit several.
    #[arg(short, long = "threshold", value_name = "T")]
    pub threshold: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum WindowMode {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct WindowArgs {
    /// Window policy [default: fixed if --halfwidth is given, else adaptive].
    #[arg(long, value_enum)]
    pub window: Option<WindowMode>,
    /// Half-width of a fixed window [default: 0.05].
    #[arg(long, value_name = "D")]
    pub halfwidth: Option<f64>,
    /// Effective sample size the adaptive window grows to reach [default: 200].
    #[arg(long, value_name = "N")]
    pub min_effective_n: Option<f64>,
    /// Largest half-width the adaptive window may reach [default: 0.5].
    #[arg(long, value_name = "D")]
    pub max_halfwidth: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct BootstrapArgs {
    /// Bootstrap replicates; 0 disables intervals where that is allowed [default: 1000].
    #[arg(long, value_name = "N")]
    pub replicates: Option<usize>,
    /// Interval confidence level [default: 0.95].
    #[arg(long)]
    pub level: Option<f64>,
    /// Seed for all resampling [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LabelBy {
    Group,
    Labeler,
    GroupAndLabeler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Correction {
    None,
    HalfCount,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct LabelArgs {
    /// Label partitioning [default: group].
    #[arg(long, value_enum)]
    pub by: Option<LabelBy>,
    /// Treatment of error rates of exactly 0 or 1 [default: half-count].
    #[arg(long, value_enum)]
    pub correction: Option<Correction>,
    /// Truth-positive records below which an estimate is low-confidence [default: 10].
    #[arg(long, value_name = "N")]
    pub min_positives: Option<u64>,
    /// Truth-negative records below which an estimate is low-confidence [default: 10].
    #[arg(long, value_name = "N")]
    pub min_negatives: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AuditArg {
    Model,
    Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MetricArg {
    ImpliedThreshold,
    CostRatio,
    Criterion,
    Separation,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::ImpliedThreshold => Metric::ImpliedThreshold,
            MetricArg::CostRatio => Metric::CostRatio,
            MetricArg::Criterion => Metric::Criterion,
            MetricArg::Separation => Metric::Separation,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CompareArgs {
    /// Which audit produces the compared metric [default: model].
    #[arg(long, value_enum)]
    pub audit: Option<AuditArg>,
    /// Compared metric [default: implied-threshold].
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    /// A pair of groups to compare, as canonical keys (`dim=label|...`) or bare
    /// labels for a single dimension; repeat for more pairs [default: all pairs].
    #[arg(long = "pair", num_args = 2, value_names = ["A", "B"])]
    #[serde(skip)]
    pub pair: Vec<String>,
    #[arg(skip)]
    pub pairs: Vec<[String; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Json,
    Markdown,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct OutputArgs {
    /// Report destination [default: standard output].
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Report format [default: json].
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Also write a tidy CSV table of estimates (or comparisons) here.
    #[arg(long, value_name = "FILE")]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SimulationKind {
    Scored,
    Labels,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateArgs {
    /// Kind of dataset [default: scored].
    #[arg(long, value_enum)]
    pub kind: Option<SimulationKind>,
    /// Records per group [default: 10000].
    #[arg(short, long)]
    pub n: Option<usize>,
    /// Group labels, comma separated [default: all].
    #[arg(long, value_delimiter = ',')]
    pub groups: Vec<String>,
    /// Name of the group dimension column [default: group].
    #[arg(long, value_name = "NAME")]
    pub group_dim: Option<String>,
    /// Score density: uniform, exponential:RATE or beta:A,B [default: uniform].
    #[arg(long)]
    pub density: Option<String>,
    /// Calibration: identity, constant:P, affine:INTERCEPT,SLOPE or
    /// logistic:SCALE,MIDPOINT [default: identity].
    #[arg(long)]
    pub calibration: Option<String>,
    /// Per-group score offset as LABEL=OFFSET; repeatable.
    #[arg(long = "offset", value_name = "LABEL=OFFSET")]
    pub offset: Vec<String>,
    /// Labels: fraction of truth-positive items [default: 0.2].
    #[arg(long)]
    pub prevalence: Option<f64>,
    /// Labels: separation d′ [default: 2].
    #[arg(long)]
    pub separation: Option<f64>,
    /// Labels: criterion [default: 1].
    #[arg(long)]
    pub criterion: Option<f64>,
    /// Labels: per-group parameters as LABEL=PREVALENCE,SEPARATION,CRITERION; repeatable.
    #[arg(long = "sdt-override", value_name = "LABEL=P,D,T")]
    pub sdt_override: Vec<String>,
    /// Labels: number of labelers sharing the items [default: 1].
    #[arg(long)]
    pub labelers: Option<u32>,
    /// Generator seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Destination file.
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Dataset format [default: from the output extension].
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// Contents of a `--config` file. Every section is optional and uses the
/// long flag names as keys.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub input: InputArgs,
    pub model: ModelArgs,
    pub window: WindowArgs,
    pub bootstrap: BootstrapArgs,
    pub labels: LabelArgs,
    pub compare: CompareArgs,
    pub output: OutputArgs,
    pub simulate: SimulateArgs,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}

/// Field-wise merge in which `self` wins.
pub trait Overlay {
    fn overlay(self, base: Self) -> Self;
}

macro_rules! overlay {
    ($ty:ident { $($opt:ident),* } vec { $($v:ident),* }) => {
        impl Overlay for $ty {
            fn overlay(self, base: Self) -> Self {
                Self {
                    $($opt: self.$opt.or(base.$opt),)*
                    $($v: if self.$v.is_empty() { base.$v } else { self.$v },)*
                }
            }
        }
    };
}

overlay!(InputArgs { input, input_format, null_policy, max_rejected, score_column, outcome_column, label_column, truth_column, labeler_column, item_column } vec { group });
overlay!(ModelArgs {} vec { threshold });
overlay!(WindowArgs { window, halfwidth, min_effective_n, max_halfwidth } vec {});
overlay!(BootstrapArgs { replicates, level, seed } vec {});
overlay!(LabelArgs { by, correction, min_positives, min_negatives } vec {});
overlay!(CompareArgs { audit, metric } vec { pair, pairs });
overlay!(OutputArgs { output, format, table } vec {});
overlay!(SimulateArgs { kind, n, group_dim, density, calibration, prevalence, separation, criterion, labelers, seed, output, format } vec { groups, offset, sdt_override });

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

pub fn resolve_input(args: InputArgs) -> Result<(PathBuf, IngestSchema)> {
    let path = args.input.ok_or_else(|| invalid("an input file is required (--input)"))?;
    let d = DecisionColumns::default();
    let l = LabelColumns::default();
    let schema = IngestSchema {
        format: args.input_format,
        decisions: DecisionColumns {
            score: args.score_column.unwrap_or(d.score),
            outcome: args.outcome_column.unwrap_or(d.outcome),
        },
        labels: LabelColumns {
            label: args.label_column.unwrap_or(l.label),
            truth: args.truth_column.unwrap_or(l.truth),
            labeler: args.labeler_column.unwrap_or(l.labeler),
            item: args.item_column.unwrap_or(l.item),
        },
        group: args.group,
        null_policy: args.null_policy.unwrap_or_default(),
        max_rejected_fraction: args.max_rejected.unwrap_or(DEFAULT_MAX_REJECTED),
    };
    Ok((path, schema))
}

pub fn resolve_window(args: &WindowArgs) -> Result<WindowPolicy> {
    let mode = args.window.unwrap_or(if args.halfwidth.is_some() {
        WindowMode::Fixed
    } else {
        WindowMode::Adaptive
    });
    let policy = match mode {
        WindowMode::Fixed => {
            if args.min_effective_n.is_some() || args.max_halfwidth.is_some() {
                return Err(invalid("--min-effective-n and --max-halfwidth only apply to the adaptive window"));
            }
            WindowPolicy::fixed(args.halfwidth.unwrap_or(DEFAULT_FIXED_HALFWIDTH))
        }
        WindowMode::Adaptive => {
            if args.halfwidth.is_some() {
                return Err(invalid("--halfwidth only applies to the fixed window"));
            }
            WindowPolicy::adaptive(
                args.min_effective_n.unwrap_or(DEFAULT_MIN_EFFECTIVE_N),
                args.max_halfwidth.unwrap_or(DEFAULT_MAX_HALFWIDTH),
            )
        }
    };
    Ok(policy?)
}

/// `None` when replicates is 0.
pub fn resolve_bootstrap(args: &BootstrapArgs) -> Result<Option<BootstrapConfig>> {
    let replicates = args.replicates.unwrap_or(DEFAULT_REPLICATES);
    if replicates == 0 {
        return Ok(None);
    }
    Ok(Some(BootstrapConfig::new(
        replicates,
        args.level.unwrap_or(DEFAULT_LEVEL),
        Seed(args.seed.unwrap_or(0)),
    )?))
}

fn resolve_model(model: ModelArgs, window: &WindowArgs) -> Result<ModelSettings> {
    if model.threshold.is_empty() {
        return Err(invalid("at least one decision threshold is required (--threshold)"));
    }
    if let Some(t) = model.threshold.iter().find(|t| !t.is_finite()) {
        return Err(invalid(format!("threshold {t} is not finite")));
    }
    Ok(ModelSettings {
        thresholds: model.threshold,
        window: resolve_window(window)?,
    })
}

fn resolve_labels(args: &LabelArgs) -> LabelSettings {
    let defaults = MinCounts::default();
    LabelSettings {
        by: match args.by.unwrap_or(LabelBy::Group) {
            LabelBy::Group => "group",
            LabelBy::Labeler => "labeler",
            LabelBy::GroupAndLabeler => "group-and-labeler",
        }
        .into(),
        correction: match args.correction.unwrap_or(Correction::HalfCount) {
            Correction::None => CorrectionPolicy::None,
            Correction::HalfCount => CorrectionPolicy::HalfCount,
        },
        min_counts: MinCounts {
            positives: args.min_positives.unwrap_or(defaults.positives),
            negatives: args.min_negatives.unwrap_or(defaults.negatives),
        },
    }
}

fn resolve_output(args: OutputArgs) -> OutputSettings {
    OutputSettings {
        path: args.output,
        format: args.format.unwrap_or(OutputFormat::Json),
        table: args.table,
    }
}

pub fn resolve_model_audit(cmd: ModelAuditCmd, file: ConfigFile) -> Result<(ModelAuditSettings, OutputSettings)> {
    let (input, schema) = resolve_input(cmd.input.overlay(file.input))?;
    let window = cmd.window.overlay(file.window);
    let model = resolve_model(cmd.model.overlay(file.model), &window)?;
    let bootstrap = cmd.bootstrap.overlay(file.bootstrap);
    Ok((
        ModelAuditSettings {
            input,
            schema,
            model,
            bootstrap: resolve_bootstrap(&bootstrap)?,
            seed: bootstrap.seed.unwrap_or(0),
        },
        resolve_output(cmd.output.overlay(file.output)),
    ))
}

pub fn resolve_label_audit(cmd: LabelAuditCmd, file: ConfigFile) -> Result<(LabelAuditSettings, OutputSettings)> {
    let (input, schema) = resolve_input(cmd.input.overlay(file.input))?;
    Ok((
        LabelAuditSettings {
            input,
            schema,
            labels: resolve_labels(&cmd.labels.overlay(file.labels)),
        },
        resolve_output(cmd.output.overlay(file.output)),
    ))
}

pub fn resolve_compare(cmd: CompareCmd, file: ConfigFile) -> Result<(CompareSettings, OutputSettings)> {
    let (input, schema) = resolve_input(cmd.input.overlay(file.input))?;
    let compare = cmd.compare.overlay(file.compare);
    let audit = match compare.audit.unwrap_or(AuditArg::Model) {
        AuditArg::Model => {
            let window = cmd.window.overlay(file.window);
            let model = resolve_model(cmd.model.overlay(file.model), &window)?;
            if model.thresholds.len() != 1 {
                return Err(invalid("compare takes exactly one decision threshold"));
            }
            AuditKind::Model(model)
        }
        AuditArg::Label => AuditKind::Label(resolve_labels(&cmd.labels.overlay(file.labels))),
    };
    let mut pairs: Vec<[String; 2]> = compare.pair.chunks(2).map(|c| [c[0].clone(), c[1].clone()]).collect();
    if pairs.is_empty() {
        pairs = compare.pairs;
    }
    let bootstrap = cmd.bootstrap.overlay(file.bootstrap);
    let config = resolve_bootstrap(&bootstrap)?.ok_or_else(|| invalid("compare needs at least one bootstrap replicate"))?;
    Ok((
        CompareSettings {
            input,
            schema,
            audit,
            metric: compare.metric.unwrap_or(MetricArg::ImpliedThreshold).into(),
            pairs,
            bootstrap: config,
        },
        resolve_output(cmd.output.overlay(file.output)),
    ))
}

fn numbers(spec: &str, what: &str, count: usize) -> Result<Vec<f64>> {
    let values = spec
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| invalid(format!("{what}: `{spec}` is not a comma-separated list of numbers")))?;
    if values.len() != count {
        return Err(invalid(format!("{what}: expected {count} number(s) in `{spec}`")));
    }
    Ok(values)
}

pub fn parse_density(spec: &str) -> Result<ScoreDensity> {
    let (name, params) = spec.split_once(':').unwrap_or((spec, ""));
    match name.trim() {
        "uniform" if params.is_empty() => Ok(ScoreDensity::Uniform),
        "exponential" | "truncated-exponential" => Ok(ScoreDensity::TruncatedExponential {
            rate: numbers(params, "density", 1)?[0],
        }),
        "beta" => {
            let v = numbers(params, "density", 2)?;
            Ok(ScoreDensity::Beta { a: v[0], b: v[1] })
        }
        _ => Err(invalid(format!("unknown density `{spec}`"))),
    }
}

pub fn parse_calibration(spec: &str) -> Result<Calibration> {
    let (name, params) = spec.split_once(':').unwrap_or((spec, ""));
    match name.trim() {
        "identity" if params.is_empty() => Ok(Calibration::Identity),
        "constant" => Ok(Calibration::Constant {
            p: numbers(params, "calibration", 1)?[0],
        }),
        "affine" => {
            let v = numbers(params, "calibration", 2)?;
            Ok(Calibration::Affine {
                intercept: v[0],
                slope: v[1],
            })
        }
        "logistic" => {
            let v = numbers(params, "calibration", 2)?;
            Ok(Calibration::Logistic {
                scale: v[0],
                midpoint: v[1],
            })
        }
        _ => Err(invalid(format!("unknown calibration `{spec}`"))),
    }
}

fn split_assignment<'a>(spec: &'a str, flag: &str) -> Result<(&'a str, &'a str)> {
    spec.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| invalid(format!("{flag}: expected LABEL=VALUE, got `{spec}`")))
}

pub fn resolve_simulate(cmd: SimulateCmd, file: ConfigFile) -> Result<SimulateSettings> {
    let args = cmd.simulate.overlay(file.simulate);
    let output = args.output.ok_or_else(|| invalid("an output file is required (--output)"))?;
    let groups = if args.groups.is_empty() {
        vec!["all".to_string()]
    } else {
        args.groups
    };
    let known = |label: &str, flag: &str| {
        if groups.iter().any(|g| g == label) {
            Ok(())
        } else {
            Err(invalid(format!("{flag}: `{label}` is not one of the simulated groups")))
        }
    };
    let simulation = match args.kind.unwrap_or(SimulationKind::Scored) {
        SimulationKind::Scored => {
            let model = ScoreModel::new(
                parse_density(args.density.as_deref().unwrap_or("uniform"))?,
                parse_calibration(args.calibration.as_deref().unwrap_or("identity"))?,
            )?;
            let mut offsets = BTreeMap::new();
            for spec in &args.offset {
                let (label, value) = split_assignment(spec, "--offset")?;
                known(label, "--offset")?;
                let v = value
                    .parse::<f64>()
                    .map_err(|_| invalid(format!("--offset: `{value}` is not a number")))?;
                offsets.insert(label.to_string(), v);
            }
            Simulation::Scored { model, offsets }
        }
        SimulationKind::Labels => {
            let base = SdtParams::new(
                args.prevalence.unwrap_or(0.2),
                args.separation.unwrap_or(2.0),
                args.criterion.unwrap_or(1.0),
            )?;
            let mut world = SdtWorld::new(base)?;
            world.labelers = args.labelers.unwrap_or(1);
            let dim = args.group_dim.as_deref().unwrap_or("group");
            for spec in &args.sdt_override {
                let (label, value) = split_assignment(spec, "--sdt-override")?;
                known(label, "--sdt-override")?;
                let v = numbers(value, "--sdt-override", 3)?;
                world = world.with_override(
                    fairaudit_core::GroupKey::single(dim, label)?,
                    SdtParams::new(v[0], v[1], v[2])?,
                )?;
            }
            Simulation::Labels { world }
        }
    };
    Ok(SimulateSettings {
        format: args.format.unwrap_or_else(|| Format::from_path(&output)),
        output,
        simulation,
        n: args.n.unwrap_or(10_000),
        group_dim: args.group_dim.unwrap_or_else(|| "group".into()),
        groups,
        seed: args.seed.unwrap_or(0),
    })
}

/// Config echo for the report: the resolved settings as JSON.
pub fn echo<T: Serialize>(settings: &T) -> serde_json::Value {
    serde_json::to_value(settings).expect("settings serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("fairaudit").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_config_file() {
        let file: ConfigFile = toml::from_str(
            r#"
            [input]
            input = "from-file.csv"
            group = ["site"]
            [model]
            threshold = [0.3]
            [window]
            halfwidth = 0.1
            [bootstrap]
            replicates = 200
            seed = 7
            "#,
        )
        .unwrap();
        let Command::ModelAudit(cmd) = parse(&["model-audit", "-i", "flag.csv", "--seed", "9"]).command else {
            panic!()
        };
        let (s, out) = resolve_model_audit(cmd, file).unwrap();
        assert_eq!(s.input, PathBuf::from("flag.csv"));
        assert_eq!(s.schema.group, ["site"]);
        assert_eq!(s.model.thresholds, [0.3]);
        assert_eq!(s.model.window, WindowPolicy::Fixed { halfwidth: 0.1 });
        let b = s.bootstrap.unwrap();
        assert_eq!((b.replicates, b.seed), (200, Seed(9)));
        assert_eq!(out.format, OutputFormat::Json);
    }

    #[test]
    fn unknown_config_keys_are_refused() {
        assert!(toml::from_str::<ConfigFile>("[model]\nthreshhold = [0.5]\n").is_err());
        assert!(toml::from_str::<ConfigFile>("[modle]\n").is_err());
    }

    #[test]
    fn window_resolution() {
        let adaptive = resolve_window(&WindowArgs::default()).unwrap();
        assert_eq!(adaptive, WindowPolicy::adaptive(200.0, 0.5).unwrap());
        let conflicting = WindowArgs {
            window: Some(WindowMode::Adaptive),
            halfwidth: Some(0.1),
            ..WindowArgs::default()
        };
        assert!(resolve_window(&conflicting).is_err());
        let bad = WindowArgs {
            halfwidth: Some(-1.0),
            ..WindowArgs::default()
        };
        assert_eq!(resolve_window(&bad).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn compare_pairs_from_flags_and_file() {
        let file: ConfigFile = toml::from_str(
            "[compare]\npairs = [[\"g=a\", \"g=b\"]]\n[model]\nthreshold = [0.5]\n",
        )
        .unwrap();
        let Command::Compare(cmd) = parse(&["compare", "-i", "x.csv", "--pair", "a", "c", "--pair", "b", "c"]).command
        else {
            panic!()
        };
        let (s, _) = resolve_compare(cmd, file.clone()).unwrap();
        assert_eq!(s.pairs, [["a".to_string(), "c".to_string()], ["b".to_string(), "c".to_string()]]);
        let Command::Compare(cmd) = parse(&["compare", "-i", "x.csv"]).command else {
            panic!()
        };
        let (s, _) = resolve_compare(cmd, file).unwrap();
        assert_eq!(s.pairs, [["g=a".to_string(), "g=b".to_string()]]);
    }

    #[test]
    fn generator_specs() {
        assert_eq!(parse_density("uniform").unwrap(), ScoreDensity::Uniform);
        assert_eq!(parse_density("exponential:8").unwrap(), ScoreDensity::TruncatedExponential { rate: 8.0 });
        assert_eq!(parse_density("beta:2, 5").unwrap(), ScoreDensity::Beta { a: 2.0, b: 5.0 });
        assert!(parse_density("beta:2").is_err());
        assert!(parse_density("gamma:1").is_err());
        assert_eq!(
            parse_calibration("affine:0.1,0.8").unwrap(),
            Calibration::Affine {
                intercept: 0.1,
                slope: 0.8
            }
        );
        assert!(parse_calibration("identity:1").is_err());
    }

    #[test]
    fn simulate_overrides_must_name_groups() {
        let Command::Simulate(cmd) = parse(&["simulate", "-o", "x.csv", "--groups", "a,b", "--offset", "c=0.1"]).command
        else {
            panic!()
        };
        assert!(resolve_simulate(cmd, ConfigFile::default()).is_err());
        let Command::Simulate(cmd) = parse(&["simulate", "-o", "x.jsonl", "--groups", "a,b", "--offset", "b=0.1"]).command
        else {
            panic!()
        };
        let s = resolve_simulate(cmd, ConfigFile::default()).unwrap();
        assert_eq!(s.format, Format::Jsonl);
        assert_eq!(s.groups, ["a", "b"]);
    }
}
