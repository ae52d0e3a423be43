//! Pairwise group comparisons with bootstrap intervals on the difference.
//!
//! Each group is resampled independently and at its own size (a stratified
//! pairs bootstrap). The random stream for a group is derived from the run
//! seed and the group's canonical key, so a group is resampled identically in
//! every pair it appears in. Swapping a pair therefore negates the difference
//! replicate by replicate.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;

use crate::decision::{implied_cost_ratio, total_cost, CorrectionPolicy, CostRatio, DecisionRecord, GroupKey};
use crate::error::{ensure_finite, Error, Result};
use crate::kernel::bootstrap::{percentile_interval, resample_into, BootstrapConfig, IntervalEstimate};
use crate::label_audit::{estimate_from_cells, label_cells, LabelGrouping, LabelRecord, MinCounts, SdtEstimate};
use crate::model_audit::{fit_window, window_support, Centered, PrevalenceEstimate, WindowPolicy};
use crate::partition::partition_by;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Metric {
    ImpliedThreshold,
    CostRatio,
    Criterion,
    Separation,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::ImpliedThreshold => "implied_threshold",
            Metric::CostRatio => "cost_ratio",
            Metric::Criterion => "criterion",
            Metric::Separation => "separation",
        }
    }

    fn of_prevalence(self, e: &PrevalenceEstimate) -> Result<f64> {
        match self {
            Metric::ImpliedThreshold => Ok(e.implied_threshold),
            Metric::CostRatio => implied_cost_ratio(e.implied_threshold).map(CostRatio::value),
            Metric::Criterion | Metric::Separation => Err(model_metric_error(self)),
        }
    }

    fn of_sdt(self, e: &SdtEstimate) -> f64 {
        match self {
            Metric::ImpliedThreshold => e.implied_threshold,
            Metric::CostRatio => e.cost_ratio,
            Metric::Criterion => e.criterion,
            Metric::Separation => e.separation,
        }
    }
}

impl core::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "implied_threshold" | "implied-threshold" => Ok(Metric::ImpliedThreshold),
            "cost_ratio" | "cost-ratio" => Ok(Metric::CostRatio),
            "criterion" => Ok(Metric::Criterion),
            "separation" => Ok(Metric::Separation),
            other => Err(Error::InvalidParameter(alloc::format!("unknown metric `{other}`"))),
        }
    }
}

fn model_metric_error(metric: Metric) -> Error {
    Error::InvalidParameter(alloc::format!(
        "metric `{}` is only defined for label audits",
        metric.name()
    ))
}

/// The audit whose per-group metric is compared.
#[derive(Debug, Clone, Copy)]
pub enum ComparisonData<'a> {
    Model {
        records: &'a [DecisionRecord],
        grouping: &'a [String],
        threshold: f64,
        policy: WindowPolicy,
    },
    Label {
        records: &'a [LabelRecord],
        grouping: &'a LabelGrouping,
        correction: CorrectionPolicy,
        min_counts: MinCounts,
    },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct GroupComparison {
    pub group_a: GroupKey,
    pub group_b: GroupKey,
    pub metric: Metric,
    pub estimate_a: f64,
    pub estimate_b: f64,
    /// `estimate_a - estimate_b`.
    pub difference: f64,
    pub interval: IntervalEstimate,
    pub excludes_zero: bool,
}

/// Result for one requested pair; failures are local to the pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairResult {
    pub group_a: GroupKey,
    pub group_b: GroupKey,
    pub outcome: Result<GroupComparison>,
}

/// What one group contributes to the bootstrap.
enum GroupSample {
    Window { population: usize, support: Vec<Centered> },
    Cells([u64; 4]),
}

struct Prepared<'a> {
    data: &'a ComparisonData<'a>,
    metric: Metric,
}

impl Prepared<'_> {
    fn statistic_on_window(&self, support: &[Centered]) -> Result<f64> {
        let ComparisonData::Model { policy, .. } = self.data else {
            unreachable!("window samples only come from model audits")
        };
        self.metric.of_prevalence(&fit_window(support, policy)?)
    }

    fn statistic_on_cells(&self, cells: [u64; 4]) -> Result<f64> {
        let ComparisonData::Label { correction, min_counts, .. } = self.data else {
            unreachable!("cell samples only come from label audits")
        };
        estimate_from_cells(cells, *correction, *min_counts).map(|e| self.metric.of_sdt(&e))
    }

    fn point(&self, sample: &GroupSample) -> Result<f64> {
        match sample {
            GroupSample::Window { support, .. } => self.statistic_on_window(support),
            GroupSample::Cells(cells) => self.statistic_on_cells(*cells),
        }
    }

    /// Metric on each bootstrap replicate of one group; `None` marks a
    /// replicate where the metric was undefined.
    fn replicates(&self, key: &GroupKey, sample: &GroupSample, config: &BootstrapConfig) -> Vec<Option<f64>> {
        let seed = config.seed.derive_str(&key.to_string());
        let mut buf = Vec::new();
        (0..config.replicates)
            .map(|r| {
                let mut rng = seed.replicate(r);
                let value = match sample {
                    GroupSample::Window { population, support } => {
                        resample_into(&mut rng, *population, support, &mut buf);
                        self.statistic_on_window(&buf)
                    }
                    GroupSample::Cells(cells) => {
                        let n: u64 = cells.iter().sum();
                        let mut drawn = [0u64; 4];
                        for _ in 0..n {
                            let mut u = rng.random_range(0..n);
                            let mut k = 0;
                            while u >= cells[k] {
                                u -= cells[k];
                                k += 1;
                            }
                            drawn[k] += 1;
                        }
                        self.statistic_on_cells(drawn)
                    }
                };
                value.ok().filter(|v| v.is_finite())
            })
            .collect()
    }
}

fn prepare_groups(data: &ComparisonData<'_>) -> Result<BTreeMap<GroupKey, GroupSample>> {
    match *data {
        ComparisonData::Model {
            records,
            grouping,
            threshold,
            policy,
        } => {
            ensure_finite("threshold", threshold)?;
            policy.validate()?;
            Ok(partition_by(records, |r| r.group.project(grouping))?
                .into_iter()
                .map(|(k, members)| {
                    let support = window_support(members.iter().copied(), threshold, &policy);
                    (
                        k,
                        GroupSample::Window {
                            population: members.len(),
                            support,
                        },
                    )
                })
                .collect())
        }
        ComparisonData::Label { records, grouping, .. } => Ok(partition_by(records, |r| grouping.key(r))?
            .into_iter()
            .map(|(k, members)| (k, GroupSample::Cells(label_cells(members.iter().copied()))))
            .collect()),
    }
}

/// Bootstrap comparison of `metric` between the groups of each pair.
///
/// Configuration problems (bad metric for the audit, unknown grouping
/// dimension, invalid bootstrap settings) fail the whole call. Problems with
/// one pair's data are reported in that pair's [`PairResult`].
pub fn compare_groups(
    data: &ComparisonData<'_>,
    pairs: &[(GroupKey, GroupKey)],
    metric: Metric,
    config: &BootstrapConfig,
) -> Result<Vec<PairResult>> {
    config.validate()?;
    if matches!(data, ComparisonData::Model { .. }) && matches!(metric, Metric::Criterion | Metric::Separation) {
        return Err(model_metric_error(metric));
    }
    let groups = prepare_groups(data)?;
    let prepared = Prepared { data, metric };

    let mut points: BTreeMap<&GroupKey, Result<f64>> = BTreeMap::new();
    let mut reps: BTreeMap<&GroupKey, Vec<Option<f64>>> = BTreeMap::new();
    for (a, b) in pairs {
        for key in [a, b] {
            if let Some(sample) = groups.get(key) {
                points.entry(key).or_insert_with(|| prepared.point(sample));
            }
        }
    }

    let mut results = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let outcome = (|| {
            let sample_a = groups.get(a).ok_or_else(|| Error::MissingGroup(a.to_string()))?;
            let sample_b = groups.get(b).ok_or_else(|| Error::MissingGroup(b.to_string()))?;
            let estimate_a = points[a].clone()?;
            let estimate_b = points[b].clone()?;
            for (key, sample) in [(a, sample_a), (b, sample_b)] {
                if !reps.contains_key(key) {
                    let values = prepared.replicates(key, sample, config);
                    reps.insert(key, values);
                }
            }
            let mut diffs = Vec::with_capacity(config.replicates);
            let mut failed = 0;
            for (x, y) in reps[a].iter().zip(&reps[b]) {
                match (x, y) {
                    (Some(x), Some(y)) => diffs.push(x - y),
                    _ => failed += 1,
                }
            }
            let difference = estimate_a - estimate_b;
            let interval = percentile_interval(difference, diffs, failed, config.level)?;
            Ok(GroupComparison {
                group_a: a.clone(),
                group_b: b.clone(),
                metric,
                estimate_a,
                estimate_b,
                difference,
                excludes_zero: !interval.contains(0.0),
                interval,
            })
        })();
        results.push(PairResult {
            group_a: a.clone(),
            group_b: b.clone(),
            outcome,
        });
    }
    Ok(results)
}

/// Every unordered pair of distinct keys, in key order.
pub fn all_pairs<'a, I>(keys: I) -> Vec<(GroupKey, GroupKey)>
where
    I: IntoIterator<Item = &'a GroupKey>,
{
    let keys: Vec<&GroupKey> = keys.into_iter().collect();
    let mut out = Vec::new();
    for (i, a) in keys.iter().enumerate() {
        for b in &keys[i + 1..] {
            out.push(((*a).clone(), (*b).clone()));
        }
    }
    out
}

/// Decision threshold and cost ratio for one cell of a composite grouping.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CellPolicy {
    pub threshold: f64,
    pub cost_ratio: CostRatio,
}

/// Total cost `FP + c_ab · FN` within each cell, thresholding at `t_ab`.
///
/// Cells are the record keys projected onto `dimensions`, e.g.
/// `["producer", "consumer"]`.
pub fn cost_of_policy_by_pair<S: AsRef<str>>(
    records: &[DecisionRecord],
    dimensions: &[S],
    cells: &BTreeMap<GroupKey, CellPolicy>,
) -> Result<BTreeMap<GroupKey, f64>> {
    if dimensions.is_empty() {
        return Err(Error::InvalidParameter("cell dimensions must be nonempty".into()));
    }
    let parts = partition_by(records, |r| r.group.project(dimensions))?;
    parts
        .into_iter()
        .map(|(key, members)| {
            let cell = cells.get(&key).ok_or_else(|| Error::MissingCell(key.to_string()))?;
            ensure_finite("threshold", cell.threshold)?;
            let decisions: Vec<bool> = members.iter().map(|r| r.score >= cell.threshold).collect();
            let outcomes: Vec<bool> = members.iter().map(|r| r.outcome).collect();
            Ok((key, total_cost(&decisions, &outcomes, cell.cost_ratio)?))
        })
        .collect()
}
