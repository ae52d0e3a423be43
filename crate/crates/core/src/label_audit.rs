//! Implied thresholds of human labelers under equal-variance signal
//! detection theory.
//!
//! Negative items produce signals `N(0, 1)`, positive items `N(d′, 1)`, and a
//! labeler reports positive when the signal reaches a criterion `t`. The
//! observed error rates identify `t = Φ⁻¹(1 − FPR)` and `d′ = t − Φ⁻¹(FNR)`;
//! with the prevalence `φ` of positives among the labeled items, Bayes' rule
//! gives the outcome probability at the criterion:
//!
//! ```text
//! τ = 1 / (1 + (1 − φ)/φ · exp(−t·d′ + d′²/2))
//! ```
//!
//! and the cost ratio the labeler is acting on is `c = (1 − τ)/τ`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::decision::{cell_index, ConfusionSummary, CorrectionPolicy, CostRatio, GroupKey};
use crate::error::{ensure_finite, Error, Result};
use crate::kernel::normal::std_normal_quantile;
use crate::partition::{partition_by, GroupOutcome};

/// One label given by `labeler` to `item`, with the expert truth for the item.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRecord {
    pub label: bool,
    pub truth: bool,
    pub labeler: String,
    pub item: String,
    pub group: GroupKey,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SdtEstimate {
    pub criterion: f64,
    pub separation: f64,
    pub prevalence: f64,
    pub implied_threshold: f64,
    pub cost_ratio: f64,
    pub confusion: ConfusionSummary,
    /// Fewer truth-positives or truth-negatives than the audit's minimum.
    pub low_confidence: bool,
    /// `d′ < 0`: labels agree with the truth less often than chance.
    pub anti_correlated: bool,
}

/// Minimum class sizes below which an estimate is flagged low-confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MinCounts {
    pub positives: u64,
    pub negatives: u64,
}

impl Default for MinCounts {
    fn default() -> Self {
        Self {
            positives: 10,
            negatives: 10,
        }
    }
}

/// How label records are partitioned for an audit.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "by", content = "dimensions", rename_all = "kebab-case"))]
pub enum LabelGrouping {
    /// By the given group dimensions (all labelers pooled).
    Group(Vec<String>),
    /// By labeler id, all groups pooled.
    Labeler,
    /// By the given group dimensions and labeler id.
    GroupAndLabeler(Vec<String>),
}

impl LabelGrouping {
    pub fn key(&self, record: &LabelRecord) -> Result<GroupKey> {
        match self {
            LabelGrouping::Group(dims) => record.group.project(dims),
            LabelGrouping::Labeler => GroupKey::single("labeler", &record.labeler),
            LabelGrouping::GroupAndLabeler(dims) => record.group.project(dims)?.with("labeler", &record.labeler),
        }
    }
}

fn check_prevalence(prevalence: f64) -> Result<()> {
    if prevalence > 0.0 && prevalence < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "prevalence",
            value: prevalence,
            domain: "0 < φ < 1",
        })
    }
}

/// Criterion and separation from the (possibly corrected) error rates.
pub fn sdt_fit(summary: &ConfusionSummary) -> Result<(f64, f64)> {
    let (fpr, fnr) = (summary.fpr, summary.fnr);
    let inside = |r: f64| r > 0.0 && r < 1.0;
    if !inside(fpr) || !inside(fnr) {
        return Err(Error::DegenerateRate { fpr, fnr });
    }
    let criterion = std_normal_quantile(1.0 - fpr)?;
    let separation = criterion - std_normal_quantile(fnr)?;
    Ok((criterion, separation))
}

/// `ln c = ln((1 − φ)/φ) − t·d′ + d′²/2`.
fn log_cost_ratio(criterion: f64, separation: f64, prevalence: f64) -> Result<f64> {
    ensure_finite("criterion", criterion)?;
    ensure_finite("separation", separation)?;
    check_prevalence(prevalence)?;
    Ok(libm::log((1.0 - prevalence) / prevalence) - criterion * separation + 0.5 * separation * separation)
}

/// Probability that an item whose signal sits exactly at the criterion is positive.
pub fn sdt_implied_threshold(criterion: f64, separation: f64, prevalence: f64) -> Result<f64> {
    let log_c = log_cost_ratio(criterion, separation, prevalence)?;
    let tau = 1.0 / (1.0 + libm::exp(log_c));
    if tau > 0.0 && tau < 1.0 {
        Ok(tau)
    } else {
        Err(Error::UndefinedRatio { implied_threshold: tau })
    }
}

/// The false-negative to false-positive cost ratio the criterion is optimal for.
pub fn sdt_cost_ratio(criterion: f64, separation: f64, prevalence: f64) -> Result<CostRatio> {
    let log_c = log_cost_ratio(criterion, separation, prevalence)?;
    CostRatio::new(libm::exp(log_c)).map_err(|_| Error::UndefinedRatio {
        implied_threshold: 1.0 / (1.0 + libm::exp(log_c)),
    })
}

/// `d′ = √2 · Φ⁻¹(AUC)`.
pub fn dprime_from_auc(auc: f64) -> Result<f64> {
    if !(auc > 0.0 && auc < 1.0) {
        return Err(Error::Domain {
            what: "auc",
            value: auc,
            domain: "0 < AUC < 1",
        });
    }
    Ok(core::f64::consts::SQRT_2 * std_normal_quantile(auc)?)
}

/// Full signal detection estimate from a confusion summary.
pub fn sdt_estimate(summary: &ConfusionSummary, min_counts: MinCounts) -> Result<SdtEstimate> {
    let (criterion, separation) = sdt_fit(summary)?;
    let prevalence = summary.prevalence;
    let implied_threshold = sdt_implied_threshold(criterion, separation, prevalence)?;
    let cost_ratio = sdt_cost_ratio(criterion, separation, prevalence)?.value();
    Ok(SdtEstimate {
        criterion,
        separation,
        prevalence,
        implied_threshold,
        cost_ratio,
        confusion: *summary,
        low_confidence: summary.positives() < min_counts.positives || summary.negatives() < min_counts.negatives,
        anti_correlated: separation < 0.0,
    })
}

/// `[tp, fp, fn, tn]` of a set of label records.
pub(crate) fn label_cells<'a, I>(records: I) -> [u64; 4]
where
    I: IntoIterator<Item = &'a LabelRecord>,
{
    let mut cells = [0u64; 4];
    for r in records {
        cells[cell_index(r.label, r.truth)] += 1;
    }
    cells
}

pub(crate) fn estimate_from_cells(cells: [u64; 4], correction: CorrectionPolicy, min_counts: MinCounts) -> Result<SdtEstimate> {
    let summary = ConfusionSummary::from_counts(cells[0], cells[1], cells[2], cells[3], correction)?;
    sdt_estimate(&summary, min_counts)
}

/// Signal detection estimates per partition.
///
/// The prevalence used in each partition is that partition's own fraction of
/// truth-positive records. Every (item, labeler) pair counts once.
pub fn audit_labels(
    records: &[LabelRecord],
    grouping: &LabelGrouping,
    correction: CorrectionPolicy,
    min_counts: MinCounts,
) -> Result<BTreeMap<GroupKey, GroupOutcome<SdtEstimate>>> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let parts = partition_by(records, |r| grouping.key(r))?;
    Ok(parts
        .into_iter()
        .map(|(key, members)| {
            let cells = label_cells(members.iter().copied());
            (key, estimate_from_cells(cells, correction, min_counts).into())
        })
        .collect())
}
