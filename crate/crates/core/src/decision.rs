//! Decision records and the cost calculus of a thresholded binary decision.
//!
//! Conventions used throughout the crate:
//!
//! * a record is decided positive when `score >= t`;
//! * a cost ratio `c` is the cost of one false negative divided by the cost of
//!   one false positive, so the total cost of a set of decisions is
//!   `FP + c * FN` and the cost-minimizing implied threshold is `1 / (1 + c)`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{ensure_finite, Error, Result};

/// A subgroup identifier made of ordered `(dimension, label)` pairs.
///
/// Renders canonically as `dim1=val1|dim2=val2`. Composite keys such as
/// `(producer, consumer)` are ordinary two-dimension keys.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupKey {
    dims: Vec<(String, String)>,
}

impl GroupKey {
    pub fn new<N, V, I>(dims: I) -> Result<Self>
    where
        I: IntoIterator<Item = (N, V)>,
        N: Into<String>,
        V: Into<String>,
    {
        let dims: Vec<(String, String)> = dims
            .into_iter()
            .map(|(n, v)| (n.into(), v.into()))
            .collect();
        if dims.is_empty() {
            return Err(Error::InvalidGroupKey("a group key needs at least one dimension".into()));
        }
        for (i, (name, label)) in dims.iter().enumerate() {
            if name.is_empty() || name.contains(['=', '|']) {
                return Err(Error::InvalidGroupKey(alloc::format!(
                    "dimension name `{name}` must be nonempty and free of `=` and `|`"
                )));
            }
            if label.contains('|') {
                return Err(Error::InvalidGroupKey(alloc::format!(
                    "label `{label}` of dimension `{name}` contains `|`"
                )));
            }
            if dims[..i].iter().any(|(other, _)| other == name) {
                return Err(Error::InvalidGroupKey(alloc::format!(
                    "dimension `{name}` appears twice"
                )));
            }
        }
        Ok(Self { dims })
    }

    /// Single-dimension key.
    pub fn single(name: &str, label: &str) -> Result<Self> {
        Self::new([(name, label)])
    }

    /// The key used when no grouping dimensions are requested.
    pub fn overall() -> Self {
        Self {
            dims: alloc::vec![("group".into(), "all".into())],
        }
    }

    /// Parses the canonical `dim=val|dim=val` rendering.
    pub fn parse(s: &str) -> Result<Self> {
        let mut dims = Vec::new();
        for part in s.split('|') {
            let (name, label) = part.split_once('=').ok_or_else(|| {
                Error::InvalidGroupKey(alloc::format!("`{part}` is not of the form dim=value"))
            })?;
            dims.push((name.trim(), label.trim()));
        }
        Self::new(dims)
    }

    pub fn dims(&self) -> impl Iterator<Item = (&str, &str)> {
        self.dims.iter().map(|(n, v)| (n.as_str(), v.as_str()))
    }

    pub fn get(&self, dimension: &str) -> Option<&str> {
        self.dims
            .iter()
            .find(|(n, _)| n == dimension)
            .map(|(_, v)| v.as_str())
    }

    /// Restriction of this key to `dimensions`, in the requested order.
    /// An empty request maps every key to [`GroupKey::overall`].
    pub fn project<S: AsRef<str>>(&self, dimensions: &[S]) -> Result<GroupKey> {
        if dimensions.is_empty() {
            return Ok(Self::overall());
        }
        let mut dims = Vec::with_capacity(dimensions.len());
        for d in dimensions {
            let d = d.as_ref();
            let label = self
                .get(d)
                .ok_or_else(|| Error::UnknownDimension(d.to_string()))?;
            dims.push((d.to_string(), label.to_string()));
        }
        GroupKey::new(dims)
    }

    /// This key with one more dimension appended.
    pub fn with(&self, name: &str, label: &str) -> Result<GroupKey> {
        let mut dims = self.dims.clone();
        dims.push((name.to_string(), label.to_string()));
        GroupKey::new(dims)
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (n, v)) in self.dims.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{n}={v}")?;
        }
        Ok(())
    }
}

impl core::str::FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GroupKey::parse(s)
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for GroupKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for GroupKey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> core::result::Result<Self, D::Error> {
        let s = <String as serde::Deserialize>::deserialize(deserializer)?;
        GroupKey::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// One scored decision with its realized outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub score: f64,
    pub outcome: bool,
    pub group: GroupKey,
}

impl DecisionRecord {
    pub fn new(score: f64, outcome: bool, group: GroupKey) -> Result<Self> {
        ensure_finite("score", score)?;
        Ok(Self {
            score,
            outcome,
            group,
        })
    }
}

/// Cost of a false negative relative to a false positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct CostRatio(f64);

impl CostRatio {
    pub fn new(c: f64) -> Result<Self> {
        if c > 0.0 && c.is_finite() {
            Ok(Self(c))
        } else {
            Err(Error::Domain {
                what: "cost ratio",
                value: c,
                domain: "0 < c < inf",
            })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `decision_i = score_i >= t`.
pub fn apply_threshold(records: &[DecisionRecord], t: f64) -> Result<Vec<bool>> {
    ensure_finite("threshold", t)?;
    Ok(records.iter().map(|r| r.score >= t).collect())
}

/// `FP + c * FN`.
pub fn total_cost(decisions: &[bool], outcomes: &[bool], c: CostRatio) -> Result<f64> {
    if decisions.len() != outcomes.len() {
        return Err(Error::LengthMismatch {
            left: decisions.len(),
            right: outcomes.len(),
        });
    }
    let (mut fp, mut fneg) = (0u64, 0u64);
    for (&d, &y) in decisions.iter().zip(outcomes) {
        match (d, y) {
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    Ok(fp as f64 + c.value() * fneg as f64)
}

/// Outcome probability at the cost-minimizing threshold, `1 / (1 + c)`.
pub fn optimal_implied_threshold(c: CostRatio) -> f64 {
    1.0 / (1.0 + c.value())
}

/// The cost ratio under which `implied_threshold` is cost-minimizing,
/// `(1 - τ) / τ`.
pub fn implied_cost_ratio(implied_threshold: f64) -> Result<CostRatio> {
    let tau = implied_threshold;
    if tau == 0.0 || tau == 1.0 {
        return Err(Error::UndefinedRatio {
            implied_threshold: tau,
        });
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain {
            what: "implied threshold",
            value: tau,
            domain: "0 < τ < 1",
        });
    }
    // 1/τ - 1 is exact more often below one half (1/6 -> 5); above it, 1 - τ
    // is exact and the quotient keeps full relative precision.
    let c = if tau < 0.5 { 1.0 / tau - 1.0 } else { (1.0 - tau) / tau };
    CostRatio::new(c).map_err(|_| Error::UndefinedRatio {
        implied_threshold: tau,
    })
}

/// What to do when an observed error rate is exactly 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum CorrectionPolicy {
    /// Leave rates as observed.
    None,
    /// Replace 0 with `1/(2n)` and 1 with `1 - 1/(2n)`, `n` the rate's denominator.
    #[default]
    HalfCount,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ConfusionSummary {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
    pub fpr: f64,
    pub fnr: f64,
    /// Fraction of truth-positive records.
    pub prevalence: f64,
    pub correction_applied: bool,
}

impl ConfusionSummary {
    pub fn from_counts(
        true_positives: u64,
        false_positives: u64,
        false_negatives: u64,
        true_negatives: u64,
        correction: CorrectionPolicy,
    ) -> Result<Self> {
        let positives = true_positives + false_negatives;
        let negatives = false_positives + true_negatives;
        // A rate over an empty class is undefined whatever the correction.
        if positives == 0 || negatives == 0 {
            return Err(Error::DegenerateClass {
                positives,
                negatives,
            });
        }
        let mut correction_applied = false;
        let mut rate = |errors: u64, n: u64| {
            let raw = errors as f64 / n as f64;
            match correction {
                CorrectionPolicy::HalfCount if errors == 0 => {
                    correction_applied = true;
                    0.5 / n as f64
                }
                CorrectionPolicy::HalfCount if errors == n => {
                    correction_applied = true;
                    1.0 - 0.5 / n as f64
                }
                _ => raw,
            }
        };
        let fpr = rate(false_positives, negatives);
        let fnr = rate(false_negatives, positives);
        Ok(Self {
            true_positives,
            false_positives,
            false_negatives,
            true_negatives,
            fpr,
            fnr,
            prevalence: positives as f64 / (positives + negatives) as f64,
            correction_applied,
        })
    }

    pub fn positives(&self) -> u64 {
        self.true_positives + self.false_negatives
    }

    pub fn negatives(&self) -> u64 {
        self.false_positives + self.true_negatives
    }

    pub fn total(&self) -> u64 {
        self.positives() + self.negatives()
    }
}

/// Confusion counts of binary decisions (or labels) against truths.
pub fn confusion(
    decisions: &[bool],
    truths: &[bool],
    correction: CorrectionPolicy,
) -> Result<ConfusionSummary> {
    if decisions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: decisions.len(),
            right: truths.len(),
        });
    }
    let mut cells = [0u64; 4];
    for (&d, &y) in decisions.iter().zip(truths) {
        cells[cell_index(d, y)] += 1;
    }
    ConfusionSummary::from_counts(cells[0], cells[1], cells[2], cells[3], correction)
}

/// Index into `[tp, fp, fn, tn]`.
pub(crate) fn cell_index(decision: bool, truth: bool) -> usize {
    match (decision, truth) {
        (true, true) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (false, false) => 3,
    }
}
