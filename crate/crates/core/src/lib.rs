//! Implied-threshold fairness audits.
//!
//! An audit asks which decision threshold, and so which ratio of
//! false-negative to false-positive cost, a set of decisions behaves as if it
//! used. Model audits estimate outcome prevalence among records scored at the
//! threshold; label audits fit an equal-variance signal detection model to
//! human labels and read the threshold off the fitted criterion.
//!
//! The crate is `no_std` and needs only `alloc`.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod compare;
pub mod decision;
pub mod kernel;
pub mod label_audit;
pub mod model_audit;
pub mod partition;
pub mod synth;

pub use compare::{all_pairs, compare_groups, cost_of_policy_by_pair, CellPolicy, ComparisonData, GroupComparison, Metric, PairResult};
pub use decision::{
    apply_threshold, confusion, implied_cost_ratio, optimal_implied_threshold, total_cost, ConfusionSummary,
    CorrectionPolicy, CostRatio, DecisionRecord, GroupKey,
};
pub use error::{Error, ErrorKind, Result};
pub use kernel::{BootstrapConfig, IntervalEstimate, Seed};
pub use label_audit::{audit_labels, sdt_estimate, LabelGrouping, LabelRecord, MinCounts, SdtEstimate};
pub use model_audit::{audit_model, prevalence_at_threshold, PrevalenceEstimate, WindowPolicy};
pub use partition::GroupOutcome;
