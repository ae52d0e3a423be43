//! Implied threshold of a deployed score threshold.
//!
//! The implied threshold of decision threshold `t` is `E[Y | s = t]`. The
//! estimator here, the prevalence at the threshold, is the intercept of a
//! tricubic-weighted linear regression of `Y` on `s - t` over a symmetric
//! window of half-width `d`. Averaging outcomes over a window instead
//! ([`naive_window_prevalence`]) is biased whenever the score density is not
//! flat across the window.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::decision::{DecisionRecord, GroupKey};
use crate::error::{ensure_finite, Error, Result};
use crate::kernel::bootstrap::{bootstrap_interval_with_support, BootstrapConfig, IntervalEstimate};
use crate::kernel::wls::{weighted_linear_fit, WeightedPoint};
use crate::partition::{partition_by, GroupOutcome};

pub const DEFAULT_MIN_EFFECTIVE_N: f64 = 200.0;

/// Growth factor for the adaptive half-width search.
const ADAPTIVE_GROWTH: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "mode", rename_all = "kebab-case"))]
pub enum WindowPolicy {
    Fixed {
        halfwidth: f64,
    },
    /// Grow the half-width from the smallest gap between distinct scores
    /// until the Kish effective sample size reaches `min_effective_n`, or
    /// `max_halfwidth` is hit.
    Adaptive {
        min_effective_n: f64,
        max_halfwidth: f64,
    },
}

impl WindowPolicy {
    pub fn fixed(halfwidth: f64) -> Result<Self> {
        let p = WindowPolicy::Fixed { halfwidth };
        p.validate()?;
        Ok(p)
    }

    pub fn adaptive(min_effective_n: f64, max_halfwidth: f64) -> Result<Self> {
        let p = WindowPolicy::Adaptive {
            min_effective_n,
            max_halfwidth,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |what: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain {
                    what,
                    value: v,
                    domain: "positive and finite",
                })
            }
        };
        match *self {
            WindowPolicy::Fixed { halfwidth } => positive("halfwidth", halfwidth),
            WindowPolicy::Adaptive {
                min_effective_n,
                max_halfwidth,
            } => {
                positive("min_effective_n", min_effective_n)?;
                positive("max_halfwidth", max_halfwidth)
            }
        }
    }

    /// Largest distance from the threshold a record can have and still get
    /// positive weight.
    pub fn reach(&self) -> f64 {
        match *self {
            WindowPolicy::Fixed { halfwidth } => halfwidth,
            WindowPolicy::Adaptive { max_halfwidth, .. } => max_halfwidth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PrevalenceEstimate {
    /// Fitted intercept, clamped into [0, 1].
    pub implied_threshold: f64,
    /// Intercept before clamping.
    pub raw_intercept: f64,
    pub slope: f64,
    pub halfwidth: f64,
    pub effective_n: f64,
    /// Records with positive weight.
    pub records_in_window: usize,
    pub degenerate: bool,
    pub clamped: bool,
    /// Adaptive search stopped at `max_halfwidth` short of `min_effective_n`.
    pub window_saturated: bool,
    pub interval: Option<IntervalEstimate>,
}

/// `[1 - (|s - t| / d)^3]^3` inside the window, 0 outside. `d` must be positive.
pub fn tricubic_weight(score: f64, t: f64, d: f64) -> f64 {
    debug_assert!(d > 0.0);
    tricube((score - t).abs() / d)
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        return 0.0;
    }
    let v = 1.0 - u * u * u;
    v * v * v
}

/// Mean outcome of records with `t_lower <= score <= t_upper`.
pub fn naive_window_prevalence(records: &[DecisionRecord], t_lower: f64, t_upper: f64) -> Result<f64> {
    ensure_finite("t_lower", t_lower)?;
    ensure_finite("t_upper", t_upper)?;
    if t_lower >= t_upper {
        return Err(Error::InvalidParameter(alloc::format!(
            "window lower bound {t_lower} must be below upper bound {t_upper}"
        )));
    }
    let (n, positives) = records
        .iter()
        .filter(|r| t_lower <= r.score && r.score <= t_upper)
        .fold((0u64, 0u64), |(n, k), r| (n + 1, k + r.outcome as u64));
    if n == 0 {
        return Err(Error::EmptyWindow {
            lower: t_lower,
            upper: t_upper,
        });
    }
    Ok(positives as f64 / n as f64)
}

/// A record reduced to what the window fit needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Centered {
    pub offset: f64,
    pub outcome: f64,
}

/// Records close enough to `t` to receive positive weight under `policy`.
pub(crate) fn window_support<'a, I>(records: I, t: f64, policy: &WindowPolicy) -> Vec<Centered>
where
    I: IntoIterator<Item = &'a DecisionRecord>,
{
    let reach = policy.reach();
    records
        .into_iter()
        .filter_map(|r| {
            let offset = r.score - t;
            (offset.abs() < reach).then_some(Centered {
                offset,
                outcome: if r.outcome { 1.0 } else { 0.0 },
            })
        })
        .collect()
}

fn kish(sum_w: f64, sum_w2: f64) -> f64 {
    if sum_w2 > 0.0 {
        sum_w * sum_w / sum_w2
    } else {
        0.0
    }
}

/// Half-width chosen by the adaptive policy and whether the search saturated.
fn adaptive_halfwidth(support: &[Centered], min_effective_n: f64, max_halfwidth: f64) -> (f64, bool) {
    let mut offsets: Vec<f64> = support.iter().map(|c| c.offset).collect();
    offsets.sort_by(f64::total_cmp);
    let smallest_gap = offsets
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&g| g > 0.0)
        .fold(f64::INFINITY, f64::min);
    let mut distances: Vec<f64> = offsets.iter().map(|o| o.abs()).collect();
    distances.sort_by(f64::total_cmp);

    let effective_n = |d: f64| {
        let (mut sw, mut sw2) = (0.0, 0.0);
        for &dist in distances.iter().take_while(|&&dist| dist < d) {
            let w = tricube(dist / d);
            sw += w;
            sw2 += w * w;
        }
        kish(sw, sw2)
    };

    let mut d = smallest_gap.min(max_halfwidth);
    loop {
        if effective_n(d) >= min_effective_n {
            return (d, false);
        }
        if d >= max_halfwidth {
            return (max_halfwidth, true);
        }
        d = (d * ADAPTIVE_GROWTH).min(max_halfwidth);
    }
}

/// Local linear fit at the threshold over pre-centered support records.
pub(crate) fn fit_window(support: &[Centered], policy: &WindowPolicy) -> Result<PrevalenceEstimate> {
    let (halfwidth, window_saturated) = match *policy {
        WindowPolicy::Fixed { halfwidth } => (halfwidth, false),
        WindowPolicy::Adaptive {
            min_effective_n,
            max_halfwidth,
        } => adaptive_halfwidth(support, min_effective_n, max_halfwidth),
    };
    let points: Vec<WeightedPoint> = support
        .iter()
        .filter_map(|c| {
            let w = tricube(c.offset.abs() / halfwidth);
            (w > 0.0).then_some(WeightedPoint {
                x: c.offset,
                y: c.outcome,
                w,
            })
        })
        .collect();
    if points.len() < 2 {
        return Err(Error::InsufficientData {
            weighted: points.len(),
            halfwidth,
            in_reach: support.len(),
        });
    }
    let fit = weighted_linear_fit(&points)?;
    let implied_threshold = fit.intercept.clamp(0.0, 1.0);
    Ok(PrevalenceEstimate {
        implied_threshold,
        raw_intercept: fit.intercept,
        slope: fit.slope,
        halfwidth,
        effective_n: fit.effective_n,
        records_in_window: points.len(),
        degenerate: fit.degenerate,
        clamped: implied_threshold != fit.intercept,
        window_saturated,
        interval: None,
    })
}

/// Shared body of the single-set and per-group estimators.
pub(crate) fn estimate_from_support(
    population: usize,
    support: &[Centered],
    policy: &WindowPolicy,
    interval: Option<&BootstrapConfig>,
) -> Result<PrevalenceEstimate> {
    let mut estimate = fit_window(support, policy)?;
    if let Some(config) = interval {
        estimate.interval = Some(bootstrap_interval_with_support(
            population,
            support,
            |resampled| fit_window(resampled, policy).map(|e| e.implied_threshold),
            config,
        )?);
    }
    Ok(estimate)
}

/// The prevalence at the threshold: estimated `E[Y | s = t]`.
///
/// With `interval` set, a pairs bootstrap over all `records` adds a
/// percentile interval for the (clamped) implied threshold.
pub fn prevalence_at_threshold(
    records: &[DecisionRecord],
    t: f64,
    policy: &WindowPolicy,
    interval: Option<&BootstrapConfig>,
) -> Result<PrevalenceEstimate> {
    ensure_finite("threshold", t)?;
    policy.validate()?;
    let support = window_support(records, t, policy);
    estimate_from_support(records.len(), &support, policy, interval)
}

/// Runs [`prevalence_at_threshold`] per group.
///
/// Records are partitioned by their key projected onto `grouping`. Bootstrap
/// seeds are derived from each group's canonical key, so a group's result
/// does not depend on which other groups are present.
pub fn audit_model<S: AsRef<str>>(
    records: &[DecisionRecord],
    t: f64,
    grouping: &[S],
    policy: &WindowPolicy,
    interval: Option<&BootstrapConfig>,
) -> Result<BTreeMap<GroupKey, GroupOutcome<PrevalenceEstimate>>> {
    ensure_finite("threshold", t)?;
    policy.validate()?;
    if let Some(config) = interval {
        config.validate()?;
    }
    let parts = partition_by(records, |r| r.group.project(grouping))?;
    Ok(parts
        .into_iter()
        .map(|(key, members)| {
            let support = window_support(members.iter().copied(), t, policy);
            let config = interval.map(|c| c.with_seed(c.seed.derive_str(&alloc::format!("{key}"))));
            let outcome = estimate_from_support(members.len(), &support, policy, config.as_ref()).into();
            (key, outcome)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::bootstrap::Seed;
    use crate::synth::{gen_scored, Calibration, ScoreDensity, ScoreModel};
    use alloc::vec;

    fn rec(score: f64, outcome: bool) -> DecisionRecord {
        DecisionRecord::new(score, outcome, GroupKey::overall()).unwrap()
    }

    fn keyed(score: f64, outcome: bool, g: &str) -> DecisionRecord {
        DecisionRecord::new(score, outcome, GroupKey::single("g", g).unwrap()).unwrap()
    }

    #[test]
    fn tricubic_values() {
        assert_eq!(tricubic_weight(0.4, 0.4, 0.1), 1.0);
        assert_eq!(tricubic_weight(0.75, 0.5, 0.25), 0.0);
        assert_eq!(tricubic_weight(0.25, 0.5, 0.25), 0.0);
        assert_eq!(tricubic_weight(0.5, 0.0, 1.0), 0.669_921_875);
        assert_eq!(tricubic_weight(-0.5, 0.0, 1.0), 0.669_921_875);
        assert_eq!(tricubic_weight(2.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn tricubic_is_continuous_and_symmetric() {
        let (t, d) = (0.3, 0.2);
        let mut prev = tricubic_weight(t - 0.3, t, d);
        for i in 1..=6000 {
            let s = t - 0.3 + i as f64 * 1e-4;
            let w = tricubic_weight(s, t, d);
            assert!((w - prev).abs() < 2e-3);
            assert!((w - tricubic_weight(2.0 * t - s, t, d)).abs() < 1e-12);
            if (s - t).abs() > d {
                assert_eq!(w, 0.0);
            }
            prev = w;
        }
    }

    #[test]
    fn naive_window_cases() {
        let recs = [rec(0.1, false), rec(0.75, true), rec(0.8, true), rec(0.95, false)];
        assert_eq!(naive_window_prevalence(&recs, 0.7, 0.9).unwrap(), 1.0);
        assert_eq!(naive_window_prevalence(&recs, 0.0, 1.0).unwrap(), 0.5);
        assert!(matches!(
            naive_window_prevalence(&recs, 0.2, 0.3),
            Err(Error::EmptyWindow { .. })
        ));
        assert!(naive_window_prevalence(&recs, 0.9, 0.7).is_err());
    }

    #[test]
    fn naive_window_on_uniform_calibrated_scores() {
        let model = ScoreModel::new(ScoreDensity::Uniform, Calibration::Identity).unwrap();
        let recs = gen_scored(&model, 100_000, &GroupKey::overall(), Seed(11)).unwrap();
        let est = naive_window_prevalence(&recs, 0.7, 0.9).unwrap();
        assert!((est - 0.8).abs() < 0.01, "{est}");
    }

    #[test]
    fn naive_window_underestimates_under_decaying_density() {
        // Analytic E[s | s in [a, b]] for density ∝ exp(-λ s):
        // a + 1/λ - (b - a) e^{-λ(b-a)} / (1 - e^{-λ(b-a)})
        let (a, b, lambda): (f64, f64, f64) = (0.75, 0.85, 8.0);
        let decay = libm::exp(-lambda * (b - a));
        let analytic = a + 1.0 / lambda - (b - a) * decay / (1.0 - decay);
        assert!(analytic < 0.8);
        let model = ScoreModel::new(ScoreDensity::TruncatedExponential { rate: 8.0 }, Calibration::Identity).unwrap();
        // Enough records that sampling noise sits well below the 0.0066 bias.
        let recs = gen_scored(&model, 4_000_000, &GroupKey::overall(), Seed(5)).unwrap();
        let est = naive_window_prevalence(&recs, a, b).unwrap();
        assert!(est < 0.8, "{est}");
        assert!((est - analytic).abs() < 0.01, "{est} vs {analytic}");
    }

    #[test]
    fn constant_outcomes_give_that_constant() {
        let recs: Vec<_> = (0..30).map(|i| rec(0.4 + i as f64 * 0.01, true)).collect();
        for policy in [WindowPolicy::fixed(0.2).unwrap(), WindowPolicy::adaptive(5.0, 0.5).unwrap()] {
            let e = prevalence_at_threshold(&recs, 0.5, &policy, None).unwrap();
            assert!((e.implied_threshold - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_two_point_fit() {
        let recs = [rec(0.45, false), rec(0.55, true)];
        let e = prevalence_at_threshold(&recs, 0.5, &WindowPolicy::fixed(0.1).unwrap(), None).unwrap();
        assert!((e.implied_threshold - 0.5).abs() < 1e-12);
        assert!((e.slope - 10.0).abs() < 1e-9);
        assert!(!e.clamped);
    }

    #[test]
    fn insufficient_data_carries_diagnostics() {
        let recs = [rec(0.5, true), rec(0.9, false)];
        match prevalence_at_threshold(&recs, 0.5, &WindowPolicy::fixed(0.1).unwrap(), None) {
            Err(Error::InsufficientData { weighted, halfwidth, in_reach }) => {
                assert_eq!((weighted, halfwidth, in_reach), (1, 0.1, 1));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn intercept_outside_unit_interval_is_clamped() {
        // outcomes fall off above t, so the line extrapolates above 1 at t
        let recs = [rec(0.51, true), rec(0.52, true), rec(0.53, false)];
        let e = prevalence_at_threshold(&recs, 0.5, &WindowPolicy::fixed(0.05).unwrap(), None).unwrap();
        assert!(e.raw_intercept > 1.0, "{}", e.raw_intercept);
        assert_eq!(e.implied_threshold, 1.0);
        assert!(e.clamped);
    }

    #[test]
    fn degenerate_when_all_scores_equal() {
        let recs = [rec(0.5, true), rec(0.5, false), rec(0.5, false), rec(0.5, false)];
        let e = prevalence_at_threshold(&recs, 0.5, &WindowPolicy::fixed(0.1).unwrap(), None).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.implied_threshold, 0.25);
    }

    #[test]
    fn adaptive_window_reaches_target_effective_n() {
        let model = ScoreModel::new(ScoreDensity::Uniform, Calibration::Identity).unwrap();
        let recs = gen_scored(&model, 20_000, &GroupKey::overall(), Seed(3)).unwrap();
        let policy = WindowPolicy::adaptive(DEFAULT_MIN_EFFECTIVE_N, 0.5).unwrap();
        let e = prevalence_at_threshold(&recs, 0.6, &policy, None).unwrap();
        assert!(e.effective_n >= DEFAULT_MIN_EFFECTIVE_N);
        assert!(!e.window_saturated);
        // one growth step smaller would have missed the target
        let smaller = WindowPolicy::fixed(e.halfwidth / ADAPTIVE_GROWTH).unwrap();
        let s = prevalence_at_threshold(&recs, 0.6, &smaller, None).unwrap();
        assert!(s.effective_n < DEFAULT_MIN_EFFECTIVE_N);

        let tight = WindowPolicy::adaptive(1e9, 0.05).unwrap();
        let e = prevalence_at_threshold(&recs, 0.6, &tight, None).unwrap();
        assert!(e.window_saturated);
        assert_eq!(e.halfwidth, 0.05);
    }

    #[test]
    fn duplication_leaves_fixed_window_estimate_unchanged() {
        let model = ScoreModel::new(ScoreDensity::Beta { a: 2.0, b: 3.0 }, Calibration::Identity).unwrap();
        let recs = gen_scored(&model, 5_000, &GroupKey::overall(), Seed(8)).unwrap();
        let mut doubled = recs.clone();
        doubled.extend(recs.iter().cloned());
        let policy = WindowPolicy::fixed(0.15).unwrap();
        let a = prevalence_at_threshold(&recs, 0.5, &policy, None).unwrap();
        let b = prevalence_at_threshold(&doubled, 0.5, &policy, None).unwrap();
        assert!((a.implied_threshold - b.implied_threshold).abs() < 1e-10);
        assert!((b.effective_n - 2.0 * a.effective_n).abs() < 1e-6 * a.effective_n);
    }

    #[test]
    fn bootstrap_interval_brackets_estimate() {
        let model = ScoreModel::new(ScoreDensity::Uniform, Calibration::Identity).unwrap();
        let recs = gen_scored(&model, 20_000, &GroupKey::overall(), Seed(1)).unwrap();
        let cfg = BootstrapConfig::new(200, 0.95, Seed(4)).unwrap();
        let policy = WindowPolicy::fixed(0.1).unwrap();
        let e = prevalence_at_threshold(&recs, 0.7, &policy, Some(&cfg)).unwrap();
        let iv = e.interval.unwrap();
        assert_eq!(iv.point, e.implied_threshold);
        assert!(iv.lower < iv.point && iv.point < iv.upper);
        assert!(iv.contains(0.7), "{iv:?}");
        let again = prevalence_at_threshold(&recs, 0.7, &policy, Some(&cfg)).unwrap();
        assert_eq!(again, e);
    }

    #[test]
    fn audit_model_partitions_and_reports_skips() {
        let mut recs = vec![keyed(0.45, false, "a"), keyed(0.55, true, "a"), keyed(0.5, true, "b")];
        recs.push(keyed(0.52, false, "a"));
        let policy = WindowPolicy::fixed(0.1).unwrap();
        let out = audit_model(&recs, 0.5, &["g"], &policy, None).unwrap();
        assert_eq!(out.len(), 2);
        let a = &out[&GroupKey::single("g", "a").unwrap()];
        let direct = prevalence_at_threshold(
            &[keyed(0.45, false, "a"), keyed(0.55, true, "a"), keyed(0.52, false, "a")],
            0.5,
            &policy,
            None,
        )
        .unwrap();
        assert_eq!(a.estimate(), Some(&direct));
        assert!(matches!(
            out[&GroupKey::single("g", "b").unwrap()].skip_reason(),
            Some(Error::InsufficientData { .. })
        ));
        assert_eq!(
            audit_model(&recs, 0.5, &["region"], &policy, None),
            Err(Error::UnknownDimension("region".into()))
        );
    }

    #[test]
    fn audit_model_single_group_matches_direct_call() {
        let model = ScoreModel::new(ScoreDensity::Uniform, Calibration::Identity).unwrap();
        let g = GroupKey::single("g", "only").unwrap();
        let recs = gen_scored(&model, 10_000, &g, Seed(2)).unwrap();
        let policy = WindowPolicy::adaptive(DEFAULT_MIN_EFFECTIVE_N, 0.3).unwrap();
        let out = audit_model(&recs, 0.4, &["g"], &policy, None).unwrap();
        let direct = prevalence_at_threshold(&recs, 0.4, &policy, None).unwrap();
        assert_eq!(out[&g].estimate(), Some(&direct));
    }

    #[test]
    fn identical_groups_get_identical_estimates() {
        let model = ScoreModel::new(ScoreDensity::Uniform, Calibration::Identity).unwrap();
        let a = gen_scored(&model, 10_000, &GroupKey::single("g", "a").unwrap(), Seed(6)).unwrap();
        let b: Vec<_> = a
            .iter()
            .map(|r| DecisionRecord::new(r.score, r.outcome, GroupKey::single("g", "b").unwrap()).unwrap())
            .collect();
        let mut all = a.clone();
        all.extend(b);
        let policy = WindowPolicy::fixed(0.1).unwrap();
        let out = audit_model(&all, 0.5, &["g"], &policy, None).unwrap();
        let ests: Vec<_> = out.values().map(|o| o.estimate().unwrap().implied_threshold).collect();
        assert_eq!(ests[0], ests[1]);
    }

    #[test]
    fn other_groups_do_not_affect_a_group() {
        let model = ScoreModel::new(ScoreDensity::Uniform, Calibration::Identity).unwrap();
        let ka = GroupKey::single("g", "a").unwrap();
        let a = gen_scored(&model, 5_000, &ka, Seed(6)).unwrap();
        let b = gen_scored(&model, 5_000, &GroupKey::single("g", "b").unwrap(), Seed(7)).unwrap();
        let c = gen_scored(&model, 5_000, &GroupKey::single("g", "c").unwrap(), Seed(8)).unwrap();
        let cfg = BootstrapConfig::new(100, 0.9, Seed(1)).unwrap();
        let policy = WindowPolicy::fixed(0.1).unwrap();
        let mut ab = a.clone();
        ab.extend(b);
        let mut ac = a.clone();
        ac.extend(c);
        let x = audit_model(&ab, 0.5, &["g"], &policy, Some(&cfg)).unwrap();
        let y = audit_model(&ac, 0.5, &["g"], &policy, Some(&cfg)).unwrap();
        assert_eq!(x[&ka], y[&ka]);
    }

    #[test]
    fn shifted_scores_lower_the_implied_threshold() {
        let ka = GroupKey::single("g", "a").unwrap();
        let kb = GroupKey::single("g", "b").unwrap();
        let calibrated = ScoreModel::new(ScoreDensity::Uniform, Calibration::Identity).unwrap();
        let shifted = calibrated.with_score_offset(0.1).unwrap();
        let mut recs = gen_scored(&calibrated, 50_000, &ka, Seed(1)).unwrap();
        recs.extend(gen_scored(&shifted, 50_000, &kb, Seed(2)).unwrap());
        let out = audit_model(&recs, 0.8, &["g"], &WindowPolicy::fixed(0.05).unwrap(), None).unwrap();
        let ta = out[&ka].estimate().unwrap().implied_threshold;
        let tb = out[&kb].estimate().unwrap().implied_threshold;
        assert!(tb < ta, "{tb} !< {ta}");
        assert!((ta - 0.8).abs() < 0.03 && (tb - 0.7).abs() < 0.03);
    }
}
