//! Generative models with known answers, used as oracles for the estimators.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::decision::{total_cost, CostRatio, DecisionRecord, GroupKey};
use crate::error::{Error, Result};
use crate::kernel::bootstrap::{Seed, StreamRng};
use crate::kernel::normal::std_normal_quantile;
use crate::label_audit::LabelRecord;

/// Density of latent scores on [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "family", rename_all = "kebab-case"))]
pub enum ScoreDensity {
    Uniform,
    /// Density ∝ exp(-rate · s) on [0, 1].
    TruncatedExponential { rate: f64 },
    Beta { a: f64, b: f64 },
}

/// Map from latent score to outcome probability.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum Calibration {
    /// `E[Y | s] = s`.
    Identity,
    Constant { p: f64 },
    /// `intercept + slope * s`, clipped to [0, 1].
    Affine { intercept: f64, slope: f64 },
    /// `1 / (1 + exp(-scale * (s - midpoint)))`.
    Logistic { scale: f64, midpoint: f64 },
}

impl Calibration {
    pub fn probability(&self, s: f64) -> f64 {
        match *self {
            Calibration::Identity => s.clamp(0.0, 1.0),
            Calibration::Constant { p } => p,
            Calibration::Affine { intercept, slope } => (intercept + slope * s).clamp(0.0, 1.0),
            Calibration::Logistic { scale, midpoint } => 1.0 / (1.0 + libm::exp(-scale * (s - midpoint))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoreModel {
    pub density: ScoreDensity,
    pub calibration: Calibration,
    /// Added to the latent score before it is reported. Outcomes still follow
    /// `calibration(latent)`, so a positive offset makes the reported scores
    /// overconfident by exactly that amount.
    #[cfg_attr(feature = "serde", serde(default))]
    pub score_offset: f64,
}

impl ScoreModel {
    pub fn new(density: ScoreDensity, calibration: Calibration) -> Result<Self> {
        let m = Self {
            density,
            calibration,
            score_offset: 0.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_score_offset(self, offset: f64) -> Result<Self> {
        let m = Self {
            score_offset: offset,
            ..self
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self.density {
            ScoreDensity::Uniform => {}
            ScoreDensity::TruncatedExponential { rate } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return bad(alloc::format!("exponential rate must be positive, got {rate}"));
                }
            }
            ScoreDensity::Beta { a, b } => {
                if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                    return bad(alloc::format!("beta shape parameters must be positive, got ({a}, {b})"));
                }
            }
        }
        match self.calibration {
            Calibration::Constant { p } if !(0.0..=1.0).contains(&p) => {
                return bad(alloc::format!("constant calibration must lie in [0, 1], got {p}"));
            }
            Calibration::Affine { intercept, slope } if !(intercept.is_finite() && slope.is_finite()) => {
                return bad("affine calibration parameters must be finite".into());
            }
            Calibration::Logistic { scale, midpoint } if !(scale.is_finite() && midpoint.is_finite()) => {
                return bad("logistic calibration parameters must be finite".into());
            }
            _ => {}
        }
        if !self.score_offset.is_finite() {
            return bad("score offset must be finite".into());
        }
        Ok(())
    }

    fn sample_latent(&self, rng: &mut StreamRng) -> f64 {
        match self.density {
            ScoreDensity::Uniform => rng.random::<f64>(),
            ScoreDensity::TruncatedExponential { rate } => {
                let u: f64 = rng.random();
                -libm::log1p(-u * -libm::expm1(-rate)) / rate
            }
            ScoreDensity::Beta { a, b } => {
                let x = sample_gamma(rng, a);
                let y = sample_gamma(rng, b);
                x / (x + y)
            }
        }
    }
}

/// Uniform draw on the open interval (0, 1).
fn open_unit(rng: &mut StreamRng) -> f64 {
    ((rng.random::<u64>() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

pub(crate) fn sample_std_normal(rng: &mut StreamRng) -> f64 {
    // open_unit never returns 0 or 1, so the quantile cannot fail
    std_normal_quantile(open_unit(rng)).unwrap_or(0.0)
}

/// Marsaglia–Tsang gamma(shape, 1) sampler.
fn sample_gamma(rng: &mut StreamRng, shape: f64) -> f64 {
    if shape < 1.0 {
        let boost = libm::pow(open_unit(rng), 1.0 / shape);
        return sample_gamma(rng, shape + 1.0) * boost;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / libm::sqrt(9.0 * d);
    loop {
        let z = sample_std_normal(rng);
        let v = 1.0 + c * z;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = open_unit(rng);
        if libm::log(u) < 0.5 * z * z + d - d * v + d * libm::log(v) {
            return d * v;
        }
    }
}

fn require_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidParameter("sample size must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// `n` scored records from `model`, all in `group`.
pub fn gen_scored(model: &ScoreModel, n: usize, group: &GroupKey, seed: Seed) -> Result<Vec<DecisionRecord>> {
    model.validate()?;
    require_n(n)?;
    let mut rng = seed.stream(0);
    Ok((0..n)
        .map(|_| {
            let latent = model.sample_latent(&mut rng);
            let outcome = rng.random::<f64>() < model.calibration.probability(latent);
            DecisionRecord {
                score: latent + model.score_offset,
                outcome,
                group: group.clone(),
            }
        })
        .collect())
}

/// Equal-variance signal detection parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SdtParams {
    pub prevalence: f64,
    pub separation: f64,
    pub criterion: f64,
}

impl SdtParams {
    pub fn new(prevalence: f64, separation: f64, criterion: f64) -> Result<Self> {
        let p = Self {
            prevalence,
            separation,
            criterion,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(Error::Domain {
                what: "prevalence",
                value: self.prevalence,
                domain: "0 < φ < 1",
            });
        }
        if !self.separation.is_finite() || self.criterion.is_nan() {
            return Err(Error::InvalidParameter(alloc::format!(
                "separation must be finite and criterion a number, got ({}, {})",
                self.separation,
                self.criterion
            )));
        }
        Ok(())
    }
}

/// A labeling world: base parameters plus per-group overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct SdtWorld {
    pub base: SdtParams,
    pub overrides: BTreeMap<GroupKey, SdtParams>,
    /// Labels are spread round-robin over this many labelers.
    pub labelers: u32,
}

impl SdtWorld {
    pub fn new(base: SdtParams) -> Result<Self> {
        base.validate()?;
        Ok(Self {
            base,
            overrides: BTreeMap::new(),
            labelers: 1,
        })
    }

    pub fn with_override(mut self, group: GroupKey, params: SdtParams) -> Result<Self> {
        params.validate()?;
        self.overrides.insert(group, params);
        Ok(self)
    }

    pub fn params_for(&self, group: &GroupKey) -> &SdtParams {
        self.overrides.get(group).unwrap_or(&self.base)
    }
}

/// One draw from the signal detection model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Signal {
    pub truth: bool,
    pub signal: f64,
}

/// `truth ~ Bernoulli(φ)`, `signal ~ Normal(truth · d′, 1)`.
pub fn gen_signals(params: &SdtParams, n: usize, seed: Seed) -> Result<Vec<Signal>> {
    params.validate()?;
    require_n(n)?;
    let mut rng = seed.stream(0);
    Ok((0..n)
        .map(|_| {
            let truth = rng.random::<f64>() < params.prevalence;
            let mean = if truth { params.separation } else { 0.0 };
            Signal {
                truth,
                signal: mean + sample_std_normal(&mut rng),
            }
        })
        .collect())
}

/// `n` labels for items in `group`; `label = signal >= criterion`.
pub fn gen_labels(world: &SdtWorld, n: usize, group: &GroupKey, seed: Seed) -> Result<Vec<LabelRecord>> {
    if world.labelers == 0 {
        return Err(Error::InvalidParameter("need at least one labeler".into()));
    }
    let params = world.params_for(group);
    let signals = gen_signals(params, n, seed)?;
    Ok(signals
        .into_iter()
        .enumerate()
        .map(|(i, s)| LabelRecord {
            label: s.signal >= params.criterion,
            truth: s.truth,
            labeler: alloc::format!("L{}", i as u32 % world.labelers),
            item: alloc::format!("i{i}"),
            group: group.clone(),
        })
        .collect())
}

/// A risk category: `positives` of `count` cases have the condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RiskCategory {
    pub positives: u32,
    pub count: u32,
}

impl RiskCategory {
    pub fn probability(&self) -> f64 {
        self.positives as f64 / self.count as f64
    }
}

/// Groups of risk categories, each ordered riskiest first.
///
/// A treatment policy for one group is a bitmask over its categories; bit `i`
/// set means category `i` is treated.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskCategoryFixture {
    pub groups: Vec<(GroupKey, Vec<RiskCategory>)>,
}

/// Four-category cancer-risk example with two genders.
///
/// Category probabilities are 1/2, 1/4, 1/6, 1/20 for both genders. Counts
/// are in-repo constants chosen so that the female base rate is 20/78 ≈ 0.26
/// and the male base rate 24/108 ≈ 0.22, with males concentrated in the
/// lower-risk categories.
pub fn cancer_fixture() -> RiskCategoryFixture {
    let cat = |positives, count| RiskCategory { positives, count };
    let key = |g: &str| GroupKey::single("gender", g).expect("static key is valid");
    RiskCategoryFixture {
        groups: alloc::vec![
            (key("female"), alloc::vec![cat(12, 24), cat(4, 16), cat(3, 18), cat(1, 20)]),
            (key("male"), alloc::vec![cat(14, 28), cat(4, 16), cat(4, 24), cat(2, 40)]),
        ],
    }
}

impl RiskCategoryFixture {
    pub fn categories(&self, group: &GroupKey) -> Option<&[RiskCategory]> {
        self.groups
            .iter()
            .find(|(k, _)| k == group)
            .map(|(_, c)| c.as_slice())
    }

    /// Expands a group into one record per case, scored by its category
    /// probability.
    pub fn records(&self, group: &GroupKey) -> Option<Vec<DecisionRecord>> {
        let cats = self.categories(group)?;
        Some(
            cats.iter()
                .flat_map(|c| {
                    (0..c.count).map(move |i| DecisionRecord {
                        score: c.probability(),
                        outcome: i < c.positives,
                        group: group.clone(),
                    })
                })
                .collect(),
        )
    }
}

/// Base rate of a category list.
pub fn base_rate(categories: &[RiskCategory]) -> f64 {
    let (pos, n) = categories
        .iter()
        .fold((0u64, 0u64), |(p, n), c| (p + c.positives as u64, n + c.count as u64));
    pos as f64 / n as f64
}

/// Total cost `FP + c · FN` of treating the categories in `policy`.
pub fn policy_cost(categories: &[RiskCategory], policy: u32, c: CostRatio) -> Result<f64> {
    let mut decisions = Vec::new();
    let mut outcomes = Vec::new();
    for (i, cat) in categories.iter().enumerate() {
        let treat = policy & (1 << i) != 0;
        for j in 0..cat.count {
            decisions.push(treat);
            outcomes.push(j < cat.positives);
        }
    }
    total_cost(&decisions, &outcomes, c)
}

/// Every treatment policy whose cost is within `rel_tol` of the minimum,
/// found by enumerating all `2^k` category subsets.
pub fn minimum_cost_policies(categories: &[RiskCategory], c: CostRatio, rel_tol: f64) -> Result<Vec<u32>> {
    if categories.len() > 16 {
        return Err(Error::InvalidParameter("exhaustive enumeration supports at most 16 categories".into()));
    }
    let costs = (0..1u32 << categories.len())
        .map(|p| policy_cost(categories, p, c).map(|cost| (p, cost)))
        .collect::<Result<Vec<_>>>()?;
    let best = costs.iter().map(|&(_, cost)| cost).fold(f64::INFINITY, f64::min);
    let tol = rel_tol * best.abs().max(1.0);
    Ok(costs
        .into_iter()
        .filter(|&(_, cost)| cost <= best + tol)
        .map(|(p, _)| p)
        .collect())
}

/// Treat every category whose probability is at least `threshold`.
pub fn threshold_policy(categories: &[RiskCategory], threshold: f64) -> u32 {
    categories
        .iter()
        .enumerate()
        .filter(|(_, c)| c.probability() >= threshold)
        .fold(0, |mask, (i, _)| mask | (1 << i))
}

/// True when no untreated category is riskier than a treated one.
pub fn is_threshold_policy(categories: &[RiskCategory], policy: u32) -> bool {
    let treated = |i: usize| policy & (1 << i) != 0;
    categories.iter().enumerate().all(|(i, ci)| {
        !treated(i)
            || categories
                .iter()
                .enumerate()
                .all(|(j, cj)| treated(j) || cj.probability() <= ci.probability())
    })
}

/// Fraction of positive cases left untreated by `policy`.
pub fn false_negative_rate(categories: &[RiskCategory], policy: u32) -> f64 {
    let (missed, positives) = categories.iter().enumerate().fold((0u64, 0u64), |(m, p), (i, c)| {
        let untreated = policy & (1 << i) == 0;
        (m + if untreated { c.positives as u64 } else { 0 }, p + c.positives as u64)
    });
    missed as f64 / positives as f64
}
