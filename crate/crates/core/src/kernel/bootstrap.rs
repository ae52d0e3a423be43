//! Seeded percentile bootstrap.
//!
//! Replicate `r` of a run seeded with `k` draws from ChaCha8 keyed by `k` on
//! stream `r`, so each replicate is a pure function of `(k, r)` and replicates
//! can be evaluated in any order.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct Seed(pub u64);

impl Seed {
    /// Generator for stream `stream` of this seed.
    pub fn stream(self, stream: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(stream);
        rng
    }

    /// Generator used for bootstrap replicate `r`.
    pub fn replicate(self, r: usize) -> StreamRng {
        self.stream(r as u64)
    }

    /// A child seed for an integer label.
    pub fn derive(self, label: u64) -> Seed {
        Seed(splitmix64(self.0 ^ splitmix64(label.wrapping_add(0x51_7c_c1_b7_27_22_0a_95))))
    }

    /// A child seed for a string label, e.g. a canonical group key.
    pub fn derive_str(self, label: &str) -> Seed {
        self.derive(fnv1a(label.as_bytes()))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub seed: Seed,
}

impl BootstrapConfig {
    pub const MIN_REPLICATES: usize = 100;

    pub fn new(replicates: usize, level: f64, seed: Seed) -> Result<Self> {
        let config = Self {
            replicates,
            level,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < Self::MIN_REPLICATES {
            return Err(Error::InvalidParameter(alloc::format!(
                "bootstrap needs at least {} replicates, got {}",
                Self::MIN_REPLICATES,
                self.replicates
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Domain {
                what: "level",
                value: self.level,
                domain: "0 < level < 1",
            });
        }
        Ok(())
    }

    pub fn with_seed(self, seed: Seed) -> Self {
        Self { seed, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntervalEstimate {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    /// Replicates requested.
    pub replicates: usize,
    /// Replicates on which the statistic was undefined.
    pub failed: usize,
}

impl IntervalEstimate {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Percentile bootstrap over whole records.
///
/// `statistic` is evaluated once on `records` for the point estimate and once
/// per replicate on a same-size resample drawn with replacement.
pub fn bootstrap_interval<T, F>(
    records: &[T],
    statistic: F,
    config: &BootstrapConfig,
) -> Result<IntervalEstimate>
where
    T: Clone,
    F: FnMut(&[T]) -> Result<f64>,
{
    bootstrap_interval_with_support(records.len(), records, statistic, config)
}

/// Percentile bootstrap for a statistic that only looks at a known subset of
/// the records.
///
/// `support` holds the records the statistic can see and `population` is the
/// size of the full record set. Each replicate draws `population` indices;
/// draws that land outside `support` are discarded. The resulting distribution
/// of support records is exactly that of a full pairs bootstrap.
pub fn bootstrap_interval_with_support<T, F>(
    population: usize,
    support: &[T],
    mut statistic: F,
    config: &BootstrapConfig,
) -> Result<IntervalEstimate>
where
    T: Clone,
    F: FnMut(&[T]) -> Result<f64>,
{
    config.validate()?;
    if population == 0 {
        return Err(Error::EmptyInput);
    }
    if support.len() > population {
        return Err(Error::InvalidParameter(alloc::format!(
            "support of {} records exceeds population of {population}",
            support.len()
        )));
    }
    let point = statistic(support)?;
    let mut buf = Vec::with_capacity(support.len());
    let mut values = Vec::with_capacity(config.replicates);
    let mut failed = 0;
    for r in 0..config.replicates {
        let mut rng = config.seed.replicate(r);
        resample_into(&mut rng, population, support, &mut buf);
        match statistic(&buf) {
            Ok(v) if v.is_finite() => values.push(v),
            _ => failed += 1,
        }
    }
    percentile_interval(point, values, failed, config.level)
}

/// Fills `out` with the support records hit by `population` uniform draws
/// over the full population (support first, then records never used).
///
/// The number of hits is Binomial(population, support / population) and,
/// given that number, the hits are uniform over the support, so only the hits
/// are drawn.
pub fn resample_into<T: Clone>(
    rng: &mut StreamRng,
    population: usize,
    support: &[T],
    out: &mut Vec<T>,
) {
    out.clear();
    let m = support.len();
    if m == 0 || population == 0 {
        return;
    }
    let hits = if m >= population {
        population as u64
    } else {
        Binomial::new(population as u64, m as f64 / population as f64)
            .expect("probability is in (0, 1)")
            .sample(rng)
    };
    out.extend((0..hits).map(|_| support[rng.random_range(0..m)].clone()));
}

/// Percentile interval from replicate values.
///
/// Quantiles interpolate linearly between order statistics. If the full-data
/// point falls outside the percentile bounds the interval is widened to reach
/// it, so `lower <= point <= upper` always holds.
pub fn percentile_interval(
    point: f64,
    mut values: Vec<f64>,
    failed: usize,
    level: f64,
) -> Result<IntervalEstimate> {
    let replicates = values.len() + failed;
    if replicates == 0 || 2 * failed > replicates {
        return Err(Error::UnstableStatistic { failed, replicates });
    }
    values.sort_by(f64::total_cmp);
    let alpha = 0.5 * (1.0 - level);
    let lower = sorted_quantile(&values, alpha);
    let upper = sorted_quantile(&values, 1.0 - alpha);
    Ok(IntervalEstimate {
        point,
        lower: lower.min(point),
        upper: upper.max(point),
        level,
        replicates,
        failed,
    })
}

fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}
