//! Address similarity and the probability models behind lookalike generation.
//!
//! Scores compare the 40 lowercase hex digits of two addresses. The
//! collision models assume generated addresses are uniform over the
//! 16^40 address space.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::address::{Address, ADDRESS_DIGITS};
use crate::money::Usd;

/// Prefix/suffix match lengths between two addresses.
///
/// Identical addresses report `(40, 40)` with `identical` set so callers can
/// filter self-comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub prefix: u8,
    pub suffix: u8,
    pub identical: bool,
}

impl SimilarityScore {
    /// Total matched digits `a + b`.
    #[inline]
    pub fn digits(&self) -> u8 {
        self.prefix + self.suffix
    }

    /// `a >= a_min && b >= b_min` for distinct addresses.
    #[inline]
    pub fn passes(&self, a_min: u8, b_min: u8) -> bool {
        !self.identical && self.prefix >= a_min && self.suffix >= b_min
    }
}

/// Longest common prefix and suffix of the hex digit strings.
pub fn prefix_suffix_score(x: &Address, y: &Address) -> SimilarityScore {
    let xb = x.as_bytes();
    let yb = y.as_bytes();
    if xb == yb {
        return SimilarityScore {
            prefix: 40,
            suffix: 40,
            identical: true,
        };
    }
    let mut prefix = 0u8;
    for i in 0..20 {
        let diff = xb[i] ^ yb[i];
        if diff == 0 {
            prefix += 2;
        } else {
            if diff & 0xf0 == 0 {
                prefix += 1;
            }
            break;
        }
    }
    let mut suffix = 0u8;
    for i in (0..20).rev() {
        let diff = xb[i] ^ yb[i];
        if diff == 0 {
            suffix += 2;
        } else {
            if diff & 0x0f == 0 {
                suffix += 1;
            }
            break;
        }
    }
    SimilarityScore {
        prefix,
        suffix,
        identical: false,
    }
}

/// Number of digit positions where the two addresses agree.
pub fn positional_match_count(x: &Address, y: &Address) -> u8 {
    let mut n = 0u8;
    for (a, b) in x.as_bytes().iter().zip(y.as_bytes()) {
        let diff = a ^ b;
        n += u8::from(diff & 0xf0 == 0) + u8::from(diff & 0x0f == 0);
    }
    n
}

/// Optimal-string-alignment distance: insertions, deletions, substitutions
/// and adjacent transpositions, with no substring edited twice.
pub fn damerau_levenshtein(x: &str, y: &str) -> usize {
    let a = x.as_bytes();
    let b = y.as_bytes();
    osa_distance(a, b)
}

fn osa_distance(a: &[u8], b: &[u8]) -> usize {
    let (n, m) = (a.len(), b.len());
    if n == 0 {
        return m;
    }
    if m == 0 {
        return n;
    }
    // three rolling rows: i-2, i-1, i
    let mut prev2: Vec<usize> = vec![0; m + 1];
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur: Vec<usize> = vec![0; m + 1];
    for i in 1..=n {
        cur[0] = i;
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut best = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                best = best.min(prev2[j - 2] + 1);
            }
            cur[j] = best;
        }
        core::mem::swap(&mut prev2, &mut prev);
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Distance between the digit strings of two addresses.
pub fn address_edit_distance(x: &Address, y: &Address) -> usize {
    osa_distance(&x.nibbles(), &y.nibbles())
}

/// `16^7`: number of distinct (3-digit prefix, 4-digit suffix) pairs.
pub const BIRTHDAY_SPACE: f64 = 268_435_456.0;

/// Chance that `r` uniformly random counterparties contain two addresses
/// sharing their first 3 and last 4 digits: `1 - exp(-r^2 / (2 * 16^7))`.
pub fn birthday_collision_prob(r: u64) -> f64 {
    let r = r as f64;
    -libm::expm1(-(r * r) / (2.0 * BIRTHDAY_SPACE))
}

/// Smallest `r` with `birthday_collision_prob(r) >= threshold`.
pub fn birthday_min_counterparties(threshold: f64) -> u64 {
    // r = sqrt(-2 * 16^7 * ln(1 - threshold)), then correct for rounding
    let guess = libm::sqrt(-2.0 * BIRTHDAY_SPACE * libm::log1p(-threshold));
    let mut r = libm::floor(guess) as u64;
    while r > 0 && birthday_collision_prob(r - 1) >= threshold {
        r -= 1;
    }
    while birthday_collision_prob(r) < threshold {
        r += 1;
    }
    r
}

fn inv_space(d: u32) -> f64 {
    // exact power of two
    libm::ldexp(1.0, -4 * d as i32)
}

/// Probability that one uniformly random address matches some target in a
/// set of `r` on `d` fixed digit positions: `1 - ((16^d - 1) / 16^d)^r`.
///
/// Evaluated as `-expm1(r * log1p(-16^-d))`, which keeps full relative
/// precision when the result is tiny.
pub fn generation_collision_prob(d: u32, r: u64) -> f64 {
    if d == 0 {
        return 1.0;
    }
    let q = inv_space(d);
    -libm::expm1(r as f64 * libm::log1p(-q))
}

/// First-order approximation `r / 16^d`.
pub fn generation_collision_prob_approx(d: u32, r: u64) -> f64 {
    r as f64 * inv_space(d)
}

/// Mean of the geometric trials-until-match distribution, `1 / p`.
pub fn expected_trials(d: u32, r: u64) -> f64 {
    1.0 / generation_collision_prob(d, r)
}

/// Parameters of the lookalike-generation cost model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenModel {
    pub d: u32,
    pub r: u64,
    pub aps_cpu: f64,
    pub aps_gpu: f64,
    pub usd_per_cpu_day: Usd,
    pub usd_per_gpu_day: Usd,
}

pub const SECONDS_PER_DAY: f64 = 86_400.0;

impl GenModel {
    /// Reference throughput: an optimized multiprocess CPU generator and a
    /// CUDA generator, priced at on-demand cloud rates.
    pub fn reference(d: u32, r: u64) -> Self {
        GenModel {
            d,
            r,
            aps_cpu: 460_665.0,
            aps_gpu: 516_437_000.0,
            usd_per_cpu_day: Usd::from_micros(24_190_000),
            usd_per_gpu_day: Usd::from_micros(62_690_000),
        }
    }

    pub fn cpu_day(&self) -> f64 {
        self.aps_cpu * SECONDS_PER_DAY
    }

    pub fn gpu_day(&self) -> f64 {
        self.aps_gpu * SECONDS_PER_DAY
    }

    pub fn is_valid(&self) -> bool {
        self.r >= 1 && self.aps_cpu > 0.0 && self.aps_gpu > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareEstimate {
    pub expected_trials: f64,
    pub cpu_days: f64,
    pub gpu_days: f64,
    pub cpu_cost_usd: Usd,
    pub gpu_cost_usd: Usd,
}

fn usd_times(price: Usd, factor: f64) -> Usd {
    let micros = price.micros() as f64 * factor;
    Usd::from_micros(libm::round(micros) as i128)
}

/// Machine-days and rental cost to reach a `d`-digit match against `r` targets.
pub fn hardware_estimate(model: &GenModel) -> HardwareEstimate {
    let trials = expected_trials(model.d, model.r);
    let cpu_days = trials / model.cpu_day();
    let gpu_days = trials / model.gpu_day();
    HardwareEstimate {
        expected_trials: trials,
        cpu_days,
        gpu_days,
        cpu_cost_usd: usd_times(model.usd_per_cpu_day, cpu_days),
        gpu_cost_usd: usd_times(model.usd_per_gpu_day, gpu_days),
    }
}

/// Digits matched by `candidate` against `target` counted as the
/// generator does: the longest prefix plus the longest suffix.
pub fn matched_digits(candidate: &Address, target: &Address) -> u8 {
    let s = prefix_suffix_score(candidate, target);
    if s.identical {
        ADDRESS_DIGITS as u8
    } else {
        s.digits()
    }
}
