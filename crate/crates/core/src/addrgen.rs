//! Private-key to address derivation and brute-force lookalike search.
//!
//! Keys come from a ChaCha20 stream over a 64-bit seed, one stream per
//! worker, so a seeded search is reproducible. The output is for
//! measurement only; these keys are not secret.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use k256::elliptic_curve::group::Curve;
use k256::elliptic_curve::sec1::ToEncodedPoint;
use k256::elliptic_curve::PrimeField;
use k256::{AffinePoint, ProjectivePoint, Scalar};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use tiny_keccak::{Hasher, Keccak};

use crate::address::{decode_fixed, Address, ADDRESS_DIGITS};
use crate::error::{KeyError, SearchError};
use crate::similarity::{prefix_suffix_score, SimilarityScore};

/// secp256k1 scalar in `[1, n)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PrivateKey([u8; 32]);

impl PrivateKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Result<Self, KeyError> {
        let s: Option<Scalar> = Scalar::from_repr(bytes.into()).into();
        match s {
            Some(s) if s != Scalar::ZERO => Ok(PrivateKey(bytes)),
            _ => Err(KeyError::OutOfRange),
        }
    }

    /// Big-endian integer value, as for `k = 1`.
    pub fn from_u64(k: u64) -> Result<Self, KeyError> {
        let mut b = [0u8; 32];
        b[24..].copy_from_slice(&k.to_be_bytes());
        Self::from_bytes(b)
    }

    pub fn parse(text: &str) -> Result<Self, KeyError> {
        let bytes = decode_fixed::<32>(text).map_err(|_| KeyError::Format(String::from(text)))?;
        Self::from_bytes(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    fn scalar(&self) -> Scalar {
        // validated on construction
        Scalar::from_repr(self.0.into()).unwrap()
    }

    fn from_scalar(s: &Scalar) -> Option<Self> {
        if *s == Scalar::ZERO {
            return None;
        }
        Some(PrivateKey(s.to_bytes().into()))
    }
}

impl fmt::Display for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("0x")?;
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PrivateKey({self})")
    }
}

impl Serialize for PrivateKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PrivateKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <alloc::borrow::Cow<'de, str>>::deserialize(d)?;
        PrivateKey::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn address_of_point(p: &AffinePoint) -> Address {
    let enc = p.to_encoded_point(false);
    let mut k = Keccak::v256();
    k.update(&enc.as_bytes()[1..]);
    let mut h = [0u8; 32];
    k.finalize(&mut h);
    let mut out = [0u8; 20];
    out.copy_from_slice(&h[12..]);
    Address::from_bytes(out)
}

/// `keccak256(X || Y)[12..]` of `k * G`.
pub fn derive_address(k: &PrivateKey) -> Address {
    let p = (ProjectivePoint::GENERATOR * k.scalar()).to_affine();
    address_of_point(&p)
}

/// Targets sorted by leading digits and by trailing digits, so that the
/// candidates sharing a prefix or a suffix are found by binary search.
#[derive(Debug, Clone)]
pub struct TargetIndex {
    by_prefix: Vec<([u8; ADDRESS_DIGITS], Address)>,
    by_suffix: Vec<([u8; ADDRESS_DIGITS], Address)>,
    a_min: usize,
    b_min: usize,
}

impl TargetIndex {
    pub fn new(targets: &[Address], a_min: u8, b_min: u8) -> Self {
        let mut by_prefix: Vec<_> = targets.iter().map(|t| (t.nibbles(), *t)).collect();
        by_prefix.sort();
        by_prefix.dedup();
        let mut by_suffix: Vec<_> = targets
            .iter()
            .map(|t| {
                let mut n = t.nibbles();
                n.reverse();
                (n, *t)
            })
            .collect();
        by_suffix.sort();
        by_suffix.dedup();
        TargetIndex {
            by_prefix,
            by_suffix,
            a_min: a_min as usize,
            b_min: b_min as usize,
        }
    }

    fn range(list: &[([u8; ADDRESS_DIGITS], Address)], key: &[u8]) -> (usize, usize) {
        let n = key.len();
        let lo = list.partition_point(|(k, _)| k[..n] < *key);
        let hi = list.partition_point(|(k, _)| k[..n] <= *key);
        (lo, hi)
    }

    /// Targets with `a >= a_min` and `b >= b_min` against `candidate`.
    pub fn matches(&self, candidate: &Address) -> Vec<(Address, SimilarityScore)> {
        let nib = candidate.nibbles();
        let (pl, ph) = Self::range(&self.by_prefix, &nib[..self.a_min.min(40)]);
        let mut rev = nib;
        rev.reverse();
        let (sl, sh) = Self::range(&self.by_suffix, &rev[..self.b_min.min(40)]);
        let (a, b) = (self.a_min as u8, self.b_min as u8);
        // scan the narrower range and confirm the other side by scoring
        let pool = if ph - pl <= sh - sl {
            &self.by_prefix[pl..ph]
        } else {
            &self.by_suffix[sl..sh]
        };
        let mut out: Vec<(Address, SimilarityScore)> = pool
            .iter()
            .filter_map(|(_, t)| {
                let s = prefix_suffix_score(candidate, t);
                s.passes(a, b).then_some((*t, s))
            })
            .collect();
        out.sort_by(|x, y| x.0.cmp(&y.0));
        out
    }

    pub fn is_empty(&self) -> bool {
        self.by_prefix.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenMode {
    /// One scalar multiplication per key.
    Naive,
    /// Consecutive keys from one random start: one point addition per key
    /// and a shared field inversion per batch.
    Optimized,
}

impl fmt::Display for GenMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GenMode::Naive => "naive",
            GenMode::Optimized => "optimized",
        })
    }
}

/// Brute-force search parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub targets: Vec<Address>,
    pub a_min: u8,
    pub b_min: u8,
    /// Maximum number of derived addresses, summed over workers.
    pub max_trials: Option<u64>,
    /// Wall-clock limit, honored by callers that provide a clock.
    pub max_seconds: Option<f64>,
    pub seed: u64,
    /// When off, keys are only derived and counted.
    pub check_targets: bool,
    pub stop_at_first: bool,
    pub mode: GenMode,
}

impl SearchSpec {
    pub fn validate(&self) -> Result<(), SearchError> {
        let trials_ok = self.max_trials.is_some_and(|t| t > 0);
        let secs_ok = self.max_seconds.is_some_and(|s| s > 0.0);
        if !(trials_ok || secs_ok) || self.max_trials == Some(0) || self.max_seconds.is_some_and(|s| s <= 0.0) {
            return Err(SearchError::Budget);
        }
        if self.check_targets && self.targets.is_empty() {
            return Err(SearchError::NoTargets);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenMatch {
    pub key: PrivateKey,
    pub address: Address,
    pub target: Address,
    pub score: SimilarityScore,
    /// 1-based trial number within the worker that found it.
    pub trial: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenStats {
    pub mode: GenMode,
    pub workers: u32,
    pub trials: u64,
    pub elapsed_secs: f64,
    pub aps: f64,
    pub matches: Vec<GenMatch>,
}

impl GenStats {
    pub fn finalize(&mut self) {
        self.aps = if self.elapsed_secs > 0.0 {
            self.trials as f64 / self.elapsed_secs
        } else {
            0.0
        };
    }
}

/// Key and address generator for one worker.
pub struct KeyStream {
    rng: ChaCha20Rng,
    mode: GenMode,
    batch_keys: Vec<Scalar>,
    batch_points: Vec<ProjectivePoint>,
    batch_affine: Vec<AffinePoint>,
    cursor: usize,
}

const BATCH: usize = 256;

impl KeyStream {
    pub fn new(seed: u64, worker: u64, mode: GenMode) -> Self {
        Self::with_rng(ChaCha20Rng::seed_from_u64(seed), worker, mode)
    }

    /// Stream keyed by 32 bytes of outside entropy instead of a seed.
    pub fn from_entropy_bytes(key: [u8; 32], worker: u64, mode: GenMode) -> Self {
        Self::with_rng(ChaCha20Rng::from_seed(key), worker, mode)
    }

    fn with_rng(mut rng: ChaCha20Rng, worker: u64, mode: GenMode) -> Self {
        rng.set_stream(worker);
        KeyStream {
            rng,
            mode,
            batch_keys: Vec::new(),
            batch_points: Vec::new(),
            batch_affine: Vec::new(),
            cursor: 0,
        }
    }

    fn random_scalar(&mut self) -> Scalar {
        loop {
            let mut b = [0u8; 32];
            self.rng.fill_bytes(&mut b);
            let s: Option<Scalar> = Scalar::from_repr(b.into()).into();
            if let Some(s) = s {
                if s != Scalar::ZERO {
                    return s;
                }
            }
        }
    }

    fn refill(&mut self) {
        let k0 = self.random_scalar();
        let p0 = ProjectivePoint::GENERATOR * k0;
        self.batch_keys.clear();
        self.batch_points.clear();
        let mut k = k0;
        let mut p = p0;
        for _ in 0..BATCH {
            self.batch_keys.push(k);
            self.batch_points.push(p);
            k += Scalar::ONE;
            p += ProjectivePoint::GENERATOR;
        }
        self.batch_affine.resize(BATCH, AffinePoint::IDENTITY);
        ProjectivePoint::batch_normalize(&self.batch_points, &mut self.batch_affine);
        self.cursor = 0;
    }

    /// Next `(key, address)` pair.
    pub fn next_pair(&mut self) -> (PrivateKey, Address) {
        match self.mode {
            GenMode::Naive => {
                let s = self.random_scalar();
                let p = (ProjectivePoint::GENERATOR * s).to_affine();
                (PrivateKey(s.to_bytes().into()), address_of_point(&p))
            }
            GenMode::Optimized => loop {
                if self.cursor >= self.batch_keys.len() {
                    self.refill();
                }
                let i = self.cursor;
                self.cursor += 1;
                // k0 + i wraps to zero with negligible probability; skip it
                if let Some(key) = PrivateKey::from_scalar(&self.batch_keys[i]) {
                    return (key, address_of_point(&self.batch_affine[i]));
                }
            },
        }
    }
}

/// Run one worker for up to `trials` derivations. `clock` returns seconds
/// since an arbitrary origin; `deadline` is compared against it every
/// 1024 trials.
pub fn search_worker<C: FnMut() -> f64>(
    spec: &SearchSpec,
    index: Option<&TargetIndex>,
    worker: u64,
    trials: u64,
    clock: C,
    deadline: Option<f64>,
) -> (u64, Vec<GenMatch>) {
    let mut ks = KeyStream::new(spec.seed, worker, spec.mode);
    search_stream(spec, index, &mut ks, trials, clock, deadline)
}

/// Like [`search_worker`] but drawing keys from a caller-supplied stream.
pub fn search_stream<C: FnMut() -> f64>(
    spec: &SearchSpec,
    index: Option<&TargetIndex>,
    ks: &mut KeyStream,
    trials: u64,
    mut clock: C,
    deadline: Option<f64>,
) -> (u64, Vec<GenMatch>) {
    let mut matches = Vec::new();
    let mut done = 0u64;
    while done < trials {
        if done % 1024 == 0 {
            if let Some(d) = deadline {
                if clock() >= d {
                    break;
                }
            }
        }
        let (key, addr) = ks.next_pair();
        done += 1;
        if spec.check_targets {
            if let Some(idx) = index {
                for (target, score) in idx.matches(&addr) {
                    matches.push(GenMatch {
                        key,
                        address: addr,
                        target,
                        score,
                        trial: done,
                    });
                }
                if spec.stop_at_first && !matches.is_empty() {
                    break;
                }
            }
        }
    }
    (done, matches)
}

/// Single-worker search bounded by `max_trials` and, when given, by
/// `max_seconds` on the supplied clock.
pub fn search<C: FnMut() -> f64>(spec: &SearchSpec, mut clock: C) -> Result<GenStats, SearchError> {
    spec.validate()?;
    let index = spec
        .check_targets
        .then(|| TargetIndex::new(&spec.targets, spec.a_min, spec.b_min));
    let start = clock();
    let deadline = spec.max_seconds.map(|s| start + s);
    let (trials, matches) = search_worker(
        spec,
        index.as_ref(),
        0,
        spec.max_trials.unwrap_or(u64::MAX),
        &mut clock,
        deadline,
    );
    let mut stats = GenStats {
        mode: spec.mode,
        workers: 1,
        trials,
        elapsed_secs: clock() - start,
        aps: 0.0,
        matches,
    };
    stats.finalize();
    Ok(stats)
}
