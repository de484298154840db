//! End-to-end BER sweeps with maximum-likelihood detection.
//!
//! Every trial draws a channel, sends a uniformly chosen codeword through
//! `R = ((Q H) ∘ C) G + W` with `W` of per-entry variance `1/γ̄`, and decodes
//! with perfect knowledge of `Q`, `H` and `G`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{add_noise, sample_channel, ChannelRealization, SystemDims};
use crate::codes::Codebook;
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::pep::snr_linear;
use crate::query::{build_query, QueryKind, QueryMatrix};
use crate::rng::{RandomStream, SimRng};

pub const DEFAULT_TARGET_ERROR_EVENTS: u64 = 200;

/// Points with fewer error events are reported but treated as unresolved.
pub const DEFAULT_MIN_ERROR_EVENTS: u64 = 20;

const TRIAL_CHUNK: u64 = 2000;
const CHUNKS_PER_WAVE: u64 = 8;
const WILSON_BELOW: u64 = 20;
const Z_95: f64 = 1.959963984540054;

/// Substream index reserved for drawing a random unitary query.
const QUERY_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug)]
pub struct SnrSweepConfig {
    pub dims: SystemDims,
    pub query_kind: QueryKind,
    pub codebook: Codebook,
    pub snr_grid_db: Vec<f64>,
    pub max_trials_per_point: u64,
    /// Stop a point once this many blocks have been decoded wrongly.
    pub target_error_events: u64,
    pub seed: u64,
}

impl SnrSweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if (self.codebook.slots(), self.codebook.antennas()) != (self.dims.t, self.dims.l) {
            return Err(Error::DimensionMismatch {
                op: "codebook",
                lhs: (self.codebook.slots(), self.codebook.antennas()),
                rhs: (self.dims.t, self.dims.l),
            });
        }
        if self.query_kind.is_unitary() && self.dims.t != self.dims.m {
            return Err(Error::BlockLength {
                t: self.dims.t,
                m: self.dims.m,
            });
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::InvalidParameter {
                name: "snr_grid_db",
                reason: "must not be empty".into(),
            });
        }
        if self.snr_grid_db.iter().any(|s| s.is_nan()) || self.snr_grid_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter {
                name: "snr_grid_db",
                reason: "must be strictly ascending".into(),
            });
        }
        if self.max_trials_per_point == 0 {
            return Err(Error::InvalidParameter {
                name: "max_trials_per_point",
                reason: "must be at least 1".into(),
            });
        }
        if self.target_error_events == 0 {
            return Err(Error::InvalidParameter {
                name: "target_error_events",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub snr_db: f64,
    pub ber: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Wrongly decoded blocks.
    pub error_events: u64,
    pub trials: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerCurve {
    pub points: Vec<BerPoint>,
    pub min_error_events: u64,
}

impl BerCurve {
    pub fn new(points: Vec<BerPoint>) -> Self {
        Self {
            points,
            min_error_events: DEFAULT_MIN_ERROR_EVENTS,
        }
    }

    pub fn is_resolved(&self, p: &BerPoint) -> bool {
        p.error_events >= self.min_error_events && p.ber > 0.0
    }

    pub fn resolved_points(&self) -> impl Iterator<Item = &BerPoint> {
        self.points.iter().filter(|p| self.is_resolved(p))
    }
}

/// 95% interval for `errors` successes in `n` Bernoulli trials: Wilson for
/// small counts on either side, Wald otherwise. Always contains `errors / n`.
pub fn binomial_ci(errors: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = errors as f64 / nf;
    let z2 = Z_95 * Z_95;
    if errors < WILSON_BELOW || n - errors < WILSON_BELOW {
        let denom = 1.0 + z2 / nf;
        let centre = (p + z2 / (2.0 * nf)) / denom;
        let half = Z_95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
        ((centre - half).clamp(0.0, p), (centre + half).clamp(p, 1.0))
    } else {
        let half = Z_95 * (p * (1.0 - p) / nf).sqrt();
        ((p - half).max(0.0), (p + half).min(1.0))
    }
}

/// `argmin_k ‖R - ((Q H) ∘ C_k) G‖²_F`, lowest index on ties.
pub fn ml_detect(r: &ComplexMatrix, q: &QueryMatrix, ch: &ChannelRealization, codebook: &Codebook) -> Result<usize> {
    let forward = q.matrix().matmul(&ch.h)?;
    detect_with_forward(r, &forward, &ch.g, codebook)
}

fn detect_with_forward(r: &ComplexMatrix, forward: &ComplexMatrix, g: &ComplexMatrix, codebook: &Codebook) -> Result<usize> {
    let mut best = (0, f64::INFINITY);
    for (k, c) in codebook.codewords().iter().enumerate() {
        let d = r.distance_sq(&forward.hadamard(c)?.matmul(g)?)?;
        if d < best.1 {
            best = (k, d);
        }
    }
    Ok(best.0)
}

#[derive(Default)]
struct Counts {
    trials: u64,
    block_errors: u64,
    bit_errors: u64,
}

fn run_trials(
    cfg: &SnrSweepConfig,
    q: &QueryMatrix,
    noise_std: f64,
    count: u64,
    rng: &mut SimRng,
) -> Result<Counts> {
    let words = cfg.codebook.codewords();
    let mut counts = Counts::default();
    for _ in 0..count {
        let ch = sample_channel(&cfg.dims, rng);
        let k = rng.random_range(0..words.len());
        let forward = q.matrix().matmul(&ch.h)?;
        let s = forward.hadamard(&words[k])?.matmul(&ch.g)?;
        let r = add_noise(&s, noise_std, rng)?;
        let k_hat = detect_with_forward(&r, &forward, &ch.g, &cfg.codebook)?;
        counts.trials += 1;
        if k_hat != k {
            counts.block_errors += 1;
            counts.bit_errors += ((k ^ k_hat) as u64).count_ones() as u64;
        }
    }
    Ok(counts)
}

fn simulate_point(cfg: &SnrSweepConfig, q: &QueryMatrix, snr_db: f64, stream: RandomStream) -> Result<BerPoint> {
    let noise_std = (1.0 / snr_linear(snr_db)).sqrt();
    let mut total = Counts::default();
    let mut next_chunk = 0u64;
    while total.trials < cfg.max_trials_per_point && total.block_errors < cfg.target_error_events {
        let remaining = cfg.max_trials_per_point - total.trials;
        let chunks = remaining.div_ceil(TRIAL_CHUNK).min(CHUNKS_PER_WAVE);
        let wave: Vec<Result<Counts>> = (0..chunks)
            .into_par_iter()
            .map(|i| {
                let n = TRIAL_CHUNK.min(remaining - i * TRIAL_CHUNK);
                let mut rng = stream.substream(next_chunk + i).rng();
                run_trials(cfg, q, noise_std, n, &mut rng)
            })
            .collect();
        for c in wave {
            let c = c?;
            total.trials += c.trials;
            total.block_errors += c.block_errors;
            total.bit_errors += c.bit_errors;
        }
        next_chunk += chunks;
    }
    let bits = total.trials * cfg.codebook.bits_per_block() as u64;
    let (ci_low, ci_high) = binomial_ci(total.bit_errors, bits);
    Ok(BerPoint {
        snr_db,
        ber: total.bit_errors as f64 / bits as f64,
        ci_low,
        ci_high,
        error_events: total.block_errors,
        trials: total.trials,
    })
}

/// BER at every grid point.
///
/// Trials run in waves of parallel fixed-size chunks; chunk `c` of point `i`
/// draws from `seed → i → c`, and stopping is only checked between waves, so
/// the curve does not depend on thread count. The stream does not depend on
/// the query kind, so curves for different kinds see the same channels,
/// codewords and noise. A random unitary query is drawn once per sweep.
pub fn simulate_ber(cfg: &SnrSweepConfig) -> Result<BerCurve> {
    cfg.validate()?;
    let root = RandomStream::new(cfg.seed);
    let q = build_query(cfg.query_kind, &cfg.dims, &mut root.substream(QUERY_STREAM).rng())?;
    let points = cfg
        .snr_grid_db
        .iter()
        .enumerate()
        .map(|(i, &snr)| simulate_point(cfg, &q, snr, root.substream(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(BerCurve::new(points))
}

fn crossing(curve: &BerCurve, level: f64, which: &'static str) -> Result<f64> {
    let pts: Vec<&BerPoint> = curve.resolved_points().collect();
    let not_crossed = Error::LevelNotCrossed { which, level };
    if !(level > 0.0) {
        return Err(not_crossed);
    }
    let target = level.log10();
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (la, lb) = (a.ber.log10(), b.ber.log10());
        if la >= target && lb <= target {
            if la == lb {
                return Ok(a.snr_db);
            }
            return Ok(a.snr_db + (b.snr_db - a.snr_db) * (la - target) / (la - lb));
        }
    }
    if let Some(p) = pts.iter().find(|p| p.ber == level) {
        return Ok(p.snr_db);
    }
    Err(not_crossed)
}

/// SNR at which `curve_b` reaches `ber_level` minus the SNR at which
/// `curve_a` does, by log-linear interpolation between resolved points.
/// Positive when `curve_a` needs less SNR.
pub fn gain_at_ber(curve_a: &BerCurve, curve_b: &BerCurve, ber_level: f64) -> Result<f64> {
    let a = crossing(curve_a, ber_level, "curve_a")?;
    let b = crossing(curve_b, ber_level, "curve_b")?;
    Ok(b - a)
}
