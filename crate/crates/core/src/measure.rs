//! Rank-based performance measures for uniform vs unitary query.
//!
//! For a difference matrix `Δ` (`L x T`) and backscatter channel `G`
//! (`L x N`):
//!
//! * `E_t = Δ_t G` with `Δ_t = diag(Δ[:, t])`. Its rank is `min(N, L*_t)`
//!   almost surely, and the unitary-query measure is
//!   `R_unitary = Σ_t min(N, L*_t)`.
//! * `D = (G_1 Δ | ... | G_N Δ)` with `G_n = diag(G[:, n])`. Its rank is
//!   `min(N · rank Δ, L*)` almost surely when every nonzero slot of `Δ`
//!   shares the same antenna support, where `L*` counts antennas whose
//!   symbols differ anywhere in the block. The uniform-query measure is
//!   `R_uniform = min(N · rank Δ, L*)`.
//!
//! The larger measure predicts the faster-decaying pairwise error
//! probability at high SNR.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codes::DifferenceMatrix;
use crate::error::{Error, Result};
use crate::linalg::{numeric_rank, sample_cn_matrix, ComplexMatrix, DEFAULT_RANK_TOL};
use crate::rng::{par_chunks, RandomStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    UnitaryDominates,
    UniformDominates,
    Comparable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub r_unitary: usize,
    pub r_uniform: usize,
    /// `min(N, L*_t)` per slot.
    pub per_slot_ranks: Vec<usize>,
    pub rank_delta: usize,
    pub nonzero_rows: usize,
    pub verdict: Verdict,
}

/// `E_t = Δ_t G` for zero-based slot `t`, an `L x N` matrix.
pub fn build_e_t(delta: &DifferenceMatrix, g: &ComplexMatrix, t: usize) -> Result<ComplexMatrix> {
    let d = delta.delta();
    if t >= d.cols() {
        return Err(Error::IndexOutOfRange { index: t, len: d.cols() });
    }
    check_g(delta, g, "build_e_t")?;
    Ok(ComplexMatrix::from_fn(g.rows(), g.cols(), |l, n| d[(l, t)] * g[(l, n)]))
}

/// `D = (G_1 Δ | ... | G_N Δ)`, an `L x (N·T)` matrix with
/// `D[(l, n·T + t)] = g_{l,n} · δ_{l,t}`.
pub fn build_d(delta: &DifferenceMatrix, g: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_g(delta, g, "build_d")?;
    let d = delta.delta();
    let t = d.cols();
    Ok(ComplexMatrix::from_fn(d.rows(), g.cols() * t, |l, col| {
        g[(l, col / t)] * d[(l, col % t)]
    }))
}

fn check_g(delta: &DifferenceMatrix, g: &ComplexMatrix, op: &'static str) -> Result<()> {
    if g.rows() != delta.antennas() {
        return Err(Error::DimensionMismatch {
            op,
            lhs: delta.delta().shape(),
            rhs: g.shape(),
        });
    }
    Ok(())
}

fn per_slot_ranks(delta: &DifferenceMatrix, n: usize) -> Vec<usize> {
    delta.column_supports().iter().map(|&s| s.min(n)).collect()
}

pub fn r_unitary(delta: &DifferenceMatrix, n: usize) -> usize {
    per_slot_ranks(delta, n).iter().sum()
}

pub fn r_uniform(delta: &DifferenceMatrix, n: usize) -> usize {
    (n * delta.rank()).min(delta.nonzero_rows())
}

pub fn compare_queries(delta: &DifferenceMatrix, n: usize) -> MeasureReport {
    let per_slot_ranks = per_slot_ranks(delta, n);
    let r_unitary: usize = per_slot_ranks.iter().sum();
    let r_uniform = r_uniform(delta, n);
    let verdict = match r_unitary.cmp(&r_uniform) {
        std::cmp::Ordering::Greater => Verdict::UnitaryDominates,
        std::cmp::Ordering::Less => Verdict::UniformDominates,
        std::cmp::Ordering::Equal => Verdict::Comparable,
    };
    MeasureReport {
        r_unitary,
        r_uniform,
        per_slot_ranks,
        rank_delta: delta.rank(),
        nonzero_rows: delta.nonzero_rows(),
        verdict,
    }
}

/// Outcome of checking the almost-sure rank statements on sampled `G`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankCheckReport {
    pub trials: u64,
    /// Predicted `rank(E_t)` per slot.
    pub expected_e_ranks: Vec<usize>,
    /// Predicted `rank(D)`.
    pub expected_d_rank: usize,
    /// `slot_rank_counts[t][r]`: trials in which `rank(E_t) == r`.
    pub slot_rank_counts: Vec<Vec<u64>>,
    /// `d_rank_counts[r]`: trials in which `rank(D) == r`.
    pub d_rank_counts: Vec<u64>,
    /// Fraction of trials where every `E_t` had its predicted rank.
    pub lemma1_fraction: f64,
    /// Fraction of trials where `D` had its predicted rank.
    pub lemma2_fraction: f64,
}

impl RankCheckReport {
    pub fn passed(&self) -> bool {
        self.lemma1_fraction == 1.0 && self.lemma2_fraction == 1.0
    }
}

struct RankTally {
    trials: u64,
    lemma1_hits: u64,
    lemma2_hits: u64,
    slot_counts: Vec<Vec<u64>>,
    d_counts: Vec<u64>,
}

impl RankTally {
    fn new(slots: usize, max_e_rank: usize, max_d_rank: usize) -> Self {
        Self {
            trials: 0,
            lemma1_hits: 0,
            lemma2_hits: 0,
            slot_counts: vec![vec![0; max_e_rank + 1]; slots],
            d_counts: vec![0; max_d_rank + 1],
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.trials += other.trials;
        self.lemma1_hits += other.lemma1_hits;
        self.lemma2_hits += other.lemma2_hits;
        for (a, b) in self.slot_counts.iter_mut().zip(other.slot_counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (x, y) in self.d_counts.iter_mut().zip(other.d_counts) {
            *x += y;
        }
        self
    }
}

const RANK_CHECK_CHUNK: u64 = 256;

/// Samples `trials` channels `G` (`L x N`) and records how often `rank(E_t)`
/// and `rank(D)` match their predicted values.
pub fn empirical_rank_check(
    delta: &DifferenceMatrix,
    n: usize,
    trials: u64,
    stream: RandomStream,
) -> Result<RankCheckReport> {
    if n == 0 || trials == 0 {
        return Err(Error::InvalidParameter {
            name: if n == 0 { "n" } else { "trials" },
            reason: "must be at least 1".into(),
        });
    }
    let expected_e = per_slot_ranks(delta, n);
    let expected_d = r_uniform(delta, n);
    let (l, t) = delta.delta().shape();
    let max_e = l.min(n);
    let max_d = l.min(n * t);

    let tallies = par_chunks(stream, trials, RANK_CHECK_CHUNK, |rng, count| {
        tally_chunk(delta, n, count, &expected_e, expected_d, max_e, max_d, rng)
    });
    let mut total = RankTally::new(t, max_e, max_d);
    for tally in tallies {
        total = total.merge(tally?);
    }

    Ok(RankCheckReport {
        trials: total.trials,
        expected_e_ranks: expected_e,
        expected_d_rank: expected_d,
        slot_rank_counts: total.slot_counts,
        d_rank_counts: total.d_counts,
        lemma1_fraction: total.lemma1_hits as f64 / total.trials as f64,
        lemma2_fraction: total.lemma2_hits as f64 / total.trials as f64,
    })
}

#[allow(clippy::too_many_arguments)]
fn tally_chunk<R: Rng + ?Sized>(
    delta: &DifferenceMatrix,
    n: usize,
    count: u64,
    expected_e: &[usize],
    expected_d: usize,
    max_e: usize,
    max_d: usize,
    rng: &mut R,
) -> Result<RankTally> {
    let (l, t) = delta.delta().shape();
    let mut tally = RankTally::new(t, max_e, max_d);
    for _ in 0..count {
        let g = sample_cn_matrix(l, n, rng);
        let mut all_slots = true;
        for (slot, &want) in expected_e.iter().enumerate() {
            let r = numeric_rank(&build_e_t(delta, &g, slot)?, DEFAULT_RANK_TOL)?;
            tally.slot_counts[slot][r] += 1;
            all_slots &= r == want;
        }
        let rd = numeric_rank(&build_d(delta, &g)?, DEFAULT_RANK_TOL)?;
        tally.d_counts[rd] += 1;
        tally.trials += 1;
        tally.lemma1_hits += u64::from(all_slots);
        tally.lemma2_hits += u64::from(rd == expected_d);
    }
    Ok(tally)
}
