//! Pairwise error probability (PEP) between two codewords differing by `Δ`.
//!
//! With unitary query the tag sees `X = Q H`, `T x L` with i.i.d. `CN(0, 1)`
//! entries; with uniform query every slot sees the same row `y`. Conditioned
//! on the fading, the PEP is `Q(√(γ̄ Z / 2))` with
//!
//! ```text
//! unitary:  Z_X = ‖(X ∘ Δᵀ) G‖²_F = Σ_t ‖x_t E_t‖²_F
//! uniform:  Z_Y = Σ_t ‖y E_t‖²_F  = ‖y D‖²_F
//! ```
//!
//! Two estimators are provided. [`PepMethod::QFunctionMc`] averages the exact
//! conditional PEP over `(X, G)` or `(y, G)`. [`PepMethod::EigenProductMc`]
//! averages over `G` the Gaussian-averaged Chernoff bound
//! `Π 1/(1 + λ γ̄ / 4)`, where `λ` runs over the squared singular values of
//! every `E_t` (unitary) or of `D` (uniform). The product is an upper bound
//! on the exact PEP, not its value; its high-SNR slope is what the rank
//! measures predict.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::SystemDims;
use crate::codes::DifferenceMatrix;
use crate::error::{Error, Result};
use crate::linalg::{rank_from_singular_values, sample_cn_matrix, singular_values, ComplexMatrix, DEFAULT_RANK_TOL};
use crate::measure::{build_d, build_e_t, r_uniform, r_unitary};
use crate::query::QueryKind;
use crate::rng::{par_chunks, RandomStream, SimRng};

const IDENTITY_TOL: f64 = 1e-10;
const PEP_CHUNK: u64 = 1024;

/// Tail-index threshold below which a Monte Carlo average is declared
/// divergent. A tail index at or below 1 means infinite mean; estimates of
/// exactly-log-divergent laws scatter around 1, so the cut sits lower.
pub const DIVERGENCE_TAIL_THRESHOLD: f64 = 0.75;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PepMethod {
    #[serde(rename = "q-function-mc")]
    QFunctionMc,
    #[serde(rename = "eigen-product-mc")]
    EigenProductMc,
}

impl PepMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            PepMethod::QFunctionMc => "q-function-mc",
            PepMethod::EigenProductMc => "eigen-product-mc",
        }
    }
}

impl fmt::Display for PepMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PepMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q-function-mc" => Ok(PepMethod::QFunctionMc),
            "eigen-product-mc" => Ok(PepMethod::EigenProductMc),
            other => Err(Error::InvalidParameter {
                name: "method",
                reason: format!("unknown PEP method `{other}`"),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PepEstimate {
    pub snr_db: f64,
    pub value: f64,
    pub std_error: f64,
    pub trials: u64,
    pub method: PepMethod,
}

/// `γ̄ = 10^(snr_db / 10)`; `-∞` maps to zero.
pub fn snr_linear(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

/// Gaussian tail `Q(x) = ½ erfc(x / √2)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

fn check_agree(op: &str, a: f64, b: f64) -> Result<()> {
    if (a - b).abs() > IDENTITY_TOL * a.abs().max(b.abs()) {
        return Err(Error::NumericalFailure(format!(
            "{op}: the two evaluations disagree ({a:e} vs {b:e})"
        )));
    }
    Ok(())
}

fn check_shape(op: &'static str, got: (usize, usize), want: (usize, usize)) -> Result<()> {
    if got != want {
        return Err(Error::DimensionMismatch { op, lhs: got, rhs: want });
    }
    Ok(())
}

/// `Z_X = ‖(X ∘ Δᵀ) G‖²_F` for a `T x L` forward process `X`. Evaluated both
/// directly and slot by slot; the two must agree.
pub fn squared_distance_unitary(x: &ComplexMatrix, delta: &DifferenceMatrix, g: &ComplexMatrix) -> Result<f64> {
    let (l, t) = delta.delta().shape();
    check_shape("squared_distance_unitary", x.shape(), (t, l))?;
    check_shape("squared_distance_unitary", (g.rows(), l), (l, l))?;

    let direct = x.hadamard(&delta.delta().transpose())?.matmul(g)?.frobenius_norm_sq();
    let mut by_slot = 0.0;
    for slot in 0..t {
        let row = ComplexMatrix::new(1, l, x.row(slot).to_vec())?;
        by_slot += row.matmul(&build_e_t(delta, g, slot)?)?.frobenius_norm_sq();
    }
    check_agree("squared_distance_unitary", direct, by_slot)?;
    Ok(direct)
}

/// `Z_Y = Σ_t ‖y E_t‖²_F` for a `1 x L` forward row `y`, checked against
/// `‖y D‖²_F`.
pub fn squared_distance_uniform(y: &ComplexMatrix, delta: &DifferenceMatrix, g: &ComplexMatrix) -> Result<f64> {
    let l = delta.antennas();
    check_shape("squared_distance_uniform", y.shape(), (1, l))?;
    check_shape("squared_distance_uniform", (g.rows(), l), (l, l))?;

    let mut by_slot = 0.0;
    for slot in 0..delta.slots() {
        by_slot += y.matmul(&build_e_t(delta, g, slot)?)?.frobenius_norm_sq();
    }
    let d_form = y.matmul(&build_d(delta, g)?)?.frobenius_norm_sq();
    check_agree("squared_distance_uniform", by_slot, d_form)?;
    Ok(d_form)
}

fn check_inputs(kind: QueryKind, delta: &DifferenceMatrix, dims: &SystemDims, trials: u64) -> Result<()> {
    dims.validate()?;
    check_shape("pep", delta.delta().shape(), (dims.l, dims.t))?;
    if kind.is_unitary() && dims.t != dims.m {
        return Err(Error::BlockLength { t: dims.t, m: dims.m });
    }
    if trials == 0 {
        return Err(Error::InvalidParameter {
            name: "trials",
            reason: "must be at least 1".into(),
        });
    }
    Ok(())
}

/// Squared singular values entering the eigen-product, plus the high-SNR
/// limit integrand `Π 1/λ` over the numerically nonzero ones.
struct EigenDraw {
    lambdas: Vec<f64>,
    limit: f64,
}

fn eigen_draw(kind: QueryKind, delta: &DifferenceMatrix, g: &ComplexMatrix) -> Result<EigenDraw> {
    let mut lambdas = Vec::new();
    let mut limit = 1.0;
    let mut push = |m: &ComplexMatrix| -> Result<()> {
        let sigma = singular_values(m)?;
        let r = rank_from_singular_values(&sigma, m.shape(), DEFAULT_RANK_TOL);
        for (i, s) in sigma.iter().enumerate() {
            let lambda = s * s;
            if i < r {
                limit /= lambda;
            }
            lambdas.push(lambda);
        }
        Ok(())
    };
    if kind.is_unitary() {
        for (slot, &support) in delta.column_supports().iter().enumerate() {
            if support > 0 {
                push(&build_e_t(delta, g, slot)?)?;
            }
        }
    } else if !delta.is_zero() {
        push(&build_d(delta, g)?)?;
    }
    Ok(EigenDraw { lambdas, limit })
}

fn eigen_product(lambdas: &[f64], gamma: f64) -> f64 {
    lambdas.iter().map(|&l| 1.0 / (1.0 + l * gamma / 4.0)).product()
}

fn distance_draw(kind: QueryKind, delta: &DifferenceMatrix, dims: &SystemDims, rng: &mut SimRng) -> Result<f64> {
    let g = sample_cn_matrix(dims.l, dims.n, rng);
    if kind.is_unitary() {
        let x = sample_cn_matrix(dims.t, dims.l, rng);
        squared_distance_unitary(&x, delta, &g)
    } else {
        let y = sample_cn_matrix(1, dims.l, rng);
        squared_distance_uniform(&y, delta, &g)
    }
}

struct CurveTally {
    trials: u64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    limits: Vec<f64>,
}

impl CurveTally {
    fn new(points: usize) -> Self {
        Self {
            trials: 0,
            sum: vec![0.0; points],
            sum_sq: vec![0.0; points],
            limits: Vec::new(),
        }
    }

    fn add(&mut self, values: impl Iterator<Item = f64>) {
        self.trials += 1;
        for ((s, s2), v) in self.sum.iter_mut().zip(self.sum_sq.iter_mut()).zip(values) {
            *s += v;
            *s2 += v * v;
        }
    }

    fn merge(&mut self, other: CurveTally) {
        self.trials += other.trials;
        for (a, b) in self.sum.iter_mut().zip(other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(other.sum_sq) {
            *a += b;
        }
        self.limits.extend(other.limits);
    }
}

#[allow(clippy::too_many_arguments)]
fn run_curve(
    method: PepMethod,
    kind: QueryKind,
    delta: &DifferenceMatrix,
    dims: &SystemDims,
    snr_grid_db: &[f64],
    trials: u64,
    stream: RandomStream,
    keep_limits: bool,
) -> Result<(Vec<PepEstimate>, Vec<f64>)> {
    check_inputs(kind, delta, dims, trials)?;
    let gammas: Vec<f64> = snr_grid_db.iter().map(|&s| snr_linear(s)).collect();

    let chunks = par_chunks(stream, trials, PEP_CHUNK, |rng, count| -> Result<CurveTally> {
        let mut tally = CurveTally::new(gammas.len());
        for _ in 0..count {
            match method {
                PepMethod::QFunctionMc => {
                    let z = distance_draw(kind, delta, dims, rng)?;
                    tally.add(gammas.iter().map(|&g| q_function((g * z / 2.0).sqrt())));
                }
                PepMethod::EigenProductMc => {
                    let g = sample_cn_matrix(dims.l, dims.n, rng);
                    let draw = eigen_draw(kind, delta, &g)?;
                    tally.add(gammas.iter().map(|&gm| eigen_product(&draw.lambdas, gm)));
                    if keep_limits {
                        tally.limits.push(draw.limit);
                    }
                }
            }
        }
        Ok(tally)
    });

    let mut total = CurveTally::new(gammas.len());
    for chunk in chunks {
        total.merge(chunk?);
    }
    let n = total.trials as f64;
    let estimates = snr_grid_db
        .iter()
        .enumerate()
        .map(|(i, &snr_db)| {
            let mean = total.sum[i] / n;
            let var = if total.trials > 1 {
                ((total.sum_sq[i] - total.sum[i] * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            PepEstimate {
                snr_db,
                value: mean.clamp(0.0, 1.0),
                std_error: (var / n).sqrt(),
                trials: total.trials,
                method,
            }
        })
        .collect();
    Ok((estimates, total.limits))
}

/// PEP estimates at every grid point. All points reuse the same fading draws,
/// so differences between points carry no independent sampling noise.
pub fn pep_curve(
    method: PepMethod,
    kind: QueryKind,
    delta: &DifferenceMatrix,
    dims: &SystemDims,
    snr_grid_db: &[f64],
    trials: u64,
    stream: RandomStream,
) -> Result<Vec<PepEstimate>> {
    run_curve(method, kind, delta, dims, snr_grid_db, trials, stream, false).map(|(e, _)| e)
}

/// Monte Carlo average of `Q(√(γ̄ Z / 2))` over fresh `G` and `X` (or `y`).
pub fn pep_qfunction_mc(
    kind: QueryKind,
    delta: &DifferenceMatrix,
    dims: &SystemDims,
    snr_db: f64,
    trials: u64,
    stream: RandomStream,
) -> Result<PepEstimate> {
    let mut v = pep_curve(PepMethod::QFunctionMc, kind, delta, dims, &[snr_db], trials, stream)?;
    Ok(v.remove(0))
}

/// Monte Carlo average over `G` of `Π 1/(1 + λ γ̄ / 4)`.
pub fn pep_eigen_product_mc(
    kind: QueryKind,
    delta: &DifferenceMatrix,
    dims: &SystemDims,
    snr_db: f64,
    trials: u64,
    stream: RandomStream,
) -> Result<PepEstimate> {
    let mut v = pep_curve(PepMethod::EigenProductMc, kind, delta, dims, &[snr_db], trials, stream)?;
    Ok(v.remove(0))
}

/// Negated least-squares slope of `log10(value)` against `snr_db / 10`: the
/// `R` in `PEP ∝ γ̄^(-R)`.
pub fn decay_exponent(estimates: &[PepEstimate]) -> Result<f64> {
    let points = estimates.len();
    let (lo, hi) = estimates.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
        (lo.min(e.snr_db), hi.max(e.snr_db))
    });
    let span_db = if points == 0 { 0.0 } else { hi - lo };
    if points < 3 || span_db < 10.0 {
        return Err(Error::InsufficientPoints { points, span_db });
    }
    if let Some(bad) = estimates.iter().find(|e| !(e.value > 0.0)) {
        return Err(Error::NonpositiveValue {
            snr_db: bad.snr_db,
            value: bad.value,
        });
    }
    let n = points as f64;
    let xs: Vec<f64> = estimates.iter().map(|e| e.snr_db / 10.0).collect();
    let ys: Vec<f64> = estimates.iter().map(|e| e.value.log10()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(-sxy / sxx)
}

/// Hill estimate of the tail index from the `k` largest of `samples`.
///
/// Returns `Some(0.0)` if any sample is infinite and `None` when fewer than
/// `k + 1` positive samples are available.
pub fn hill_tail_index(samples: &[f64], k: usize) -> Option<f64> {
    if k == 0 {
        return None;
    }
    if samples.iter().any(|s| s.is_infinite()) {
        return Some(0.0);
    }
    let mut xs: Vec<f64> = samples.iter().copied().filter(|&s| s > 0.0).collect();
    if xs.len() <= k {
        return None;
    }
    xs.sort_by(|a, b| b.total_cmp(a));
    let threshold = xs[k].ln();
    let mean_excess = xs[..k].iter().map(|x| x.ln() - threshold).sum::<f64>() / k as f64;
    if mean_excess <= 0.0 {
        return None;
    }
    Some(1.0 / mean_excess)
}

/// Order statistics used by the Hill estimate: 1% of the sample, at least 10.
pub fn default_hill_k(n: usize) -> usize {
    (n / 100).max(10)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub kind: QueryKind,
    /// `R_unitary` or `R_uniform`.
    pub predicted: usize,
    pub measured: f64,
    /// Hill tail index of the high-SNR limit integrand `Π 1/λ`.
    pub tail_index: f64,
    pub estimates: Vec<PepEstimate>,
}

impl ExponentReport {
    pub fn within(&self, tol: f64) -> bool {
        (self.measured - self.predicted as f64).abs() <= tol
    }
}

/// Eigen-product decay exponent with a finiteness check on the average it
/// relies on.
///
/// At high SNR the eigen-product behaves like `(4/γ̄)^R · Π 1/λ`. The fitted
/// slope estimates `R` only if `E[Π 1/λ]` is finite. If the tail of the
/// sampled `Π 1/λ` is too heavy, this returns [`Error::DivergentAverage`]
/// carrying the measured slope instead of a report.
pub fn exponent_analysis(
    kind: QueryKind,
    delta: &DifferenceMatrix,
    dims: &SystemDims,
    snr_grid_db: &[f64],
    trials: u64,
    stream: RandomStream,
) -> Result<ExponentReport> {
    let (estimates, tail_index) = eigen_curve_with_tail(kind, delta, dims, snr_grid_db, trials, stream)?;
    assess_exponent(kind, delta, dims.n, estimates, tail_index)
}

/// Eigen-product curve together with the Hill tail index of its limit
/// integrand (`+∞` when too few positive samples exist).
pub fn eigen_curve_with_tail(
    kind: QueryKind,
    delta: &DifferenceMatrix,
    dims: &SystemDims,
    snr_grid_db: &[f64],
    trials: u64,
    stream: RandomStream,
) -> Result<(Vec<PepEstimate>, f64)> {
    let (estimates, limits) = run_curve(
        PepMethod::EigenProductMc,
        kind,
        delta,
        dims,
        snr_grid_db,
        trials,
        stream,
        true,
    )?;
    let tail_index = hill_tail_index(&limits, default_hill_k(limits.len())).unwrap_or(f64::INFINITY);
    Ok((estimates, tail_index))
}

/// Fits the decay exponent of `estimates` and compares it with the rank
/// measure for `kind`, refusing when `tail_index` marks the average as
/// divergent.
pub fn assess_exponent(
    kind: QueryKind,
    delta: &DifferenceMatrix,
    n: usize,
    estimates: Vec<PepEstimate>,
    tail_index: f64,
) -> Result<ExponentReport> {
    let measured = decay_exponent(&estimates)?;
    if tail_index < DIVERGENCE_TAIL_THRESHOLD {
        return Err(Error::DivergentAverage {
            tail_index,
            threshold: DIVERGENCE_TAIL_THRESHOLD,
            measured_exponent: measured,
        });
    }
    let predicted = if kind.is_unitary() {
        r_unitary(delta, n)
    } else {
        r_uniform(delta, n)
    };
    Ok(ExponentReport {
        kind,
        predicted,
        measured,
        tail_index,
        estimates,
    })
}

/// Unitary over uniform PEP at one SNR. `ratio` is `None` (censored) when
/// the uniform estimate is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub snr_db: f64,
    pub ratio: Option<f64>,
    pub std_error: Option<f64>,
    pub unitary: PepEstimate,
    pub uniform: PepEstimate,
}

/// `PEP_unitary / PEP_uniform` over `snr_grid_db`. Both curves are driven by
/// the same stream, so they share their `G` draws.
pub fn pep_ratio_curve(
    method: PepMethod,
    delta: &DifferenceMatrix,
    dims: &SystemDims,
    snr_grid_db: &[f64],
    trials: u64,
    stream: RandomStream,
) -> Result<Vec<RatioPoint>> {
    let unitary = pep_curve(method, QueryKind::UnitaryDft, delta, dims, snr_grid_db, trials, stream)?;
    let uniform = pep_curve(method, QueryKind::Uniform, delta, dims, snr_grid_db, trials, stream)?;
    ratio_points(unitary, uniform)
}

/// Pairs two curves on the same grid into ratio points.
pub fn ratio_points(unitary: Vec<PepEstimate>, uniform: Vec<PepEstimate>) -> Result<Vec<RatioPoint>> {
    if unitary.len() != uniform.len() || unitary.iter().zip(&uniform).any(|(a, b)| a.snr_db != b.snr_db) {
        return Err(Error::InvalidParameter {
            name: "snr_grid_db",
            reason: "ratio needs both curves on the same grid".into(),
        });
    }
    Ok(unitary
        .into_iter()
        .zip(uniform)
        .map(|(a, b)| {
            let (ratio, std_error) = if b.value > 0.0 {
                let r = a.value / b.value;
                let rel_a = if a.value > 0.0 { a.std_error / a.value } else { 0.0 };
                let rel_b = b.std_error / b.value;
                (Some(r), Some(r * rel_a.hypot(rel_b)))
            } else {
                (None, None)
            };
            RatioPoint {
                snr_db: a.snr_db,
                ratio,
                std_error,
                unitary: a,
                uniform: b,
            }
        })
        .collect())
}
