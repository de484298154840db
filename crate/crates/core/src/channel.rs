//! The dyadic backscatter channel `R = ((Q H) ∘ C) G + W`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sample_cn_matrix, ComplexMatrix};
use crate::query::QueryMatrix;

/// Antenna counts and block length of an `M x L x N` link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemDims {
    /// Reader query (transmit) antennas.
    pub m: usize,
    /// Tag antennas.
    pub l: usize,
    /// Reader receive antennas.
    pub n: usize,
    /// Slots per block.
    pub t: usize,
}

impl SystemDims {
    pub fn new(m: usize, l: usize, n: usize, t: usize) -> Result<Self> {
        let dims = Self { m, l, n, t };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("M", self.m), ("L", self.l), ("N", self.n), ("T", self.t)] {
            if v == 0 {
                return Err(Error::InvalidParameter {
                    name: "dims",
                    reason: format!("{name} must be at least 1"),
                });
            }
        }
        Ok(())
    }
}

/// One quasi-static fading draw, held for a whole block.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    /// Forward gains, `M x L`.
    pub h: ComplexMatrix,
    /// Backscatter gains, `L x N`.
    pub g: ComplexMatrix,
}

/// Draws `H` then `G`, each with i.i.d. `CN(0, 1)` entries.
pub fn sample_channel<R: Rng + ?Sized>(dims: &SystemDims, rng: &mut R) -> ChannelRealization {
    let h = sample_cn_matrix(dims.m, dims.l, rng);
    let g = sample_cn_matrix(dims.l, dims.n, rng);
    ChannelRealization { h, g }
}

/// Noiseless received block `((Q H) ∘ C) G`, `T x N`.
pub fn effective_signal(
    q: &QueryMatrix,
    h: &ComplexMatrix,
    c: &ComplexMatrix,
    g: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let forward = q.matrix().matmul(h)?;
    forward.hadamard(c)?.matmul(g)
}

/// Received block with AWGN of per-entry complex variance `noise_std²`.
pub fn backscatter_transmit<R: Rng + ?Sized>(
    q: &QueryMatrix,
    ch: &ChannelRealization,
    c: &ComplexMatrix,
    noise_std: f64,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    check_noise_std(noise_std)?;
    let s = effective_signal(q, &ch.h, c, &ch.g)?;
    add_noise(&s, noise_std, rng)
}

pub(crate) fn check_noise_std(noise_std: f64) -> Result<()> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "noise_std",
            reason: format!("must be finite and non-negative, got {noise_std}"),
        });
    }
    Ok(())
}

pub(crate) fn add_noise<R: Rng + ?Sized>(s: &ComplexMatrix, noise_std: f64, rng: &mut R) -> Result<ComplexMatrix> {
    if noise_std == 0.0 {
        return Ok(s.clone());
    }
    let w = sample_cn_matrix(s.rows(), s.cols(), rng).scale_real(noise_std);
    s.add(&w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{numeric_rank, C64, DEFAULT_RANK_TOL};
    use crate::query::{uniform_query, unitary_query, QueryKind};
    use crate::rng::RandomStream;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn dims_validation() {
        assert!(SystemDims::new(2, 2, 2, 2).is_ok());
        assert!(SystemDims::new(0, 2, 2, 2).is_err());
        assert!(SystemDims::new(2, 2, 2, 0).is_err());
    }

    #[test]
    fn sampled_channels_are_full_rank() {
        let dims = SystemDims::new(2, 2, 2, 2).unwrap();
        let mut rng = RandomStream::new(1).rng();
        let full = (0..1000)
            .filter(|_| {
                let ch = sample_channel(&dims, &mut rng);
                numeric_rank(&ch.h, DEFAULT_RANK_TOL).unwrap() == 2 && numeric_rank(&ch.g, DEFAULT_RANK_TOL).unwrap() == 2
            })
            .count();
        assert!(full >= 999);
    }

    #[test]
    fn scalar_channel_power() {
        let dims = SystemDims::new(1, 1, 1, 1).unwrap();
        let mut rng = RandomStream::new(2).rng();
        let n = 100_000;
        let mean = (0..n).map(|_| sample_channel(&dims, &mut rng).h[(0, 0)].norm_sqr()).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.03, "{mean}");
    }

    #[test]
    fn channel_sampling_is_deterministic() {
        let dims = SystemDims::new(2, 3, 2, 2).unwrap();
        let a = sample_channel(&dims, &mut RandomStream::new(9).rng());
        let b = sample_channel(&dims, &mut RandomStream::new(9).rng());
        assert_eq!(a, b);
        assert_eq!(a.h.shape(), (2, 3));
        assert_eq!(a.g.shape(), (3, 2));
    }

    #[test]
    fn scalar_chain() {
        let q = uniform_query(1, 1).unwrap();
        let (h, cw, g) = (c(0.5, -1.0), c(2.0, 1.0), c(-0.3, 0.7));
        let one = |z| ComplexMatrix::filled(1, 1, z);
        let s = effective_signal(&q, &one(h), &one(cw), &one(g)).unwrap();
        assert!((s[(0, 0)] - h * cw * g).norm() < 1e-15);
    }

    #[test]
    fn zero_codeword_gives_zero_signal() {
        let mut rng = RandomStream::new(3).rng();
        let dims = SystemDims::new(2, 2, 2, 2).unwrap();
        let ch = sample_channel(&dims, &mut rng);
        let q = uniform_query(2, 2).unwrap();
        let s = effective_signal(&q, &ch.h, &ComplexMatrix::zeros(2, 2), &ch.g).unwrap();
        assert_eq!(s, ComplexMatrix::zeros(2, 2));
    }

    /// Entry (t, n) = Σ_l (Σ_m q_tm h_ml) c_tl g_ln.
    fn index_form(q: &ComplexMatrix, h: &ComplexMatrix, cw: &ComplexMatrix, g: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix::from_fn(q.rows(), g.cols(), |t, n| {
            let mut acc = c(0.0, 0.0);
            for l in 0..h.cols() {
                let mut qh = c(0.0, 0.0);
                for m in 0..q.cols() {
                    qh += q[(t, m)] * h[(m, l)];
                }
                acc += qh * cw[(t, l)] * g[(l, n)];
            }
            acc
        })
    }

    #[test]
    fn effective_signal_matches_index_form() {
        let mut rng = RandomStream::new(4).rng();
        for (m, l, n) in [(2, 2, 2), (2, 1, 2), (3, 2, 1)] {
            let dims = SystemDims::new(m, l, n, m).unwrap();
            let q = unitary_query(m, QueryKind::UnitaryRandom, &mut rng).unwrap();
            let ch = sample_channel(&dims, &mut rng);
            let cw = sample_cn_matrix(m, l, &mut rng);
            let s = effective_signal(&q, &ch.h, &cw, &ch.g).unwrap();
            let want = index_form(q.matrix(), &ch.h, &cw, &ch.g);
            assert!(s.distance_sq(&want).unwrap().sqrt() < 1e-12);
        }
    }

    #[test]
    fn effective_signal_is_linear_in_codeword() {
        let mut rng = RandomStream::new(5).rng();
        let dims = SystemDims::new(2, 2, 3, 2).unwrap();
        let q = unitary_query(2, QueryKind::UnitaryDft, &mut rng).unwrap();
        for _ in 0..50 {
            let ch = sample_channel(&dims, &mut rng);
            let c1 = sample_cn_matrix(2, 2, &mut rng);
            let c2 = sample_cn_matrix(2, 2, &mut rng);
            let lhs = effective_signal(&q, &ch.h, &c1.add(&c2).unwrap(), &ch.g).unwrap();
            let rhs = effective_signal(&q, &ch.h, &c1, &ch.g)
                .unwrap()
                .add(&effective_signal(&q, &ch.h, &c2, &ch.g).unwrap())
                .unwrap();
            assert!(lhs.distance_sq(&rhs).unwrap().sqrt() < 1e-12);
        }
    }

    #[test]
    fn single_tag_antenna_is_outer_product() {
        // L = 1: S[t, n] = (QH)[t] * c[t] * g[n].
        let mut rng = RandomStream::new(6).rng();
        let dims = SystemDims::new(2, 1, 3, 2).unwrap();
        let q = unitary_query(2, QueryKind::UnitaryHadamard, &mut rng).unwrap();
        let ch = sample_channel(&dims, &mut rng);
        let cw = sample_cn_matrix(2, 1, &mut rng);
        let s = effective_signal(&q, &ch.h, &cw, &ch.g).unwrap();
        for t in 0..2 {
            let qh = q.matrix()[(t, 0)] * ch.h[(0, 0)] + q.matrix()[(t, 1)] * ch.h[(1, 0)];
            for n in 0..3 {
                assert!((s[(t, n)] - qh * cw[(t, 0)] * ch.g[(0, n)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let q = uniform_query(2, 2).unwrap();
        let h = ComplexMatrix::zeros(3, 2);
        let cw = ComplexMatrix::zeros(2, 2);
        let g = ComplexMatrix::zeros(2, 2);
        assert!(matches!(effective_signal(&q, &h, &cw, &g), Err(Error::DimensionMismatch { .. })));
        let h = ComplexMatrix::zeros(2, 2);
        assert!(effective_signal(&q, &h, &ComplexMatrix::zeros(2, 3), &g).is_err());
        assert!(effective_signal(&q, &h, &cw, &ComplexMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn noiseless_transmit_equals_signal() {
        let mut rng = RandomStream::new(7).rng();
        let dims = SystemDims::new(2, 2, 2, 2).unwrap();
        let q = uniform_query(2, 2).unwrap();
        let ch = sample_channel(&dims, &mut rng);
        let cw = sample_cn_matrix(2, 2, &mut rng);
        let r = backscatter_transmit(&q, &ch, &cw, 0.0, &mut rng).unwrap();
        assert_eq!(r, effective_signal(&q, &ch.h, &cw, &ch.g).unwrap());
        assert!(backscatter_transmit(&q, &ch, &cw, -1.0, &mut rng).is_err());
    }

    #[test]
    fn pure_noise_variance() {
        let mut rng = RandomStream::new(8).rng();
        let dims = SystemDims::new(1, 1, 1, 1).unwrap();
        let q = uniform_query(1, 1).unwrap();
        let zero = ComplexMatrix::zeros(1, 1);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let ch = sample_channel(&dims, &mut rng);
            acc += backscatter_transmit(&q, &ch, &zero, 1.0, &mut rng).unwrap()[(0, 0)].norm_sqr();
        }
        assert!((acc / n as f64 - 1.0).abs() < 0.03);
    }

    #[test]
    fn noise_power_per_entry() {
        let mut rng = RandomStream::new(10).rng();
        let dims = SystemDims::new(2, 2, 2, 2).unwrap();
        let q = uniform_query(2, 2).unwrap();
        let n = 10_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let ch = sample_channel(&dims, &mut rng);
            let cw = sample_cn_matrix(2, 2, &mut rng);
            let s = effective_signal(&q, &ch.h, &cw, &ch.g).unwrap();
            let r = backscatter_transmit(&q, &ch, &cw, 0.1, &mut rng).unwrap();
            acc += r.distance_sq(&s).unwrap() / 4.0;
        }
        let mean = acc / n as f64;
        assert!((mean - 0.01).abs() < 0.0005, "{mean}");
    }
}
