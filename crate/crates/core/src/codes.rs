//! Tag codebooks and codeword difference matrices.
//!
//! Codewords are `T x L` (slot by tag antenna). Difference matrices are kept
//! transposed, `L x T`, so `delta[(l, t)]` is the difference on antenna `l`
//! in slot `t` and "column `t`" means "slot `t`".

use crate::error::{Error, Result};
use crate::linalg::{numeric_rank, ComplexMatrix, C64, DEFAULT_RANK_TOL};

/// Entries with magnitude at or below this count as zero in support counts.
pub const SUPPORT_TOL: f64 = 1e-12;

const ENERGY_TOL: f64 = 1e-9;
const MAX_UNCODED_BITS: usize = 16;

/// The difference matrix used for the two-antenna tag examples (`L = T = 2`).
pub fn example1_delta() -> ComplexMatrix {
    ComplexMatrix::from_real_rows(&[[1.0, -2.0], [1.5, 2.5]]).expect("static shape")
}

/// Difference of the length-2 BPSK repetition code on a single antenna.
pub fn repetition_delta() -> ComplexMatrix {
    ComplexMatrix::from_real_rows(&[[2.0, 2.0]]).expect("static shape")
}

/// A finite tag codebook of `2^bits_per_block` equal-shape `T x L` codewords,
/// normalized to average energy `T` (unit energy per slot summed over
/// antennas).
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    codewords: Vec<ComplexMatrix>,
    bits_per_block: u32,
}

impl Codebook {
    /// Validates shape, count and the energy normalization.
    pub fn new(codewords: Vec<ComplexMatrix>) -> Result<Self> {
        let bits = Self::check_shape(&codewords)?;
        let t = codewords[0].rows() as f64;
        let energy = average_energy(&codewords);
        if (energy - t).abs() > ENERGY_TOL * t.max(1.0) {
            return Err(Error::InvalidCodebook(format!(
                "average codeword energy {energy} differs from T = {t}"
            )));
        }
        Ok(Self {
            codewords,
            bits_per_block: bits,
        })
    }

    /// Rescales `codewords` to average energy `T`, then validates.
    pub fn normalized(codewords: Vec<ComplexMatrix>) -> Result<Self> {
        Self::check_shape(&codewords)?;
        let t = codewords[0].rows() as f64;
        let energy = average_energy(&codewords);
        if !(energy > 0.0) {
            return Err(Error::InvalidCodebook("all codewords are zero".into()));
        }
        let s = (t / energy).sqrt();
        Self::new(codewords.into_iter().map(|c| c.scale_real(s)).collect())
    }

    fn check_shape(codewords: &[ComplexMatrix]) -> Result<u32> {
        if codewords.len() < 2 {
            return Err(Error::InvalidCodebook(format!(
                "need at least 2 codewords, got {}",
                codewords.len()
            )));
        }
        if !codewords.len().is_power_of_two() {
            return Err(Error::InvalidCodebook(format!(
                "codeword count {} is not a power of two",
                codewords.len()
            )));
        }
        let shape = codewords[0].shape();
        if let Some(bad) = codewords.iter().find(|c| c.shape() != shape) {
            return Err(Error::InvalidCodebook(format!(
                "codeword shapes differ: {shape:?} vs {:?}",
                bad.shape()
            )));
        }
        Ok(codewords.len().trailing_zeros())
    }

    pub fn codewords(&self) -> &[ComplexMatrix] {
        &self.codewords
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn bits_per_block(&self) -> u32 {
        self.bits_per_block
    }

    /// Block length `T`.
    pub fn slots(&self) -> usize {
        self.codewords[0].rows()
    }

    /// Tag antennas `L`.
    pub fn antennas(&self) -> usize {
        self.codewords[0].cols()
    }

    pub fn average_energy(&self) -> f64 {
        average_energy(&self.codewords)
    }
}

fn average_energy(codewords: &[ComplexMatrix]) -> f64 {
    codewords.iter().map(ComplexMatrix::frobenius_norm_sq).sum::<f64>() / codewords.len() as f64
}

/// An `L x T` codeword difference matrix with its support statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct DifferenceMatrix {
    delta: ComplexMatrix,
    column_supports: Vec<usize>,
    nonzero_rows: usize,
    rank: usize,
}

impl DifferenceMatrix {
    /// Wrap an already-oriented `L x T` difference matrix.
    pub fn from_delta(delta: ComplexMatrix) -> Result<Self> {
        let (l, t) = delta.shape();
        let nonzero = |r: usize, c: usize| delta[(r, c)].norm() > SUPPORT_TOL;
        let column_supports = (0..t).map(|c| (0..l).filter(|&r| nonzero(r, c)).count()).collect();
        let nonzero_rows = (0..l).filter(|&r| (0..t).any(|c| nonzero(r, c))).count();
        let rank = numeric_rank(&delta, DEFAULT_RANK_TOL)?;
        Ok(Self {
            delta,
            column_supports,
            nonzero_rows,
            rank,
        })
    }

    pub fn delta(&self) -> &ComplexMatrix {
        &self.delta
    }

    /// Tag antennas `L` (rows).
    pub fn antennas(&self) -> usize {
        self.delta.rows()
    }

    /// Slots `T` (columns).
    pub fn slots(&self) -> usize {
        self.delta.cols()
    }

    /// `L*_t` for every slot: antennas whose symbols differ in slot `t`.
    pub fn column_supports(&self) -> &[usize] {
        &self.column_supports
    }

    /// Antennas whose transmissions differ in at least one slot.
    pub fn nonzero_rows(&self) -> usize {
        self.nonzero_rows
    }

    pub fn nonzero_columns(&self) -> usize {
        self.column_supports.iter().filter(|&&s| s > 0).count()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_zero(&self) -> bool {
        self.nonzero_rows == 0
    }

    pub fn scaled(&self, a: C64) -> Result<Self> {
        Self::from_delta(self.delta.scale(a))
    }
}

/// `Δ = (C - C')ᵀ`, stored `L x T`.
pub fn difference_matrix(c: &ComplexMatrix, c_prime: &ComplexMatrix) -> Result<DifferenceMatrix> {
    DifferenceMatrix::from_delta(c.sub(c_prime)?.transpose())
}

/// Two-word antipodal code realizing a given difference pattern.
#[derive(Clone, Debug)]
pub struct PairwiseCode {
    pub codebook: Codebook,
    /// `s` such that `difference_matrix(C, C') = s · Δ`.
    pub scale: f64,
}

/// Builds `C = +(s/2)·Δᵀ`, `C' = -(s/2)·Δᵀ` with `s` chosen so both codewords
/// have energy `T`.
pub fn pairwise_codebook_from_delta(delta: &DifferenceMatrix) -> Result<PairwiseCode> {
    if delta.is_zero() {
        return Err(Error::ZeroDelta);
    }
    let t = delta.slots() as f64;
    let scale = 2.0 * (t / delta.delta().frobenius_norm_sq()).sqrt();
    let half = delta.delta().transpose().scale_real(scale / 2.0);
    let codebook = Codebook::new(vec![half.clone(), half.scale_real(-1.0)])?;
    Ok(PairwiseCode { codebook, scale })
}

/// BPSK repeated over `t` slots on one antenna: `{+1, -1}` as `t x 1` columns.
pub fn repetition_bpsk(t: usize) -> Result<Codebook> {
    if t == 0 {
        return Err(Error::EmptyMatrix { rows: 0, cols: 1 });
    }
    let one = C64::new(1.0, 0.0);
    Codebook::new(vec![ComplexMatrix::filled(t, 1, one), ComplexMatrix::filled(t, 1, -one)])
}

/// Every `±1/√L` matrix of shape `t x l`. Codeword `k` carries the bits of
/// `k` MSB-first in row-major entry order, bit 0 mapping to `+`.
pub fn uncoded_bpsk(t: usize, l: usize) -> Result<Codebook> {
    if t == 0 || l == 0 {
        return Err(Error::EmptyMatrix { rows: t, cols: l });
    }
    let bits = t * l;
    if bits > MAX_UNCODED_BITS {
        return Err(Error::CodebookTooLarge { bits });
    }
    let amp = 1.0 / (l as f64).sqrt();
    let codewords = (0..1usize << bits)
        .map(|k| {
            ComplexMatrix::from_fn(t, l, |r, c| {
                let bit = (k >> (bits - 1 - (r * l + c))) & 1;
                C64::new(if bit == 0 { amp } else { -amp }, 0.0)
            })
        })
        .collect();
    Codebook::new(codewords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn real(rows: &[&[f64]]) -> ComplexMatrix {
        ComplexMatrix::from_real_rows(rows).unwrap()
    }

    #[test]
    fn identical_codewords_give_zero_delta() {
        let c = real(&[&[1.0, -1.0], &[0.5, 2.0]]);
        let d = difference_matrix(&c, &c).unwrap();
        assert!(d.is_zero());
        assert_eq!(d.rank(), 0);
        assert_eq!(d.column_supports(), &[0, 0]);
    }

    #[test]
    fn example1_statistics() {
        let d = DifferenceMatrix::from_delta(example1_delta()).unwrap();
        assert_eq!(d.column_supports(), &[2, 2]);
        assert_eq!(d.rank(), 2);
        assert_eq!(d.nonzero_rows(), 2);

        // And through the codeword route: Δ = (C - C')ᵀ.
        let c = example1_delta().transpose();
        let d2 = difference_matrix(&c, &ComplexMatrix::zeros(2, 2)).unwrap();
        assert_eq!(d2.delta(), &example1_delta());
    }

    #[test]
    fn example3_statistics() {
        let code = repetition_bpsk(2).unwrap();
        let d = difference_matrix(&code.codewords()[0], &code.codewords()[1]).unwrap();
        assert_eq!(d.delta(), &repetition_delta());
        assert_eq!(d.column_supports(), &[1, 1]);
        assert_eq!(d.rank(), 1);
        assert_eq!(d.nonzero_rows(), 1);
    }

    #[test]
    fn mismatched_codewords() {
        let a = ComplexMatrix::zeros(2, 2);
        let b = ComplexMatrix::zeros(2, 1);
        assert!(matches!(difference_matrix(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn pairwise_from_repetition_delta() {
        let d = DifferenceMatrix::from_delta(repetition_delta()).unwrap();
        let p = pairwise_codebook_from_delta(&d).unwrap();
        assert!((p.scale - 1.0).abs() < 1e-15);
        let [c0, c1] = p.codebook.codewords() else { panic!() };
        assert_eq!(c0, &real(&[&[1.0], &[1.0]]));
        assert_eq!(c1, &real(&[&[-1.0], &[-1.0]]));
    }

    #[test]
    fn pairwise_from_example1() {
        let d = DifferenceMatrix::from_delta(example1_delta()).unwrap();
        let p = pairwise_codebook_from_delta(&d).unwrap();
        // ‖Δ‖² = 1 + 4 + 2.25 + 6.25 = 13.5, T = 2: s = 2·sqrt(2/13.5).
        assert!((p.scale - 2.0 * (2.0f64 / 13.5).sqrt()).abs() < 1e-15);
        let cw = p.codebook.codewords();
        let back = difference_matrix(&cw[0], &cw[1]).unwrap();
        let want = example1_delta().scale_real(p.scale);
        assert!(back.delta().distance_sq(&want).unwrap() < 1e-24);
        assert_eq!(back.column_supports(), d.column_supports());
        assert_eq!(back.rank(), d.rank());
        assert!((p.codebook.average_energy() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pairwise_rejects_zero_delta() {
        let d = DifferenceMatrix::from_delta(ComplexMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(pairwise_codebook_from_delta(&d), Err(Error::ZeroDelta)));
    }

    #[test]
    fn repetition_codebooks() {
        let c = repetition_bpsk(2).unwrap();
        assert_eq!(c.bits_per_block(), 1);
        assert_eq!(c.codewords()[0].frobenius_norm_sq(), 2.0);
        let c1 = repetition_bpsk(1).unwrap();
        let d = difference_matrix(&c1.codewords()[0], &c1.codewords()[1]).unwrap();
        assert_eq!(d.delta(), &real(&[&[2.0]]));
    }

    #[test]
    fn uncoded_enumeration() {
        let c = uncoded_bpsk(1, 1).unwrap();
        assert_eq!(c.codewords(), &[real(&[&[1.0]]), real(&[&[-1.0]])]);
        let c = uncoded_bpsk(2, 1).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c.bits_per_block(), 2);
        // Lexicographic: k = 1 flips the last entry only.
        assert_eq!(c.codewords()[1], real(&[&[1.0], &[-1.0]]));
        assert!(matches!(uncoded_bpsk(4, 5), Err(Error::CodebookTooLarge { bits: 20 })));
    }

    #[test]
    fn uncoded_differences_are_bpsk_steps() {
        for (t, l) in [(1, 2), (2, 2), (3, 1), (2, 3)] {
            let code = uncoded_bpsk(t, l).unwrap();
            assert!((code.average_energy() - t as f64).abs() < 1e-12);
            let step = 2.0 / (l as f64).sqrt();
            for a in code.codewords() {
                for b in code.codewords() {
                    let d = difference_matrix(a, b).unwrap();
                    for z in d.delta().as_slice() {
                        assert!(z.im == 0.0);
                        assert!(z.re.abs() < 1e-12 || (z.re.abs() - step).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn codebook_validation() {
        let a = real(&[&[1.0]]);
        assert!(Codebook::new(vec![a.clone()]).is_err());
        assert!(Codebook::new(vec![a.clone(), a.clone(), a.clone()]).is_err());
        assert!(Codebook::new(vec![a.clone(), real(&[&[1.0, 1.0]])]).is_err());
        assert!(Codebook::new(vec![a.clone(), a.scale_real(2.0)]).is_err());
        let n = Codebook::normalized(vec![a.clone(), a.scale_real(2.0)]).unwrap();
        assert!((n.average_energy() - 1.0).abs() < 1e-12);
        assert!(Codebook::normalized(vec![ComplexMatrix::zeros(1, 1); 2]).is_err());
    }

    proptest! {
        #[test]
        fn difference_invariants(seed in any::<u64>(), t in 1usize..4, l in 1usize..4) {
            use crate::linalg::sample_cn_matrix;
            let mut rng = crate::rng::RandomStream::new(seed).rng();
            let mut a = sample_cn_matrix(t, l, &mut rng);
            let b = sample_cn_matrix(t, l, &mut rng);
            // Plant zeros so supports vary.
            a[(0, 0)] = b[(0, 0)];
            let dab = difference_matrix(&a, &b).unwrap();
            let dba = difference_matrix(&b, &a).unwrap();
            prop_assert_eq!(dab.delta().scale_real(-1.0), dba.delta().clone());
            prop_assert!(difference_matrix(&a, &a).unwrap().is_zero());
            prop_assert!(dab.column_supports().iter().sum::<usize>() <= l * t);
            prop_assert!(dab.rank() <= dab.nonzero_rows().min(dab.nonzero_columns()));
            prop_assert!(dab.rank() <= l.min(t));
        }
    }
}
