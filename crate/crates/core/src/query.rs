//! Reader query matrices.
//!
//! A uniform query sends the same `1/√M` carrier from every antenna in every
//! slot, so `Q H` has identical rows. A unitary query (`T == M`, `Q Qᴴ = I`)
//! turns the static forward channel into one that changes every slot.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::SystemDims;
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, C64};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryKind {
    #[serde(rename = "uniform")]
    Uniform,
    #[default]
    #[serde(rename = "dft")]
    UnitaryDft,
    #[serde(rename = "hadamard")]
    UnitaryHadamard,
    #[serde(rename = "random-unitary")]
    UnitaryRandom,
}

impl QueryKind {
    pub const ALL: [QueryKind; 4] = [
        QueryKind::Uniform,
        QueryKind::UnitaryDft,
        QueryKind::UnitaryHadamard,
        QueryKind::UnitaryRandom,
    ];

    pub fn is_unitary(self) -> bool {
        !matches!(self, QueryKind::Uniform)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QueryKind::Uniform => "uniform",
            QueryKind::UnitaryDft => "dft",
            QueryKind::UnitaryHadamard => "hadamard",
            QueryKind::UnitaryRandom => "random-unitary",
        }
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QueryKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidKind {
                op: "parse query kind",
                kind: s.to_owned(),
            })
    }
}

/// A `T x M` query matrix together with the construction that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryMatrix {
    matrix: ComplexMatrix,
    kind: QueryKind,
}

impl QueryMatrix {
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn kind(&self) -> QueryKind {
        self.kind
    }

    /// Number of slots `T`.
    pub fn slots(&self) -> usize {
        self.matrix.rows()
    }

    /// Number of query antennas `M`.
    pub fn antennas(&self) -> usize {
        self.matrix.cols()
    }
}

pub fn uniform_query(t: usize, m: usize) -> Result<QueryMatrix> {
    if t == 0 || m == 0 {
        return Err(Error::EmptyMatrix { rows: t, cols: m });
    }
    let v = C64::new(1.0 / (m as f64).sqrt(), 0.0);
    Ok(QueryMatrix {
        matrix: ComplexMatrix::filled(t, m, v),
        kind: QueryKind::Uniform,
    })
}

/// `M x M` unitary query. The DFT kind uses entry `(t, m) = e^{-2πi·t·m/M}/√M`
/// with zero-based indices; the Hadamard kind is the normalized Sylvester
/// construction; the random kind draws from `rng` (unused otherwise).
pub fn unitary_query<R: Rng + ?Sized>(m: usize, kind: QueryKind, rng: &mut R) -> Result<QueryMatrix> {
    if m == 0 {
        return Err(Error::EmptyMatrix { rows: 0, cols: 0 });
    }
    let matrix = match kind {
        QueryKind::Uniform => {
            return Err(Error::InvalidKind {
                op: "unitary_query",
                kind: kind.to_string(),
            })
        }
        QueryKind::UnitaryDft => dft_matrix(m),
        QueryKind::UnitaryHadamard => sylvester_hadamard(m)?,
        QueryKind::UnitaryRandom => linalg::random_unitary(m, rng)?,
    };
    Ok(QueryMatrix { matrix, kind })
}

/// Query matrix of `kind` for the given system; unitary kinds require `T == M`.
pub fn build_query<R: Rng + ?Sized>(kind: QueryKind, dims: &SystemDims, rng: &mut R) -> Result<QueryMatrix> {
    if kind.is_unitary() {
        if dims.t != dims.m {
            return Err(Error::BlockLength { t: dims.t, m: dims.m });
        }
        unitary_query(dims.m, kind, rng)
    } else {
        uniform_query(dims.t, dims.m)
    }
}

fn dft_matrix(m: usize) -> ComplexMatrix {
    let norm = 1.0 / (m as f64).sqrt();
    ComplexMatrix::from_fn(m, m, |t, k| {
        // Reduce the exponent mod M first so large products stay exact.
        let angle = -2.0 * PI * ((t * k) % m) as f64 / m as f64;
        C64::from_polar(norm, angle)
    })
}

fn sylvester_hadamard(m: usize) -> Result<ComplexMatrix> {
    if !m.is_power_of_two() {
        return Err(Error::HadamardDimension(m));
    }
    let norm = 1.0 / (m as f64).sqrt();
    Ok(ComplexMatrix::from_fn(m, m, |r, c| {
        let sign = if (r & c).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        C64::new(sign * norm, 0.0)
    }))
}

/// `true` iff `‖Q Qᴴ - I‖_F < tol`.
pub fn verify_unitary(q: &QueryMatrix, tol: f64) -> Result<bool> {
    let defect = linalg::unitarity_defect(q.matrix()).map_err(|e| match e {
        Error::NonSquare { rows, cols, .. } => Error::NonSquare {
            op: "verify_unitary",
            rows,
            cols,
        },
        other => other,
    })?;
    Ok(defect < tol)
}

/// The effective forward process `Q H` seen by the tag, `T x L`.
pub fn effective_forward(q: &QueryMatrix, h: &ComplexMatrix) -> Result<ComplexMatrix> {
    q.matrix().matmul(h)
}
