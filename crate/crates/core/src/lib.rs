//! Simulation core for the M x L x N MIMO backscatter channel.
//!
//! The reader queries the tag with a `T x M` matrix `Q`, the tag load-modulates
//! a `T x L` codeword `C`, and the reader receives
//!
//! ```text
//! R = ((Q H) ∘ C) G + W
//! ```
//!
//! where `H` (`M x L`) and `G` (`L x N`) are the forward and backscatter
//! fading matrices. This crate provides the pieces needed to study how the
//! choice of `Q` (uniform vs unitary) changes error performance:
//!
//! * [`linalg`]: dense complex matrices, SVD and numeric rank.
//! * [`channel`]: channel sampling and the received-signal model.
//! * [`query`]: uniform and unitary query matrices.
//! * [`codes`]: tag codebooks and codeword difference matrices.
//! * [`measure`]: the rank-based `R_unitary` / `R_uniform` measures.
//! * [`pep`]: pairwise error probability estimators and exponent fits.
//! * [`link`]: end-to-end ML-detected BER sweeps.

// Negated float comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod codes;
pub mod error;
pub mod linalg;
pub mod link;
pub mod measure;
pub mod pep;
pub mod query;
pub mod rng;

pub use channel::{ChannelRealization, SystemDims};
pub use codes::{Codebook, DifferenceMatrix};
pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, C64};
pub use link::{BerCurve, BerPoint, SnrSweepConfig};
pub use measure::{MeasureReport, Verdict};
pub use pep::{PepEstimate, PepMethod};
pub use query::{QueryKind, QueryMatrix};
pub use rng::RandomStream;
