//! Link-level simulation of the uplink of a multi-user, multi-antenna access
//! point assisted by several reconfigurable intelligent surfaces (RIS).
//!
//! The crate covers the whole receive chain used for iterative code-aided
//! channel estimation:
//!
//! - [`scenario`] and [`geometry`]: configuration, node placement, path loss
//!   and the resulting large-scale variances.
//! - [`channel`]: block-fading draws, Gauss-Markov evolution and the
//!   cascaded / equivalent channel forms.
//! - [`ldpc`]: regular LDPC construction, systematic encoding and
//!   sum-product decoding with extrinsic output.
//! - [`modem`]: Gray QPSK, encoded-pilot packets, reflection schedules and
//!   the Kronecker-structured `Λ` matrices.
//! - [`detector`]: MMSE soft interference cancellation and the
//!   detector/decoder loop.
//! - [`ris`]: MMSE reflection design with unit-modulus projection.
//! - [`estimator`]: direct and cascaded LMMSE estimation, the iterative
//!   refinement loop and block-to-block tracking.
//! - [`analysis`]: closed-form NMSE, convergence and rate expressions with
//!   Monte Carlo cross-checks.
//! - [`harness`]: seeded Monte Carlo experiment runner with CSV output.

// NaN-rejecting `!(x > 0.0)` guards and index loops over numeric kernels are intended.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod channel;
pub mod detector;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod harness;
pub mod ldpc;
pub mod linalg;
pub mod modem;
pub mod ris;
pub mod scenario;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, C64};
