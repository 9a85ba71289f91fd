//! Classical simulation and verification of a noisy quantum power method.
// `!(x > 0.0)` style guards are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dgauss;
pub mod eigensolver;
pub mod error;
pub mod harness;
pub mod kptree;
pub mod ledger;
pub mod phase;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod tomography;

pub use error::{Error, Result};
pub use harness::{run_experiment, ExperimentConfig, RunOutcome, TrialRecord, Verb};
pub use ledger::{Counter, Formula, QueryLedger};
pub use spectral::{CMatrix, CVector, Field, HermitianMatrix, SpectralDecomposition, C64};
