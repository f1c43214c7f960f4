//! Quantum and classical chaos toolkit for the Dicke model.
//!
//! The crate covers exact diagonalisation of the even-parity block, level-spacing-ratio
//! statistics, the classical flow (Poincaré sections, maximal Lyapunov exponents),
//! Poincaré–Husimi functions of eigenstates, and the phase-space overlap index used to
//! count mixed eigenstates.

// links the system OpenBLAS/LAPACK
use openblas_src as _;

pub mod classical;
pub mod eigen;
pub mod error;
pub mod grid;
pub mod hamiltonian;
pub mod husimi;
pub mod lyapunov;
pub mod mixed;
pub mod model;
pub mod ode;
pub mod stats;
pub mod spectrum;

pub use error::{DickeError, Result};
pub use hamiltonian::{assemble_hamiltonian, HamiltonianMatrix};
pub use model::{build_even_parity_basis, hilbert_dims, BasisIndex, BasisState, ModelParams};
pub use spectrum::{check_truncation_convergence, diagonalize, ConvergenceReport, Spectrum};
