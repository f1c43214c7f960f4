//! Spectra of the even-parity block and truncation-convergence checks.

use serde::{Deserialize, Serialize};

use crate::eigen;
use crate::error::{DickeError, Result};
use crate::hamiltonian::{assemble_hamiltonian, HamiltonianMatrix};
use crate::model::{build_even_parity_basis, ModelParams};

/// Default tolerance on |Δε| between two truncations.
pub const CONVERGENCE_TOL: f64 = 1e-6;

/// Ascending eigenvalues E_n of one run plus eigenvectors for a subset of states.
///
/// A full dense diagonalisation stores every column; windowed runs store only the
/// columns of the requested states. Eigenvectors are expressed over the `BasisIndex`
/// that produced the Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    params: ModelParams,
    basis_digest: u64,
    dim: usize,
    eigenvalues: Vec<f64>,
    vector_indices: Vec<usize>,
    vectors: Vec<f64>,
}

impl Spectrum {
    /// Rebuild a spectrum from stored parts, checking shapes and ordering.
    pub fn from_parts(
        params: ModelParams,
        basis_digest: u64,
        eigenvalues: Vec<f64>,
        vector_indices: Vec<usize>,
        vectors: Vec<f64>,
    ) -> Result<Self> {
        let dim = eigenvalues.len();
        if vectors.len() != dim * vector_indices.len() {
            return Err(DickeError::Provenance(format!(
                "eigenvector block has {} entries, expected {} x {}",
                vectors.len(),
                dim,
                vector_indices.len()
            )));
        }
        if !eigenvalues.windows(2).all(|w| w[0] <= w[1]) {
            return Err(DickeError::Provenance("eigenvalues are not ascending".into()));
        }
        if !vector_indices.windows(2).all(|w| w[0] < w[1]) || vector_indices.last().is_some_and(|&i| i >= dim) {
            return Err(DickeError::Provenance("eigenvector indices are not ascending or out of range".into()));
        }
        Ok(Self {
            params,
            basis_digest,
            dim,
            eigenvalues,
            vector_indices,
            vectors,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn basis_digest(&self) -> u64 {
        self.basis_digest
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Rescaled energies ε_n = E_n / j.
    pub fn epsilons(&self) -> Vec<f64> {
        let j = self.params.j() as f64;
        self.eigenvalues.iter().map(|e| e / j).collect()
    }

    pub fn epsilon(&self, n: usize) -> f64 {
        self.eigenvalues[n] / self.params.j() as f64
    }

    pub fn vector_indices(&self) -> &[usize] {
        &self.vector_indices
    }

    /// Column-major block of the stored eigenvectors.
    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn vector(&self, n: usize) -> Option<&[f64]> {
        let k = self.vector_indices.binary_search(&n).ok()?;
        Some(&self.vectors[k * self.dim..(k + 1) * self.dim])
    }
}

/// Dense diagonalisation of the whole block; every eigenvector is stored.
pub fn diagonalize(h: &HamiltonianMatrix) -> Result<Spectrum> {
    let n = h.dim();
    let (eigenvalues, vectors) = eigen::symmetric_eigen(h.to_dense(), n, true)?;
    let vectors = vectors.unwrap_or_default();
    check_residuals(h, &eigenvalues, &vectors, 1e-8)?;
    let basis = build_even_parity_basis(h.params())?;
    Spectrum::from_parts(*h.params(), basis.digest(), eigenvalues, (0..n).collect(), vectors)
}

/// All eigenvalues from the banded solver; no eigenvectors.
pub fn eigenvalues_only(h: &HamiltonianMatrix) -> Result<Spectrum> {
    let eigenvalues = eigen::hamiltonian_eigenvalues(h)?;
    let basis = build_even_parity_basis(h.params())?;
    Spectrum::from_parts(*h.params(), basis.digest(), eigenvalues, Vec::new(), Vec::new())
}

/// All eigenvalues plus eigenvectors of the states with ε_n in the closed interval `[lo, hi]`.
pub fn diagonalize_window(h: &HamiltonianMatrix, lo: f64, hi: f64) -> Result<Spectrum> {
    let eigenvalues = eigen::hamiltonian_eigenvalues(h)?;
    let j = h.params().j() as f64;
    let indices: Vec<usize> = (0..eigenvalues.len())
        .filter(|&i| (lo..=hi).contains(&(eigenvalues[i] / j)))
        .collect();
    let selected: Vec<f64> = indices.iter().map(|&i| eigenvalues[i]).collect();
    let vectors = eigen::inverse_iteration(h, &selected)?;
    let basis = build_even_parity_basis(h.params())?;
    Spectrum::from_parts(*h.params(), basis.digest(), eigenvalues, indices, vectors)
}

/// Assemble and band-diagonalise `params` (eigenvalues only).
pub fn spectrum_for(params: &ModelParams) -> Result<Spectrum> {
    let basis = build_even_parity_basis(params)?;
    let h = assemble_hamiltonian(params, &basis)?;
    eigenvalues_only(&h)
}

fn check_residuals(h: &HamiltonianMatrix, eigenvalues: &[f64], vectors: &[f64], rel: f64) -> Result<()> {
    let n = h.dim();
    let bound = rel * h.norm_inf().max(f64::MIN_POSITIVE);
    let mut hv = vec![0.0; n];
    for (k, &e) in eigenvalues.iter().enumerate() {
        let v = &vectors[k * n..(k + 1) * n];
        h.apply(v, &mut hv);
        let res = hv.iter().zip(v).map(|(a, b)| (a - e * b).powi(2)).sum::<f64>().sqrt();
        if !(res <= bound) {
            return Err(DickeError::Eigensolver {
                dim: n,
                info: 0,
                context: format!(
                    "residual {res:e} of state {k} exceeds {bound:e} (omega = {}, omega0 = {}, lambda = {}, N = {}, n_trc = {})",
                    h.params().omega,
                    h.params().omega0,
                    h.params().lambda,
                    h.params().n_atoms,
                    h.params().n_trc
                ),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub window: (f64, f64),
    pub n_trc: usize,
    pub n_trc_step: usize,
    pub states: usize,
    pub max_abs_diff: f64,
    pub tolerance: f64,
    pub converged: bool,
}

/// Compare the rescaled levels of two truncations inside `window`.
///
/// Each level of `base` in the window is paired with the nearest level of `refined`.
pub fn compare_truncations(
    base_eps: &[f64],
    refined_eps: &[f64],
    window: (f64, f64),
    n_trc: usize,
    n_trc_step: usize,
) -> Result<ConvergenceReport> {
    let (lo, hi) = window;
    let inside: Vec<f64> = base_eps.iter().copied().filter(|e| (lo..=hi).contains(e)).collect();
    if inside.is_empty() {
        return Err(DickeError::EmptyWindow { lo, hi });
    }
    let mut max_abs_diff: f64 = 0.0;
    for e in &inside {
        let k = refined_eps.partition_point(|x| x < e);
        let mut best = f64::INFINITY;
        for c in [k.wrapping_sub(1), k] {
            if let Some(x) = refined_eps.get(c) {
                best = best.min((x - e).abs());
            }
        }
        max_abs_diff = max_abs_diff.max(best);
    }
    Ok(ConvergenceReport {
        window,
        n_trc,
        n_trc_step,
        states: inside.len(),
        max_abs_diff,
        tolerance: CONVERGENCE_TOL,
        converged: max_abs_diff < CONVERGENCE_TOL,
    })
}

pub fn check_truncation_convergence(
    params: &ModelParams,
    window: (f64, f64),
    n_trc_step: usize,
) -> Result<ConvergenceReport> {
    if !(window.0 <= window.1) {
        return Err(DickeError::Domain(format!("window [{}, {}] is empty", window.0, window.1)));
    }
    if n_trc_step == 0 || !n_trc_step.is_multiple_of(2) {
        return Err(DickeError::param("n_trc_step", "must be a positive even integer"));
    }
    let base = spectrum_for(params)?.epsilons();
    let refined = spectrum_for(&params.with_n_trc(params.n_trc + n_trc_step))?.epsilons();
    compare_truncations(&base, &refined, window, params.n_trc, n_trc_step)
}

/// Number of leading levels whose index-matched values agree between two truncations within `tol`.
pub fn convergence_ceiling(base: &[f64], refined: &[f64], tol: f64) -> usize {
    base.iter()
        .zip(refined)
        .position(|(a, b)| (a - b).abs() >= tol)
        .unwrap_or(base.len().min(refined.len()))
}
