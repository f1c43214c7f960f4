//! Dicke Hamiltonian H = ω a†a + ω0 Jz + (2λ/√N) Jx (a† + a) in the even-parity basis.

use crate::error::{DickeError, Result};
use crate::model::{BasisIndex, ModelParams};

/// Real symmetric Hamiltonian stored as its diagonal plus the strictly upper couplings.
///
/// The coupling only connects (n, m) to (n ± 1, m ± 1), so with lexicographic ordering
/// the matrix is banded with half-bandwidth about j + 1.
#[derive(Debug, Clone)]
pub struct HamiltonianMatrix {
    params: ModelParams,
    dim: usize,
    diagonal: Vec<f64>,
    // (row, col, value) with row < col
    couplings: Vec<(usize, usize, f64)>,
}

/// Assemble H for `params` over `basis`.
pub fn assemble_hamiltonian(params: &ModelParams, basis: &BasisIndex) -> Result<HamiltonianMatrix> {
    params.validate()?;
    if !basis.matches(params) {
        return Err(DickeError::Provenance(format!(
            "basis built for j = {}, n_trc = {} but params have j = {}, n_trc = {}",
            basis.j(),
            basis.n_trc(),
            params.j(),
            params.n_trc
        )));
    }
    let j = basis.j() as f64;
    let g = params.lambda / (params.n_atoms as f64).sqrt();
    let diagonal = basis
        .states()
        .iter()
        .map(|s| params.omega * s.n_boson as f64 + params.omega0 * s.m as f64)
        .collect();

    let mut couplings = Vec::new();
    if params.lambda != 0.0 {
        for (col, s) in basis.states().iter().enumerate() {
            // a† raises n -> n + 1; the n -> n - 1 elements follow from symmetry
            let boson = ((s.n_boson + 1) as f64).sqrt();
            let m = s.m as f64;
            for dm in [-1i64, 1] {
                let Some(row) = basis.index(s.n_boson + 1, s.m + dm) else {
                    continue;
                };
                let spin = (j * (j + 1.0) - m * (m + dm as f64)).sqrt();
                // (2λ/√N)·(1/2)·<m±1|J±|m>·<n+1|a†|n>
                let value = g * spin * boson;
                couplings.push((col.min(row), col.max(row), value));
            }
        }
        couplings.sort_by_key(|&(r, c, _)| (c, r));
    }
    Ok(HamiltonianMatrix {
        params: *params,
        dim: basis.len(),
        diagonal,
        couplings,
    })
}

impl HamiltonianMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn couplings(&self) -> &[(usize, usize, f64)] {
        &self.couplings
    }

    /// Largest |row - col| among nonzero couplings.
    pub fn bandwidth(&self) -> usize {
        self.couplings.iter().map(|&(r, c, _)| c - r).max().unwrap_or(0)
    }

    pub fn trace(&self) -> f64 {
        self.diagonal.iter().sum()
    }

    /// Column-major dense copy (symmetric, so row-major is identical).
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim;
        let mut a = vec![0.0; n * n];
        for (i, &d) in self.diagonal.iter().enumerate() {
            a[i + i * n] = d;
        }
        for &(r, c, v) in &self.couplings {
            a[r + c * n] = v;
            a[c + r * n] = v;
        }
        a
    }

    /// Upper band storage in the LAPACK `dsbev` layout with `ldab = kd + 1`.
    pub fn to_upper_band(&self, kd: usize) -> Vec<f64> {
        let ldab = kd + 1;
        let mut ab = vec![0.0; ldab * self.dim];
        for (i, &d) in self.diagonal.iter().enumerate() {
            ab[kd + i * ldab] = d;
        }
        for &(r, c, v) in &self.couplings {
            assert!(c - r <= kd, "coupling outside requested bandwidth");
            ab[kd + r - c + c * ldab] = v;
        }
        ab
    }

    /// y = H x
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, (yi, d)) in y.iter_mut().zip(&self.diagonal).enumerate() {
            *yi = d * x[i];
        }
        for &(r, c, v) in &self.couplings {
            y[r] += v * x[c];
            y[c] += v * x[r];
        }
    }

    /// Max-abs-row-sum norm; equals the 1-norm because H is symmetric.
    pub fn norm_inf(&self) -> f64 {
        let mut rows: Vec<f64> = self.diagonal.iter().map(|d| d.abs()).collect();
        for &(r, c, v) in &self.couplings {
            rows[r] += v.abs();
            rows[c] += v.abs();
        }
        rows.into_iter().fold(0.0, f64::max)
    }
}
