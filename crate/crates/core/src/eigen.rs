//! LAPACK-backed symmetric eigensolvers (dense and banded) plus banded inverse iteration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{DickeError, Result};
use crate::hamiltonian::HamiltonianMatrix;

fn solver_error(dim: usize, info: i32, context: impl Into<String>) -> DickeError {
    DickeError::Eigensolver {
        dim,
        info,
        context: context.into(),
    }
}

/// Full eigendecomposition of a dense column-major symmetric matrix (`dsyevd`).
///
/// Returns ascending eigenvalues and, if requested, the column-major eigenvector matrix.
pub fn symmetric_eigen(mut a: Vec<f64>, n: usize, vectors: bool) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    assert_eq!(a.len(), n * n, "matrix storage does not match dimension");
    if n == 0 {
        return Ok((Vec::new(), vectors.then(Vec::new)));
    }
    let jobz = if vectors { b'V' } else { b'N' };
    let ni = n as i32;
    let mut w = vec![0.0; n];
    let mut info = 0;
    let mut wq = [0.0];
    let mut iwq = [0i32];
    unsafe {
        lapack::dsyevd(jobz, b'U', ni, &mut a, ni, &mut w, &mut wq, -1, &mut iwq, -1, &mut info);
    }
    if info != 0 {
        return Err(solver_error(n, info, "dsyevd workspace query"));
    }
    let lwork = wq[0] as usize;
    let liwork = iwq[0] as usize;
    let mut work = vec![0.0; lwork.max(1)];
    let mut iwork = vec![0i32; liwork.max(1)];
    unsafe {
        lapack::dsyevd(
            jobz,
            b'U',
            ni,
            &mut a,
            ni,
            &mut w,
            &mut work,
            lwork as i32,
            &mut iwork,
            liwork as i32,
            &mut info,
        );
    }
    if info != 0 {
        return Err(solver_error(n, info, "dsyevd did not converge"));
    }
    Ok((w, vectors.then_some(a)))
}

/// Eigenvalues of a symmetric band matrix given in upper band storage (`dsbev`).
pub fn band_eigenvalues(mut ab: Vec<f64>, n: usize, kd: usize) -> Result<Vec<f64>> {
    let ldab = kd + 1;
    assert_eq!(ab.len(), ldab * n, "band storage does not match dimension");
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut w = vec![0.0; n];
    let mut z = [0.0];
    let mut work = vec![0.0; (3 * n).saturating_sub(2).max(1)];
    let mut info = 0;
    unsafe {
        lapack::dsbev(b'N', b'U', n as i32, kd as i32, &mut ab, ldab as i32, &mut w, &mut z, 1, &mut work, &mut info);
    }
    if info != 0 {
        return Err(solver_error(n, info, "dsbev did not converge"));
    }
    Ok(w)
}

/// Eigenvalues of `h` through its band structure.
pub fn hamiltonian_eigenvalues(h: &HamiltonianMatrix) -> Result<Vec<f64>> {
    let kd = h.bandwidth();
    band_eigenvalues(h.to_upper_band(kd), h.dim(), kd)
}

/// Eigenvectors of `h` for the given (accurate, ascending) eigenvalues by inverse iteration
/// on the banded LU factorisation of `h - σ`.
///
/// Vectors whose eigenvalues lie within `1e-3·‖h‖` of each other are kept mutually
/// orthogonal by modified Gram-Schmidt. Returns a column-major `dim × eigenvalues.len()` block.
pub fn inverse_iteration(h: &HamiltonianMatrix, eigenvalues: &[f64]) -> Result<Vec<f64>> {
    const MAX_ITERS: usize = 8;
    let n = h.dim();
    let kd = h.bandwidth();
    let ldab = 3 * kd + 1;
    let norm = h.norm_inf().max(f64::MIN_POSITIVE);
    let cluster = 1e-3 * norm;
    let target = 1e-11 * norm;
    let accept = 1e-8 * norm;

    // general band storage: A[i, j] at (2kd + i - j) + j*ldab
    let mut base = vec![0.0; ldab * n];
    for (i, &d) in h.diagonal().iter().enumerate() {
        base[2 * kd + i * ldab] = d;
    }
    for &(r, c, v) in h.couplings() {
        base[2 * kd + r - c + c * ldab] = v;
        base[2 * kd + c - r + r * ldab] = v;
    }

    let mut out = vec![0.0; n * eigenvalues.len()];
    let mut lu = vec![0.0; ldab * n];
    let mut ipiv = vec![0i32; n];
    let mut y = vec![0.0; n];
    let mut hy = vec![0.0; n];
    for (k, &ev) in eigenvalues.iter().enumerate() {
        let mut shift = ev;
        let mut bump = 0;
        loop {
            lu.copy_from_slice(&base);
            for i in 0..n {
                lu[2 * kd + i * ldab] -= shift;
            }
            let mut info = 0;
            unsafe {
                lapack::dgbtrf(n as i32, n as i32, kd as i32, kd as i32, &mut lu, ldab as i32, &mut ipiv, &mut info);
            }
            if info == 0 {
                break;
            }
            if info < 0 || bump > 4 {
                return Err(solver_error(n, info, format!("dgbtrf failed at shift {shift}")));
            }
            // exactly singular: perturb the shift slightly
            bump += 1;
            shift = ev + (bump as f64) * 4.0 * f64::EPSILON * norm;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ k as u64);
        for yi in y.iter_mut() {
            *yi = rng.random::<f64>() - 0.5;
        }
        let neighbours: Vec<usize> = (0..k).filter(|&i| (eigenvalues[i] - ev).abs() < cluster).collect();
        let mut residual = f64::INFINITY;
        for iter in 0..MAX_ITERS {
            let mut info = 0;
            unsafe {
                lapack::dgbtrs(
                    b'N',
                    n as i32,
                    kd as i32,
                    kd as i32,
                    1,
                    &lu,
                    ldab as i32,
                    &ipiv,
                    &mut y,
                    n as i32,
                    &mut info,
                );
            }
            if info != 0 {
                return Err(solver_error(n, info, "dgbtrs failed"));
            }
            for _ in 0..2 {
                for &i in &neighbours {
                    let v = &out[i * n..(i + 1) * n];
                    let dot: f64 = v.iter().zip(&y).map(|(a, b)| a * b).sum();
                    for (yj, vj) in y.iter_mut().zip(v) {
                        *yj -= dot * vj;
                    }
                }
            }
            let nrm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(nrm.is_finite() && nrm > 0.0) {
                return Err(solver_error(n, 0, format!("inverse iteration collapsed for eigenvalue {ev}")));
            }
            y.iter_mut().for_each(|v| *v /= nrm);
            h.apply(&y, &mut hy);
            residual = hy.iter().zip(&y).map(|(a, b)| (a - ev * b).powi(2)).sum::<f64>().sqrt();
            if iter >= 1 && residual <= target {
                break;
            }
        }
        if residual > accept {
            return Err(solver_error(
                n,
                0,
                format!("inverse iteration residual {residual:e} for eigenvalue {ev} exceeds {accept:e}"),
            ));
        }
        // fix the sign so the largest component is positive (deterministic layout)
        let (imax, _) = y
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
        let sign = y[imax].signum();
        for (o, v) in out[k * n..(k + 1) * n].iter_mut().zip(&y) {
            *o = sign * v;
        }
    }
    Ok(out)
}
