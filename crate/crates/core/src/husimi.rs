//! Glauber/Bloch coherent-state overlaps and Poincaré–Husimi functions of eigenstates.
//!
//! Q_n(q2, p2) = |⟨α, ξ|E_n⟩|² is evaluated on the section p1 = 0, q1 = q1,+(ℰ) and then
//! normalised so that Σ Q / 𝒩 = 1 over the 𝒩 accessible cells.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::classical::{lift_to_section, PhasePoint};
use crate::error::{DickeError, Result};
use crate::grid::{PolarGrid, PolarGridField};
use crate::model::{BasisIndex, ModelParams};
use crate::spectrum::Spectrum;

/// Cells per GEMM block.
const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentParams {
    pub alpha: Complex64,
    pub xi: Complex64,
}

impl CoherentParams {
    /// α = √(j/2)(q1 + i p1), ξ = (q2 + i p2)/√(4 − p2² − q2²).
    pub fn from_phase_point(x: &PhasePoint, j: i64) -> Result<Self> {
        let rho2 = x.atomic_radius_sq();
        if !(rho2 < 4.0) {
            return Err(DickeError::Domain(format!("ξ undefined on the atomic boundary (p2^2 + q2^2 = {rho2})")));
        }
        let s = (0.5 * j as f64).sqrt();
        Ok(Self {
            alpha: Complex64::new(s * x.q1, s * x.p1),
            xi: Complex64::new(x.q2, x.p2) / (4.0 - rho2).sqrt(),
        })
    }
}

/// ln k! for k = 0..=n.
/// Magnitudes c_0 = e^{ln_start}, c_k = c_{k−1}·ratio_k, kept as mantissa × e^{offset} so
/// neither the start value nor the partial products under- or overflow. Relative error
/// grows like k·ε rather than with the size of accumulated log-factorials.
fn scaled_products(ln_start: f64, ratios: impl Iterator<Item = f64>) -> Vec<f64> {
    let (mut m, mut offset) = (1.0f64, ln_start);
    let mut out = vec![offset.exp()];
    for r in ratios {
        m *= r;
        if !(1e-150..=1e150).contains(&m) {
            if m == 0.0 {
                out.push(0.0);
                continue;
            }
            offset += m.ln();
            m = 1.0;
        }
        out.push(m * offset.exp());
    }
    out
}

/// ⟨n|α⟩ for n = 0..=n_max.
pub fn boson_overlaps(alpha: Complex64, n_max: usize) -> Vec<Complex64> {
    let a = alpha.norm();
    if a == 0.0 {
        let mut out = vec![Complex64::new(0.0, 0.0); n_max + 1];
        out[0] = Complex64::new(1.0, 0.0);
        return out;
    }
    let phase = alpha.arg();
    scaled_products(-0.5 * a * a, (1..=n_max).map(|n| a / (n as f64).sqrt()))
        .into_iter()
        .enumerate()
        .map(|(n, mag)| Complex64::from_polar(mag, n as f64 * phase))
        .collect()
}

/// ⟨n|α⟩ = e^{−|α|²/2} αⁿ / √(n!)
pub fn boson_overlap(alpha: Complex64, n: usize) -> Complex64 {
    boson_overlaps(alpha, n)[n]
}

/// ⟨j, m|ξ⟩ for m = −j..=j (index m + j).
pub fn spin_overlaps(xi: Complex64, j: i64) -> Vec<Complex64> {
    let two_j = (2 * j) as usize;
    let x = xi.norm();
    if x == 0.0 {
        let mut out = vec![Complex64::new(0.0, 0.0); two_j + 1];
        out[0] = Complex64::new(1.0, 0.0);
        return out;
    }
    let phase = xi.arg();
    let jf = j as f64;
    // start from the end whose magnitude is at least 2^{−j}
    let mags = if x <= 1.0 {
        scaled_products(
            -jf * (x * x).ln_1p(),
            (1..=two_j).map(|k| x * (((two_j - k + 1) as f64) / k as f64).sqrt()),
        )
    } else {
        let mut m = scaled_products(
            -jf * (1.0 / (x * x)).ln_1p(),
            (1..=two_j).map(|i| (((two_j - i + 1) as f64) / i as f64).sqrt() / x),
        );
        m.reverse();
        m
    };
    mags.into_iter()
        .enumerate()
        .map(|(k, mag)| Complex64::from_polar(mag, k as f64 * phase))
        .collect()
}

/// ⟨j, m|ξ⟩ = √C(2j, j+m) ξ^{j+m} / (1 + |ξ|²)^j
pub fn spin_overlap(xi: Complex64, j: i64, m: i64) -> Complex64 {
    assert!(m.abs() <= j, "|m| must not exceed j");
    spin_overlaps(xi, j)[(m + j) as usize]
}

/// Shared section surface: the accessible cells at ℰ and their coherent parameters.
#[derive(Debug, Clone)]
pub struct HusimiSurface {
    pub grid: PolarGrid,
    pub energy: f64,
    pub params: ModelParams,
    cells: Vec<(usize, CoherentParams)>,
}

impl HusimiSurface {
    pub fn new(energy: f64, params: &ModelParams, grid: &PolarGrid) -> Result<Self> {
        params.validate()?;
        let j = params.j();
        let mut cells = Vec::new();
        for c in grid.cells() {
            if let Some(x) = lift_to_section(c.q2, c.p2, energy, params) {
                cells.push((c.index, CoherentParams::from_phase_point(&x, j)?));
            }
        }
        if cells.is_empty() {
            return Err(DickeError::EmptyShell { energy });
        }
        Ok(Self {
            grid: *grid,
            energy,
            params: *params,
            cells,
        })
    }

    pub fn accessible_count(&self) -> usize {
        self.cells.len()
    }

    /// Unnormalised |⟨α, ξ|ψ_k⟩|² per accessible cell for the column-major `dim × k` block.
    ///
    /// Returned row-major as `cells × k`.
    fn raw_q(&self, basis: &BasisIndex, states: &[f64], k: usize) -> Vec<f64> {
        let d = basis.len();
        let j = basis.j();
        let mut out = vec![0.0; self.cells.len() * k];
        let mut w_re = vec![0.0; CHUNK * d];
        let mut w_im = vec![0.0; CHUNK * d];
        let mut a_re = vec![0.0; CHUNK * k];
        let mut a_im = vec![0.0; CHUNK * k];
        for (chunk_no, chunk) in self.cells.chunks(CHUNK).enumerate() {
            let rows = chunk.len();
            // W[c, idx] = ⟨n|α_c⟩⟨j,m|ξ_c⟩ in column-major rows × d
            for (c, (_, cp)) in chunk.iter().enumerate() {
                let b = boson_overlaps(cp.alpha, basis.n_trc());
                let s = spin_overlaps(cp.xi, j);
                for (idx, st) in basis.states().iter().enumerate() {
                    let w = b[st.n_boson] * s[(st.m + j) as usize];
                    w_re[c + idx * rows] = w.re;
                    w_im[c + idx * rows] = w.im;
                }
            }
            let (m, n, kk) = (rows as i32, k as i32, d as i32);
            unsafe {
                blas::dgemm(b'N', b'N', m, n, kk, 1.0, &w_re[..rows * d], m, states, kk, 0.0, &mut a_re[..rows * k], m);
                blas::dgemm(b'N', b'N', m, n, kk, 1.0, &w_im[..rows * d], m, states, kk, 0.0, &mut a_im[..rows * k], m);
            }
            let base = chunk_no * CHUNK;
            for c in 0..rows {
                for s in 0..k {
                    let (re, im) = (a_re[c + s * rows], a_im[c + s * rows]);
                    out[(base + c) * k + s] = re * re + im * im;
                }
            }
        }
        out
    }

    /// Normalised Husimi fields of the columns of a `dim × k` column-major block.
    pub fn fields(&self, basis: &BasisIndex, states: &[f64], k: usize) -> Result<Vec<HusimiField>> {
        if !basis.matches(&self.params) {
            return Err(DickeError::Provenance("basis does not match the surface parameters".into()));
        }
        let d = basis.len();
        if states.len() != d * k {
            return Err(DickeError::Provenance(format!(
                "state block has {} entries, expected {d} x {k}",
                states.len()
            )));
        }
        for s in 0..k {
            let norm = states[s * d..(s + 1) * d].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(DickeError::param("state", "zero vector has no Husimi function"));
            }
            if (norm - 1.0).abs() > 1e-8 {
                return Err(DickeError::param("state", format!("not normalised (norm {norm})")));
            }
        }
        let raw = self.raw_q(basis, states, k);
        let n_acc = self.cells.len() as f64;
        let mut out = Vec::with_capacity(k);
        for s in 0..k {
            let raw_sum: f64 = (0..self.cells.len()).map(|c| raw[c * k + s]).sum();
            if !(raw_sum > 0.0) {
                return Err(DickeError::Domain(format!(
                    "state {s} has no weight on the section at E = {}",
                    self.energy
                )));
            }
            let scale = n_acc / raw_sum;
            let mut values = vec![None; self.grid.len()];
            for (c, &(cell, _)) in self.cells.iter().enumerate() {
                values[cell] = Some(raw[c * k + s] * scale);
            }
            out.push(HusimiField {
                field: PolarGridField {
                    grid: self.grid,
                    values,
                },
                state_index: None,
                epsilon: None,
                energy: self.energy,
                raw_sum,
                accessible: self.cells.len(),
            });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HusimiField {
    pub field: PolarGridField<f64>,
    pub state_index: Option<usize>,
    pub epsilon: Option<f64>,
    /// Window energy ℰ defining the section surface.
    pub energy: f64,
    /// Σ of the unnormalised Q over accessible cells.
    pub raw_sum: f64,
    /// 𝒩
    pub accessible: usize,
}

impl HusimiField {
    /// (1/𝒩) Σ Q
    pub fn discrete_norm(&self) -> f64 {
        self.field.accessible().map(|(_, q)| q).sum::<f64>() / self.accessible as f64
    }
}

/// Poincaré–Husimi function of a single normalised state over `basis`.
pub fn poincare_husimi(
    state: &[f64],
    basis: &BasisIndex,
    energy: f64,
    params: &ModelParams,
    grid: &PolarGrid,
) -> Result<HusimiField> {
    if !basis.matches(params) {
        return Err(DickeError::Provenance("basis does not match params".into()));
    }
    let surface = HusimiSurface::new(energy, params, grid)?;
    Ok(surface.fields(basis, state, 1)?.remove(0))
}

/// Husimi fields for the stored eigenstates `indices` of `spectrum`.
pub fn husimi_fields(
    spectrum: &Spectrum,
    basis: &BasisIndex,
    indices: &[usize],
    surface: &HusimiSurface,
) -> Result<Vec<HusimiField>> {
    if basis.digest() != spectrum.basis_digest() || spectrum.params() != &surface.params {
        return Err(DickeError::Provenance("spectrum, basis and surface come from different runs".into()));
    }
    let d = spectrum.dim();
    let mut block = Vec::with_capacity(d * indices.len());
    for &n in indices {
        let v = spectrum
            .vector(n)
            .ok_or_else(|| DickeError::Provenance(format!("eigenvector {n} was not stored")))?;
        block.extend_from_slice(v);
    }
    let mut fields = surface.fields(basis, &block, indices.len())?;
    for (f, &n) in fields.iter_mut().zip(indices) {
        f.state_index = Some(n);
        f.epsilon = Some(spectrum.epsilon(n));
    }
    Ok(fields)
}
