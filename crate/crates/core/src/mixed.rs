//! Chaos masks, the phase-space overlap index M_n, P(M), mixed fractions R_m, ensemble
//! scans over system size and power-law fits of ⟨R_m⟩ against ⟨N⟩.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DickeError, Result};
use crate::grid::{PolarGrid, PolarGridField};
use crate::hamiltonian::assemble_hamiltonian;
use crate::husimi::{husimi_fields, HusimiField, HusimiSurface};
use crate::lyapunov::LyapunovField;
use crate::model::{build_even_parity_basis, ModelParams};
use crate::spectrum::{compare_truncations, diagonalize_window, spectrum_for, ConvergenceReport, Spectrum};
use crate::stats::Histogram;

pub const DEFAULT_LAMBDA_THRESHOLD: f64 = 0.02;
pub const DEFAULT_DELTA_E: f64 = 0.04;
pub const DEFAULT_M_BINS: usize = 20;
pub const DEFAULT_MC: f64 = 0.8;

/// C = +1 on chaotic cells, −1 on the rest of the accessible shell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosMask {
    pub field: PolarGridField<i8>,
    pub threshold: f64,
    pub energy: f64,
    pub lambda: f64,
}

impl ChaosMask {
    pub fn chaotic_fraction(&self) -> f64 {
        let n = self.field.accessible_count();
        let chaotic = self.field.accessible().filter(|&(_, c)| c > 0).count();
        chaotic as f64 / n.max(1) as f64
    }
}

pub fn chaos_mask(field: &LyapunovField, threshold: f64) -> Result<ChaosMask> {
    if !(threshold > 0.0) {
        return Err(DickeError::param("threshold", "must be positive"));
    }
    let values = field
        .field
        .values
        .iter()
        .map(|v| v.map(|l| if l > threshold { 1i8 } else { -1 }))
        .collect();
    Ok(ChaosMask {
        field: PolarGridField {
            grid: field.field.grid,
            values,
        },
        threshold,
        energy: field.energy,
        lambda: field.params.lambda,
    })
}

/// M = (1/𝒩) Σ Q·C over accessible cells, clamped to [−1, 1] against round-off.
pub fn overlap_index(q: &HusimiField, mask: &ChaosMask) -> Result<f64> {
    if q.field.grid != mask.field.grid {
        return Err(DickeError::Provenance("Husimi field and chaos mask use different grids".into()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, (qv, cv)) in q.field.values.iter().zip(&mask.field.values).enumerate() {
        match (qv, cv) {
            (Some(qv), Some(cv)) => {
                sum += qv * f64::from(*cv);
                n += 1;
            }
            (None, None) => {}
            _ => {
                return Err(DickeError::Provenance(format!(
                    "cell {i} is accessible in only one of the Husimi field and the chaos mask"
                )))
            }
        }
    }
    if n == 0 {
        return Err(DickeError::EmptyShell { energy: q.energy });
    }
    Ok((sum / n as f64).clamp(-1.0, 1.0))
}

/// Closed window [ℰ − δE, ℰ + 2δE].
pub fn window_bounds(energy: f64, delta_e: f64) -> (f64, f64) {
    (energy - delta_e, energy + 2.0 * delta_e)
}

/// Indices n with ε_n in the closed window [ℰ − δE, ℰ + 2δE].
pub fn select_window_states(epsilons: &[f64], energy: f64, delta_e: f64) -> Result<Vec<usize>> {
    if !(delta_e > 0.0) {
        return Err(DickeError::param("delta_e", "must be positive"));
    }
    let (lo, hi) = window_bounds(energy, delta_e);
    let sel: Vec<usize> = (0..epsilons.len()).filter(|&i| (lo..=hi).contains(&epsilons[i])).collect();
    if sel.is_empty() {
        return Err(DickeError::EmptyWindow { lo, hi });
    }
    Ok(sel)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapRecord {
    pub n_atoms: usize,
    pub index: usize,
    pub epsilon: f64,
    pub m: f64,
}

/// Density histogram of M on [−1, 1].
pub fn index_distribution(records: &[OverlapRecord], bins: usize) -> Result<Histogram> {
    let ms: Vec<f64> = records.iter().map(|r| r.m).collect();
    Histogram::new(&ms, -1.0, 1.0, bins)
}

/// Fraction of values with |M| ≤ M_c.
pub fn mixed_fraction(ms: &[f64], mc: f64) -> Result<f64> {
    if !(mc > 0.0 && mc < 1.0) {
        return Err(DickeError::param("mc", "cutoff must lie in (0, 1)"));
    }
    if ms.is_empty() {
        return Err(DickeError::InsufficientData("no overlap records".into()));
    }
    Ok(ms.iter().filter(|m| m.abs() <= mc).count() as f64 / ms.len() as f64)
}

/// Overlap records for the given stored eigenstates.
pub fn window_overlaps(
    spectrum: &Spectrum,
    indices: &[usize],
    surface: &HusimiSurface,
    mask: &ChaosMask,
) -> Result<(Vec<OverlapRecord>, Vec<HusimiField>)> {
    let basis = build_even_parity_basis(spectrum.params())?;
    let fields = husimi_fields(spectrum, &basis, indices, surface)?;
    let records = fields
        .iter()
        .zip(indices)
        .map(|(f, &n)| {
            Ok(OverlapRecord {
                n_atoms: spectrum.params().n_atoms,
                index: n,
                epsilon: spectrum.epsilon(n),
                m: overlap_index(f, mask)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((records, fields))
}

/// N values n_min, n_min + step, …, n_max.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ensemble {
    pub n_min: usize,
    pub n_max: usize,
    pub step: usize,
}

impl Ensemble {
    pub fn new(n_min: usize, n_max: usize, step: usize) -> Result<Self> {
        if step == 0 || !step.is_multiple_of(2) {
            return Err(DickeError::param("ensembles", "step must be a positive even integer"));
        }
        if n_min == 0 || !n_min.is_multiple_of(2) || n_max < n_min {
            return Err(DickeError::param("ensembles", format!("bad range {n_min}:{n_max}")));
        }
        Ok(Self { n_min, n_max, step })
    }

    pub fn members(&self) -> Vec<usize> {
        (self.n_min..=self.n_max).step_by(self.step).collect()
    }
}

impl FromStr for Ensemble {
    type Err = DickeError;

    /// "72:88:4"
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |p: &str| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| DickeError::param("ensembles", format!("`{s}` is not min:max:step")))
        };
        match parts.as_slice() {
            [a, b, c] => Ensemble::new(num(a)?, num(b)?, num(c)?),
            [a, b] => Ensemble::new(num(a)?, num(b)?, 4),
            _ => Err(DickeError::param("ensembles", format!("`{s}` is not min:max:step"))),
        }
    }
}

impl std::fmt::Display for Ensemble {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.n_min, self.n_max, self.step)
    }
}

/// "72:88:4,92:108:4"
pub fn parse_ensembles(s: &str) -> Result<Vec<Ensemble>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

/// Everything that defines one (λ, ℰ) scan apart from the system sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub omega: f64,
    pub omega0: f64,
    pub lambda: f64,
    pub energy: f64,
    pub delta_e: f64,
    /// n_trc = max(n_trc_min, ⌈n_trc_per_atom · N⌉), rounded up to even.
    pub n_trc_per_atom: f64,
    pub n_trc_min: usize,
    /// Truncation increment used for the convergence check.
    pub n_trc_step: usize,
}

impl PipelineConfig {
    pub fn resonant(lambda: f64, energy: f64) -> Self {
        Self {
            omega: 1.0,
            omega0: 1.0,
            lambda,
            energy,
            delta_e: DEFAULT_DELTA_E,
            n_trc_per_atom: 1.7,
            n_trc_min: 20,
            n_trc_step: 20,
        }
    }

    pub fn n_trc_for(&self, n_atoms: usize) -> usize {
        let n = ((self.n_trc_per_atom * n_atoms as f64).ceil() as usize).max(self.n_trc_min);
        n + n % 2
    }

    pub fn params_for(&self, n_atoms: usize) -> Result<ModelParams> {
        ModelParams::new(self.omega, self.omega0, self.lambda, n_atoms, self.n_trc_for(n_atoms))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRun {
    pub n_atoms: usize,
    pub n_trc: usize,
    pub convergence: ConvergenceReport,
    pub records: Vec<OverlapRecord>,
}

/// Spectrum → window states → Husimi fields → M for one system size.
pub fn run_member(n_atoms: usize, cfg: &PipelineConfig, mask: &ChaosMask) -> Result<MemberRun> {
    let params = cfg.params_for(n_atoms)?;
    let window = window_bounds(cfg.energy, cfg.delta_e);
    let basis = build_even_parity_basis(&params)?;
    let h = assemble_hamiltonian(&params, &basis)?;
    let spectrum = diagonalize_window(&h, window.0, window.1)?;
    drop(h);
    let refined = spectrum_for(&params.with_n_trc(params.n_trc + cfg.n_trc_step))?;
    let convergence = compare_truncations(
        &spectrum.epsilons(),
        &refined.epsilons(),
        window,
        params.n_trc,
        cfg.n_trc_step,
    )?;
    let indices = select_window_states(&spectrum.epsilons(), cfg.energy, cfg.delta_e)?;
    let surface = HusimiSurface::new(cfg.energy, &params, &mask.field.grid)?;
    let (records, _) = window_overlaps(&spectrum, &indices, &surface, mask)?;
    Ok(MemberRun {
        n_atoms,
        n_trc: params.n_trc,
        convergence,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRun {
    pub ensemble: Ensemble,
    pub members: Vec<MemberRun>,
    /// Members that failed outright, with the reason.
    pub failures: Vec<(usize, String)>,
}

impl EnsembleRun {
    /// All members ran and every truncation check converged.
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
            && self.members.len() == self.ensemble.members().len()
            && self.members.iter().all(|m| m.convergence.converged)
    }

    pub fn records(&self) -> impl Iterator<Item = &OverlapRecord> {
        self.members.iter().flat_map(|m| m.records.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleScan {
    pub config: PipelineConfig,
    pub grid: PolarGrid,
    pub mask_threshold: f64,
    pub ensembles: Vec<EnsembleRun>,
    /// Number of spectra diagonalised (the truncation-check spectra are not counted).
    pub spectra_computed: usize,
}

/// Run every member of every ensemble once; cutoffs are applied afterwards.
pub fn ensemble_scan(ensembles: &[Ensemble], cfg: &PipelineConfig, mask: &ChaosMask) -> Result<EnsembleScan> {
    if (mask.energy - cfg.energy).abs() > 1e-12 || (mask.lambda - cfg.lambda).abs() > 1e-12 {
        return Err(DickeError::Provenance("chaos mask was built for a different (lambda, E)".into()));
    }
    let jobs: Vec<(usize, usize)> = ensembles
        .iter()
        .enumerate()
        .flat_map(|(e, ens)| ens.members().into_iter().map(move |n| (e, n)))
        .collect();
    let results: Vec<Result<MemberRun>> = jobs.par_iter().map(|&(_, n)| run_member(n, cfg, mask)).collect();
    let mut runs: Vec<EnsembleRun> = ensembles
        .iter()
        .map(|&ensemble| EnsembleRun {
            ensemble,
            members: Vec::new(),
            failures: Vec::new(),
        })
        .collect();
    for (&(e, n), r) in jobs.iter().zip(results) {
        match r {
            Ok(m) => runs[e].members.push(m),
            Err(err) => runs[e].failures.push((n, err.to_string())),
        }
    }
    Ok(EnsembleScan {
        config: *cfg,
        grid: mask.field.grid,
        mask_threshold: mask.threshold,
        ensembles: runs,
        spectra_computed: jobs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePoint {
    pub ensemble: Ensemble,
    pub mean_n: f64,
    pub mean_rm: f64,
    pub mc: f64,
    pub complete: bool,
}

/// ⟨N⟩ and ⟨R_m⟩ per ensemble at cutoff M_c. R_m is computed per member, then averaged.
pub fn summarize(scan: &EnsembleScan, mc: f64) -> Result<Vec<EnsemblePoint>> {
    scan.ensembles
        .iter()
        .map(|run| {
            if run.members.is_empty() {
                return Err(DickeError::InsufficientData(format!("ensemble {} has no members", run.ensemble)));
            }
            let mut rms = Vec::with_capacity(run.members.len());
            for m in &run.members {
                let ms: Vec<f64> = m.records.iter().map(|r| r.m).collect();
                rms.push(mixed_fraction(&ms, mc)?);
            }
            let k = run.members.len() as f64;
            Ok(EnsemblePoint {
                ensemble: run.ensemble,
                mean_n: run.members.iter().map(|m| m.n_atoms as f64).sum::<f64>() / k,
                mean_rm: rms.iter().sum::<f64>() / k,
                mc,
                complete: run.is_complete(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub gamma: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub used: Vec<(f64, f64)>,
    /// Points dropped because R ≤ 0 (log undefined).
    pub excluded: Vec<(f64, f64)>,
}

/// Unweighted least squares of log R against log N; R ≈ prefactor · N^(−γ).
pub fn powerlaw_fit(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    let (used, excluded): (Vec<_>, Vec<_>) = points.iter().copied().partition(|&(n, r)| n > 0.0 && r > 0.0);
    if used.len() < 3 {
        return Err(DickeError::InsufficientData(format!(
            "power-law fit needs 3 positive points, got {}",
            used.len()
        )));
    }
    let xs: Vec<f64> = used.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(DickeError::InsufficientData("all points share the same N".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(PowerLawFit {
        gamma: -slope,
        prefactor: intercept.exp(),
        r_squared,
        used,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffPoint {
    pub mc: f64,
    pub points: Vec<EnsemblePoint>,
    /// `Err` text when the fit was impossible (e.g. no mixed states at all).
    pub fit: std::result::Result<PowerLawFit, String>,
}

/// γ(M_c) from the records of one scan; no spectra are recomputed.
pub fn cutoff_sweep(scan: &EnsembleScan, cutoffs: &[f64]) -> Result<Vec<CutoffPoint>> {
    cutoffs
        .iter()
        .map(|&mc| {
            let points = summarize(scan, mc)?;
            let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.mean_n, p.mean_rm)).collect();
            Ok(CutoffPoint {
                mc,
                fit: powerlaw_fit(&xy).map_err(|e| e.to_string()),
                points,
            })
        })
        .collect()
}

/// "0.3:0.9:0.05" → [0.3, 0.35, …, 0.9] (inclusive, tolerant to round-off).
pub fn parse_cutoff_range(s: &str) -> Result<Vec<f64>> {
    let bad = || DickeError::param("mc_sweep", format!("`{s}` is not start:stop:step"));
    let v: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [a, b, h] = v.as_slice() else { return Err(bad()) };
    if !(*h > 0.0) || b < a {
        return Err(bad());
    }
    let count = ((b - a) / h + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| a + i as f64 * h).collect())
}
