use std::path::PathBuf;

use dicke_core::mixed::window_bounds;
use dicke_core::spectrum::{compare_truncations, convergence_ceiling, ConvergenceReport, CONVERGENCE_TOL};
use dicke_core::stats::*;
use serde::Serialize;

use super::{set, Ctx, Invocation};
use crate::cache::f64s_to_le;
use crate::error::{CliError, CliResult};
use crate::manifest::num;

#[derive(Serialize)]
struct Convergence {
    n_trc: usize,
    n_trc_refined: usize,
    tolerance: f64,
    /// Leading levels that agree with the refined truncation.
    converged_levels: usize,
    window: Option<ConvergenceReport>,
}

pub fn spectrum(inv: &Invocation) -> CliResult<PathBuf> {
    let mut s = inv.settings.clone();
    set(&mut s.omega, 1.0);
    set(&mut s.omega0, 1.0);
    set(&mut s.n_trc_step, 20);
    if s.energy.is_some() {
        set(&mut s.delta_e, 0.04);
    }
    let params = s.model()?;
    let step = s.n_trc_step.unwrap();
    let mut ctx = Ctx::open("spectrum", inv, &s)?;
    let window = s.energy.map(|e| window_bounds(e, s.delta_e.unwrap()));
    let base = match window {
        Some((lo, hi)) => ctx.window_spectrum(&params, lo, hi)?,
        None => ctx.levels(&params)?,
    };
    let refined = ctx.levels(&params.with_n_trc(params.n_trc + step))?;
    let (eps, eps_ref) = (base.epsilons(), refined.epsilons());
    let report = Convergence {
        n_trc: params.n_trc,
        n_trc_refined: params.n_trc + step,
        tolerance: CONVERGENCE_TOL,
        converged_levels: convergence_ceiling(&eps, &eps_ref, CONVERGENCE_TOL),
        window: window.map(|w| compare_truncations(&eps, &eps_ref, w, params.n_trc, step)).transpose()?,
    };

    ctx.run.csv(
        "eigenvalues.csv",
        &["n", "E", "epsilon"],
        base.eigenvalues()
            .iter()
            .zip(&eps)
            .enumerate()
            .map(|(n, (e, x))| vec![n.to_string(), num(*e), num(*x)]),
    )?;
    ctx.run.bytes("eigvecs.bin", &f64s_to_le(base.vectors()))?;
    ctx.run.csv(
        "eigvec_columns.csv",
        &["column", "n", "epsilon"],
        base.vector_indices()
            .iter()
            .enumerate()
            .map(|(c, &n)| vec![c.to_string(), n.to_string(), num(eps[n])]),
    )?;
    ctx.run.json("convergence.json", &report)?;

    let m = ctx.manifest();
    m.tolerances.insert("truncation_convergence".into(), CONVERGENCE_TOL);
    m.notes.push(format!(
        "eigvecs.bin: f64 little-endian, column-major, {} rows x {} columns (columns listed in eigvec_columns.csv)",
        base.dim(),
        base.vector_indices().len()
    ));
    m.notes.push(format!("basis digest {:016x}, dimension {}", base.basis_digest(), base.dim()));
    if let Some(w) = &report.window {
        m.audit(
            "window_truncation_convergence",
            w.converged,
            format!("{} levels in [{}, {}], max |Δε| = {:e}", w.states, w.window.0, w.window.1, w.max_abs_diff),
        );
    }
    ctx.finish()
}

#[derive(Serialize)]
struct RatioSummary {
    mean_r: f64,
    rescaled_mean_r: f64,
    ks_goe: f64,
    ks_poisson: f64,
    closer_to: &'static str,
    samples: usize,
    degenerate: usize,
    bulk_start: usize,
    bulk_end: usize,
    mean_r_goe: f64,
    mean_r_poisson: f64,
}

pub fn ratio(inv: &Invocation) -> CliResult<PathBuf> {
    let mut s = inv.settings.clone();
    set(&mut s.omega, 1.0);
    set(&mut s.omega0, 1.0);
    set(&mut s.n_trc_step, 20);
    set(&mut s.bins, DEFAULT_RATIO_BINS);
    set(&mut s.window_size, DEFAULT_WINDOW);
    let ws = s.window_size.unwrap();
    set(&mut s.stride, (ws / 2).max(1));
    let params = s.model()?;
    if s.stride == Some(0) {
        return Err(CliError::config("stride", "must be positive"));
    }
    let mut ctx = Ctx::open("ratio", inv, &s)?;
    let eps = ctx.levels(&params)?.epsilons();
    let eps_ref = ctx.levels(&params.with_n_trc(params.n_trc + s.n_trc_step.unwrap()))?.epsilons();
    let ceiling = convergence_ceiling(&eps, &eps_ref, CONVERGENCE_TOL);
    let bulk = bulk_levels(&eps, ceiling);
    let bulk_start = (eps.len() as f64 * 0.05).ceil() as usize;
    if bulk.len() < 3 {
        return Err(CliError::config(
            "n_trc",
            format!("only the lowest {ceiling} levels are converged against n_trc + step; the bulk starts at {bulk_start}, raise n_trc"),
        ));
    }
    let sample = spacing_ratios(bulk)?;
    let report = ratio_report(&sample, s.bins.unwrap())?;
    let scan = if ceiling >= ws + 2 {
        windowed_ratio_scan(&eps[..ceiling], ws, s.stride.unwrap())?
    } else {
        ctx.manifest()
            .notes
            .push(format!("only {ceiling} converged levels: no window of {ws} fits, scan.csv is empty"));
        Vec::new()
    };

    ctx.run.csv(
        "ratios.csv",
        &["n", "r"],
        sample
            .ratios
            .iter()
            .enumerate()
            .map(|(k, r)| vec![(bulk_start + k + 1).to_string(), num(*r)]),
    )?;
    let h = &report.histogram;
    ctx.run.csv(
        "histogram.csv",
        &["bin_lo", "bin_hi", "density"],
        (0..h.bins()).map(|k| vec![num(h.edges[k]), num(h.edges[k + 1]), num(h.densities[k])]),
    )?;
    let reference: Vec<Vec<String>> = (0..=200)
        .map(|i| {
            let r = i as f64 / 200.0;
            let (g, p) = reference_densities(r)?;
            Ok(vec![num(r), num(g), num(p)])
        })
        .collect::<dicke_core::Result<_>>()?;
    ctx.run.csv("reference.csv", &["r", "p_goe", "p_poisson"], reference)?;
    ctx.run.csv(
        "scan.csv",
        &["mean_epsilon", "rescaled_mean_r"],
        scan.iter().map(|w| vec![num(w.mean_epsilon), num(w.rescaled_mean_r)]),
    )?;
    ctx.run.json(
        "ratio_summary.json",
        &RatioSummary {
            mean_r: report.mean_r,
            rescaled_mean_r: report.rescaled_mean_r,
            ks_goe: report.ks_goe,
            ks_poisson: report.ks_poisson,
            closer_to: if report.closer_to_goe() { "GOE" } else { "Poisson" },
            samples: report.samples,
            degenerate: report.degenerate,
            bulk_start,
            bulk_end: ceiling,
            mean_r_goe: MEAN_R_GOE,
            mean_r_poisson: MEAN_R_POISSON,
        },
    )?;

    let m = ctx.manifest();
    m.tolerances.insert("truncation_convergence".into(), CONVERGENCE_TOL);
    m.notes.push(format!(
        "bulk: levels [{bulk_start}, {ceiling}) of {} (lowest 5% and unconverged levels dropped)",
        eps.len()
    ));
    m.audit(
        "no_degenerate_spacings",
        report.degenerate == 0,
        format!("{} zero spacings in the bulk", report.degenerate),
    );
    ctx.finish()
}
