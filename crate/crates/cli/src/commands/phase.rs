use std::path::PathBuf;

use dicke_core::grid::PolarGrid;
use dicke_core::husimi::{husimi_fields, HusimiSurface};
use dicke_core::mixed::*;
use dicke_core::spectrum::{compare_truncations, CONVERGENCE_TOL};
use dicke_core::{build_even_parity_basis, ModelParams};
use serde::Serialize;

use super::classical::{cached_map, grid_rows};
use super::{set, Ctx, Invocation};
use crate::error::{CliError, CliResult};
use crate::manifest::{num, sha256_hex};
use crate::settings::{parse_list, positive, require, Settings};

const HUSIMI_NORM_TOL: f64 = 1e-9;

pub fn husimi(inv: &Invocation) -> CliResult<PathBuf> {
    let mut s = inv.settings.clone();
    set(&mut s.omega, 1.0);
    set(&mut s.omega0, 1.0);
    set(&mut s.delta_e, DEFAULT_DELTA_E);
    set(&mut s.grid, "60".into());
    set(&mut s.n_trc_step, 20);
    let params = s.model()?;
    let energy = require(s.energy, "energy")?;
    let delta_e = positive(s.delta_e.unwrap(), "delta_e")?;
    let grid = s.grid()?;
    let wanted = s.states.as_deref().map(|t| parse_list::<usize>(t, "states")).transpose()?;
    let mut ctx = Ctx::open("husimi", inv, &s)?;

    let (lo, hi) = window_bounds(energy, delta_e);
    let spectrum = ctx.window_spectrum(&params, lo, hi)?;
    let step = s.n_trc_step.unwrap();
    let refined = ctx.levels(&params.with_n_trc(params.n_trc + step))?;
    let eps = spectrum.epsilons();
    let convergence = compare_truncations(&eps, &refined.epsilons(), (lo, hi), params.n_trc, step)?;
    let mut indices = select_window_states(&eps, energy, delta_e)?;
    if let Some(w) = &wanted {
        if let Some(bad) = w.iter().find(|n| !indices.contains(n)) {
            return Err(CliError::config(
                "states",
                format!("state {bad} is not in the window [{lo}, {hi}] (window holds {}..={})", indices[0], indices[indices.len() - 1]),
            ));
        }
        indices.retain(|n| w.contains(n));
    }
    let basis = build_even_parity_basis(&params)?;
    let surface = HusimiSurface::new(energy, &params, &grid)?;
    let fields = husimi_fields(&spectrum, &basis, &indices, &surface)?;

    let mut index_rows = Vec::new();
    let mut worst: f64 = 0.0;
    let mut negative = 0;
    for f in &fields {
        let n = f.state_index.expect("eigenstate fields carry their index");
        let name = format!("husimi_n{n}.csv");
        ctx.run.csv(&name, &["r_idx", "theta_idx", "q2", "p2", "Q", "accessible"], grid_rows(&grid, &f.field.values, num))?;
        let norm = f.discrete_norm();
        worst = worst.max((norm - 1.0).abs());
        negative += f.field.accessible().filter(|(_, q)| *q < 0.0).count();
        index_rows.push(vec![n.to_string(), num(eps[n]), name, num(norm)]);
    }
    ctx.run.csv("husimi_states.csv", &["n", "epsilon", "file", "discrete_norm"], index_rows)?;

    let m = ctx.manifest();
    m.grid = Some(grid);
    m.tolerances.insert("husimi_norm".into(), HUSIMI_NORM_TOL);
    m.tolerances.insert("truncation_convergence".into(), CONVERGENCE_TOL);
    m.notes.push(format!("window ε ∈ [{lo}, {hi}] around ℰ = {energy}; {} accessible cells", surface.accessible_count()));
    m.audit(
        "husimi_normalisation",
        worst <= HUSIMI_NORM_TOL && negative == 0,
        format!("{} fields, max |ΣQ/𝒩 − 1| = {worst:e}, {negative} negative cells", fields.len()),
    );
    m.audit(
        "window_truncation_convergence",
        convergence.converged,
        format!("max |Δε| = {:e} against n_trc + {step}", convergence.max_abs_diff),
    );
    ctx.finish()
}

fn pipeline_config(s: &mut Settings) -> CliResult<PipelineConfig> {
    set(&mut s.omega, 1.0);
    set(&mut s.omega0, 1.0);
    set(&mut s.delta_e, DEFAULT_DELTA_E);
    set(&mut s.grid, "60".into());
    set(&mut s.t_end, 1000.0);
    set(&mut s.threshold, DEFAULT_LAMBDA_THRESHOLD);
    set(&mut s.mc, DEFAULT_MC);
    set(&mut s.m_bins, DEFAULT_M_BINS);
    set(&mut s.n_trc_per_atom, 1.7);
    set(&mut s.n_trc_min, 20);
    set(&mut s.n_trc_step, 20);
    s.classical(require(s.lambda, "lambda")?)?;
    let mc = s.mc.unwrap();
    if !(0.0..=1.0).contains(&mc) {
        return Err(CliError::config("mc", format!("must lie in [0, 1], got {mc}")));
    }
    Ok(PipelineConfig {
        omega: s.omega.unwrap(),
        omega0: s.omega0.unwrap(),
        lambda: s.lambda.unwrap(),
        energy: require(s.energy, "energy")?,
        delta_e: positive(s.delta_e.unwrap(), "delta_e")?,
        n_trc_per_atom: positive(s.n_trc_per_atom.unwrap(), "n_trc_per_atom")?,
        n_trc_min: s.n_trc_min.unwrap(),
        n_trc_step: s.n_trc_step.unwrap(),
    })
}

/// Members to run: the ensembles, or a single N (with an explicit n_trc when given).
fn member_plan(s: &Settings, cfg: &PipelineConfig) -> CliResult<(Vec<Ensemble>, Option<ModelParams>)> {
    match (&s.ensembles, s.n_atoms) {
        (Some(e), _) => Ok((parse_ensembles(e)?, None)),
        (None, Some(n)) => {
            let explicit = s.n_trc.map(|_| s.model()).transpose()?;
            cfg.params_for(n)?;
            Ok((vec![Ensemble::new(n, n, 2)?], explicit))
        }
        (None, None) => Err(CliError::config("ensembles", "either ensembles or n_atoms is required")),
    }
}

fn build_mask(ctx: &mut Ctx, s: &Settings, cfg: &PipelineConfig, grid: &PolarGrid) -> CliResult<ChaosMask> {
    let params = s.classical(cfg.lambda)?;
    let field = cached_map(ctx, &params, cfg.energy, grid, positive(s.t_end.unwrap(), "t_end")?)?;
    let mask = chaos_mask(&field, s.threshold.unwrap())?;
    ctx.run.csv(
        "mask.csv",
        &["r_idx", "theta_idx", "q2", "p2", "label", "accessible"],
        grid_rows(grid, &mask.field.values, |c: i8| c.to_string()),
    )?;
    ctx.manifest()
        .notes
        .push(format!("chaotic fraction of the accessible cells: {:.4}", mask.chaotic_fraction()));
    Ok(mask)
}

/// Spectrum (cached) → window states → Husimi fields → M, for one system size.
fn member(ctx: &mut Ctx, params: &ModelParams, cfg: &PipelineConfig, mask: &ChaosMask) -> CliResult<MemberRun> {
    let (lo, hi) = window_bounds(cfg.energy, cfg.delta_e);
    let spectrum = ctx.window_spectrum(params, lo, hi)?;
    let refined = ctx.levels(&params.with_n_trc(params.n_trc + cfg.n_trc_step))?;
    let eps = spectrum.epsilons();
    let convergence = compare_truncations(&eps, &refined.epsilons(), (lo, hi), params.n_trc, cfg.n_trc_step)?;
    let indices = select_window_states(&eps, cfg.energy, cfg.delta_e)?;
    let surface = HusimiSurface::new(cfg.energy, params, &mask.field.grid)?;
    let (records, _) = window_overlaps(&spectrum, &indices, &surface, mask)?;
    Ok(MemberRun {
        n_atoms: params.n_atoms,
        n_trc: params.n_trc,
        convergence,
        records,
    })
}

fn run_scan(ctx: &mut Ctx, s: &Settings, cfg: &PipelineConfig, grid: &PolarGrid) -> CliResult<EnsembleScan> {
    let (ensembles, explicit) = member_plan(s, cfg)?;
    let mask = build_mask(ctx, s, cfg, grid)?;
    let mask_json = serde_json::to_string(&mask).expect("mask serialises");
    ctx.manifest().input_hashes.insert("chaos_mask".into(), sha256_hex(mask_json.as_bytes()));
    let mut runs = Vec::new();
    let mut computed = 0;
    for e in ensembles {
        let mut run = EnsembleRun {
            ensemble: e,
            members: Vec::new(),
            failures: Vec::new(),
        };
        for n in e.members() {
            let params = match explicit {
                Some(p) => p,
                None => cfg.params_for(n)?,
            };
            eprintln!("member N={n} n_trc={}", params.n_trc);
            match member(ctx, &params, cfg, &mask) {
                Ok(m) => run.members.push(m),
                Err(CliError::Core(err)) => run.failures.push((n, err.to_string())),
                Err(other) => return Err(other),
            }
            computed += 1;
        }
        runs.push(run);
    }
    Ok(EnsembleScan {
        config: *cfg,
        grid: *grid,
        mask_threshold: mask.threshold,
        ensembles: runs,
        spectra_computed: computed,
    })
}

fn overlap_outputs(ctx: &mut Ctx, scan: &EnsembleScan, m_bins: usize) -> CliResult<Vec<OverlapRecord>> {
    let records: Vec<OverlapRecord> = scan.ensembles.iter().flat_map(|r| r.records().copied()).collect();
    ctx.run.csv(
        "overlap.csv",
        &["N", "n", "epsilon", "M"],
        records
            .iter()
            .map(|r| vec![r.n_atoms.to_string(), r.index.to_string(), num(r.epsilon), num(r.m)]),
    )?;
    let mut in_range = true;
    for run in &scan.ensembles {
        let rs: Vec<OverlapRecord> = run.records().copied().collect();
        in_range &= rs.iter().all(|r| (-1.0..=1.0).contains(&r.m));
        let h = index_distribution(&rs, m_bins)?;
        ctx.run.csv(
            &format!("pm_histogram_{}.csv", run.ensemble.to_string().replace(':', "-")),
            &["bin_lo", "bin_hi", "density"],
            (0..h.bins()).map(|k| vec![num(h.edges[k]), num(h.edges[k + 1]), num(h.densities[k])]),
        )?;
        for (n, why) in &run.failures {
            ctx.manifest().notes.push(format!("member N={n} failed: {why}"));
        }
    }
    let complete = scan.ensembles.iter().all(|r| r.is_complete());
    let worst = scan
        .ensembles
        .iter()
        .flat_map(|r| r.members.iter().map(|m| m.convergence.max_abs_diff))
        .fold(0.0, f64::max);
    let m = ctx.manifest();
    m.grid = Some(scan.grid);
    m.thresholds.insert("lambda_mask".into(), scan.mask_threshold);
    m.tolerances.insert("truncation_convergence".into(), CONVERGENCE_TOL);
    m.audit("overlap_index_range", in_range, format!("{} records", records.len()));
    m.audit(
        "ensembles_complete",
        complete,
        format!("all members ran and converged (worst |Δε| = {worst:e})"),
    );
    Ok(records)
}

#[derive(Serialize)]
struct MemberSummary {
    n_atoms: usize,
    n_trc: usize,
    states: usize,
    rm: f64,
    converged: bool,
}

pub fn overlap(inv: &Invocation) -> CliResult<PathBuf> {
    let mut s = inv.settings.clone();
    let cfg = pipeline_config(&mut s)?;
    let grid = s.grid()?;
    member_plan(&s, &cfg)?;
    let mut ctx = Ctx::open("overlap", inv, &s)?;
    let scan = run_scan(&mut ctx, &s, &cfg, &grid)?;
    overlap_outputs(&mut ctx, &scan, s.m_bins.unwrap())?;
    let mc = s.mc.unwrap();
    let summary: Vec<MemberSummary> = scan
        .ensembles
        .iter()
        .flat_map(|r| r.members.iter())
        .map(|m| {
            let ms: Vec<f64> = m.records.iter().map(|r| r.m).collect();
            Ok(MemberSummary {
                n_atoms: m.n_atoms,
                n_trc: m.n_trc,
                states: ms.len(),
                rm: mixed_fraction(&ms, mc)?,
                converged: m.convergence.converged,
            })
        })
        .collect::<dicke_core::Result<_>>()?;
    ctx.run.json("overlap_summary.json", &summary)?;
    ctx.manifest().thresholds.insert("mc".into(), mc);
    ctx.finish()
}

#[derive(Serialize)]
struct FitOutput {
    gamma: f64,
    prefactor: f64,
    r_squared: f64,
    /// (⟨N⟩, ⟨R_m⟩) pairs that entered the fit.
    points_used: Vec<(f64, f64)>,
    excluded: Vec<(f64, f64)>,
    mc: f64,
}

pub fn scan(inv: &Invocation) -> CliResult<PathBuf> {
    let mut s = inv.settings.clone();
    require(s.ensembles.as_ref(), "ensembles")?;
    let cfg = pipeline_config(&mut s)?;
    let grid = s.grid()?;
    let mc = s.mc.unwrap();
    let mut cutoffs = vec![mc];
    if let Some(sweep) = &s.mc_sweep {
        cutoffs.extend(parse_cutoff_range(sweep)?.into_iter().filter(|c| (c - mc).abs() > 1e-12));
    }
    member_plan(&s, &cfg)?;
    let mut ctx = Ctx::open("scan", inv, &s)?;
    let scan = run_scan(&mut ctx, &s, &cfg, &grid)?;
    overlap_outputs(&mut ctx, &scan, s.m_bins.unwrap())?;
    let sweep = cutoff_sweep(&scan, &cutoffs)?;

    let mut rows = Vec::new();
    for c in &sweep {
        for p in &c.points {
            rows.push(vec![p.ensemble.to_string(), num(p.mean_n), num(p.mean_rm), num(c.mc)]);
        }
    }
    ctx.run.csv("scan.csv", &["ensemble", "avg_N", "avg_Rm", "Mc"], rows)?;
    if s.mc_sweep.is_some() {
        let mut fit_rows: Vec<&CutoffPoint> = sweep.iter().collect();
        fit_rows.sort_by(|a, b| a.mc.total_cmp(&b.mc));
        ctx.run.csv(
            "fit_sweep.csv",
            &["Mc", "gamma", "prefactor", "r_squared", "points_used"],
            fit_rows.iter().map(|c| match &c.fit {
                Ok(f) => vec![num(c.mc), num(f.gamma), num(f.prefactor), num(f.r_squared), f.used.len().to_string()],
                Err(_) => vec![num(c.mc), "nan".into(), "nan".into(), "nan".into(), "0".into()],
            }),
        )?;
    }
    let main = &sweep[0];
    match &main.fit {
        Ok(f) => {
            ctx.run.json(
                "fit.json",
                &FitOutput {
                    gamma: f.gamma,
                    prefactor: f.prefactor,
                    r_squared: f.r_squared,
                    points_used: f.used.clone(),
                    excluded: f.excluded.clone(),
                    mc,
                },
            )?;
            ctx.manifest().audit("power_law_fit", true, format!("γ = {:.4}, r² = {:.4}", f.gamma, f.r_squared));
        }
        Err(why) => ctx.manifest().audit("power_law_fit", false, why.clone()),
    }
    ctx.manifest().thresholds.insert("mc".into(), mc);
    ctx.finish()
}
