use std::path::PathBuf;

use dicke_core::classical::*;
use dicke_core::grid::PolarGrid;
use dicke_core::lyapunov::{averaged_lyapunov, lyapunov_map, LyapunovField, LYAPUNOV_TOL, RENORM_INTERVAL};
use dicke_core::{DickeError, ModelParams};

use super::{set, Ctx, Invocation};
use crate::cache::key_of;
use crate::error::CliResult;
use crate::manifest::num;
use crate::settings::{parse_list, positive, require};

pub fn poincare(inv: &Invocation) -> CliResult<PathBuf> {
    let mut s = inv.settings.clone();
    set(&mut s.omega, 1.0);
    set(&mut s.omega0, 1.0);
    set(&mut s.seeds, 6);
    set(&mut s.crossings, 200);
    set(&mut s.tol, 1e-10);
    set(&mut s.t_max, 5000.0);
    let params = s.classical(require(s.lambda, "lambda")?)?;
    let energy = require(s.energy, "energy")?;
    let opts = SectionOptions {
        n_crossings: s.crossings.unwrap(),
        t_max: positive(s.t_max.unwrap(), "t_max")?,
        tol: positive(s.tol.unwrap(), "tol")?,
    };
    let seeds = default_seeds(energy, &params, s.seeds.unwrap());
    if seeds.is_empty() {
        return Err(DickeError::EmptyShell { energy }.into());
    }
    let mut ctx = Ctx::open("poincare", inv, &s)?;
    let section = poincare_section(energy, &params, &seeds, &opts)?;

    ctx.run.csv(
        "seeds.csv",
        &["seed_id", "q2", "p2"],
        seeds.iter().enumerate().map(|(i, (q2, p2))| vec![i.to_string(), num(*q2), num(*p2)]),
    )?;
    ctx.run.csv(
        "sections.csv",
        &["seed_id", "crossing_idx", "q2", "p2"],
        section.points
            .iter()
            .map(|p| vec![p.seed_id.to_string(), p.crossing_idx.to_string(), num(p.q2), num(p.p2)]),
    )?;
    let mut drift: f64 = 0.0;
    for p in &section.points {
        let h = hamiltonian_value(&PhasePoint::new(p.q1, p.q2, p.p1, p.p2), &params)?;
        drift = drift.max((h - energy).abs());
    }

    let m = ctx.manifest();
    m.tolerances.insert("integrator".into(), opts.tol);
    m.notes.push(format!("crossing rule: {}", section.crossing_rule));
    m.notes.extend(section.diagnostics.iter().cloned());
    m.audit(
        "section_points_on_shell",
        drift <= 1e-6,
        format!("{} points, max |H − ℰ| = {drift:e}", section.points.len()),
    );
    ctx.finish()
}

pub(crate) fn cached_map(
    ctx: &mut Ctx,
    params: &ModelParams,
    energy: f64,
    grid: &PolarGrid,
    t_end: f64,
) -> CliResult<LyapunovField> {
    let key = key_of(
        "lyapunov",
        &(params.omega, params.omega0, params.lambda, energy, grid, t_end, LYAPUNOV_TOL),
    );
    let (field, hit) = ctx.cache.json(&key, || Ok(lyapunov_map(energy, params, grid, t_end)?))?;
    ctx.record_input(format!("lyapunov lambda={} E={energy}", params.lambda), &key, hit);
    Ok(field)
}

/// Rows `r_idx, theta_idx, q2, p2, value, accessible`; inaccessible cells carry `nan`.
pub(crate) fn grid_rows<T: Copy>(grid: &PolarGrid, values: &[Option<T>], fmt: impl Fn(T) -> String) -> Vec<Vec<String>> {
    grid.cells()
        .map(|c| {
            let v = values[c.index];
            vec![
                (c.index / grid.n_theta).to_string(),
                (c.index % grid.n_theta).to_string(),
                num(c.q2),
                num(c.p2),
                v.map(&fmt).unwrap_or_else(|| "nan".into()),
                u8::from(v.is_some()).to_string(),
            ]
        })
        .collect()
}

pub fn lyapunov(inv: &Invocation) -> CliResult<PathBuf> {
    let mut s = inv.settings.clone();
    set(&mut s.omega, 1.0);
    set(&mut s.omega0, 1.0);
    set(&mut s.grid, "60".into());
    set(&mut s.t_end, 1000.0);
    let grid = s.grid()?;
    let t_end = positive(s.t_end.unwrap(), "t_end")?;
    let mut lambdas = vec![require(s.lambda, "lambda")?];
    let mut energies = vec![require(s.energy, "energy")?];
    if let Some(l) = &s.lambdas {
        lambdas.extend(parse_list::<f64>(l, "lambdas")?);
    }
    if let Some(e) = &s.energies {
        energies.extend(parse_list::<f64>(e, "energies")?);
    }
    lambdas.dedup();
    energies.dedup();
    for &l in &lambdas {
        s.classical(l)?;
    }
    let mut ctx = Ctx::open("lyapunov", inv, &s)?;
    let mut table = Vec::new();
    for &lambda in &lambdas {
        for &energy in &energies {
            let params = s.classical(lambda)?;
            let field = cached_map(&mut ctx, &params, energy, &grid, t_end)?;
            let avg = match averaged_lyapunov(&field) {
                Ok(v) => v,
                Err(DickeError::EmptyShell { .. }) => {
                    ctx.manifest()
                        .notes
                        .push(format!("lambda={lambda} E={energy}: shell has no accessible cells"));
                    f64::NAN
                }
                Err(e) => return Err(e.into()),
            };
            ctx.run.csv(
                &format!("lyapunov_lambda{lambda}_E{energy}.csv"),
                &["r_idx", "theta_idx", "q2", "p2", "lambda_max", "accessible"],
                grid_rows(&grid, &field.field.values, num),
            )?;
            if !field.flags.is_empty() {
                ctx.manifest().notes.push(format!(
                    "lambda={lambda} E={energy}: {} orbits truncated at the atomic boundary",
                    field.flags.len()
                ));
            }
            table.push(vec![num(lambda), num(energy), num(avg)]);
        }
    }
    ctx.run.csv("averaged.csv", &["lambda", "energy", "avg_lyapunov"], table)?;

    let m = ctx.manifest();
    m.grid = Some(grid);
    m.tolerances.insert("integrator".into(), LYAPUNOV_TOL);
    m.tolerances.insert("renormalisation_interval".into(), RENORM_INTERVAL);
    m.notes.push("avg_lyapunov is the accessible-area-weighted mean, normalised by the accessible area".into());
    ctx.finish()
}
