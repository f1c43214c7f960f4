//! Maximal Lyapunov exponents from the variational flow, Lyapunov maps on the Poincaré
//! section and their phase-space average.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{eom_rhs, hessian, lift_to_section, tangent_map, PhasePoint, BOUNDARY_GUARD};
use crate::error::{DickeError, Result};
use crate::grid::{PolarGrid, PolarGridField};
use crate::model::ModelParams;
use crate::ode::{Dop853, OdeSystem, Tolerances};

/// Local error tolerance used for Lyapunov integrations.
pub const LYAPUNOV_TOL: f64 = 1e-10;
/// Tangent vector renormalisation period.
pub const RENORM_INTERVAL: f64 = 1.0;

/// State plus one tangent vector: (x, v) with v̇ = J₄·D²H_c(x)·v.
struct TangentFlow {
    params: ModelParams,
}

impl OdeSystem<8> for TangentFlow {
    fn rhs(&self, y: &[f64; 8], dy: &mut [f64; 8]) -> Result<()> {
        let x = PhasePoint::from_slice(&y[..4]);
        let f = eom_rhs(&x, &self.params)?;
        let dv = tangent_map(&hessian(&x, &self.params)?, &y[4..]);
        dy[..4].copy_from_slice(&f);
        dy[4..].copy_from_slice(&dv);
        Ok(())
    }
}

/// State plus the full 4×4 fundamental matrix Ω (row-major) with Ω̇ = J₄·D²H_c·Ω.
struct FundamentalFlow {
    params: ModelParams,
}

impl OdeSystem<20> for FundamentalFlow {
    fn rhs(&self, y: &[f64; 20], dy: &mut [f64; 20]) -> Result<()> {
        let x = PhasePoint::from_slice(&y[..4]);
        dy[..4].copy_from_slice(&eom_rhs(&x, &self.params)?);
        let h = hessian(&x, &self.params)?;
        for col in 0..4 {
            let v: [f64; 4] = std::array::from_fn(|row| y[4 + row * 4 + col]);
            let dv = tangent_map(&h, &v);
            for row in 0..4 {
                dy[4 + row * 4 + col] = dv[row];
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub exponent: f64,
    /// Time actually reached; smaller than requested when `truncated` is set.
    pub horizon: f64,
    pub truncated: Option<String>,
}

fn check_start(x0: &PhasePoint) -> Result<()> {
    if x0.is_interior() {
        Ok(())
    } else {
        Err(DickeError::SingularBoundary {
            radius_sq: x0.atomic_radius_sq(),
            guard: BOUNDARY_GUARD,
        })
    }
}

/// Benettin estimator; `on_renorm(t, Λ(t))` is called after every renormalisation.
fn benettin(
    x0: &PhasePoint,
    params: &ModelParams,
    t_end: f64,
    tol: f64,
    mut on_renorm: impl FnMut(f64, f64),
) -> Result<LyapunovEstimate> {
    check_start(x0)?;
    if !(t_end > 0.0) {
        return Err(DickeError::param("t_end", "must be positive"));
    }
    let flow = TangentFlow { params: *params };
    let mut y0 = [0.0; 8];
    y0[..4].copy_from_slice(&x0.to_array());
    y0[4..].copy_from_slice(&[0.5; 4]);
    let mut st = Dop853::new(&flow, 0.0, y0, true, Tolerances::new(tol))?;
    let mut log_growth = 0.0;
    let mut t_mark = 0.0;
    let mut truncated = None;
    while t_mark < t_end {
        let target = (t_mark + RENORM_INTERVAL).min(t_end);
        let mut failed = false;
        while st.t() < target {
            if let Err(e) = st.step(target) {
                truncated = Some(format!("stopped at t = {}: {e}", st.t()));
                failed = true;
                break;
            }
        }
        let mut y = *st.y();
        let norm = y[4..].iter().map(|v| v * v).sum::<f64>().sqrt();
        log_growth += norm.ln();
        t_mark = st.t();
        if failed || t_mark <= 0.0 {
            break;
        }
        on_renorm(t_mark, log_growth / t_mark);
        y[4..].iter_mut().for_each(|v| *v /= norm);
        st.reset_state(y)?;
    }
    let horizon = t_mark;
    Ok(LyapunovEstimate {
        exponent: if horizon > 0.0 { log_growth / horizon } else { f64::NAN },
        horizon,
        truncated,
    })
}

/// Finite-time maximal Lyapunov exponent of the orbit through `x0`.
pub fn max_lyapunov(x0: &PhasePoint, params: &ModelParams, t_end: f64) -> Result<LyapunovEstimate> {
    benettin(x0, params, t_end, LYAPUNOV_TOL, |_, _| {})
}

/// Running estimates Λ(t) at every renormalisation time up to `t_end`.
pub fn lyapunov_series(x0: &PhasePoint, params: &ModelParams, t_end: f64) -> Result<Vec<(f64, f64)>> {
    let mut series = Vec::new();
    benettin(x0, params, t_end, LYAPUNOV_TOL, |t, l| series.push((t, l)))?;
    Ok(series)
}

/// Fundamental matrix Ω(t) (row-major 4×4) with Ω(0) = I and the final phase point.
pub fn fundamental_matrix(x0: &PhasePoint, params: &ModelParams, t: f64, tol: f64) -> Result<([[f64; 4]; 4], PhasePoint)> {
    check_start(x0)?;
    let flow = FundamentalFlow { params: *params };
    let mut y0 = [0.0; 20];
    y0[..4].copy_from_slice(&x0.to_array());
    for i in 0..4 {
        y0[4 + i * 4 + i] = 1.0;
    }
    let mut st = Dop853::new(&flow, 0.0, y0, t >= 0.0, Tolerances::new(tol))?;
    while st.t() != t {
        st.step(t)?;
    }
    let y = st.y();
    let omega = std::array::from_fn(|r| std::array::from_fn(|c| y[4 + r * 4 + c]));
    Ok((omega, PhasePoint::from_slice(&y[..4])))
}

/// Determinant of a 4×4 matrix by partial-pivot elimination.
pub fn det4(m: &[[f64; 4]; 4]) -> f64 {
    let mut a = *m;
    let mut det = 1.0;
    for k in 0..4 {
        let p = (k..4).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        if a[p][k] == 0.0 {
            return 0.0;
        }
        if p != k {
            a.swap(p, k);
            det = -det;
        }
        det *= a[k][k];
        for i in k + 1..4 {
            let f = a[i][k] / a[k][k];
            for j in k..4 {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    det
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovField {
    pub field: PolarGridField<f64>,
    pub energy: f64,
    pub t_end: f64,
    pub params: ModelParams,
    /// (cell index, diagnostic) for cells whose orbit was truncated.
    pub flags: Vec<(usize, String)>,
}

/// Λ_m on every accessible cell of `grid` at energy ℰ (lift: p1 = 0, q1 = q1,+).
pub fn lyapunov_map(energy: f64, params: &ModelParams, grid: &PolarGrid, t_end: f64) -> Result<LyapunovField> {
    params.validate()?;
    let results: Vec<Option<Result<LyapunovEstimate>>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let c = grid.cell(i);
            let x0 = lift_to_section(c.q2, c.p2, energy, params)?;
            Some(max_lyapunov(&x0, params, t_end))
        })
        .collect();
    let mut values = Vec::with_capacity(grid.len());
    let mut flags = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            None => values.push(None),
            Some(Ok(est)) => {
                if let Some(msg) = est.truncated {
                    flags.push((i, msg));
                }
                values.push(Some(est.exponent).filter(|v| v.is_finite()));
            }
            Some(Err(e)) => {
                flags.push((i, e.to_string()));
                values.push(None);
            }
        }
    }
    Ok(LyapunovField {
        field: PolarGridField { grid: *grid, values },
        energy,
        t_end,
        params: *params,
        flags,
    })
}

/// Area-weighted mean Σ Λ·r·Δr·Δθ / Σ r·Δr·Δθ over accessible cells.
pub fn averaged_lyapunov(field: &LyapunovField) -> Result<f64> {
    let (num, den) = field
        .field
        .accessible()
        .fold((0.0, 0.0), |(n, d), (c, v)| (n + v * c.area, d + c.area));
    if den == 0.0 {
        return Err(DickeError::EmptyShell { energy: field.energy });
    }
    Ok(num / den)
}
