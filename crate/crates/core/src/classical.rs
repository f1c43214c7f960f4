//! Classical Dicke flow on x = (q1, q2, p1, p2): energy, equations of motion, Hessian,
//! trajectories with an energy audit, and Poincaré sections on p1 = 0.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DickeError, Result};
use crate::model::ModelParams;
use crate::ode::{brent_root, Dop853, OdeSystem, Tolerances};

/// Integration treats p2² + q2² > 4 − `BOUNDARY_GUARD` as invalid.
pub const BOUNDARY_GUARD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q1: f64,
    pub q2: f64,
    pub p1: f64,
    pub p2: f64,
}

impl PhasePoint {
    pub fn new(q1: f64, q2: f64, p1: f64, p2: f64) -> Self {
        Self { q1, q2, p1, p2 }
    }

    pub fn origin() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.q1, self.q2, self.p1, self.p2]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self::new(x[0], x[1], x[2], x[3])
    }

    /// p2² + q2²
    pub fn atomic_radius_sq(&self) -> f64 {
        self.q2 * self.q2 + self.p2 * self.p2
    }

    pub fn is_interior(&self) -> bool {
        self.atomic_radius_sq() < 4.0 - BOUNDARY_GUARD
    }
}

fn interior_root(x: &PhasePoint) -> Result<f64> {
    let rho2 = x.atomic_radius_sq();
    if rho2 > 4.0 - BOUNDARY_GUARD {
        return Err(DickeError::SingularBoundary {
            radius_sq: rho2,
            guard: BOUNDARY_GUARD,
        });
    }
    Ok((4.0 - rho2).sqrt())
}

/// H_c = (ω/2)(p1² + q1²) + (ω0/2)(p2² + q2²) + λ q1 q2 √(4 − p2² − q2²) − ω0.
pub fn hamiltonian_value(x: &PhasePoint, params: &ModelParams) -> Result<f64> {
    let rho2 = x.atomic_radius_sq();
    if rho2 > 4.0 {
        return Err(DickeError::Domain(format!(
            "atomic constraint violated: p2^2 + q2^2 = {rho2} > 4"
        )));
    }
    let s = (4.0 - rho2).sqrt();
    Ok(0.5 * params.omega * (x.p1 * x.p1 + x.q1 * x.q1) + 0.5 * params.omega0 * rho2 + params.lambda * x.q1 * x.q2 * s
        - params.omega0)
}

/// (q̇1, q̇2, ṗ1, ṗ2) from Hamilton's equations.
pub fn eom_rhs(x: &PhasePoint, params: &ModelParams) -> Result<[f64; 4]> {
    let s = interior_root(x)?;
    let ModelParams {
        omega, omega0, lambda, ..
    } = *params;
    let PhasePoint { q1, q2, p1, p2 } = *x;
    Ok([
        omega * p1,
        omega0 * p2 - lambda * q1 * q2 * p2 / s,
        -omega * q1 - lambda * q2 * s,
        -omega0 * q2 - lambda * q1 * s + lambda * q1 * q2 * q2 / s,
    ])
}

/// Analytic Hessian D²H_c in the coordinate order (q1, q2, p1, p2).
pub fn hessian(x: &PhasePoint, params: &ModelParams) -> Result<[[f64; 4]; 4]> {
    let s = interior_root(x)?;
    let ModelParams {
        omega, omega0, lambda, ..
    } = *params;
    let PhasePoint { q1, q2, p2, .. } = *x;
    let s3 = s * s * s;
    let h_q1q2 = lambda * (s - q2 * q2 / s);
    let h_q1p2 = -lambda * q2 * p2 / s;
    let h_q2q2 = omega0 - lambda * q1 * (3.0 * q2 / s + q2 * q2 * q2 / s3);
    let h_q2p2 = -lambda * q1 * p2 * (1.0 / s + q2 * q2 / s3);
    let h_p2p2 = omega0 - lambda * q1 * q2 * (1.0 / s + p2 * p2 / s3);
    Ok([
        [omega, h_q1q2, 0.0, h_q1p2],
        [h_q1q2, h_q2q2, 0.0, h_q2p2],
        [0.0, 0.0, omega, 0.0],
        [h_q1p2, h_q2p2, 0.0, h_p2p2],
    ])
}

/// J₄ · D²H_c · v with J₄ = [[0, I], [−I, 0]].
pub fn tangent_map(hess: &[[f64; 4]; 4], v: &[f64]) -> [f64; 4] {
    let hv = |row: usize| (0..4).map(|k| hess[row][k] * v[k]).sum::<f64>();
    [hv(2), hv(3), -hv(0), -hv(1)]
}

pub(crate) struct Flow {
    pub params: ModelParams,
}

impl OdeSystem<4> for Flow {
    fn rhs(&self, y: &[f64; 4], dy: &mut [f64; 4]) -> Result<()> {
        *dy = eom_rhs(&PhasePoint::from_slice(y), &self.params)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
    pub initial_energy: f64,
    pub max_energy_drift: f64,
    /// Set when the integration stopped before `t_end`.
    pub truncated: Option<String>,
}

impl Trajectory {
    pub fn final_point(&self) -> PhasePoint {
        *self.points.last().expect("trajectory holds its initial point")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds its initial time")
    }
}

/// Integrate from `x0` at t = 0 to `t_end` (negative for backward time), recording every step.
pub fn integrate(x0: &PhasePoint, params: &ModelParams, t_end: f64, tol: f64) -> Result<Trajectory> {
    if !x0.is_interior() {
        return Err(DickeError::SingularBoundary {
            radius_sq: x0.atomic_radius_sq(),
            guard: BOUNDARY_GUARD,
        });
    }
    let flow = Flow { params: *params };
    let e0 = hamiltonian_value(x0, params)?;
    let mut traj = Trajectory {
        times: vec![0.0],
        points: vec![*x0],
        initial_energy: e0,
        max_energy_drift: 0.0,
        truncated: None,
    };
    if t_end == 0.0 {
        return Ok(traj);
    }
    let mut st = Dop853::new(&flow, 0.0, x0.to_array(), t_end > 0.0, Tolerances::new(tol))?;
    while st.t() != t_end {
        if let Err(e) = st.step(t_end) {
            traj.truncated = Some(format!("stopped at t = {}: {e}", st.t()));
            break;
        }
        let x = PhasePoint::from_slice(st.y());
        let drift = (hamiltonian_value(&x, params)? - e0).abs();
        traj.max_energy_drift = traj.max_energy_drift.max(drift);
        traj.times.push(st.t());
        traj.points.push(x);
    }
    Ok(traj)
}

/// Roots q1,± of H_c(q1, q2, p1 = 0, p2) = ℰ, with q1,+ ≥ q1,−.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Q1Roots {
    pub plus: f64,
    pub minus: f64,
}

impl Q1Roots {
    pub fn is_double(&self) -> bool {
        self.plus == self.minus
    }
}

/// Solve the energy-shell quadratic for q1. `None` when (q2, p2) is outside the shell.
pub fn section_branch_q1(q2: f64, p2: f64, energy: f64, params: &ModelParams) -> Option<Q1Roots> {
    let rho2 = q2 * q2 + p2 * p2;
    if rho2 > 4.0 {
        return None;
    }
    let ModelParams {
        omega, omega0, lambda, ..
    } = *params;
    let s = (4.0 - rho2).sqrt();
    // (ω/2) q1² + (λ q2 s) q1 + (ω0/2) ρ² − ω0 − ℰ = 0
    let b = lambda * q2 * s / omega;
    let disc = b * b - (omega0 * rho2 - 2.0 * (omega0 + energy)) / omega;
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    Some(Q1Roots {
        plus: -b + root,
        minus: -b - root,
    })
}

/// Lift a section point onto the shell with p1 = 0, q1 = q1,+.
pub fn lift_to_section(q2: f64, p2: f64, energy: f64, params: &ModelParams) -> Option<PhasePoint> {
    section_branch_q1(q2, p2, energy, params).map(|r| PhasePoint::new(r.plus, q2, 0.0, p2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPoint {
    pub seed_id: usize,
    pub crossing_idx: usize,
    pub q2: f64,
    pub p2: f64,
    pub q1: f64,
    pub p1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionPointSet {
    pub energy: f64,
    pub points: Vec<SectionPoint>,
    /// Both p1 sign-change directions are recorded when q1 > 0.
    pub crossing_rule: String,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionOptions {
    pub n_crossings: usize,
    pub t_max: f64,
    pub tol: f64,
}

impl Default for SectionOptions {
    fn default() -> Self {
        Self {
            n_crossings: 200,
            t_max: 5000.0,
            tol: 1e-10,
        }
    }
}

/// Record (q2, p2) at every p1 = 0 crossing with q1 > 0 for each seed on the ℰ shell.
pub fn poincare_section(
    energy: f64,
    params: &ModelParams,
    seeds: &[(f64, f64)],
    opts: &SectionOptions,
) -> Result<SectionPointSet> {
    let lifted: Vec<PhasePoint> = seeds
        .iter()
        .map(|&(q2, p2)| {
            lift_to_section(q2, p2, energy, params)
                .ok_or_else(|| DickeError::Domain(format!("seed ({q2}, {p2}) is outside the shell at E = {energy}")))
        })
        .collect::<Result<_>>()?;

    let per_seed: Vec<(Vec<SectionPoint>, Option<String>)> = lifted
        .par_iter()
        .enumerate()
        .map(|(id, x0)| trace_crossings(id, x0, params, opts))
        .collect();

    let mut points = Vec::new();
    let mut diagnostics = Vec::new();
    for (pts, diag) in per_seed {
        points.extend(pts);
        diagnostics.extend(diag);
    }
    Ok(SectionPointSet {
        energy,
        points,
        crossing_rule: "p1 = 0, both directions, q1 > 0".into(),
        diagnostics,
    })
}

fn trace_crossings(
    seed_id: usize,
    x0: &PhasePoint,
    params: &ModelParams,
    opts: &SectionOptions,
) -> (Vec<SectionPoint>, Option<String>) {
    let mut out = Vec::new();
    if !x0.is_interior() {
        return (out, Some(format!("seed {seed_id}: lifted point on the atomic boundary")));
    }
    let flow = Flow { params: *params };
    let mut st = match Dop853::new(&flow, 0.0, x0.to_array(), true, Tolerances::new(opts.tol)) {
        Ok(st) => st,
        Err(e) => return (out, Some(format!("seed {seed_id}: {e}"))),
    };
    while out.len() < opts.n_crossings && st.t() < opts.t_max {
        let p_old = st.y()[2];
        if let Err(e) = st.step(opts.t_max) {
            return (out, Some(format!("seed {seed_id}: stopped at t = {}: {e}", st.t())));
        }
        let p_new = st.y()[2];
        let crossed = (p_old < 0.0 && p_new >= 0.0) || (p_old > 0.0 && p_new <= 0.0);
        if !crossed {
            continue;
        }
        let seg = *st.last_segment().expect("accepted step has a dense segment");
        let Some(tc) = brent_root(|t| seg.component(t, 2), seg.t_old, seg.t_new(), 1e-14) else {
            continue;
        };
        let y = seg.eval(tc);
        if y[0] > 0.0 {
            out.push(SectionPoint {
                seed_id,
                crossing_idx: out.len(),
                q2: y[1],
                p2: y[3],
                q1: y[0],
                p1: y[2],
            });
        }
    }
    (out, None)
}

/// Uniform `per_axis × per_axis` grid over [−2, 2]² restricted to interior shell points.
pub fn default_seeds(energy: f64, params: &ModelParams, per_axis: usize) -> Vec<(f64, f64)> {
    let mut seeds = Vec::new();
    for a in 0..per_axis {
        for b in 0..per_axis {
            let q2 = -2.0 + 4.0 * (a as f64 + 0.5) / per_axis as f64;
            let p2 = -2.0 + 4.0 * (b as f64 + 0.5) / per_axis as f64;
            if let Some(x) = lift_to_section(q2, p2, energy, params) {
                if x.is_interior() {
                    seeds.push((q2, p2));
                }
            }
        }
    }
    seeds
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(lambda: f64) -> ModelParams {
        ModelParams::resonant(lambda, 2, 2).unwrap()
    }

    #[test]
    fn energy_at_origin_and_unit_point() {
        assert_eq!(hamiltonian_value(&PhasePoint::origin(), &params(0.7)).unwrap(), -1.0);
        let x = PhasePoint::new(1.0, 1.0, 1.0, 1.0);
        assert!((hamiltonian_value(&x, &params(0.0)).unwrap() - 1.0).abs() < 1e-15);
        let bad = PhasePoint::new(0.0, 2.0, 0.0, 0.5);
        assert!(matches!(hamiltonian_value(&bad, &params(0.5)), Err(DickeError::Domain(_))));
    }

    #[test]
    fn origin_is_a_fixed_point() {
        assert_eq!(eom_rhs(&PhasePoint::origin(), &params(0.9)).unwrap(), [0.0; 4]);
    }

    #[test]
    fn boundary_is_singular() {
        let x = PhasePoint::new(0.1, 2.0, 0.0, 0.0);
        assert!(matches!(eom_rhs(&x, &params(0.5)), Err(DickeError::SingularBoundary { .. })));
    }

    #[test]
    fn branch_roots_at_origin() {
        let r = section_branch_q1(0.0, 0.0, -1.0, &params(0.5)).unwrap();
        assert_eq!(r.plus, 0.0);
        assert!(r.is_double());
        let r = section_branch_q1(0.0, 0.0, -0.5, &params(0.5)).unwrap();
        assert!((r.plus - 1.0).abs() < 1e-15 && (r.minus + 1.0).abs() < 1e-15);
        assert!(section_branch_q1(0.0, 0.0, -1.5, &params(0.5)).is_none());
        assert!(section_branch_q1(2.0, 0.5, 0.0, &params(0.5)).is_none());
    }

    #[test]
    fn branch_roots_lie_on_the_shell_off_resonance() {
        let p = ModelParams::new(1.7, 0.6, 0.9, 2, 2).unwrap();
        for &(q2, p2, e) in &[(0.3, -0.4, -0.2), (-1.1, 0.5, 0.4), (0.9, 1.2, 1.0)] {
            let r = section_branch_q1(q2, p2, e, &p).unwrap();
            for q1 in [r.plus, r.minus] {
                let h = hamiltonian_value(&PhasePoint::new(q1, q2, 0.0, p2), &p).unwrap();
                assert!((h - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uncoupled_flow_matches_analytic_oscillators() {
        let p = ModelParams::new(1.3, 0.8, 0.0, 2, 2).unwrap();
        let x0 = PhasePoint::new(0.7, 0.4, -0.2, 0.3);
        let traj = integrate(&x0, &p, 100.0, 1e-13).unwrap();
        let t = traj.final_time();
        assert_eq!(t, 100.0);
        let x = traj.final_point();
        let q1 = x0.q1 * (1.3 * t).cos() + x0.p1 * (1.3 * t).sin();
        let q2 = x0.q2 * (0.8 * t).cos() + x0.p2 * (0.8 * t).sin();
        assert!((x.q1 - q1).abs() < 1e-8);
        assert!((x.q2 - q2).abs() < 1e-8);
        assert!(traj.max_energy_drift <= 1e-10);
    }

    #[test]
    fn integrate_rejects_boundary_start() {
        let x0 = PhasePoint::new(0.0, 2.0, 0.0, 0.0);
        assert!(integrate(&x0, &params(0.5), 1.0, 1e-10).is_err());
    }

    #[test]
    fn tangent_map_is_symplectic_gradient_structure() {
        let x = PhasePoint::new(0.3, 0.5, -0.2, 0.7);
        let p = params(0.8);
        let h = hessian(&x, &p).unwrap();
        for i in 0..4 {
            for k in 0..4 {
                assert_eq!(h[i][k], h[k][i]);
            }
        }
        let v = [1.0, 0.0, 0.0, 0.0];
        let t = tangent_map(&h, &v);
        assert_eq!(t, [h[2][0], h[3][0], -h[0][0], -h[1][0]]);
    }

    #[test]
    fn section_crossings_obey_event_contract() {
        let p = params(0.8);
        let seeds = default_seeds(-0.4, &p, 4);
        assert!(!seeds.is_empty());
        let opts = SectionOptions {
            n_crossings: 20,
            t_max: 500.0,
            tol: 1e-11,
        };
        let set = poincare_section(-0.4, &p, &seeds, &opts).unwrap();
        assert!(!set.points.is_empty());
        for pt in &set.points {
            assert!(pt.p1.abs() <= 1e-9, "p1 = {}", pt.p1);
            assert!(pt.q1 > 0.0);
            let h = hamiltonian_value(&PhasePoint::new(pt.q1, pt.q2, pt.p1, pt.p2), &p).unwrap();
            assert!((h + 0.4).abs() < 1e-8);
        }
    }

    #[test]
    fn off_shell_seed_is_rejected() {
        let p = params(0.3);
        let err = poincare_section(-0.9, &p, &[(1.9, 0.0)], &SectionOptions::default()).unwrap_err();
        assert!(matches!(err, DickeError::Domain(_)));
    }
}
