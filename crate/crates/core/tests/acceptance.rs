//! Acceptance suite: one PASS/FAIL line per primary criterion.
//!
//! Runs without the libtest harness so the verdicts are always printed. Positional
//! arguments filter criteria by id substring (`cargo test --test acceptance -- C3`).
//! `DICKE_FULL_SCALE=1` additionally runs the full-size power-law scan (hours).

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use dicke_core::classical::*;
use dicke_core::grid::PolarGrid;
use dicke_core::husimi::*;
use dicke_core::lyapunov::*;
use dicke_core::mixed::*;
use dicke_core::spectrum::*;
use dicke_core::stats::*;
use dicke_core::*;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Lyapunov maps are shared between criteria.
#[derive(Default)]
struct Cache {
    maps: HashMap<(u64, u64, usize), LyapunovField>,
}

impl Cache {
    fn map(&mut self, lambda: f64, energy: f64, grid_n: usize) -> &LyapunovField {
        self.maps
            .entry((lambda.to_bits(), energy.to_bits(), grid_n))
            .or_insert_with(|| {
                let p = ModelParams::resonant(lambda, 2, 2).unwrap();
                let grid = PolarGrid::new(grid_n, grid_n).unwrap();
                lyapunov_map(energy, &p, &grid, 1000.0).unwrap()
            })
    }
}

fn c1_uncoupled_exactness(_: &mut Cache) -> Verdict {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for n_atoms in (2..=20).step_by(2) {
        for n_trc in (2..=20).step_by(2) {
            let p = ModelParams::resonant(0.0, n_atoms, n_trc).unwrap();
            let j = p.j();
            let mut expected: Vec<f64> = (0..=n_trc as i64)
                .flat_map(|n| (-j..=j).filter(move |m| (n + m + j) % 2 == 0).map(move |m| (n + m) as f64))
                .collect();
            expected.sort_by(f64::total_cmp);
            let got = spectrum_for(&p).unwrap();
            if got.len() != expected.len() {
                return verdict(false, format!("N={n_atoms} n_trc={n_trc}: {} levels, expected {}", got.len(), expected.len()));
            }
            for (a, b) in got.eigenvalues().iter().zip(&expected) {
                worst = worst.max((a - b).abs());
            }
            cases += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-10 && secs < 1.0,
        format!("{cases} (N, n_trc) cases, max |ΔE| = {worst:.1e} (≤ 1e-10), {secs:.2} s (< 1 s)"),
    )
}

fn fig3_spectrum() -> (ModelParams, BasisIndex, Spectrum) {
    let p = ModelParams::resonant(0.47, 100, 170).unwrap();
    let b = build_even_parity_basis(&p).unwrap();
    let h = assemble_hamiltonian(&p, &b).unwrap();
    let (lo, hi) = window_bounds(-0.4, DEFAULT_DELTA_E);
    let s = diagonalize_window(&h, lo, hi).unwrap();
    (p, b, s)
}

fn c2_eigenvalue_regression(_: &mut Cache) -> Verdict {
    let (_, _, s) = fig3_spectrum();
    let targets = [(327, -0.4391), (340, -0.4297), (394, -0.3754), (407, -0.3641)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, want) in targets {
        let got = s.epsilon(n);
        let ok = (got - want).abs() <= 1e-3;
        pass &= ok;
        parts.push(format!("ε_{n} = {got:.5} vs {want} ({})", if ok { "ok" } else { "off" }));
    }
    let shifted: Vec<String> = targets.iter().map(|(n, _)| format!("ε_{} = {:.5}", n - 1, s.epsilon(n - 1))).collect();
    verdict(pass, format!("{}; info, 1-based reading: {}", parts.join(", "), shifted.join(", ")))
}

/// Bulk rescaled ⟨r⟩ and KS distances for N = 60, n_trc = 300; the ceiling comes from n_trc + 20.
fn ratio_bulk(lambda: f64) -> (RatioReport, Vec<f64>) {
    let p = ModelParams::resonant(lambda, 60, 300).unwrap();
    let base = spectrum_for(&p).unwrap().epsilons();
    let refined = spectrum_for(&p.with_n_trc(320)).unwrap().epsilons();
    let ceiling = convergence_ceiling(&base, &refined, CONVERGENCE_TOL);
    (bulk_report(&base, ceiling, DEFAULT_RATIO_BINS).unwrap(), base)
}

fn c3_ratio_crossover(_: &mut Cache) -> Verdict {
    let (weak, _) = ratio_bulk(0.1);
    let (strong, _) = ratio_bulk(1.0);
    let weak_ok = !weak.closer_to_goe() && weak.rescaled_mean_r < 0.2;
    let strong_ok = strong.closer_to_goe() && strong.rescaled_mean_r > 0.8;
    let scan: Vec<(f64, f64)> = [0.35, 0.40, 0.45, 0.50, 0.55]
        .iter()
        .map(|&l| (l, ratio_bulk(l).0.rescaled_mean_r))
        .collect();
    let rise_ok = scan.first().unwrap().1 < 0.2 && scan.last().unwrap().1 > 0.8;
    let scan_txt: Vec<String> = scan.iter().map(|(l, r)| format!("{l:.2}→{r:.3}")).collect();
    verdict(
        weak_ok && strong_ok && rise_ok,
        format!(
            "λ=0.1: ⟨r̃⟩={:.3}, KS_P={:.3} < KS_GOE={:.3} [{}]; λ=1: ⟨r̃⟩={:.3}, KS_GOE={:.3} < KS_P={:.3} [{}]; scan {} [{}: need <0.2 at 0.35 and >0.8 at 0.55]",
            weak.rescaled_mean_r,
            weak.ks_poisson,
            weak.ks_goe,
            if weak_ok { "ok" } else { "off" },
            strong.rescaled_mean_r,
            strong.ks_goe,
            strong.ks_poisson,
            if strong_ok { "ok" } else { "off" },
            scan_txt.join(" "),
            if rise_ok { "ok" } else { "off" },
        ),
    )
}

fn c4_windowed_statistics(_: &mut Cache) -> Verdict {
    let p = ModelParams::resonant(1.0, 60, 300).unwrap();
    let eps = spectrum_for(&p).unwrap().epsilons();
    let low = ratio_report(&spacing_ratios(&eps[0..150]).unwrap(), DEFAULT_RATIO_BINS).unwrap();
    let high = ratio_report(&spacing_ratios(&eps[244..394]).unwrap(), DEFAULT_RATIO_BINS).unwrap();
    verdict(
        !low.closer_to_goe() && high.closer_to_goe(),
        format!(
            "[ε_0, ε_149]: KS_P={:.3}, KS_GOE={:.3}; [ε_244, ε_393]: KS_GOE={:.3}, KS_P={:.3}",
            low.ks_poisson, low.ks_goe, high.ks_goe, high.ks_poisson
        ),
    )
}

fn c5_classical_threshold(cache: &mut Cache) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for lambda in [0.1, 0.2, 0.3, 0.4] {
        for energy in [-1.0, -0.4] {
            let mut e = energy;
            let mut avg = averaged_lyapunov(cache.map(lambda, e, 60));
            if matches!(avg, Err(DickeError::EmptyShell { .. })) {
                // below the critical coupling ℰ = −1 is the ground-state point itself
                e = energy + 0.01;
                avg = averaged_lyapunov(cache.map(lambda, e, 60));
            }
            let avg = avg.unwrap();
            let ok = avg <= 0.012;
            pass &= ok;
            let note = if e != energy { format!(" (ℰ={energy} shell empty, used ℰ={e})") } else { String::new() };
            parts.push(format!("λ={lambda},ℰ={energy}: {avg:.4}{note}"));
        }
    }
    let l8 = averaged_lyapunov(cache.map(0.8, -0.4, 60)).unwrap();
    let l5 = averaged_lyapunov(cache.map(0.5, -0.4, 60)).unwrap();
    let l4 = averaged_lyapunov(cache.map(0.4, -0.4, 60)).unwrap();
    let order = l8 > l5 && l5 > l4;
    parts.push(format!("ordering at ℰ=−0.4: {l8:.4} > {l5:.4} > {l4:.4} ({})", if order { "ok" } else { "off" }));
    verdict(pass && order, parts.join("; "))
}

fn c6_integration_audits(_: &mut Cache) -> Verdict {
    let mut worst_drift: f64 = 0.0;
    for (lambda, energy, q2, p2) in [(0.8, -0.4, 0.5, 0.3), (0.5, -0.4, -0.7, 0.2), (0.47, -0.5, 0.3, -0.6), (0.2, -0.4, 0.4, 0.4)] {
        let p = ModelParams::resonant(lambda, 2, 2).unwrap();
        let x0 = lift_to_section(q2, p2, energy, &p).unwrap();
        let traj = integrate(&x0, &p, 1000.0, 1e-12).unwrap();
        assert!(traj.truncated.is_none());
        worst_drift = worst_drift.max(traj.max_energy_drift);
    }
    let mut worst_det: f64 = 0.0;
    for (lambda, energy, q2, p2) in [(0.3, -0.4, 0.5, 0.3), (0.47, -0.8, 0.2, 0.1), (0.1, -0.2, -0.6, 0.8)] {
        let p = ModelParams::resonant(lambda, 2, 2).unwrap();
        let x0 = lift_to_section(q2, p2, energy, &p).unwrap();
        let (omega, _) = fundamental_matrix(&x0, &p, 100.0, 1e-12).unwrap();
        worst_det = worst_det.max((det4(&omega) - 1.0).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = ModelParams::resonant(0.83, 2, 2).unwrap();
    let h = 1e-6;
    let grad = |x: &PhasePoint| {
        let f = eom_rhs(x, &p).unwrap();
        [-f[2], -f[3], f[0], f[1]]
    };
    let mut worst_hess: f64 = 0.0;
    for _ in 0..100 {
        let r = 1.9 * rng.random::<f64>().sqrt();
        let th = std::f64::consts::TAU * rng.random::<f64>();
        let x = PhasePoint::new(rng.random_range(-2.0..2.0), r * th.cos(), rng.random_range(-2.0..2.0), r * th.sin());
        let hess = hessian(&x, &p).unwrap();
        for k in 0..4 {
            let mut xp = x.to_array();
            let mut xm = x.to_array();
            xp[k] += h;
            xm[k] -= h;
            let (gp, gm) = (grad(&PhasePoint::from_slice(&xp)), grad(&PhasePoint::from_slice(&xm)));
            for i in 0..4 {
                worst_hess = worst_hess.max((hess[i][k] - (gp[i] - gm[i]) / (2.0 * h)).abs());
            }
        }
    }
    verdict(
        worst_drift <= 1e-8 && worst_det <= 1e-4 && worst_hess <= 1e-5,
        format!(
            "energy drift {worst_drift:.1e} (≤ 1e-8), |det Ω − 1| {worst_det:.1e} (≤ 1e-4, regular orbits), Hessian FD {worst_hess:.1e} (≤ 1e-5)"
        ),
    )
}

fn c7_husimi_bounds(cache: &mut Cache) -> Verdict {
    let (p, _, s) = fig3_spectrum();
    let grid = PolarGrid::new(60, 60).unwrap();
    let mask = chaos_mask(cache.map(0.47, -0.4, 60), DEFAULT_LAMBDA_THRESHOLD).unwrap();
    let surface = HusimiSurface::new(-0.4, &p, &grid).unwrap();
    let idx = select_window_states(&s.epsilons(), -0.4, DEFAULT_DELTA_E).unwrap();
    let (records, fields) = window_overlaps(&s, &idx, &surface, &mask).unwrap();
    let worst_norm = fields.iter().map(|f| (f.discrete_norm() - 1.0).abs()).fold(0.0, f64::max);
    let q_nonneg = fields.iter().all(|f| f.field.accessible().all(|(_, q)| q >= 0.0));
    let m_ok = records.iter().all(|r| (-1.0..=1.0).contains(&r.m));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_overlap: f64 = 0.0;
    for _ in 0..50 {
        let alpha = Complex64::from_polar(rng.random_range(0.0..50f64.sqrt()), rng.random_range(0.0..6.3));
        let xi = Complex64::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
        let j = rng.random_range(1..=200);
        let bsum: f64 = boson_overlaps(alpha, 300).iter().map(|z| z.norm_sqr()).sum();
        let ssum: f64 = spin_overlaps(xi, j).iter().map(|z| z.norm_sqr()).sum();
        worst_overlap = worst_overlap.max((bsum - 1.0).abs()).max((ssum - 1.0).abs());
    }
    let m_of = |n: usize| records.iter().find(|r| r.index == n).map(|r| r.m).unwrap_or(f64::NAN);
    verdict(
        worst_norm <= 1e-9 && q_nonneg && m_ok && worst_overlap <= 1e-12,
        format!(
            "{} fields: max |ΣQ/𝒩 − 1| = {worst_norm:.1e}, Q ≥ 0: {q_nonneg}, M ∈ [−1,1]: {m_ok}, overlap norms {worst_overlap:.1e}; info: M_339 = {:.3}, M_340 = {:.3}, M_383 = {:.3}, M_384 = {:.3}",
            fields.len(),
            m_of(339),
            m_of(340),
            m_of(383),
            m_of(384)
        ),
    )
}

fn c8_double_peak(cache: &mut Cache) -> Verdict {
    let mask = chaos_mask(cache.map(0.5, -0.4, 150), DEFAULT_LAMBDA_THRESHOLD).unwrap();
    let cfg = PipelineConfig::resonant(0.5, -0.4);
    let scan = ensemble_scan(&parse_ensembles("112:128:4").unwrap(), &cfg, &mask).unwrap();
    let run = &scan.ensembles[0];
    let records: Vec<OverlapRecord> = run.records().copied().collect();
    let h = index_distribution(&records, DEFAULT_M_BINS).unwrap();
    let bins = h.bins();
    let outer = h.mass(0) + h.mass(bins - 1);
    let best_inner = (1..bins / 2).map(|k| h.mass(k) + h.mass(bins - 1 - k)).fold(0.0, f64::max);
    verdict(
        outer > best_inner && run.is_complete(),
        format!(
            "{} states, complete: {}; outer pair (|M| > 0.9) mass {outer:.3} vs largest interior pair {best_inner:.3}; counts {:?}",
            records.len(),
            run.is_complete(),
            h.counts
        ),
    )
}

const COMBOS: [(f64, f64); 3] = [(0.47, -0.5), (0.47, -0.4), (0.5, -0.4)];

fn scan_points(cache: &mut Cache, lambda: f64, energy: f64, ensembles: &str, grid_n: usize) -> (Vec<EnsemblePoint>, PowerLawFit) {
    let mask = chaos_mask(cache.map(lambda, energy, grid_n), DEFAULT_LAMBDA_THRESHOLD).unwrap();
    let cfg = PipelineConfig::resonant(lambda, energy);
    let scan = ensemble_scan(&parse_ensembles(ensembles).unwrap(), &cfg, &mask).unwrap();
    let points = summarize(&scan, DEFAULT_MC).unwrap();
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.mean_n, p.mean_rm)).collect();
    (points, powerlaw_fit(&xy).unwrap())
}

fn strictly_decreasing(points: &[EnsemblePoint]) -> bool {
    points.windows(2).all(|w| w[1].mean_rm < w[0].mean_rm)
}

fn c9_power_law(cache: &mut Cache) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (lambda, energy) in COMBOS {
        let (points, fit) = scan_points(cache, lambda, energy, "36:44:4,56:64:4,76:84:4", 60);
        let ok = strictly_decreasing(&points) && fit.gamma > 0.0 && points.iter().all(|p| p.complete);
        pass &= ok;
        let rms: Vec<String> = points.iter().map(|p| format!("{:.3}", p.mean_rm)).collect();
        parts.push(format!(
            "(λ={lambda},ℰ={energy}) ⟨R_m⟩ at ⟨N⟩=40,60,80: {} γ={:.3} r²={:.3}",
            rms.join(">"),
            fit.gamma,
            fit.r_squared
        ));
    }
    let full = std::env::var("DICKE_FULL_SCALE").is_ok_and(|v| v == "1");
    if full {
        for (lambda, energy) in COMBOS {
            let (points, fit) = scan_points(cache, lambda, energy, "72:88:4,92:108:4,112:128:4", 150);
            let ok = strictly_decreasing(&points)
                && (0.28..=0.65).contains(&fit.gamma)
                && fit.r_squared > 0.9
                && points.iter().all(|p| p.complete);
            pass &= ok;
            let rms: Vec<String> = points.iter().map(|p| format!("{:.3}", p.mean_rm)).collect();
            parts.push(format!(
                "full (λ={lambda},ℰ={energy}) ⟨R_m⟩ at ⟨N⟩=80,100,120: {} γ={:.3} (band [0.28,0.65]) r²={:.3}",
                rms.join(","),
                fit.gamma,
                fit.r_squared
            ));
        }
    } else {
        parts.push("full scale not run (set DICKE_FULL_SCALE=1)".into());
    }
    verdict(pass, format!("desk scale: {}", parts.join("; ")))
}

fn c10_oracle_cross_checks(_: &mut Cache) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst_root: f64 = 0.0;
    let mut tested = 0;
    while tested < 10_000 {
        let p = ModelParams::new(rng.random_range(0.3..2.0), rng.random_range(0.3..2.0), rng.random_range(0.0..1.5), 2, 2).unwrap();
        let (q2, p2) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let e = rng.random_range(-1.5..1.0);
        let Some(r) = section_branch_q1(q2, p2, e, &p) else { continue };
        for q1 in [r.plus, r.minus] {
            let h = hamiltonian_value(&PhasePoint::new(q1, q2, 0.0, p2), &p).unwrap();
            worst_root = worst_root.max((h - e).abs());
        }
        tested += 1;
    }
    let mut invariant = true;
    for _ in 0..100 {
        let mut ints: Vec<i64> = (0..rng.random_range(3..200)).map(|_| rng.random_range(-100_000..100_000)).collect();
        ints.sort();
        let levels: Vec<f64> = ints.iter().map(|&v| v as f64).collect();
        let a = 2f64.powi(rng.random_range(-8..8));
        let shift = rng.random_range(-1000..1000) as f64;
        let mapped: Vec<f64> = levels.iter().map(|x| a * x + a * shift).collect();
        invariant &= spacing_ratios(&levels).unwrap() == spacing_ratios(&mapped).unwrap();
    }
    let mut worst_fit: f64 = 0.0;
    for (c, g) in [(2.0, 0.5), (0.7, 0.4357), (13.0, 1.3)] {
        let pts: Vec<(f64, f64)> = [80.0f64, 100.0, 120.0].iter().map(|&n| (n, c * n.powf(-g))).collect();
        let fit = powerlaw_fit(&pts).unwrap();
        worst_fit = worst_fit
            .max((fit.gamma - g).abs())
            .max((fit.prefactor - c).abs() / c)
            .max((fit.r_squared - 1.0).abs());
    }
    verdict(
        worst_root <= 1e-12 && invariant && worst_fit <= 1e-12,
        format!(
            "10^4 shell roots max |H − ℰ| = {worst_root:.1e}; 100 spectra exactly invariant: {invariant}; power-law fit error {worst_fit:.1e}"
        ),
    )
}

type Criterion = (&'static str, &'static str, fn(&mut Cache) -> Verdict);

const CRITERIA: [Criterion; 10] = [
    ("C1", "λ=0 exactness", c1_uncoupled_exactness),
    ("C2", "eigenvalue regression N=100", c2_eigenvalue_regression),
    ("C3", "ratio-statistics crossover", c3_ratio_crossover),
    ("C4", "windowed energy dependence", c4_windowed_statistics),
    ("C5", "classical integrability threshold", c5_classical_threshold),
    ("C6", "integration audits", c6_integration_audits),
    ("C7", "Husimi normalisation and bounds", c7_husimi_bounds),
    ("C8", "double-peaked P(M)", c8_double_peak),
    ("C9", "power-law decay of R_m", c9_power_law),
    ("C10", "oracle cross-checks", c10_oracle_cross_checks),
];

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut cache = Cache::default();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, run) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| id == f || name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let v = run(&mut cache);
        ran += 1;
        if !v.pass {
            failed += 1;
        }
        println!(
            "[{}] {id} {name} ({:.1} s): {}",
            if v.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            v.detail
        );
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
