//! Random-matrix and closed-form oracles for the quantum spectrum and ratio statistics.

use dicke_core::eigen::symmetric_eigen;
use dicke_core::spectrum::{check_truncation_convergence, diagonalize, diagonalize_window, spectrum_for};
use dicke_core::stats::*;
use dicke_core::{assemble_hamiltonian, build_even_parity_basis, hilbert_dims, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Standard normal deviate by Box–Muller.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn goe_levels(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i + i * n] = normal(rng) * 2f64.sqrt();
        for k in 0..i {
            let v = normal(rng);
            a[i + k * n] = v;
            a[k + i * n] = v;
        }
    }
    symmetric_eigen(a, n, false).unwrap().0
}

#[test]
fn goe_matrices_reproduce_the_goe_mean_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut ratios = Vec::new();
    for _ in 0..10 {
        let levels = goe_levels(600, &mut rng);
        ratios.extend(spacing_ratios(&levels[50..550]).unwrap().ratios);
    }
    let (mean, rescaled) = mean_and_rescaled(&ratios).unwrap();
    assert!((mean - MEAN_R_GOE).abs() < 0.01, "⟨r⟩ = {mean}");
    assert!((rescaled - 1.0).abs() < 0.05);
    assert!(ks_distance(&ratios, goe_cdf) < ks_distance(&ratios, poisson_cdf));
}

#[test]
fn uncorrelated_levels_reproduce_the_poisson_mean_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut levels: Vec<f64> = (0..20000).map(|_| rng.random::<f64>()).collect();
    levels.sort_by(f64::total_cmp);
    let sample = spacing_ratios(&levels).unwrap();
    let report = ratio_report(&sample, DEFAULT_RATIO_BINS).unwrap();
    assert!((report.mean_r - MEAN_R_POISSON).abs() < 0.01, "⟨r⟩ = {}", report.mean_r);
    assert!(report.rescaled_mean_r.abs() < 0.05);
    assert!(!report.closer_to_goe());
}

#[test]
fn uncoupled_spectrum_is_the_sorted_multiset() {
    for n_atoms in (2..=20).step_by(2) {
        for n_trc in (2..=20).step_by(2) {
            let p = ModelParams::resonant(0.0, n_atoms, n_trc).unwrap();
            let j = p.j();
            let mut expected: Vec<f64> = (0..=n_trc as i64)
                .flat_map(|n| (-j..=j).filter(move |m| (n + m + j) % 2 == 0).map(move |m| (n + m) as f64))
                .collect();
            expected.sort_by(f64::total_cmp);
            let got = spectrum_for(&p).unwrap();
            assert_eq!(got.len(), expected.len());
            for (a, b) in got.eigenvalues().iter().zip(&expected) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn dense_band_and_windowed_paths_agree() {
    let p = ModelParams::resonant(0.9, 20, 40).unwrap();
    let b = build_even_parity_basis(&p).unwrap();
    let h = assemble_hamiltonian(&p, &b).unwrap();
    let dense = diagonalize(&h).unwrap();
    let band = spectrum_for(&p).unwrap();
    let win = diagonalize_window(&h, -0.5, -0.2).unwrap();
    for ((a, b), c) in dense.eigenvalues().iter().zip(band.eigenvalues()).zip(win.eigenvalues()) {
        assert!((a - b).abs() < 1e-9 && (a - c).abs() < 1e-9);
    }
    assert!(!win.vector_indices().is_empty());
    for &n in win.vector_indices() {
        let (u, v) = (dense.vector(n).unwrap(), win.vector(n).unwrap());
        let overlap: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
        assert!((overlap.abs() - 1.0).abs() < 1e-8, "state {n}");
    }
}

#[test]
fn dimension_formula_for_paper_sizes() {
    let p = ModelParams::resonant(1.0, 60, 300).unwrap();
    assert_eq!(hilbert_dims(&p).unwrap().1, 9181);
    let p = ModelParams::resonant(0.47, 100, 170).unwrap();
    assert_eq!(hilbert_dims(&p).unwrap().1, 8636);
}

#[test]
fn low_window_converges_quickly_in_truncation() {
    let p = ModelParams::resonant(0.7, 20, 80).unwrap();
    let report = check_truncation_convergence(&p, (-1.5, -0.3), 20).unwrap();
    assert!(report.converged, "{report:?}");
    assert!(report.states > 0);
}

#[test]
fn ratio_histogram_is_a_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let levels = goe_levels(300, &mut rng);
    let r = ratio_report(&spacing_ratios(&levels).unwrap(), DEFAULT_RATIO_BINS).unwrap();
    assert!((r.histogram.integral() - 1.0).abs() < 1e-12);
}
