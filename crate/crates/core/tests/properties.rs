//! Property tests for the structural invariants: trace and Hermiticity
//! preservation, monotone photon loss, ladder algebra, Poissonian
//! statistics, loss nonnegativity, and PINEM unitarity.

use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;

use nbic_core::coupling::{kappa_of_n, re_k_l, CouplingModel};
use nbic_core::design::detuning_for_fock;
use nbic_core::dynamics::{
    dissipator_apply, evolve_diagonal, linspace, SimulationConfig,
};
use nbic_core::fockspace::{
    coherent_state_with_tail, poisson_pmf, truncation_dim, DensityMatrix,
};
use nbic_core::observables::{mean_var, squeezing_db};
use nbic_core::pinem::pinem_spectrum;
use nbic_core::scalar::cr;

const OMEGA_A: f64 = 1.47;

fn quadratic(n0: usize, kappa_i: f64) -> CouplingModel<f64> {
    CouplingModel::QuadraticLoss {
        omega0: OMEGA_A + detuning_for_fock(n0, OMEGA_A, 5e-6),
        c2: 6.802721088435374,
        kappa_i,
    }
}

/// Random Hermitian unit-trace matrix from raw reals.
fn hermitian_state(dim: usize, raw: &[f64]) -> DensityMatrix<f64> {
    let mut m: Array2<Complex64> = Array2::zeros((dim, dim));
    let mut it = raw.iter().copied().cycle();
    let mut next = move || it.next().unwrap();
    for i in 0..dim {
        for j in i..dim {
            if i == j {
                m[[i, j]] = Complex64::new(next().abs() + 0.05, 0.0);
            } else {
                let v = Complex64::new(next(), next()) * 0.25;
                m[[i, j]] = v;
                m[[j, i]] = v.conj();
            }
        }
    }
    let tr: f64 = (0..dim).map(|i| m[[i, i]].re).sum();
    DensityMatrix::from_matrix_unchecked(m.mapv(|v| v / tr))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dissipator_is_traceless_and_hermitian(
        raw in prop::collection::vec(-1.0f64..1.0, 64),
        n0 in 1usize..8,
        kappa_i in 0.0f64..1e-5,
    ) {
        let dim = 8;
        let rho = hermitian_state(dim, &raw);
        let config = SimulationConfig::new(OMEGA_A, 5e-6, quadratic(n0, kappa_i), dim);
        let d = dissipator_apply(&rho, &config);
        let tr: Complex64 = d.diag().iter().copied().sum();
        prop_assert!(tr.norm() < 1e-15, "Tr D[rho] = {tr}");
        for m in 0..dim {
            for n in 0..dim {
                prop_assert!((d[[m, n]] - d[[n, m]].conj()).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn mean_photon_number_never_grows_undriven(
        mean0 in 2.0f64..12.0,
        n0 in 1usize..12,
        kappa_i in 0.0f64..1e-6,
    ) {
        let dim = truncation_dim(mean0, 1e-10).max(16);
        let config = SimulationConfig::new(OMEGA_A, 5e-6, quadratic(n0, kappa_i), dim);
        let p0 = poisson_pmf(mean0, dim);
        let grid = linspace(0.0, 3e7, 12);
        let traj = evolve_diagonal(&p0, &config, &grid, None).unwrap();
        let mut prev = f64::INFINITY;
        for rec in &traj.records {
            prop_assert!(rec.mean <= prev + 1e-9, "mean grew: {} -> {}", prev, rec.mean);
            prop_assert!(rec.trace_defect < 1e-12);
            prev = rec.mean;
        }
    }

    #[test]
    fn coherent_states_are_poissonian(
        mean in 0.1f64..30.0,
        phase in 0.0f64..std::f64::consts::TAU,
    ) {
        let dim = truncation_dim(mean, 1e-12) + 2;
        let rho = coherent_state_with_tail(mean, phase, dim, 1e-12).unwrap();
        let pmf = poisson_pmf(mean, dim);
        for (n, &p) in rho.diagonal().iter().enumerate() {
            prop_assert!((p - pmf[n]).abs() < 1e-12, "n={n}");
        }
        let (m, v) = mean_var(&rho);
        prop_assert!((m - mean).abs() < 1e-7 * mean.max(1.0));
        prop_assert!((v - mean).abs() < 1e-6 * mean.max(1.0));
        // Number squeezing is invariant under the coherent phase.
        let db = squeezing_db(&rho).unwrap();
        prop_assert!(db.abs() < 1e-5);
    }

    #[test]
    fn loss_rates_are_nonnegative_everywhere(
        kind in 0usize..3,
        kappa in 1e-5f64..1e-2,
        gamma in 1e-3f64..1e-1,
        theta in 0.0f64..std::f64::consts::TAU,
        kappa_i in 0.0f64..1e-4,
        omega in 0.5f64..3.0,
    ) {
        let model = match kind {
            0 => CouplingModel::Constant { kappa },
            1 => CouplingModel::TerminatedWaveguide { kappa, gamma, theta, kappa_i },
            _ => CouplingModel::FanoTwoResonator { kappa, gamma, omega_d: 1.47, kappa_i },
        };
        prop_assert!(re_k_l(&model, omega) >= 0.0);
        for n in 1..40 {
            prop_assert!(kappa_of_n(&model, OMEGA_A, 5e-6, n) >= 0.0);
        }
    }

    #[test]
    fn kappa_of_n_is_flat_without_kerr(
        kappa in 1e-5f64..1e-2,
        gamma in 1e-3f64..1e-1,
        theta in 0.0f64..std::f64::consts::TAU,
    ) {
        let model = CouplingModel::TerminatedWaveguide { kappa, gamma, theta, kappa_i: 1e-7 };
        let k1 = kappa_of_n(&model, OMEGA_A, 0.0, 1);
        for n in 2..30 {
            prop_assert_eq!(kappa_of_n(&model, OMEGA_A, 0.0, n), k1);
        }
    }

    #[test]
    fn pinem_spectra_are_unitary_and_nonnegative(
        raw in prop::collection::vec(0.0f64..1.0, 12),
        g_re in -0.3f64..0.3,
        g_im in -0.3f64..0.3,
    ) {
        let dim = 30;
        let mut probs = vec![0.0; dim];
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-6);
        for (i, &r) in raw.iter().enumerate() {
            probs[i] = r / total;
        }
        let rho = DensityMatrix::from_diagonal(&probs);
        let spec = pinem_spectrum(&rho, Complex64::new(g_re, g_im), 14).unwrap();
        prop_assert!((spec.total() - 1.0).abs() < 1e-8);
        prop_assert!(spec.probs.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn dark_state_population_is_monotone(
        n0 in 2usize..10,
        mean0 in 4.0f64..16.0,
    ) {
        let dim = truncation_dim(mean0, 1e-10).max(n0 + 8);
        let config = SimulationConfig::new(OMEGA_A, 5e-6, quadratic(n0, 0.0), dim);
        let p0 = poisson_pmf(mean0, dim);
        let grid = linspace(0.0, 1e9, 10);
        let traj = evolve_diagonal(&p0, &config, &grid, Some(n0)).unwrap();
        let mut prev = -1.0;
        for rec in &traj.records {
            let f = rec.fidelity.unwrap();
            prop_assert!(f >= prev - 1e-12, "p_n0 decreased: {prev} -> {f}");
            prev = f;
        }
    }

    #[test]
    fn ladder_matrix_elements_are_exact(n in 0usize..12) {
        let dim = 14;
        let rho = nbic_core::fockspace::fock_state::<f64>(nbic_core::fockspace::FockLabel(n), dim).unwrap();
        let arho = nbic_core::fockspace::ladder_apply(nbic_core::fockspace::Ladder::Lower, &rho);
        for m in 0..dim {
            let want = if n > 0 && m + 1 == n { (n as f64).sqrt() } else { 0.0 };
            prop_assert_eq!(arho[[m, n]], cr(want));
        }
    }
}
