mod common;

use nalgebra::{DMatrix, DVector};
use ni_irc::discretize::{build_modal_plant, zoh_sample, ModalSpec, Mode};
use ni_irc::interconnect::{self, certify_closed_loop, close_loop, lyapunov_decrement_trace, lyapunov_matrix};
use ni_irc::irc::{build_irc, discrete_k, synthesize_params, IrcParams, SynthesisOptions};
use ni_irc::linalg;
use ni_irc::ni_cert::verify_candidate;
use ni_irc::sim::simulate_autonomous;
use ni_irc::DiscreteStateSpace;
use num_complex::Complex64;
use proptest::prelude::*;

use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn irc_core_is_ni_with_minus_d(gamma in 1e-3f64..10.0, frac in 0.01f64..=1.0) {
        let d = -frac * 2.0 / gamma;
        let params = IrcParams::scalar(gamma, d).unwrap();
        let p = DMatrix::from_element(1, 1, -d);
        let verdict = verify_candidate(&discrete_k(&params), &p, 1e-9).unwrap();
        prop_assert!(verdict.is_accepted(), "{:?}", verdict.residuals());
    }

    #[test]
    fn transfer_at_one_is_dc_gain(seed in any::<u64>(), n in 1usize..6, p in 1usize..4) {
        let mut rng = rng(seed);
        let (plant, _) = random_ni_plant(&mut rng, n, p);
        let g = plant.eval_transfer(Complex64::new(1.0, 0.0)).unwrap();
        let dc = plant.dc_gain().unwrap();
        let err = g.iter().zip(dc.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-9 * (1.0 + dc.amax()));
    }

    #[test]
    fn spectral_radius_matches_quadratic_formula(entries in proptest::array::uniform4(-2.0f64..2.0)) {
        let m = DMatrix::from_row_slice(2, 2, &entries);
        let rho = linalg::spectral_radius(&m).unwrap();
        prop_assert!((rho - spectral_radius_2x2(&m)).abs() <= 1e-10 * (1.0 + rho));
    }

    #[test]
    fn schur_complement_characterizes_q(seed in any::<u64>(), n in 1usize..5, p in 1usize..4) {
        let mut rng = rng(seed);
        let (plant, pm) = random_ni_plant(&mut rng, n, p);
        let d = -random_spd(&mut rng, p, 0.01) * rng.random_range(0.05..3.0);
        let params = IrcParams::new(DMatrix::identity(p, p), linalg::symmetrize(&d)).unwrap();
        let q = lyapunov_matrix(&plant, &pm, &params);
        let schur = -params.d() - plant.c() * pm.clone().try_inverse().unwrap() * plant.c().transpose();
        let lhs = linalg::min_eigenvalue(&q);
        let rhs = linalg::min_eigenvalue(&schur);
        // skip numerically ambiguous draws
        prop_assume!(lhs.abs() > 1e-9 && rhs.abs() > 1e-9);
        prop_assert_eq!(lhs > 0.0, rhs > 0.0);
    }

    #[test]
    fn zoh_preserves_dc_and_maps_eigenvalues(
        f1 in 10.0f64..1e4,
        ratio in 1.5f64..5.0,
        zeta in 0.002f64..0.5,
        g2 in 0.1f64..3.0,
        ts_frac in 1e-3f64..0.2,
    ) {
        let spec = ModalSpec {
            modes: vec![
                Mode { freq_hz: f1, zeta, gain: 1.0 },
                Mode { freq_hz: f1 * ratio, zeta, gain: g2 },
            ],
            dc_normalization: None,
        };
        let cont = build_modal_plant(&spec).unwrap();
        let ts = ts_frac / (f1 * ratio);
        let disc = zoh_sample(&cont, ts).unwrap();
        let dc_c = cont.dc_gain().unwrap()[(0, 0)];
        let dc_d = disc.dc_gain().unwrap()[(0, 0)];
        prop_assert!((dc_c - dc_d).abs() <= 1e-8 * dc_c.abs());

        let mut expect: Vec<Complex64> = linalg::eigenvalues(cont.a()).unwrap().iter().map(|l| (l * ts).exp()).collect();
        let mut got = linalg::eigenvalues(disc.a()).unwrap();
        let key = |z: &Complex64| (z.re, z.im);
        expect.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        got.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        for (e, g) in expect.iter().zip(&got) {
            prop_assert!((e - g).norm() <= 1e-9 * e.norm());
        }
    }

    #[test]
    fn certified_loops_have_decreasing_storage(seed in any::<u64>(), n in 1usize..6, p in 1usize..3) {
        let mut rng = rng(seed);
        let n = n.max(p);
        let (plant, pm) = random_ni_plant(&mut rng, n, p);
        let cert = verify_candidate(&plant, &pm, 1e-9).unwrap().into_certificate().unwrap();
        let g1 = plant.dc_gain().unwrap();
        let params = synthesize_params(&linalg::symmetrize(&g1), SynthesisOptions::defaults_for(&g1)).unwrap();
        let cl = certify_closed_loop(&plant, &cert, &params, interconnect::DEFAULT_TOL).unwrap();
        prop_assert!(cl.accepted);
        prop_assert!(cl.max_eig_decrement <= 1e-8 * cl.q.norm());

        let xi0 = uniform_vector(&mut rng, n + p, 1.0);
        let w = lyapunov_decrement_trace(&plant, &pm, &params, &xi0, 400).unwrap();
        for k in 1..w.len() {
            prop_assert!(w[k] <= w[k - 1] + 1e-10 * w[0]);
        }

        // the same trace from independently simulated states
        let states = simulate_autonomous(&close_loop(&plant, &build_irc(&params)).unwrap(), &xi0, 400).unwrap();
        for (k, xi) in states.iter().enumerate() {
            let wk = 0.5 * xi.dot(&(&cl.q * xi));
            prop_assert!((wk - w[k]).abs() <= 1e-10 * w[0]);
        }
    }
}

use rand::Rng;

#[test]
fn storage_reaches_floor_within_spectral_horizon() {
    let mut rng = rng(77);
    for draw in 0..50 {
        let p = 1 + draw % 2;
        let n = p + draw % 4;
        let (plant, pm) = random_ni_plant(&mut rng, n, p);
        let g1 = plant.dc_gain().unwrap();
        let params = synthesize_params(&linalg::symmetrize(&g1), SynthesisOptions::defaults_for(&g1)).unwrap();
        let a_hat = close_loop(&plant, &build_irc(&params)).unwrap();
        let rho = linalg::spectral_radius(&a_hat).unwrap();
        let horizon = ((1e-6f64).ln() / rho.ln()).ceil() as usize;
        let xi0 = uniform_vector(&mut rng, n + p, 1.0);
        let w = lyapunov_decrement_trace(&plant, &pm, &params, &xi0, horizon).unwrap();
        assert!(w[horizon] <= 1e-6 * w[0], "draw {draw}: rho {rho}, W_K/W_0 = {}", w[horizon] / w[0]);
    }
}

#[test]
fn random_plants_satisfy_the_decomposition() {
    let mut rng = rng(20);
    for draw in 0..20 {
        let p = 1 + draw % 3;
        let (plant, pm) = random_ni_plant(&mut rng, p + draw % 4, p);
        let g1 = plant.dc_gain().unwrap();
        let params = synthesize_params(&linalg::symmetrize(&g1), SynthesisOptions::defaults_for(&g1)).unwrap();
        let chk = interconnect::decomposition_check(&plant, &pm, &params).unwrap();
        assert!(chk.residual.unwrap() <= 1e-9, "draw {draw}: {chk:?}");
    }
}

#[test]
fn scalar_worked_example_decays_like_spectral_radius() {
    let plant = DiscreteStateSpace::scalar(0.5, 1.0, 0.5);
    let params = IrcParams::scalar(0.01, -3.0).unwrap();
    let a_hat = close_loop(&plant, &build_irc(&params)).unwrap();
    let rho = spectral_radius_2x2(&a_hat);
    let states = simulate_autonomous(&a_hat, &DVector::from_vec(vec![0.8, -1.1]), 3000).unwrap();
    let x0 = states[0].norm();
    // envelope C·ρ^k with a constant from the eigenvector conditioning
    for (k, xi) in states.iter().enumerate() {
        assert!(xi.norm() <= 10.0 * x0 * rho.powi(k as i32) + 1e-300);
    }
    assert!(states[3000].norm() < 1e-20);
}
