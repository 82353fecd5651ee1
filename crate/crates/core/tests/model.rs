mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rdars_core::linalg::{CMat, CVec};
use rdars_core::model::metrics::{lemma1_identity_check, mmse, mse_e_k, CRow};
use rdars_core::model::{
    effective_channel, generate_channels, path_gain, planar_steering, realization, sinr_and_rate,
    steering_vector, wsr, ChannelSet, SystemConfig,
};
use rdars_core::selfcheck::{random_state, synthetic_instance};
use rdars_core::Error;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn planar_steering_examples() {
    let v = planar_steering(1, 1, 0.3, -0.7).unwrap();
    assert_eq!(v.len(), 1);
    assert!((v[0] - c(1.0, 0.0)).norm() < 1e-15);

    let v = planar_steering(1, 5, 0.3, -0.7).unwrap();
    let w = steering_vector(5, -0.7).unwrap();
    assert!((v - w).norm() < 1e-15);

    let v = planar_steering(2, 2, 0.0, 0.0).unwrap();
    for z in v.iter() {
        assert!((z - c(0.5, 0.0)).norm() < 1e-15);
    }
}

#[test]
fn zero_sized_arrays_rejected() {
    assert!(steering_vector(0, 0.1).is_err());
    assert!(planar_steering(0, 4, 0.1, 0.2).is_err());
}

#[test]
fn path_gain_examples() {
    assert!((path_gain(1.0, 2.2, 60.4).unwrap() - 10f64.powf(-6.04)).abs() < 1e-20);
    assert!((path_gain(1.0, 2.2, 60.4).unwrap() - 9.12e-7).abs() < 1e-9);
    assert_eq!(path_gain(1.0, 3.7, 0.0).unwrap(), 1.0);
    assert!((path_gain(10.0, 2.0, 0.0).unwrap() - 0.01).abs() < 1e-15);
    assert!(path_gain(0.0, 2.0, 0.0).is_err());
    assert!(path_gain(-1.0, 2.0, 0.0).is_err());
}

#[test]
fn los_limit_is_rank_one() {
    let cfg = SystemConfig { rician_xi: 1e9, ..SystemConfig::desk() };
    let ch = realization(&cfg, 5, 0).unwrap();
    let g = &ch.g / ch.kappa_b;
    let sv = g.clone().svd(false, false).singular_values;
    let tail: f64 = sv.iter().skip(1).map(|s| s * s).sum::<f64>().sqrt();
    assert!(tail < 1e-3, "rank-2+ residual {tail}");
}

#[test]
fn channel_energy_matches_expectation() {
    // Unit-norm LoS steering vectors and unit-variance NLoS entries give
    // E‖G‖² = |κ_b|² (ξ + N·Nt)/(ξ + 1).
    let cfg = SystemConfig::desk();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let draws = 500;
    let mut acc = 0.0;
    let mut kappa = 0.0;
    for _ in 0..draws {
        let ch = generate_channels(&cfg, &mut rng).unwrap();
        acc += ch.g.norm_squared();
        kappa = ch.kappa_b.norm_sqr();
    }
    let xi = cfg.rician_xi;
    let expected = kappa * (xi + (cfg.n * cfg.nt) as f64) / (xi + 1.0);
    let ratio = acc / draws as f64 / expected;
    assert!((ratio - 1.0).abs() < 0.1, "ratio {ratio}");
}

#[test]
fn channels_are_reproducible() {
    let cfg = SystemConfig::desk();
    let a = realization(&cfg, 9, 4).unwrap();
    let b = realization(&cfg, 9, 4).unwrap();
    assert_eq!(a, b);
    let other = realization(&cfg, 9, 5).unwrap();
    assert_ne!(a.g, other.g);
}

#[test]
fn users_stay_inside_disc() {
    let cfg = SystemConfig::desk();
    for i in 0..20 {
        let ch = realization(&cfg, 2, i).unwrap();
        for p in &ch.ue_positions {
            let d = ((p[0] - cfg.ue_center[0]).powi(2) + (p[1] - cfg.ue_center[1]).powi(2)).sqrt();
            assert!(d <= cfg.ue_radius + 1e-12);
            assert_eq!(p[2], cfg.ue_center[2]);
        }
    }
}

fn tiny_channel() -> ChannelSet {
    // N = 2 elements, Nt = 1, K = 1.
    ChannelSet {
        g: CMat::from_row_slice(2, 1, &[c(1.0, 1.0), c(2.0, -1.0)]),
        h_r: vec![CVec::from_vec(vec![c(0.5, 0.0), c(0.0, 2.0)])],
        kappa_b: c(1.0, 0.0),
        kappa_r: vec![c(1.0, 0.0)],
        ue_positions: vec![[0.0; 3]],
        realization: 0,
    }
}

#[test]
fn effective_channel_by_hand() {
    let ch = tiny_channel();
    let phi = CVec::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]);
    // Element 1 connected, element 0 reflects:
    // reflected = conj(φ0) conj(h0) G[0,0] = 0.5 (1 + j); connected = conj(h1) = −2j.
    let h = effective_channel(&ch, &phi, &[false, true], &[1]).unwrap().h;
    assert!((h[(0, 0)] - c(0.5, 0.5)).norm() < 1e-15);
    assert!((h[(0, 1)] - c(0.0, -2.0)).norm() < 1e-15);
    // Swapping roles: reflected = conj(−... ) from element 1, connected = conj(h0).
    let h = effective_channel(&ch, &phi, &[true, false], &[0]).unwrap().h;
    let refl = c(0.0, 2.0).conj() * c(2.0, -1.0);
    assert!((h[(0, 0)] - refl).norm() < 1e-15);
    assert!((h[(0, 1)] - c(0.5, 0.0)).norm() < 1e-15);
}

#[test]
fn all_reflecting_is_plain_surface() {
    let cfg = SystemConfig::desk();
    let ch = realization(&cfg, 1, 0).unwrap();
    let phi = CVec::from_fn(cfg.n, |i, _| Complex64::from_polar(1.0, 0.37 * i as f64));
    let h = effective_channel(&ch, &phi, &vec![false; cfg.n], &[]).unwrap().h;
    assert_eq!(h.ncols(), cfg.nt);
    for k in 0..cfg.k {
        // φ^H diag(h^H) G
        let want = (phi.map(|z| z.conj()).component_mul(&ch.h_r[k].map(|z| z.conj()))).transpose() * &ch.g;
        assert!((h.row(k) - &want).norm() <= 1e-12 * want.norm());
    }
}

#[test]
fn effective_channel_rejects_bad_shapes() {
    let ch = tiny_channel();
    let phi = CVec::from_element(2, c(1.0, 0.0));
    assert!(matches!(effective_channel(&ch, &phi, &[false], &[]), Err(Error::Dimension(_))));
    assert!(effective_channel(&ch, &phi, &[false, false], &[2]).is_err());
    assert!(effective_channel(&ch, &phi, &[false, false], &[1, 1]).is_err());
}

#[test]
fn sinr_examples() {
    let h = CMat::from_element(1, 1, c(1.0, 0.0));
    let f = CMat::from_element(1, 1, c(1.0, 0.0));
    let (g, r) = sinr_and_rate(&h, &f, 1.0).unwrap();
    assert!((g[0] - 1.0).abs() < 1e-15 && (r[0] - 1.0).abs() < 1e-15);

    // h_1 f_2 = 0: no interference at user 1.
    let h = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.3, 0.0), c(1.0, 0.0)]);
    let f = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
    let (g, _) = sinr_and_rate(&h, &f, 0.5).unwrap();
    assert!((g[0] - 4.0 / 0.5).abs() < 1e-12);
}

#[test]
fn wsr_examples() {
    assert_eq!(wsr(&[1.0, 1.0], &[1.0, 2.0]), 3.0);
    assert_eq!(wsr(&[0.0, 1.0], &[99.0, 2.0]), 2.0);
    assert_eq!(wsr(&[0.5, 0.5], &[2.0, 4.0]), 3.0);
}

#[test]
fn mse_at_zero_receiver_is_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (cfg, ch) = synthetic_instance(&mut rng, 3, 4, 2, 3, 2);
    let st = random_state(&cfg, &ch, &mut rng, true).unwrap();
    let h = effective_channel(&ch, &st.phi, &st.a_vec, &st.assign).unwrap();
    for k in 0..cfg.k {
        let e = mse_e_k(&h.row(k), k, &st.f, c(0.0, 0.0), cfg.sigma2(), cfg.ptot()).unwrap();
        assert_eq!(e, 1.0);
    }
}

#[test]
fn mse_at_optimal_receiver_is_mmse() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (cfg, ch) = synthetic_instance(&mut rng, 3, 4, 2, 3, 2);
    let st = random_state(&cfg, &ch, &mut rng, true).unwrap();
    let h = effective_channel(&ch, &st.phi, &st.a_vec, &st.assign).unwrap().h;
    let e_mmse = mmse(&h, &st.f, cfg.sigma2(), cfg.ptot()).unwrap();
    for k in 0..cfg.k {
        let e = mse_e_k(&h.row(k).into_owned(), k, &st.f, st.u[k], cfg.sigma2(), cfg.ptot()).unwrap();
        assert!((e - e_mmse[k]).abs() < 1e-10);
        // 1 − f_k^H h_k^H J̃_k^{-1} h_k f_k
        let s = (h.row(k) * st.f.column(k))[0];
        let j = common::receive_power(&h, &st.f, cfg.sigma2(), cfg.ptot())[k];
        assert!((e - (1.0 - s.norm_sqr() / j)).abs() < 1e-10);
    }
}

#[test]
fn mse_matches_expectation_expansion() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (cfg, ch) = synthetic_instance(&mut rng, 3, 3, 2, 2, 1);
    let st = random_state(&cfg, &ch, &mut rng, true).unwrap();
    let h = effective_channel(&ch, &st.phi, &st.a_vec, &st.assign).unwrap().h;
    let u: Vec<Complex64> = (0..cfg.k).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    // E|u^* y − s|² with y = h F s + n, unit-power symbols, noise σ²‖F‖²/P:
    // |u|² Σ_m |h f_m|² − 2 Re(u^* h f_k) + 1 + |u|² σ²‖F‖²/P.
    let want = common::mse(&h, &st.f, &u, cfg.sigma2(), cfg.ptot());
    for k in 0..cfg.k {
        let row: CRow = h.row(k).into_owned();
        let got = mse_e_k(&row, k, &st.f, u[k], cfg.sigma2(), cfg.ptot()).unwrap();
        assert!((got - want[k]).abs() < 1e-12 * want[k].abs().max(1.0));
    }
}

#[test]
fn wmmse_identity_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (cfg, ch) = synthetic_instance(&mut rng, 1, 2, 1, 3, 1);
    let st = random_state(&cfg, &ch, &mut rng, true).unwrap();
    let h = effective_channel(&ch, &st.phi, &st.a_vec, &st.assign).unwrap().h;
    assert!(lemma1_identity_check(&h, &st.f, cfg.sigma2(), cfg.ptot(), &[1.0]).unwrap() < 1e-12);

    let (cfg, ch) = synthetic_instance(&mut rng, 3, 4, 2, 3, 2);
    let st = random_state(&cfg, &ch, &mut rng, true).unwrap();
    let h = effective_channel(&ch, &st.phi, &st.a_vec, &st.assign).unwrap().h;
    assert!(lemma1_identity_check(&h, &st.f, cfg.sigma2(), cfg.ptot(), &cfg.weights()).unwrap() < 1e-9);

    let zero = CMat::zeros(st.f.nrows(), st.f.ncols());
    assert_eq!(lemma1_identity_check(&h, &zero, cfg.sigma2(), cfg.ptot(), &cfg.weights()).unwrap(), 0.0);
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.toml");
    let cfg = SystemConfig { alpha: vec![1.0, 0.5], ..SystemConfig::desk() };
    std::fs::write(&path, cfg.to_toml_string()).unwrap();
    assert_eq!(SystemConfig::load(&path).unwrap(), cfg);
}

#[test]
fn config_errors_name_fields() {
    let check = |cfg: SystemConfig, field: &str| {
        let err = cfg.validate().unwrap_err();
        match &err {
            Error::Config { field: f, .. } => assert_eq!(f, field, "{err}"),
            other => panic!("unexpected {other}"),
        }
    };
    check(SystemConfig { a: 32, ..SystemConfig::desk() }, "a");
    check(SystemConfig { a: 0, ..SystemConfig::desk() }, "a");
    check(SystemConfig { nz: 3, ..SystemConfig::desk() }, "N");
    check(SystemConfig { eta: 1.5, ..SystemConfig::desk() }, "eta");
    check(SystemConfig { alpha: vec![1.0], ..SystemConfig::desk() }, "alpha");
    check(SystemConfig { k: 0, ..SystemConfig::desk() }, "K");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steering_vectors_have_unit_norm(n in 1usize..40, theta in -1.0f64..1.0) {
        let v = steering_vector(n, theta).unwrap();
        prop_assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rates_ignore_common_phase(seed in 0u64..1000, angle in 0.0..std::f64::consts::TAU) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cfg, ch) = synthetic_instance(&mut rng, 3, 4, 2, 3, 2);
        let st = random_state(&cfg, &ch, &mut rng, true).unwrap();
        let h = effective_channel(&ch, &st.phi, &st.a_vec, &st.assign).unwrap().h;
        let rotated = &st.f * Complex64::from_polar(1.0, angle);
        let (g0, _) = sinr_and_rate(&h, &st.f, cfg.sigma2()).unwrap();
        let (g1, _) = sinr_and_rate(&h, &rotated, cfg.sigma2()).unwrap();
        for k in 0..cfg.k {
            prop_assert!((g0[k] - g1[k]).abs() <= 1e-12 * g0[k].max(1.0));
        }
    }

    #[test]
    fn optimal_receiver_minimizes_mse(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cfg, ch) = synthetic_instance(&mut rng, 2, 3, 2, 2, 1);
        let st = random_state(&cfg, &ch, &mut rng, true).unwrap();
        let h = effective_channel(&ch, &st.phi, &st.a_vec, &st.assign).unwrap();
        for k in 0..cfg.k {
            let best = mse_e_k(&h.row(k), k, &st.f, st.u[k], cfg.sigma2(), cfg.ptot()).unwrap();
            for _ in 0..100 {
                let u = st.u[k] + c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let e = mse_e_k(&h.row(k), k, &st.f, u, cfg.sigma2(), cfg.ptot()).unwrap();
                prop_assert!(best <= e + 1e-12);
            }
        }
    }

    #[test]
    fn received_signal_matches_definition(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cfg, ch) = synthetic_instance(&mut rng, 2, 3, 2, 3, 2);
        let mut st = random_state(&cfg, &ch, &mut rng, false).unwrap();
        st.a_vec = (0..cfg.n).map(|_| rng.random_bool(0.5)).collect();
        let h = effective_channel(&ch, &st.phi, &st.a_vec, &st.assign).unwrap().h;
        let s = CVec::from_fn(cfg.k, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let x = &st.f * &s;
        let (xb, xr) = (x.rows(0, cfg.nt), x.rows(cfg.nt, cfg.a));
        let gx = &ch.g * xb;
        for k in 0..cfg.k {
            // Reflected: Σ_n conj(φ_n)(1 − a_n) conj(h_n) (G x_b)_n; connected: Σ_l conj(h[assign_l]) x_r,l.
            let mut y = c(0.0, 0.0);
            for n in 0..cfg.n {
                if !st.a_vec[n] {
                    y += st.phi[n].conj() * ch.h_r[k][n].conj() * gx[n];
                }
            }
            for (l, &e) in st.assign.iter().enumerate() {
                y += ch.h_r[k][e].conj() * xr[l];
            }
            let via = (h.row(k) * &x)[0];
            prop_assert!((via - y).norm() <= 1e-10 * y.norm().max(1.0));
        }
    }

    #[test]
    fn effective_channel_matches_reference(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = SystemConfig::desk();
        let ch = realization(&cfg, seed, 0).unwrap();
        let st = random_state(&cfg, &ch, &mut rng, true).unwrap();
        let h = effective_channel(&ch, &st.phi, &st.a_vec, &st.assign).unwrap().h;
        let want = common::effective_channel(&ch, &st.phi, &st.a_vec, &st.assign);
        prop_assert!((h - &want).norm() <= 1e-12 * want.norm());
    }
}
