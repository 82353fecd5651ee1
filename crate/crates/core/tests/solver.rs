mod common;

use proptest::prelude::*;

use rdars_core::model::{realization, ChannelSet, SystemConfig};
use rdars_core::solver::{
    das_solve, fixed_index_solve, op_counters, pwm_bfnet_forward, pwm_solve, ris_solve, solve,
    IterationTrace, SolveOptions, Variant,
};
use rdars_core::{SolverState, TrainableParams};

fn desk(index: u64) -> (SystemConfig, ChannelSet) {
    let cfg = SystemConfig::desk();
    let ch = realization(&cfg, cfg.seed, index).unwrap();
    (cfg, ch)
}

fn opts(variant: Variant) -> SolveOptions {
    SolveOptions::new(variant)
}

fn wsr_rises_after_second(trace: &IterationTrace) -> Result<(), String> {
    let w = trace.wsr_series();
    for i in 3..w.len() {
        if w[i] < w[i - 1] - 1e-6 * w[i - 1].abs().max(1.0) {
            return Err(format!("wsr fell at iteration {i}: {} -> {}", w[i - 1], w[i]));
        }
    }
    Ok(())
}

fn without_time(mut t: IterationTrace) -> IterationTrace {
    for r in &mut t.records {
        r.wall_ms = 0.0;
    }
    t
}

/// Independent recomputation of the weighted sum rate of a returned state.
fn oracle_wsr(cfg: &SystemConfig, ch: &ChannelSet, st: &SolverState, das: bool) -> f64 {
    let h = if das {
        let mut h = common::effective_channel(ch, &st.phi, &vec![true; cfg.n], &st.assign);
        for k in 0..cfg.k {
            for t in 0..cfg.nt {
                h[(k, t)] = 0.0.into();
            }
        }
        h
    } else {
        common::effective_channel(ch, &st.phi, &st.a_vec, &st.assign)
    };
    let r = common::rates(&h, &st.f, cfg.sigma2());
    cfg.weights().iter().zip(&r).map(|(a, r)| a * r).sum()
}

fn check_state(cfg: &SystemConfig, st: &SolverState, connected: usize) -> Result<(), String> {
    if st.phi.iter().any(|z| (z.norm() - 1.0).abs() > 1e-12) {
        return Err("phase off the unit circle".into());
    }
    if (st.f.norm_squared() - cfg.ptot()).abs() > 1e-9 * cfg.ptot() {
        return Err(format!("power {} vs {}", st.f.norm_squared(), cfg.ptot()));
    }
    if st.a_vec.iter().filter(|&&b| b).count() != connected {
        return Err("wrong number of connected elements".into());
    }
    let mut s = st.assign.clone();
    s.sort();
    s.dedup();
    if s.len() != st.assign.len() {
        return Err("repeated element in assignment".into());
    }
    if common::penalty(&st.a_vec, &st.assign) != 0.0 {
        return Err("selection and assignment disagree".into());
    }
    Ok(())
}

#[test]
fn pwm_desk_run() {
    let (cfg, ch) = desk(0);
    let (st, trace) = pwm_solve(&cfg, &ch, &opts(Variant::Pwm)).unwrap();
    wsr_rises_after_second(&trace).unwrap();
    assert!(trace.converged);
    assert!(trace.records.len() >= 2);
    assert!(trace.wsr_series().iter().all(|w| w.is_finite()));
    check_state(&cfg, &st, cfg.a).unwrap();
}

#[test]
fn pwm_fixed_rho_descends() {
    for index in 0..3 {
        let (cfg, ch) = desk(index);
        let mut o = opts(Variant::Pwm);
        o.fixed_rho_mode = true;
        let (_, trace) = pwm_solve(&cfg, &ch, &o).unwrap();
        let obj = trace.objective_series();
        for w in obj.windows(2).skip(1) {
            assert!(w[1] <= w[0] + 1e-8 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
        assert!(trace.records.iter().all(|r| r.rho == cfg.rho0));
    }
}

#[test]
fn solves_are_deterministic() {
    let (cfg, ch) = desk(2);
    for v in [Variant::Pwm, Variant::FixedIndex, Variant::Ris, Variant::Das] {
        let a = solve(&cfg, &ch, &opts(v)).unwrap();
        let b = solve(&cfg, &ch, &opts(v)).unwrap();
        assert_eq!(a.0, b.0, "{v}");
        assert_eq!(without_time(a.1), without_time(b.1), "{v}");
    }
}

#[test]
fn bfnet_without_unrolling_is_warm_start() {
    let (cfg, ch) = desk(0);
    let params = TrainableParams::untrained(&cfg, 0);
    let (st, trace) = pwm_bfnet_forward(&cfg, &ch, &params).unwrap();
    assert_eq!(trace.records.len(), 1);
    assert!(trace.final_wsr.is_finite());
    assert_eq!(trace.counters.pi_steps, 0);
    assert_eq!(trace.counters.warmup_pi_steps, 1);
    check_state(&cfg, &st, cfg.a).unwrap();
}

#[test]
fn bfnet_counts_one_inner_step_per_iteration() {
    let (cfg, ch) = desk(1);
    for t in [1, 3, 5] {
        let params = TrainableParams::untrained(&cfg, t);
        let (_, trace) = pwm_bfnet_forward(&cfg, &ch, &params).unwrap();
        assert_eq!(trace.counters.pi_steps, t);
        assert_eq!(trace.records.len(), t + 1);
        assert!(trace.records.iter().skip(1).all(|r| r.inner_pi_steps == 1));
        let mut o = opts(Variant::Pwm);
        o.iterations = Some(t);
        let (_, pwm) = pwm_solve(&cfg, &ch, &o).unwrap();
        assert!(pwm.counters.pi_steps >= trace.counters.pi_steps);
        let report = op_counters(&cfg, &trace);
        assert_eq!(report.iterations, t);
        assert!(report.bfnet_formula <= report.pwm_formula);
    }
}

#[test]
fn bfnet_rejects_mismatched_params() {
    let (cfg, ch) = desk(0);
    let params = TrainableParams::untrained(&SystemConfig { alpha: vec![1.0; 3], k: 3, ..cfg.clone() }, 2);
    assert!(pwm_bfnet_forward(&cfg, &ch, &params).is_err());
    assert!(solve(&cfg, &ch, &opts(Variant::PwmBfnet)).is_err());
}

#[test]
fn fixed_index_uses_leading_elements() {
    for index in 0..3 {
        let (cfg, ch) = desk(index);
        let (st, _) = fixed_index_solve(&cfg, &ch, &opts(Variant::FixedIndex)).unwrap();
        let want: Vec<bool> = (0..cfg.n).map(|i| i < cfg.a).collect();
        assert_eq!(st.a_vec, want);
        assert_eq!(st.assign, (0..cfg.a).collect::<Vec<_>>());
    }
}

#[test]
fn ris_is_reflection_only() {
    let (cfg, ch) = desk(0);
    let (st, trace) = ris_solve(&cfg, &ch, &opts(Variant::Ris)).unwrap();
    assert!(st.assign.is_empty() && st.a_vec.iter().all(|&b| !b));
    assert_eq!(st.f.nrows(), cfg.nt);
    wsr_rises_after_second(&trace).unwrap();
    assert_eq!(trace.counters.eig_iterations, 0);
    assert_eq!(trace.counters.eig_fallbacks, 0);
    let h = rdars_core::model::effective_channel(&ch, &st.phi, &st.a_vec, &st.assign).unwrap().h;
    for k in 0..cfg.k {
        let want = (st.phi.map(|z| z.conj()).component_mul(&ch.h_r[k].map(|z| z.conj()))).transpose() * &ch.g;
        assert!((h.row(k) - &want).norm() <= 1e-12 * want.norm());
    }
}

#[test]
fn das_ignores_phases() {
    let (cfg, ch) = desk(0);
    let assign = vec![3, 9, 17, 30];
    let (_, a) = das_solve(&cfg, &ch, &assign, &opts(Variant::Das)).unwrap();
    let other = SystemConfig { seed: 999, ..cfg.clone() };
    let (st, b) = das_solve(&other, &ch, &assign, &opts(Variant::Das)).unwrap();
    assert_eq!(a.final_wsr, b.final_wsr);
    assert_eq!(st.assign, assign);
    assert!(das_solve(&cfg, &ch, &[1, 2], &opts(Variant::Das)).is_err());
}

#[test]
fn penalty_residual_settles_record() {
    // Statistical property, reported rather than enforced.
    let cfg = SystemConfig::desk();
    let mut settled = 0;
    let total = 100;
    for i in 0..total {
        let ch = realization(&cfg, 77, i).unwrap();
        let (_, trace) = pwm_solve(&cfg, &ch, &opts(Variant::Pwm)).unwrap();
        let r: Vec<f64> = trace.records.iter().map(|r| r.penalty_residual).collect();
        let tail = &r[r.len().saturating_sub(3)..];
        if tail.windows(2).all(|w| w[1] <= w[0]) {
            settled += 1;
        }
    }
    eprintln!("penalty residual non-increasing over the last 3 iterations on {settled}/{total} runs");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn returned_states_are_feasible(index in 0u64..1000) {
        let (cfg, ch) = desk(index);
        let params = TrainableParams::untrained(&cfg, 5);
        for v in Variant::ALL {
            let o = if v == Variant::PwmBfnet { SolveOptions::bfnet(params.clone()) } else { opts(v) };
            let (st, trace) = solve(&cfg, &ch, &o).unwrap();
            let connected = if v == Variant::Ris { 0 } else { cfg.a };
            prop_assert!(check_state(&cfg, &st, connected).is_ok(), "{}: {:?}", v, check_state(&cfg, &st, connected));
            let want = oracle_wsr(&cfg, &ch, &st, v == Variant::Das);
            prop_assert!((trace.final_wsr - want).abs() <= 1e-10 * want.abs().max(1.0), "{}: {} vs {}", v, trace.final_wsr, want);
            prop_assert!(trace.wsr_series().iter().all(|w| w.is_finite()));
        }
    }
}
