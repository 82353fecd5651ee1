//! Invariant suite run by `rdars selfcheck`.
//!
//! The algebraic checks draw synthetic unit-scale channels so that every term
//! of each identity is of order one; the geometric scenario makes the
//! reflected path so weak that an absolute tolerance would not exercise it.

use std::fmt;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::active::{scale_to_power, update_lambda, update_u};
use crate::error::Result;
use crate::linalg::{CMat, CVec};
use crate::mode_switch::{
    build_assignment_surrogate, build_selection_surrogate, direct_penalized_objective, AssignmentSurrogate,
    SelectionSurrogate,
};
use crate::model::channel::complex_normal;
use crate::model::metrics::{lemma1_identity_check, mse_all};
use crate::model::{effective_channel_of, realization, sinr_and_rate, support, wsr};
use crate::model::{ChannelSet, SolverState, SystemConfig};
use crate::parallel::{try_map_indexed, Exec};
use crate::passive::{passive_update, Eps, PassiveMode};
use crate::rng::{rng_for, Domain};
use crate::solver::{pwm_solve, SolveOptions, Variant};

pub type SelectionBuilder = fn(&ChannelSet, &SolverState, &[f64], f64) -> Result<SelectionSurrogate>;
pub type AssignmentBuilder = fn(&ChannelSet, &SolverState, &[f64], f64) -> Result<AssignmentSurrogate>;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub module: &'static str,
    pub passed: bool,
    pub cases: usize,
    /// Largest violation seen, in the units of `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} [{}]: {} cases, worst {:.3e} (tol {:.0e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.module,
            self.cases,
            self.worst,
            self.tolerance
        )?;
        if !self.detail.is_empty() {
            write!(f, " {}", self.detail)?;
        }
        Ok(())
    }
}

fn verdict(name: &'static str, module: &'static str, cases: usize, worst: f64, tolerance: f64, detail: String) -> CheckResult {
    CheckResult {
        name,
        module,
        passed: worst <= tolerance && worst.is_finite(),
        cases,
        worst,
        tolerance,
        detail,
    }
}

#[derive(Debug, Clone)]
pub struct SelfCheckReport {
    pub checks: Vec<CheckResult>,
    pub elapsed: Duration,
}

impl SelfCheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Case counts for each check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckSizes {
    pub identity_states: usize,
    pub passive_solves: usize,
    pub descent_instances: usize,
    pub mm_instances: usize,
    pub oracle_points: usize,
    pub constraint_instances: usize,
    pub seed: u64,
}

impl Default for CheckSizes {
    fn default() -> Self {
        CheckSizes {
            identity_states: 200,
            passive_solves: 20,
            descent_instances: 5,
            mm_instances: 10,
            oracle_points: 50,
            constraint_instances: 5,
            seed: 7,
        }
    }
}

/// Instance with i.i.d. unit-variance channels, 10 W budget and 1 W noise.
pub fn synthetic_instance(rng: &mut ChaCha8Rng, k: usize, nt: usize, nz: usize, ny: usize, a: usize) -> (SystemConfig, ChannelSet) {
    let n = nz * ny;
    let cfg = SystemConfig {
        k,
        nt,
        n,
        nz,
        ny,
        a,
        ptot_dbm: 40.0,
        sigma2_dbm: 30.0,
        ..SystemConfig::desk()
    };
    let g = CMat::from_fn(n, nt, |_, _| complex_normal(rng));
    let h_r = (0..k).map(|_| CVec::from_fn(n, |_, _| complex_normal(rng))).collect();
    let ch = ChannelSet {
        g,
        h_r,
        kappa_b: Complex64::from(1.0),
        kappa_r: vec![Complex64::from(1.0); k],
        ue_positions: vec![[0.0; 3]; k],
        realization: 0,
    };
    (cfg, ch)
}

/// Random iterate on `ch`: uniform phases, random assignment, a selection that
/// agrees with it when `feasible` and is drawn independently otherwise, a
/// random beamformer at full power, and the optimal `u`, `λ` for it.
pub fn random_state(cfg: &SystemConfig, ch: &ChannelSet, rng: &mut ChaCha8Rng, feasible: bool) -> Result<SolverState> {
    let n = ch.n();
    let phi = CVec::from_fn(n, |_, _| Complex64::from_polar(1.0, std::f64::consts::TAU * rng.random::<f64>()));
    let assign = sample(rng, n, cfg.a).into_vec();
    let a_vec = if feasible {
        support(n, &assign)
    } else {
        (0..n).map(|_| rng.random_bool(0.5)).collect()
    };
    let mut st = SolverState::new(cfg.nt, cfg.k, phi, a_vec, assign, cfg.rho0);
    let f = CMat::from_fn(cfg.nt + cfg.a, cfg.k, |_, _| complex_normal(rng));
    st.f = scale_to_power(&f, cfg.ptot())?;
    let h = effective_channel_of(ch, &st)?;
    st.u = update_u(&h.h, &st.f, cfg.sigma2(), cfg.ptot())?;
    st.lambda = update_lambda(&mse_all(&h.h, &st.f, &st.u, cfg.sigma2(), cfg.ptot())?)?;
    st.a_prev = st.a_vec.clone();
    st.atilde_prev = st.assign.clone();
    Ok(st)
}

fn small_dims(rng: &mut ChaCha8Rng, max_n: usize, max_a: usize) -> (usize, usize, usize, usize, usize) {
    let k = rng.random_range(1..=4);
    let nt = rng.random_range(1..=16);
    loop {
        let nz = rng.random_range(1..=4);
        let ny = rng.random_range(1..=8);
        let n = nz * ny;
        if n >= 2 && n <= max_n {
            let a = rng.random_range(1..=max_a.min(n - 1));
            return (k, nt, nz, ny, a);
        }
    }
}

fn worst_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

/// WMMSE rate/MSE identity on random states across sizes.
pub fn check_wmmse_identity(states: usize, seed: u64, exec: Exec) -> Result<CheckResult> {
    let gaps = try_map_indexed(exec, states, |i| -> Result<f64> {
        let mut rng = rng_for(seed, Domain::Check, i as u64);
        let (k, nt, nz, ny, a) = small_dims(&mut rng, 32, 8);
        let (cfg, ch) = synthetic_instance(&mut rng, k, nt, nz, ny, a);
        let st = random_state(&cfg, &ch, &mut rng, true)?;
        let h = effective_channel_of(&ch, &st)?;
        lemma1_identity_check(&h.h, &st.f, cfg.sigma2(), cfg.ptot(), &cfg.weights())
    })?;
    Ok(verdict("wmmse-identity", "model::metrics", states, worst_of(gaps), 1e-9, String::new()))
}

/// Monotone power-iteration values, each bounded by `Σ|D'_{mn}|`. The
/// tolerance is relative to that bound.
pub fn check_passive_monotone(solves: usize, seed: u64, exec: Exec) -> Result<CheckResult> {
    let per = try_map_indexed(exec, solves, |i| -> Result<(f64, f64)> {
        let mut rng = rng_for(seed, Domain::Check, 1000 + i as u64);
        let (k, nt, nz, ny, a) = small_dims(&mut rng, 32, 8);
        let (cfg, ch) = synthetic_instance(&mut rng, k, nt, nz, ny, a);
        let st = random_state(&cfg, &ch, &mut rng, true)?;
        let out = passive_update(
            &ch,
            &st,
            &cfg.weights(),
            PassiveMode::IterateToTol { tol: 0.0, max_steps: 50 },
            Eps::Auto,
        )?;
        let scale = out.bound.max(f64::MIN_POSITIVE);
        let drop = worst_of(out.values.windows(2).map(|w| (w[0] - w[1]) / scale));
        let over = worst_of(out.values.iter().map(|v| (v - out.bound) / scale));
        Ok((drop, over))
    })?;
    let drop = worst_of(per.iter().map(|p| p.0));
    let over = worst_of(per.iter().map(|p| p.1));
    Ok(verdict(
        "passive-monotonicity",
        "passive",
        solves,
        drop.max(over),
        1e-10,
        format!("(largest decrease {drop:.2e}, largest bound excess {over:.2e})"),
    ))
}

/// Penalized objective never increases across outer iterations when the
/// penalty weight is held fixed.
pub fn check_block_descent(instances: usize, seed: u64, exec: Exec) -> Result<CheckResult> {
    let cfg = SystemConfig { seed, ..SystemConfig::desk() };
    let mut opts = SolveOptions::new(Variant::Pwm);
    opts.fixed_rho_mode = true;
    let rises = try_map_indexed(exec, instances, |i| -> Result<f64> {
        let ch = realization(&cfg, seed, i as u64)?;
        let (_, trace) = pwm_solve(&cfg, &ch, &opts)?;
        let obj = trace.objective_series();
        Ok(worst_of(obj.windows(2).map(|w| (w[1] - w[0]) / w[0].abs().max(1.0))))
    })?;
    Ok(verdict("block-descent", "solver", instances, worst_of(rises), 1e-8, String::new()))
}

fn binary_vectors(len: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u64..1 << len).map(move |bits| (0..len).map(|i| bits >> i & 1 == 1).collect())
}

/// Every ordered choice of `a` distinct elements out of `n`.
pub fn all_assignments(n: usize, a: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, a: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == a {
            out.push(cur.clone());
            return;
        }
        for i in 0..n {
            if !cur.contains(&i) {
                cur.push(i);
                rec(n, a, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(n, a, &mut Vec::with_capacity(a), &mut out);
    out
}

/// Surrogate-above-objective on exhaustive enumerations at `N ≤ 10`, `a ≤ 3`,
/// with equality at the expansion point.
pub fn check_majorization(instances: usize, seed: u64, exec: Exec) -> Result<CheckResult> {
    let per = try_map_indexed(exec, instances, |i| -> Result<(f64, f64)> {
        let mut rng = rng_for(seed, Domain::Check, 2000 + i as u64);
        let (k, nt, nz, ny, a) = small_dims(&mut rng, 10, 3);
        let (cfg, ch) = synthetic_instance(&mut rng, k, nt, nz, ny, a);
        let st = random_state(&cfg, &ch, &mut rng, false)?;
        let rho = rng.random_range(0.1..10.0);
        let alpha = cfg.weights();
        let n = ch.n();

        let sel = build_selection_surrogate(&ch, &st, &alpha, rho)?;
        let scale = sel.f3(&st.a_prev).abs().max(1.0);
        let mut below = 0.0f64;
        for a_vec in binary_vectors(n) {
            below = below.max((sel.f3(&a_vec) - sel.surrogate(&a_vec)) / scale);
        }
        let mut tight = (sel.f3(&st.a_prev) - sel.surrogate(&st.a_prev)).abs() / scale;

        let asg = build_assignment_surrogate(&ch, &st, &alpha, rho)?;
        let scale = asg.f4(&st.atilde_prev).abs().max(1.0);
        for assign in all_assignments(n, a) {
            below = below.max((asg.f4(&assign) - asg.surrogate(&assign)) / scale);
        }
        tight = tight.max((asg.f4(&st.atilde_prev) - asg.surrogate(&st.atilde_prev)).abs() / scale);
        Ok((below, tight))
    })?;
    let below = worst_of(per.iter().map(|p| p.0));
    let tight = worst_of(per.iter().map(|p| p.1));
    Ok(verdict(
        "mm-majorization",
        "mode_switch",
        instances,
        below.max(tight),
        1e-9,
        format!("(largest excess over surrogate {below:.2e}, largest gap at expansion point {tight:.2e})"),
    ))
}

/// Pairwise differences of the selection objective across random binary
/// selections match those of the directly evaluated penalized objective.
pub fn check_selection_expansion(points: usize, seed: u64, builder: SelectionBuilder) -> Result<CheckResult> {
    let mut rng = rng_for(seed, Domain::Check, 3000);
    let (cfg, ch) = synthetic_instance(&mut rng, 3, 4, 2, 4, 3);
    let st = random_state(&cfg, &ch, &mut rng, false)?;
    let rho = 0.7;
    let alpha = cfg.weights();
    let (sigma2, ptot) = (cfg.sigma2(), cfg.ptot());
    let sur = builder(&ch, &st, &alpha, rho)?;
    let direct = |a: &[bool]| direct_penalized_objective(&ch, &st, a, &st.assign, &alpha, rho, sigma2, ptot);
    let base: Vec<bool> = (0..ch.n()).map(|_| rng.random_bool(0.5)).collect();
    let (f_base, d_base) = (sur.f3(&base), direct(&base)?);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let a: Vec<bool> = (0..ch.n()).map(|_| rng.random_bool(0.5)).collect();
        let lhs = sur.f3(&a) - f_base;
        let rhs = direct(&a)? - d_base;
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
    }
    Ok(verdict("selection-expansion", "mode_switch", points, worst, 1e-8, String::new()))
}

/// As [`check_selection_expansion`] for the assignment objective over random
/// valid assignments with the selection held fixed.
pub fn check_assignment_expansion(points: usize, seed: u64, builder: AssignmentBuilder) -> Result<CheckResult> {
    let mut rng = rng_for(seed, Domain::Check, 3001);
    let (cfg, ch) = synthetic_instance(&mut rng, 3, 4, 2, 4, 3);
    let st = random_state(&cfg, &ch, &mut rng, false)?;
    let rho = 0.7;
    let alpha = cfg.weights();
    let (sigma2, ptot) = (cfg.sigma2(), cfg.ptot());
    let sur = builder(&ch, &st, &alpha, rho)?;
    let direct = |x: &[usize]| direct_penalized_objective(&ch, &st, &st.a_vec, x, &alpha, rho, sigma2, ptot);
    let base = sample(&mut rng, ch.n(), cfg.a).into_vec();
    let (f_base, d_base) = (sur.f4(&base), direct(&base)?);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let x = sample(&mut rng, ch.n(), cfg.a).into_vec();
        let lhs = sur.f4(&x) - f_base;
        let rhs = direct(&x)? - d_base;
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
    }
    Ok(verdict("assignment-expansion", "mode_switch", points, worst, 1e-8, String::new()))
}

/// Final PWM iterates satisfy unit modulus, full power, distinct assignment,
/// agreement of selection and assignment, and report the WSR of that state.
pub fn check_constraints(instances: usize, seed: u64, exec: Exec) -> Result<CheckResult> {
    let cfg = SystemConfig { seed, ..SystemConfig::desk() };
    let errs = try_map_indexed(exec, instances, |i| -> Result<(f64, Option<String>)> {
        let ch = realization(&cfg, seed, i as u64)?;
        let (st, trace) = pwm_solve(&cfg, &ch, &SolveOptions::new(Variant::Pwm))?;
        if let Err(e) = st.check() {
            return Ok((f64::INFINITY, Some(e.to_string())));
        }
        if st.a_vec != support(cfg.n, &st.assign) {
            return Ok((f64::INFINITY, Some("selection differs from assignment support".into())));
        }
        let power = (st.power() - cfg.ptot()).abs() / cfg.ptot();
        let unit = worst_of(st.phi.iter().map(|z| (z.norm() - 1.0).abs()));
        let h = effective_channel_of(&ch, &st)?;
        let (_, r) = sinr_and_rate(&h.h, &st.f, cfg.sigma2())?;
        let w = (wsr(&cfg.weights(), &r) - trace.final_wsr).abs() / trace.final_wsr.abs().max(1.0);
        Ok((power.max(unit).max(w), None))
    })?;
    let detail = errs.iter().filter_map(|e| e.1.clone()).next().unwrap_or_default();
    Ok(verdict(
        "constraints",
        "model::state",
        instances,
        worst_of(errs.iter().map(|e| e.0)),
        1e-9,
        detail,
    ))
}

/// Runs every check. A check that errors is reported as a failure carrying
/// the error message.
pub fn run_selfcheck(sizes: &CheckSizes, exec: Exec) -> SelfCheckReport {
    let start = Instant::now();
    let seed = sizes.seed;
    let jobs: Vec<(&'static str, &'static str, Box<dyn Fn() -> Result<CheckResult>>)> = vec![
        ("wmmse-identity", "model::metrics", Box::new(move || check_wmmse_identity(sizes.identity_states, seed, exec))),
        ("passive-monotonicity", "passive", Box::new(move || check_passive_monotone(sizes.passive_solves, seed, exec))),
        ("block-descent", "solver", Box::new(move || check_block_descent(sizes.descent_instances, seed, exec))),
        ("mm-majorization", "mode_switch", Box::new(move || check_majorization(sizes.mm_instances, seed, exec))),
        (
            "selection-expansion",
            "mode_switch",
            Box::new(move || check_selection_expansion(sizes.oracle_points, seed, build_selection_surrogate)),
        ),
        (
            "assignment-expansion",
            "mode_switch",
            Box::new(move || check_assignment_expansion(sizes.oracle_points, seed, build_assignment_surrogate)),
        ),
        ("constraints", "model::state", Box::new(move || check_constraints(sizes.constraint_instances, seed, exec))),
    ];
    let checks = jobs
        .into_iter()
        .map(|(name, module, job)| {
            job().unwrap_or_else(|e| CheckResult {
                name,
                module,
                passed: false,
                cases: 0,
                worst: f64::INFINITY,
                tolerance: 0.0,
                detail: format!("error: {e}"),
            })
        })
        .collect();
    SelfCheckReport {
        checks,
        elapsed: start.elapsed(),
    }
}
