//! Outer loops: PWM, the unrolled PWM-BFNet forward pass, and the
//! fixed-index, RIS and DAS baselines.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::active::{
    mrt_zf_init, scale_to_power, simple_structure_f, softmax_power, update_f, update_lambda,
    update_u, zf_init, InitKind,
};
use crate::error::{Error, Result};
use crate::linalg::CVec;
use crate::mode_switch::{penalty_residual, update_assignment, update_rho, update_selection};
use crate::model::metrics::{mmse, mse_all};
use crate::model::{
    das_effective_channel, effective_channel_of, sinr_and_rate, support, wsr, ChannelSet,
    EffectiveChannel, SolverState, SystemConfig,
};
use crate::passive::{build_passive_quadratic, solve_quadratic, Eps, PassiveMode};
use crate::rng::{rng_for, Domain};
use crate::train::TrainableParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Pwm,
    PwmBfnet,
    FixedIndex,
    Ris,
    Das,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Pwm,
        Variant::PwmBfnet,
        Variant::FixedIndex,
        Variant::Ris,
        Variant::Das,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Pwm => "pwm",
            Variant::PwmBfnet => "pwm_bfnet",
            Variant::FixedIndex => "fixed_index",
            Variant::Ris => "ris",
            Variant::Das => "das",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown variant `{s}` (expected one of pwm, pwm_bfnet, fixed_index, ris, das)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub variant: Variant,
    /// Required for [`Variant::PwmBfnet`].
    pub trainable: Option<TrainableParams>,
    /// Keep ρ constant (η = 1).
    pub fixed_rho_mode: bool,
    /// Run exactly this many outer iterations, ignoring the convergence test.
    pub iterations: Option<usize>,
    /// Connected-element positions for [`Variant::Das`]; when absent PWM is
    /// run on the same realization to find them.
    pub das_assign: Option<Vec<usize>>,
}

impl SolveOptions {
    pub fn new(variant: Variant) -> Self {
        SolveOptions {
            variant,
            trainable: None,
            fixed_rho_mode: false,
            iterations: None,
            das_assign: None,
        }
    }

    pub fn bfnet(params: TrainableParams) -> Self {
        SolveOptions {
            trainable: Some(params),
            ..Self::new(Variant::PwmBfnet)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub wsr: f64,
    pub penalized_objective: f64,
    pub penalty_residual: f64,
    pub inner_pi_steps: usize,
    pub rho: f64,
    pub wall_ms: f64,
}

/// Work counts accumulated over one solve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    pub linear_solves: usize,
    pub matvecs: usize,
    pub eig_iterations: usize,
    pub eig_fallbacks: usize,
    pub pi_steps: usize,
    pub warmup_pi_steps: usize,
    pub outer_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub variant: Variant,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    /// WSR of the returned (feasibility-enforced) state.
    pub final_wsr: f64,
    /// `‖A − ÃÃ^H‖_F` just before enforcement.
    pub pre_enforcement_residual: f64,
    pub counters: OpCounters,
    pub init: Option<InitKind>,
}

impl IterationTrace {
    pub fn wsr_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.wsr).collect()
    }

    pub fn objective_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.penalized_objective).collect()
    }
}

/// Measured counts next to the closed-form per-iteration complexity orders.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub counters: OpCounters,
    pub iterations: usize,
    pub mean_inner_pi: f64,
    /// `I (K(Nt+a)³ + K²N² + I_p N² + 5N³)`.
    pub pwm_formula: f64,
    /// `I (K(Nt+a)² + K²N² + 5N³)`.
    pub bfnet_formula: f64,
}

pub fn op_counters(cfg: &SystemConfig, trace: &IterationTrace) -> ComplexityReport {
    let iters = trace.counters.outer_iterations;
    let i = iters as f64;
    let (k, nt, n, a) = (cfg.k as f64, cfg.nt as f64, cfg.n as f64, cfg.a as f64);
    let ip = if iters > 0 {
        trace.counters.pi_steps as f64 / i
    } else {
        0.0
    };
    ComplexityReport {
        counters: trace.counters,
        iterations: iters,
        mean_inner_pi: ip,
        pwm_formula: i * (k * (nt + a).powi(3) + k * k * n * n + ip * n * n + 5.0 * n.powi(3)),
        bfnet_formula: i * (k * (nt + a).powi(2) + k * k * n * n + 5.0 * n.powi(3)),
    }
}

#[derive(Clone, Copy)]
enum ChannelModel {
    Rdars,
    Das,
}

struct Run<'a> {
    cfg: &'a SystemConfig,
    ch: &'a ChannelSet,
    alpha: Vec<f64>,
    ptot: f64,
    sigma2: f64,
    model: ChannelModel,
    counters: OpCounters,
    start: Instant,
    records: Vec<IterationRecord>,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a SystemConfig, ch: &'a ChannelSet, model: ChannelModel) -> Result<Self> {
        cfg.validate()?;
        ch.check_dims(cfg)?;
        Ok(Run {
            cfg,
            ch,
            alpha: cfg.weights(),
            ptot: cfg.ptot(),
            sigma2: cfg.sigma2(),
            model,
            counters: OpCounters::default(),
            start: Instant::now(),
            records: Vec::new(),
        })
    }

    fn channel(&self, st: &SolverState) -> Result<EffectiveChannel> {
        match self.model {
            ChannelModel::Rdars => effective_channel_of(self.ch, st),
            ChannelModel::Das => das_effective_channel(self.ch, &st.assign),
        }
    }

    fn refresh_weights(&mut self, st: &mut SolverState) -> Result<()> {
        let h = self.channel(st)?;
        st.u = update_u(&h.h, &st.f, self.sigma2, self.ptot)?;
        let e = mse_all(&h.h, &st.f, &st.u, self.sigma2, self.ptot)?;
        st.lambda = update_lambda(&e)?;
        Ok(())
    }

    fn beamformer_step(&mut self, st: &mut SolverState) -> Result<()> {
        let h = self.channel(st)?;
        let f = update_f(&h.h, &st.u, &st.lambda, &self.alpha, self.sigma2, self.ptot)?;
        self.counters.linear_solves += 1;
        st.f = scale_to_power(&f, self.ptot)?;
        Ok(())
    }

    fn passive_step(&mut self, st: &mut SolverState, mode: PassiveMode, eps: Eps) -> Result<usize> {
        let quad = build_passive_quadratic(self.ch, st, &self.alpha)?;
        let out = solve_quadratic(&quad, &st.phi, mode, eps);
        self.counters.matvecs += out.steps;
        st.phi = out.phi;
        Ok(out.steps)
    }

    fn mode_step(&mut self, st: &mut SolverState, rho: f64) -> Result<()> {
        st.atilde_prev = st.assign.clone();
        let (assign, sur) = update_assignment(self.ch, st, &self.alpha, rho)?;
        self.note_eig(sur.lambda2.iterations, sur.lambda2.converged);
        st.assign = assign;
        st.a_prev = st.a_vec.clone();
        let (a_vec, sur) = update_selection(self.ch, st, &self.alpha, rho)?;
        self.note_eig(sur.lambda1.iterations, sur.lambda1.converged);
        st.a_vec = a_vec;
        Ok(())
    }

    fn note_eig(&mut self, iterations: usize, converged: bool) {
        self.counters.eig_iterations += iterations;
        self.counters.matvecs += iterations;
        if !converged {
            self.counters.eig_fallbacks += 1;
        }
    }

    fn wsr(&self, st: &SolverState) -> Result<f64> {
        let h = self.channel(st)?;
        let (_, r) = sinr_and_rate(&h.h, &st.f, self.sigma2)?;
        Ok(wsr(&self.alpha, &r))
    }

    /// `Σ α_k (1 + ln e_k^mmse) + (1/2ρ)‖A − ÃÃ^H‖²`, the WMMSE objective
    /// minimized over `u, λ`. Invariant to the power scaling of `F`.
    fn penalized_objective(&self, st: &SolverState, rho: f64) -> Result<f64> {
        let h = self.channel(st)?;
        let e = mmse(&h.h, &st.f, self.sigma2, self.ptot)?;
        let data: f64 = e.iter().zip(&self.alpha).map(|(e, a)| a * (1.0 + e.ln())).sum();
        let penalty = match self.model {
            ChannelModel::Rdars => penalty_residual(&st.a_vec, &st.assign).powi(2) / (2.0 * rho),
            ChannelModel::Das => 0.0,
        };
        Ok(data + penalty)
    }

    fn record(&mut self, st: &SolverState, iteration: usize, pi_steps: usize, rho: f64) -> Result<()> {
        let wsr = self.wsr(st)?;
        if !wsr.is_finite() {
            return Err(Error::Numerical("weighted sum rate is not finite".into()));
        }
        self.records.push(IterationRecord {
            iteration,
            wsr,
            penalized_objective: self.penalized_objective(st, rho)?,
            penalty_residual: penalty_residual(&st.a_vec, &st.assign),
            inner_pi_steps: pi_steps,
            rho,
            wall_ms: self.start.elapsed().as_secs_f64() * 1e3,
        });
        Ok(())
    }

    fn finish(
        mut self,
        variant: Variant,
        mut st: SolverState,
        converged: bool,
        init: Option<InitKind>,
    ) -> Result<(SolverState, IterationTrace)> {
        let residual = penalty_residual(&st.a_vec, &st.assign);
        if residual > 0.0 {
            log::debug!("enforcing A = ÃÃ^H, residual before enforcement {residual:.3}");
        }
        st.enforce_feasibility();
        let h = self.channel(&st)?;
        if st.f.norm_squared() > 0.0 {
            st.u = update_u(&h.h, &st.f, self.sigma2, self.ptot)?;
            st.lambda = update_lambda(&mse_all(&h.h, &st.f, &st.u, self.sigma2, self.ptot)?)?;
        }
        let final_wsr = self.wsr(&st)?;
        self.counters.outer_iterations = self.records.len().saturating_sub(1);
        Ok((
            st,
            IterationTrace {
                variant,
                records: self.records,
                converged,
                final_wsr,
                pre_enforcement_residual: residual,
                counters: self.counters,
                init,
            },
        ))
    }
}

fn random_phases(n: usize, rng: &mut impl Rng) -> CVec {
    CVec::from_fn(n, |_, _| {
        Complex64::from_polar(1.0, std::f64::consts::TAU * rng.random::<f64>())
    })
}

/// Random start: uniform phases, `a` distinct uniformly drawn elements.
fn random_state(cfg: &SystemConfig, ch: &ChannelSet) -> SolverState {
    let mut rng = rng_for(cfg.seed, Domain::Init, ch.realization);
    let phi = random_phases(cfg.n, &mut rng);
    let assign = sample(&mut rng, cfg.n, cfg.a).into_vec();
    let a_vec = support(cfg.n, &assign);
    SolverState::new(cfg.nt, cfg.k, phi, a_vec, assign, cfg.rho0)
}

fn outer_budget(cfg: &SystemConfig, opts: &SolveOptions) -> (usize, bool) {
    match opts.iterations {
        Some(n) => (n, false),
        None => (cfg.max_outer_iters, true),
    }
}

fn converged_now(prev: f64, cur: f64, tol: f64) -> bool {
    let scale = prev.abs().max(f64::MIN_POSITIVE);
    ((cur - prev) / scale).abs() < tol
}

#[derive(Clone, Copy)]
struct LoopShape {
    passive: bool,
    mode_switch: bool,
}

fn alternate(
    mut run: Run<'_>,
    mut st: SolverState,
    variant: Variant,
    shape: LoopShape,
    opts: &SolveOptions,
) -> Result<(SolverState, IterationTrace)> {
    let cfg = run.cfg;
    let (f0, init) = {
        let h = run.channel(&st)?;
        mrt_zf_init(&h.h, run.ptot, run.sigma2)?
    };
    run.counters.linear_solves += 1;
    st.f = f0;
    run.refresh_weights(&mut st)?;
    run.beamformer_step(&mut st)?;
    run.record(&st, 0, 0, st.rho)?;

    let eta = if opts.fixed_rho_mode { 1.0 } else { cfg.eta };
    let (budget, early_stop) = outer_budget(cfg, opts);
    let pi_mode = PassiveMode::IterateToTol {
        tol: cfg.tol_inner,
        max_steps: cfg.max_inner_pi,
    };
    let mut converged = false;
    for it in 1..=budget {
        let step = |run: &mut Run<'_>, st: &mut SolverState| -> Result<(usize, f64)> {
            run.refresh_weights(st)?;
            let mut steps = 0;
            if shape.passive {
                steps = run.passive_step(st, pi_mode, Eps::Auto)?;
                run.counters.pi_steps += steps;
            }
            let rho = st.rho;
            if shape.mode_switch {
                run.mode_step(st, rho)?;
            }
            run.beamformer_step(st)?;
            Ok((steps, rho))
        };
        let (steps, rho) = step(&mut run, &mut st).map_err(|e| e.at_iteration(it))?;
        run.record(&st, it, steps, rho).map_err(|e| e.at_iteration(it))?;
        if shape.mode_switch {
            st.rho = update_rho(st.rho, eta);
        }
        let n = run.records.len();
        if early_stop && converged_now(run.records[n - 2].wsr, run.records[n - 1].wsr, cfg.tol_outer) {
            converged = true;
            break;
        }
    }
    run.finish(variant, st, converged, Some(init))
}

/// Algorithm 1: WMMSE / power-iteration / penalty-MM alternation.
pub fn pwm_solve(cfg: &SystemConfig, ch: &ChannelSet, opts: &SolveOptions) -> Result<(SolverState, IterationTrace)> {
    let run = Run::new(cfg, ch, ChannelModel::Rdars)?;
    let st = random_state(cfg, ch);
    alternate(run, st, Variant::Pwm, LoopShape { passive: true, mode_switch: true }, opts)
}

/// PWM with the first `a` elements permanently connected in order.
pub fn fixed_index_solve(
    cfg: &SystemConfig,
    ch: &ChannelSet,
    opts: &SolveOptions,
) -> Result<(SolverState, IterationTrace)> {
    let run = Run::new(cfg, ch, ChannelModel::Rdars)?;
    let mut st = random_state(cfg, ch);
    st.assign = (0..cfg.a).collect();
    st.enforce_feasibility();
    st.atilde_prev = st.assign.clone();
    st.a_prev = st.a_vec.clone();
    alternate(
        run,
        st,
        Variant::FixedIndex,
        LoopShape { passive: true, mode_switch: false },
        opts,
    )
}

/// Every element reflects; only the BS transmits.
pub fn ris_solve(cfg: &SystemConfig, ch: &ChannelSet, opts: &SolveOptions) -> Result<(SolverState, IterationTrace)> {
    let run = Run::new(cfg, ch, ChannelModel::Rdars)?;
    let mut rng = rng_for(cfg.seed, Domain::Init, ch.realization);
    let phi = random_phases(cfg.n, &mut rng);
    let st = SolverState::new(cfg.nt, cfg.k, phi, vec![false; cfg.n], Vec::new(), cfg.rho0);
    alternate(run, st, Variant::Ris, LoopShape { passive: true, mode_switch: false }, opts)
}

/// Distributed antennas at `assign` with no reflecting surface; only the
/// active beamformer is optimized.
pub fn das_solve(
    cfg: &SystemConfig,
    ch: &ChannelSet,
    assign: &[usize],
    opts: &SolveOptions,
) -> Result<(SolverState, IterationTrace)> {
    if assign.len() != cfg.a {
        return Err(Error::Dimension(format!(
            "expected {} antenna positions, got {}",
            cfg.a,
            assign.len()
        )));
    }
    let run = Run::new(cfg, ch, ChannelModel::Das)?;
    let mut rng = rng_for(cfg.seed, Domain::Init, ch.realization);
    let phi = random_phases(cfg.n, &mut rng);
    let st = SolverState::new(
        cfg.nt,
        cfg.k,
        phi,
        support(cfg.n, assign),
        assign.to_vec(),
        cfg.rho0,
    );
    alternate(run, st, Variant::Das, LoopShape { passive: false, mode_switch: false }, opts)
}

/// Algorithm 2: fixed-depth unrolled PWM with trained scalars.
pub fn pwm_bfnet_forward(
    cfg: &SystemConfig,
    ch: &ChannelSet,
    params: &TrainableParams,
) -> Result<(SolverState, IterationTrace)> {
    params.check_users(cfg.k)?;
    let t = params.unroll_t();
    let mut run = Run::new(cfg, ch, ChannelModel::Rdars)?;
    let mut st = random_state(cfg, ch);

    let (f0, init) = {
        let h = run.channel(&st)?;
        zf_init(&h.h, run.ptot)?
    };
    run.counters.linear_solves += 1;
    st.f = f0;
    run.refresh_weights(&mut st)?;
    run.beamformer_step(&mut st)?;
    let warm = run.passive_step(&mut st, PassiveMode::SingleStep, Eps::Relative(params.eps_scale(0)))?;
    run.counters.warmup_pi_steps += warm;

    let h = run.channel(&st)?;
    let p = softmax_power(&params.p_raw, run.ptot);
    let d = softmax_power(&params.d_raw, run.ptot);
    st.f = simple_structure_f(&h.h, &p, &d, run.sigma2)?;
    run.counters.linear_solves += 1;
    st.rho = params.rho(0);
    run.record(&st, 0, 0, st.rho)?;

    for i in 1..=t {
        let step = |run: &mut Run<'_>, st: &mut SolverState| -> Result<(usize, f64)> {
            run.refresh_weights(st)?;
            let steps = run.passive_step(st, PassiveMode::SingleStep, Eps::Relative(params.eps_scale(i)))?;
            run.counters.pi_steps += steps;
            let rho = params.rho(i);
            st.rho = rho;
            run.mode_step(st, rho)?;
            run.beamformer_step(st)?;
            Ok((steps, rho))
        };
        let (steps, rho) = step(&mut run, &mut st).map_err(|e| e.at_iteration(i))?;
        run.record(&st, i, steps, rho).map_err(|e| e.at_iteration(i))?;
    }
    run.finish(Variant::PwmBfnet, st, false, Some(init))
}

/// Dispatches on `opts.variant`.
pub fn solve(cfg: &SystemConfig, ch: &ChannelSet, opts: &SolveOptions) -> Result<(SolverState, IterationTrace)> {
    match opts.variant {
        Variant::Pwm => pwm_solve(cfg, ch, opts),
        Variant::FixedIndex => fixed_index_solve(cfg, ch, opts),
        Variant::Ris => ris_solve(cfg, ch, opts),
        Variant::Das => {
            let assign = match &opts.das_assign {
                Some(a) => a.clone(),
                None => pwm_solve(cfg, ch, &SolveOptions::new(Variant::Pwm))?.0.assign,
            };
            das_solve(cfg, ch, &assign, opts)
        }
        Variant::PwmBfnet => {
            let params = opts.trainable.as_ref().ok_or_else(|| {
                Error::InvalidArgument("pwm_bfnet needs trained or default parameters".into())
            })?;
            pwm_bfnet_forward(cfg, ch, params)
        }
    }
}
