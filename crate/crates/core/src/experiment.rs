//! Seeded experiments: single solves, parameter sweeps and unrolled-network
//! evaluation, all emitting CSV.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{das_effective_channel, effective_channel_of, realization, sinr_and_rate, wsr};
use crate::model::{ChannelSet, DasPlacement, SolverState, SystemConfig};
use crate::parallel::{try_map_indexed, Exec};
use crate::solver::{pwm_solve, solve, IterationTrace, SolveOptions, Variant};
use crate::train::TrainableParams;

/// Exact header of every trace CSV.
pub const TRACE_HEADER: &str =
    "experiment_id,variant,seed,iteration,wsr_bits,penalized_obj,penalty_residual,inner_pi_steps,rho,wall_ms";

/// Exact header of the sweep summary CSV.
pub const SWEEP_HEADER: &str = "axis,value,variant,realizations,mean_wsr,stderr_wsr";

/// Depth used for `pwm_bfnet` when no parameter file is given.
pub const DEFAULT_UNROLL: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PtotDbm,
    #[serde(rename = "K")]
    K,
    #[serde(rename = "N")]
    N,
    RicianXi,
    A,
    Iterations,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 6] = [
        SweepAxis::PtotDbm,
        SweepAxis::K,
        SweepAxis::N,
        SweepAxis::RicianXi,
        SweepAxis::A,
        SweepAxis::Iterations,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::PtotDbm => "ptot_dbm",
            SweepAxis::K => "K",
            SweepAxis::N => "N",
            SweepAxis::RicianXi => "rician_xi",
            SweepAxis::A => "a",
            SweepAxis::Iterations => "iterations",
        }
    }

    fn integral(self) -> bool {
        matches!(self, SweepAxis::K | SweepAxis::N | SweepAxis::A | SweepAxis::Iterations)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.name() == s || a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = SweepAxis::ALL.iter().map(|a| a.name()).collect();
                Error::InvalidArgument(format!("unknown axis `{s}`, expected one of {}", names.join(", ")))
            })
    }
}

/// Settings derived from one axis value.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSetup {
    pub cfg: SystemConfig,
    /// Fixed iteration budget, set only on the `iterations` axis.
    pub iterations: Option<usize>,
}

/// Applies one axis value to `base` and validates the result.
pub fn apply_axis(base: &SystemConfig, axis: SweepAxis, value: f64) -> Result<CellSetup> {
    if !value.is_finite() {
        return Err(Error::config(axis.name(), format!("sweep value {value} is not finite")));
    }
    let count = || -> Result<usize> {
        if value < 0.0 || value.fract() != 0.0 {
            return Err(Error::config(
                axis.name(),
                format!("sweep value {value} must be a nonnegative integer"),
            ));
        }
        Ok(value as usize)
    };
    let mut iterations = None;
    let cfg = match axis {
        SweepAxis::PtotDbm => SystemConfig { ptot_dbm: value, ..base.clone() },
        SweepAxis::RicianXi => SystemConfig { rician_xi: value, ..base.clone() },
        SweepAxis::K => base.with_users(count()?),
        SweepAxis::N => base.with_elements(count()?),
        SweepAxis::A => SystemConfig { a: count()?, ..base.clone() },
        SweepAxis::Iterations => {
            let n = count()?;
            if n == 0 {
                return Err(Error::config("iterations", "iteration budget must be at least 1"));
            }
            iterations = Some(n);
            base.clone()
        }
    };
    cfg.validate()?;
    Ok(CellSetup { cfg, iterations })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub variants: Vec<Variant>,
    pub realizations: usize,
    pub base: SystemConfig,
    /// Stream family for channel draws and solver starts.
    pub seed: u64,
    /// Parameters for `pwm_bfnet`; untrained defaults are built per cell when absent.
    pub params: Option<TrainableParams>,
}

impl SweepSpec {
    pub fn new(base: SystemConfig, axis: SweepAxis, values: Vec<f64>) -> Self {
        SweepSpec {
            axis,
            values,
            variants: vec![Variant::Pwm],
            realizations: 20,
            seed: base.seed,
            base,
            params: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("values", "sweep needs at least one value"));
        }
        if self.realizations == 0 {
            return Err(Error::config("realizations", "must be at least 1"));
        }
        if self.variants.is_empty() {
            return Err(Error::config("variant", "sweep needs at least one variant"));
        }
        self.base.validate()?;
        for &v in &self.values {
            apply_axis(&self.base, self.axis, v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub variant: Variant,
    pub realizations: usize,
    pub mean_wsr: f64,
    pub stderr_wsr: f64,
}

/// Final state of one solve inside a sweep, as written by `--dump-states`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDump {
    pub axis: String,
    pub value: f64,
    pub variant: Variant,
    pub realization: u64,
    pub final_wsr: f64,
    pub state: SolverState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub states: Vec<StateDump>,
}

/// Per-variant settings shared by every realization of a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantSetup {
    pub opts: SolveOptions,
}

/// Builds the solve options for `variant` on `cfg`, resolving the deployment
/// placement for the distributed-antenna baseline once.
pub fn variant_setup(
    cfg: &SystemConfig,
    variant: Variant,
    seed: u64,
    iterations: Option<usize>,
    params: Option<&TrainableParams>,
) -> Result<VariantSetup> {
    let mut opts = SolveOptions::new(variant);
    opts.iterations = iterations;
    match variant {
        Variant::PwmBfnet => {
            let p = match params {
                Some(p) => {
                    p.check_users(cfg.k)?;
                    if let Some(t) = iterations {
                        p.check_for(cfg.k, t)?;
                    }
                    p.clone()
                }
                None => TrainableParams::untrained(cfg, iterations.unwrap_or(DEFAULT_UNROLL)),
            };
            opts.trainable = Some(p);
        }
        Variant::Das if cfg.das_placement == DasPlacement::Deployment => {
            let reference = realization(cfg, seed, 0)?;
            let (st, _) = pwm_solve(cfg, &reference, &SolveOptions::new(Variant::Pwm))?;
            opts.das_assign = Some(st.assign);
        }
        _ => {}
    }
    Ok(VariantSetup { opts })
}

/// Solves realization `index` of stream family `seed`.
pub fn run_variant(
    cfg: &SystemConfig,
    setup: &VariantSetup,
    seed: u64,
    index: u64,
) -> Result<(ChannelSet, SolverState, IterationTrace)> {
    let cfg = SystemConfig { seed, ..cfg.clone() };
    let ch = realization(&cfg, seed, index)?;
    let (st, trace) = solve(&cfg, &ch, &setup.opts)?;
    Ok((ch, st, trace))
}

/// WSR of a stored final state, recomputed from scratch.
pub fn recompute_wsr(cfg: &SystemConfig, ch: &ChannelSet, variant: Variant, st: &SolverState) -> Result<f64> {
    let h = match variant {
        Variant::Das => das_effective_channel(ch, &st.assign)?,
        _ => effective_channel_of(ch, st)?,
    };
    let (_, r) = sinr_and_rate(&h.h, &st.f, cfg.sigma2())?;
    Ok(wsr(&cfg.weights(), &r))
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn cmd_sweep(spec: &SweepSpec, keep_states: bool, exec: Exec) -> Result<SweepResult> {
    spec.validate()?;
    let mut rows = Vec::new();
    let mut states = Vec::new();
    for &value in &spec.values {
        let cell = apply_axis(&spec.base, spec.axis, value)?;
        let value = if spec.axis.integral() { value.round() } else { value };
        for &variant in &spec.variants {
            let setup = variant_setup(&cell.cfg, variant, spec.seed, cell.iterations, spec.params.as_ref())?;
            let runs = try_map_indexed(exec, spec.realizations, |i| {
                run_variant(&cell.cfg, &setup, spec.seed, i as u64)
            })?;
            let w: Vec<f64> = runs.iter().map(|(_, _, t)| t.final_wsr).collect();
            let (mean_wsr, stderr_wsr) = mean_stderr(&w);
            log::info!("{}={value} {variant}: mean WSR {mean_wsr:.4} ± {stderr_wsr:.4}", spec.axis);
            rows.push(SweepRow {
                axis: spec.axis.name().to_string(),
                value,
                variant,
                realizations: spec.realizations,
                mean_wsr,
                stderr_wsr,
            });
            if keep_states {
                states.extend(runs.into_iter().map(|(ch, state, t)| StateDump {
                    axis: spec.axis.name().to_string(),
                    value,
                    variant,
                    realization: ch.realization,
                    final_wsr: t.final_wsr,
                    state,
                }));
            }
        }
    }
    Ok(SweepResult { rows, states })
}

/// One trace CSV row. Optional cells are written empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub experiment_id: String,
    pub variant: String,
    pub seed: u64,
    pub iteration: usize,
    pub wsr_bits: f64,
    pub penalized_obj: Option<f64>,
    pub penalty_residual: Option<f64>,
    pub inner_pi_steps: Option<usize>,
    pub rho: Option<f64>,
    pub wall_ms: Option<f64>,
}

pub fn trace_rows(experiment_id: &str, seed: u64, trace: &IterationTrace) -> Vec<TraceRow> {
    trace
        .records
        .iter()
        .map(|r| TraceRow {
            experiment_id: experiment_id.to_string(),
            variant: trace.variant.name().to_string(),
            seed,
            iteration: r.iteration,
            wsr_bits: r.wsr,
            penalized_obj: Some(r.penalized_objective),
            penalty_residual: Some(r.penalty_residual),
            inner_pi_steps: Some(r.inner_pi_steps),
            rho: Some(r.rho),
            wall_ms: Some(r.wall_ms),
        })
        .collect()
}

pub fn write_trace_csv(out: impl Write, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TRACE_HEADER.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(input: impl std::io::Read) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != TRACE_HEADER {
        return Err(Error::InvalidArgument(format!("unexpected trace header `{}`", header.join(","))));
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_sweep_csv(out: impl Write, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(SWEEP_HEADER.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(input: impl std::io::Read) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// One JSON object per line.
pub fn write_states_jsonl(mut out: impl Write, states: &[StateDump]) -> Result<()> {
    for s in states {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_states_jsonl(input: impl std::io::BufRead) -> Result<Vec<StateDump>> {
    let mut v = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            v.push(serde_json::from_str(&line)?);
        }
    }
    Ok(v)
}

/// Runs realization 0 of stream family `seed` and returns its trace rows.
pub fn cmd_solve(
    cfg: &SystemConfig,
    variant: Variant,
    seed: u64,
    params: Option<&TrainableParams>,
) -> Result<(IterationTrace, Vec<TraceRow>)> {
    cfg.validate()?;
    let setup = variant_setup(cfg, variant, seed, None, params)?;
    let (_, _, trace) = run_variant(cfg, &setup, seed, 0)?;
    let rows = trace_rows(&format!("solve-{}", variant.name()), seed, &trace);
    Ok((trace, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub unroll_t: usize,
    pub realizations: usize,
    pub bfnet_wsr: Vec<f64>,
    /// PWM stopped after the same number of outer iterations.
    pub pwm_wsr: Vec<f64>,
    pub mean_bfnet: f64,
    pub mean_pwm: f64,
    pub ratio: f64,
    pub rows: Vec<TraceRow>,
}

/// Evaluates `params` on `realizations` fresh draws of stream family `seed`
/// against PWM at the same iteration budget.
pub fn cmd_eval(
    cfg: &SystemConfig,
    params: &TrainableParams,
    seed: u64,
    realizations: usize,
    exec: Exec,
) -> Result<EvalReport> {
    cfg.validate()?;
    if realizations == 0 {
        return Err(Error::config("realizations", "must be at least 1"));
    }
    let t = params.unroll_t();
    params.check_for(cfg.k, t)?;
    let bf = variant_setup(cfg, Variant::PwmBfnet, seed, Some(t), Some(params))?;
    let pwm = variant_setup(cfg, Variant::Pwm, seed, Some(t), None)?;
    let runs = try_map_indexed(exec, realizations, |i| -> Result<_> {
        let (_, _, a) = run_variant(cfg, &bf, seed, i as u64)?;
        let (_, _, b) = run_variant(cfg, &pwm, seed, i as u64)?;
        Ok((a, b))
    })?;
    let mut rows = Vec::new();
    for (i, (a, b)) in runs.iter().enumerate() {
        rows.extend(trace_rows(&format!("eval-{i}"), seed, a));
        rows.extend(trace_rows(&format!("eval-{i}"), seed, b));
    }
    let bfnet_wsr: Vec<f64> = runs.iter().map(|(a, _)| a.final_wsr).collect();
    let pwm_wsr: Vec<f64> = runs.iter().map(|(_, b)| b.final_wsr).collect();
    let mean_bfnet = mean_stderr(&bfnet_wsr).0;
    let mean_pwm = mean_stderr(&pwm_wsr).0;
    let ratio = mean_bfnet / mean_pwm;
    rows.push(TraceRow {
        experiment_id: "eval-comparison".to_string(),
        variant: "pwm_bfnet/pwm".to_string(),
        seed,
        iteration: t,
        wsr_bits: ratio,
        penalized_obj: None,
        penalty_residual: None,
        inner_pi_steps: None,
        rho: None,
        wall_ms: None,
    });
    Ok(EvalReport {
        unroll_t: t,
        realizations,
        bfnet_wsr,
        pwm_wsr,
        mean_bfnet,
        mean_pwm,
        ratio,
        rows,
    })
}
