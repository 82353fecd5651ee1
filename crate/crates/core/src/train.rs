//! Trainable scalars of the unrolled solver and a gradient-free trainer.
//!
//! The unrolled pipeline contains top-`a` selections, greedy assignments and
//! a power-method eigenvalue, so it has no useful analytic gradient. Training
//! uses simultaneous-perturbation (SPSA) estimates, which only need forward
//! passes, fed to SGD with momentum.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ParamsError, Result};
use crate::model::{realization, ChannelSet, SystemConfig};
use crate::parallel::{try_map_indexed, Exec};
use crate::rng::{rng_for, Domain};
use crate::solver::pwm_bfnet_forward;

pub const PARAMS_VERSION: i64 = 1;

/// Bound on the log-domain scalars when they are exponentiated.
pub const LOG_LIMIT: f64 = 300.0;

/// Per-iteration regularization multipliers and penalty weights (log
/// domain) plus per-user power and regularization splits.
///
/// `ε^(i) = exp(log_eps[i]) · ‖D‖_F`; `ρ^(i) = exp(log_rho[i])`, where index
/// 0 belongs to the warm start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainableParams {
    pub log_eps: Vec<f64>,
    pub log_rho: Vec<f64>,
    pub p_raw: Vec<f64>,
    pub d_raw: Vec<f64>,
}

impl TrainableParams {
    /// Values that make the unrolled pass mirror PWM: the Frobenius ε rule,
    /// the geometric ρ schedule, and equal power and regularization splits.
    pub fn untrained(cfg: &SystemConfig, unroll_t: usize) -> Self {
        let log_rho = (0..=unroll_t)
            .map(|i| cfg.rho0.ln() + (i.saturating_sub(1)) as f64 * cfg.eta.ln())
            .collect();
        TrainableParams {
            log_eps: vec![(1.0 + 1e-6f64).ln(); unroll_t + 1],
            log_rho,
            p_raw: vec![0.0; cfg.k],
            d_raw: vec![0.0; cfg.k],
        }
    }

    pub fn unroll_t(&self) -> usize {
        self.log_eps.len().saturating_sub(1)
    }

    pub fn k(&self) -> usize {
        self.p_raw.len()
    }

    /// `exp(log_eps[i])` with the exponent held to ±[`LOG_LIMIT`], so ε is finite and positive.
    pub fn eps_scale(&self, i: usize) -> f64 {
        self.log_eps[i].clamp(-LOG_LIMIT, LOG_LIMIT).exp()
    }

    /// `exp(log_rho[i])`, limited like ε and floored at [`RHO_FLOOR`](crate::mode_switch::RHO_FLOOR).
    pub fn rho(&self, i: usize) -> f64 {
        self.log_rho[i].clamp(-LOG_LIMIT, LOG_LIMIT).exp().max(crate::mode_switch::RHO_FLOOR)
    }

    pub fn len(&self) -> usize {
        self.log_eps.len() + self.log_rho.len() + self.p_raw.len() + self.d_raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        [&self.log_eps, &self.log_rho, &self.p_raw, &self.d_raw]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }

    /// Rebuilds parameters shaped like `self` from a flat vector.
    pub fn with_values(&self, v: &[f64]) -> Self {
        assert_eq!(v.len(), self.len(), "flat parameter length");
        let (e, rest) = v.split_at(self.log_eps.len());
        let (r, rest) = rest.split_at(self.log_rho.len());
        let (p, d) = rest.split_at(self.p_raw.len());
        TrainableParams {
            log_eps: e.to_vec(),
            log_rho: r.to_vec(),
            p_raw: p.to_vec(),
            d_raw: d.to_vec(),
        }
    }

    pub fn check_users(&self, k: usize) -> Result<(), ParamsError> {
        if self.p_raw.len() != k || self.d_raw.len() != k {
            return Err(ParamsError::UserMismatch {
                file: self.p_raw.len(),
                expected: k,
            });
        }
        if self.log_rho.len() != self.log_eps.len() || self.log_eps.is_empty() {
            return Err(ParamsError::BadField {
                field: "log_rho".into(),
                message: format!(
                    "expected {} entries to match log_eps",
                    self.log_eps.len()
                ),
            });
        }
        Ok(())
    }

    pub fn check_for(&self, k: usize, unroll_t: usize) -> Result<(), ParamsError> {
        self.check_users(k)?;
        if self.unroll_t() != unroll_t {
            return Err(ParamsError::UnrollMismatch {
                file: self.unroll_t(),
                expected: unroll_t,
            });
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        #[derive(Serialize)]
        struct File<'a> {
            version: i64,
            #[serde(rename = "unroll_T")]
            unroll_t: usize,
            #[serde(rename = "K")]
            k: usize,
            log_eps: &'a [f64],
            log_rho: &'a [f64],
            p_raw: &'a [f64],
            d_raw: &'a [f64],
        }
        toml::to_string(&File {
            version: PARAMS_VERSION,
            unroll_t: self.unroll_t(),
            k: self.k(),
            log_eps: &self.log_eps,
            log_rho: &self.log_rho,
            p_raw: &self.p_raw,
            d_raw: &self.d_raw,
        })
        .expect("params are always serializable")
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ParamsError> {
        let table: toml::Table = s.parse().map_err(|e: toml::de::Error| ParamsError::Malformed {
            line: e
                .span()
                .map(|sp| s[..sp.start.min(s.len())].lines().count().max(1))
                .unwrap_or(0),
            message: e.message().to_string(),
        })?;
        let int = |name: &str| -> Result<i64, ParamsError> {
            match table.get(name) {
                None => Err(ParamsError::MissingField(name.into())),
                Some(toml::Value::Integer(i)) => Ok(*i),
                Some(_) => Err(ParamsError::BadField {
                    field: name.into(),
                    message: "expected an integer".into(),
                }),
            }
        };
        let floats = |name: &str| -> Result<Vec<f64>, ParamsError> {
            let bad = |message: &str| ParamsError::BadField {
                field: name.into(),
                message: message.into(),
            };
            match table.get(name) {
                None => Err(ParamsError::MissingField(name.into())),
                Some(toml::Value::Array(xs)) => xs
                    .iter()
                    .map(|x| match x {
                        toml::Value::Float(f) if f.is_finite() => Ok(*f),
                        toml::Value::Integer(i) => Ok(*i as f64),
                        _ => Err(bad("expected finite numbers")),
                    })
                    .collect(),
                Some(_) => Err(bad("expected an array of numbers")),
            }
        };
        let version = int("version")?;
        if version != PARAMS_VERSION {
            return Err(ParamsError::Version(version));
        }
        let unroll_t = int("unroll_T")?;
        let k = int("K")?;
        let params = TrainableParams {
            log_eps: floats("log_eps")?,
            log_rho: floats("log_rho")?,
            p_raw: floats("p_raw")?,
            d_raw: floats("d_raw")?,
        };
        if unroll_t < 0 || params.log_eps.len() != unroll_t as usize + 1 {
            return Err(ParamsError::BadField {
                field: "log_eps".into(),
                message: format!("expected unroll_T + 1 = {} entries", unroll_t + 1),
            });
        }
        if k < 1 {
            return Err(ParamsError::BadField {
                field: "K".into(),
                message: "must be at least 1".into(),
            });
        }
        params.check_users(k as usize)?;
        Ok(params)
    }
}

pub fn save_params(path: impl AsRef<Path>, params: &TrainableParams) -> Result<()> {
    std::fs::write(path, params.to_toml_string())?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<TrainableParams> {
    let text = std::fs::read_to_string(path)?;
    Ok(TrainableParams::from_toml_str(&text)?)
}

/// Hyperparameters of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub dataset_size: usize,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub spsa_c: f64,
    pub seed: u64,
    pub unroll_t: usize,
    pub validation_fraction: f64,
}

impl TrainRun {
    pub fn desk() -> Self {
        TrainRun {
            dataset_size: 200,
            batch_size: 5,
            batches_per_epoch: 40,
            epochs: 10,
            lr: 0.05,
            momentum: 0.7,
            spsa_c: 0.1,
            seed: 3,
            unroll_t: 5,
            validation_fraction: 0.2,
        }
    }

    pub fn full() -> Self {
        TrainRun {
            dataset_size: 10_000,
            batch_size: 10,
            batches_per_epoch: 1000,
            epochs: 30,
            ..Self::desk()
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::config(field, msg));
        if self.dataset_size < 2 {
            return bad("dataset_size", "need at least two realizations");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if !(self.spsa_c > 0.0) {
            return bad("spsa_c", "must be positive");
        }
        if !(self.lr >= 0.0) {
            return bad("lr", "must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", "must lie in [0, 1)");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction", "must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Parameters with the lowest validation loss seen (the starting point counts).
    pub params: TrainableParams,
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    /// 0 when no epoch beat the starting point.
    pub best_epoch: usize,
    /// Validation loss after each completed epoch.
    pub val_curve: Vec<f64>,
    /// Mean of the two perturbed losses over each epoch's batches.
    pub train_curve: Vec<f64>,
    pub halted_early: bool,
    pub loss_evaluations: usize,
}

/// `count` realizations drawn from the stream family `seed`.
pub fn make_dataset(cfg: &SystemConfig, count: usize, seed: u64, exec: Exec) -> Result<Vec<ChannelSet>> {
    if count == 0 {
        return Err(Error::InvalidArgument("dataset needs at least one realization".into()));
    }
    try_map_indexed(exec, count, |i| realization(cfg, seed, i as u64))
}

/// Mean negative WSR of the unrolled pass over `batch`.
pub fn loss(params: &TrainableParams, batch: &[ChannelSet], cfg: &SystemConfig, exec: Exec) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let w = try_map_indexed(exec, batch.len(), |i| {
        pwm_bfnet_forward(cfg, &batch[i], params).map(|(_, t)| t.final_wsr)
    })?;
    Ok(-w.iter().sum::<f64>() / w.len() as f64)
}

/// Source of gradient estimates for the trainer.
pub trait GradientEstimator {
    fn estimate(
        &mut self,
        theta: &[f64],
        loss: &mut dyn FnMut(&[f64]) -> Result<f64>,
    ) -> Result<GradientEstimate>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub grad: Vec<f64>,
    /// Mean of the loss values evaluated while estimating.
    pub loss: f64,
    pub evaluations: usize,
}

/// Two-point simultaneous perturbation along a Rademacher direction.
pub struct Spsa {
    pub c: f64,
    pub rng: ChaCha8Rng,
}

impl GradientEstimator for Spsa {
    fn estimate(
        &mut self,
        theta: &[f64],
        loss: &mut dyn FnMut(&[f64]) -> Result<f64>,
    ) -> Result<GradientEstimate> {
        spsa_gradient(theta, loss, self.c, &mut self.rng)
    }
}

/// `ĝ = (L(θ + cΔ) − L(θ − cΔ)) / (2c) · Δ` with `Δ_i ∈ {±1}`.
pub fn spsa_gradient(
    theta: &[f64],
    loss: &mut dyn FnMut(&[f64]) -> Result<f64>,
    c: f64,
    rng: &mut impl Rng,
) -> Result<GradientEstimate> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument("perturbation scale must be positive".into()));
    }
    let delta: Vec<f64> = (0..theta.len())
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let plus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t + c * d).collect();
    let minus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t - c * d).collect();
    let lp = loss(&plus)?;
    let lm = loss(&minus)?;
    let scale = (lp - lm) / (2.0 * c);
    Ok(GradientEstimate {
        grad: delta.iter().map(|d| scale * d).collect(),
        loss: 0.5 * (lp + lm),
        evaluations: 2,
    })
}

/// SGD with momentum on SPSA estimates; returns the best-validation parameters.
pub fn train(cfg: &SystemConfig, run: &TrainRun, exec: Exec) -> Result<TrainReport> {
    let init = TrainableParams::untrained(cfg, run.unroll_t);
    let est = Spsa {
        c: run.spsa_c,
        rng: rng_for(run.seed, Domain::Spsa, 0),
    };
    train_with(cfg, run, init, est, exec)
}

pub fn train_with(
    cfg: &SystemConfig,
    run: &TrainRun,
    init: TrainableParams,
    mut estimator: impl GradientEstimator,
    exec: Exec,
) -> Result<TrainReport> {
    run.validate()?;
    init.check_for(cfg.k, run.unroll_t)?;
    let data = make_dataset(cfg, run.dataset_size, run.seed, exec)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng_for(run.seed, Domain::Split, 0));
    let n_val = ((data.len() as f64 * run.validation_fraction).round() as usize).clamp(1, data.len() - 1);
    let val: Vec<ChannelSet> = order[..n_val].iter().map(|&i| data[i].clone()).collect();
    let mut train_idx: Vec<usize> = order[n_val..].to_vec();

    let mut evaluations = 0usize;
    let mut theta = init.to_vec();
    let mut velocity = vec![0.0; theta.len()];
    let initial_val_loss = loss(&init, &val, cfg, exec)?;
    evaluations += 1;
    let mut best = (init.clone(), initial_val_loss, 0usize);
    let mut val_curve = Vec::with_capacity(run.epochs);
    let mut train_curve = Vec::with_capacity(run.epochs);
    let mut worse_streak = 0;
    let mut halted_early = false;

    for epoch in 1..=run.epochs {
        train_idx.shuffle(&mut rng_for(run.seed, Domain::Split, epoch as u64));
        let mut epoch_loss = 0.0;
        for b in 0..run.batches_per_epoch {
            let batch: Vec<ChannelSet> = (0..run.batch_size)
                .map(|j| data[train_idx[(b * run.batch_size + j) % train_idx.len()]].clone())
                .collect();
            let mut f = |v: &[f64]| loss(&init.with_values(v), &batch, cfg, exec);
            let g = estimator.estimate(&theta, &mut f)?;
            evaluations += g.evaluations;
            epoch_loss += g.loss;
            for ((t, v), gi) in theta.iter_mut().zip(velocity.iter_mut()).zip(&g.grad) {
                *v = run.momentum * *v + gi;
                *t -= run.lr * *v;
            }
        }
        train_curve.push(epoch_loss / run.batches_per_epoch.max(1) as f64);
        let params = init.with_values(&theta);
        let v = loss(&params, &val, cfg, exec)?;
        evaluations += 1;
        val_curve.push(v);
        log::info!("epoch {epoch}: validation loss {v:.6}");
        if v < best.1 {
            best = (params, v, epoch);
        }
        if v > best.1 + 0.5 * best.1.abs() {
            worse_streak += 1;
            if worse_streak >= 3 {
                log::warn!("validation loss diverged for 3 epochs, stopping at epoch {epoch}");
                halted_early = true;
                break;
            }
        } else {
            worse_streak = 0;
        }
    }

    Ok(TrainReport {
        params: best.0,
        initial_val_loss,
        best_val_loss: best.1,
        best_epoch: best.2,
        val_curve,
        train_curve,
        halted_early,
        loss_evaluations: evaluations,
    })
}
