use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the distributed-antenna baseline places its antennas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DasPlacement {
    /// Reuse the connected-element positions found by PWM on the same realization.
    #[default]
    PerRealization,
    /// Use the positions PWM finds on a single reference realization (index 0 of
    /// the configured seed), as a fixed deployment would.
    Deployment,
}

/// Scenario description. Field names in the config file match the struct's
/// serialized names exactly (`K`, `Nt`, `Ptot_dbm`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "Nt")]
    pub nt: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "Nz")]
    pub nz: usize,
    #[serde(rename = "Ny")]
    pub ny: usize,
    pub a: usize,
    #[serde(rename = "Ptot_dbm")]
    pub ptot_dbm: f64,
    pub sigma2_dbm: f64,
    /// Per-user weights; empty means all ones.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alpha: Vec<f64>,
    pub rician_xi: f64,
    pub pathloss_c0_db: f64,
    pub delta_b: f64,
    pub delta_r: f64,
    pub pos_bs: [f64; 3],
    pub pos_rdars: [f64; 3],
    pub ue_center: [f64; 3],
    pub ue_radius: f64,
    pub rho0: f64,
    pub eta: f64,
    pub max_outer_iters: usize,
    pub tol_outer: f64,
    pub max_inner_pi: usize,
    pub tol_inner: f64,
    pub seed: u64,
    #[serde(default)]
    pub das_placement: DasPlacement,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SystemConfig {
    /// Small scenario that exercises every algorithm branch in seconds.
    pub fn desk() -> Self {
        SystemConfig {
            k: 2,
            nt: 8,
            n: 32,
            nz: 4,
            ny: 8,
            a: 4,
            ptot_dbm: 20.0,
            sigma2_dbm: -80.0,
            alpha: Vec::new(),
            rician_xi: 10.0,
            pathloss_c0_db: 60.4,
            delta_b: 2.2,
            delta_r: 2.4,
            pos_bs: [0.0, 0.0, 15.0],
            pos_rdars: [10.0, 0.0, 15.0],
            ue_center: [10.0, 50.0, 2.0],
            ue_radius: 5.0,
            rho0: 1e6,
            eta: 1e-3,
            max_outer_iters: 100,
            tol_outer: 1e-4,
            max_inner_pi: 200,
            tol_inner: 1e-6,
            seed: 1,
            das_placement: DasPlacement::PerRealization,
        }
    }

    /// The full-size scenario (K=4, Nt=16, N=128, a=8).
    pub fn full() -> Self {
        SystemConfig {
            k: 4,
            nt: 16,
            n: 128,
            nz: 8,
            ny: 16,
            a: 8,
            ..Self::desk()
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SystemConfig = toml::from_str(s).map_err(|e| {
            let line = e
                .span()
                .map(|sp| s[..sp.start.min(s.len())].lines().count().max(1))
                .unwrap_or(0);
            Error::ConfigSyntax {
                line,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("K", "need at least one user"));
        }
        if self.nt == 0 {
            return Err(Error::config("Nt", "need at least one BS antenna"));
        }
        if self.nz * self.ny != self.n {
            return Err(Error::config(
                "N",
                format!("Nz*Ny = {}*{} must equal N = {}", self.nz, self.ny, self.n),
            ));
        }
        if self.a == 0 || self.a >= self.n {
            return Err(Error::config(
                "a",
                format!(
                    "connected-element count constraint requires 1 <= a < N (got a={}, N={})",
                    self.a, self.n
                ),
            ));
        }
        for (field, v) in [
            ("Ptot_dbm", self.ptot_dbm),
            ("sigma2_dbm", self.sigma2_dbm),
            ("pathloss_c0_db", self.pathloss_c0_db),
            ("delta_b", self.delta_b),
            ("delta_r", self.delta_r),
        ] {
            if !v.is_finite() {
                return Err(Error::config(field, "must be finite"));
            }
        }
        for (field, v) in [
            ("rician_xi", self.rician_xi),
            ("rho0", self.rho0),
            ("tol_outer", self.tol_outer),
            ("tol_inner", self.tol_inner),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::config(
                "eta",
                format!("penalty step must lie in (0, 1), got {}", self.eta),
            ));
        }
        if !(self.ue_radius >= 0.0) {
            return Err(Error::config("ue_radius", "must be nonnegative"));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::config("max_outer_iters", "must be at least 1"));
        }
        if self.max_inner_pi == 0 {
            return Err(Error::config("max_inner_pi", "must be at least 1"));
        }
        if !self.alpha.is_empty() {
            if self.alpha.len() != self.k {
                return Err(Error::config(
                    "alpha",
                    format!("expected {} weights, got {}", self.k, self.alpha.len()),
                ));
            }
            if self.alpha.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
                return Err(Error::config("alpha", "weights must be nonnegative"));
            }
            if self.alpha.iter().all(|&w| w == 0.0) {
                return Err(Error::config("alpha", "weights must not all be zero"));
            }
        }
        let d = dist(self.pos_bs, self.pos_rdars);
        if !(d > 0.0) {
            return Err(Error::config("pos_rdars", "must differ from pos_bs"));
        }
        Ok(())
    }

    pub fn weights(&self) -> Vec<f64> {
        if self.alpha.is_empty() {
            vec![1.0; self.k]
        } else {
            self.alpha.clone()
        }
    }

    pub fn ptot(&self) -> f64 {
        dbm_to_watts(self.ptot_dbm)
    }

    pub fn sigma2(&self) -> f64 {
        dbm_to_watts(self.sigma2_dbm)
    }

    /// Returns a copy with a different user count, sized consistently.
    pub fn with_users(&self, k: usize) -> Self {
        let mut c = self.clone();
        c.k = k;
        if !c.alpha.is_empty() {
            c.alpha.resize(k, 1.0);
        }
        c
    }

    /// Returns a copy with `n` elements, factored as `Nz x Ny` with `Nz` the
    /// largest divisor of `n` not exceeding its square root.
    pub fn with_elements(&self, n: usize) -> Self {
        let mut nz = 1;
        let mut d = 1;
        while d * d <= n {
            if n % d == 0 {
                nz = d;
            }
            d += 1;
        }
        SystemConfig {
            n,
            nz,
            ny: n / nz.max(1),
            ..self.clone()
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub(crate) fn dist(p: [f64; 3], q: [f64; 3]) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
}
