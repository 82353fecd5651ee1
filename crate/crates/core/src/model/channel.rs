use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{dist, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};
use crate::rng::{rng_for, Domain};

/// One channel realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    /// BS to surface, `N x Nt`.
    pub g: CMat,
    /// Surface to user `k`, length `N` each.
    pub h_r: Vec<CVec>,
    pub kappa_b: Complex64,
    pub kappa_r: Vec<Complex64>,
    pub ue_positions: Vec<[f64; 3]>,
    /// Stream index this realization was drawn from; also seeds solver
    /// initialization so every run on it is reproducible.
    pub realization: u64,
}

impl ChannelSet {
    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    pub fn nt(&self) -> usize {
        self.g.ncols()
    }

    pub fn k(&self) -> usize {
        self.h_r.len()
    }

    pub fn check_dims(&self, cfg: &SystemConfig) -> Result<()> {
        if self.n() != cfg.n || self.nt() != cfg.nt || self.k() != cfg.k {
            return Err(Error::Dimension(format!(
                "channel is N={} Nt={} K={} but config has N={} Nt={} K={}",
                self.n(),
                self.nt(),
                self.k(),
                cfg.n,
                cfg.nt,
                cfg.k
            )));
        }
        if self.h_r.iter().any(|h| h.len() != self.n()) {
            return Err(Error::Dimension("user channel length differs from N".into()));
        }
        Ok(())
    }
}

pub fn steering_vector(n: usize, theta: f64) -> Result<CVec> {
    if n == 0 {
        return Err(Error::InvalidArgument("steering vector needs n >= 1".into()));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok(CVec::from_fn(n, |m, _| {
        Complex64::from_polar(scale, std::f64::consts::PI * theta * m as f64)
    }))
}

/// Planar-array response `b(nz, chi) ⊗ b(ny, psi)`; entry `iz * ny + iy`.
pub fn planar_steering(nz: usize, ny: usize, chi: f64, psi: f64) -> Result<CVec> {
    let bz = steering_vector(nz, chi)?;
    let by = steering_vector(ny, psi)?;
    Ok(bz.kronecker(&by))
}

/// Linear power gain `10^(-c0/10) * d^(-delta)`.
pub fn path_gain(d: f64, delta: f64, c0_db: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "link distance must be positive, got {d}"
        )));
    }
    Ok(10f64.powf(-c0_db / 10.0) * d.powf(-delta))
}

pub fn complex_normal(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

// Direction cosines of q - p along (y, z).
fn cosines(p: [f64; 3], q: [f64; 3]) -> (f64, f64) {
    let d = dist(p, q);
    ((q[1] - p[1]) / d, (q[2] - p[2]) / d)
}

fn drop_user(cfg: &SystemConfig, rng: &mut impl Rng) -> [f64; 3] {
    let r = cfg.ue_radius * rng.random::<f64>().sqrt();
    let t = std::f64::consts::TAU * rng.random::<f64>();
    [
        cfg.ue_center[0] + r * t.cos(),
        cfg.ue_center[1] + r * t.sin(),
        cfg.ue_center[2],
    ]
}

/// Draws one realization. The BS array is a ULA along y; the surface is a
/// planar array in the y-z plane with z vertical.
pub fn generate_channels(cfg: &SystemConfig, rng: &mut ChaCha8Rng) -> Result<ChannelSet> {
    generate_with_index(cfg, rng, 0)
}

fn generate_with_index(cfg: &SystemConfig, rng: &mut ChaCha8Rng, index: u64) -> Result<ChannelSet> {
    cfg.validate()?;
    let xi = cfg.rician_xi;
    let los = (xi / (xi + 1.0)).sqrt();
    let nlos = (1.0 / (xi + 1.0)).sqrt();

    let ue_positions: Vec<[f64; 3]> = (0..cfg.k).map(|_| drop_user(cfg, rng)).collect();

    let d_b = dist(cfg.pos_bs, cfg.pos_rdars);
    let kappa_b = Complex64::from(path_gain(d_b, cfg.delta_b, cfg.pathloss_c0_db)?.sqrt());
    let (theta, _) = cosines(cfg.pos_bs, cfg.pos_rdars);
    let (psi, chi) = cosines(cfg.pos_rdars, cfg.pos_bs);
    let b_bs = steering_vector(cfg.nt, theta)?;
    let b_sf = planar_steering(cfg.nz, cfg.ny, chi, psi)?;
    let g_los = &b_sf * b_bs.adjoint();
    let mut g = CMat::zeros(cfg.n, cfg.nt);
    for i in 0..cfg.n {
        for j in 0..cfg.nt {
            g[(i, j)] = kappa_b * (g_los[(i, j)] * los + complex_normal(rng) * nlos);
        }
    }

    let mut h_r = Vec::with_capacity(cfg.k);
    let mut kappa_r = Vec::with_capacity(cfg.k);
    for pos in &ue_positions {
        let d = dist(cfg.pos_rdars, *pos);
        let kr = Complex64::from(path_gain(d, cfg.delta_r, cfg.pathloss_c0_db)?.sqrt());
        let (upsilon, phi) = cosines(cfg.pos_rdars, *pos);
        let b = planar_steering(cfg.nz, cfg.ny, phi, upsilon)?;
        let h = CVec::from_fn(cfg.n, |n, _| kr * (b[n] * los + complex_normal(rng) * nlos));
        h_r.push(h);
        kappa_r.push(kr);
    }

    let ch = ChannelSet {
        g,
        h_r,
        kappa_b,
        kappa_r,
        ue_positions,
        realization: index,
    };
    if ch.g.iter().chain(ch.h_r.iter().flatten()).any(|z| !z.is_finite()) {
        return Err(Error::Numerical("non-finite channel entry".into()));
    }
    Ok(ch)
}

/// Realization `index` of the stream family selected by `seed`.
pub fn realization(cfg: &SystemConfig, seed: u64, index: u64) -> Result<ChannelSet> {
    let mut rng = rng_for(seed, Domain::Channel, index);
    generate_with_index(cfg, &mut rng, index)
}
