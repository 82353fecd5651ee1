//! Closed-form WMMSE updates of the receive scalars, MSE weights and the
//! equivalent active beamformer, plus initializations and power scaling.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_solve, CMat, ONE, ZERO};
use crate::model::metrics::{mse_all, receive_power};

pub use crate::model::metrics::lemma1_identity_check;

/// Result of one `u -> λ -> F` round.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveUpdate {
    pub u: Vec<Complex64>,
    pub lambda: Vec<f64>,
    pub f: CMat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Zf,
    Mrt,
    /// ZF was selected but the channel was rank deficient.
    MrtFallback,
}

/// MMSE receive scalars `u_k = h_k f_k / J̃_k`.
pub fn update_u(h: &CMat, f: &CMat, sigma2: f64, ptot: f64) -> Result<Vec<Complex64>> {
    let j = receive_power(h, f, sigma2, ptot)?;
    let s = h * f;
    j.iter()
        .enumerate()
        .map(|(k, &jk)| {
            if jk == 0.0 && s[(k, k)] == ZERO {
                Ok(ZERO)
            } else if jk > 0.0 && jk.is_finite() {
                Ok(s[(k, k)] / jk)
            } else {
                Err(Error::Numerical(format!(
                    "receive power of user {k} is {jk:e}"
                )))
            }
        })
        .collect()
}

/// MSE weights `λ_k = 1/e_k`.
pub fn update_lambda(e: &[f64]) -> Result<Vec<f64>> {
    e.iter()
        .enumerate()
        .map(|(k, &ek)| {
            if ek > 0.0 {
                Ok(1.0 / ek)
            } else {
                Err(Error::Numerical(format!("MSE of user {k} is {ek:e}, not positive")))
            }
        })
        .collect()
}

/// Weighted regularized beamformer
/// `f_k = α_k λ_k u_k (Σ_m α_m λ_m |u_m|² ((σ²/Ptot) I + h_m^H h_m))^{-1} h_k^H`.
///
/// Unscaled; returns zero when every user's weight vanishes.
pub fn update_f(
    h: &CMat,
    u: &[Complex64],
    lambda: &[f64],
    alpha: &[f64],
    sigma2: f64,
    ptot: f64,
) -> Result<CMat> {
    let (k, l) = h.shape();
    if u.len() != k || lambda.len() != k || alpha.len() != k {
        return Err(Error::Dimension(format!(
            "expected {k} receive scalars, weights and priorities"
        )));
    }
    let w: Vec<f64> = (0..k).map(|m| alpha[m] * lambda[m] * u[m].norm_sqr()).collect();
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        return Ok(CMat::zeros(l, k));
    }
    let mut m = CMat::identity(l, l) * Complex64::from(total * sigma2 / ptot);
    for (i, &wi) in w.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        let hi = h.row(i);
        m.gerc(Complex64::from(wi), &hi.adjoint(), &hi.adjoint(), ONE);
    }
    let mut rhs = h.adjoint();
    for i in 0..k {
        let coef = u[i] * (alpha[i] * lambda[i]);
        for z in rhs.column_mut(i).iter_mut() {
            *z *= coef;
        }
    }
    hermitian_solve(&m, &rhs)
}

/// Rescales `F` so that `‖F‖_F² = Ptot`.
pub fn scale_to_power(f: &CMat, ptot: f64) -> Result<CMat> {
    let p = f.norm_squared();
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::Numerical(format!(
            "cannot scale beamformer with power {p:e}"
        )));
    }
    Ok(f * Complex64::from((ptot / p).sqrt()))
}

fn zf_direction(h: &CMat) -> Option<CMat> {
    let gram = h * h.adjoint();
    hermitian_solve(&gram, &CMat::identity(h.nrows(), h.nrows()))
        .ok()
        .map(|inv| h.adjoint() * inv)
}

/// ZF at high SNR (`Ptot/(Kσ²) ≥ 10 dB`), MRT otherwise, scaled to full power.
pub fn mrt_zf_init(h: &CMat, ptot: f64, sigma2: f64) -> Result<(CMat, InitKind)> {
    let snr = ptot / (h.nrows() as f64 * sigma2);
    let (f, kind) = if snr >= 10.0 {
        match zf_direction(h) {
            Some(f) => (f, InitKind::Zf),
            None => {
                log::warn!("channel is rank deficient, falling back to MRT initialization");
                (h.adjoint(), InitKind::MrtFallback)
            }
        }
    } else {
        (h.adjoint(), InitKind::Mrt)
    };
    Ok((scale_to_power(&f, ptot)?, kind))
}

/// Zero-forcing initialization (MRT when the channel is rank deficient).
pub fn zf_init(h: &CMat, ptot: f64) -> Result<(CMat, InitKind)> {
    let (f, kind) = match zf_direction(h) {
        Some(f) => (f, InitKind::Zf),
        None => (h.adjoint(), InitKind::MrtFallback),
    };
    Ok((scale_to_power(&f, ptot)?, kind))
}

/// Regularized matched filter
/// `f_k = √p_k v_k/‖v_k‖`, `v_k = (I + Σ_m (δ_m/σ²) h_m^H h_m)^{-1} h_k^H`.
pub fn simple_structure_f(h: &CMat, p: &[f64], delta: &[f64], sigma2: f64) -> Result<CMat> {
    let (k, l) = h.shape();
    if p.len() != k || delta.len() != k {
        return Err(Error::Dimension(format!("expected {k} power and regularization weights")));
    }
    if p.iter().chain(delta).any(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidArgument(
            "power and regularization weights must be nonnegative".into(),
        ));
    }
    let mut m = CMat::identity(l, l);
    for i in 0..k {
        if delta[i] > 0.0 {
            let hi = h.row(i).adjoint();
            m.gerc(Complex64::from(delta[i] / sigma2), &hi, &hi, ONE);
        }
    }
    let mut v = hermitian_solve(&m, &h.adjoint())?;
    for i in 0..k {
        let norm = v.column(i).norm();
        let scale = if norm > 0.0 { p[i].sqrt() / norm } else { 0.0 };
        v.column_mut(i).scale_mut(scale);
    }
    Ok(v)
}

/// `Ptot · softmax(raw)`, computed stably.
pub fn softmax_power(raw: &[f64], ptot: f64) -> Vec<f64> {
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = raw.iter().map(|r| (r - max).exp()).collect();
    let sum: f64 = ex.iter().sum();
    ex.iter().map(|e| e / sum * ptot).collect()
}

/// One `u -> λ -> F` round; `F` is returned unscaled.
pub fn active_round(
    h: &CMat,
    f: &CMat,
    alpha: &[f64],
    sigma2: f64,
    ptot: f64,
) -> Result<ActiveUpdate> {
    let u = update_u(h, f, sigma2, ptot)?;
    let e = mse_all(h, f, &u, sigma2, ptot)?;
    let lambda = update_lambda(&e)?;
    let f = update_f(h, &u, &lambda, alpha, sigma2, ptot)?;
    Ok(ActiveUpdate { u, lambda, f })
}
