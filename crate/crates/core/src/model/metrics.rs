use nalgebra::RowDVector;
use num_complex::Complex64;

use super::channel::ChannelSet;
use super::state::{check_assignment, SolverState};
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};

pub type CRow = RowDVector<Complex64>;

/// Stacked effective channels, one row per user, `K x (Nt + a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    pub h: CMat,
}

impl EffectiveChannel {
    pub fn k(&self) -> usize {
        self.h.nrows()
    }

    pub fn row(&self, k: usize) -> CRow {
        self.h.row(k).into_owned()
    }
}

/// Row `k` is `[phi^H (I - A) H_{r,k}, h_{r,k}^H Ã]` with
/// `H_{r,k} = diag(h_{r,k}^H) G`.
pub fn effective_channel(
    ch: &ChannelSet,
    phi: &CVec,
    a_vec: &[bool],
    assign: &[usize],
) -> Result<EffectiveChannel> {
    let n = ch.n();
    let nt = ch.nt();
    if phi.len() != n || a_vec.len() != n {
        return Err(Error::Dimension(format!(
            "phase/selection lengths {}/{} do not match N={n}",
            phi.len(),
            a_vec.len()
        )));
    }
    check_assignment(n, assign)?;
    let a = assign.len();
    let mut h = CMat::zeros(ch.k(), nt + a);
    for (k, hr) in ch.h_r.iter().enumerate() {
        // weight_n = conj(phi_n) (1 - a_n) conj(h_{r,k,n})
        let w = CVec::from_fn(n, |i, _| {
            if a_vec[i] {
                Complex64::from(0.0)
            } else {
                (phi[i] * hr[i]).conj()
            }
        });
        let refl = w.transpose() * &ch.g;
        h.view_mut((k, 0), (1, nt)).copy_from(&refl);
        for (l, &idx) in assign.iter().enumerate() {
            h[(k, nt + l)] = hr[idx].conj();
        }
    }
    Ok(EffectiveChannel { h })
}

pub fn effective_channel_of(ch: &ChannelSet, st: &SolverState) -> Result<EffectiveChannel> {
    effective_channel(ch, &st.phi, &st.a_vec, &st.assign)
}

/// Distributed-antenna reduction: only the connected-element block remains.
pub fn das_effective_channel(ch: &ChannelSet, assign: &[usize]) -> Result<EffectiveChannel> {
    check_assignment(ch.n(), assign)?;
    let nt = ch.nt();
    let mut h = CMat::zeros(ch.k(), nt + assign.len());
    for (k, hr) in ch.h_r.iter().enumerate() {
        for (l, &idx) in assign.iter().enumerate() {
            h[(k, nt + l)] = hr[idx].conj();
        }
    }
    Ok(EffectiveChannel { h })
}

fn check_product(h: &CMat, f: &CMat) -> Result<()> {
    if h.ncols() != f.nrows() || h.nrows() != f.ncols() {
        return Err(Error::Dimension(format!(
            "channel {}x{} incompatible with beamformer {}x{}",
            h.nrows(),
            h.ncols(),
            f.nrows(),
            f.ncols()
        )));
    }
    Ok(())
}

/// Per-user SINR and rate (bits/s/Hz).
pub fn sinr_and_rate(h: &CMat, f: &CMat, sigma2: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_product(h, f)?;
    let s = h * f;
    let k = s.nrows();
    let mut gamma = Vec::with_capacity(k);
    for i in 0..k {
        let signal = s[(i, i)].norm_sqr();
        let interf: f64 = (0..k).filter(|&m| m != i).map(|m| s[(i, m)].norm_sqr()).sum();
        gamma.push(signal / (interf + sigma2));
    }
    let rate = gamma.iter().map(|g| (1.0 + g).log2()).collect();
    Ok((gamma, rate))
}

pub fn wsr(alpha: &[f64], rate: &[f64]) -> f64 {
    alpha.iter().zip(rate).map(|(a, r)| a * r).sum()
}

pub fn wsr_of(ch: &ChannelSet, st: &SolverState, alpha: &[f64], sigma2: f64) -> Result<f64> {
    let h = effective_channel_of(ch, st)?;
    let (_, r) = sinr_and_rate(&h.h, &st.f, sigma2)?;
    Ok(wsr(alpha, &r))
}

/// `J̃_k = Σ_m |h_k f_m|² + (σ²/Ptot)‖F‖²` for every user.
pub fn receive_power(h: &CMat, f: &CMat, sigma2: f64, ptot: f64) -> Result<Vec<f64>> {
    check_product(h, f)?;
    let s = h * f;
    let noise = sigma2 / ptot * f.norm_squared();
    Ok((0..s.nrows())
        .map(|k| s.row(k).iter().map(|z| z.norm_sqr()).sum::<f64>() + noise)
        .collect())
}

/// MSE of user `k` for receive scalar `u_k`, with the transmit-power-normalized
/// noise term: `1 - 2Re(u* h_k f_k) + |u|² (Σ_m |h_k f_m|² + (σ²/Ptot)‖F‖²)`.
pub fn mse_e_k(
    h_k: &CRow,
    k: usize,
    f: &CMat,
    u_k: Complex64,
    sigma2: f64,
    ptot: f64,
) -> Result<f64> {
    if !(ptot > 0.0) {
        return Err(Error::InvalidArgument("total power must be positive".into()));
    }
    if h_k.len() != f.nrows() || k >= f.ncols() {
        return Err(Error::Dimension(format!(
            "channel row length {} / user {k} vs beamformer {}x{}",
            h_k.len(),
            f.nrows(),
            f.ncols()
        )));
    }
    let s = h_k * f;
    let j: f64 = s.iter().map(|z| z.norm_sqr()).sum::<f64>() + sigma2 / ptot * f.norm_squared();
    let e = 1.0 - 2.0 * (u_k.conj() * s[k]).re + u_k.norm_sqr() * j;
    if e < -1e-12 * (1.0 + u_k.norm_sqr() * j) {
        return Err(Error::Numerical(format!("negative MSE {e:e} for user {k}")));
    }
    Ok(e.max(0.0))
}

/// MSE of every user at the given receive scalars.
pub fn mse_all(h: &CMat, f: &CMat, u: &[Complex64], sigma2: f64, ptot: f64) -> Result<Vec<f64>> {
    (0..h.nrows())
        .map(|k| mse_e_k(&h.row(k).into_owned(), k, f, u[k], sigma2, ptot))
        .collect()
}

/// Minimum MSE per user, `(J̃_k - |h_k f_k|²) / J̃_k`; 1 when nothing is received.
pub fn mmse(h: &CMat, f: &CMat, sigma2: f64, ptot: f64) -> Result<Vec<f64>> {
    check_product(h, f)?;
    let s = h * f;
    let noise = sigma2 / ptot * f.norm_squared();
    Ok((0..s.nrows())
        .map(|k| {
            let rest: f64 = (0..s.ncols())
                .filter(|&m| m != k)
                .map(|m| s[(k, m)].norm_sqr())
                .sum::<f64>()
                + noise;
            let total = rest + s[(k, k)].norm_sqr();
            if total > 0.0 {
                rest / total
            } else {
                1.0
            }
        })
        .collect())
}

/// `|Σα log2(1/e_mmse) − Σα log2(1+γ̃)|`, where `γ̃` uses the same normalized
/// noise `σ²‖F‖²/Ptot` as the MSE.
pub fn lemma1_identity_check(h: &CMat, f: &CMat, sigma2: f64, ptot: f64, alpha: &[f64]) -> Result<f64> {
    let e = mmse(h, f, sigma2, ptot)?;
    let s = h * f;
    let noise = sigma2 / ptot * f.norm_squared();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for k in 0..s.nrows() {
        lhs += alpha[k] * (1.0 / e[k]).log2();
        let interf: f64 = (0..s.ncols())
            .filter(|&m| m != k)
            .map(|m| s[(k, m)].norm_sqr())
            .sum::<f64>()
            + noise;
        let sig = s[(k, k)].norm_sqr();
        let gamma = if sig == 0.0 { 0.0 } else { sig / interf };
        rhs += alpha[k] * gamma.ln_1p() / std::f64::consts::LN_2;
    }
    Ok((lhs - rhs).abs())
}

/// WMMSE objective `Σ α_k (λ_k e_k − ln λ_k)`.
pub fn wmmse_objective(
    h: &CMat,
    f: &CMat,
    u: &[Complex64],
    lambda: &[f64],
    alpha: &[f64],
    sigma2: f64,
    ptot: f64,
) -> Result<f64> {
    let e = mse_all(h, f, u, sigma2, ptot)?;
    Ok((0..e.len())
        .map(|k| alpha[k] * (lambda[k] * e[k] - lambda[k].ln()))
        .sum())
}
