//! Reference computations written directly from the model definitions,
//! sharing nothing with the library beyond its data types.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rdars_core::linalg::{CMat, CVec};
use rdars_core::{ChannelSet, SolverState};

pub type C = Complex64;

/// `[φ^H (I − A) diag(h_{r,k}^H) G, h_{r,k}^H Ã]` built entry by entry.
pub fn effective_channel(ch: &ChannelSet, phi: &CVec, a_vec: &[bool], assign: &[usize]) -> CMat {
    let (n, nt, k) = (ch.g.nrows(), ch.g.ncols(), ch.h_r.len());
    let mut h = CMat::zeros(k, nt + assign.len());
    for u in 0..k {
        for t in 0..nt {
            let mut acc = C::new(0.0, 0.0);
            for e in 0..n {
                if !a_vec[e] {
                    acc += phi[e].conj() * ch.h_r[u][e].conj() * ch.g[(e, t)];
                }
            }
            h[(u, t)] = acc;
        }
        for (l, &e) in assign.iter().enumerate() {
            h[(u, nt + l)] = ch.h_r[u][e].conj();
        }
    }
    h
}

/// Receive power `J̃_k = Σ_m |h_k f_m|² + σ²‖F‖²/P`.
pub fn receive_power(h: &CMat, f: &CMat, sigma2: f64, ptot: f64) -> Vec<f64> {
    let s = h * f;
    let noise = sigma2 / ptot * f.iter().map(|z| z.norm_sqr()).sum::<f64>();
    (0..s.nrows())
        .map(|k| (0..s.ncols()).map(|m| s[(k, m)].norm_sqr()).sum::<f64>() + noise)
        .collect()
}

/// MMSE `1 − |h_k f_k|²/J̃_k` and rate `log2(1 + |h_k f_k|²/(J̃_k − |h_k f_k|²))`.
pub fn mmse_and_rates(h: &CMat, f: &CMat, sigma2: f64, ptot: f64) -> (Vec<f64>, Vec<f64>) {
    let s = h * f;
    let j = receive_power(h, f, sigma2, ptot);
    let mut e = Vec::new();
    let mut r = Vec::new();
    for k in 0..s.nrows() {
        let sig = s[(k, k)].norm_sqr();
        e.push(1.0 - sig / j[k]);
        r.push((1.0 + sig / (j[k] - sig)).log2());
    }
    (e, r)
}

/// Rates with the physical noise power `σ²`.
pub fn rates(h: &CMat, f: &CMat, sigma2: f64) -> Vec<f64> {
    let s = h * f;
    (0..s.nrows())
        .map(|k| {
            let sig = s[(k, k)].norm_sqr();
            let interf: f64 = (0..s.ncols()).filter(|&m| m != k).map(|m| s[(k, m)].norm_sqr()).sum();
            (1.0 + sig / (interf + sigma2)).log2()
        })
        .collect()
}

/// `E|u_k^* y_k − s_k|²` at receive scalar `u_k`.
pub fn mse(h: &CMat, f: &CMat, u: &[C], sigma2: f64, ptot: f64) -> Vec<f64> {
    let s = h * f;
    let j = receive_power(h, f, sigma2, ptot);
    (0..s.nrows())
        .map(|k| 1.0 - 2.0 * (u[k].conj() * s[(k, k)]).re + u[k].norm_sqr() * j[k])
        .collect()
}

/// `‖A − ÃÃ^T‖_F²` from explicit matrices.
pub fn penalty(a_vec: &[bool], assign: &[usize]) -> f64 {
    let n = a_vec.len();
    let mut at = DMatrix::<f64>::zeros(n, assign.len());
    for (l, &e) in assign.iter().enumerate() {
        at[(e, l)] = 1.0;
    }
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        a_vec.iter().map(|&b| if b { 1.0 } else { 0.0 }),
    ));
    (a - &at * at.transpose()).norm_squared()
}

/// `Σ α_k λ_k e_k + (1/2ρ)‖A − ÃÃ^T‖_F²` with `F`, `φ`, `u`, `λ` from `st`.
#[allow(clippy::too_many_arguments)]
pub fn penalized_objective(
    ch: &ChannelSet,
    st: &SolverState,
    a_vec: &[bool],
    assign: &[usize],
    alpha: &[f64],
    rho: f64,
    sigma2: f64,
    ptot: f64,
) -> f64 {
    let h = effective_channel(ch, &st.phi, a_vec, assign);
    let e = mse(&h, &st.f, &st.u, sigma2, ptot);
    let data: f64 = e.iter().enumerate().map(|(k, e)| alpha[k] * st.lambda[k] * e).sum();
    data + penalty(a_vec, assign) / (2.0 * rho)
}

/// Largest eigenvalue of a Hermitian matrix by full decomposition.
pub fn lambda_max(m: &CMat) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Every `count`-subset of `0..n`.
pub fn subsets(n: usize, count: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, count: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == count {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, count, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, count, &mut Vec::new(), &mut out);
    out
}

/// Every ordered `count`-tuple of distinct elements of `0..n`.
pub fn arrangements(n: usize, count: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for s in subsets(n, count) {
        permute(&s, &mut Vec::new(), &mut vec![false; s.len()], &mut out);
    }
    out
}

fn permute(items: &[usize], cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == items.len() {
        out.push(cur.clone());
        return;
    }
    for i in 0..items.len() {
        if !used[i] {
            used[i] = true;
            cur.push(items[i]);
            permute(items, cur, used, out);
            cur.pop();
            used[i] = false;
        }
    }
}

/// `Σ_l c[l·N + assign_l]`.
pub fn assignment_cost(c: &[f64], n: usize, assign: &[usize]) -> f64 {
    assign.iter().enumerate().map(|(l, &e)| c[l * n + e]).sum()
}

/// All binary vectors of length `n`.
pub fn binary(n: usize) -> Vec<Vec<bool>> {
    (0u32..1 << n).map(|b| (0..n).map(|i| b >> i & 1 == 1).collect()).collect()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn stderr(x: &[f64]) -> f64 {
    let m = mean(x);
    let n = x.len() as f64;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
}
