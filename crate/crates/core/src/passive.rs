//! Reflection-phase update as a unimodular quadratic program solved by the
//! phase-projected power iteration.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{frobenius, quad_form, CMat, CVec, ONE, ZERO};
use crate::model::{ChannelSet, SolverState};

/// `φ^H C φ + 2Re(β^H φ)` plus its homogenized form
/// `D = [−C, −β; −β^H, 0]` over `p = [φ; q]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PassiveQuadratic {
    pub c: CMat,
    pub beta: CVec,
    pub d: CMat,
    pub eps: f64,
}

impl PassiveQuadratic {
    /// The φ-dependent part of the weighted MSE sum.
    pub fn objective(&self, phi: &CVec) -> f64 {
        quad_form(&self.c, phi) + 2.0 * self.beta.dotc(phi).re
    }

    /// `D + εI` for the given ε.
    pub fn shifted(&self, eps: f64) -> CMat {
        let n = self.d.nrows();
        &self.d + CMat::identity(n, n) * Complex64::from(eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PassiveMode {
    IterateToTol { tol: f64, max_steps: usize },
    SingleStep,
}

/// Regularization used by the power iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eps {
    /// `‖D‖_F (1 + 1e-6)`.
    Auto,
    /// `scale · ‖D‖_F`.
    Relative(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassiveOutcome {
    pub phi: CVec,
    pub steps: usize,
    /// `p^H (D+εI) p` at the start and after every step.
    pub values: Vec<f64>,
    pub eps: f64,
    /// `Σ |(D+εI)_{mn}|`, an upper bound on every value.
    pub bound: f64,
}

/// Per-pair reflected and connected-path terms of `h_k f_m`.
pub(crate) struct PathTerms {
    /// `y[k][m][n] = conj(h_{r,k,n}) (G w_{b,m})_n`, i.e. `H_{r,k} w_{b,m}`.
    pub y: Vec<Vec<CVec>>,
    /// `c[k][m] = h_{r,k}^H Ã w_{r,m}`.
    pub c: Vec<Vec<Complex64>>,
}

pub(crate) fn path_terms(ch: &ChannelSet, st: &SolverState) -> PathTerms {
    let w_b = st.w_b();
    let w_r = st.w_r();
    let gw = &ch.g * &w_b;
    let k = st.k();
    let mut y = Vec::with_capacity(ch.k());
    let mut c = Vec::with_capacity(ch.k());
    for hr in &ch.h_r {
        let yk: Vec<CVec> = (0..k)
            .map(|m| CVec::from_fn(ch.n(), |n, _| hr[n].conj() * gw[(n, m)]))
            .collect();
        let ck: Vec<Complex64> = (0..k)
            .map(|m| {
                st.assign
                    .iter()
                    .enumerate()
                    .map(|(l, &idx)| hr[idx].conj() * w_r[(l, m)])
                    .sum()
            })
            .collect();
        y.push(yk);
        c.push(ck);
    }
    PathTerms { y, c }
}

pub fn build_passive_quadratic(
    ch: &ChannelSet,
    st: &SolverState,
    alpha: &[f64],
) -> Result<PassiveQuadratic> {
    let n = ch.n();
    if st.n() != n || st.k() != ch.k() {
        return Err(Error::Dimension("state does not match channel".into()));
    }
    let terms = path_terms(ch, st);
    let mut c = CMat::zeros(n, n);
    let mut beta = CVec::zeros(n);
    let reflecting = CVec::from_iterator(n, st.a_vec.iter().map(|&b| if b { ZERO } else { ONE }));
    for k in 0..ch.k() {
        let w = alpha[k] * st.lambda[k];
        if w == 0.0 {
            continue;
        }
        let u = st.u[k];
        let uu = u.norm_sqr();
        for m in 0..st.k() {
            let z = terms.y[k][m].component_mul(&reflecting);
            c.gerc(Complex64::from(w * uu), &z, &z, ONE);
            beta.axpy(Complex64::from(w * uu) * terms.c[k][m].conj(), &z, ONE);
            if m == k {
                beta.axpy(-u.conj() * w, &z, ONE);
            }
        }
    }
    let mut d = CMat::zeros(n + 1, n + 1);
    d.view_mut((0, 0), (n, n)).copy_from(&(-&c));
    for i in 0..n {
        d[(i, n)] = -beta[i];
        d[(n, i)] = -beta[i].conj();
    }
    let eps = choose_eps(&d);
    Ok(PassiveQuadratic { c, beta, d, eps })
}

/// `‖D‖_F (1 + 1e-6)`, which exceeds the spectral radius of `D`.
pub fn choose_eps(d: &CMat) -> f64 {
    frobenius(d) * (1.0 + 1e-6)
}

/// `p ← exp(j arg((D + εI) p))`; entries where `(D + εI) p` vanishes keep their phase.
pub fn power_iteration_step(p: &CVec, d: &CMat, eps: f64) -> CVec {
    let mut q = d * p;
    q.axpy(Complex64::from(eps), p, ONE);
    CVec::from_fn(p.len(), |i, _| {
        let z = q[i];
        if z.norm() == 0.0 {
            p[i]
        } else {
            z / z.norm()
        }
    })
}

/// `φ_n = p_n / p_{N+1}` projected onto the unit circle.
pub fn extract_phi(p: &CVec) -> CVec {
    let n = p.len() - 1;
    let q = p[n];
    CVec::from_fn(n, |i, _| {
        let z = p[i] * q.conj();
        let r = z.norm();
        if r == 0.0 {
            ONE
        } else {
            z / r
        }
    })
}

pub fn passive_update(
    ch: &ChannelSet,
    st: &SolverState,
    alpha: &[f64],
    mode: PassiveMode,
    eps: Eps,
) -> Result<PassiveOutcome> {
    let quad = build_passive_quadratic(ch, st, alpha)?;
    Ok(solve_quadratic(&quad, &st.phi, mode, eps))
}

/// Runs the power iteration on a prebuilt quadratic starting from `phi`.
pub fn solve_quadratic(quad: &PassiveQuadratic, phi: &CVec, mode: PassiveMode, eps: Eps) -> PassiveOutcome {
    let eps = match eps {
        Eps::Auto => quad.eps,
        Eps::Relative(s) => s * frobenius(&quad.d),
        Eps::Absolute(e) => e,
    };
    let dp = quad.shifted(eps);
    let bound: f64 = dp.iter().map(|z| z.norm()).sum();
    let n = phi.len();
    let mut p = CVec::from_fn(n + 1, |i, _| if i < n { phi[i] } else { ONE });
    let mut values = vec![quad_form(&dp, &p)];
    let (tol, max_steps) = match mode {
        PassiveMode::IterateToTol { tol, max_steps } => (tol, max_steps),
        PassiveMode::SingleStep => (f64::INFINITY, 1),
    };
    let mut steps = 0;
    while steps < max_steps {
        let next = power_iteration_step(&p, &quad.d, eps);
        let v = quad_form(&dp, &next);
        let prev = *values.last().unwrap();
        values.push(v);
        p = next;
        steps += 1;
        let scale = prev.abs();
        if scale == 0.0 || (v - prev) / scale < tol {
            break;
        }
    }
    PassiveOutcome {
        phi: extract_phi(&p),
        steps,
        values,
        eps,
        bound,
    }
}
