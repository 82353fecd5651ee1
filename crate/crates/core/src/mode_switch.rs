//! Penalty majorization-minimization of the element modes.
//!
//! The selection `a` (which elements are connected) and the assignment `Ã`
//! (which connected element feeds which RF chain) are coupled through the
//! penalty `(1/2ρ)‖A − ÃÃ^H‖_F²`. Each block is updated by minimizing a
//! quadratic majorizer whose curvature is capped at the largest eigenvalue of
//! its Hessian; the minimizer of a linear function over the binary feasible
//! set is then a sort (selection) or a per-segment argmin (assignment).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{is_hermitian, max_eig_hermitian, CMat, CVec, MaxEig, ONE, ZERO};
use crate::model::metrics::mse_all;
use crate::model::{effective_channel, support, ChannelSet, SolverState};
use crate::passive::path_terms;

pub use crate::linalg::max_eig_hermitian as max_eig;

/// Largest `N·a` for which the dense assignment Hessian is built.
pub const MAX_ASSIGNMENT_DIM: usize = 4096;

/// Smallest penalty weight the schedule will reach.
pub const RHO_FLOOR: f64 = 1e-12;

fn as_f64(a: &[bool]) -> impl Iterator<Item = f64> + '_ {
    a.iter().map(|&b| if b { 1.0 } else { 0.0 })
}

fn bool_vec(a: &[bool]) -> CVec {
    CVec::from_iterator(a.len(), as_f64(a).map(Complex64::from))
}

/// One-hot encoding `ã = vec(Ã)` of an assignment, index `l·N + n`.
pub fn assignment_vector(n: usize, assign: &[usize]) -> Vec<bool> {
    let mut v = vec![false; n * assign.len()];
    for (l, &idx) in assign.iter().enumerate() {
        v[l * n + idx] = true;
    }
    v
}

/// Quadratic model of the selection block.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionSurrogate {
    pub r1: CVec,
    pub r2: CVec,
    pub r3: CVec,
    pub r4: Vec<f64>,
    pub r5: f64,
    pub big_r1: CMat,
    pub lambda1: MaxEig,
    pub r6: CVec,
    pub rho: f64,
    pub a_t: Vec<bool>,
}

impl SelectionSurrogate {
    /// `2Re((r1+r2+r3)^H a) + a^T R1 a + (1/2ρ)(r4^T a + r5)`, equal to the
    /// weighted MSE sum plus penalty up to an `a`-independent constant.
    pub fn f3(&self, a: &[bool]) -> f64 {
        let av = bool_vec(a);
        let lin = &self.r1 + &self.r2 + &self.r3;
        2.0 * lin.dotc(&av).re
            + av.dotc(&(&self.big_r1 * &av)).re
            + (self.r4.iter().zip(as_f64(a)).map(|(r, x)| r * x).sum::<f64>() + self.r5)
                / (2.0 * self.rho)
    }

    /// Majorizer of [`f3`](Self::f3) expanded at `a_t`, tight there.
    pub fn surrogate(&self, a: &[bool]) -> f64 {
        let av = bool_vec(a);
        let at = bool_vec(&self.a_t);
        let lam = self.lambda1.value;
        let lin = &self.r1 + &self.r2 + &self.r3;
        let r_at = &self.big_r1 * &at;
        let cross = av.dotc(&r_at).re - lam * av.dot(&at).re;
        let at_quad = lam * at.norm_squared() - at.dotc(&r_at).re;
        2.0 * lin.dotc(&av).re
            + lam * av.norm_squared()
            + 2.0 * cross
            + at_quad
            + (self.r4.iter().zip(as_f64(a)).map(|(r, x)| r * x).sum::<f64>() + self.r5)
                / (2.0 * self.rho)
    }
}

/// Quadratic model of the assignment block over `ã = vec(Ã)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentSurrogate {
    pub rt1: CVec,
    pub rt2: CVec,
    pub big_r2: CMat,
    pub lambda2: MaxEig,
    pub rt3: CVec,
    pub c: Vec<f64>,
    pub rho: f64,
    pub n: usize,
    pub atilde_t: Vec<usize>,
}

impl AssignmentSurrogate {
    /// `2Re((r̃1+r̃2)^H ã) + ã^T R2 ã`, equal to the weighted MSE sum plus
    /// penalty up to an `ã`-independent constant.
    pub fn f4(&self, assign: &[usize]) -> f64 {
        let x = bool_vec(&assignment_vector(self.n, assign));
        2.0 * (&self.rt1 + &self.rt2).dotc(&x).re + x.dotc(&(&self.big_r2 * &x)).re
    }

    /// Majorizer of [`f4`](Self::f4) expanded at the stored assignment.
    pub fn surrogate(&self, assign: &[usize]) -> f64 {
        let x = bool_vec(&assignment_vector(self.n, assign));
        let xt = bool_vec(&assignment_vector(self.n, &self.atilde_t));
        let lam = self.lambda2.value;
        let r_xt = &self.big_r2 * &xt;
        2.0 * (&self.rt1 + &self.rt2).dotc(&x).re
            + lam * x.norm_squared()
            + 2.0 * (x.dotc(&r_xt).re - lam * x.dot(&xt).re)
            + lam * xt.norm_squared()
            - xt.dotc(&r_xt).re
    }

    /// `Σ c_i ã_i`, the part of the majorizer that varies over valid
    /// assignments (`‖ã‖² = a` is constant).
    pub fn linear(&self, assign: &[usize]) -> f64 {
        assign
            .iter()
            .enumerate()
            .map(|(l, &idx)| self.c[l * self.n + idx])
            .sum()
    }
}

struct Weights {
    w: Vec<f64>,
    uu: Vec<f64>,
}

fn weights(st: &SolverState, alpha: &[f64]) -> Weights {
    Weights {
        w: (0..st.k()).map(|k| alpha[k] * st.lambda[k]).collect(),
        uu: st.u.iter().map(|u| u.norm_sqr()).collect(),
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!("penalty weight must be positive, got {rho}")));
    }
    Ok(())
}

pub fn build_selection_surrogate(
    ch: &ChannelSet,
    st: &SolverState,
    alpha: &[f64],
    rho: f64,
) -> Result<SelectionSurrogate> {
    check_rho(rho)?;
    let n = ch.n();
    let terms = path_terms(ch, st);
    let wt = weights(st, alpha);
    let phi_c = st.phi.map(|z| z.conj());
    let mut r1 = CVec::zeros(n);
    let mut r2 = CVec::zeros(n);
    let mut r3 = CVec::zeros(n);
    let mut big_r1 = CMat::zeros(n, n);
    for k in 0..ch.k() {
        let (w, uu) = (wt.w[k], wt.uu[k]);
        if w == 0.0 {
            continue;
        }
        for m in 0..st.k() {
            // v[n] = conj(φ_n) (H_{r,k} w_{b,m})_n, the per-element reflected contribution.
            let v = terms.y[k][m].component_mul(&phi_c);
            let vc = v.map(|z| z.conj());
            if m == k {
                r1.axpy(st.u[k] * w, &vc, ONE);
            }
            let s1: Complex64 = v.sum();
            r2.axpy(-s1 * (w * uu), &vc, ONE);
            r3.axpy(-terms.c[k][m] * (w * uu), &vc, ONE);
            big_r1.gerc(Complex64::from(w * uu), &v, &v, ONE);
        }
    }
    let chosen = support(n, &st.assign);
    let sign = if cfg!(feature = "fault-inject") { -1.0 } else { 1.0 };
    let r4: Vec<f64> = chosen.iter().map(|&t| if t { -sign } else { sign }).collect();
    let r5 = st.assign.len() as f64;
    let lambda1 = max_eig_hermitian(&big_r1)?;

    let at = bool_vec(&st.a_prev);
    let mut r6 = (&r1 + &r2 + &r3) * Complex64::from(2.0);
    let mut curv = &big_r1 * &at;
    curv.axpy(Complex64::from(-lambda1.value), &at, ONE);
    r6.axpy(Complex64::from(2.0), &curv, ONE);
    for i in 0..n {
        r6[i] += Complex64::from(r4[i] / (2.0 * rho));
    }
    Ok(SelectionSurrogate {
        r1,
        r2,
        r3,
        r4,
        r5,
        big_r1,
        lambda1,
        r6,
        rho,
        a_t: st.a_prev.clone(),
    })
}

/// Ones at the `count` smallest entries of `Re(r6)`; ties go to the smaller index.
pub fn select_a(r6: &CVec, count: usize) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..r6.len()).collect();
    idx.sort_by(|&i, &j| r6[i].re.total_cmp(&r6[j].re).then(i.cmp(&j)));
    let mut out = vec![false; r6.len()];
    for &i in idx.iter().take(count) {
        out[i] = true;
    }
    out
}

pub fn build_assignment_surrogate(
    ch: &ChannelSet,
    st: &SolverState,
    alpha: &[f64],
    rho: f64,
) -> Result<AssignmentSurrogate> {
    check_rho(rho)?;
    let n = ch.n();
    let a = st.a();
    let dim = n * a;
    if dim > MAX_ASSIGNMENT_DIM {
        return Err(Error::InvalidArgument(format!(
            "assignment dimension N*a = {dim} exceeds the dense limit {MAX_ASSIGNMENT_DIM}"
        )));
    }
    let terms = path_terms(ch, st);
    let wt = weights(st, alpha);
    let w_r = st.w_r();
    let refl_weight = CVec::from_fn(n, |i, _| {
        if st.a_vec[i] {
            ZERO
        } else {
            st.phi[i].conj()
        }
    });
    let mut rt1 = CVec::zeros(dim);
    let mut rt2 = CVec::zeros(dim);
    let mut big_r2 = CMat::zeros(dim, dim);
    for k in 0..ch.k() {
        let (w, uu) = (wt.w[k], wt.uu[k]);
        if w == 0.0 {
            continue;
        }
        let hr = &ch.h_r[k];
        for m in 0..st.k() {
            // g[l·N + n] = w_{r,m}[l] conj(h_{r,k}[n]);  b = φ^H (I − A) H_{r,k} w_{b,m}.
            let g = CVec::from_fn(dim, |i, _| w_r[(i / n, m)] * hr[i % n].conj());
            let gc = g.map(|z| z.conj());
            let b: Complex64 = refl_weight.component_mul(&terms.y[k][m]).sum();
            rt1.axpy(b * (w * uu), &gc, ONE);
            if m == k {
                rt2.axpy(-st.u[k] * w, &gc, ONE);
            }
            big_r2.gerc(Complex64::from(w * uu), &gc, &gc, ONE);
        }
    }
    for l in 0..a {
        for i in 0..n {
            if st.a_vec[i] {
                big_r2[(l * n + i, l * n + i)] -= Complex64::from(1.0 / rho);
            }
        }
    }
    let lambda2 = if dim == 0 {
        MaxEig { value: 0.0, iterations: 0, converged: true }
    } else {
        max_eig_hermitian(&big_r2)?
    };
    let xt = bool_vec(&assignment_vector(n, &st.atilde_prev));
    let mut rt3 = (&rt1 + &rt2) * Complex64::from(2.0);
    let mut curv = &big_r2 * &xt;
    curv.axpy(Complex64::from(-lambda2.value), &xt, ONE);
    rt3.axpy(Complex64::from(2.0), &curv, ONE);
    let c = rt3.iter().map(|z| z.re).collect();
    Ok(AssignmentSurrogate {
        rt1,
        rt2,
        big_r2,
        lambda2,
        rt3,
        c,
        rho,
        n,
        atilde_t: st.atilde_prev.clone(),
    })
}

/// Per-segment argmin of `c` with conflicts resolved greedily.
///
/// `c` holds `a` segments of length `n`. When several segments pick the same
/// element, each claimant is tried as the winner while the others move to
/// their cheapest entries that are neither forbidden nor held by another
/// segment; the claimant whose win yields the smallest total keeps the
/// element and the losers are barred from it. Ties go to the smaller segment,
/// then the smaller element index.
pub fn select_assignment(c: &[f64], n: usize, a: usize) -> Result<Vec<usize>> {
    if c.len() != n * a {
        return Err(Error::Dimension(format!(
            "cost vector has length {} but N*a = {}",
            c.len(),
            n * a
        )));
    }
    if a > n {
        return Err(Error::InvalidArgument(format!(
            "cannot assign {a} RF chains to {n} distinct elements"
        )));
    }
    if let Some(i) = c.iter().position(|x| x.is_nan()) {
        return Err(Error::Numerical(format!("assignment cost {i} is NaN")));
    }
    let cost = |l: usize, i: usize| c[l * n + i];
    let mut forbidden = vec![vec![false; n]; a];
    let best = |l: usize, forbidden: &[Vec<bool>], taken: &dyn Fn(usize) -> bool| -> Option<usize> {
        (0..n)
            .filter(|&i| !forbidden[l][i] && !taken(i))
            .min_by(|&i, &j| cost(l, i).total_cmp(&cost(l, j)).then(i.cmp(&j)))
    };
    let mut choice: Vec<usize> = (0..a)
        .map(|l| best(l, &forbidden, &|_| false).expect("segment has entries"))
        .collect();

    loop {
        let mut claims: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (l, &i) in choice.iter().enumerate() {
            claims[i].push(l);
        }
        let Some(contested) = (0..n).find(|&i| claims[i].len() > 1) else {
            return Ok(choice);
        };
        let claimants = &claims[contested];
        let mut winner = claimants[0];
        let mut winner_total = f64::INFINITY;
        let mut winner_moves = Vec::new();
        let mut found = false;
        for &cand in claimants {
            let mut trial = choice.clone();
            let mut total = cost(cand, contested);
            let mut moves = Vec::new();
            let mut ok = true;
            for &l in claimants.iter().filter(|&&l| l != cand) {
                let mut fb = forbidden.clone();
                fb[l][contested] = true;
                let held = trial.clone();
                let pick = best(l, &fb, &|i| held.iter().enumerate().any(|(o, &x)| o != l && x == i));
                match pick {
                    Some(i) => {
                        trial[l] = i;
                        total += cost(l, i);
                        moves.push((l, i));
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok && (!found || total < winner_total) {
                found = true;
                winner = cand;
                winner_total = total;
                winner_moves = moves;
            }
        }
        if !found {
            return Err(Error::Numerical("assignment reselection found no free element".into()));
        }
        for &l in claimants.iter().filter(|&&l| l != winner) {
            forbidden[l][contested] = true;
        }
        for (l, i) in winner_moves {
            choice[l] = i;
        }
    }
}

/// `max(η ρ, RHO_FLOOR)`.
pub fn update_rho(rho: f64, eta: f64) -> f64 {
    (eta * rho).max(RHO_FLOOR)
}

/// `‖A − ÃÃ^H‖_F` from the compact encodings.
pub fn penalty_residual(a_vec: &[bool], assign: &[usize]) -> f64 {
    let s = support(a_vec.len(), assign);
    let mismatches = a_vec.iter().zip(&s).filter(|(x, y)| x != y).count();
    (mismatches as f64).sqrt()
}

/// `Σ α_k λ_k e_k + (1/2ρ)‖A − ÃÃ^H‖_F²` evaluated directly for the given
/// modes, holding `F`, `φ`, `u` and `λ` from `st`.
pub fn direct_penalized_objective(
    ch: &ChannelSet,
    st: &SolverState,
    a_vec: &[bool],
    assign: &[usize],
    alpha: &[f64],
    rho: f64,
    sigma2: f64,
    ptot: f64,
) -> Result<f64> {
    let h = effective_channel(ch, &st.phi, a_vec, assign)?;
    let e = mse_all(&h.h, &st.f, &st.u, sigma2, ptot)?;
    let data: f64 = (0..e.len()).map(|k| alpha[k] * st.lambda[k] * e[k]).sum();
    Ok(data + penalty_residual(a_vec, assign).powi(2) / (2.0 * rho))
}

/// Selection-block update: rebuild the surrogate at `st.a_prev` and minimize it.
pub fn update_selection(
    ch: &ChannelSet,
    st: &SolverState,
    alpha: &[f64],
    rho: f64,
) -> Result<(Vec<bool>, SelectionSurrogate)> {
    let sur = build_selection_surrogate(ch, st, alpha, rho)?;
    Ok((select_a(&sur.r6, st.a()), sur))
}

/// Assignment-block update. The greedy minimizer is not exact, so the
/// current assignment is kept when the greedy one has a larger majorizer.
pub fn update_assignment(
    ch: &ChannelSet,
    st: &SolverState,
    alpha: &[f64],
    rho: f64,
) -> Result<(Vec<usize>, AssignmentSurrogate)> {
    let sur = build_assignment_surrogate(ch, st, alpha, rho)?;
    debug_assert!(is_hermitian(&sur.big_r2, 1e-10));
    let greedy = select_assignment(&sur.c, ch.n(), st.a())?;
    let pick = if sur.linear(&greedy) <= sur.linear(&st.atilde_prev) {
        greedy
    } else {
        st.atilde_prev.clone()
    };
    Ok((pick, sur))
}
