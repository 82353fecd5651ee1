use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};

/// The solver iterate.
///
/// `assign` holds zero-based element indices: connected element `l` feeds
/// RF chain `l`. `a_prev` and `atilde_prev` are the expansion points used by
/// the mode-switching surrogates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub f: CMat,
    pub phi: CVec,
    pub a_vec: Vec<bool>,
    pub assign: Vec<usize>,
    pub u: Vec<Complex64>,
    pub lambda: Vec<f64>,
    pub rho: f64,
    pub a_prev: Vec<bool>,
    pub atilde_prev: Vec<usize>,
}

impl SolverState {
    /// State with the given mode pattern, zero beamformer and unit weights.
    pub fn new(nt: usize, k: usize, phi: CVec, a_vec: Vec<bool>, assign: Vec<usize>, rho: f64) -> Self {
        let rows = nt + assign.len();
        SolverState {
            f: CMat::zeros(rows, k),
            phi,
            a_prev: a_vec.clone(),
            atilde_prev: assign.clone(),
            a_vec,
            assign,
            u: vec![Complex64::from(0.0); k],
            lambda: vec![1.0; k],
            rho,
        }
    }

    pub fn n(&self) -> usize {
        self.phi.len()
    }

    pub fn a(&self) -> usize {
        self.assign.len()
    }

    pub fn k(&self) -> usize {
        self.f.ncols()
    }

    pub fn nt(&self) -> usize {
        self.f.nrows() - self.assign.len()
    }

    /// `W_b`, the BS rows of the beamformer.
    pub fn w_b(&self) -> CMat {
        self.f.rows(0, self.nt()).into_owned()
    }

    /// `W_r`, the connected-element rows of the beamformer.
    pub fn w_r(&self) -> CMat {
        self.f.rows(self.nt(), self.a()).into_owned()
    }

    pub fn power(&self) -> f64 {
        self.f.norm_squared()
    }

    /// Overwrites `a_vec` with the support of `assign`.
    pub fn enforce_feasibility(&mut self) {
        self.a_vec = support(self.n(), &self.assign);
    }

    /// Checks the structural invariants of the iterate.
    pub fn check(&self) -> Result<()> {
        let n = self.n();
        if self.a_vec.len() != n {
            return Err(Error::Dimension(format!(
                "a_vec has length {} but phi has {}",
                self.a_vec.len(),
                n
            )));
        }
        if let Some(i) = self.phi.iter().position(|z| (z.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::Numerical(format!(
                "phase entry {i} has modulus {}",
                self.phi[i].norm()
            )));
        }
        let ones = self.a_vec.iter().filter(|&&b| b).count();
        if ones != self.a() {
            return Err(Error::InvalidArgument(format!(
                "selection has {ones} connected elements but {} RF chains are assigned",
                self.a()
            )));
        }
        check_assignment(n, &self.assign)?;
        if let Some(k) = self.lambda.iter().position(|&l| !(l > 0.0)) {
            return Err(Error::Numerical(format!("weight lambda[{k}] is not positive")));
        }
        if self.f.iter().any(|z| !z.is_finite()) {
            return Err(Error::Numerical("beamformer has non-finite entries".into()));
        }
        Ok(())
    }
}

/// Binary indicator of `assign` over `n` elements.
pub fn support(n: usize, assign: &[usize]) -> Vec<bool> {
    let mut v = vec![false; n];
    for &i in assign {
        v[i] = true;
    }
    v
}

pub fn check_assignment(n: usize, assign: &[usize]) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in assign {
        if i >= n {
            return Err(Error::InvalidArgument(format!(
                "assigned element {i} out of range for N={n}"
            )));
        }
        if seen[i] {
            return Err(Error::InvalidArgument(format!(
                "element {i} assigned to more than one RF chain"
            )));
        }
        seen[i] = true;
    }
    Ok(())
}
