//! ADMM for the paired amplitude problem
//!
//! `min sum_i (b_i^T D_i b_i - 2 u_i^T b_i)`
//! `s.t. b_R[n]^2 + b_T[n]^2 <= 1, b >= 0`
//!
//! with `x = (b_R, b_T)` free and `z` its copy in the constraint set.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeProblem {
    /// `[reflection, transmission]`, symmetric PSD.
    pub delta: [DMatrix<f64>; 2],
    pub upsilon: [DVector<f64>; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmKnobs {
    pub penalty: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AdmmKnobs {
    fn default() -> Self {
        AdmmKnobs { penalty: 1.0, tol: 1e-6, max_iter: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmOutcome {
    pub beta: [DVector<f64>; 2],
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    /// Set when the residuals stayed above `1e-3` at the iteration cap.
    pub warning: Option<String>,
}

impl AmplitudeProblem {
    pub fn len(&self) -> usize {
        self.upsilon[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn objective(&self, beta: &[DVector<f64>; 2]) -> f64 {
        (0..2)
            .map(|i| beta[i].dot(&(&self.delta[i] * &beta[i])) - 2.0 * self.upsilon[i].dot(&beta[i]))
            .sum()
    }

    fn check(&self) -> Result<()> {
        let n = self.len();
        // One side may carry almost no energy; judge both against the larger.
        let scale = self.delta.iter().map(|d| d.norm()).fold(f64::MIN_POSITIVE, f64::max);
        for i in 0..2 {
            if self.upsilon[i].len() != n || self.delta[i].shape() != (n, n) {
                return Err(Error::InvalidProblem("amplitude blocks must pair every element".into()));
            }
            let d = &self.delta[i];
            if (d - d.transpose()).norm() > 1e-10 * scale {
                return Err(Error::InvalidProblem("amplitude quadratic term is not symmetric".into()));
            }
            let min = nalgebra::SymmetricEigen::new(d.clone()).eigenvalues.min();
            if min < -1e-10 * scale {
                return Err(Error::InvalidProblem(format!(
                    "amplitude quadratic term is not positive semidefinite (eigenvalue {min:.3e})"
                )));
            }
        }
        Ok(())
    }
}

/// Exact projection of one element pair onto the unit quarter-disk.
pub fn project_pair(a: f64, b: f64) -> (f64, f64) {
    let (a, b) = (a.max(0.0), b.max(0.0));
    let r = (a * a + b * b).sqrt();
    if r > 1.0 {
        (a / r, b / r)
    } else {
        (a, b)
    }
}

pub fn project(beta: &mut [DVector<f64>; 2]) {
    let [r, t] = beta;
    for (a, b) in r.iter_mut().zip(t.iter_mut()) {
        (*a, *b) = project_pair(*a, *b);
    }
}

/// Solves the amplitude problem; `warm` seeds both `x` and `z`. The returned
/// amplitudes are the projected iterate, so they are always feasible.
pub fn solve_amplitudes_admm(
    p: &AmplitudeProblem,
    knobs: &AdmmKnobs,
    warm: Option<&[DVector<f64>; 2]>,
) -> Result<AdmmOutcome> {
    p.check()?;
    let n = p.len();
    // The minimizer is invariant to a positive rescaling of the objective;
    // normalizing makes the penalty scale-free.
    let scale = (0..2)
        .map(|i| p.delta[i].norm().max(p.upsilon[i].amax()))
        .fold(0.0, f64::max);
    if scale == 0.0 {
        let beta = warm.cloned().map_or_else(|| [DVector::zeros(n), DVector::zeros(n)], |mut b| {
            project(&mut b);
            b
        });
        return Ok(AdmmOutcome { beta, iterations: 0, primal_residual: 0.0, dual_residual: 0.0, converged: true, warning: None });
    }
    let rho = knobs.penalty;
    let mut factors = Vec::with_capacity(2);
    for i in 0..2 {
        let mut a = &p.delta[i] * (2.0 / scale);
        for k in 0..n {
            a[(k, k)] += rho;
        }
        factors.push(
            a.cholesky()
                .ok_or_else(|| Error::SolverFailure("ADMM system matrix is not positive definite".into()))?,
        );
    }
    let ups: Vec<DVector<f64>> = (0..2).map(|i| &p.upsilon[i] * (2.0 / scale)).collect();

    let mut z = warm.cloned().unwrap_or_else(|| [DVector::zeros(n), DVector::zeros(n)]);
    project(&mut z);
    let mut u = [DVector::zeros(n), DVector::zeros(n)];
    let mut x = z.clone();
    let (mut r_norm, mut s_norm) = (f64::INFINITY, f64::INFINITY);
    let mut iterations = 0;
    for it in 1..=knobs.max_iter {
        iterations = it;
        for i in 0..2 {
            x[i] = factors[i].solve(&(&ups[i] + (&z[i] - &u[i]) * rho));
        }
        let z_prev = z.clone();
        z = [&x[0] + &u[0], &x[1] + &u[1]];
        project(&mut z);
        for i in 0..2 {
            u[i] += &x[i] - &z[i];
        }
        r_norm = ((&x[0] - &z[0]).norm_squared() + (&x[1] - &z[1]).norm_squared()).sqrt();
        s_norm = rho * ((&z[0] - &z_prev[0]).norm_squared() + (&z[1] - &z_prev[1]).norm_squared()).sqrt();
        if r_norm < knobs.tol && s_norm < knobs.tol {
            break;
        }
    }
    let converged = r_norm < knobs.tol && s_norm < knobs.tol;
    let warning = (r_norm >= 1e-3 || s_norm >= 1e-3).then(|| {
        format!("ADMM stopped after {iterations} iterations with residuals {r_norm:.3e}/{s_norm:.3e}")
    });
    Ok(AdmmOutcome { beta: z, iterations, primal_residual: r_norm, dual_residual: s_norm, converged, warning })
}
