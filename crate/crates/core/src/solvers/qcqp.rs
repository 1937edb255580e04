//! Single power-constraint QCQP
//!
//! `min d^H E d - 2 Re(v^H d)  s.t.  d^H C d <= P`
//!
//! solved through the Lagrangian `d(lambda) = (E + lambda C + mu I)^-1 v`
//! with a bisection on `lambda`. `E` and `C` are block-diagonal; blocks are
//! solved independently for each multiplier.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct QcqpBlock {
    pub e: DMatrix<C64>,
    pub c: DMatrix<C64>,
    pub v: DVector<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcqpProblem {
    pub blocks: Vec<QcqpBlock>,
    pub pmax: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcqpSolution {
    /// One vector per block.
    pub d: Vec<DVector<C64>>,
    pub lambda: f64,
    pub power: f64,
    pub objective: f64,
    /// `||(E + lambda C) d - v|| / ||v||`.
    pub stationarity: f64,
    /// `|lambda (d^H C d - P)|`.
    pub slackness: f64,
}

const MAX_DOUBLINGS: usize = 200;
const MAX_BISECTIONS: usize = 200;

impl QcqpProblem {
    /// A single dense block.
    pub fn dense(e: DMatrix<C64>, v: DVector<C64>, c: DMatrix<C64>, pmax: f64) -> Self {
        QcqpProblem { blocks: vec![QcqpBlock { e, c, v }], pmax }
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.v.len()).sum()
    }

    pub fn objective(&self, d: &[DVector<C64>]) -> f64 {
        self.blocks
            .iter()
            .zip(d)
            .map(|(b, d)| d.dotc(&(&b.e * d)).re - 2.0 * b.v.dotc(d).re)
            .sum()
    }

    pub fn power(&self, d: &[DVector<C64>]) -> f64 {
        self.blocks.iter().zip(d).map(|(b, d)| d.dotc(&(&b.c * d)).re).sum()
    }

    /// Block-diagonal `(E, v, C)` as dense matrices.
    pub fn to_dense(&self) -> (DMatrix<C64>, DVector<C64>, DMatrix<C64>) {
        let n = self.dim();
        let mut e = DMatrix::zeros(n, n);
        let mut c = DMatrix::zeros(n, n);
        let mut v = DVector::zeros(n);
        let mut o = 0;
        for b in &self.blocks {
            let k = b.v.len();
            e.view_mut((o, o), (k, k)).copy_from(&b.e);
            c.view_mut((o, o), (k, k)).copy_from(&b.c);
            v.rows_mut(o, k).copy_from(&b.v);
            o += k;
        }
        (e, v, c)
    }

    fn check(&self) -> Result<()> {
        if !(self.pmax > 0.0) {
            return Err(Error::InvalidProblem("power budget must be positive".into()));
        }
        // Blocks of switched-off users can be ~1e-170; judge each matrix
        // against the largest block of its kind.
        let largest = |f: fn(&QcqpBlock) -> &DMatrix<C64>| {
            self.blocks.iter().map(|b| f(b).norm()).fold(f64::MIN_POSITIVE, f64::max)
        };
        let (e_scale, c_scale) = (largest(|b| &b.e), largest(|b| &b.c));
        for (i, b) in self.blocks.iter().enumerate() {
            let k = b.v.len();
            if b.e.shape() != (k, k) || b.c.shape() != (k, k) {
                return Err(Error::InvalidProblem(format!("block {i}: dimensions do not conform")));
            }
            for (name, m, scale) in [("E", &b.e, e_scale), ("C", &b.c, c_scale)] {
                check_hermitian_psd(m, scale).map_err(|e| Error::InvalidProblem(format!("block {i}: {name} {e}")))?;
            }
        }
        Ok(())
    }
}

fn check_hermitian_psd(m: &DMatrix<C64>, scale: f64) -> std::result::Result<(), String> {
    let asym = (m - m.adjoint()).norm();
    if asym > 1e-12 * scale {
        return Err(format!("is not Hermitian (asymmetry {asym:.3e})"));
    }
    let herm = (m + m.adjoint()) * C64::from(0.5);
    let min = SymmetricEigen::new(herm).eigenvalues.min();
    if min < -1e-10 * scale {
        return Err(format!("is not positive semidefinite (eigenvalue {min:.3e})"));
    }
    Ok(())
}

fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::from(0.5)
}

struct Prepared {
    e: Vec<DMatrix<C64>>,
    c: Vec<DMatrix<C64>>,
    v: Vec<DVector<C64>>,
    mu: f64,
}

impl Prepared {
    fn solve(&self, lambda: f64) -> Option<Vec<DVector<C64>>> {
        self.e
            .iter()
            .zip(&self.c)
            .zip(&self.v)
            .map(|((e, c), v)| {
                let mut a = e + c * C64::from(lambda);
                for i in 0..a.nrows() {
                    a[(i, i)] += self.mu;
                }
                a.cholesky().map(|ch| ch.solve(v))
            })
            .collect()
    }

    fn power(&self, d: &[DVector<C64>]) -> f64 {
        self.c.iter().zip(d).map(|(c, d)| d.dotc(&(c * d)).re).sum()
    }
}

/// Solves the problem; the returned point is always feasible.
pub fn solve_qcqp(p: &QcqpProblem, tol: f64) -> Result<QcqpSolution> {
    p.check()?;
    let dim = p.dim().max(1);
    let e: Vec<_> = p.blocks.iter().map(|b| hermitian_part(&b.e)).collect();
    let c: Vec<_> = p.blocks.iter().map(|b| hermitian_part(&b.c)).collect();
    let tr_e: f64 = e.iter().map(|m| m.trace().re).sum();
    let tr_c: f64 = c.iter().map(|m| m.trace().re).sum();
    let prep = Prepared {
        e,
        c,
        v: p.blocks.iter().map(|b| b.v.clone()).collect(),
        mu: 1e-12 * tr_e / dim as f64,
    };
    let v_norm = prep.v.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
    let pmax = p.pmax;

    if v_norm == 0.0 {
        let zero = prep.v.iter().map(|v| DVector::zeros(v.len())).collect();
        return Ok(finish(p, &prep, zero, 0.0, v_norm));
    }

    // Unconstrained optimum.
    if prep.mu > 0.0 {
        if let Some(d) = prep.solve(0.0) {
            if prep.power(&d) <= pmax {
                return Ok(finish(p, &prep, d, 0.0, v_norm));
            }
        }
    }

    // Bracket lambda: p(lo) > P >= p(hi).
    let feasible = |lambda: f64| -> Option<(bool, Vec<DVector<C64>>, f64)> {
        let d = prep.solve(lambda)?;
        let pw = prep.power(&d);
        Some((pw <= pmax, d, pw))
    };
    let c_scale = (tr_c / dim as f64).max(f64::MIN_POSITIVE);
    let mut guess = v_norm / (pmax.sqrt() * c_scale);
    let mut lo = 0.0;
    let mut hi;
    let mut best;
    match feasible(guess) {
        Some((true, d, pw)) => {
            hi = guess;
            best = (d, pw);
            for _ in 0..MAX_DOUBLINGS {
                guess /= 2.0;
                match feasible(guess) {
                    Some((true, d, pw)) => {
                        hi = guess;
                        best = (d, pw);
                    }
                    _ => {
                        lo = guess;
                        break;
                    }
                }
            }
        }
        _ => {
            let mut found = None;
            for _ in 0..MAX_DOUBLINGS {
                lo = guess;
                guess *= 2.0;
                if let Some((true, d, pw)) = feasible(guess) {
                    found = Some((d, pw));
                    break;
                }
            }
            let Some(b) = found else {
                return Err(Error::SolverFailure(format!(
                    "power constraint could not be bracketed after {MAX_DOUBLINGS} doublings"
                )));
            };
            hi = guess;
            best = b;
        }
    }

    for _ in 0..MAX_BISECTIONS {
        if pmax - best.1 <= tol * pmax {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match feasible(mid) {
            Some((true, d, pw)) => {
                hi = mid;
                best = (d, pw);
            }
            _ => lo = mid,
        }
    }
    Ok(finish(p, &prep, best.0, hi, v_norm))
}

fn finish(p: &QcqpProblem, prep: &Prepared, d: Vec<DVector<C64>>, lambda: f64, v_norm: f64) -> QcqpSolution {
    let power = prep.power(&d);
    let residual = prep
        .e
        .iter()
        .zip(&prep.c)
        .zip(&prep.v)
        .zip(&d)
        .map(|(((e, c), v), d)| (e * d + c * d * C64::from(lambda) - v).norm_squared())
        .sum::<f64>()
        .sqrt();
    QcqpSolution {
        objective: p.objective(&d),
        stationarity: if v_norm > 0.0 { residual / v_norm } else { 0.0 },
        slackness: (lambda * (power - p.pmax)).abs(),
        power,
        lambda,
        d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cvec(xs: &[(f64, f64)]) -> DVector<C64> {
        DVector::from_iterator(xs.len(), xs.iter().map(|&(a, b)| C64::new(a, b)))
    }

    #[test]
    fn interior_solution() {
        let v = cvec(&[(0.3, 0.1), (-0.2, 0.4), (0.5, 0.0)]);
        let p = QcqpProblem::dense(DMatrix::identity(3, 3), v.clone(), DMatrix::identity(3, 3), 1.0);
        let s = solve_qcqp(&p, 1e-8).unwrap();
        assert_eq!(s.lambda, 0.0);
        assert_relative_eq!((&s.d[0] - &v).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn boundary_solution_without_objective_curvature() {
        let v = cvec(&[(1.0, 2.0), (-0.5, 0.5)]);
        let pmax = 3.0;
        let p = QcqpProblem::dense(DMatrix::zeros(2, 2), v.clone(), DMatrix::identity(2, 2), pmax);
        let s = solve_qcqp(&p, 1e-8).unwrap();
        let want = &v * C64::from(pmax.sqrt() / v.norm());
        assert_relative_eq!((&s.d[0] - &want).norm(), 0.0, epsilon = 1e-7);
        assert!(s.power <= pmax * (1.0 + 1e-8));
        assert!(pmax - s.power <= 1e-8 * pmax);
        assert!(s.stationarity < 1e-6);
    }

    #[test]
    fn non_hermitian_input_rejected() {
        let mut e = DMatrix::<C64>::identity(2, 2);
        e[(0, 1)] = C64::new(0.5, 0.0);
        let p = QcqpProblem::dense(e, DVector::zeros(2), DMatrix::identity(2, 2), 1.0);
        assert!(matches!(solve_qcqp(&p, 1e-8), Err(Error::InvalidProblem(_))));
        let p = QcqpProblem::dense(-DMatrix::<C64>::identity(2, 2), DVector::zeros(2), DMatrix::identity(2, 2), 1.0);
        assert!(matches!(solve_qcqp(&p, 1e-8), Err(Error::InvalidProblem(_))));
    }

    #[test]
    fn zero_linear_term_gives_zero() {
        let p = QcqpProblem::dense(DMatrix::identity(2, 2), DVector::zeros(2), DMatrix::identity(2, 2), 1.0);
        let s = solve_qcqp(&p, 1e-8).unwrap();
        assert_eq!(s.d[0].norm(), 0.0);
    }

    #[test]
    fn blocks_match_dense() {
        let b = |s: f64| QcqpBlock {
            e: DMatrix::from_diagonal(&cvec(&[(s, 0.0), (0.1, 0.0)])),
            c: DMatrix::from_diagonal(&cvec(&[(1.0, 0.0), (2.0 * s, 0.0)])),
            v: cvec(&[(1.0, s), (s, -1.0)]),
        };
        let blocked = QcqpProblem { blocks: vec![b(0.5), b(1.5)], pmax: 0.7 };
        let (e, v, c) = blocked.to_dense();
        let dense = QcqpProblem::dense(e, v, c, 0.7);
        let (a, d) = (solve_qcqp(&blocked, 1e-10).unwrap(), solve_qcqp(&dense, 1e-10).unwrap());
        assert_relative_eq!(a.objective, d.objective, max_relative = 1e-8);
        assert_relative_eq!(a.lambda, d.lambda, max_relative = 1e-6);
    }
}
