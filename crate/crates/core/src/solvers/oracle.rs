//! Projected-gradient reference solvers used to cross-check the QCQP and
//! ADMM solvers in tests. They are slow by design.

use nalgebra::{ComplexField, DMatrix, DVector, SymmetricEigen};

use super::admm::{project, AmplitudeProblem};
use super::qcqp::QcqpProblem;
use crate::error::{Error, Result};
use crate::C64;

/// Runs `x <- project(x - rate / (1 + k / steps) * grad(x))` for `steps`
/// iterations.
pub fn projected_gradient<T, G, P>(x0: DVector<T>, mut grad: G, mut proj: P, steps: usize, rate: f64) -> DVector<T>
where
    T: ComplexField<RealField = f64>,
    G: FnMut(&DVector<T>) -> DVector<T>,
    P: FnMut(&mut DVector<T>),
{
    let mut x = x0;
    proj(&mut x);
    for k in 0..steps {
        let step = rate / (1.0 + k as f64 / steps as f64);
        let g = grad(&x);
        x.axpy(T::from_real(-step), &g, T::one());
        proj(&mut x);
    }
    x
}

/// Whitens the power constraint with `C^{1/2}` and runs projected gradient
/// on the resulting ball problem. Requires `C` positive definite.
pub fn qcqp_oracle(p: &QcqpProblem, steps: usize) -> Result<Vec<DVector<C64>>> {
    let (e, v, c) = p.to_dense();
    let eig = SymmetricEigen::new((&c + c.adjoint()) * C64::from(0.5));
    if eig.eigenvalues.min() <= 0.0 {
        return Err(Error::InvalidProblem("oracle needs a positive definite constraint matrix".into()));
    }
    let inv_sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from(1.0 / l.sqrt())))
        * eig.eigenvectors.adjoint();
    let et = &inv_sqrt * &e * &inv_sqrt;
    let vt = &inv_sqrt * &v;
    let lmax = SymmetricEigen::new((&et + et.adjoint()) * C64::from(0.5)).eigenvalues.max();
    let radius = p.pmax.sqrt();
    let lipschitz = 2.0 * lmax.max(vt.norm() / radius).max(f64::MIN_POSITIVE);
    let y = projected_gradient(
        DVector::zeros(v.len()),
        |y| (&et * y - &vt) * C64::from(2.0),
        |y| {
            let n = y.norm();
            if n > radius {
                *y *= C64::from(radius / n);
            }
        },
        steps,
        1.0 / lipschitz,
    );
    let d = inv_sqrt * y;
    let mut out = Vec::with_capacity(p.blocks.len());
    let mut o = 0;
    for b in &p.blocks {
        out.push(d.rows(o, b.v.len()).into_owned());
        o += b.v.len();
    }
    Ok(out)
}

pub fn amplitude_oracle(p: &AmplitudeProblem, steps: usize) -> [DVector<f64>; 2] {
    let n = p.len();
    let lmax = (0..2)
        .map(|i| SymmetricEigen::new(p.delta[i].clone()).eigenvalues.max())
        .fold(0.0, f64::max);
    let rate = 1.0 / (2.0 * lmax.max(f64::MIN_POSITIVE));
    let x = projected_gradient(
        DVector::zeros(2 * n),
        |x| {
            let mut g = DVector::zeros(2 * n);
            for i in 0..2 {
                let xi = x.rows(i * n, n);
                g.rows_mut(i * n, n).copy_from(&((&p.delta[i] * xi - &p.upsilon[i]) * 2.0));
            }
            g
        },
        |x| {
            let mut b = [x.rows(0, n).into_owned(), x.rows(n, n).into_owned()];
            project(&mut b);
            x.rows_mut(0, n).copy_from(&b[0]);
            x.rows_mut(n, n).copy_from(&b[1]);
        },
        steps,
        rate,
    );
    [x.rows(0, n).into_owned(), x.rows(n, n).into_owned()]
}
