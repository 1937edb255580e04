//! Steering vectors, path gains and the per-subcarrier LoS channels.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::scenario::{apply_csi_error, Geometry, Side, SubcarrierGrid, SystemParams};
use crate::star_ris::RisState;
use crate::{C64, SPEED_OF_LIGHT};

/// UPA response at relative frequency `xi`, flattened with `n = N2 n1 + n2`.
pub fn ris_steering_vector(xi: f64, u: f64, v: f64, n1: usize, n2: usize) -> DVector<C64> {
    ris_steering_from_freqs(xi, u.sin() * v.sin(), v.cos(), n1, n2)
}

/// Same as [`ris_steering_vector`] with spatial frequencies given directly.
pub fn ris_steering_from_freqs(xi: f64, s: f64, e: f64, n1: usize, n2: usize) -> DVector<C64> {
    let scale = 1.0 / ((n1 * n2) as f64).sqrt();
    DVector::from_fn(n1 * n2, |n, _| {
        let (a, b) = ((n / n2) as f64, (n % n2) as f64);
        C64::from_polar(scale, PI * xi * (a * s + b * e))
    })
}

/// ULA response `exp(j pi xi n sin(theta)) / sqrt(Nt)`.
pub fn bs_steering_vector(xi: f64, theta: f64, nt: usize) -> DVector<C64> {
    let scale = 1.0 / (nt as f64).sqrt();
    let s = theta.sin();
    DVector::from_fn(nt, |n, _| C64::from_polar(scale, PI * xi * n as f64 * s))
}

/// Free-space spreading loss with molecular absorption.
pub fn path_gain(f: f64, d: f64, kappa_abs: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidGeometry(format!("path length must be positive, got {d}")));
    }
    if !(f > 0.0) {
        return Err(Error::InvalidGeometry(format!("frequency must be positive, got {f}")));
    }
    Ok(SPEED_OF_LIGHT / (4.0 * PI * f * d) * (-kappa_abs * d / 2.0).exp())
}

/// Per-subcarrier BS-to-RIS matrices and RIS-to-user vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub n_ris: usize,
    pub nt: usize,
    /// `[r][m]`, `N_RIS x Nt`.
    pub g: Vec<Vec<DMatrix<C64>>>,
    /// `[r][m][k]`, entries of the row vector `h_{r,m,k}`.
    pub h: Vec<Vec<Vec<DVector<C64>>>>,
}

impl ChannelSet {
    pub fn num_ris(&self) -> usize {
        self.g.len()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.g.first().map_or(0, Vec::len)
    }

    pub fn num_users(&self) -> usize {
        self.h.first().and_then(|r| r.first()).map_or(0, Vec::len)
    }

    /// `G_m` with the RIS blocks stacked by row.
    pub fn stacked_g(&self, m: usize) -> DMatrix<C64> {
        let r_count = self.num_ris();
        let mut out = DMatrix::zeros(r_count * self.n_ris, self.nt);
        for r in 0..r_count {
            out.rows_mut(r * self.n_ris, self.n_ris).copy_from(&self.g[r][m]);
        }
        out
    }

    /// `h_{m,k}` concatenated over RISs.
    pub fn stacked_h(&self, m: usize, k: usize) -> DVector<C64> {
        let r_count = self.num_ris();
        let mut out = DVector::zeros(r_count * self.n_ris);
        for r in 0..r_count {
            out.rows_mut(r * self.n_ris, self.n_ris).copy_from(&self.h[r][m][k]);
        }
        out
    }

    /// Entrywise CSI error with level `delta` on every `h` and `G`.
    pub fn with_csi_error<R: Rng + ?Sized>(&self, delta: f64, rng: &mut R) -> Result<ChannelSet> {
        let mut out = self.clone();
        for r in 0..out.num_ris() {
            for m in 0..out.num_subcarriers() {
                let g = &mut out.g[r][m];
                let noisy = apply_csi_error(g.as_slice(), delta, rng)?;
                g.as_mut_slice().copy_from_slice(&noisy);
                for h in out.h[r][m].iter_mut() {
                    let noisy = apply_csi_error(h.as_slice(), delta, rng)?;
                    h.as_mut_slice().copy_from_slice(&noisy);
                }
            }
        }
        Ok(out)
    }

    /// One row per channel entry: `link,r,m,index,element,re,im`. For
    /// `bs_ris` rows `index` is the BS antenna; for `ris_user` rows it is the
    /// user.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "link,r,m,index,element,re,im")?;
        for r in 0..self.num_ris() {
            for m in 0..self.num_subcarriers() {
                let g = &self.g[r][m];
                for col in 0..g.ncols() {
                    for n in 0..g.nrows() {
                        let x = g[(n, col)];
                        writeln!(w, "bs_ris,{r},{m},{col},{n},{},{}", x.re, x.im)?;
                    }
                }
                for (k, h) in self.h[r][m].iter().enumerate() {
                    for (n, x) in h.iter().enumerate() {
                        writeln!(w, "ris_user,{r},{m},{k},{n},{},{}", x.re, x.im)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Builds all channels on `grid`. With `array_gain` set, BS-RIS links are
/// scaled by `sqrt(N_RIS Nt)` and RIS-user links by `sqrt(N_RIS)`.
pub fn build_channel_set(sys: &SystemParams, geo: &Geometry, grid: &SubcarrierGrid) -> Result<ChannelSet> {
    let (n1, n2, nt) = (sys.n1, sys.n2, sys.nt);
    let n_ris = n1 * n2;
    let (g_scale, h_scale) = if sys.array_gain {
        (((n_ris * nt) as f64).sqrt(), (n_ris as f64).sqrt())
    } else {
        (1.0, 1.0)
    };
    let users = geo.num_users();
    let mut g = Vec::with_capacity(geo.num_ris());
    let mut h = Vec::with_capacity(geo.num_ris());
    for r in 0..geo.num_ris() {
        let mut g_r = Vec::with_capacity(grid.len());
        let mut h_r = Vec::with_capacity(grid.len());
        for (&f, &xi) in grid.frequencies.iter().zip(&grid.relative) {
            let alpha = path_gain(f, geo.d_b[r], sys.kappa_abs)? * g_scale;
            let gain = C64::from_polar(alpha, -2.0 * PI * geo.t_b[r] * f);
            let b = ris_steering_vector(xi, geo.u_b[r], geo.v_b[r], n1, n2);
            let a = bs_steering_vector(xi, geo.theta_b[r], nt);
            g_r.push((b * a.adjoint()) * gain);

            let mut h_rm = Vec::with_capacity(users);
            for k in 0..users {
                let alpha = path_gain(f, geo.d_ru[r][k], sys.kappa_abs)? * h_scale;
                let gain = C64::from_polar(alpha, -2.0 * PI * geo.t_ru[r][k] * f);
                h_rm.push(ris_steering_vector(xi, geo.u_ru[r][k], geo.v_ru[r][k], n1, n2) * gain);
            }
            h_r.push(h_rm);
        }
        g.push(g_r);
        h.push(h_r);
    }
    Ok(ChannelSet { n_ris, nt, g, h })
}

/// `sum_r h_{r,m,k} diag(phi_r) G_{r,m}`, returned as the entries of a row
/// vector of length `Nt`.
pub fn cascade(ch: &ChannelSet, m: usize, k: usize, diags: &[DVector<C64>]) -> Result<DVector<C64>> {
    if diags.len() != ch.num_ris() || diags.iter().any(|d| d.len() != ch.n_ris) {
        return Err(Error::InvariantViolation(format!(
            "cascade expects {} diagonals of length {}",
            ch.num_ris(),
            ch.n_ris
        )));
    }
    let mut out = DVector::zeros(ch.nt);
    for (r, d) in diags.iter().enumerate() {
        let w = ch.h[r][m][k].component_mul(d);
        out += ch.g[r][m].tr_mul(&w);
    }
    Ok(out)
}

/// Equivalent BS-to-user channel through every RIS on side `side`.
pub fn equivalent_channel(
    ch: &ChannelSet,
    ris: &RisState,
    grid: &SubcarrierGrid,
    m: usize,
    k: usize,
    side: Side,
) -> Result<DVector<C64>> {
    let diags = (0..ch.num_ris())
        .map(|r| {
            let phi = ris.compose_phase_matrix(r, side, grid.frequencies[m])?;
            Ok(phi.component_mul(&ris.amplitudes(r, side).map(C64::from)))
        })
        .collect::<Result<Vec<_>>>()?;
    cascade(ch, m, k, &diags)
}
