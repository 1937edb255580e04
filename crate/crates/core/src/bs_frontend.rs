//! BS hybrid frontend: phase shifters, per-chain true-time delays and the
//! per-subcarrier analog matrix `F_m = F_A F_td(f_m)`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;

use crate::beam_gain::xi_kernel;
use crate::channel::bs_steering_vector;
use crate::error::{Error, Result};
use crate::scenario::{Allocation, SubcarrierGrid};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdMode {
    /// Closed-form delays, possibly negative.
    Signed,
    /// Closed-form delays shifted per chain so the smallest is zero.
    NonNegative,
    /// All delays zero (phase shifters only).
    Disabled,
}

/// Phase-shifter matrix `Nt x (Kt Nrf)`. Column `l Kt + q` drives segment `q`
/// of chain `l` with the local pattern `exp(j pi p sin(theta_l)) / sqrt(Nt)`,
/// `p = 0..P`.
pub fn analog_beamformer(thetas: &[f64], nt: usize, kt: usize) -> Result<DMatrix<C64>> {
    if kt == 0 || nt % kt != 0 {
        return Err(Error::config(format!("nt = {nt} is not divisible by kt = {kt}")));
    }
    let p = nt / kt;
    let scale = 1.0 / (nt as f64).sqrt();
    let mut fa = DMatrix::zeros(nt, kt * thetas.len());
    for (l, theta) in thetas.iter().enumerate() {
        let s = theta.sin();
        for q in 0..kt {
            for i in 0..p {
                fa[(q * p + i, l * kt + q)] = C64::from_polar(scale, PI * i as f64 * s);
            }
        }
    }
    Ok(fa)
}

/// `z = [0, b Tc, ..., (Kt-1) b Tc]` with `b = -P sin(theta) / 2`.
pub fn td_delays(theta: f64, kt: usize, p: usize, tc: f64) -> Vec<f64> {
    let b = -(p as f64) * theta.sin() / 2.0;
    (0..kt).map(|q| q as f64 * b * tc).collect()
}

/// Block-diagonal `(Kt Nrf) x Nrf` matrix of `exp(-j 2 pi f z_l)` columns.
pub fn td_phase_matrix(z: &[Vec<f64>], f: f64) -> DMatrix<C64> {
    let kt = z.first().map_or(0, Vec::len);
    let mut out = DMatrix::zeros(kt * z.len(), z.len());
    for (l, zl) in z.iter().enumerate() {
        for (q, t) in zl.iter().enumerate() {
            out[(l * kt + q, l)] = C64::from_polar(1.0, -2.0 * PI * f * t);
        }
    }
    out
}

pub fn combined_frontend(fa: &DMatrix<C64>, ftd: &DMatrix<C64>) -> DMatrix<C64> {
    fa * ftd
}

/// RIS served by each RF chain: with one chain per user, chain `l` points at
/// user `l`'s RIS; otherwise chains are dealt round-robin over RISs.
pub fn chain_targets(alloc: &Allocation, num_ris: usize, nrf: usize) -> Vec<usize> {
    if nrf == alloc.ris_of_user.len() {
        alloc.ris_of_user.clone()
    } else {
        (0..nrf).map(|l| l % num_ris).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BsFrontend {
    pub nt: usize,
    pub kt: usize,
    pub thetas: Vec<f64>,
    pub fa: DMatrix<C64>,
    /// Per-chain delays (seconds).
    pub z: Vec<Vec<f64>>,
}

impl BsFrontend {
    pub fn design(thetas: &[f64], nt: usize, kt: usize, fc: f64, mode: TdMode) -> Result<Self> {
        let fa = analog_beamformer(thetas, nt, kt)?;
        let p = nt / kt;
        let z = thetas
            .iter()
            .map(|&t| {
                let mut z = td_delays(t, kt, p, 1.0 / fc);
                match mode {
                    TdMode::Signed => {}
                    TdMode::NonNegative => {
                        let lo = z.iter().copied().fold(0.0, f64::min);
                        z.iter_mut().for_each(|x| *x -= lo);
                    }
                    TdMode::Disabled => z.iter_mut().for_each(|x| *x = 0.0),
                }
                z
            })
            .collect();
        Ok(BsFrontend { nt, kt, thetas: thetas.to_vec(), fa, z })
    }

    pub fn nrf(&self) -> usize {
        self.z.len()
    }

    /// `F_m` at frequency `f`.
    pub fn at(&self, f: f64) -> DMatrix<C64> {
        combined_frontend(&self.fa, &td_phase_matrix(&self.z, f))
    }

    /// `|a(xi, theta_l)^H f_l|` for chain `l` at frequency `f`.
    pub fn chain_gain(&self, l: usize, f: f64, fc: f64) -> f64 {
        let a = bs_steering_vector(f / fc, self.thetas[l], self.nt);
        a.dotc(&self.at(f).column(l)).norm()
    }

    /// `chain,theta,m,f_hz,gain`.
    pub fn write_gain_csv<W: Write>(&self, grid: &SubcarrierGrid, mut w: W) -> std::io::Result<()> {
        writeln!(w, "chain,theta,m,f_hz,gain")?;
        for l in 0..self.nrf() {
            for (m, &f) in grid.frequencies.iter().enumerate() {
                writeln!(w, "{l},{},{m},{f},{}", self.thetas[l], self.chain_gain(l, f, grid.fc))?;
            }
        }
        Ok(())
    }
}

/// Closed-form combined gain `|Xi_P((xi - 1) sin(theta))| / P`.
pub fn residual_gain(xi: f64, theta: f64, p: usize) -> f64 {
    xi_kernel(p, (xi - 1.0) * theta.sin()).abs() / p as f64
}
