//! STAR-RIS state and the closed-form phase and delay designs.
//!
//! Each element applies `exp(j(phase2 + phase1 - 2 pi f tau))` with amplitude
//! `beta` on each side. Elements are indexed `n = N2 n1 + n2`; sub-surface
//! `s = s1 S2 + s2` covers rows `s1 L1 .. (s1+1) L1` and columns
//! `s2 L2 .. (s2+1) L2`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::Write;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::scenario::{spatial_freqs, Allocation, Geometry, Side};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RisStructure {
    /// Phase shifters only, designed at the carrier.
    Conventional,
    /// One TD per element.
    FullyConnected,
    /// One TD per `L1 x L2` sub-surface behind two phase-shifter layers.
    SubConnected { s1: usize, s2: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Delays {
    None,
    PerElement(Vec<f64>),
    PerSubSurface(Vec<f64>),
}

/// Design of one side of one RIS.
#[derive(Debug, Clone, PartialEq)]
pub struct RisSurface {
    pub phase1: Vec<f64>,
    pub phase2: Vec<f64>,
    pub delays: Delays,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RisState {
    pub structure: RisStructure,
    pub n1: usize,
    pub n2: usize,
    /// `[r][side]`.
    pub surfaces: Vec<[RisSurface; 2]>,
    /// Per-side amplitudes stacked over RISs, length `R N_RIS`.
    pub beta: [Vec<f64>; 2],
}

/// `phi_n = -pi [n1 (s_i + s_1) + n2 (e_i + e_1)]` for incident `(s_1, e_1)`
/// and departure `(s_i, e_i)` spatial frequencies.
pub fn design_conventional_phases(inc: (f64, f64), dep: (f64, f64), n1: usize, n2: usize) -> Vec<f64> {
    let (s, e) = (inc.0 + dep.0, inc.1 + dep.1);
    (0..n1 * n2)
        .map(|n| -PI * ((n / n2) as f64 * s + (n % n2) as f64 * e))
        .collect()
}

/// `tau_n = [n1 (s_i + s_1) + n2 (e_i + e_1)] / (2 fc)`.
pub fn design_fully_connected(inc: (f64, f64), dep: (f64, f64), fc: f64, n1: usize, n2: usize) -> Vec<f64> {
    let (s, e) = (inc.0 + dep.0, inc.1 + dep.1);
    (0..n1 * n2)
        .map(|n| ((n / n2) as f64 * s + (n % n2) as f64 * e) / (2.0 * fc))
        .collect()
}

/// Double-layer phases and per-sub-surface delays.
pub fn design_sub_connected(
    inc: (f64, f64),
    dep: (f64, f64),
    fc: f64,
    n1: usize,
    n2: usize,
    s1: usize,
    s2: usize,
) -> RisSurface {
    let (l1, l2) = (n1 / s1, n2 / s2);
    let mut phase1 = Vec::with_capacity(n1 * n2);
    let mut phase2 = Vec::with_capacity(n1 * n2);
    for n in 0..n1 * n2 {
        let (a, b) = (((n / n2) % l1) as f64, ((n % n2) % l2) as f64);
        phase1.push(-PI * (a * inc.0 + b * inc.1));
        phase2.push(-PI * (a * dep.0 + b * dep.1));
    }
    let (s, e) = (inc.0 + dep.0, inc.1 + dep.1);
    let c1 = (l1 as f64 - 1.0) / 2.0;
    let c2 = (l2 as f64 - 1.0) / 2.0;
    let tau = (0..s1 * s2)
        .map(|idx| {
            let (a, b) = ((idx / s2) as f64, (idx % s2) as f64);
            ((a * l1 as f64 - c1) * s + (b * l2 as f64 - c2) * e) / (2.0 * fc)
        })
        .collect();
    RisSurface { phase1, phase2, delays: Delays::PerSubSurface(tau) }
}

/// Designs one side of a RIS for the given structure.
pub fn design_surface(
    structure: RisStructure,
    inc: (f64, f64),
    dep: (f64, f64),
    fc: f64,
    n1: usize,
    n2: usize,
) -> RisSurface {
    let zeros = vec![0.0; n1 * n2];
    match structure {
        RisStructure::Conventional => RisSurface {
            phase1: design_conventional_phases(inc, dep, n1, n2),
            phase2: zeros,
            delays: Delays::None,
        },
        RisStructure::FullyConnected => RisSurface {
            phase1: zeros.clone(),
            phase2: zeros,
            delays: Delays::PerElement(design_fully_connected(inc, dep, fc, n1, n2)),
        },
        RisStructure::SubConnected { s1, s2 } => design_sub_connected(inc, dep, fc, n1, n2, s1, s2),
    }
}

impl RisState {
    /// Designs every RIS side toward its allocated user; amplitudes start at
    /// `1/sqrt(2)` on both sides.
    pub fn design(
        structure: RisStructure,
        geo: &Geometry,
        alloc: &Allocation,
        fc: f64,
        n1: usize,
        n2: usize,
    ) -> Result<Self> {
        if let RisStructure::SubConnected { s1, s2 } = structure {
            if s1 == 0 || s2 == 0 || n1 % s1 != 0 || n2 % s2 != 0 {
                return Err(Error::config(format!("RIS {n1}x{n2} cannot hold {s1}x{s2} sub-surfaces")));
            }
        }
        let surfaces = (0..geo.num_ris())
            .map(|r| {
                let inc = geo.incident(r);
                Side::BOTH.map(|side| {
                    let k = alloc.user(r, side);
                    design_surface(structure, inc, spatial_freqs(geo.u_ru[r][k], geo.v_ru[r][k]), fc, n1, n2)
                })
            })
            .collect::<Vec<_>>();
        let len = surfaces.len() * n1 * n2;
        Ok(RisState {
            structure,
            n1,
            n2,
            surfaces,
            beta: [vec![FRAC_1_SQRT_2; len], vec![FRAC_1_SQRT_2; len]],
        })
    }

    pub fn n_ris(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn num_ris(&self) -> usize {
        self.surfaces.len()
    }

    pub fn amplitudes(&self, r: usize, side: Side) -> DVector<f64> {
        let n = self.n_ris();
        DVector::from_column_slice(&self.beta[side.index()][r * n..(r + 1) * n])
    }

    /// Diagonal of the per-subcarrier phase matrix of RIS `r` at frequency `f`.
    pub fn compose_phase_matrix(&self, r: usize, side: Side, f: f64) -> Result<DVector<C64>> {
        let n = self.n_ris();
        let surf = &self.surfaces[r][side.index()];
        if surf.phase1.len() != n || surf.phase2.len() != n {
            return Err(Error::InvariantViolation(format!("RIS {r}: phase layers must have {n} entries")));
        }
        let delay_of: Box<dyn Fn(usize) -> f64 + '_> = match (&self.structure, &surf.delays) {
            (RisStructure::Conventional, Delays::None) => Box::new(|_| 0.0),
            (RisStructure::FullyConnected, Delays::PerElement(t)) if t.len() == n => Box::new(move |i| t[i]),
            (RisStructure::SubConnected { s1, s2 }, Delays::PerSubSurface(t)) if t.len() == s1 * s2 => {
                let (l1, l2, s2) = (self.n1 / s1, self.n2 / s2, *s2);
                let n2 = self.n2;
                Box::new(move |i| t[((i / n2) / l1) * s2 + (i % n2) / l2])
            }
            (s, d) => {
                return Err(Error::InvariantViolation(format!(
                    "RIS {r}: delay layout {} does not fit structure {s:?}",
                    match d {
                        Delays::None => "none".to_string(),
                        Delays::PerElement(t) => format!("per-element[{}]", t.len()),
                        Delays::PerSubSurface(t) => format!("per-sub-surface[{}]", t.len()),
                    }
                )))
            }
        };
        Ok(DVector::from_fn(n, |i, _| {
            C64::from_polar(1.0, surf.phase2[i] + surf.phase1[i] - 2.0 * PI * f * delay_of(i))
        }))
    }

    pub fn validate_energy(&self) -> Vec<EnergyViolation> {
        validate_energy(&self.beta[0], &self.beta[1], self.n_ris())
    }

    /// `r,side,n,phase1,phase2,delay,beta`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "r,side,n,phase1,phase2,delay,beta")?;
        let n_ris = self.n_ris();
        for (r, sides) in self.surfaces.iter().enumerate() {
            for side in Side::BOTH {
                let surf = &sides[side.index()];
                for n in 0..n_ris {
                    let delay = match (&surf.delays, self.structure) {
                        (Delays::None, _) => 0.0,
                        (Delays::PerElement(t), _) => t[n],
                        (Delays::PerSubSurface(t), RisStructure::SubConnected { s1, s2 }) => {
                            let (l1, l2) = (self.n1 / s1, self.n2 / s2);
                            t[((n / self.n2) / l1) * s2 + (n % self.n2) / l2]
                        }
                        (Delays::PerSubSurface(_), _) => f64::NAN,
                    };
                    writeln!(
                        w,
                        "{r},{},{n},{},{},{},{}",
                        side.as_str(),
                        surf.phase1[n],
                        surf.phase2[n],
                        delay,
                        self.beta[side.index()][r * n_ris + n]
                    )?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyViolation {
    pub r: usize,
    pub n: usize,
    pub total: f64,
}

/// Every element with `beta_R^2 + beta_T^2 > 1 + 1e-9`.
pub fn validate_energy(beta_r: &[f64], beta_t: &[f64], n_ris: usize) -> Vec<EnergyViolation> {
    beta_r
        .iter()
        .zip(beta_t)
        .enumerate()
        .filter_map(|(i, (a, b))| {
            let total = a * a + b * b;
            (total > 1.0 + 1e-9).then_some(EnergyViolation { r: i / n_ris, n: i % n_ris, total })
        })
        .collect()
}
