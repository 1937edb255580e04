//! Normalized single-RIS array gains, by direct summation and in closed form.
//!
//! Angles enter as spatial-frequency pairs `(sin u sin v, cos v)` for the
//! incident (BS side) and departure (user side) directions.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DVector;

use crate::channel::ris_steering_from_freqs;
use crate::error::Result;
use crate::scenario::{spatial_freqs, subcarrier_frequencies, ScenarioConfig};
use crate::star_ris::{design_surface, Delays, RisStructure, RisSurface};
use crate::C64;

/// `sin(N pi x / 2) / sin(pi x / 2)`, continued through its removable
/// singularities at even integers.
pub fn xi_kernel(n: usize, x: f64) -> f64 {
    let n = n as f64;
    let half = PI * x / 2.0;
    let den = half.sin();
    if den.abs() < 1e-8 {
        n * (n * half).cos() / half.cos()
    } else {
        (n * half).sin() / den
    }
}

/// Closed-form phase-only gain at relative frequency `xi`.
pub fn gain_conventional_closed(xi: f64, inc: (f64, f64), dep: (f64, f64), n1: usize, n2: usize) -> f64 {
    let d = xi - 1.0;
    (xi_kernel(n1, d * (inc.0 + dep.0)) * xi_kernel(n2, d * (inc.1 + dep.1))).abs() / (n1 * n2) as f64
}

/// Closed-form sub-connected gain when each sub-surface first combines the
/// incident wave into its TD and then re-radiates it.
pub fn gain_sub_closed(xi: f64, inc: (f64, f64), dep: (f64, f64), n1: usize, n2: usize, s1: usize, s2: usize) -> f64 {
    let (l1, l2) = (n1 / s1, n2 / s2);
    let d = xi - 1.0;
    let k = xi_kernel(l1, d * inc.0) * xi_kernel(l2, d * inc.1) * xi_kernel(l1, d * dep.0) * xi_kernel(l2, d * dep.1);
    (s1 * s2) as f64 * k.abs() / ((n1 * n2) as f64 * (l1 * l2) as f64)
}

/// Closed-form sub-connected gain of the per-element (diagonal) composition.
pub fn gain_sub_diagonal_closed(
    xi: f64,
    inc: (f64, f64),
    dep: (f64, f64),
    n1: usize,
    n2: usize,
    s1: usize,
    s2: usize,
) -> f64 {
    let (l1, l2) = (n1 / s1, n2 / s2);
    let d = xi - 1.0;
    let k = xi_kernel(l1, d * (inc.0 + dep.0)) * xi_kernel(l2, d * (inc.1 + dep.1));
    (s1 * s2) as f64 * k.abs() / (n1 * n2) as f64
}

/// `|sum_n b_dep[n] diag[n] b_inc[n]|` with unit-norm steering vectors.
pub fn gain_diagonal(xi: f64, inc: (f64, f64), dep: (f64, f64), n1: usize, n2: usize, diag: &DVector<C64>) -> f64 {
    let bi = ris_steering_from_freqs(xi, inc.0, inc.1, n1, n2);
    let bd = ris_steering_from_freqs(xi, dep.0, dep.1, n1, n2);
    bd.iter().zip(bi.iter()).zip(diag.iter()).map(|((a, b), d)| a * d * b).sum::<C64>().norm()
}

/// Direct-sum phase-only gain with element phases `phases`.
pub fn gain_conventional(xi: f64, inc: (f64, f64), dep: (f64, f64), n1: usize, n2: usize, phases: &[f64]) -> f64 {
    let diag = DVector::from_iterator(phases.len(), phases.iter().map(|p| C64::from_polar(1.0, *p)));
    gain_diagonal(xi, inc, dep, n1, n2, &diag)
}

/// Direct-sum gain with one TD per element at frequency `f`.
#[allow(clippy::too_many_arguments)]
pub fn gain_fully(
    f: f64,
    fc: f64,
    inc: (f64, f64),
    dep: (f64, f64),
    n1: usize,
    n2: usize,
    phases: &[f64],
    delays: &[f64],
) -> f64 {
    let diag = DVector::from_iterator(
        phases.len(),
        phases.iter().zip(delays).map(|(p, t)| C64::from_polar(1.0, p - 2.0 * PI * f * t)),
    );
    gain_diagonal(f / fc, inc, dep, n1, n2, &diag)
}

/// Direct-sum sub-connected gain: each sub-surface sums `Phi1 G` into one
/// scalar, delays it, and spreads it over `h Phi2`. Normalized by `1/L`.
#[allow(clippy::too_many_arguments)]
pub fn gain_sub(
    f: f64,
    fc: f64,
    inc: (f64, f64),
    dep: (f64, f64),
    n1: usize,
    n2: usize,
    s1: usize,
    s2: usize,
    surface: &RisSurface,
) -> f64 {
    let Delays::PerSubSurface(tau) = &surface.delays else {
        panic!("gain_sub needs per-sub-surface delays");
    };
    let xi = f / fc;
    let (l1, l2) = (n1 / s1, n2 / s2);
    let bi = ris_steering_from_freqs(xi, inc.0, inc.1, n1, n2);
    let bd = ris_steering_from_freqs(xi, dep.0, dep.1, n1, n2);
    let mut total = C64::new(0.0, 0.0);
    for a in 0..s1 {
        for b in 0..s2 {
            let mut inner = C64::new(0.0, 0.0);
            let mut outer = C64::new(0.0, 0.0);
            for i in 0..l1 {
                for j in 0..l2 {
                    let n = (a * l1 + i) * n2 + b * l2 + j;
                    inner += C64::from_polar(1.0, surface.phase1[n]) * bi[n];
                    outer += bd[n] * C64::from_polar(1.0, surface.phase2[n]);
                }
            }
            total += outer * C64::from_polar(1.0, -2.0 * PI * f * tau[a * s2 + b]) * inner;
        }
    }
    total.norm() / (l1 * l2) as f64
}

/// Direct-sum gain of a designed surface under its structure's composition.
pub fn gain_of_design(
    structure: RisStructure,
    f: f64,
    fc: f64,
    inc: (f64, f64),
    dep: (f64, f64),
    n1: usize,
    n2: usize,
    surface: &RisSurface,
) -> f64 {
    match (structure, &surface.delays) {
        (RisStructure::SubConnected { s1, s2 }, _) => gain_sub(f, fc, inc, dep, n1, n2, s1, s2, surface),
        (_, Delays::PerElement(t)) => gain_fully(f, fc, inc, dep, n1, n2, &surface.phase1, t),
        _ => gain_conventional(f / fc, inc, dep, n1, n2, &surface.phase1),
    }
}

/// One point of a gain-versus-subcarrier curve.
#[derive(Debug, Clone, PartialEq)]
pub struct GainPoint {
    pub structure: &'static str,
    pub side: &'static str,
    pub bandwidth_hz: f64,
    pub m: usize,
    pub f_hz: f64,
    pub gain: f64,
}

pub fn structure_tag(s: RisStructure) -> &'static str {
    match s {
        RisStructure::Conventional => "conventional",
        RisStructure::FullyConnected => "fully",
        RisStructure::SubConnected { .. } => "sub",
    }
}

/// Gain curves of the `[gain]` configuration for every structure and
/// bandwidth, ordered by bandwidth, then structure, then subcarrier.
pub fn sweep_gain(cfg: &ScenarioConfig, structures: &[RisStructure], bandwidths: &[f64]) -> Result<Vec<GainPoint>> {
    let g = &cfg.gain;
    let fc = cfg.system.fc_hz;
    let inc = spatial_freqs(g.incident_u, g.incident_v);
    let dep = spatial_freqs(g.departure_u, g.departure_v);
    let mut out = Vec::new();
    for &b in bandwidths {
        let grid = subcarrier_frequencies(fc, b, g.subcarriers)?;
        for &s in structures {
            let surface = design_surface(s, inc, dep, fc, g.n1, g.n2);
            for (m, &f) in grid.frequencies.iter().enumerate() {
                out.push(GainPoint {
                    structure: structure_tag(s),
                    side: "R",
                    bandwidth_hz: b,
                    m,
                    f_hz: f,
                    gain: gain_of_design(s, f, fc, inc, dep, g.n1, g.n2, &surface),
                });
            }
        }
    }
    Ok(out)
}

/// `structure,side,bandwidth_hz,m,f_hz,gain`.
pub fn write_gain_csv<W: Write>(points: &[GainPoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "structure,side,bandwidth_hz,m,f_hz,gain")?;
    for p in points {
        writeln!(w, "{},{},{},{},{},{}", p.structure, p.side, p.bandwidth_hz, p.m, p.f_hz, p.gain)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kernel_values() {
        assert_eq!(xi_kernel(7, 0.0), 7.0);
        assert!(xi_kernel(4, 0.5).abs() < 1e-15);
        // Limit at x = 2: N cos(N pi) / cos(pi).
        assert_relative_eq!(xi_kernel(4, 2.0), 4.0 * (4.0 * PI).cos() / PI.cos(), epsilon = 1e-12);
        assert_relative_eq!(xi_kernel(5, 2.0 + 1e-12), xi_kernel(5, 2.0), epsilon = 1e-6);
    }

    #[test]
    fn kernel_matches_geometric_sum() {
        for n in [1usize, 2, 5, 16] {
            for x in [-1.7, -0.3, 0.01, 0.25, 0.9, 3.3] {
                let sum: C64 = (0..n).map(|k| C64::from_polar(1.0, PI * x * k as f64)).sum();
                assert_relative_eq!(xi_kernel(n, x).abs(), sum.norm(), epsilon = 1e-10);
                assert!(xi_kernel(n, x).abs() <= n as f64 + 1e-12);
            }
        }
    }

    const INC: (f64, f64) = (0.45, 0.35);
    const DEP: (f64, f64) = (0.55, 0.5);

    #[test]
    fn conventional_direct_matches_closed() {
        let phi = design_surface(RisStructure::Conventional, INC, DEP, 1e11, 16, 16).phase1;
        for xi in [0.9, 0.97, 1.0, 1.03, 1.1] {
            let direct = gain_conventional(xi, INC, DEP, 16, 16, &phi);
            assert_relative_eq!(direct, gain_conventional_closed(xi, INC, DEP, 16, 16), max_relative = 1e-10);
        }
        assert_relative_eq!(gain_conventional(1.0, INC, DEP, 16, 16, &phi), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fully_connected_is_flat_and_reduces_without_delays() {
        let fc = 1e11;
        let s = design_surface(RisStructure::FullyConnected, INC, DEP, fc, 16, 16);
        let Delays::PerElement(t) = &s.delays else { panic!() };
        for xi in [0.9, 1.0, 1.07] {
            assert_relative_eq!(gain_fully(xi * fc, fc, INC, DEP, 16, 16, &s.phase1, t), 1.0, epsilon = 1e-12);
        }
        let zeros = vec![0.0; 256];
        let phi = design_surface(RisStructure::Conventional, INC, DEP, fc, 16, 16).phase1;
        assert_relative_eq!(
            gain_fully(1.04 * fc, fc, INC, DEP, 16, 16, &phi, &zeros),
            gain_conventional(1.04, INC, DEP, 16, 16, &phi),
            epsilon = 1e-14
        );
    }

    #[test]
    fn sub_direct_matches_closed() {
        let fc = 1e11;
        let st = RisStructure::SubConnected { s1: 4, s2: 4 };
        let s = design_surface(st, INC, DEP, fc, 16, 16);
        for xi in [0.95, 0.99, 1.0, 1.02, 1.05] {
            let direct = gain_sub(xi * fc, fc, INC, DEP, 16, 16, 4, 4, &s);
            assert_relative_eq!(direct, gain_sub_closed(xi, INC, DEP, 16, 16, 4, 4), max_relative = 1e-10);
        }
        assert_relative_eq!(gain_sub(fc, fc, INC, DEP, 16, 16, 4, 4, &s), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sub_with_single_element_groups_is_flat() {
        let fc = 1e11;
        let s = design_surface(RisStructure::SubConnected { s1: 8, s2: 8 }, INC, DEP, fc, 8, 8);
        for xi in [0.9, 1.1] {
            assert_relative_eq!(gain_sub(xi * fc, fc, INC, DEP, 8, 8, 8, 8, &s), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn diagonal_sub_closed_form() {
        use crate::star_ris::RisState;
        let fc = 1e11;
        let st = RisStructure::SubConnected { s1: 2, s2: 4 };
        let state = RisState {
            structure: st,
            n1: 8,
            n2: 8,
            surfaces: vec![[design_surface(st, INC, DEP, fc, 8, 8), design_surface(st, INC, DEP, fc, 8, 8)]],
            beta: [vec![1.0; 64], vec![0.0; 64]],
        };
        for xi in [0.95, 1.0, 1.05] {
            let diag = state.compose_phase_matrix(0, crate::scenario::Side::Reflection, xi * fc).unwrap();
            let direct = gain_diagonal(xi, INC, DEP, 8, 8, &diag);
            assert_relative_eq!(direct, gain_sub_diagonal_closed(xi, INC, DEP, 8, 8, 2, 4), max_relative = 1e-10);
        }
    }

    #[test]
    fn zero_bandwidth_sweep_is_flat() {
        let cfg = ScenarioConfig::default();
        let structures = [RisStructure::Conventional, RisStructure::FullyConnected, RisStructure::SubConnected { s1: 4, s2: 4 }];
        let pts = sweep_gain(&cfg, &structures, &[0.0]).unwrap();
        assert_eq!(pts.len(), 3 * 128);
        assert!(pts.iter().all(|p| (p.gain - 1.0).abs() < 1e-12));
    }

    #[test]
    fn sign_flip_symmetry() {
        let neg = |p: (f64, f64)| (-p.0, -p.1);
        for xi in [0.93, 1.06] {
            assert_relative_eq!(
                gain_conventional_closed(xi, INC, DEP, 8, 8),
                gain_conventional_closed(xi, neg(INC), neg(DEP), 8, 8),
                epsilon = 1e-14
            );
            assert_relative_eq!(
                gain_sub_closed(xi, INC, DEP, 8, 8, 2, 2),
                gain_sub_closed(xi, neg(INC), neg(DEP), 8, 8, 2, 2),
                epsilon = 1e-14
            );
        }
    }
}
