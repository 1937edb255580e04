//! Configuration, OFDM grid, deployment geometry, user allocation and the
//! CSI-error model.

mod config;
mod geometry;

pub use config::{
    AnglesConfig, CsiModel, DelayRealization, ExperimentParams, GainSweepConfig, GeometryConfig,
    ScenarioConfig, Scheme, SolverKnobs, SystemParams,
};
pub(crate) use config::exact_sqrt;
pub use geometry::{allocate_users, spatial_freqs, Allocation, Geometry};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Which half-space of a STAR-RIS a user sits in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Reflection,
    Transmission,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Reflection, Side::Transmission];

    /// 0 for reflection, 1 for transmission.
    pub fn index(self) -> usize {
        match self {
            Side::Reflection => 0,
            Side::Transmission => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Reflection => "R",
            Side::Transmission => "T",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubcarrierGrid {
    pub fc: f64,
    pub frequencies: Vec<f64>,
    /// `f_m / fc`.
    pub relative: Vec<f64>,
}

impl SubcarrierGrid {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }
}

/// `f_m = fc + (B/M)(m - 1 - (M-1)/2)` for `m = 1..=M`.
pub fn subcarrier_frequencies(fc: f64, bandwidth: f64, m: usize) -> Result<SubcarrierGrid> {
    if m == 0 {
        return Err(Error::config("the subcarrier grid needs at least one subcarrier"));
    }
    if !(bandwidth >= 0.0) {
        return Err(Error::config("bandwidth must be nonnegative"));
    }
    if !(fc > 0.0) {
        return Err(Error::config("carrier frequency must be positive"));
    }
    let spacing = bandwidth / m as f64;
    let center = (m as f64 - 1.0) / 2.0;
    let frequencies: Vec<f64> = (0..m).map(|i| fc + spacing * (i as f64 - center)).collect();
    let relative = frequencies.iter().map(|f| f / fc).collect();
    Ok(SubcarrierGrid { fc, frequencies, relative })
}

pub fn noise_power_watts(noise_dbm: f64) -> f64 {
    10f64.powf((noise_dbm - 30.0) / 10.0)
}

/// Returns `h + e` with `e_n ~ CN(0, delta |h_n|^2)`.
pub fn apply_csi_error<R: Rng + ?Sized>(h: &[C64], delta: f64, rng: &mut R) -> Result<Vec<C64>> {
    if !(delta >= 0.0) {
        return Err(Error::config(format!("CSI error level must be nonnegative, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(h.to_vec());
    }
    Ok(h.iter()
        .map(|&x| {
            let s = (delta * x.norm_sqr() / 2.0).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            x + C64::new(s * re, s * im)
        })
        .collect())
}

/// Independent deterministic RNG stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_edges() {
        let g = subcarrier_frequencies(100e9, 10e9, 8).unwrap();
        assert_relative_eq!(g.frequencies[0], 95.625e9, max_relative = 1e-15);
        assert_relative_eq!(g.frequencies[7], 104.375e9, max_relative = 1e-15);
    }

    #[test]
    fn single_carrier_at_fc() {
        let g = subcarrier_frequencies(100e9, 7e9, 1).unwrap();
        assert_eq!(g.frequencies, vec![100e9]);
        assert_eq!(g.relative, vec![1.0]);
    }

    #[test]
    fn grid_mean_is_fc() {
        let g = subcarrier_frequencies(100e9, 10e9, 128).unwrap();
        let mean = g.frequencies.iter().sum::<f64>() / 128.0;
        assert_relative_eq!(mean, 100e9, max_relative = 1e-14);
    }

    #[test]
    fn zero_subcarriers_is_error() {
        assert!(matches!(subcarrier_frequencies(100e9, 1e9, 0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn noise_conversion() {
        assert_relative_eq!(noise_power_watts(-85.0), 3.1623e-12, max_relative = 1e-4);
        assert_relative_eq!(noise_power_watts(0.0), 1e-3, max_relative = 1e-15);
        assert_relative_eq!(noise_power_watts(30.0), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn csi_zero_delta_is_identity() {
        let h = vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.1)];
        let mut rng = stream_rng(1, 0);
        assert_eq!(apply_csi_error(&h, 0.0, &mut rng).unwrap(), h);
        assert!(apply_csi_error(&h, -0.1, &mut rng).is_err());
    }

    fn empirical_error_ratio(delta: f64) -> f64 {
        let h: Vec<C64> = (0..16).map(|i| C64::from_polar(0.5 + 0.1 * i as f64, 0.3 * i as f64)).collect();
        let hn: f64 = h.iter().map(|x| x.norm_sqr()).sum();
        let mut rng = stream_rng(42, 7);
        let draws = 10_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let noisy = apply_csi_error(&h, delta, &mut rng).unwrap();
            acc += noisy.iter().zip(&h).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / hn;
        }
        acc / draws as f64
    }

    #[test]
    fn csi_error_variance() {
        for delta in [0.1, 0.2] {
            let r = empirical_error_ratio(delta);
            assert!((r / delta - 1.0).abs() < 0.05, "delta {delta}: ratio {r}");
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream_rng(3, 1).random();
        let b: u64 = stream_rng(3, 1).random();
        let c: u64 = stream_rng(3, 2).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
