//! End-to-end pipeline for one scenario: geometry, channels, fixed hardware
//! designs per scheme, CSI errors and the sum-rate optimizer.

use nalgebra::DVector;
use rand::Rng;

use crate::bs_frontend::{chain_targets, BsFrontend, TdMode};
use crate::channel::{build_channel_set, ChannelSet};
use crate::error::Result;
use crate::fp_optimizer::{initialize, optimize, sum_rate, Cascade, FpOutcome};
use crate::scenario::{
    allocate_users, apply_csi_error, noise_power_watts, subcarrier_frequencies, Allocation, CsiModel,
    DelayRealization, Geometry, ScenarioConfig, Scheme, SubcarrierGrid,
};
use crate::star_ris::{RisState, RisStructure};
use crate::C64;

#[derive(Debug, Clone)]
pub struct System {
    pub cfg: ScenarioConfig,
    pub grid: SubcarrierGrid,
    pub geometry: Geometry,
    pub allocation: Allocation,
    pub channels: ChannelSet,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeDesign {
    pub scheme: Scheme,
    pub frontend: BsFrontend,
    pub ris: RisState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeRun {
    pub scheme: Scheme,
    /// Sum rate on the true channel at the final iterate (bits/s/Hz).
    pub sum_rate_bits: f64,
    pub outcome: FpOutcome,
}

impl System {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let sys = &cfg.system;
        let geometry = Geometry::from_config(cfg)?;
        let allocation = allocate_users(&geometry, sys.num_ris, sys.users)?;
        let grid = subcarrier_frequencies(sys.fc_hz, sys.bandwidth_hz, sys.subcarriers)?;
        let channels = build_channel_set(sys, &geometry, &grid)?;
        Ok(System {
            cfg: cfg.clone(),
            grid,
            geometry,
            allocation,
            channels,
            sigma2: noise_power_watts(sys.noise_dbm),
        })
    }

    /// Fully, sub-connected and conventional schemes keep the BS delays; the
    /// no-TD baseline drops them and uses phase-only RISs.
    pub fn ris_structure(&self, scheme: Scheme) -> RisStructure {
        match scheme {
            Scheme::Fully => RisStructure::FullyConnected,
            Scheme::Sub => RisStructure::SubConnected { s1: self.cfg.system.s1, s2: self.cfg.system.s2 },
            Scheme::Conventional | Scheme::NoTd => RisStructure::Conventional,
        }
    }

    pub fn design(&self, scheme: Scheme) -> Result<SchemeDesign> {
        let sys = &self.cfg.system;
        let mode = match (scheme.bs_time_delays(), sys.bs_delays) {
            (false, _) => TdMode::Disabled,
            (true, DelayRealization::Signed) => TdMode::Signed,
            (true, DelayRealization::NonNegative) => TdMode::NonNegative,
        };
        let thetas: Vec<f64> = chain_targets(&self.allocation, sys.num_ris, sys.nrf)
            .into_iter()
            .map(|r| self.geometry.theta_b[r])
            .collect();
        let frontend = BsFrontend::design(&thetas, sys.nt, sys.kt, sys.fc_hz, mode)?;
        let ris = RisState::design(self.ris_structure(scheme), &self.geometry, &self.allocation, sys.fc_hz, sys.n1, sys.n2)?;
        Ok(SchemeDesign { scheme, frontend, ris })
    }

    pub fn cascade(
        &self,
        design: &SchemeDesign,
        channels: &ChannelSet,
        factors: Option<&[Vec<DVector<C64>>]>,
    ) -> Result<Cascade> {
        Cascade::build(
            channels,
            &design.ris,
            &design.frontend,
            &self.grid,
            &self.geometry.sides,
            self.sigma2,
            self.cfg.system.pmax_w,
            factors,
        )
    }

    /// Optimizes `scheme` on a channel estimate with error level `delta` and
    /// scores the result on the true channel. With `delta = 0` the estimate is
    /// exact and `rng` is not touched. Starts are ranked on the estimate only.
    pub fn run<R: Rng + ?Sized>(&self, scheme: Scheme, delta: f64, rng: &mut R) -> Result<SchemeRun> {
        let design = self.design(scheme)?;
        let truth = self.cascade(&design, &self.channels, None)?;
        let estimate = if delta == 0.0 {
            truth.clone()
        } else {
            match self.cfg.system.csi_model {
                CsiModel::Path => {
                    let ones = vec![C64::new(1.0, 0.0); self.cfg.system.num_ris];
                    let factors = (0..self.grid.len())
                        .map(|_| {
                            (0..self.cfg.system.users)
                                .map(|_| apply_csi_error(&ones, delta, rng).map(DVector::from_vec))
                                .collect::<Result<Vec<_>>>()
                        })
                        .collect::<Result<Vec<_>>>()?;
                    self.cascade(&design, &self.channels, Some(&factors))?
                }
                CsiModel::Elementwise => {
                    let noisy = self.channels.with_csi_error(delta, rng)?;
                    self.cascade(&design, &noisy, None)?
                }
            }
        };
        let len = design.ris.beta[0].len();
        let mut starts = vec![[
            DVector::from_vec(design.ris.beta[0].clone()),
            DVector::from_vec(design.ris.beta[1].clone()),
        ]];
        if self.cfg.solver.multistart {
            starts.push([DVector::from_element(len, 1.0), DVector::zeros(len)]);
            starts.push([DVector::zeros(len), DVector::from_element(len, 1.0)]);
        }
        let mut best: Option<(f64, FpOutcome)> = None;
        for beta in starts {
            let outcome = optimize(&estimate, &truth, &self.cfg.solver, initialize(&estimate, beta))?;
            let st = &outcome.state;
            let score = sum_rate(&estimate.effective(&st.beta), &st.d, &estimate.sigma2)?;
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, outcome));
            }
        }
        let (_, outcome) = best.expect("at least one start");
        let sum_rate_bits = outcome.state.trace.last().map_or(0.0, |t| t.sum_rate_bits);
        Ok(SchemeRun { scheme, sum_rate_bits, outcome })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::equivalent_channel;
    use crate::scenario::{stream_rng, Side};
    use approx::assert_relative_eq;

    fn small_cfg() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.system.nt = 32;
        cfg.system.kt = 4;
        cfg.system.n1 = 4;
        cfg.system.n2 = 4;
        cfg.system.subcarriers = 4;
        cfg.system.array_gain = true;
        cfg.experiment.subsurfaces = vec![1, 4, 16];
        cfg
    }

    #[test]
    fn cascade_matches_equivalent_channel() {
        let sys = System::new(&small_cfg()).unwrap();
        let design = sys.design(Scheme::Sub).unwrap();
        let c = sys.cascade(&design, &sys.channels, None).unwrap();
        let beta = [
            DVector::from_vec(design.ris.beta[0].clone()),
            DVector::from_vec(design.ris.beta[1].clone()),
        ];
        let hhat = c.effective(&beta);
        for m in 0..sys.grid.len() {
            let fm = design.frontend.at(sys.grid.frequencies[m]);
            for k in 0..4 {
                let side: Side = sys.geometry.sides[k];
                let hbar = equivalent_channel(&sys.channels, &design.ris, &sys.grid, m, k, side).unwrap();
                let want = fm.tr_mul(&hbar);
                assert!((&hhat[m][k] - &want).norm() <= 1e-12 * want.norm());
            }
        }
    }

    #[test]
    fn no_td_baseline_has_zero_delays() {
        let sys = System::new(&small_cfg()).unwrap();
        let d = sys.design(Scheme::NoTd).unwrap();
        assert!(d.frontend.z.iter().flatten().all(|&z| z == 0.0));
        assert_eq!(d.ris.structure, RisStructure::Conventional);
        let d = sys.design(Scheme::Conventional).unwrap();
        assert!(d.frontend.z.iter().flatten().any(|&z| z != 0.0));
    }

    #[test]
    fn exact_csi_ignores_rng_and_is_deterministic() {
        let sys = System::new(&small_cfg()).unwrap();
        let mut r1 = stream_rng(1, 0);
        let mut r2 = stream_rng(2, 0);
        let a = sys.run(Scheme::Fully, 0.0, &mut r1).unwrap();
        let b = sys.run(Scheme::Fully, 0.0, &mut r2).unwrap();
        assert_eq!(a, b);
        assert!(a.sum_rate_bits > 0.0);
    }

    #[test]
    fn effective_error_is_scored_on_truth() {
        let mut cfg = small_cfg();
        cfg.solver.max_iter = 5;
        let sys = System::new(&cfg).unwrap();
        let exact = sys.run(Scheme::Fully, 0.0, &mut stream_rng(0, 0)).unwrap();
        let noisy = sys.run(Scheme::Fully, 0.2, &mut stream_rng(0, 0)).unwrap();
        assert!(noisy.sum_rate_bits.is_finite());
        assert!(noisy.sum_rate_bits != exact.sum_rate_bits);
        let t = &noisy.outcome.state.trace;
        assert_relative_eq!(t.last().unwrap().sum_rate_bits, noisy.sum_rate_bits);
    }
}
