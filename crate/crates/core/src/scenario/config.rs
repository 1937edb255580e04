//! Scenario configuration.
//!
//! A run is fully described by a [`ScenarioConfig`]. The on-disk form is a
//! TOML file with one table per section. Every field has a default and
//! unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hardware scheme evaluated by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// One TD per STAR-RIS element, BS TDs on.
    Fully,
    /// Sub-connected STAR-RIS (one TD per sub-surface), BS TDs on.
    Sub,
    /// Phase-only STAR-RIS designed at the center frequency, BS TDs on.
    Conventional,
    /// Phase-only STAR-RIS and no BS time delays.
    NoTd,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Fully, Scheme::Sub, Scheme::Conventional, Scheme::NoTd];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Fully => "fully",
            Scheme::Sub => "sub",
            Scheme::Conventional => "conventional",
            Scheme::NoTd => "no-td",
        }
    }

    pub fn bs_time_delays(self) -> bool {
        !matches!(self, Scheme::NoTd)
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where CSI errors are injected when `delta > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsiModel {
    /// Error on the complex gain of every cascaded path: one factor
    /// `1 + e`, `e ~ CN(0, delta)`, per (subcarrier, user, RIS).
    Path,
    /// Entrywise error on each RIS-to-user vector and each BS-to-RIS matrix.
    Elementwise,
}

/// BS true-time-delay realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayRealization {
    /// Signed delays straight from the closed form.
    Signed,
    /// Per-chain constant offset so every delay is nonnegative.
    NonNegative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    pub fc_hz: f64,
    pub bandwidth_hz: f64,
    pub subcarriers: usize,
    pub nt: usize,
    pub nrf: usize,
    /// TDs per RF chain.
    pub kt: usize,
    pub num_ris: usize,
    pub n1: usize,
    pub n2: usize,
    pub s1: usize,
    pub s2: usize,
    pub users: usize,
    pub pmax_w: f64,
    pub noise_dbm: f64,
    /// Medium absorption coefficient (1/m), frequency-flat.
    pub kappa_abs: f64,
    /// CSI error level.
    pub delta: f64,
    pub structure: Scheme,
    /// Scale BS-RIS channels by sqrt(N_RIS Nt) and RIS-user channels by
    /// sqrt(N_RIS). Off keeps unit-norm steering vectors end to end.
    pub array_gain: bool,
    pub csi_model: CsiModel,
    pub bs_delays: DelayRealization,
    pub seed: u64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            fc_hz: 100e9,
            bandwidth_hz: 10e9,
            subcarriers: 8,
            nt: 128,
            nrf: 4,
            kt: 16,
            num_ris: 2,
            n1: 8,
            n2: 8,
            s1: 2,
            s2: 2,
            users: 4,
            pmax_w: 15.0,
            noise_dbm: -85.0,
            kappa_abs: 0.0,
            delta: 0.0,
            structure: Scheme::Sub,
            array_gain: false,
            csi_model: CsiModel::Path,
            bs_delays: DelayRealization::Signed,
            seed: 0,
        }
    }
}

impl SystemParams {
    pub fn n_ris(&self) -> usize {
        self.n1 * self.n2
    }

    /// Phase shifters per TD.
    pub fn ps_per_td(&self) -> usize {
        self.nt / self.kt
    }
}

/// Raw per-link angles, used instead of positions when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnglesConfig {
    /// BS angle of departure toward each RIS.
    pub theta_b: Vec<f64>,
    pub u_b: Vec<f64>,
    pub v_b: Vec<f64>,
    pub d_b: Vec<f64>,
    /// `[r][k]` departure angles and distances from RIS r to user k.
    pub u_ru: Vec<Vec<f64>>,
    pub v_ru: Vec<Vec<f64>>,
    pub d_ru: Vec<Vec<f64>>,
    /// Per-user side: "reflection" or "transmission".
    pub sides: Vec<super::Side>,
    #[serde(default)]
    pub t_b: Option<Vec<f64>>,
    #[serde(default)]
    pub t_ru: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub bs_position: [f64; 3],
    /// Direction of the BS ULA axis.
    pub bs_axis: [f64; 3],
    pub ris_positions: Vec<[f64; 3]>,
    /// Direction of increasing row index n1 on every RIS.
    pub ris_row_axis: [f64; 3],
    /// Direction of increasing column index n2 on every RIS.
    pub ris_col_axis: [f64; 3],
    /// Surface normal pointing into the reflection half-space.
    pub ris_normal: [f64; 3],
    pub user_center: [f64; 3],
    pub user_radius: f64,
    /// Explicit user positions; the first `users / 2` are reflection users.
    pub user_positions: Option<Vec<[f64; 3]>>,
    /// Uniform jitter applied to each user's position angle on its
    /// half-circle, drawn from the run seed.
    pub user_jitter_rad: f64,
    pub angles: Option<AnglesConfig>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            bs_position: [6.0, 2.0, 2.0],
            bs_axis: [1.0, 0.0, 0.0],
            ris_positions: vec![[-1.0, 10.0, 0.0], [1.0, 10.0, 0.0]],
            ris_row_axis: [1.0, 0.0, 0.0],
            ris_col_axis: [0.0, 0.0, 1.0],
            ris_normal: [0.0, -1.0, 0.0],
            user_center: [0.0, 10.0, 0.0],
            user_radius: 1.0,
            user_positions: None,
            user_jitter_rad: 0.0,
            angles: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverKnobs {
    /// Relative change of the LDR objective that stops the outer loop.
    pub tol: f64,
    pub max_iter: usize,
    pub admm_penalty: f64,
    pub admm_tol: f64,
    pub admm_max_iter: usize,
    /// Relative power-constraint tolerance of the Lagrange bisection.
    pub qcqp_tol: f64,
    /// Also start from all-reflect and all-transmit amplitudes and keep the
    /// start with the best estimated sum rate.
    pub multistart: bool,
}

impl Default for SolverKnobs {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 50,
            admm_penalty: 1.0,
            admm_tol: 1e-6,
            admm_max_iter: 500,
            qcqp_tol: 1e-8,
            multistart: true,
        }
    }
}

/// Single-RIS array-gain sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainSweepConfig {
    pub n1: usize,
    pub n2: usize,
    pub s1: usize,
    pub s2: usize,
    pub subcarriers: usize,
    pub incident_u: f64,
    pub incident_v: f64,
    pub departure_u: f64,
    pub departure_v: f64,
}

impl Default for GainSweepConfig {
    fn default() -> Self {
        Self {
            n1: 16,
            n2: 16,
            s1: 4,
            s2: 4,
            subcarriers: 128,
            incident_u: 0.5,
            incident_v: 1.2,
            departure_u: 0.6,
            departure_v: 1.0,
        }
    }
}

/// Sweep axes for the figure experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentParams {
    pub bandwidths_hz: Vec<f64>,
    /// Sub-surface counts; each must be a perfect square dividing the RIS.
    pub subsurfaces: Vec<usize>,
    pub powers_w: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Monte-Carlo draws per CSI level.
    pub repetitions: usize,
    pub schemes: Vec<Scheme>,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            bandwidths_hz: vec![1e9, 5e9, 10e9, 20e9],
            subsurfaces: vec![1, 4, 16, 64],
            powers_w: vec![1.0, 5.0, 10.0, 15.0, 20.0],
            deltas: vec![0.0, 0.1, 0.2],
            repetitions: 50,
            schemes: Scheme::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemParams,
    pub geometry: GeometryConfig,
    pub solver: SolverKnobs,
    pub gain: GainSweepConfig,
    pub experiment: ExperimentParams,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Parse `text` and apply `section.key=value` overrides before validation.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let cfg: ScenarioConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Structural checks shared by every entry point.
    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        if s.subcarriers == 0 {
            return Err(Error::config("subcarriers must be at least 1"));
        }
        if !(s.fc_hz > 0.0) || !s.fc_hz.is_finite() {
            return Err(Error::config("fc_hz must be positive"));
        }
        if !(s.bandwidth_hz >= 0.0) || !s.bandwidth_hz.is_finite() {
            return Err(Error::config("bandwidth_hz must be nonnegative"));
        }
        if s.bandwidth_hz >= 2.0 * s.fc_hz {
            return Err(Error::config("bandwidth_hz must be below 2 fc_hz"));
        }
        if !(s.pmax_w > 0.0) {
            return Err(Error::config("pmax_w must be positive"));
        }
        if !s.noise_dbm.is_finite() {
            return Err(Error::config("noise_dbm must be finite"));
        }
        if s.kappa_abs < 0.0 {
            return Err(Error::config("kappa_abs must be nonnegative"));
        }
        if s.delta < 0.0 {
            return Err(Error::config("delta must be nonnegative"));
        }
        for (name, v) in [("nt", s.nt), ("nrf", s.nrf), ("kt", s.kt), ("num_ris", s.num_ris)] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        if s.nt % s.kt != 0 {
            return Err(Error::config(format!(
                "nt = {} is not divisible by kt = {}",
                s.nt, s.kt
            )));
        }
        if s.nrf > s.nt {
            return Err(Error::config("nrf must not exceed nt"));
        }
        check_surface(s.n1, s.n2, s.s1, s.s2, "system")?;
        if s.users != 2 * s.num_ris {
            return Err(Error::config(format!(
                "allocation requires users = 2 * num_ris, got users = {} and num_ris = {}",
                s.users, s.num_ris
            )));
        }
        let k = &self.solver;
        if !(k.tol > 0.0) || k.max_iter == 0 {
            return Err(Error::config("solver.tol must be positive and max_iter at least 1"));
        }
        if !(k.admm_penalty > 0.0) || !(k.admm_tol > 0.0) || k.admm_max_iter == 0 {
            return Err(Error::config("ADMM knobs must be positive"));
        }
        if !(k.qcqp_tol > 0.0) {
            return Err(Error::config("solver.qcqp_tol must be positive"));
        }
        let g = &self.gain;
        check_surface(g.n1, g.n2, g.s1, g.s2, "gain")?;
        if g.subcarriers == 0 {
            return Err(Error::config("gain.subcarriers must be at least 1"));
        }
        let geo = &self.geometry;
        if geo.angles.is_none() {
            if geo.ris_positions.len() != s.num_ris {
                return Err(Error::config(format!(
                    "geometry.ris_positions has {} entries for {} RISs",
                    geo.ris_positions.len(),
                    s.num_ris
                )));
            }
            if let Some(users) = &geo.user_positions {
                if users.len() != s.users {
                    return Err(Error::config("geometry.user_positions length must equal users"));
                }
            }
            if !(geo.user_radius > 0.0) {
                return Err(Error::config("geometry.user_radius must be positive"));
            }
        }
        for &n in &self.experiment.subsurfaces {
            let side = exact_sqrt(n)
                .ok_or_else(|| Error::config(format!("experiment.subsurfaces entry {n} is not a perfect square")))?;
            check_surface(s.n1, s.n2, side, side, "experiment.subsurfaces")?;
        }
        Ok(())
    }
}

fn check_surface(n1: usize, n2: usize, s1: usize, s2: usize, ctx: &str) -> Result<()> {
    if n1 == 0 || n2 == 0 || s1 == 0 || s2 == 0 {
        return Err(Error::config(format!("{ctx}: RIS and sub-surface dimensions must be at least 1")));
    }
    if n1 % s1 != 0 || n2 % s2 != 0 {
        return Err(Error::config(format!(
            "{ctx}: RIS {n1}x{n2} is not divisible into {s1}x{s2} sub-surfaces"
        )));
    }
    Ok(())
}

pub(crate) fn exact_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n && r > 0).then_some(r)
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("override `{spec}` is not of the form key=value")))?;
    let parts: Vec<&str> = path.trim().split('.').collect();
    // Parse the value as a TOML expression; bare words fall back to strings.
    let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in parents {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Parse(format!("override `{spec}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
