//! Experiments: gain curves, convergence traces and sum-rate
//! sweeps, with CSV, manifest and summary artifacts.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::beam_gain::{sweep_gain, write_gain_csv, GainPoint};
use crate::error::{Error, Result};
use crate::fp_optimizer::{write_trace_csv, FpOutcome};
use crate::scenario::{exact_sqrt, stream_rng, ScenarioConfig, Scheme};
use crate::star_ris::RisStructure;
use crate::system::System;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    GainBandwidth,
    GainStructure,
    Convergence,
    TdSweep,
    BandwidthSweep,
    PowerSweep,
    CsiSweep,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::GainBandwidth,
        ExperimentKind::GainStructure,
        ExperimentKind::Convergence,
        ExperimentKind::TdSweep,
        ExperimentKind::BandwidthSweep,
        ExperimentKind::PowerSweep,
        ExperimentKind::CsiSweep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::GainBandwidth => "gain-bandwidth",
            ExperimentKind::GainStructure => "gain-structure",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::TdSweep => "td-sweep",
            ExperimentKind::BandwidthSweep => "bandwidth-sweep",
            ExperimentKind::PowerSweep => "power-sweep",
            ExperimentKind::CsiSweep => "csi-sweep",
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|k| k.as_str()).collect();
            Error::config(format!("unknown experiment `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

/// One sum-rate point, averaged over repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePoint {
    pub scheme: Scheme,
    /// Sub-surfaces per RIS: `S` for sub-connected, `N_RIS` for fully
    /// connected, 0 without RIS delays.
    pub subsurfaces: usize,
    pub bandwidth_hz: f64,
    pub pmax_w: f64,
    pub delta: f64,
    pub seed: u64,
    pub repetitions: usize,
    pub mean_sum_rate_bits: f64,
    pub std_sum_rate_bits: f64,
    pub mean_iterations: f64,
    pub converged_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRun {
    pub scheme: Scheme,
    pub outcome: FpOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentData {
    Gain(Vec<GainPoint>),
    Convergence(Vec<ConvergenceRun>),
    Rates(Vec<RatePoint>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    pub data: ExperimentData,
    pub csv: String,
    pub summary: String,
}

fn subsurface_count(cfg: &ScenarioConfig, scheme: Scheme) -> usize {
    match scheme {
        Scheme::Fully => cfg.system.n_ris(),
        Scheme::Sub => cfg.system.s1 * cfg.system.s2,
        Scheme::Conventional | Scheme::NoTd => 0,
    }
}

/// A sum-rate job: one configuration, one scheme, one CSI level.
struct Job {
    cfg: ScenarioConfig,
    scheme: Scheme,
    delta: f64,
}

fn run_jobs(jobs: Vec<Job>) -> Result<Vec<RatePoint>> {
    jobs.into_par_iter()
        .map(|job| {
            let sys = System::new(&job.cfg)?;
            let seed = job.cfg.system.seed;
            // Without CSI errors every repetition is identical.
            let reps = if job.delta == 0.0 { 1 } else { job.cfg.experiment.repetitions.max(1) };
            let runs = (0..reps)
                .into_par_iter()
                .map(|rep| sys.run(job.scheme, job.delta, &mut stream_rng(seed, rep as u64 + 1)))
                .collect::<Result<Vec<_>>>()?;
            let n = runs.len() as f64;
            let rates: Vec<f64> = runs.iter().map(|r| r.sum_rate_bits).collect();
            let mean = rates.iter().sum::<f64>() / n;
            let var = if runs.len() > 1 {
                rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            Ok(RatePoint {
                scheme: job.scheme,
                subsurfaces: subsurface_count(&job.cfg, job.scheme),
                bandwidth_hz: job.cfg.system.bandwidth_hz,
                pmax_w: job.cfg.system.pmax_w,
                delta: job.delta,
                seed,
                repetitions: reps,
                mean_sum_rate_bits: mean,
                std_sum_rate_bits: var.sqrt(),
                mean_iterations: runs.iter().map(|r| r.outcome.iterations as f64).sum::<f64>() / n,
                converged_fraction: runs.iter().filter(|r| r.outcome.converged).count() as f64 / n,
            })
        })
        .collect()
}

/// Sub-connected at every configured sub-surface count, then the other
/// configured schemes as references.
pub fn td_sweep(cfg: &ScenarioConfig) -> Result<Vec<RatePoint>> {
    let mut jobs = Vec::new();
    for &s in &cfg.experiment.subsurfaces {
        let side = exact_sqrt(s).ok_or_else(|| Error::config(format!("sub-surface count {s} is not a square")))?;
        let mut c = cfg.clone();
        c.system.s1 = side;
        c.system.s2 = side;
        jobs.push(Job { cfg: c, scheme: Scheme::Sub, delta: cfg.system.delta });
    }
    for &scheme in cfg.experiment.schemes.iter().filter(|s| **s != Scheme::Sub) {
        jobs.push(Job { cfg: cfg.clone(), scheme, delta: cfg.system.delta });
    }
    run_jobs(jobs)
}

pub fn bandwidth_sweep(cfg: &ScenarioConfig) -> Result<Vec<RatePoint>> {
    let mut jobs = Vec::new();
    for &b in &cfg.experiment.bandwidths_hz {
        for &scheme in &cfg.experiment.schemes {
            let mut c = cfg.clone();
            c.system.bandwidth_hz = b;
            jobs.push(Job { cfg: c, scheme, delta: cfg.system.delta });
        }
    }
    run_jobs(jobs)
}

pub fn power_sweep(cfg: &ScenarioConfig) -> Result<Vec<RatePoint>> {
    let mut jobs = Vec::new();
    for &p in &cfg.experiment.powers_w {
        for &scheme in &cfg.experiment.schemes {
            let mut c = cfg.clone();
            c.system.pmax_w = p;
            jobs.push(Job { cfg: c, scheme, delta: cfg.system.delta });
        }
    }
    run_jobs(jobs)
}

/// Monte-Carlo CSI sweep; repetition `r` draws from stream `r + 1`, shared by
/// all schemes.
pub fn csi_sweep(cfg: &ScenarioConfig) -> Result<Vec<RatePoint>> {
    let mut jobs = Vec::new();
    for &delta in &cfg.experiment.deltas {
        if !(delta >= 0.0) {
            return Err(Error::config(format!("CSI error level must be nonnegative, got {delta}")));
        }
        for &scheme in &cfg.experiment.schemes {
            jobs.push(Job { cfg: cfg.clone(), scheme, delta });
        }
    }
    run_jobs(jobs)
}

/// One optimizer run per configured scheme, traces included.
pub fn convergence(cfg: &ScenarioConfig) -> Result<Vec<ConvergenceRun>> {
    let sys = System::new(cfg)?;
    cfg.experiment
        .schemes
        .par_iter()
        .map(|&scheme| {
            let run = sys.run(scheme, cfg.system.delta, &mut stream_rng(cfg.system.seed, 1))?;
            Ok(ConvergenceRun { scheme, outcome: run.outcome })
        })
        .collect()
}

fn gain_structures(cfg: &ScenarioConfig) -> [RisStructure; 3] {
    [
        RisStructure::FullyConnected,
        RisStructure::SubConnected { s1: cfg.gain.s1, s2: cfg.gain.s2 },
        RisStructure::Conventional,
    ]
}

fn rate_csv(points: &[RatePoint]) -> String {
    let mut s = String::from(
        "scheme,subsurfaces,bandwidth_hz,pmax_w,delta,seed,repetitions,mean_sum_rate_bits,std_sum_rate_bits,mean_iterations,converged_fraction\n",
    );
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            p.scheme,
            p.subsurfaces,
            p.bandwidth_hz,
            p.pmax_w,
            p.delta,
            p.seed,
            p.repetitions,
            p.mean_sum_rate_bits,
            p.std_sum_rate_bits,
            p.mean_iterations,
            p.converged_fraction
        );
    }
    s
}

fn rate_summary(points: &[RatePoint]) -> String {
    let mut s = String::new();
    for p in points {
        let _ = writeln!(
            s,
            "{:<13} S={:<4} B={:.3e} Hz P={} W delta={}: {:.4} +- {:.4} bit/s/Hz ({:.1} iterations)",
            p.scheme.as_str(),
            p.subsurfaces,
            p.bandwidth_hz,
            p.pmax_w,
            p.delta,
            p.mean_sum_rate_bits,
            p.std_sum_rate_bits,
            p.mean_iterations
        );
    }
    s
}

fn gain_summary(points: &[GainPoint]) -> String {
    let mut keys: Vec<(&str, f64)> = Vec::new();
    for p in points {
        if !keys.iter().any(|k| k.0 == p.structure && k.1 == p.bandwidth_hz) {
            keys.push((p.structure, p.bandwidth_hz));
        }
    }
    let mut s = String::new();
    for (structure, b) in keys {
        let curve: Vec<&GainPoint> =
            points.iter().filter(|p| p.structure == structure && p.bandwidth_hz == b).collect();
        let min = curve.iter().map(|p| p.gain).fold(f64::INFINITY, f64::min);
        let edge = curve.first().map_or(f64::NAN, |p| p.gain);
        let _ = writeln!(s, "{structure:<13} B={b:.3e} Hz: edge gain {edge:.6}, minimum gain {min:.6}");
    }
    s
}

fn convergence_csv(runs: &[ConvergenceRun]) -> String {
    let mut s = String::from("scheme,");
    let mut first = true;
    for run in runs {
        let mut buf = Vec::new();
        write_trace_csv(&run.outcome.state.trace, &mut buf).expect("writing to memory");
        let text = String::from_utf8(buf).expect("trace CSV is UTF-8");
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if first {
            s.push_str(header);
            s.push('\n');
            first = false;
        }
        for line in lines {
            let _ = writeln!(s, "{},{line}", run.scheme);
        }
    }
    if first {
        s.push_str("iteration,ldr_objective,sum_rate_bits,power_used,max_energy_violation\n");
    }
    s
}

fn convergence_summary(runs: &[ConvergenceRun]) -> String {
    let mut s = String::new();
    for run in runs {
        let last = run.outcome.state.trace.last();
        let _ = writeln!(
            s,
            "{:<13} {} iterations (converged: {}), final sum rate {:.4} bit/s/Hz, power {:.6} W",
            run.scheme.as_str(),
            run.outcome.iterations,
            run.outcome.converged,
            last.map_or(f64::NAN, |t| t.sum_rate_bits),
            last.map_or(f64::NAN, |t| t.power_used)
        );
        for w in &run.outcome.warnings {
            let _ = writeln!(s, "  warning: {w}");
        }
    }
    s
}

/// Runs `kind` on a validated configuration. Results depend only on the
/// configuration (seed included).
pub fn run_experiment(kind: ExperimentKind, cfg: &ScenarioConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let (data, csv, summary) = match kind {
        ExperimentKind::GainBandwidth => {
            let pts = sweep_gain(cfg, &[RisStructure::Conventional], &cfg.experiment.bandwidths_hz)?;
            let mut buf = Vec::new();
            write_gain_csv(&pts, &mut buf)?;
            let summary = gain_summary(&pts);
            (ExperimentData::Gain(pts), String::from_utf8(buf).expect("CSV is UTF-8"), summary)
        }
        ExperimentKind::GainStructure => {
            let pts = sweep_gain(cfg, &gain_structures(cfg), &[cfg.system.bandwidth_hz])?;
            let mut buf = Vec::new();
            write_gain_csv(&pts, &mut buf)?;
            let summary = gain_summary(&pts);
            (ExperimentData::Gain(pts), String::from_utf8(buf).expect("CSV is UTF-8"), summary)
        }
        ExperimentKind::Convergence => {
            let runs = convergence(cfg)?;
            let (csv, summary) = (convergence_csv(&runs), convergence_summary(&runs));
            (ExperimentData::Convergence(runs), csv, summary)
        }
        ExperimentKind::TdSweep | ExperimentKind::BandwidthSweep | ExperimentKind::PowerSweep | ExperimentKind::CsiSweep => {
            let pts = match kind {
                ExperimentKind::TdSweep => td_sweep(cfg)?,
                ExperimentKind::BandwidthSweep => bandwidth_sweep(cfg)?,
                ExperimentKind::PowerSweep => power_sweep(cfg)?,
                _ => csi_sweep(cfg)?,
            };
            let (csv, summary) = (rate_csv(&pts), rate_summary(&pts));
            (ExperimentData::Rates(pts), csv, summary)
        }
    };
    Ok(ExperimentOutput { kind, data, csv, summary })
}

fn flatten(prefix: &str, v: &toml::Value, out: &mut Vec<(String, String)>) {
    match v {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Flat `key=value` manifest: experiment, seed, SHA-256 of the resolved
/// configuration, then every resolved configuration value.
pub fn manifest(kind: ExperimentKind, cfg: &ScenarioConfig) -> Result<String> {
    let text = cfg.to_toml_string();
    let hash = hex::encode(Sha256::digest(text.as_bytes()));
    let value: toml::Value = toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut pairs = Vec::new();
    flatten("", &value, &mut pairs);
    let mut s = String::new();
    let _ = writeln!(s, "experiment={kind}");
    let _ = writeln!(s, "seed={}", cfg.system.seed);
    let _ = writeln!(s, "config_sha256={hash}");
    for (k, v) in pairs {
        let _ = writeln!(s, "config.{k}={v}");
    }
    Ok(s)
}

/// Runs `kind` and writes `<kind>.csv`, `manifest.txt` and `summary.txt`
/// into `out`.
pub fn run_to_dir(kind: ExperimentKind, cfg: &ScenarioConfig, out: &Path) -> Result<ExperimentOutput> {
    let result = run_experiment(kind, cfg)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(format!("{kind}.csv")), &result.csv)?;
    std::fs::write(out.join("manifest.txt"), manifest(kind, cfg)?)?;
    std::fs::write(out.join("summary.txt"), format!("experiment: {kind}\n{}", result.summary))?;
    Ok(result)
}
