//! Alternating fractional-programming sum-rate optimizer.
//!
//! Every user's effective channel `h_hat_{m,k} = hbar_{m,k} F_m` is linear in
//! the amplitudes of its side: `h_hat_{m,k} = beta_i^T A_{m,k}` where the rows
//! of `A_{m,k}` stack `h_{r,m,k}[n] Phi_{i,r,m}[n] (G_{r,m} F_m)[n, :]` over
//! RISs. The optimizer only touches `A`, `F_m^H F_m` and the noise powers.
//!
//! One outer iteration updates, in order, the Lagrangian dual variables `rho`,
//! the quadratic-transform variables `varpi`, the digital beamformers `d`
//! (a QCQP), the variables `eps`, and the amplitudes `beta` (ADMM). The
//! Lagrangian-dual objective is nondecreasing across each of these updates.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::bs_frontend::BsFrontend;
use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::scenario::{Side, SolverKnobs, SubcarrierGrid};
use crate::solvers::{solve_amplitudes_admm, solve_qcqp, AdmmKnobs, AmplitudeProblem, QcqpBlock, QcqpProblem};
use crate::star_ris::RisState;
use crate::C64;

/// `[m][k]` effective channels, each of length `Nrf`.
pub type Channels = Vec<Vec<DVector<C64>>>;
/// `[m][k]` digital beamformers.
pub type Beamformers = Vec<Vec<DVector<C64>>>;

/// The parts of the system the optimizer sees.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    /// `[m][k]`, `(R N_RIS) x Nrf`.
    pub a: Vec<Vec<DMatrix<C64>>>,
    pub sides: Vec<Side>,
    /// `[m]`, `F_m^H F_m`.
    pub chat: Vec<DMatrix<C64>>,
    /// `[m][k]` noise powers.
    pub sigma2: Vec<Vec<f64>>,
    pub pmax: f64,
}

impl Cascade {
    /// Builds the cascade from channels and fixed hardware designs. With
    /// `factors`, the path of user `k` through RIS `r` on subcarrier `m` is
    /// scaled by `factors[m][k][r]`.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        ch: &ChannelSet,
        ris: &RisState,
        fe: &BsFrontend,
        grid: &SubcarrierGrid,
        sides: &[Side],
        sigma2: f64,
        pmax: f64,
        factors: Option<&[Vec<DVector<C64>>]>,
    ) -> Result<Self> {
        let (n, r_count, nrf) = (ch.n_ris, ch.num_ris(), fe.nrf());
        if ris.num_ris() != r_count || ris.n_ris() != n || sides.len() != ch.num_users() {
            return Err(Error::InvariantViolation("cascade inputs disagree on dimensions".into()));
        }
        let mut a = Vec::with_capacity(grid.len());
        let mut chat = Vec::with_capacity(grid.len());
        for (m, &f) in grid.frequencies.iter().enumerate() {
            let fm = fe.at(f);
            chat.push(fm.adjoint() * &fm);
            let gf: Vec<DMatrix<C64>> = (0..r_count).map(|r| &ch.g[r][m] * &fm).collect();
            let phis: Vec<[DVector<C64>; 2]> = (0..r_count)
                .map(|r| {
                    Ok([
                        ris.compose_phase_matrix(r, Side::Reflection, f)?,
                        ris.compose_phase_matrix(r, Side::Transmission, f)?,
                    ])
                })
                .collect::<Result<_>>()?;
            let mut a_m = Vec::with_capacity(sides.len());
            for (k, side) in sides.iter().enumerate() {
                let mut ak = DMatrix::zeros(r_count * n, nrf);
                for r in 0..r_count {
                    let w = ch.h[r][m][k].component_mul(&phis[r][side.index()]);
                    for i in 0..n {
                        for c in 0..nrf {
                            ak[(r * n + i, c)] = w[i] * gf[r][(i, c)];
                        }
                    }
                }
                if let Some(fac) = factors {
                    for r in 0..r_count {
                        let s = fac[m][k][r];
                        ak.rows_mut(r * n, n).iter_mut().for_each(|x| *x *= s);
                    }
                }
                a_m.push(ak);
            }
            a.push(a_m);
        }
        Ok(Cascade {
            a,
            sides: sides.to_vec(),
            chat,
            sigma2: vec![vec![sigma2; sides.len()]; grid.len()],
            pmax,
        })
    }

    pub fn num_subcarriers(&self) -> usize {
        self.a.len()
    }

    pub fn num_users(&self) -> usize {
        self.sides.len()
    }

    pub fn nrf(&self) -> usize {
        self.chat.first().map_or(0, |c| c.nrows())
    }

    pub fn beta_len(&self) -> usize {
        self.a.first().and_then(|r| r.first()).map_or(0, |a| a.nrows())
    }

    pub fn effective(&self, beta: &[DVector<f64>; 2]) -> Channels {
        let bc = [beta[0].map(C64::from), beta[1].map(C64::from)];
        self.a
            .iter()
            .map(|a_m| {
                a_m.iter()
                    .zip(&self.sides)
                    .map(|(a, side)| a.tr_mul(&bc[side.index()]))
                    .collect()
            })
            .collect()
    }

    pub fn power(&self, d: &Beamformers) -> f64 {
        self.chat
            .iter()
            .zip(d)
            .map(|(c, dm)| dm.iter().map(|x| x.dotc(&(c * x)).re).sum::<f64>())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub ldr_objective: f64,
    pub sum_rate_bits: f64,
    pub power_used: f64,
    pub max_energy_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpState {
    pub d: Beamformers,
    pub rho: Vec<Vec<f64>>,
    pub varpi: Vec<Vec<C64>>,
    pub eps: Vec<Vec<C64>>,
    pub beta: [DVector<f64>; 2],
    pub trace: Vec<TraceRow>,
}

fn signal(hhat: &Channels, d: &Beamformers, m: usize, k: usize, j: usize) -> C64 {
    hhat[m][k].dot(&d[m][j])
}

/// `sum_j |h_hat_{m,k} d_{m,j}|^2 + sigma^2`, interference included.
fn total_power(hhat: &Channels, d: &Beamformers, sigma2: f64, m: usize, k: usize) -> f64 {
    (0..d[m].len()).map(|j| signal(hhat, d, m, k, j).norm_sqr()).sum::<f64>() + sigma2
}

pub fn sinr(hhat: &Channels, d: &Beamformers, sigma2: f64, m: usize, k: usize) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::config("noise power must be positive"));
    }
    let s = signal(hhat, d, m, k, k).norm_sqr();
    Ok(s / (total_power(hhat, d, sigma2, m, k) - s))
}

fn for_each_mk<T>(hhat: &Channels, mut f: impl FnMut(usize, usize) -> T) -> Vec<Vec<T>> {
    (0..hhat.len()).map(|m| (0..hhat[m].len()).map(|k| f(m, k)).collect()).collect()
}

/// `sum_{m,k} log2(1 + SINR)`.
pub fn sum_rate(hhat: &Channels, d: &Beamformers, sigma2: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for m in 0..hhat.len() {
        for k in 0..hhat[m].len() {
            total += (1.0 + sinr(hhat, d, sigma2[m][k], m, k)?).log2();
        }
    }
    Ok(total)
}

/// `sum [ln(1 + rho) - rho + (1 + rho) f]` with
/// `f = |h_hat d_k|^2 / (sum_j |h_hat d_j|^2 + sigma^2)`.
pub fn ldr_objective(hhat: &Channels, d: &Beamformers, rho: &[Vec<f64>], sigma2: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for m in 0..hhat.len() {
        for k in 0..hhat[m].len() {
            let r = rho[m][k];
            let f = signal(hhat, d, m, k, k).norm_sqr() / total_power(hhat, d, sigma2[m][k], m, k);
            total += (1.0 + r).ln() - r + (1.0 + r) * f;
        }
    }
    total
}

pub fn update_rho(hhat: &Channels, d: &Beamformers, sigma2: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    for_each_mk(hhat, |m, k| sinr(hhat, d, sigma2[m][k], m, k)).into_iter().map(|row| row.into_iter().collect()).collect()
}

/// `sqrt(1 + rho) h_hat d_k / (sum_j |h_hat d_j|^2 + sigma^2)`.
pub fn update_varpi(hhat: &Channels, d: &Beamformers, rho: &[Vec<f64>], sigma2: &[Vec<f64>]) -> Vec<Vec<C64>> {
    for_each_mk(hhat, |m, k| {
        signal(hhat, d, m, k, k) * (1.0 + rho[m][k]).sqrt() / total_power(hhat, d, sigma2[m][k], m, k)
    })
}

/// The amplitude step's auxiliary variable has the same closed form as
/// `varpi`, evaluated at the current beamformers.
pub fn update_epsilon(hhat: &Channels, d: &Beamformers, rho: &[Vec<f64>], sigma2: &[Vec<f64>]) -> Vec<Vec<C64>> {
    update_varpi(hhat, d, rho, sigma2)
}

/// Quadratic-transform surrogate
/// `sum 2 sqrt(1 + rho) Re(w^* h_hat d_k) - |w|^2 (sum_j |h_hat d_j|^2 + sigma^2)`.
pub fn quadratic_surrogate(
    hhat: &Channels,
    d: &Beamformers,
    rho: &[Vec<f64>],
    w: &[Vec<C64>],
    sigma2: &[Vec<f64>],
) -> f64 {
    let mut total = 0.0;
    for m in 0..hhat.len() {
        for k in 0..hhat[m].len() {
            let s = signal(hhat, d, m, k, k);
            total += 2.0 * (1.0 + rho[m][k]).sqrt() * (w[m][k].conj() * s).re
                - w[m][k].norm_sqr() * total_power(hhat, d, sigma2[m][k], m, k);
        }
    }
    total
}

/// `(problem, Y)` with the surrogate equal to `-d^H E d + 2 Re(v^H d) - Y`.
/// Blocks are ordered `(m, k)`.
pub fn assemble_qcqp(
    ctx: &Cascade,
    hhat: &Channels,
    rho: &[Vec<f64>],
    varpi: &[Vec<C64>],
) -> (QcqpProblem, f64) {
    let nrf = ctx.nrf();
    let mut blocks = Vec::new();
    let mut y = 0.0;
    for m in 0..hhat.len() {
        let mut e = DMatrix::<C64>::zeros(nrf, nrf);
        for k in 0..hhat[m].len() {
            let hc = hhat[m][k].conjugate();
            e += &hc * hhat[m][k].transpose() * C64::from(varpi[m][k].norm_sqr());
            y += varpi[m][k].norm_sqr() * ctx.sigma2[m][k];
        }
        let e = (&e + e.adjoint()) * C64::from(0.5);
        let c = (&ctx.chat[m] + ctx.chat[m].adjoint()) * C64::from(0.5);
        for k in 0..hhat[m].len() {
            let v = hhat[m][k].conjugate() * (varpi[m][k] * (1.0 + rho[m][k]).sqrt());
            blocks.push(QcqpBlock { e: e.clone(), c: c.clone(), v });
        }
    }
    (QcqpProblem { blocks, pmax: ctx.pmax }, y)
}

/// `(problem, Omega)` with the surrogate in the amplitudes equal to
/// `-sum_i (b_i^T D_i b_i - 2 u_i^T b_i) - Omega` for real `b`.
pub fn assemble_amplitude_problem(
    ctx: &Cascade,
    d: &Beamformers,
    rho: &[Vec<f64>],
    eps: &[Vec<C64>],
) -> (AmplitudeProblem, f64) {
    let len = ctx.beta_len();
    let mut delta = [DMatrix::<f64>::zeros(len, len), DMatrix::<f64>::zeros(len, len)];
    let mut upsilon = [DVector::<f64>::zeros(len), DVector::<f64>::zeros(len)];
    let mut omega = 0.0;
    for m in 0..ctx.num_subcarriers() {
        for (k, side) in ctx.sides.iter().enumerate() {
            let i = side.index();
            let a = &ctx.a[m][k];
            let e = eps[m][k].conj();
            for j in 0..d[m].len() {
                let q = (a * &d[m][j]) * e;
                let (qr, qi) = (q.map(|x| x.re), q.map(|x| x.im));
                delta[i].ger(1.0, &qr, &qr, 1.0);
                delta[i].ger(1.0, &qi, &qi, 1.0);
                if j == k {
                    upsilon[i].axpy((1.0 + rho[m][k]).sqrt(), &qr, 1.0);
                }
            }
            omega += eps[m][k].norm_sqr() * ctx.sigma2[m][k];
        }
    }
    for dm in delta.iter_mut() {
        *dm = (&*dm + dm.transpose()) * 0.5;
    }
    (AmplitudeProblem { delta, upsilon }, omega)
}

/// Matched-filter start with power `Pmax / (M K)` per `(m, k)`; amplitudes
/// `beta` are taken as given.
pub fn initialize(ctx: &Cascade, beta: [DVector<f64>; 2]) -> FpState {
    let hhat = ctx.effective(&beta);
    let share = ctx.pmax / (ctx.num_subcarriers() * ctx.num_users()) as f64;
    let d: Beamformers = for_each_mk(&hhat, |m, k| {
        let x = hhat[m][k].conjugate();
        let p = x.dotc(&(&ctx.chat[m] * &x)).re;
        if p > 0.0 {
            x * C64::from((share / p).sqrt())
        } else {
            x
        }
    });
    let zeros_r = for_each_mk(&hhat, |_, _| 0.0);
    let zeros_c = for_each_mk(&hhat, |_, _| C64::new(0.0, 0.0));
    FpState { d, rho: zeros_r, varpi: zeros_c.clone(), eps: zeros_c, beta, trace: Vec::new() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpOutcome {
    pub state: FpState,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each of the five block updates, per iteration.
    pub block_objectives: Vec<[f64; 5]>,
    /// Non-fatal subproblem diagnostics.
    pub warnings: Vec<String>,
}

fn max_energy_violation(beta: &[DVector<f64>; 2]) -> f64 {
    beta[0].iter().zip(beta[1].iter()).map(|(a, b)| a * a + b * b - 1.0).fold(0.0, f64::max)
}

fn trace_row(iteration: usize, ldr: f64, truth: &Cascade, st: &FpState) -> Result<TraceRow> {
    Ok(TraceRow {
        iteration,
        ldr_objective: ldr,
        sum_rate_bits: sum_rate(&truth.effective(&st.beta), &st.d, &truth.sigma2)?,
        power_used: truth.power(&st.d),
        max_energy_violation: max_energy_violation(&st.beta),
    })
}

/// Runs the alternating optimization. `design` is the channel the optimizer
/// believes in; reported sum rates are evaluated on `truth`.
pub fn optimize(design: &Cascade, truth: &Cascade, knobs: &SolverKnobs, init: FpState) -> Result<FpOutcome> {
    let admm = AdmmKnobs { penalty: knobs.admm_penalty, tol: knobs.admm_tol, max_iter: knobs.admm_max_iter };
    let sigma2 = &design.sigma2;
    let mut st = init;
    let mut hhat = design.effective(&st.beta);
    st.rho = update_rho(&hhat, &st.d, sigma2)?;
    let mut last = ldr_objective(&hhat, &st.d, &st.rho, sigma2);
    st.trace.push(trace_row(0, last, truth, &st)?);
    let mut blocks = Vec::new();
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=knobs.max_iter {
        iterations = it;
        let mut rec = [0.0; 5];
        let mut prev = last;
        let check = |value: f64, block: &str, prev: &mut f64| -> Result<()> {
            if value < *prev - 1e-8 * prev.abs().max(1e-300) {
                return Err(Error::InvariantViolation(format!(
                    "iteration {it}: objective fell from {prev} to {value} in the {block} update"
                )));
            }
            *prev = value;
            Ok(())
        };

        st.rho = update_rho(&hhat, &st.d, sigma2)?;
        rec[0] = ldr_objective(&hhat, &st.d, &st.rho, sigma2);
        check(rec[0], "rho", &mut prev)?;

        st.varpi = update_varpi(&hhat, &st.d, &st.rho, sigma2);
        rec[1] = ldr_objective(&hhat, &st.d, &st.rho, sigma2);
        check(rec[1], "varpi", &mut prev)?;

        let (qp, _) = assemble_qcqp(design, &hhat, &st.rho, &st.varpi);
        let sol = solve_qcqp(&qp, knobs.qcqp_tol)
            .map_err(|e| Error::SolverFailure(format!("iteration {it}, beamformer step: {e}")))?;
        let nk = design.num_users();
        let cand: Beamformers = sol.d.chunks(nk).map(|c| c.to_vec()).collect();
        let old = quadratic_surrogate(&hhat, &st.d, &st.rho, &st.varpi, sigma2);
        let new = quadratic_surrogate(&hhat, &cand, &st.rho, &st.varpi, sigma2);
        if new >= old {
            st.d = cand;
        }
        rec[2] = ldr_objective(&hhat, &st.d, &st.rho, sigma2);
        check(rec[2], "beamformer", &mut prev)?;

        st.eps = update_epsilon(&hhat, &st.d, &st.rho, sigma2);
        rec[3] = ldr_objective(&hhat, &st.d, &st.rho, sigma2);
        check(rec[3], "eps", &mut prev)?;

        let (ap, _) = assemble_amplitude_problem(design, &st.d, &st.rho, &st.eps);
        let out = solve_amplitudes_admm(&ap, &admm, Some(&st.beta))
            .map_err(|e| Error::SolverFailure(format!("iteration {it}, amplitude step: {e}")))?;
        if let Some(w) = out.warning {
            warnings.push(format!("iteration {it}: {w}"));
        }
        if ap.objective(&out.beta) <= ap.objective(&st.beta) {
            st.beta = out.beta;
            hhat = design.effective(&st.beta);
        }
        rec[4] = ldr_objective(&hhat, &st.d, &st.rho, sigma2);
        check(rec[4], "amplitude", &mut prev)?;

        blocks.push(rec);
        st.trace.push(trace_row(it, rec[4], truth, &st)?);
        let rel = (rec[4] - last).abs() / last.abs().max(1e-300);
        last = rec[4];
        if rel < knobs.tol {
            converged = true;
            break;
        }
    }
    Ok(FpOutcome { state: st, iterations, converged, block_objectives: blocks, warnings })
}

/// `iteration,ldr_objective,sum_rate_bits,power_used,max_energy_violation`.
pub fn write_trace_csv<W: Write>(trace: &[TraceRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "iteration,ldr_objective,sum_rate_bits,power_used,max_energy_violation")?;
    for t in trace {
        writeln!(
            w,
            "{},{},{},{},{}",
            t.iteration, t.ldr_objective, t.sum_rate_bits, t.power_used, t.max_energy_violation
        )?;
    }
    Ok(())
}
