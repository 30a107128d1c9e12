//! Multiple-antenna incremental redundancy with transform-coded storage.
//!
//! A stored packet is rotated into the eigenbasis of its received covariance
//! `I + (SNR/Nt) H H^H` and each component is quantized independently. The
//! per-packet bit budget is spread over the components by water-filling.

mod eig;

pub use eig::{hermitian_eig, CMatrix};

use num_complex::Complex64;
use rand::Rng;

use crate::engine::{run_sessions, Purpose, RngContract};
use crate::error::{Error, Result};
use crate::gaussian::RateTrajectory;
use crate::model::{sample_gain, throughput_from_pe, PeCurve, ThroughputResult};

const BISECTION_STEPS: usize = 200;

/// How the stored-packet bit budget is spread over the eigen-components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Allocation {
    Waterfill,
    /// Same scaling `A = kI` on every receive dimension.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MimoConfig {
    pub nt: usize,
    pub nr: usize,
    /// Per-receive-antenna SNR, linear.
    pub snr: f64,
    pub rate: f64,
    pub buffer_c: f64,
    pub n_max: usize,
    pub trials: u64,
    pub seed: u64,
    pub stream: u64,
    pub allocation: Allocation,
}

impl Default for MimoConfig {
    fn default() -> Self {
        MimoConfig {
            nt: 2,
            nr: 2,
            snr: 1.0,
            rate: 5.0,
            buffer_c: 5.0,
            n_max: 10,
            trials: 10_000,
            seed: 0,
            stream: 0,
            allocation: Allocation::Waterfill,
        }
    }
}

impl MimoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.nt == 0 || self.nr == 0 {
            return bad("antenna counts must be at least 1");
        }
        if !(self.snr >= 0.0) || !self.snr.is_finite() {
            return bad("snr must be finite and non-negative");
        }
        if !(self.rate >= 0.0) || !self.rate.is_finite() {
            return bad("rate must be finite and non-negative");
        }
        if !(self.buffer_c >= 0.0) {
            return bad("buffer_c must be non-negative");
        }
        if self.n_max == 0 {
            return bad("n_max must be at least 1");
        }
        if self.trials == 0 {
            return bad("trials must be positive");
        }
        Ok(())
    }
}

/// `nr x nt` channel matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub nr: usize,
    pub nt: usize,
    pub entries: Vec<Complex64>,
}

impl ChannelMatrix {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, nr: usize, nt: usize) -> ChannelMatrix {
        ChannelMatrix {
            nr,
            nt,
            entries: (0..nr * nt).map(|_| sample_gain(rng)).collect(),
        }
    }

    /// `I + (snr/nt) H H^H`.
    pub fn covariance(&self, snr: f64) -> CMatrix {
        let mut out = CMatrix::identity(self.nr);
        let w = snr / self.nt as f64;
        for i in 0..self.nr {
            for j in 0..self.nr {
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..self.nt {
                    s += self.entries[i * self.nt + k] * self.entries[j * self.nt + k].conj();
                }
                out[(i, j)] += s * w;
            }
        }
        out
    }
}

/// Eigen-decomposition of the received covariance. Eigenvalues are clamped
/// to at least 1, which rounding can otherwise violate.
pub fn channel_eig(h: &ChannelMatrix, snr: f64) -> Result<(Vec<f64>, CMatrix)> {
    let (vals, basis) = hermitian_eig(&h.covariance(snr))?;
    Ok((vals.into_iter().map(|v| v.max(1.0)).collect(), basis))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformAllocation {
    pub eigenvalues: Vec<f64>,
    pub gains: Vec<f64>,
    /// Lagrange multiplier; `NaN` when the budget is zero and any value works.
    pub mu: f64,
    pub budget: f64,
}

impl TransformAllocation {
    /// Bits spent: `sum log2(1 + alpha_l lambda_l)`.
    pub fn spent(&self) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.gains)
            .map(|(l, a)| (a * l).ln_1p())
            .sum::<f64>()
            / std::f64::consts::LN_2
    }

    /// Information the stored packet retains about the transmitted block.
    pub fn stored_rate(&self) -> f64 {
        stored_rate(&self.eigenvalues, &self.gains)
    }
}

/// `sum_l log2(1 + alpha_l lambda_l) - log2(1 + alpha_l)`.
pub fn stored_rate(eigenvalues: &[f64], gains: &[f64]) -> f64 {
    eigenvalues
        .iter()
        .zip(gains)
        .map(|(l, a)| {
            if a.is_infinite() {
                l.ln()
            } else {
                (a * l).ln_1p() - a.ln_1p()
            }
        })
        .sum::<f64>()
        / std::f64::consts::LN_2
}

fn gains_for(mu: f64, eigenvalues: &[f64]) -> Vec<f64> {
    eigenvalues
        .iter()
        .map(|l| ((1.0 - 1.0 / l) / mu - 1.0).max(0.0))
        .collect()
}

fn spent(eigenvalues: &[f64], gains: &[f64]) -> f64 {
    eigenvalues
        .iter()
        .zip(gains)
        .map(|(l, a)| (a * l).ln_1p())
        .sum::<f64>()
        / std::f64::consts::LN_2
}

/// Water-filling allocation of `budget` bits over components with the given
/// eigenvalues (each at least 1).
pub fn waterfill(eigenvalues: &[f64], budget: f64) -> Result<TransformAllocation> {
    if !(budget >= 0.0) || eigenvalues.iter().any(|&l| !(l >= 1.0) || !l.is_finite()) {
        return Err(Error::Domain(
            "waterfill needs budget >= 0 and eigenvalues >= 1".into(),
        ));
    }
    let zero = || TransformAllocation {
        eigenvalues: eigenvalues.to_vec(),
        gains: vec![0.0; eigenvalues.len()],
        mu: f64::NAN,
        budget,
    };
    let lambda_max = eigenvalues.iter().cloned().fold(1.0, f64::max);
    if budget == 0.0 || lambda_max == 1.0 {
        // Noise-only components carry nothing worth storing.
        return Ok(zero());
    }
    if budget.is_infinite() {
        return Ok(TransformAllocation {
            gains: eigenvalues
                .iter()
                .map(|&l| if l > 1.0 { f64::INFINITY } else { 0.0 })
                .collect(),
            mu: 0.0,
            ..zero()
        });
    }
    // Spending decreases in mu; the upper end spends nothing.
    let mut hi = 1.0 - 1.0 / lambda_max;
    let mut lo = hi;
    let mut steps = 0;
    while spent(eigenvalues, &gains_for(lo, eigenvalues)) < budget {
        lo *= 0.5;
        steps += 1;
        if steps > BISECTION_STEPS || lo < f64::MIN_POSITIVE {
            return Err(Error::Numerical(format!(
                "no multiplier meets budget {budget}"
            )));
        }
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if spent(eigenvalues, &gains_for(mid, eigenvalues)) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    let mu = 0.5 * (lo + hi);
    let mut gains = gains_for(mu, eigenvalues);
    // The multiplier is only resolved to 1e-12; solve the budget exactly by
    // scaling the spend of the active components.
    polish(eigenvalues, &mut gains, budget)?;
    Ok(TransformAllocation {
        eigenvalues: eigenvalues.to_vec(),
        gains,
        mu,
        budget,
    })
}

/// Adjusts the active gains along the water-filling family so the budget is
/// met to rounding. The family is `alpha_l(t) = (c_l / mu(t)) - 1` with the
/// active set fixed, which is monotone in `1/mu`.
fn polish(eigenvalues: &[f64], gains: &mut [f64], budget: f64) -> Result<()> {
    let active: Vec<usize> = (0..gains.len()).filter(|&l| gains[l] > 0.0).collect();
    if active.is_empty() {
        return Ok(());
    }
    let c: Vec<f64> = active.iter().map(|&l| 1.0 - 1.0 / eigenvalues[l]).collect();
    let eval = |inv_mu: f64| -> f64 {
        active
            .iter()
            .zip(&c)
            .map(|(&l, cl)| ((cl * inv_mu - 1.0).max(0.0) * eigenvalues[l]).ln_1p())
            .sum::<f64>()
            / std::f64::consts::LN_2
    };
    let a0 = active[0];
    let mut x = (gains[a0] + 1.0) / c[0];
    for _ in 0..50 {
        let f = eval(x) - budget;
        if f.abs() <= 1e-13 * budget.max(1.0) {
            break;
        }
        let d: f64 = active
            .iter()
            .zip(&c)
            .map(|(&l, cl)| {
                let a = (cl * x - 1.0).max(0.0);
                cl * eigenvalues[l] / (1.0 + a * eigenvalues[l])
            })
            .sum::<f64>()
            / std::f64::consts::LN_2;
        if d <= 0.0 {
            return Err(Error::Numerical(
                "degenerate water-filling derivative".into(),
            ));
        }
        x -= f / d;
    }
    for (&l, cl) in active.iter().zip(&c) {
        gains[l] = (cl * x - 1.0).max(0.0);
    }
    Ok(())
}

/// Baseline allocation `A = kI` that meets the same budget.
pub fn identity_allocation(eigenvalues: &[f64], budget: f64) -> Result<TransformAllocation> {
    if !(budget >= 0.0) || eigenvalues.iter().any(|&l| !(l >= 1.0)) {
        return Err(Error::Domain(
            "identity allocation needs budget >= 0 and eigenvalues >= 1".into(),
        ));
    }
    let uniform = |k: f64| TransformAllocation {
        eigenvalues: eigenvalues.to_vec(),
        gains: vec![k; eigenvalues.len()],
        mu: f64::NAN,
        budget,
    };
    if budget == 0.0 {
        return Ok(uniform(0.0));
    }
    if budget.is_infinite() {
        return Ok(uniform(f64::INFINITY));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while spent(eigenvalues, &vec![hi; eigenvalues.len()]) < budget {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Numerical("identity scaling diverged".into()));
        }
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if spent(eigenvalues, &vec![mid; eigenvalues.len()]) > budget {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(uniform(0.5 * (lo + hi)))
}

fn allocate(eigenvalues: &[f64], budget: f64, how: Allocation) -> Result<TransformAllocation> {
    match how {
        Allocation::Waterfill => waterfill(eigenvalues, budget),
        Allocation::Identity => identity_allocation(eigenvalues, budget),
    }
}

fn log2_det_from_eigs(eigenvalues: &[f64]) -> f64 {
    eigenvalues.iter().map(|l| l.log2()).sum()
}

/// Achievable rate at every attempt when all earlier packets are stored and
/// share the buffer equally.
pub fn mimo_ir_trajectory(draws: &[ChannelMatrix], cfg: &MimoConfig) -> Result<RateTrajectory> {
    let n_max = cfg.n_max.min(draws.len());
    let eigs: Vec<Vec<f64>> = draws[..n_max]
        .iter()
        .map(|h| channel_eig(h, cfg.snr).map(|e| e.0))
        .collect::<Result<_>>()?;
    let mut rates = Vec::with_capacity(n_max);
    for n in 0..n_max {
        let mut r = log2_det_from_eigs(&eigs[n]);
        if n > 0 && cfg.buffer_c > 0.0 {
            let budget = cfg.buffer_c / n as f64;
            for e in &eigs[..n] {
                r += allocate(e, budget, cfg.allocation)?.stored_rate();
            }
        }
        rates.push(r);
    }
    Ok(RateTrajectory {
        rates,
        stored_mask: vec![cfg.buffer_c > 0.0; n_max],
    })
}

/// Channel matrices of one session. Entries are drawn row by row from the
/// same stream the scalar schemes use, so a 1x1 session sees the scalar
/// gains.
pub fn mimo_session_draw(cfg: &MimoConfig, session: u64) -> Vec<ChannelMatrix> {
    let mut rng = RngContract::new(cfg.seed).stream(cfg.stream, session, Purpose::Channel);
    (0..cfg.n_max)
        .map(|_| ChannelMatrix::sample(&mut rng, cfg.nr, cfg.nt))
        .collect()
}

pub fn estimate_pe_mimo(cfg: &MimoConfig, workers: usize) -> Result<PeCurve> {
    cfg.validate()?;
    let failed = std::sync::Mutex::new(None);
    let acc = run_sessions(
        cfg.trials,
        cfg.n_max,
        1,
        workers,
        |s, out| match mimo_ir_trajectory(&mimo_session_draw(cfg, s), cfg) {
            Ok(t) => out[0] = t.first_success(cfg.rate),
            Err(e) => {
                failed.lock().expect("error slot").get_or_insert(e);
            }
        },
    );
    if let Some(e) = failed.into_inner().expect("error slot") {
        return Err(e);
    }
    Ok(acc.pe_curve(0))
}

pub fn mimo_throughput(cfg: &MimoConfig, workers: usize) -> Result<ThroughputResult> {
    Ok(throughput_from_pe(
        &estimate_pe_mimo(cfg, workers)?,
        cfg.rate,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MimoRow {
    pub snr_db: f64,
    pub nr: usize,
    pub nt: usize,
    pub waterfill: ThroughputResult,
    pub identity: ThroughputResult,
}

impl MimoRow {
    /// Relative throughput gain of water-filling over the identity baseline.
    pub fn gain(&self) -> f64 {
        self.waterfill.throughput / self.identity.throughput - 1.0
    }
}

/// Water-filling and identity throughput under common random numbers.
pub fn compare_allocations(cfg: &MimoConfig, workers: usize) -> Result<MimoRow> {
    let wf = mimo_throughput(
        &MimoConfig {
            allocation: Allocation::Waterfill,
            ..cfg.clone()
        },
        workers,
    )?;
    let id = mimo_throughput(
        &MimoConfig {
            allocation: Allocation::Identity,
            ..cfg.clone()
        },
        workers,
    )?;
    Ok(MimoRow {
        snr_db: crate::model::linear_to_db(cfg.snr),
        nr: cfg.nr,
        nt: cfg.nt,
        waterfill: wf,
        identity: id,
    })
}
