//! BICM over square Gray-labelled QAM with baseband or LLR storage.
//!
//! Achievable rates are sums of bit-channel mutual informations. Baseband
//! quantities go through [`MiTable`]; LLR storage goes through the grid
//! densities of [`grid`], except for single unquantized LLRs, which carry the
//! same information as the observation and reuse the table.

pub mod grid;
pub mod pam;
pub mod table;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::engine::run_sessions;
use crate::error::{Error, Result};
use crate::gaussian::{session_draw, RateTrajectory};
use crate::model::{HarqConfig, Modulation, PeCurve, Scheme, SessionDraw, StorageDomain};
use crate::quantizer::{bb_noise_var, cs_noise_recursion, llr_noise_var, EffectiveNoiseState};

pub use grid::{combined_mi, AttemptLlr};
pub use pam::Pam;
pub use table::{stored_llr_mi, MiTable, StoredLlrTable};

/// Slack below the transmission rate under which an attempt is declared
/// failed from an upper bound alone.
const PRUNE_MARGIN: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub m: u32,
    pub points: Vec<Complex64>,
    /// Gray label of each point; bit `j` (1-based) is bit `m - j` of the label.
    pub labels: Vec<u32>,
}

impl Constellation {
    pub fn new(m: u32) -> Result<Constellation> {
        if !matches!(m, 2 | 4 | 6) {
            return Err(Error::Domain(format!(
                "square QAM needs m in {{2, 4, 6}}, got {m}"
            )));
        }
        let pam = Pam::for_qam(m);
        let h = pam.bits;
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (ki, &xi) in pam.levels.iter().enumerate() {
            for (kq, &xq) in pam.levels.iter().enumerate() {
                points.push(Complex64::new(xi, xq));
                labels.push((pam.labels[ki] << h) | pam.labels[kq]);
            }
        }
        Ok(Constellation { m, points, labels })
    }

    pub fn bit(&self, point: usize, j: usize) -> usize {
        ((self.labels[point] >> (self.m as usize - j)) & 1) as usize
    }

    /// Indices of the points whose bit `j` equals `b`.
    pub fn subset(&self, j: usize, b: usize) -> Vec<usize> {
        (0..self.points.len())
            .filter(|&p| self.bit(p, j) == b)
            .collect()
    }
}

/// LLR of bit `j` (1-based) in bits, positive when the bit is more likely 1.
pub fn compute_llr(y: Complex64, h: Complex64, snr: f64, j: usize, c: &Constellation) -> f64 {
    let a = h * snr.sqrt();
    let metric = |p: usize| -(y - a * c.points[p]).norm_sqr();
    let lse = |b: usize| {
        pam::log_sum_exp(
            (0..c.points.len())
                .filter(move |&p| c.bit(p, j) == b)
                .map(metric),
        )
    };
    (lse(1) - lse(0)) / std::f64::consts::LN_2
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    pub value: f64,
    pub std_error: f64,
}

fn mean_and_se(samples: &[f64]) -> MiEstimate {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    MiEstimate {
        value: mean,
        std_error: (var / n).sqrt(),
    }
}

fn complex_noise<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    Complex64::new(
        rng.sample::<f64, _>(StandardNormal) * s,
        rng.sample::<f64, _>(StandardNormal) * s,
    )
}

/// `I(X(j); Y)` for `Y = a X + N`, `N ~ CN(0, noise_var)`, by Monte Carlo
/// over the exact Gaussian-mixture densities.
pub fn mi_bit_baseband<R: Rng + ?Sized>(
    c: &Constellation,
    j: usize,
    a: Complex64,
    noise_var: f64,
    trials: usize,
    rng: &mut R,
) -> MiEstimate {
    let sets = [c.subset(j, 0), c.subset(j, 1)];
    let log_mix = |y: Complex64, set: &[usize]| {
        pam::log_sum_exp(
            set.iter()
                .map(|&p| -(y - a * c.points[p]).norm_sqr() / noise_var),
        )
    };
    let samples: Vec<f64> = (0..trials)
        .map(|_| {
            let b = rng.random_range(0..2usize);
            let x = c.points[sets[b][rng.random_range(0..sets[b].len())]];
            let y = a * x + complex_noise(rng, noise_var);
            let own = log_mix(y, &sets[b]);
            let other = log_mix(y, &sets[1 - b]);
            (own - pam::log_add(own, other)) / std::f64::consts::LN_2 + 1.0
        })
        .collect();
    mean_and_se(&samples)
}

/// `var(L)` of bit `j` at `snr` and gain `h` from `trials` simulated symbols.
pub fn llr_variance<R: Rng + ?Sized>(
    snr: f64,
    h: Complex64,
    j: usize,
    c: &Constellation,
    trials: usize,
    rng: &mut R,
) -> f64 {
    let a = h * snr.sqrt();
    let samples: Vec<f64> = (0..trials)
        .map(|_| {
            let x = c.points[rng.random_range(0..c.points.len())];
            compute_llr(a * x + complex_noise(rng, 1.0), h, snr, j, c)
        })
        .collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// `I(X(j); L + Q)`, `Q ~ N(0, quant_var)`, from samples of `L` given each bit
/// value. The conditional densities are Gaussian kernel mixtures centred on
/// the samples; the kernel variance adds a Silverman bandwidth so that the
/// estimate stays finite and conservative when `quant_var` is tiny.
pub fn mi_bit_llr<R: Rng + ?Sized>(
    samples: [&[f64]; 2],
    quant_var: f64,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    if samples[0].len() < 2 || samples[1].len() < 2 {
        return Err(Error::Numerical(
            "mi_bit_llr needs at least two samples per bit value".into(),
        ));
    }
    let all: Vec<f64> = samples[0].iter().chain(samples[1]).copied().collect();
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let per_set = samples[0].len().min(samples[1].len()) as f64;
    let h2 = (1.06 * per_set.powf(-0.2)).powi(2) * var;
    let kernel_var = quant_var.max(0.0) + h2.max(1e-6 * var);
    let sd = kernel_var.sqrt();

    let sorted: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let mut v = s.to_vec();
            v.sort_by(|a, b| a.total_cmp(b));
            v
        })
        .collect();
    // Mixture density (up to a common constant) summed over a +-10 sd window.
    let density = |set: &[f64], l: f64| {
        let lo = set.partition_point(|&c| c < l - 10.0 * sd);
        let hi = set.partition_point(|&c| c <= l + 10.0 * sd);
        set[lo..hi]
            .iter()
            .map(|&c| (-(l - c).powi(2) / (2.0 * kernel_var)).exp())
            .sum::<f64>()
            / set.len() as f64
    };
    let mut acc = 0.0;
    let mut count = 0usize;
    for _ in 0..trials {
        let b = rng.random_range(0..2usize);
        let src = samples[b];
        let l = src[rng.random_range(0..src.len())] + rng.sample::<f64, _>(StandardNormal) * sd;
        let own = density(&sorted[b], l);
        let other = density(&sorted[1 - b], l);
        if own > 0.0 {
            acc += (2.0 * own / (own + other)).log2();
            count += 1;
        }
    }
    Ok((acc / count.max(1) as f64).clamp(0.0, 1.0))
}

/// Sequential evaluation of the achievable rate of one BICM session.
///
/// `step` must be called for attempts `1, 2, ...` in order; it updates the
/// buffer state as if every earlier attempt failed.
struct Evaluator<'a> {
    cfg: &'a HarqConfig,
    table: std::sync::Arc<MiTable>,
    gains: Vec<f64>,
    /// Lazily built per-attempt LLR descriptions.
    attempts: Vec<Option<AttemptLlr>>,
    /// Chase combine-and-store state: baseband recursion, or the attempts folded
    /// into the stored LLR with its accumulated noise per bit position.
    cs_state: EffectiveNoiseState,
    cs_llr: Option<(Vec<usize>, Vec<f64>)>,
    next: usize,
}

impl<'a> Evaluator<'a> {
    fn new(cfg: &'a HarqConfig, gains: Vec<f64>) -> Self {
        let m = match cfg.modulation {
            Modulation::Qam { bits } => bits,
            Modulation::Gaussian => unreachable!("BICM evaluator needs QAM"),
        };
        let n = gains.len();
        Evaluator {
            cfg,
            table: MiTable::get(m),
            gains,
            attempts: vec![None; n],
            cs_state: EffectiveNoiseState::EMPTY,
            cs_llr: None,
            next: 0,
        }
    }

    fn m(&self) -> f64 {
        self.table.m as f64
    }

    fn attempt(&mut self, i: usize) -> &AttemptLlr {
        if self.attempts[i].is_none() {
            let a = (self.cfg.snr * self.gains[i]).sqrt();
            self.attempts[i] = Some(AttemptLlr::new(self.table.pam(), a));
        }
        self.attempts[i].as_ref().expect("attempt built")
    }

    /// Upper bound on any scheme's rate: all attempts combined without
    /// quantization.
    fn chase_bound(&self, n: usize) -> f64 {
        let g: f64 = self.gains[..=n].iter().sum();
        self.table.symbol_mi(self.cfg.snr * g)
    }

    fn ir_bound(&self, n: usize) -> f64 {
        self.gains[..=n]
            .iter()
            .map(|&g| self.table.symbol_mi(self.cfg.snr * g))
            .sum()
    }

    /// Rate at the next attempt. With `prune_below`, attempts whose upper
    /// bound is clearly below it return the bound instead of the exact rate.
    fn step(&mut self, prune_below: Option<f64>) -> f64 {
        let n = self.next;
        self.next += 1;
        let cfg = self.cfg;
        let snr = cfg.snr;
        let g = self.gains.clone();
        let current = self.table.symbol_mi(snr * g[n]);
        let prune = |bound: f64| prune_below.is_some_and(|r| bound < r - PRUNE_MARGIN);
        // Per-stored-packet allocation in bits per symbol for S&C and IR.
        let alloc = if n == 0 { 0.0 } else { cfg.buffer_c / n as f64 };

        match (cfg.scheme, cfg.domain) {
            (Scheme::Ti, _) => current,
            (_, _) if n == 0 => {
                if cfg.scheme == Scheme::CcCs {
                    self.fold_cs(0);
                }
                current
            }
            (Scheme::CcSc, StorageDomain::Baseband) => {
                let vars: Option<Vec<f64>> =
                    (0..n).map(|i| bb_noise_var(snr * g[i], alloc)).collect();
                match vars {
                    None => current,
                    Some(v) => {
                        let total: f64 = g[..=n].iter().sum();
                        let noise = g[n] + (0..n).map(|i| g[i] * (1.0 + v[i])).sum::<f64>();
                        self.table.symbol_mi(snr * total * total / noise)
                    }
                }
            }
            (Scheme::CcCs, StorageDomain::Baseband) => {
                let s = self.cs_state;
                let rate = if s.is_empty() {
                    current
                } else {
                    let total = s.signal_gain + g[n];
                    self.table
                        .symbol_mi(snr * total * total / (g[n] + s.rho_sq))
                };
                self.cs_state = cs_noise_recursion(s, g[n], snr, cfg.buffer_c);
                rate
            }
            (Scheme::Ir, StorageDomain::Baseband) => {
                let stored: f64 = (0..n)
                    .map(|i| match bb_noise_var(snr * g[i], alloc) {
                        Some(v) => self.table.symbol_mi(snr * g[i] / (1.0 + v)),
                        None => 0.0,
                    })
                    .sum();
                current + stored
            }
            (Scheme::Ir, StorageDomain::Llr) => {
                if !(alloc > 0.0) {
                    return current;
                }
                let bound = self.ir_bound(n);
                if prune(bound) {
                    return bound;
                }
                let stored = StoredLlrTable::get(self.table.m, alloc / self.m());
                current + (0..n).map(|i| stored.symbol_mi(snr * g[i])).sum::<f64>()
            }
            (Scheme::CcSc, StorageDomain::Llr) => {
                if !(alloc > 0.0) {
                    return current;
                }
                let bound = self.chase_bound(n);
                if prune(bound) {
                    return bound;
                }
                let per_bit = alloc / self.m();
                for i in 0..=n {
                    self.attempt(i);
                }
                let atts: Vec<&AttemptLlr> = self.attempts[..=n]
                    .iter()
                    .map(|a| a.as_ref().expect("built"))
                    .collect();
                let pam = self.table.pam();
                let mut total = 0.0;
                for t in 0..pam.bits as usize {
                    let noise: f64 = atts[..n]
                        .iter()
                        .map(|a| {
                            llr_noise_var(a.unconditional_var(t), per_bit)
                                .expect("positive allocation")
                        })
                        .sum();
                    total += 2.0 * combined_mi(pam, &atts, t, noise);
                }
                total
            }
            (Scheme::CcCs, StorageDomain::Llr) => {
                let bound = self.chase_bound(n);
                let rate = match &self.cs_llr {
                    None => current,
                    Some(_) if prune(bound) => bound,
                    Some((folded, noise)) => {
                        let (folded, noise) = (folded.clone(), noise.clone());
                        self.attempt(n);
                        let mut idx = folded;
                        idx.push(n);
                        let atts: Vec<&AttemptLlr> = idx
                            .iter()
                            .map(|&i| self.attempts[i].as_ref().expect("built"))
                            .collect();
                        let pam = self.table.pam();
                        (0..pam.bits as usize)
                            .map(|t| 2.0 * combined_mi(pam, &atts, t, noise[t]))
                            .sum()
                    }
                };
                self.fold_cs(n);
                rate
            }
        }
    }

    /// Combine-and-store LLR update after a failed attempt `n`.
    fn fold_cs(&mut self, n: usize) {
        if self.cfg.domain != StorageDomain::Llr {
            self.cs_state = cs_noise_recursion(
                self.cs_state,
                self.gains[n],
                self.cfg.snr,
                self.cfg.buffer_c,
            );
            return;
        }
        if !(self.cfg.buffer_c > 0.0) {
            self.cs_llr = None;
            return;
        }
        let per_bit = self.cfg.buffer_c / self.m();
        let (mut folded, mut noise) = self
            .cs_llr
            .take()
            .unwrap_or_else(|| (Vec::new(), vec![0.0; self.table.pam().bits as usize]));
        self.attempt(n);
        folded.push(n);
        let atts: Vec<&AttemptLlr> = folded
            .iter()
            .map(|&i| self.attempts[i].as_ref().expect("built"))
            .collect();
        for (t, v) in noise.iter_mut().enumerate() {
            let var = grid::unconditional_var(&grid::sum_moments(&atts, t, *v));
            *v += llr_noise_var(var, per_bit).expect("positive allocation");
        }
        self.cs_llr = Some((folded, noise));
    }
}

/// Rates at every attempt of a BICM session.
pub fn trajectory_bicm(draw: &SessionDraw, cfg: &HarqConfig) -> Result<RateTrajectory> {
    check_bicm(cfg)?;
    let gains = draw.powers();
    let n_max = cfg.n_max.min(gains.len());
    let mut ev = Evaluator::new(cfg, gains[..n_max].to_vec());
    let rates: Vec<f64> = (0..n_max).map(|_| ev.step(None)).collect();
    let stored = cfg.scheme != Scheme::Ti && cfg.buffer_c > 0.0;
    Ok(RateTrajectory {
        rates,
        stored_mask: vec![stored; n_max],
    })
}

/// First successful attempt, evaluating only as far as needed.
pub fn first_success(draw: &SessionDraw, cfg: &HarqConfig) -> Option<usize> {
    let gains = draw.powers();
    let n_max = cfg.n_max.min(gains.len());
    let mut ev = Evaluator::new(cfg, gains[..n_max].to_vec());
    (1..=n_max).find(|_| ev.step(Some(cfg.rate)) >= cfg.rate)
}

fn check_bicm(cfg: &HarqConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.modulation == Modulation::Gaussian {
        return Err(Error::InvalidConfig(
            "BICM evaluation needs a QAM modulation".into(),
        ));
    }
    Ok(())
}

pub fn estimate_pe(cfg: &HarqConfig, workers: usize) -> Result<PeCurve> {
    check_bicm(cfg)?;
    let acc = run_sessions(cfg.trials, cfg.n_max, 1, workers, |s, out| {
        out[0] = first_success(&session_draw(cfg, s), cfg);
    });
    Ok(acc.pe_curve(0))
}

/// One row of the MI-table dump.
#[derive(Debug, Clone, PartialEq)]
pub struct MiRow {
    pub m: u32,
    pub snr: f64,
    pub gain: f64,
    pub j: usize,
    pub mi_bits: f64,
}

/// Bit-channel MI for every `(snr, gain)` pair and bit index.
pub fn mi_rows(m: u32, snrs: &[f64], gains: &[f64]) -> Result<Vec<MiRow>> {
    Constellation::new(m)?;
    let table = MiTable::get(m);
    let mut rows = Vec::new();
    for &snr in snrs {
        for &gain in gains {
            for j in 1..=m as usize {
                rows.push(MiRow {
                    m,
                    snr,
                    gain,
                    j,
                    mi_bits: table.bit_mi(snr * gain, j),
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constellation_invariants() {
        for m in [2, 4, 6] {
            let c = Constellation::new(m).unwrap();
            let e: f64 = c.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / c.points.len() as f64;
            assert!((e - 1.0).abs() < 1e-12);
            for j in 1..=m as usize {
                assert_eq!(c.subset(j, 0).len(), 1 << (m - 1));
                assert_eq!(c.subset(j, 1).len(), 1 << (m - 1));
            }
            let dmin = (6.0 / ((1u32 << m) as f64 - 1.0)).sqrt();
            for p in 0..c.points.len() {
                for q in 0..c.points.len() {
                    if ((c.points[p] - c.points[q]).norm() - dmin).abs() < 1e-9 {
                        assert_eq!((c.labels[p] ^ c.labels[q]).count_ones(), 1);
                    }
                }
            }
        }
        assert!(Constellation::new(3).is_err());
        let qpsk = Constellation::new(2).unwrap();
        for p in &qpsk.points {
            assert!(
                (p.re.abs() - 0.5f64.sqrt()).abs() < 1e-15
                    && (p.im.abs() - 0.5f64.sqrt()).abs() < 1e-15
            );
        }
    }

    #[test]
    fn llr_examples() {
        let c = Constellation::new(2).unwrap();
        let one = Complex64::new(1.0, 0.0);
        for j in 1..=2 {
            assert!(compute_llr(Complex64::new(0.0, 0.0), one, 1.0, j, &c).abs() < 1e-15);
        }
        let p1 = (0..4).find(|&p| c.bit(p, 1) == 1).unwrap();
        assert!(compute_llr(c.points[p1] * 1e3, one, 1e6, 1, &c) > 1e3);

        // Four-term sum in extended form.
        let y = Complex64::new(1.0, 1.0) / 2f64.sqrt();
        for j in 1..=2 {
            let (mut num, mut den) = (0.0f64, 0.0f64);
            for p in 0..4 {
                let w = (-(y - c.points[p]).norm_sqr()).exp();
                if c.bit(p, j) == 1 {
                    num += w;
                } else {
                    den += w;
                }
            }
            assert!((compute_llr(y, one, 1.0, j, &c) - (num / den).log2()).abs() < 1e-12);
        }
    }

    #[test]
    fn llr_reduces_to_one_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = Constellation::new(4).unwrap();
        let pam = Pam::for_qam(4);
        for _ in 0..200 {
            let h = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            let y = Complex64::new(
                rng.random::<f64>() * 4.0 - 2.0,
                rng.random::<f64>() * 4.0 - 2.0,
            );
            let snr: f64 = 5.0;
            let rot = y * h.conj() / h.norm();
            let a = h.norm() * snr.sqrt();
            for j in 1..=4 {
                let one_d = if j <= 2 {
                    pam.llr(rot.re, a, j - 1)
                } else {
                    pam.llr(rot.im, a, j - 3)
                };
                assert!(
                    (compute_llr(y, h, snr, j, &c) - one_d / std::f64::consts::LN_2).abs() < 1e-9
                );
            }
        }
    }

    #[test]
    fn baseband_mi_matches_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for m in [2, 4] {
            let c = Constellation::new(m).unwrap();
            let table = MiTable::get(m);
            for gamma in [0.3f64, 3.16, 20.0] {
                for j in 1..=m as usize {
                    let est = mi_bit_baseband(
                        &c,
                        j,
                        Complex64::new(gamma.sqrt(), 0.0),
                        1.0,
                        20_000,
                        &mut rng,
                    );
                    let exact = table.bit_mi(gamma, j);
                    assert!(
                        (est.value - exact).abs() < 4.0 * est.std_error + 2e-3,
                        "m={m} g={gamma} j={j}"
                    );
                }
            }
        }
    }

    #[test]
    fn llr_variance_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = Constellation::new(4).unwrap();
        let pam = Pam::for_qam(4);
        let snr: f64 = 10.0;
        let h = Complex64::new(0.6, -0.3);
        let att = AttemptLlr::new(&pam, h.norm() * snr.sqrt());
        for j in [1usize, 2] {
            let mc = llr_variance(snr, h, j, &c, 100_000, &mut rng);
            // Quadrature variance is in nats squared.
            let q = att.unconditional_var(j - 1) / std::f64::consts::LN_2.powi(2);
            assert!((mc / q - 1.0).abs() < 0.03, "j={j}: {mc} vs {q}");
        }
    }

    #[test]
    fn trajectories_collapse_without_buffer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let d = SessionDraw::sample(&mut rng, 4);
            let ti =
                trajectory_bicm(&d, &qam_cfg(Scheme::Ti, StorageDomain::Baseband, 0.0)).unwrap();
            for scheme in [Scheme::CcSc, Scheme::CcCs, Scheme::Ir] {
                for domain in [StorageDomain::Baseband, StorageDomain::Llr] {
                    let t = trajectory_bicm(&d, &qam_cfg(scheme, domain, 0.0)).unwrap();
                    for (a, b) in t.rates.iter().zip(&ti.rates) {
                        assert!((a - b).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn qpsk_llr_matches_baseband_with_large_buffer() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let d = SessionDraw::sample(&mut rng, 4);
            for scheme in [Scheme::CcSc, Scheme::CcCs, Scheme::Ir] {
                let mut cfg = qam_cfg(scheme, StorageDomain::Baseband, 200.0);
                cfg.modulation = Modulation::Qam { bits: 2 };
                let bb = trajectory_bicm(&d, &cfg).unwrap();
                cfg.domain = StorageDomain::Llr;
                let llr = trajectory_bicm(&d, &cfg).unwrap();
                for (a, b) in llr.rates.iter().zip(&bb.rates) {
                    assert!((a - b).abs() < 0.02, "{scheme}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn llr_storage_never_beats_chase_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let d = SessionDraw::sample(&mut rng, 4);
            let table = MiTable::get(4);
            for scheme in [Scheme::CcSc, Scheme::CcCs] {
                let t = trajectory_bicm(&d, &qam_cfg(scheme, StorageDomain::Llr, 2.0)).unwrap();
                let mut g = 0.0;
                for (n, r) in t.rates.iter().enumerate() {
                    g += d.powers()[n];
                    assert!(*r <= table.symbol_mi(10.0 * g) + 5e-3);
                }
            }
        }
    }

    fn qam_cfg(scheme: Scheme, domain: StorageDomain, c: f64) -> HarqConfig {
        HarqConfig {
            scheme,
            domain,
            buffer_c: c,
            snr: 10.0,
            rate: 3.4,
            n_max: 4,
            modulation: Modulation::Qam { bits: 4 },
            ..HarqConfig::default()
        }
    }
}
