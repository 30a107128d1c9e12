//! System model: configuration of one experiment point, per-session channel
//! draws, failure-probability curves and the throughput algebra.

use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile used for every confidence half-width.
pub const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Type-I: decode the last packet only.
    Ti,
    /// Chase combining, every packet stored separately.
    CcSc,
    /// Chase combining, the MRC-combined packet is stored.
    CcCs,
    /// Incremental redundancy.
    Ir,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Ti => "TI",
            Scheme::CcSc => "CC_SC",
            Scheme::CcCs => "CC_CS",
            Scheme::Ir => "IR",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        match s.to_ascii_uppercase().replace(['-', '&'], "_").as_str() {
            "TI" => Some(Scheme::Ti),
            "CC_SC" | "SC" => Some(Scheme::CcSc),
            "CC_CS" | "CS" => Some(Scheme::CcCs),
            "IR" => Some(Scheme::Ir),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What the receiver keeps in its buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StorageDomain {
    Baseband,
    /// Log-likelihood ratios of the coded bits (BICM only).
    Llr,
}

impl StorageDomain {
    pub fn as_str(self) -> &'static str {
        match self {
            StorageDomain::Baseband => "baseband",
            StorageDomain::Llr => "llr",
        }
    }

    pub fn parse(s: &str) -> Option<StorageDomain> {
        match s.to_ascii_lowercase().as_str() {
            "baseband" | "bb" => Some(StorageDomain::Baseband),
            "llr" => Some(StorageDomain::Llr),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modulation {
    /// Ideal coded modulation with Gaussian codebooks.
    Gaussian,
    /// Square Gray-labelled QAM carrying `bits` bits per symbol (BICM).
    Qam { bits: u32 },
}

impl Modulation {
    pub fn label(self) -> String {
        match self {
            Modulation::Gaussian => "gaussian".to_string(),
            Modulation::Qam { bits } => format!("qam{}", 1u32 << bits),
        }
    }

    /// Accepts `gaussian`, `qpsk` and `qamM` / `M-qam` / `Mqam` for square
    /// constellations with `M` points.
    pub fn parse(s: &str) -> Option<Modulation> {
        let t = s.to_ascii_lowercase().replace(['-', '_'], "");
        if t == "gaussian" {
            return Some(Modulation::Gaussian);
        }
        if t == "qpsk" {
            return Some(Modulation::Qam { bits: 2 });
        }
        let digits = t.strip_prefix("qam").or_else(|| t.strip_suffix("qam"))?;
        let points: u32 = digits.parse().ok()?;
        if points < 4 || !points.is_power_of_two() {
            return None;
        }
        Some(Modulation::Qam {
            bits: points.trailing_zeros(),
        })
    }
}

/// One experiment point.
#[derive(Debug, Clone, PartialEq)]
pub struct HarqConfig {
    pub scheme: Scheme,
    pub domain: StorageDomain,
    /// Average SNR as a linear power ratio.
    pub snr: f64,
    /// Transmission rate in bits per symbol.
    pub rate: f64,
    /// Buffer size normalized to the packet length, bits per symbol.
    pub buffer_c: f64,
    pub n_max: usize,
    pub modulation: Modulation,
    /// Adaptive-storing threshold; `None` stores every failed packet.
    /// `Some(f64::INFINITY)` never stores.
    pub eta: Option<f64>,
    /// Use the quantization-aware combiner instead of the Chase combiner.
    pub optimal_combiner: bool,
    pub trials: u64,
    pub seed: u64,
    /// Random-stream identifier. Points sharing `(seed, stream)` see the same
    /// channel realizations.
    pub stream: u64,
}

impl Default for HarqConfig {
    fn default() -> Self {
        HarqConfig {
            scheme: Scheme::Ir,
            domain: StorageDomain::Baseband,
            snr: 10.0,
            rate: 4.0,
            buffer_c: 1.0,
            n_max: 10,
            modulation: Modulation::Gaussian,
            eta: None,
            optimal_combiner: false,
            trials: 100_000,
            seed: 1,
            stream: 0,
        }
    }
}

impl HarqConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.snr > 0.0) || !self.snr.is_finite() {
            return bad(format!(
                "snr must be a positive linear ratio, got {}",
                self.snr
            ));
        }
        if !(self.rate >= 0.0) {
            return bad(format!("rate must be non-negative, got {}", self.rate));
        }
        if !(self.buffer_c >= 0.0) {
            return bad(format!(
                "buffer_c must be non-negative, got {}",
                self.buffer_c
            ));
        }
        if self.n_max < 1 {
            return bad("n_max must be at least 1".into());
        }
        if self.trials < 1 {
            return bad("trials must be at least 1".into());
        }
        if let Some(eta) = self.eta {
            if !(eta >= 1.0) {
                return bad(format!("eta must be >= 1, got {eta}"));
            }
            if self.modulation != Modulation::Gaussian {
                return bad("adaptive storing is only modelled for Gaussian signalling".into());
            }
        }
        if self.domain == StorageDomain::Llr && self.modulation == Modulation::Gaussian {
            return bad("LLR storage requires a QAM modulation".into());
        }
        if let Modulation::Qam { bits } = self.modulation {
            if !matches!(bits, 2 | 4 | 6) {
                return bad(format!(
                    "QAM must carry 2, 4 or 6 bits per symbol, got {bits}"
                ));
            }
            if self.optimal_combiner {
                return bad(
                    "the quantization-aware combiner is only modelled for Gaussian signalling"
                        .into(),
                );
            }
        }
        Ok(())
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Channel gains of one HARQ session, one per attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionDraw {
    pub gains: Vec<Complex64>,
}

impl SessionDraw {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, n_max: usize) -> SessionDraw {
        SessionDraw {
            gains: (0..n_max).map(|_| sample_gain(rng)).collect(),
        }
    }

    /// Builds a draw with the given power gains and zero phase.
    pub fn from_powers(powers: &[f64]) -> SessionDraw {
        SessionDraw {
            gains: powers
                .iter()
                .map(|&g| Complex64::new(g.sqrt(), 0.0))
                .collect(),
        }
    }

    pub fn powers(&self) -> Vec<f64> {
        self.gains.iter().map(|h| h.norm_sqr()).collect()
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }
}

/// Rayleigh fading coefficient: circularly-symmetric complex Gaussian with
/// unit variance.
pub fn sample_gain<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// CDF of the Rayleigh power gain `|H|^2 ~ Exp(1)`.
pub fn rayleigh_cdf(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!(
            "power gain must be non-negative, got {x}"
        )));
    }
    Ok(-(-x).exp_m1())
}

/// Cumulative failure probabilities `[P_e^0 = 1, P_e^1, ..., P_e^{N_max}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeCurve {
    pub pe: Vec<f64>,
    pub ci_halfwidth: Vec<f64>,
    /// Sessions behind the estimate; 0 for analytic curves.
    pub trials: u64,
}

impl PeCurve {
    /// Curve without sampling error.
    pub fn exact(pe_from_one: &[f64]) -> PeCurve {
        let mut pe = Vec::with_capacity(pe_from_one.len() + 1);
        pe.push(1.0);
        pe.extend_from_slice(pe_from_one);
        let ci_halfwidth = vec![0.0; pe.len()];
        PeCurve {
            pe,
            ci_halfwidth,
            trials: 0,
        }
    }

    /// Curve estimated from `trials` sessions, `failures[n-1]` of which had
    /// not decoded through attempt `n`.
    pub fn from_counts(failures: &[u64], trials: u64) -> PeCurve {
        let t = trials as f64;
        let mut pe = vec![1.0];
        let mut ci = vec![0.0];
        for &f in failures {
            let p = f as f64 / t;
            pe.push(p);
            ci.push(Z95 * (p * (1.0 - p) / t).sqrt());
        }
        PeCurve {
            pe,
            ci_halfwidth: ci,
            trials,
        }
    }

    pub fn n_max(&self) -> usize {
        self.pe.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.pe.len() < 2 {
            return Err(Error::InvalidConfig(
                "failure curve needs at least one attempt".into(),
            ));
        }
        if self.pe[0] != 1.0 {
            return Err(Error::InvalidConfig("failure curve must start at 1".into()));
        }
        for w in self.pe.windows(2) {
            if !(0.0..=1.0).contains(&w[1]) || w[1] > w[0] {
                return Err(Error::InvalidConfig(
                    "failure curve must be a non-increasing probability".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputResult {
    /// Bits per channel use.
    pub throughput: f64,
    pub expected_attempts: f64,
    /// `retx_pmf[n-1] = Pr[N = n]`.
    pub retx_pmf: Vec<f64>,
    pub ci_halfwidth: f64,
}

/// Distribution of the number of attempts implied by a failure curve.
pub fn attempts_pmf(pe: &[f64]) -> Vec<f64> {
    let n_max = pe.len() - 1;
    (1..=n_max)
        .map(|n| {
            if n < n_max {
                pe[n - 1] - pe[n]
            } else {
                pe[n_max - 1]
            }
        })
        .collect()
}

/// Single-layer throughput `T = R (1 - P_e^{N_max}) / E[N]`.
///
/// When the curve comes from `trials` sessions the half-width is the
/// delta-method interval of the ratio estimator over the joint law of
/// (decoded, attempts) implied by the curve.
pub fn throughput_from_pe(curve: &PeCurve, rate: f64) -> ThroughputResult {
    let pe = &curve.pe;
    let n_max = curve.n_max();
    let retx_pmf = attempts_pmf(pe);
    let expected_attempts: f64 = retx_pmf
        .iter()
        .enumerate()
        .map(|(i, p)| (i + 1) as f64 * p)
        .sum();
    let success = 1.0 - pe[n_max];
    let throughput = rate * success / expected_attempts;

    let ci_halfwidth = if curve.trials > 0 {
        let ratio = success / expected_attempts;
        let scale = rate / expected_attempts;
        let mut var = 0.0;
        for k in 1..=n_max {
            let p = pe[k - 1] - pe[k];
            let psi = scale * (1.0 - ratio * k as f64);
            var += p * psi * psi;
        }
        let psi_fail = scale * (-ratio * n_max as f64);
        var += pe[n_max] * psi_fail * psi_fail;
        Z95 * (var / curve.trials as f64).sqrt()
    } else {
        0.0
    };

    ThroughputResult {
        throughput,
        expected_attempts,
        retx_pmf,
        ci_halfwidth,
    }
}

/// Type-I failure probability `F((2^R - 1)/SNR)^n` for an arbitrary
/// power-gain CDF.
pub fn ti_pe_with_cdf(
    cdf: impl Fn(f64) -> Result<f64>,
    snr: f64,
    rate: f64,
    n: usize,
) -> Result<f64> {
    let threshold = rate.exp2() - 1.0;
    Ok(cdf(threshold / snr)?.powi(n as i32))
}

/// Type-I failure probability through attempt `n` under Rayleigh fading.
pub fn ti_pe_closed_form(snr: f64, rate: f64, n: usize) -> f64 {
    let threshold = (rate * std::f64::consts::LN_2).exp_m1();
    rayleigh_cdf(threshold / snr).unwrap_or(1.0).powi(n as i32)
}
