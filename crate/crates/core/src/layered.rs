//! Two-layer superposition coding over HARQ-IR with a finite buffer.
//!
//! Until layer 1 is decoded (attempt `K`) every packet carries both layers,
//! layer 1 with power fraction `alpha`. Layer 2 is decoded only after layer
//! 1 and sees the layer-1 signal cancelled; after `K` the whole power goes to
//! layer 2.

use crate::engine::run_sessions;
use crate::error::{Error, Result};
use crate::gaussian::session_draw;
use crate::model::{attempts_pmf, HarqConfig, PeCurve, Scheme, SessionDraw, ThroughputResult, Z95};
use crate::quantizer::exp2_m1;

#[derive(Debug, Clone, PartialEq)]
pub struct LayeredConfig {
    /// Scheme must be IR, or TI for the buffer-less variant.
    pub base: HarqConfig,
    pub rate1: f64,
    pub rate2: f64,
    pub alpha: f64,
}

impl LayeredConfig {
    /// Split of the total rate `base.rate` into `rate1` and the remainder.
    pub fn with_split(base: HarqConfig, rate1: f64, alpha: f64) -> LayeredConfig {
        let rate2 = (base.rate - rate1).max(0.0);
        LayeredConfig {
            base,
            rate1,
            rate2,
            alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !matches!(self.base.scheme, Scheme::Ir | Scheme::Ti) {
            return Err(Error::InvalidConfig(
                "layered coding is modelled for IR and TI only".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.rate1 >= 0.0 && self.rate2 >= 0.0) {
            return Err(Error::InvalidConfig(
                "layer rates must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn buffer(&self) -> f64 {
        if self.base.scheme == Scheme::Ti {
            0.0
        } else {
            self.base.buffer_c
        }
    }
}

/// Decoding attempts of one session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayeredSessionOutcome {
    /// Attempt at which layer 1 was decoded.
    pub k: Option<usize>,
    /// Attempt at which layer 2 was decoded; never before `k`.
    pub n2: Option<usize>,
    pub attempts: usize,
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

/// Quantization noise of packet `i` after attempt `n` (all 1-based) when
/// layer 1 is decoded at attempt `k`. `None` when nothing is stored.
pub fn layered_noise_var(cfg: &LayeredConfig, gain: f64, n: usize, k: usize) -> Option<f64> {
    let c = cfg.buffer();
    if !(c > 0.0) || n == 0 {
        return None;
    }
    let power = if n == k {
        (1.0 - cfg.alpha) * cfg.base.snr * gain
    } else {
        cfg.base.snr * gain
    };
    Some((power + 1.0) / exp2_m1(c / n as f64))
}

/// Accumulated layer-1 rate at attempt `n <= K`, with layer 2 as noise.
pub fn layered_rate1(gains: &[f64], cfg: &LayeredConfig, n: usize) -> f64 {
    let (a, snr) = (cfg.alpha, cfg.base.snr);
    let g = gains;
    let mut r = log2_1p(a * snr * g[n - 1] / (1.0 + (1.0 - a) * snr * g[n - 1]));
    for i in 1..n {
        // Attempt n - 1 precedes layer-1 decoding, so k never equals n - 1 here.
        if let Some(v) = layered_noise_var(cfg, g[i - 1], n - 1, usize::MAX) {
            r += log2_1p(a * snr * g[i - 1] / (1.0 + v + (1.0 - a) * snr * g[i - 1]));
        }
    }
    r
}

/// Accumulated layer-2 rate at attempt `n >= k` once layer 1 was decoded at `k`.
pub fn layered_rate2(gains: &[f64], cfg: &LayeredConfig, n: usize, k: usize) -> f64 {
    let (a, snr) = (cfg.alpha, cfg.base.snr);
    let g = gains;
    let stored = |i: usize, p: f64| match layered_noise_var(cfg, g[i - 1], n - 1, k) {
        Some(v) => log2_1p(p / (1.0 + v)),
        None => 0.0,
    };
    if n == k {
        let mut r = log2_1p((1.0 - a) * snr * g[n - 1]);
        for i in 1..n {
            r += stored(i, (1.0 - a) * snr * g[i - 1]);
        }
        r
    } else {
        let mut r = log2_1p(snr * g[n - 1]);
        for i in 1..=k {
            r += stored(i, (1.0 - a) * snr * g[i - 1]);
        }
        for i in k + 1..n {
            r += stored(i, snr * g[i - 1]);
        }
        r
    }
}

pub fn layered_session(draw: &SessionDraw, cfg: &LayeredConfig) -> LayeredSessionOutcome {
    let g = draw.powers();
    let n_max = cfg.base.n_max.min(g.len());
    let k = (1..=n_max).find(|&n| layered_rate1(&g, cfg, n) >= cfg.rate1);
    let n2 = k.and_then(|k| (k..=n_max).find(|&n| layered_rate2(&g, cfg, n, k) >= cfg.rate2));
    LayeredSessionOutcome {
        k,
        n2,
        attempts: n2.unwrap_or(n_max),
    }
}

/// Failure curves of layer 1 and layer 2. Layer 2 counts as failed through
/// attempt `n` whenever layer 1 was not decoded by then.
pub fn estimate_layered_pe(cfg: &LayeredConfig, workers: usize) -> Result<(PeCurve, PeCurve)> {
    cfg.validate()?;
    let acc = run_sessions(cfg.base.trials, cfg.base.n_max, 2, workers, |s, out| {
        let o = layered_session(&session_draw(&cfg.base, s), cfg);
        out[0] = o.k;
        out[1] = o.n2;
    });
    Ok((acc.pe_curve(0), acc.pe_curve(1)))
}

/// `T = sum_i R_i (1 - P_{e,i}^{N_max}) / E[N]`, with `N` ending at layer-2
/// decoding.
pub fn layered_throughput(
    pe1: &PeCurve,
    pe2: &PeCurve,
    rate1: f64,
    rate2: f64,
) -> ThroughputResult {
    let n_max = pe2.n_max();
    let retx_pmf = attempts_pmf(&pe2.pe);
    let expected_attempts: f64 = retx_pmf
        .iter()
        .enumerate()
        .map(|(i, p)| (i + 1) as f64 * p)
        .sum();
    let reward = rate1 * (1.0 - pe1.pe[n_max]) + rate2 * (1.0 - pe2.pe[n_max]);
    let throughput = reward / expected_attempts;

    let trials = pe1.trials.max(pe2.trials);
    let ci_halfwidth = if trials > 0 {
        // Sessions fall in three classes: both layers decoded at attempt n,
        // only layer 1 decoded, nothing decoded.
        let psi = |r: f64, n: f64| (r - throughput * n) / expected_attempts;
        let mut var = 0.0;
        for n in 1..=n_max {
            let p = pe2.pe[n - 1] - pe2.pe[n];
            var += p * psi(rate1 + rate2, n as f64).powi(2);
        }
        let only1 = (pe2.pe[n_max] - pe1.pe[n_max]).max(0.0);
        var += only1 * psi(rate1, n_max as f64).powi(2);
        var += pe1.pe[n_max] * psi(0.0, n_max as f64).powi(2);
        Z95 * (var / trials as f64).sqrt()
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

/// Layered throughput for every layer-1 rate on `{0, step, ..., R}` and the
/// best of them. All candidates share the channel realizations.
pub fn optimize_rate1(
    base: &HarqConfig,
    alpha: f64,
    step: f64,
    workers: usize,
) -> Result<(f64, Vec<(f64, ThroughputResult)>)> {
    if !(step > 0.0) {
        return Err(Error::InvalidConfig("rate step must be positive".into()));
    }
    let count = (base.rate / step + 1e-9).floor() as usize;
    let mut table = Vec::with_capacity(count + 1);
    for i in 0..=count {
        let r1 = (i as f64 * step).min(base.rate);
        let cfg = LayeredConfig::with_split(base.clone(), r1, alpha);
        let (pe1, pe2) = estimate_layered_pe(&cfg, workers)?;
        table.push((r1, layered_throughput(&pe1, &pe2, cfg.rate1, cfg.rate2)));
    }
    let best = table
        .iter()
        .max_by(|a, b| a.1.throughput.total_cmp(&b.1.throughput))
        .map(|(r, _)| *r)
        .expect("non-empty grid");
    Ok((best, table))
}
