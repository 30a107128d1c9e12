//! Incremental redundancy at finite blocklength.
//!
//! Decoding follows the normal approximation with channel dispersion `V_c`.
//! Each failed packet is compressed with a quantizer that fails with
//! probability `eps_q`; successful compressions pay a dispersion penalty
//! in their storage cost and share a buffer of `B_C` bits.

use rand::Rng;
use statrs::function::erf::{erfc, erfc_inv};

use crate::engine::{run_sessions, Purpose, RngContract};
use crate::error::{Error, Result};
use crate::model::{throughput_from_pe, PeCurve, SessionDraw, ThroughputResult};

const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// Rate-dispersion factor of a Gaussian source, in bits squared.
pub const SOURCE_DISPERSION: f64 = 0.5 * LOG2_E * LOG2_E;

#[derive(Debug, Clone, PartialEq)]
pub struct FblConfig {
    /// Information bits per session.
    pub info_bits: f64,
    /// Symbols per packet.
    pub blocklength: f64,
    /// Buffer size in bits.
    pub total_buffer: f64,
    /// Probability that compressing a packet fails.
    pub eps_q: f64,
    pub snr: f64,
    pub n_max: usize,
    pub trials: u64,
    pub seed: u64,
    pub stream: u64,
}

impl Default for FblConfig {
    fn default() -> Self {
        FblConfig {
            info_bits: 1000.0,
            blocklength: 1000.0,
            total_buffer: 10_000.0,
            eps_q: 1e-4,
            snr: crate::model::db_to_linear(5.0),
            n_max: 10,
            trials: 10_000,
            seed: 0,
            stream: 0,
        }
    }
}

impl FblConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.info_bits > 0.0) || !(self.blocklength > 0.0) || !(self.total_buffer >= 0.0) {
            return bad("info_bits and blocklength must be positive, total_buffer non-negative");
        }
        if !(self.eps_q > 0.0 && self.eps_q < 1.0) {
            return bad("eps_q must lie in (0, 1)");
        }
        if !(self.snr >= 0.0) || !self.snr.is_finite() {
            return bad("snr must be finite and non-negative");
        }
        if self.n_max == 0 || self.trials == 0 {
            return bad("n_max and trials must be positive");
        }
        Ok(())
    }

    /// Transmission rate `b / L` in bits per symbol.
    pub fn rate(&self) -> f64 {
        self.info_bits / self.blocklength
    }
}

/// Gaussian tail `Q(x) = P[N(0,1) > x]`.
pub fn q_func(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of [`q_func`].
pub fn q_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("q_inv needs 0 < p < 1, got {p}")));
    }
    Ok(std::f64::consts::SQRT_2 * erfc_inv(2.0 * p))
}

/// Quantization noise of one stored packet of power `signal_power` when
/// `stored` packets share `total_buffer` bits at blocklength `blocklength`.
/// `None` when the dispersion penalty eats the whole allocation.
pub fn fbl_quant_var(
    signal_power: f64,
    total_buffer: f64,
    blocklength: f64,
    stored: usize,
    eps_q: f64,
) -> Result<Option<f64>> {
    if stored == 0 {
        return Err(Error::Domain(
            "fbl_quant_var needs at least one stored packet".into(),
        ));
    }
    let exponent = total_buffer / (blocklength * stored as f64)
        - (SOURCE_DISPERSION / blocklength).sqrt() * q_inv(eps_q)?;
    if !(exponent > 0.0) {
        return Ok(None);
    }
    Ok(Some(
        (signal_power + 1.0) / (exponent * std::f64::consts::LN_2).exp_m1(),
    ))
}

/// Survival flags of `n` packets, each stored with probability `1 - eps_q`.
pub fn sample_stored_count<R: Rng + ?Sized>(n: usize, eps_q: f64, rng: &mut R) -> Vec<bool> {
    (0..n).map(|_| rng.random::<f64>() >= eps_q).collect()
}

/// Normal-approximation error probability of attempt `n` (0-based) given the
/// power gains and which earlier packets are in the buffer.
pub fn attempt_error_probability(cfg: &FblConfig, powers: &[f64], stored: &[usize]) -> Result<f64> {
    let n = powers.len() - 1;
    let mut rate = (cfg.snr * powers[n]).ln_1p() / std::f64::consts::LN_2;
    let mut dispersion = 1.0 - (1.0 + cfg.snr * powers[n]).powi(-2);
    for &i in stored {
        let p = cfg.snr * powers[i];
        if let Some(var) = fbl_quant_var(
            p,
            cfg.total_buffer,
            cfg.blocklength,
            stored.len(),
            cfg.eps_q,
        )? {
            let sinr = p / (1.0 + var);
            rate += sinr.ln_1p() / std::f64::consts::LN_2;
            dispersion += 1.0 - (1.0 + sinr).powi(-2);
        }
    }
    let l = cfg.blocklength;
    let numerator = rate + l.log2() / (2.0 * l) - cfg.info_bits / l;
    let sd = (dispersion * LOG2_E * LOG2_E / l).sqrt();
    if sd == 0.0 {
        return Ok(if numerator > 0.0 { 0.0 } else { 1.0 });
    }
    Ok(q_func(numerator / sd))
}

/// First successful attempt of one session, if any.
pub fn fbl_session(cfg: &FblConfig, session: u64) -> Result<Option<usize>> {
    let contract = RngContract::new(cfg.seed);
    let draw = SessionDraw::sample(
        &mut contract.stream(cfg.stream, session, Purpose::Channel),
        cfg.n_max,
    );
    let powers = draw.powers();
    let survives = sample_stored_count(
        cfg.n_max,
        cfg.eps_q,
        &mut contract.stream(cfg.stream, session, Purpose::StoreFlags),
    );
    // One threshold per session: the session is still failing after attempt
    // n iff u falls below every error probability seen so far, so
    // P[fail through n] = E[min_k Q_k], which equals E[Q_n] when the error
    // probability falls with every attempt.
    let u: f64 = contract
        .stream(cfg.stream, session, Purpose::DecodeNoise)
        .random();
    let mut stored = Vec::new();
    for n in 0..cfg.n_max {
        if u >= attempt_error_probability(cfg, &powers[..=n], &stored)? {
            return Ok(Some(n + 1));
        }
        if cfg.total_buffer > 0.0 && survives[n] {
            stored.push(n);
        }
    }
    Ok(None)
}

pub fn fbl_pe(cfg: &FblConfig, workers: usize) -> Result<PeCurve> {
    cfg.validate()?;
    let failed = std::sync::Mutex::new(None);
    let acc = run_sessions(
        cfg.trials,
        cfg.n_max,
        1,
        workers,
        |s, out| match fbl_session(cfg, s) {
            Ok(r) => out[0] = r,
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

#[derive(Debug, Clone, PartialEq)]
pub struct FblRow {
    pub blocklength: f64,
    pub total_buffer: f64,
    pub eps_q: f64,
    pub info_bits: f64,
    pub curve: PeCurve,
    pub result: ThroughputResult,
    /// Average delay `L E[N]` in symbols.
    pub delay: f64,
}

pub fn fbl_throughput(cfg: &FblConfig, workers: usize) -> Result<FblRow> {
    let curve = fbl_pe(cfg, workers)?;
    let result = throughput_from_pe(&curve, cfg.rate());
    Ok(FblRow {
        curve,
        blocklength: cfg.blocklength,
        total_buffer: cfg.total_buffer,
        eps_q: cfg.eps_q,
        info_bits: cfg.info_bits,
        delay: cfg.blocklength * result.expected_attempts,
        result,
    })
}

/// Throughput at every blocklength of the grid and the blocklength that
/// maximizes it (the smallest one on ties).
pub fn optimize_blocklength(
    cfg: &FblConfig,
    grid: &[f64],
    workers: usize,
) -> Result<(f64, Vec<FblRow>)> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("blocklength grid is empty".into()));
    }
    let rows = grid
        .iter()
        .map(|&l| {
            fbl_throughput(
                &FblConfig {
                    blocklength: l,
                    ..cfg.clone()
                },
                workers,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (k, row) in rows.iter().enumerate() {
        if row.result.throughput > rows[best].result.throughput {
            best = k;
        }
    }
    Ok((rows[best].blocklength, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn q_inv_examples() {
        assert_eq!(q_inv(0.5).unwrap(), 0.0);
        let x = q_inv(1e-4).unwrap();
        assert!((q_func(x) - 1e-4).abs() <= 1e-10 * 1e-4);
        for p in [0.1, 0.3] {
            assert!((q_inv(p).unwrap() + q_inv(1.0 - p).unwrap()).abs() < 1e-12);
        }
        assert!(q_inv(0.0).is_err() && q_inv(1.0).is_err());
    }

    #[test]
    fn quant_var_examples() {
        // Median failure probability: no dispersion penalty.
        let v = fbl_quant_var(9.0, 300.0, 100.0, 3, 0.5).unwrap().unwrap();
        assert!((v - 10.0 / (2f64.powi(1) - 1.0)).abs() < 1e-12);

        let v = fbl_quant_var(9.0, 100.0, 100.0, 1, 1e-2).unwrap().unwrap();
        let penalty = (0.5 * LOG2_E * LOG2_E / 100.0).sqrt() * 2.326_347_874_040_841;
        assert!((v - 10.0 / (2f64.powf(1.0 - penalty) - 1.0)).abs() < 1e-9);

        assert!(fbl_quant_var(9.0, 1.0, 100.0, 1, 1e-4).unwrap().is_none());
        let far = fbl_quant_var(9.0, 1e8, 1e8, 1, 1e-4).unwrap().unwrap();
        assert!((far - 10.0).abs() < 1e-2);
    }

    #[test]
    fn stored_count_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 100_000;
        let total: usize = (0..draws)
            .map(|_| {
                sample_stored_count(10, 0.3, &mut rng)
                    .iter()
                    .filter(|&&s| s)
                    .count()
            })
            .sum();
        assert!((total as f64 / draws as f64 - 7.0).abs() < 0.05);
        assert!(sample_stored_count(10, 0.0, &mut rng).iter().all(|&s| s));
    }

    #[test]
    fn single_attempt_matches_normal_approximation() {
        let cfg = FblConfig {
            info_bits: 500.0,
            blocklength: 300.0,
            ..FblConfig::default()
        };
        let g = 0.8;
        let c = (1.0 + cfg.snr * g).log2();
        let v = (1.0 - (1.0 + cfg.snr * g).powi(-2)) * LOG2_E * LOG2_E;
        let expect = q_func((c + 300f64.log2() / 600.0 - 500.0 / 300.0) / (v / 300.0).sqrt());
        assert!((attempt_error_probability(&cfg, &[g], &[]).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn rate_extremes() {
        let hard = FblConfig {
            info_bits: 1e5,
            blocklength: 100.0,
            trials: 500,
            ..FblConfig::default()
        };
        assert!(fbl_pe(&hard, 1).unwrap().pe.iter().all(|&p| p == 1.0));
        let easy = FblConfig {
            info_bits: 1e-3,
            blocklength: 4000.0,
            trials: 500,
            ..FblConfig::default()
        };
        let pe = fbl_pe(&easy, 1).unwrap().pe;
        assert!(pe[1] < 0.01);
    }

    #[test]
    fn single_point_grid() {
        let cfg = FblConfig {
            trials: 200,
            ..FblConfig::default()
        };
        let (best, rows) = optimize_blocklength(&cfg, &[800.0], 1).unwrap();
        assert_eq!(best, 800.0);
        assert_eq!(rows.len(), 1);
    }
}
