//! Quantization-noise models for stored packets.
//!
//! Stored packets are described as `Y + Q` with Gaussian `Q` whose variance is
//! fixed by the number of bits per symbol the buffer grants the packet. A rate
//! of zero means the packet is not kept at all; every function here reports
//! that case as `None` so callers can drop the packet from the combiner.

use crate::error::{Error, Result};

/// `2^r - 1`, accurate for small `r`.
pub(crate) fn exp2_m1(r: f64) -> f64 {
    (r * std::f64::consts::LN_2).exp_m1()
}

/// Baseband quantization-noise variance of a complex packet with received
/// signal power `signal_power` (= SNR |H|^2) stored with `rate` bits per
/// symbol: `(P + 1) / (2^r - 1)`.
pub fn bb_noise_var(signal_power: f64, rate: f64) -> Option<f64> {
    if !(rate > 0.0) {
        return None;
    }
    Some((signal_power + 1.0) / exp2_m1(rate))
}

/// Quantization-noise variance of one real LLR stored with `rate` bits,
/// sized from the Gaussian upper bound on `I(L; L + Q)`.
pub fn llr_noise_var(var_l: f64, rate: f64) -> Option<f64> {
    if !(rate > 0.0) {
        return None;
    }
    Some(var_l / exp2_m1(2.0 * rate))
}

/// Stored combined packet of the combine-and-store receiver.
///
/// The stored signal is `sqrt(SNR) * signal_gain * X + E` with effective noise
/// `E ~ CN(0, rho_sq)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveNoiseState {
    pub rho_sq: f64,
    /// Sum of the power gains folded into the stored packet.
    pub signal_gain: f64,
    /// Attempt after which this packet was stored (0 = empty buffer).
    pub attempt: usize,
}

impl EffectiveNoiseState {
    pub const EMPTY: EffectiveNoiseState = EffectiveNoiseState {
        rho_sq: 0.0,
        signal_gain: 0.0,
        attempt: 0,
    };

    pub fn is_empty(&self) -> bool {
        self.signal_gain == 0.0 && self.rho_sq == 0.0
    }
}

/// Combines the packet of the next attempt (power gain `gain_sq`) with the
/// stored packet and recompresses the result into `buffer_c` bits per symbol.
///
/// With an empty buffer allocation nothing survives and the returned state is
/// empty.
pub fn cs_noise_recursion(
    state: EffectiveNoiseState,
    gain_sq: f64,
    snr: f64,
    buffer_c: f64,
) -> EffectiveNoiseState {
    let attempt = state.attempt + 1;
    if !(buffer_c > 0.0) {
        return EffectiveNoiseState {
            attempt,
            ..EffectiveNoiseState::EMPTY
        };
    }
    let signal_gain = state.signal_gain + gain_sq;
    let unquantized = state.rho_sq + gain_sq;
    let q = (unquantized + snr * signal_gain * signal_gain) / exp2_m1(buffer_c);
    EffectiveNoiseState {
        rho_sq: unquantized + q,
        signal_gain,
        attempt,
    }
}

/// Successive-refinement description of packet `i`: one layer per attempt
/// `n = i, ..., n_max - 1` at which the packet may still be needed.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementSchedule {
    pub packet_index: usize,
    /// `variances[k]` is the noise variance of the description stored after
    /// attempt `packet_index + k`.
    pub variances: Vec<f64>,
    /// `layer_rates[k]` is the rate of the refinement layer that is dropped
    /// when moving from description `k` to `k + 1`; the last entry is the
    /// base layer.
    pub layer_rates: Vec<f64>,
    signal_power: f64,
}

impl RefinementSchedule {
    /// Bits per symbol kept after attempt `n` (sum of the surviving layers).
    pub fn stored_rate(&self, n: usize) -> f64 {
        self.layer_rates[n - self.packet_index..].iter().sum()
    }

    /// `I(Y; Y + Q_n)` for the description kept after attempt `n`.
    pub fn description_information(&self, n: usize) -> f64 {
        let v = self.variances[n - self.packet_index];
        ((self.signal_power + 1.0) / v).ln_1p() / std::f64::consts::LN_2
    }

    /// Variances of the independent increments `Q_{i,j} - Q_{i,j-1}`.
    pub fn delta_variances(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.variances
            .iter()
            .map(|&v| {
                let d = v - prev;
                prev = v;
                d
            })
            .collect()
    }
}

fn conditional_variance(source_power: f64, noise: f64) -> f64 {
    source_power * noise / (source_power + noise)
}

/// Layered description of packet `i` with received power `signal_power`
/// when the buffer is split equally among the packets stored so far.
pub fn refinement_schedule(
    signal_power: f64,
    buffer_c: f64,
    i: usize,
    n_max: usize,
) -> Result<RefinementSchedule> {
    if !(buffer_c > 0.0) {
        return Err(Error::Domain(format!(
            "buffer must be positive, got {buffer_c}"
        )));
    }
    if i < 1 || i + 1 > n_max {
        return Err(Error::Domain(format!(
            "packet {i} is never stored when n_max = {n_max}"
        )));
    }
    let py = signal_power + 1.0;
    let variances: Vec<f64> = (i..n_max)
        .map(|n| py / exp2_m1(buffer_c / n as f64))
        .collect();

    // I(Y; Y+Q_n | Y+Q_{n+1}) = h(Y | Y+Q_{n+1}) - h(Y | Y+Q_n) by the Markov chain.
    let mut layer_rates: Vec<f64> = variances
        .windows(2)
        .map(|w| (conditional_variance(py, w[1]) / conditional_variance(py, w[0])).log2())
        .collect();
    let last = *variances.last().expect("at least one layer");
    layer_rates.push((py / conditional_variance(py, last)).log2());

    Ok(RefinementSchedule {
        packet_index: i,
        variances,
        layer_rates,
        signal_power,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn baseband_variance_examples() {
        assert_eq!(bb_noise_var(9.0, 1.0), Some(10.0));
        assert!((bb_noise_var(0.0, 2.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(bb_noise_var(5.0, f64::INFINITY), Some(0.0));
        assert!(bb_noise_var(5.0, 2000.0).unwrap() < 1e-300);
        assert_eq!(bb_noise_var(5.0, 0.0), None);
        assert_eq!(bb_noise_var(5.0, -1.0), None);
    }

    #[test]
    fn baseband_variance_round_trip() {
        for k in 0..=600 {
            let r = 0.01 + k as f64 * (60.0 - 0.01) / 600.0;
            for p in [0.0, 0.3, 9.0, 1e3] {
                let v = bb_noise_var(p, r).unwrap();
                let back = ((p + 1.0) / v).ln_1p() / std::f64::consts::LN_2;
                assert!((back - r).abs() < 1e-12, "r={r} p={p} back={back}");
            }
        }
    }

    #[test]
    fn llr_variance_examples() {
        assert_eq!(llr_noise_var(3.0, 1.0), Some(1.0));
        assert_eq!(llr_noise_var(0.0, 0.7), Some(0.0));
        assert_eq!(llr_noise_var(3.0, f64::INFINITY), Some(0.0));
        assert_eq!(llr_noise_var(3.0, 0.0), None);
    }

    #[test]
    fn combine_and_store_examples() {
        let s1 = cs_noise_recursion(EffectiveNoiseState::EMPTY, 1.0, 1.0, 1.0);
        assert!((s1.rho_sq - 3.0).abs() < 1e-15);
        let s2 = cs_noise_recursion(s1, 1.0, 1.0, 1.0);
        assert!((s2.rho_sq - 12.0).abs() < 1e-15);
        assert_eq!(s2.attempt, 2);

        let empty = cs_noise_recursion(s2, 1.0, 1.0, 0.0);
        assert!(empty.is_empty());
    }

    #[test]
    fn combine_and_store_large_buffer_limit() {
        let gains = [0.3, 1.7, 0.05, 2.2, 0.9];
        let mut s = EffectiveNoiseState::EMPTY;
        let mut sum = 0.0;
        for &g in &gains {
            s = cs_noise_recursion(s, g, 10.0, 200.0);
            sum += g;
            assert!(((s.rho_sq - sum) / sum).abs() < 1e-10);
        }
    }

    #[test]
    fn schedule_examples() {
        let s = refinement_schedule(1.0, 2.0, 1, 3).unwrap();
        assert!((s.variances[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.variances[1] - 2.0).abs() < 1e-15);
        assert!((s.layer_rates.iter().sum::<f64>() - 2.0).abs() < 1e-12);

        let single = refinement_schedule(4.0, 3.0, 2, 3).unwrap();
        assert_eq!(single.layer_rates.len(), 1);
        assert!((single.layer_rates[0] - 1.5).abs() < 1e-12);

        assert!(refinement_schedule(1.0, 0.0, 1, 3).is_err());
        assert!(refinement_schedule(1.0, 1.0, 3, 3).is_err());
    }

    proptest! {
        #[test]
        fn schedule_identities(p in 0.0f64..100.0, c in 0.05f64..30.0, n_max in 2usize..16, i_seed in 0usize..100) {
            let i = 1 + i_seed % (n_max - 1);
            let s = refinement_schedule(p, c, i, n_max).unwrap();
            for w in s.variances.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            for d in s.delta_variances() {
                prop_assert!(d >= 0.0);
            }
            for r in &s.layer_rates {
                prop_assert!(*r >= -1e-15);
            }
            for n in i..n_max {
                let lhs = s.stored_rate(n);
                prop_assert!((lhs - s.description_information(n)).abs() < 1e-12);
                prop_assert!((lhs - c / n as f64).abs() < 1e-11);
            }
        }

        #[test]
        fn combine_and_store_increases(gains in proptest::collection::vec(0.001f64..10.0, 1..10), snr in 0.01f64..100.0, c in 0.1f64..12.0) {
            let mut s = EffectiveNoiseState::EMPTY;
            for g in gains {
                let next = cs_noise_recursion(s, g, snr, c);
                prop_assert!(next.rho_sq > s.rho_sq);
                s = next;
            }
        }
    }
}
