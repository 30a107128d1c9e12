//! Cached bit-channel mutual-information curves.
//!
//! Every baseband quantity depends on the channel only through the effective
//! SNR `gamma = |a|^2 / s^2` of the (possibly combined) observation, so one
//! curve per constellation covers all schemes. Curves are tabulated on 1024
//! log-spaced bins and interpolated linearly in `log gamma`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::grid::{combined_mi, AttemptLlr};
use super::pam::Pam;
use crate::quantizer::llr_noise_var;

pub const TABLE_BINS: usize = 1024;
pub const GAMMA_MIN: f64 = 1e-4;
pub const GAMMA_MAX: f64 = 1e5;

fn bin_gamma(k: usize) -> f64 {
    let (lo, hi) = (GAMMA_MIN.ln(), GAMMA_MAX.ln());
    (lo + (hi - lo) * k as f64 / (TABLE_BINS - 1) as f64).exp()
}

/// Position of `gamma` on the bin axis, `None` outside the tabulated range.
fn locate(gamma: f64) -> Option<(usize, f64)> {
    if !(gamma >= GAMMA_MIN) || gamma >= GAMMA_MAX {
        return None;
    }
    let (lo, hi) = (GAMMA_MIN.ln(), GAMMA_MAX.ln());
    let x = (gamma.ln() - lo) / (hi - lo) * (TABLE_BINS - 1) as f64;
    let k = (x.floor() as usize).min(TABLE_BINS - 2);
    Some((k, x - k as f64))
}

fn interpolate(gamma: f64, value: impl Fn(usize) -> f64) -> f64 {
    if !(gamma > 0.0) {
        return 0.0;
    }
    if gamma < GAMMA_MIN {
        // MI grows linearly in SNR near zero.
        return value(0) * gamma / GAMMA_MIN;
    }
    match locate(gamma) {
        Some((k, f)) => value(k) * (1.0 - f) + value(k + 1) * f,
        None => value(TABLE_BINS - 1),
    }
}

/// Per-bit-position MI of the unquantized observation.
#[derive(Debug)]
pub struct MiTable {
    pub m: u32,
    pam: Pam,
    /// `per_bit[t][k]`: MI of PAM bit `t` at bin `k`.
    per_bit: Vec<Vec<f64>>,
    total: Vec<f64>,
}

impl MiTable {
    fn build(m: u32) -> MiTable {
        let pam = Pam::for_qam(m);
        let per_bit: Vec<Vec<f64>> = (0..pam.bits as usize)
            .map(|t| {
                (0..TABLE_BINS)
                    .map(|k| pam.bit_mi(t, bin_gamma(k).sqrt()))
                    .collect()
            })
            .collect();
        let total = (0..TABLE_BINS)
            .map(|k| 2.0 * per_bit.iter().map(|v| v[k]).sum::<f64>())
            .collect();
        MiTable {
            m,
            pam,
            per_bit,
            total,
        }
    }

    /// Shared table for `m` bits per symbol.
    pub fn get(m: u32) -> Arc<MiTable> {
        static TABLES: OnceLock<Mutex<HashMap<u32, Arc<MiTable>>>> = OnceLock::new();
        let tables = TABLES.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(t) = tables.lock().expect("table lock").get(&m) {
            return t.clone();
        }
        // Built outside the lock; a concurrent duplicate build is harmless.
        let built = Arc::new(MiTable::build(m));
        tables
            .lock()
            .expect("table lock")
            .entry(m)
            .or_insert(built)
            .clone()
    }

    pub fn pam(&self) -> &Pam {
        &self.pam
    }

    /// Sum over all `m` bit channels.
    pub fn symbol_mi(&self, gamma: f64) -> f64 {
        interpolate(gamma, |k| self.total[k])
    }

    /// MI of bit channel `j` (1-based; the first `m/2` bits ride on the
    /// in-phase component).
    pub fn bit_mi(&self, gamma: f64, j: usize) -> f64 {
        let h = self.pam.bits as usize;
        let t = (j - 1) % h;
        interpolate(gamma, |k| self.per_bit[t][k])
    }
}

/// MI of a single packet whose LLRs are stored with `rate` bits per bit
/// channel, tabulated lazily over the same bins.
#[derive(Debug)]
pub struct StoredLlrTable {
    pam: Pam,
    rate: f64,
    bins: Vec<OnceLock<f64>>,
}

impl StoredLlrTable {
    /// Shared table for `m` bits per symbol and `rate` bits per stored LLR.
    pub fn get(m: u32, rate: f64) -> Arc<StoredLlrTable> {
        type Key = (u32, u64);
        static TABLES: OnceLock<Mutex<HashMap<Key, Arc<StoredLlrTable>>>> = OnceLock::new();
        let tables = TABLES.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = tables.lock().expect("table lock");
        guard
            .entry((m, rate.to_bits()))
            .or_insert_with(|| {
                Arc::new(StoredLlrTable {
                    pam: Pam::for_qam(m),
                    rate,
                    bins: (0..TABLE_BINS).map(|_| OnceLock::new()).collect(),
                })
            })
            .clone()
    }

    fn bin_value(&self, k: usize) -> f64 {
        *self.bins[k].get_or_init(|| stored_llr_mi(&self.pam, bin_gamma(k), self.rate))
    }

    /// Sum over all bit channels of `I(X(j); L + Q)` for a packet received at
    /// effective SNR `gamma`.
    pub fn symbol_mi(&self, gamma: f64) -> f64 {
        interpolate(gamma, |k| self.bin_value(k))
    }
}

/// Direct evaluation of the stored-LLR MI of one packet.
pub fn stored_llr_mi(pam: &Pam, gamma: f64, rate: f64) -> f64 {
    let att = AttemptLlr::new(pam, gamma.sqrt());
    let mut total = 0.0;
    for t in 0..pam.bits as usize {
        let var = att.unconditional_var(t);
        let noise = if rate.is_infinite() {
            0.0
        } else {
            llr_noise_var(var, rate).unwrap_or(f64::INFINITY)
        };
        if noise.is_infinite() {
            continue;
        }
        total += 2.0 * combined_mi(pam, &[&att], t, noise);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_error_is_small() {
        for m in [2, 4, 6] {
            let table = MiTable::get(m);
            let pam = Pam::for_qam(m);
            for k in 0..40 {
                let gamma = 10f64.powf(-3.0 + 7.0 * (k as f64 + 0.37) / 40.0);
                let direct = pam.symbol_mi(gamma.sqrt());
                assert!(
                    (table.symbol_mi(gamma) - direct).abs() < 0.005,
                    "m={m} gamma={gamma}"
                );
            }
        }
    }

    #[test]
    fn limits() {
        for m in [2, 4, 6] {
            let t = MiTable::get(m);
            assert!(t.symbol_mi(1e-6) < 1e-4);
            assert!((t.symbol_mi(1e6) - m as f64).abs() < 1e-9);
            assert_eq!(t.symbol_mi(0.0), 0.0);
            let mut prev = 0.0;
            for k in 0..TABLE_BINS {
                assert!(t.total[k] >= prev - 1e-12);
                prev = t.total[k];
            }
        }
    }
}
