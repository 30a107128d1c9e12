//! One real dimension of a square Gray-labelled QAM constellation.
//!
//! With a Gray label that concatenates the in-phase and quadrature PAM labels,
//! the LLR of an in-phase bit depends only on the real part of the
//! de-rotated observation `y = a x_I + n`, `n ~ N(0, 1/2)`. Quadrature bits see
//! the same statistics, so every bit-channel quantity is computed once per
//! PAM bit position.

/// Per-dimension noise variance of a unit-variance complex Gaussian.
pub(crate) const DIM_NOISE_VAR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Pam {
    /// Bits per dimension.
    pub bits: u32,
    pub levels: Vec<f64>,
    /// Gray label of each level.
    pub labels: Vec<u32>,
    /// `subsets[t][b]`: indices of the levels whose bit `t` equals `b`.
    pub subsets: Vec<[Vec<usize>; 2]>,
}

impl Pam {
    /// PAM for a square QAM with `m` bits per symbol and unit average energy.
    pub fn for_qam(m: u32) -> Pam {
        let bits = m / 2;
        let count = 1usize << bits;
        let big_m = (count * count) as f64;
        let d = (3.0 / (2.0 * (big_m - 1.0))).sqrt();
        let levels: Vec<f64> = (0..count)
            .map(|k| (2.0 * k as f64 - (count as f64 - 1.0)) * d)
            .collect();
        let labels: Vec<u32> = (0..count as u32).map(|k| k ^ (k >> 1)).collect();
        let subsets = (0..bits)
            .map(|t| {
                let mut s: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
                for (k, &lab) in labels.iter().enumerate() {
                    s[((lab >> (bits - 1 - t)) & 1) as usize].push(k);
                }
                s
            })
            .collect();
        Pam {
            bits,
            levels,
            labels,
            subsets,
        }
    }

    pub fn bit(&self, k: usize, t: usize) -> usize {
        ((self.labels[k] >> (self.bits as usize - 1 - t)) & 1) as usize
    }

    /// Natural-log LLR of bit `t` for the real observation `y` with amplitude
    /// `a`, positive when bit 1 is more likely.
    pub fn llr(&self, y: f64, a: f64, t: usize) -> f64 {
        let metric = |k: &usize| {
            let e = y - a * self.levels[*k];
            -e * e
        };
        log_sum_exp(self.subsets[t][1].iter().map(metric))
            - log_sum_exp(self.subsets[t][0].iter().map(metric))
    }

    /// Mutual information between bit `t` and `y = a x + n` by Gaussian
    /// quadrature over the noise.
    pub fn bit_mi(&self, t: usize, a: f64) -> f64 {
        let nodes = noise_quadrature();
        let sigma = DIM_NOISE_VAR.sqrt();
        let half = self.levels.len() as f64 / 2.0;
        let log_mix = |y: f64, set: &[usize]| {
            log_sum_exp(set.iter().map(|&k| {
                let e = y - a * self.levels[k];
                -e * e
            }))
        };
        let mut total = 0.0;
        for b in 0..2 {
            for &k in &self.subsets[t][b] {
                let mut acc = 0.0;
                for &(z, w) in nodes {
                    let y = a * self.levels[k] + sigma * z;
                    let own = log_mix(y, &self.subsets[t][b]);
                    let other = log_mix(y, &self.subsets[t][1 - b]);
                    // log(f_b / (f_0 + f_1) / 2) with equal subset sizes.
                    let ratio = own - log_add(own, other) + std::f64::consts::LN_2;
                    acc += w * ratio;
                }
                total += acc;
            }
        }
        (total / (2.0 * half)) / std::f64::consts::LN_2
    }

    /// Sum of the MI of all `2 * bits` bit channels of the QAM symbol.
    pub fn symbol_mi(&self, a: f64) -> f64 {
        2.0 * (0..self.bits as usize)
            .map(|t| self.bit_mi(t, a))
            .sum::<f64>()
    }
}

pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub(crate) fn log_sum_exp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + it.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Standard-normal quadrature nodes `(z, weight)` on a uniform grid.
fn noise_quadrature() -> &'static [(f64, f64)] {
    static NODES: std::sync::OnceLock<Vec<(f64, f64)>> = std::sync::OnceLock::new();
    NODES.get_or_init(|| {
        let n = 601;
        let span = 8.0;
        let h = 2.0 * span / (n - 1) as f64;
        let raw: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let z = -span + i as f64 * h;
                (z, (-0.5 * z * z).exp())
            })
            .collect();
        let s: f64 = raw.iter().map(|p| p.1).sum();
        raw.into_iter().map(|(z, w)| (z, w / s)).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_energy_and_gray() {
        for m in [2, 4, 6] {
            let p = Pam::for_qam(m);
            let e: f64 = p.levels.iter().map(|x| x * x).sum::<f64>() / p.levels.len() as f64;
            assert!((2.0 * e - 1.0).abs() < 1e-12);
            for w in p.labels.windows(2) {
                assert_eq!((w[0] ^ w[1]).count_ones(), 1);
            }
        }
    }

    #[test]
    fn bpsk_dimension_mi_is_binary_input_awgn() {
        // For QPSK each dimension is BPSK; compare with a brute-force sum.
        let p = Pam::for_qam(2);
        let a = 1.3;
        let x = p.levels[1];
        let s2 = DIM_NOISE_VAR;
        let mut acc = 0.0;
        let n = 200_000;
        let lo = -12.0;
        let h = 24.0 / n as f64;
        for i in 0..n {
            let y = lo + (i as f64 + 0.5) * h;
            let f1 = (-(y - a * x).powi(2) / (2.0 * s2)).exp()
                / (2.0 * std::f64::consts::PI * s2).sqrt();
            let f0 = (-(y + a * x).powi(2) / (2.0 * s2)).exp()
                / (2.0 * std::f64::consts::PI * s2).sqrt();
            let fm = 0.5 * (f0 + f1);
            if f1 > 0.0 {
                acc += h * f1 * (f1 / fm).log2();
            }
        }
        assert!(
            (p.bit_mi(0, a) - acc).abs() < 1e-9,
            "{} vs {acc}",
            p.bit_mi(0, a)
        );
    }
}
