//! Deterministic densities of (sums of) bit LLRs on a uniform grid.
//!
//! The LLR of one attempt is a known function of a Gaussian observation. Its
//! conditional density given the transmitted PAM level is obtained by pushing
//! the Gaussian through the LLR map segment by segment: each segment of the
//! noise axis carries its exact probability mass, spread uniformly over the
//! LLR interval it maps to. Chase combining sums independent LLRs of the same
//! symbol, which is a convolution per level, done with FFTs. Gaussian
//! quantization noise is one more convolution applied in the frequency domain.

use std::cell::RefCell;

use num_complex::Complex64;
use realfft::RealFftPlanner;
use statrs::function::erf::erfc;

use super::pam::{Pam, DIM_NOISE_VAR};

const SEGMENTS: usize = 256;
const SPAN: f64 = 6.5;
const MIN_GRID: usize = 512;
const MAX_GRID: usize = 1 << 16;

/// `(z_lo, z_hi, mass)` of each standard-normal segment, masses summing to 1.
fn segments() -> &'static [(f64, f64, f64)] {
    static SEG: std::sync::OnceLock<Vec<(f64, f64, f64)>> = std::sync::OnceLock::new();
    SEG.get_or_init(|| {
        let h = 2.0 * SPAN / SEGMENTS as f64;
        let cdf = |z: f64| 0.5 * erfc(-z / std::f64::consts::SQRT_2);
        let raw: Vec<(f64, f64, f64)> = (0..SEGMENTS)
            .map(|s| {
                let lo = -SPAN + s as f64 * h;
                let hi = lo + h;
                (lo, hi, cdf(hi) - cdf(lo))
            })
            .collect();
        let total: f64 = raw.iter().map(|r| r.2).sum();
        raw.into_iter().map(|(a, b, m)| (a, b, m / total)).collect()
    })
}

/// LLRs of one attempt at the segment end points, per bit position and level.
#[derive(Debug, Clone)]
pub struct AttemptLlr {
    /// `llr[t][k][s]`, `s = 0..=SEGMENTS`.
    llr: Vec<Vec<Vec<f64>>>,
    /// `(mean, variance)` conditioned on the level.
    moments: Vec<Vec<(f64, f64)>>,
    max_abs: Vec<f64>,
}

impl AttemptLlr {
    /// Attempt observed as `y = a x + n` per dimension.
    pub fn new(pam: &Pam, a: f64) -> AttemptLlr {
        let sigma = DIM_NOISE_VAR.sqrt();
        let segs = segments();
        let h = pam.bits as usize;
        let mut llr = Vec::with_capacity(h);
        let mut moments = Vec::with_capacity(h);
        let mut max_abs = Vec::with_capacity(h);
        for t in 0..h {
            let mut per_level = Vec::with_capacity(pam.levels.len());
            let mut mom = Vec::with_capacity(pam.levels.len());
            let mut mx: f64 = 0.0;
            for &x in &pam.levels {
                let mut vals = Vec::with_capacity(SEGMENTS + 1);
                vals.push(pam.llr(a * x + sigma * segs[0].0, a, t));
                for seg in segs {
                    vals.push(pam.llr(a * x + sigma * seg.1, a, t));
                }
                let (mut m1, mut m2) = (0.0, 0.0);
                for (s, seg) in segs.iter().enumerate() {
                    let (u, v) = (vals[s], vals[s + 1]);
                    m1 += seg.2 * 0.5 * (u + v);
                    m2 += seg.2 * (u * u + u * v + v * v) / 3.0;
                }
                mx = vals.iter().fold(mx, |acc, v| acc.max(v.abs()));
                mom.push((m1, (m2 - m1 * m1).max(0.0)));
                per_level.push(vals);
            }
            llr.push(per_level);
            moments.push(mom);
            max_abs.push(mx);
        }
        AttemptLlr {
            llr,
            moments,
            max_abs,
        }
    }

    pub fn level_moments(&self, t: usize) -> &[(f64, f64)] {
        &self.moments[t]
    }

    /// `var(L)` over bit, level and noise.
    pub fn unconditional_var(&self, t: usize) -> f64 {
        unconditional_var(&self.moments[t])
    }

    fn deposit(&self, t: usize, k: usize, delta: f64, out: &mut [f64]) {
        let g = out.len() as i64;
        let vals = &self.llr[t][k];
        for (s, seg) in segments().iter().enumerate() {
            let (u, v) = (vals[s] / delta, vals[s + 1] / delta);
            let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
            let mass = seg.2;
            if hi - lo < 1e-9 {
                let i0 = lo.floor();
                let f = lo - i0;
                let i0 = i0 as i64;
                out[i0.rem_euclid(g) as usize] += mass * (1.0 - f);
                out[(i0 + 1).rem_euclid(g) as usize] += mass * f;
                continue;
            }
            let width = hi - lo;
            let first = (lo + 0.5).floor() as i64;
            let last = (hi + 0.5).floor() as i64;
            for i in first..=last {
                let a = lo.max(i as f64 - 0.5);
                let b = hi.min(i as f64 + 0.5);
                if b > a {
                    out[i.rem_euclid(g) as usize] += mass * (b - a) / width;
                }
            }
        }
    }
}

/// Variance of a level mixture with equiprobable levels.
pub fn unconditional_var(moments: &[(f64, f64)]) -> f64 {
    let n = moments.len() as f64;
    let mean = moments.iter().map(|m| m.0).sum::<f64>() / n;
    let second = moments.iter().map(|m| m.1 + m.0 * m.0).sum::<f64>() / n;
    (second - mean * mean).max(0.0)
}

/// Per-level moments of `sum_i L_i + Q` with `Q ~ N(0, noise_var)`.
pub fn sum_moments(attempts: &[&AttemptLlr], t: usize, noise_var: f64) -> Vec<(f64, f64)> {
    let levels = attempts[0].moments[t].len();
    (0..levels)
        .map(|k| {
            attempts.iter().fold((0.0, noise_var), |acc, a| {
                (acc.0 + a.moments[t][k].0, acc.1 + a.moments[t][k].1)
            })
        })
        .collect()
}

thread_local! {
    static PLANNER: RefCell<RealFftPlanner<f64>> = RefCell::new(RealFftPlanner::new());
}

/// MI in bits between PAM bit `t` and `sum_i L_i + Q`, where all attempts
/// carry the same symbol and `Q ~ N(0, noise_var)` is independent.
pub fn combined_mi(pam: &Pam, attempts: &[&AttemptLlr], t: usize, noise_var: f64) -> f64 {
    assert!(!attempts.is_empty(), "at least one attempt");
    let noise_sd = noise_var.max(0.0).sqrt();
    let half_width = attempts.iter().map(|a| a.max_abs[t]).sum::<f64>() + 8.0 * noise_sd + 1e-6;
    let min_sd = sum_moments(attempts, t, noise_var)
        .iter()
        .map(|m| m.1.sqrt())
        .fold(f64::INFINITY, f64::min);
    let target = (min_sd / 8.0).max(1e-6);
    let want = (2.0 * half_width / target).ceil() as usize;
    let g = want.next_power_of_two().clamp(MIN_GRID, MAX_GRID);
    // Margin of a few bins so that no mass wraps around.
    let delta = 2.0 * half_width / (g as f64 - 8.0);

    let (fwd, inv) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(g), p.plan_fft_inverse(g))
    });
    let spread = noise_var.max(0.0) / (delta * delta);
    let bins = g / 2 + 1;
    let gauss: Vec<f64> = (0..bins)
        .map(|i| {
            let w = 2.0 * std::f64::consts::PI * i as f64 / g as f64;
            (-0.5 * spread * w * w).exp()
        })
        .collect();

    // Mirrored levels carry mirrored (or identical) LLR densities: the Gray
    // label of the mirror image differs in the first bit only.
    let levels = pam.levels.len();
    let mut cond = vec![vec![0.0f64; g]; levels];
    let mut acc = vec![Complex64::new(0.0, 0.0); bins];
    let mut spec = vec![Complex64::new(0.0, 0.0); bins];
    let mut buf = vec![0.0f64; g];
    for k in 0..levels / 2 {
        acc.iter_mut()
            .zip(&gauss)
            .for_each(|(c, &w)| *c = Complex64::new(w, 0.0));
        for a in attempts {
            buf.iter_mut().for_each(|c| *c = 0.0);
            a.deposit(t, k, delta, &mut buf);
            fwd.process(&mut buf, &mut spec).expect("forward transform");
            acc.iter_mut().zip(&spec).for_each(|(c, b)| *c *= b);
        }
        acc[0].im = 0.0;
        acc[bins - 1].im = 0.0;
        inv.process(&mut acc, &mut buf).expect("inverse transform");
        let mirror = levels - 1 - k;
        let flips = pam.bit(k, t) != pam.bit(mirror, t);
        for i in 0..g {
            let d = (buf[i] / g as f64).max(0.0);
            cond[k][i] = d;
            let j = if flips { (g - i) % g } else { i };
            cond[mirror][j] = d;
        }
    }

    let mut p = [vec![0.0f64; g], vec![0.0f64; g]];
    for b in 0..2 {
        let set = &pam.subsets[t][b];
        for &k in set {
            p[b].iter_mut().zip(&cond[k]).for_each(|(x, y)| *x += y);
        }
        let s: f64 = p[b].iter().sum();
        p[b].iter_mut().for_each(|x| *x /= s);
    }
    let mut mi = 0.0;
    for i in 0..g {
        let (p0, p1) = (p[0][i], p[1][i]);
        let pm = 0.5 * (p0 + p1);
        if p0 > 0.0 {
            mi += 0.5 * p0 * (p0 / pm).ln();
        }
        if p1 > 0.0 {
            mi += 0.5 * p1 * (p1 / pm).ln();
        }
    }
    (mi / std::f64::consts::LN_2).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_attempt_matches_observation_mi() {
        // The LLR is a sufficient statistic for its bit.
        for m in [2, 4, 6] {
            let pam = Pam::for_qam(m);
            for gamma in [0.05, 0.7, 3.0, 10.0, 40.0, 300.0] {
                let a = f64::sqrt(gamma);
                let att = AttemptLlr::new(&pam, a);
                for t in 0..pam.bits as usize {
                    let grid = combined_mi(&pam, &[&att], t, 0.0);
                    let exact = pam.bit_mi(t, a);
                    assert!(
                        (grid - exact).abs() < 3e-3,
                        "m={m} gamma={gamma} t={t}: {grid} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn qpsk_llr_sum_is_sufficient() {
        // QPSK LLRs are linear in the observation, so summing them loses
        // nothing relative to combining the observations.
        let pam = Pam::for_qam(2);
        let (a1, a2, a3) = (0.6f64, 1.1f64, 0.4f64);
        let atts: Vec<AttemptLlr> = [a1, a2, a3]
            .iter()
            .map(|&a| AttemptLlr::new(&pam, a))
            .collect();
        let refs: Vec<&AttemptLlr> = atts.iter().collect();
        let grid = combined_mi(&pam, &refs, 0, 0.0);
        let mrc = pam.bit_mi(0, (a1 * a1 + a2 * a2 + a3 * a3).sqrt());
        assert!((grid - mrc).abs() < 3e-3, "{grid} vs {mrc}");
    }

    #[test]
    fn noise_reduces_information() {
        let pam = Pam::for_qam(4);
        let att = AttemptLlr::new(&pam, 2.0);
        let var = att.unconditional_var(0);
        let mut prev = combined_mi(&pam, &[&att], 0, 0.0);
        for r in [4.0, 2.0, 1.0, 0.5, 0.1] {
            let mi = combined_mi(
                &pam,
                &[&att],
                0,
                var / ((2.0 * r * std::f64::consts::LN_2).exp() - 1.0),
            );
            assert!(mi <= prev + 1e-9);
            prev = mi;
        }
        assert!(combined_mi(&pam, &[&att], 0, var * 1e8) < 0.01);
    }

    #[test]
    fn qpsk_noisy_llr_is_gaussian_channel() {
        // L = 4 a y is Gaussian given the bit, so L + Q is a BPSK observation
        // at a reduced amplitude.
        let pam = Pam::for_qam(2);
        let a = 0.9;
        let x = pam.levels[1];
        let att = AttemptLlr::new(&pam, a);
        let q = 5.0;
        let mi = combined_mi(&pam, &[&att], 0, q);
        let slope = 4.0 * a * x;
        let noise = DIM_NOISE_VAR + q / (slope * slope);
        let eff = a * (DIM_NOISE_VAR / noise).sqrt();
        let exact = pam.bit_mi(0, eff);
        assert!((mi - exact).abs() < 3e-3, "{mi} vs {exact}");
    }
}
