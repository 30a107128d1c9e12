//! HARQ schemes under Gaussian signalling with baseband storage.
//!
//! Each scheme maps the channel draw of a session to the rate the decoder can
//! support at every attempt, assuming all earlier attempts failed. Packets are
//! recompressed only after a failed attempt, so attempt `j` sees the stored
//! packets at the allocation made after attempt `j - 1`.

use crate::engine::{run_sessions, Purpose, RngContract};
use crate::model::{HarqConfig, PeCurve, Scheme, SessionDraw};
use crate::quantizer::{bb_noise_var, cs_noise_recursion, EffectiveNoiseState};

#[derive(Debug, Clone, PartialEq)]
pub struct RateTrajectory {
    /// `rates[j]`: achievable rate at attempt `j + 1`.
    pub rates: Vec<f64>,
    /// `stored_mask[j]`: packet `j + 1` was kept after its attempt failed.
    pub stored_mask: Vec<bool>,
}

impl RateTrajectory {
    /// First attempt (1-based) whose rate supports `rate`.
    pub fn first_success(&self, rate: f64) -> Option<usize> {
        self.rates.iter().position(|&r| r >= rate).map(|j| j + 1)
    }
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

/// Chase-combiner effective SNR of the current packet (power `current`) and
/// stored packets `stored[k]` with quantization variances `variances[k]`.
pub fn conventional_combined_snr(current: f64, stored: &[f64], snr: f64, variances: &[f64]) -> f64 {
    let total: f64 = current + stored.iter().sum::<f64>();
    let noise: f64 = current
        + stored
            .iter()
            .zip(variances)
            .map(|(g, v)| g * (v + 1.0))
            .sum::<f64>();
    if total == 0.0 {
        return 0.0;
    }
    snr * total * total / noise
}

/// Effective SNR of the combiner that weights every packet by its own noise
/// level.
pub fn optimal_combined_snr(current: f64, stored: &[f64], snr: f64, variances: &[f64]) -> f64 {
    snr * current
        + stored
            .iter()
            .zip(variances)
            .map(|(g, v)| snr * g / (1.0 + v))
            .sum::<f64>()
}

/// Adaptive-storing rule: keep the new packet iff the rate it enables exceeds
/// `eta` times the rate of the previously stored packets alone.
pub fn adaptive_filter(previous_rate: f64, candidate_rate: f64, eta: f64) -> bool {
    if eta.is_infinite() {
        return false;
    }
    candidate_rate > eta * previous_rate
}

fn should_store(cfg: &HarqConfig, previous_rate: f64, candidate_rate: f64) -> bool {
    match cfg.eta {
        None => true,
        Some(eta) => adaptive_filter(previous_rate, candidate_rate, eta),
    }
}

fn store_variances(powers: &[f64], stored: &[usize], snr: f64, buffer_c: f64) -> Option<Vec<f64>> {
    if stored.is_empty() {
        return Some(Vec::new());
    }
    let alloc = buffer_c / stored.len() as f64;
    stored
        .iter()
        .map(|&i| bb_noise_var(snr * powers[i], alloc))
        .collect()
}

fn sc_rate(
    current: Option<f64>,
    stored: &[f64],
    variances: &[f64],
    snr: f64,
    optimal: bool,
) -> f64 {
    let cur = current.unwrap_or(0.0);
    let eff = if optimal {
        optimal_combined_snr(cur, stored, snr, variances)
    } else {
        conventional_combined_snr(cur, stored, snr, variances)
    };
    log2_1p(eff)
}

/// Store-and-combine Chase combining.
pub fn trajectory_cc_sc(draw: &SessionDraw, cfg: &HarqConfig) -> RateTrajectory {
    let g = draw.powers();
    let n_max = cfg.n_max.min(g.len());
    let mut stored: Vec<usize> = Vec::new();
    let mut rates = Vec::with_capacity(n_max);
    let mut mask = Vec::with_capacity(n_max);
    for n in 0..n_max {
        // A zero allocation discards every stored packet.
        let (kept, vars) = match store_variances(&g, &stored, cfg.snr, cfg.buffer_c) {
            Some(v) => (stored.iter().map(|&i| g[i]).collect::<Vec<_>>(), v),
            None => (Vec::new(), Vec::new()),
        };
        let with = sc_rate(Some(g[n]), &kept, &vars, cfg.snr, cfg.optimal_combiner);
        rates.push(with);
        let without = if kept.is_empty() {
            0.0
        } else {
            sc_rate(None, &kept, &vars, cfg.snr, cfg.optimal_combiner)
        };
        let keep = cfg.buffer_c > 0.0 && should_store(cfg, without, with);
        if keep {
            stored.push(n);
        }
        mask.push(keep);
    }
    RateTrajectory {
        rates,
        stored_mask: mask,
    }
}

fn cs_rate(current: f64, state: &EffectiveNoiseState, snr: f64, optimal: bool) -> f64 {
    if optimal {
        let stored = if state.rho_sq > 0.0 {
            snr * state.signal_gain * state.signal_gain / state.rho_sq
        } else {
            0.0
        };
        return log2_1p(snr * current + stored);
    }
    let total = state.signal_gain + current;
    let noise = current + state.rho_sq;
    if total == 0.0 {
        return 0.0;
    }
    log2_1p(snr * total * total / noise)
}

/// Combine-and-store Chase combining.
pub fn trajectory_cc_cs(draw: &SessionDraw, cfg: &HarqConfig) -> RateTrajectory {
    let g = draw.powers();
    let n_max = cfg.n_max.min(g.len());
    let mut state = EffectiveNoiseState::EMPTY;
    let mut rates = Vec::with_capacity(n_max);
    let mut mask = Vec::with_capacity(n_max);
    for &gn in g.iter().take(n_max) {
        let with = cs_rate(gn, &state, cfg.snr, cfg.optimal_combiner);
        rates.push(with);
        let without = if state.rho_sq > 0.0 {
            log2_1p(cfg.snr * state.signal_gain * state.signal_gain / state.rho_sq)
        } else {
            0.0
        };
        let keep = cfg.buffer_c > 0.0 && should_store(cfg, without, with);
        if keep {
            state = cs_noise_recursion(state, gn, cfg.snr, cfg.buffer_c);
        } else {
            state.attempt += 1;
        }
        mask.push(keep);
    }
    RateTrajectory {
        rates,
        stored_mask: mask,
    }
}

/// Incremental redundancy: the rates of the current and the stored packets add.
pub fn trajectory_ir(draw: &SessionDraw, cfg: &HarqConfig) -> RateTrajectory {
    let g = draw.powers();
    let n_max = cfg.n_max.min(g.len());
    let mut stored: Vec<usize> = Vec::new();
    let mut rates = Vec::with_capacity(n_max);
    let mut mask = Vec::with_capacity(n_max);
    for n in 0..n_max {
        let from_stored: f64 = match store_variances(&g, &stored, cfg.snr, cfg.buffer_c) {
            Some(vars) => stored
                .iter()
                .zip(&vars)
                .map(|(&i, v)| log2_1p(cfg.snr * g[i] / (1.0 + v)))
                .sum(),
            None => 0.0,
        };
        let with = log2_1p(cfg.snr * g[n]) + from_stored;
        rates.push(with);
        let keep = cfg.buffer_c > 0.0 && should_store(cfg, from_stored, with);
        if keep {
            stored.push(n);
        }
        mask.push(keep);
    }
    RateTrajectory {
        rates,
        stored_mask: mask,
    }
}

pub fn trajectory_ti(draw: &SessionDraw, cfg: &HarqConfig) -> RateTrajectory {
    let g = draw.powers();
    let n_max = cfg.n_max.min(g.len());
    RateTrajectory {
        rates: g
            .iter()
            .take(n_max)
            .map(|&gn| log2_1p(cfg.snr * gn))
            .collect(),
        stored_mask: vec![false; n_max],
    }
}

pub fn trajectory(draw: &SessionDraw, cfg: &HarqConfig) -> RateTrajectory {
    match cfg.scheme {
        Scheme::Ti => trajectory_ti(draw, cfg),
        Scheme::CcSc => trajectory_cc_sc(draw, cfg),
        Scheme::CcCs => trajectory_cc_cs(draw, cfg),
        Scheme::Ir => trajectory_ir(draw, cfg),
    }
}

/// Channel draw of session `session` under the configuration's seeding.
pub fn session_draw(cfg: &HarqConfig, session: u64) -> SessionDraw {
    let mut rng = RngContract::new(cfg.seed).stream(cfg.stream, session, Purpose::Channel);
    SessionDraw::sample(&mut rng, cfg.n_max)
}

/// Monte Carlo failure curve with an arbitrary trajectory function.
pub fn estimate_pe_with<F>(cfg: &HarqConfig, workers: usize, trajectory_fn: F) -> PeCurve
where
    F: Fn(&SessionDraw, &HarqConfig) -> RateTrajectory + Sync,
{
    let acc = run_sessions(cfg.trials, cfg.n_max, 1, workers, |s, out| {
        let draw = session_draw(cfg, s);
        out[0] = trajectory_fn(&draw, cfg).first_success(cfg.rate);
    });
    acc.pe_curve(0)
}

pub fn estimate_pe(cfg: &HarqConfig, workers: usize) -> PeCurve {
    estimate_pe_with(cfg, workers, trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ti_pe_closed_form;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(scheme: Scheme, c: f64, snr: f64) -> HarqConfig {
        HarqConfig {
            scheme,
            buffer_c: c,
            snr,
            n_max: 4,
            ..HarqConfig::default()
        }
    }

    fn random_draws(n: usize, len: usize) -> Vec<SessionDraw> {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        (0..n).map(|_| SessionDraw::sample(&mut rng, len)).collect()
    }

    #[test]
    fn sc_examples() {
        let d = SessionDraw::from_powers(&[1.0, 1.0]);
        let t = trajectory_cc_sc(
            &d,
            &HarqConfig {
                n_max: 2,
                ..cfg(Scheme::CcSc, 1.0, 1.0)
            },
        );
        assert!((t.rates[0] - 1.0).abs() < 1e-15);
        assert!((t.rates[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cs_examples() {
        let d = SessionDraw::from_powers(&[1.0, 1.0]);
        let t = trajectory_cc_cs(
            &d,
            &HarqConfig {
                n_max: 2,
                ..cfg(Scheme::CcCs, 1.0, 1.0)
            },
        );
        assert!((t.rates[0] - 1.0).abs() < 1e-15);
        assert!((t.rates[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ir_examples() {
        let d = SessionDraw::from_powers(&[1.0, 1.0]);
        let t = trajectory_ir(
            &d,
            &HarqConfig {
                n_max: 2,
                ..cfg(Scheme::Ir, 1.0, 1.0)
            },
        );
        assert!((t.rates[1] - (1.0 + (4.0f64 / 3.0).log2())).abs() < 1e-15);
    }

    #[test]
    fn first_attempt_ignores_buffer() {
        for d in random_draws(50, 4) {
            let g0 = d.powers()[0];
            for scheme in [Scheme::CcSc, Scheme::CcCs, Scheme::Ir] {
                for c in [0.0, 0.5, 3.0, 200.0] {
                    let t = trajectory(&d, &cfg(scheme, c, 10.0));
                    assert!((t.rates[0] - (1.0 + 10.0 * g0).log2()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn large_buffer_limits() {
        for d in random_draws(200, 4) {
            let g = d.powers();
            let mut sum = 0.0;
            let mut ir = 0.0;
            let sc = trajectory_cc_sc(&d, &cfg(Scheme::CcSc, 200.0, 10.0));
            let cs = trajectory_cc_cs(&d, &cfg(Scheme::CcCs, 200.0, 10.0));
            let irt = trajectory_ir(&d, &cfg(Scheme::Ir, 200.0, 10.0));
            for n in 0..4 {
                sum += g[n];
                ir += (1.0 + 10.0 * g[n]).log2();
                let chase = (1.0 + 10.0 * sum).log2();
                assert!((sc.rates[n] - chase).abs() < 1e-9);
                assert!((cs.rates[n] - chase).abs() < 1e-9);
                assert!((irt.rates[n] - ir).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_buffer_is_type_one() {
        for d in random_draws(50, 4) {
            let ti = trajectory_ti(&d, &cfg(Scheme::Ti, 0.0, 10.0));
            for scheme in [Scheme::CcSc, Scheme::CcCs, Scheme::Ir] {
                let t = trajectory(&d, &cfg(scheme, 0.0, 10.0));
                for (a, b) in t.rates.iter().zip(&ti.rates) {
                    assert!((a - b).abs() < 1e-12);
                }
                assert!(t.stored_mask.iter().all(|s| !s));
            }
        }
    }

    #[test]
    fn finite_buffer_rate_can_drop() {
        // A strong first packet followed by a faint one: the heavily quantized
        // combination is worse than the first packet alone.
        let d = SessionDraw::from_powers(&[3.0, 0.01]);
        let t = trajectory_cc_sc(
            &d,
            &HarqConfig {
                n_max: 2,
                ..cfg(Scheme::CcSc, 0.5, 10.0)
            },
        );
        assert!(t.rates[1] < t.rates[0]);
        let curve = estimate_pe_with(
            &HarqConfig {
                n_max: 2,
                trials: 1,
                rate: t.rates[0] * 0.99,
                ..cfg(Scheme::CcSc, 0.5, 10.0)
            },
            1,
            |_, _| t.clone(),
        );
        assert_eq!(curve.pe, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn optimal_combiner_examples() {
        assert!((optimal_combined_snr(1.0, &[1.0], 1.0, &[3.0]) - 1.25).abs() < 1e-15);
        assert!((optimal_combined_snr(0.5, &[1.0, 2.0], 2.0, &[0.0, 0.0]) - 7.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let n = rng.random_range(1..6);
            let cur: f64 = rng.random::<f64>() * 3.0;
            let stored: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 3.0).collect();
            let vars: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
            let snr = 0.1 + rng.random::<f64>() * 20.0;
            let opt = optimal_combined_snr(cur, &stored, snr, &vars);
            let conv = conventional_combined_snr(cur, &stored, snr, &vars);
            assert!(opt >= conv * (1.0 - 1e-12), "{opt} < {conv}");
        }
    }

    #[test]
    fn adaptive_rule() {
        assert!(adaptive_filter(1.0, 1.5, 1.0));
        assert!(!adaptive_filter(2.0, 1.5, 1.0));
        assert!(!adaptive_filter(0.0, 5.0, f64::INFINITY));
        assert!(adaptive_filter(0.0, 0.1, 1.7));

        // The stored set never shrinks and only a rejected packet is skipped.
        for d in random_draws(100, 6) {
            let c = HarqConfig {
                eta: Some(1.2),
                n_max: 6,
                ..cfg(Scheme::CcSc, 2.0, 10.0)
            };
            let t = trajectory_cc_sc(&d, &c);
            let full = trajectory_cc_sc(
                &d,
                &HarqConfig {
                    eta: None,
                    ..c.clone()
                },
            );
            assert!(full.stored_mask.iter().all(|&s| s));
            assert_eq!(t.rates[0], full.rates[0]);
        }
    }

    #[test]
    fn estimator_edges() {
        let base = HarqConfig {
            trials: 2000,
            ..cfg(Scheme::Ir, 2.0, 10.0)
        };
        let zero = estimate_pe(
            &HarqConfig {
                rate: 0.0,
                ..base.clone()
            },
            1,
        );
        assert!(zero.pe[1..].iter().all(|&p| p == 0.0));
        let inf = estimate_pe(
            &HarqConfig {
                rate: 1e9,
                ..base.clone()
            },
            1,
        );
        assert!(inf.pe.iter().all(|&p| p == 1.0));
        inf.validate().unwrap();
    }

    #[test]
    fn ti_estimate_matches_closed_form() {
        let c = HarqConfig {
            scheme: Scheme::Ti,
            rate: 4.0,
            snr: 10.0,
            n_max: 3,
            trials: 100_000,
            ..HarqConfig::default()
        };
        let curve = estimate_pe(&c, 1);
        for n in 1..=3 {
            let exact = ti_pe_closed_form(10.0, 4.0, n);
            let se = (exact * (1.0 - exact) / 1e5).sqrt();
            assert!(
                (curve.pe[n] - exact).abs() < 3.0 * se,
                "n={n}: {} vs {exact}",
                curve.pe[n]
            );
        }
    }
}
