//! Behaviour of the throughput interval.

use harqbuf::engine::run_point;
use harqbuf::model::db_to_linear;
use harqbuf::{HarqConfig, Scheme};

fn cfg(trials: u64, seed: u64) -> HarqConfig {
    HarqConfig {
        scheme: Scheme::Ir,
        snr: db_to_linear(10.0),
        rate: 4.0,
        buffer_c: 1.0,
        n_max: 10,
        trials,
        seed,
        ..HarqConfig::default()
    }
}

#[test]
fn interval_halves_with_four_times_the_sessions() {
    let small = run_point(&cfg(5_000, 1), 0).unwrap().1.ci_halfwidth;
    let large = run_point(&cfg(20_000, 1), 0).unwrap().1.ci_halfwidth;
    let ratio = large / small;
    assert!((0.45..=0.55).contains(&ratio), "ratio {ratio}");
}

#[test]
fn interval_matches_spread_across_seeds() {
    let estimates: Vec<(f64, f64)> = (0..60)
        .map(|seed| {
            let t = run_point(&cfg(2_000, 100 + seed), 0).unwrap().1;
            (t.throughput, t.ci_halfwidth)
        })
        .collect();
    let n = estimates.len() as f64;
    let mean = estimates.iter().map(|e| e.0).sum::<f64>() / n;
    let sd = (estimates.iter().map(|e| (e.0 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let predicted = estimates.iter().map(|e| e.1).sum::<f64>() / n / 1.96;
    let ratio = sd / predicted;
    assert!(
        (0.7..=1.3).contains(&ratio),
        "empirical sd {sd}, predicted {predicted}"
    );
    let covered = estimates
        .iter()
        .filter(|e| (e.0 - mean).abs() <= e.1)
        .count();
    assert!(covered >= 50, "{covered}/60 intervals cover the mean");
}
