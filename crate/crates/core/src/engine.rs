//! Deterministic Monte Carlo driver.
//!
//! Every session draws its randomness from a ChaCha stream keyed by
//! `(master_seed, config_id, session, purpose)`, so a session can be replayed
//! in isolation and the split of sessions across workers never changes the
//! result. Per-chunk accumulators only hold integer counts and merge by
//! addition.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    throughput_from_pe, HarqConfig, Modulation, PeCurve, Scheme, StorageDomain, ThroughputResult,
};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const CHUNK: u64 = 256;

/// What a random stream is used for. Distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Channel = 1,
    StoreFlags = 2,
    DecodeNoise = 3,
}

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngContract {
    pub master_seed: u64,
}

impl RngContract {
    pub fn new(master_seed: u64) -> Self {
        RngContract { master_seed }
    }

    /// Independent stream for one `(config, session, purpose)` tuple.
    pub fn stream(&self, config_id: u64, session: u64, purpose: Purpose) -> ChaCha8Rng {
        let mut h = mix64(self.master_seed ^ GOLDEN);
        h = mix64(h ^ config_id.wrapping_mul(GOLDEN).wrapping_add(1));
        h = mix64(h ^ session.wrapping_mul(0xD6E8_FEB8_6659_FD93).wrapping_add(2));
        h = mix64(
            h ^ (purpose as u64)
                .wrapping_mul(0xA076_1D64_78BD_642F)
                .wrapping_add(3),
        );
        let mut seed = [0u8; 32];
        for (k, chunk) in seed.chunks_exact_mut(8).enumerate() {
            chunk.copy_from_slice(
                &mix64(h.wrapping_add((k as u64 + 1).wrapping_mul(GOLDEN))).to_le_bytes(),
            );
        }
        ChaCha8Rng::from_seed(seed)
    }
}

/// Per-attempt decoding counts for one or more layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EstimatorAccumulator {
    n_max: usize,
    trials: u64,
    /// `first_success[layer][k]`: sessions whose layer first decoded at
    /// attempt `k`; index 0 counts sessions that never decoded.
    first_success: Vec<Vec<u64>>,
}

impl EstimatorAccumulator {
    pub fn new(n_max: usize, layers: usize) -> Self {
        EstimatorAccumulator {
            n_max,
            trials: 0,
            first_success: vec![vec![0; n_max + 1]; layers],
        }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    /// Records one session; `outcomes[layer]` is the 1-based attempt at which
    /// the layer decoded.
    pub fn record(&mut self, outcomes: &[Option<usize>]) {
        debug_assert_eq!(outcomes.len(), self.first_success.len());
        self.trials += 1;
        for (hist, o) in self.first_success.iter_mut().zip(outcomes) {
            match o {
                Some(k) if *k >= 1 && *k <= self.n_max => hist[*k] += 1,
                _ => hist[0] += 1,
            }
        }
    }

    pub fn merge(&mut self, other: &EstimatorAccumulator) {
        assert_eq!(self.n_max, other.n_max);
        assert_eq!(self.first_success.len(), other.first_success.len());
        self.trials += other.trials;
        for (a, b) in self.first_success.iter_mut().zip(&other.first_success) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    /// Sessions of `layer` still undecoded after attempt `n`, for `n = 1..=n_max`.
    pub fn failures(&self, layer: usize) -> Vec<u64> {
        let hist = &self.first_success[layer];
        let mut decoded = 0;
        (1..=self.n_max)
            .map(|n| {
                decoded += hist[n];
                self.trials - decoded
            })
            .collect()
    }

    pub fn pe_curve(&self, layer: usize) -> PeCurve {
        PeCurve::from_counts(&self.failures(layer), self.trials)
    }
}

/// Runs `trials` sessions on `workers` threads (0 = all available cores).
///
/// `session` fills in the outcome of one session; it must depend on the
/// session index only.
pub fn run_sessions<F>(
    trials: u64,
    n_max: usize,
    layers: usize,
    workers: usize,
    session: F,
) -> EstimatorAccumulator
where
    F: Fn(u64, &mut Vec<Option<usize>>) + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    let run_chunk = |c: u64| {
        let mut acc = EstimatorAccumulator::new(n_max, layers);
        let mut out = vec![None; layers];
        for s in c * CHUNK..((c + 1) * CHUNK).min(trials) {
            out.iter_mut().for_each(|o| *o = None);
            session(s, &mut out);
            acc.record(&out);
        }
        acc
    };
    let merge = |mut a: EstimatorAccumulator, b: EstimatorAccumulator| {
        a.merge(&b);
        a
    };
    let empty = || EstimatorAccumulator::new(n_max, layers);

    if workers == 1 {
        return (0..chunks).map(run_chunk).fold(empty(), merge);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(run_chunk)
            .reduce(empty, merge)
    })
}

/// Evaluates one configuration point.
pub fn run_point(cfg: &HarqConfig, workers: usize) -> Result<(PeCurve, ThroughputResult)> {
    cfg.validate()?;
    let curve = match cfg.modulation {
        Modulation::Gaussian => crate::gaussian::estimate_pe(cfg, workers),
        Modulation::Qam { .. } => crate::bicm::estimate_pe(cfg, workers)?,
    };
    let t = throughput_from_pe(&curve, cfg.rate);
    Ok((curve, t))
}

/// One axis of a parameter sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum Axis {
    Scheme(Vec<Scheme>),
    Domain(Vec<StorageDomain>),
    Modulation(Vec<Modulation>),
    Snr(Vec<f64>),
    Rate(Vec<f64>),
    BufferC(Vec<f64>),
    Eta(Vec<Option<f64>>),
}

impl Axis {
    fn len(&self) -> usize {
        match self {
            Axis::Scheme(v) => v.len(),
            Axis::Domain(v) => v.len(),
            Axis::Modulation(v) => v.len(),
            Axis::Snr(v) | Axis::Rate(v) | Axis::BufferC(v) => v.len(),
            Axis::Eta(v) => v.len(),
        }
    }

    fn apply(&self, k: usize, cfg: &mut HarqConfig) {
        match self {
            Axis::Scheme(v) => cfg.scheme = v[k],
            Axis::Domain(v) => cfg.domain = v[k],
            Axis::Modulation(v) => cfg.modulation = v[k],
            Axis::Snr(v) => cfg.snr = v[k],
            Axis::Rate(v) => cfg.rate = v[k],
            Axis::BufferC(v) => cfg.buffer_c = v[k],
            Axis::Eta(v) => cfg.eta = v[k],
        }
    }
}

/// Cartesian product of the axes, first axis outermost.
pub fn expand_grid(base: &HarqConfig, axes: &[Axis]) -> Result<Vec<HarqConfig>> {
    if axes.iter().any(|a| a.len() == 0) {
        return Err(Error::InvalidConfig("sweep axes must be non-empty".into()));
    }
    let mut out = vec![base.clone()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|cfg| {
                (0..axis.len()).map(move |k| {
                    let mut c = cfg.clone();
                    axis.apply(k, &mut c);
                    c
                })
            })
            .collect();
    }
    Ok(out)
}

#[derive(Debug)]
pub struct SweepRow {
    pub config: HarqConfig,
    pub outcome: Result<(PeCurve, ThroughputResult)>,
}

/// Evaluates every grid point in order; a failing point is reported in its
/// row and does not stop the sweep.
pub fn run_sweep(base: &HarqConfig, axes: &[Axis], workers: usize) -> Result<Vec<SweepRow>> {
    let points = expand_grid(base, axes)?;
    Ok(points
        .into_iter()
        .map(|config| {
            let outcome = run_point(&config, workers);
            SweepRow { config, outcome }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let c = RngContract::new(42);
        let a: Vec<u64> = (0..4)
            .map(|_| 0)
            .scan(c.stream(0, 5, Purpose::Channel), |r, _| Some(r.random()))
            .collect();
        let b: Vec<u64> = (0..4)
            .map(|_| 0)
            .scan(c.stream(0, 5, Purpose::Channel), |r, _| Some(r.random()))
            .collect();
        assert_eq!(a, b);
        let mut firsts = std::collections::HashSet::new();
        for cfg in 0..4 {
            for s in 0..50 {
                for p in [Purpose::Channel, Purpose::StoreFlags, Purpose::DecodeNoise] {
                    let v: u64 = c.stream(cfg, s, p).random();
                    assert!(firsts.insert(v));
                }
            }
        }
        let other: u64 = RngContract::new(43).stream(0, 5, Purpose::Channel).random();
        assert_ne!(other, a[0]);
    }

    #[test]
    fn merge_is_order_independent() {
        let outcomes: Vec<[Option<usize>; 2]> = (0..500)
            .map(|s: usize| {
                let k = (mix64(s as u64) % 6) as usize;
                let first = if k == 0 { None } else { Some(k) };
                let second = first.map(|k| (k + (s % 3)).min(5)).filter(|_| s % 7 != 0);
                [first, second]
            })
            .collect();
        let build = |order: &[usize], split: usize| {
            let mut parts = vec![EstimatorAccumulator::new(5, 2); split];
            for (i, &s) in order.iter().enumerate() {
                parts[i % split].record(&outcomes[s]);
            }
            parts
                .into_iter()
                .rev()
                .fold(EstimatorAccumulator::new(5, 2), |mut a, b| {
                    a.merge(&b);
                    a
                })
        };
        let forward: Vec<usize> = (0..500).collect();
        let mut shuffled = forward.clone();
        shuffled.sort_by_key(|&s| mix64(s as u64 ^ 99));
        let a = build(&forward, 1);
        let b = build(&shuffled, 7);
        assert_eq!(a, b);
        for layer in 0..2 {
            for w in a.failures(layer).windows(2) {
                assert!(w[1] <= w[0]);
            }
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let f = |s: u64, out: &mut Vec<Option<usize>>| {
            let mut rng = RngContract::new(3).stream(0, s, Purpose::Channel);
            let k: usize = rng.random_range(0..5);
            out[0] = if k == 0 { None } else { Some(k) };
        };
        let one = run_sessions(10_000, 4, 1, 1, f);
        let many = run_sessions(10_000, 4, 1, 4, f);
        assert_eq!(one, many);
    }

    #[test]
    fn grid_expansion_order() {
        let base = HarqConfig::default();
        let pts = expand_grid(
            &base,
            &[
                Axis::BufferC(vec![1.0, 2.0]),
                Axis::Rate(vec![3.0, 4.0, 5.0]),
            ],
        )
        .unwrap();
        let got: Vec<(f64, f64)> = pts.iter().map(|c| (c.buffer_c, c.rate)).collect();
        assert_eq!(
            got,
            vec![
                (1.0, 3.0),
                (1.0, 4.0),
                (1.0, 5.0),
                (2.0, 3.0),
                (2.0, 4.0),
                (2.0, 5.0)
            ]
        );
        assert!(expand_grid(&base, &[Axis::Snr(vec![])]).is_err());
    }

    #[test]
    fn zero_trials_rejected() {
        let cfg = HarqConfig {
            trials: 0,
            ..HarqConfig::default()
        };
        assert!(run_point(&cfg, 1).is_err());
    }
}
