//! Experiment runner behind the `harqbuf` binary.

pub mod report;
pub mod spec;

pub use report::{emit_csv, CsvTable, ThroughputRow};
pub use spec::{parse_spec, ExperimentKind, ExperimentSpec, Params};

use crate::bicm::mi_rows;
use crate::engine::run_point;
use crate::error::Result;
use crate::fbl::{optimize_blocklength, FblConfig};
use crate::layered::{estimate_layered_pe, optimize_rate1, LayeredConfig};
use crate::mimo::{estimate_pe_mimo, identity_allocation, waterfill, Allocation, MimoConfig};
use crate::model::{linear_to_db, throughput_from_pe, HarqConfig, PeCurve};
use report::{fmt_float, throughput_header};
use spec::{FblGrid, HarqGrid, LayeredGrid, MiGrid, MimoGrid, WaterfillGrid};

/// Output of one experiment. Points that failed are listed in `failures`
/// and appear in the table with `NaN` results.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub table: CsvTable,
    pub failures: Vec<String>,
}

/// Runs every point of the spec on `workers` threads (0 = all cores).
pub fn execute(spec: &ExperimentSpec, workers: usize) -> Result<Outcome> {
    let mut failures = Vec::new();
    let table = match &spec.params {
        Params::Harq(g) => harq_table(spec, g, workers, &mut failures),
        Params::Layered(g) => layered_table(spec, g, workers, &mut failures),
        Params::Mimo(g) => mimo_table(spec, g, workers, &mut failures),
        Params::Fbl(g) => fbl_table(spec, g, workers, &mut failures),
        Params::MiTable(g) => mi_table(g)?,
        Params::Waterfill(g) => waterfill_table(g)?,
    };
    Ok(Outcome { table, failures })
}

fn fmt_eta(eta: Option<f64>) -> String {
    match eta {
        None => "none".to_string(),
        Some(x) => fmt_float(x),
    }
}

fn pe_columns(curve: Option<&PeCurve>, n_max: usize) -> Vec<f64> {
    match curve {
        Some(c) => c.pe[1..].to_vec(),
        None => vec![f64::NAN; n_max],
    }
}

fn describe(cfg: &HarqConfig) -> String {
    format!(
        "{} {} {} snr_db={} rate={} c={}",
        cfg.scheme,
        cfg.domain.as_str(),
        cfg.modulation.label(),
        linear_to_db(cfg.snr),
        cfg.rate,
        cfg.buffer_c
    )
}

fn harq_row(spec: &ExperimentSpec, cfg: &HarqConfig, extras: Vec<String>) -> ThroughputRow {
    ThroughputRow {
        experiment: spec.kind.as_str().to_string(),
        scheme: cfg.scheme.as_str().to_string(),
        domain: cfg.domain.as_str().to_string(),
        modulation: cfg.modulation.label(),
        snr_db: linear_to_db(cfg.snr),
        rate: cfg.rate,
        c: cfg.buffer_c,
        n_max: cfg.n_max,
        extras,
        pe: Vec::new(),
        throughput: f64::NAN,
        ci95: f64::NAN,
        trials: cfg.trials,
        seed: cfg.seed,
    }
}

fn harq_table(
    spec: &ExperimentSpec,
    g: &HarqGrid,
    workers: usize,
    failures: &mut Vec<String>,
) -> CsvTable {
    let mut table = CsvTable::new(throughput_header(&["eta", "optimal_combiner"], g.n_max));
    for cfg in g.points(spec.seed, spec.trials) {
        let extras = vec![fmt_eta(cfg.eta), u8::from(cfg.optimal_combiner).to_string()];
        let mut row = harq_row(spec, &cfg, extras);
        match run_point(&cfg, workers) {
            Ok((curve, t)) => {
                row.pe = pe_columns(Some(&curve), cfg.n_max);
                row.throughput = t.throughput;
                row.ci95 = t.ci_halfwidth;
            }
            Err(e) => {
                failures.push(format!("{}: {e}", describe(&cfg)));
                row.pe = pe_columns(None, cfg.n_max);
            }
        }
        table.push(row.cells());
    }
    table
}

fn layered_table(
    spec: &ExperimentSpec,
    g: &LayeredGrid,
    workers: usize,
    failures: &mut Vec<String>,
) -> CsvTable {
    let extras = [
        "alpha",
        "rate1",
        "rate2",
        "pe1_final",
        "single_layer_throughput",
        "single_layer_ci95",
        "gain",
    ];
    let mut table = CsvTable::new(throughput_header(&extras, g.harq.n_max));
    for cfg in g.harq.points(spec.seed, spec.trials) {
        for &alpha in &g.alphas {
            let point = || -> Result<(LayeredConfig, PeCurve, PeCurve, f64, f64, f64, f64)> {
                let (best, _) = optimize_rate1(&cfg, alpha, g.rate1_step, workers)?;
                let lcfg = LayeredConfig::with_split(cfg.clone(), best, alpha);
                let (pe1, pe2) = estimate_layered_pe(&lcfg, workers)?;
                let t = crate::layered::layered_throughput(&pe1, &pe2, lcfg.rate1, lcfg.rate2);
                let (_, single) = run_point(&cfg, workers)?;
                Ok((
                    lcfg,
                    pe1,
                    pe2,
                    t.throughput,
                    t.ci_halfwidth,
                    single.throughput,
                    single.ci_halfwidth,
                ))
            };
            match point() {
                Ok((lcfg, pe1, pe2, t, ci, single, single_ci)) => {
                    let extras = vec![
                        fmt_float(alpha),
                        fmt_float(lcfg.rate1),
                        fmt_float(lcfg.rate2),
                        fmt_float(pe1.pe[cfg.n_max]),
                        fmt_float(single),
                        fmt_float(single_ci),
                        fmt_float(t / single - 1.0),
                    ];
                    let mut row = harq_row(spec, &cfg, extras);
                    row.pe = pe_columns(Some(&pe2), cfg.n_max);
                    row.throughput = t;
                    row.ci95 = ci;
                    table.push(row.cells());
                }
                Err(e) => {
                    failures.push(format!("{} alpha={alpha}: {e}", describe(&cfg)));
                    let mut extras = vec![fmt_float(alpha)];
                    extras.extend(std::iter::repeat_n(fmt_float(f64::NAN), 6));
                    let mut row = harq_row(spec, &cfg, extras);
                    row.pe = pe_columns(None, cfg.n_max);
                    table.push(row.cells());
                }
            }
        }
    }
    table
}

pub(crate) fn mimo_points(g: &MimoGrid, seed: u64, trials: u64) -> Vec<MimoConfig> {
    let mut out = Vec::new();
    let arrays: Vec<(usize, usize)> = match &g.nrs {
        Some(nrs) => g
            .nts
            .iter()
            .flat_map(|&nt| nrs.iter().map(move |&nr| (nt, nr)))
            .collect(),
        None => g.nts.iter().map(|&n| (n, n)).collect(),
    };
    for (nt, nr) in arrays {
        {
            for &snr in &g.snrs {
                for &rate in &g.rates {
                    for &buffer_c in &g.buffers {
                        out.push(MimoConfig {
                            nt,
                            nr,
                            snr: if g.total_snr { snr / nr as f64 } else { snr },
                            rate,
                            buffer_c,
                            n_max: g.n_max,
                            trials,
                            seed,
                            stream: 0,
                            allocation: Allocation::Waterfill,
                        });
                    }
                }
            }
        }
    }
    out
}

fn mimo_table(
    spec: &ExperimentSpec,
    g: &MimoGrid,
    workers: usize,
    failures: &mut Vec<String>,
) -> CsvTable {
    let extras = [
        "nt",
        "nr",
        "total_snr_db",
        "throughput_identity",
        "ci95_identity",
        "gain",
    ];
    let mut table = CsvTable::new(throughput_header(&extras, g.n_max));
    for cfg in mimo_points(g, spec.seed, spec.trials) {
        let mut row = ThroughputRow {
            experiment: spec.kind.as_str().to_string(),
            scheme: "IR".to_string(),
            domain: "baseband".to_string(),
            modulation: "gaussian".to_string(),
            snr_db: linear_to_db(cfg.snr),
            rate: cfg.rate,
            c: cfg.buffer_c,
            n_max: cfg.n_max,
            extras: Vec::new(),
            pe: pe_columns(None, cfg.n_max),
            throughput: f64::NAN,
            ci95: f64::NAN,
            trials: cfg.trials,
            seed: cfg.seed,
        };
        let both = estimate_pe_mimo(&cfg, workers).and_then(|wf| {
            let id = estimate_pe_mimo(
                &MimoConfig {
                    allocation: Allocation::Identity,
                    ..cfg.clone()
                },
                workers,
            )?;
            Ok((wf, id))
        });
        match both {
            Ok((wf, id)) => {
                let t_wf = throughput_from_pe(&wf, cfg.rate);
                let t_id = throughput_from_pe(&id, cfg.rate);
                row.extras = vec![
                    cfg.nt.to_string(),
                    cfg.nr.to_string(),
                    fmt_float(linear_to_db(cfg.snr * cfg.nr as f64)),
                    fmt_float(t_id.throughput),
                    fmt_float(t_id.ci_halfwidth),
                    fmt_float(t_wf.throughput - t_id.throughput),
                ];
                row.pe = pe_columns(Some(&wf), cfg.n_max);
                row.throughput = t_wf.throughput;
                row.ci95 = t_wf.ci_halfwidth;
            }
            Err(e) => {
                failures.push(format!(
                    "mimo {}x{} snr_db={}: {e}",
                    cfg.nr,
                    cfg.nt,
                    linear_to_db(cfg.snr)
                ));
                let nan = fmt_float(f64::NAN);
                let total = fmt_float(linear_to_db(cfg.snr * cfg.nr as f64));
                row.extras = vec![
                    cfg.nt.to_string(),
                    cfg.nr.to_string(),
                    total,
                    nan.clone(),
                    nan.clone(),
                    nan,
                ];
            }
        }
        table.push(row.cells());
    }
    table
}

pub(crate) fn fbl_points(g: &FblGrid, seed: u64, trials: u64) -> Vec<FblConfig> {
    let mut out = Vec::new();
    for &info_bits in &g.info_bits {
        for &total_buffer in &g.total_buffers {
            for &eps_q in &g.eps_q {
                for &snr in &g.snrs {
                    out.push(FblConfig {
                        info_bits,
                        blocklength: g.blocklengths[0],
                        total_buffer,
                        eps_q,
                        snr,
                        n_max: g.n_max,
                        trials,
                        seed,
                        stream: 0,
                    });
                }
            }
        }
    }
    out
}

fn fbl_table(
    spec: &ExperimentSpec,
    g: &FblGrid,
    workers: usize,
    failures: &mut Vec<String>,
) -> CsvTable {
    let extras = [
        "info_bits",
        "total_buffer",
        "eps_q",
        "blocklength",
        "delay",
        "optimal",
    ];
    let mut table = CsvTable::new(throughput_header(&extras, g.n_max));
    for cfg in fbl_points(g, spec.seed, spec.trials) {
        let base = |l: f64| ThroughputRow {
            experiment: spec.kind.as_str().to_string(),
            scheme: "IR".to_string(),
            domain: "baseband".to_string(),
            modulation: "gaussian".to_string(),
            snr_db: linear_to_db(cfg.snr),
            rate: cfg.info_bits / l,
            c: cfg.total_buffer / l,
            n_max: cfg.n_max,
            extras: Vec::new(),
            pe: pe_columns(None, cfg.n_max),
            throughput: f64::NAN,
            ci95: f64::NAN,
            trials: cfg.trials,
            seed: cfg.seed,
        };
        match optimize_blocklength(&cfg, &g.blocklengths, workers) {
            Ok((best, rows)) => {
                for r in rows {
                    let mut row = base(r.blocklength);
                    row.extras = vec![
                        fmt_float(r.info_bits),
                        fmt_float(r.total_buffer),
                        fmt_float(r.eps_q),
                        fmt_float(r.blocklength),
                        fmt_float(r.delay),
                        u8::from(r.blocklength == best).to_string(),
                    ];
                    row.pe = pe_columns(Some(&r.curve), cfg.n_max);
                    row.throughput = r.result.throughput;
                    row.ci95 = r.result.ci_halfwidth;
                    table.push(row.cells());
                }
            }
            Err(e) => {
                failures.push(format!(
                    "fbl b={} B_C={} eps_q={}: {e}",
                    cfg.info_bits, cfg.total_buffer, cfg.eps_q
                ));
                for &l in &g.blocklengths {
                    let mut row = base(l);
                    let nan = fmt_float(f64::NAN);
                    row.extras = vec![
                        fmt_float(cfg.info_bits),
                        fmt_float(cfg.total_buffer),
                        fmt_float(cfg.eps_q),
                        fmt_float(l),
                        nan,
                        "0".to_string(),
                    ];
                    table.push(row.cells());
                }
            }
        }
    }
    table
}

fn mi_table(g: &MiGrid) -> Result<CsvTable> {
    let mut table = CsvTable::new(
        ["m", "snr_db", "gain", "j", "mi_bits"]
            .map(String::from)
            .to_vec(),
    );
    for &m in &g.bits {
        for r in mi_rows(m, &g.snrs, &g.gains)? {
            table.push(vec![
                r.m.to_string(),
                fmt_float(linear_to_db(r.snr)),
                fmt_float(r.gain),
                r.j.to_string(),
                fmt_float(r.mi_bits),
            ]);
        }
    }
    Ok(table)
}

fn waterfill_table(g: &WaterfillGrid) -> Result<CsvTable> {
    let header = [
        "budget",
        "mu",
        "component",
        "eigenvalue",
        "alpha",
        "spent_bits",
        "stored_rate",
        "identity_stored_rate",
    ];
    let mut table = CsvTable::new(header.map(String::from).to_vec());
    let mut eigs = g.eigenvalues.clone();
    eigs.sort_by(|a, b| b.total_cmp(a));
    for &budget in &g.budgets {
        let wf = waterfill(&eigs, budget)?;
        let id = identity_allocation(&eigs, budget)?;
        for (l, (&lambda, &alpha)) in eigs.iter().zip(&wf.gains).enumerate() {
            table.push(vec![
                fmt_float(budget),
                fmt_float(wf.mu),
                (l + 1).to_string(),
                fmt_float(lambda),
                fmt_float(alpha),
                fmt_float(wf.spent()),
                fmt_float(wf.stored_rate()),
                fmt_float(id.stored_rate()),
            ]);
        }
    }
    Ok(table)
}
