//! Experiment specification files.
//!
//! A spec is a TOML document with a few top-level keys and a `[params]`
//! table. Every parameter may be a scalar or an array; arrays are grids.
//!
//! ```toml
//! kind = "throughput_vs_C"
//! seed = 7
//! trials = 100000
//! output = "tvsc.csv"
//!
//! [params]
//! scheme = ["CC_SC", "CC_CS", "IR"]
//! snr_db = 10
//! rate = 4
//! c = [0, 1, 2, 3, 4, 5]
//! n_max = 10
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Deserialize;
use toml::{Spanned, Value};

use crate::error::{Error, Result};
use crate::model::{db_to_linear, HarqConfig, Modulation, Scheme, StorageDomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    ThroughputVsC,
    ThroughputVsR,
    BicmCompare,
    Layered,
    Mimo,
    FblBlocklength,
    MiTable,
    WaterfillDemo,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::ThroughputVsC,
        ExperimentKind::ThroughputVsR,
        ExperimentKind::BicmCompare,
        ExperimentKind::Layered,
        ExperimentKind::Mimo,
        ExperimentKind::FblBlocklength,
        ExperimentKind::MiTable,
        ExperimentKind::WaterfillDemo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::ThroughputVsC => "throughput_vs_C",
            ExperimentKind::ThroughputVsR => "throughput_vs_R",
            ExperimentKind::BicmCompare => "bicm_compare",
            ExperimentKind::Layered => "layered",
            ExperimentKind::Mimo => "mimo",
            ExperimentKind::FblBlocklength => "fbl_blocklength",
            ExperimentKind::MiTable => "mi_table",
            ExperimentKind::WaterfillDemo => "waterfill_demo",
        }
    }

    pub fn parse(s: &str) -> Option<ExperimentKind> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
    }
}

/// Grid of scalar-model points.
#[derive(Debug, Clone, PartialEq)]
pub struct HarqGrid {
    pub schemes: Vec<Scheme>,
    pub domains: Vec<StorageDomain>,
    pub modulations: Vec<Modulation>,
    /// Linear SNR values.
    pub snrs: Vec<f64>,
    pub rates: Vec<f64>,
    pub buffers: Vec<f64>,
    pub etas: Vec<Option<f64>>,
    pub n_max: usize,
    pub optimal_combiner: bool,
}

impl HarqGrid {
    /// Every point of the grid, scheme outermost and buffer size innermost.
    pub fn points(&self, seed: u64, trials: u64) -> Vec<HarqConfig> {
        let mut out = Vec::new();
        for &scheme in &self.schemes {
            for &modulation in &self.modulations {
                for &domain in &self.domains {
                    for &snr in &self.snrs {
                        for &eta in &self.etas {
                            for &rate in &self.rates {
                                for &buffer_c in &self.buffers {
                                    out.push(HarqConfig {
                                        scheme,
                                        domain,
                                        snr,
                                        rate,
                                        buffer_c,
                                        n_max: self.n_max,
                                        modulation,
                                        eta,
                                        optimal_combiner: self.optimal_combiner,
                                        trials,
                                        seed,
                                        stream: 0,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayeredGrid {
    pub harq: HarqGrid,
    pub alphas: Vec<f64>,
    /// Spacing of the layer-1 rate search.
    pub rate1_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MimoGrid {
    pub nts: Vec<usize>,
    /// Receive antenna counts crossed with `nts`; `None` pairs each `nt`
    /// with an equal `nr`.
    pub nrs: Option<Vec<usize>>,
    pub snrs: Vec<f64>,
    pub rates: Vec<f64>,
    pub buffers: Vec<f64>,
    pub n_max: usize,
    /// The SNR grid is the total received SNR `nr * snr` rather than the
    /// per-antenna SNR.
    pub total_snr: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FblGrid {
    pub info_bits: Vec<f64>,
    pub total_buffers: Vec<f64>,
    pub eps_q: Vec<f64>,
    pub snrs: Vec<f64>,
    pub blocklengths: Vec<f64>,
    pub n_max: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiGrid {
    pub bits: Vec<u32>,
    pub snrs: Vec<f64>,
    pub gains: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaterfillGrid {
    pub eigenvalues: Vec<f64>,
    pub budgets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Harq(HarqGrid),
    Layered(LayeredGrid),
    Mimo(MimoGrid),
    Fbl(FblGrid),
    MiTable(MiGrid),
    Waterfill(WaterfillGrid),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub trials: u64,
    pub output: Option<PathBuf>,
    pub params: Params,
}

impl ExperimentSpec {
    /// Number of independent configuration points. Inner optimization grids
    /// (layer-1 rate, blocklength) and table dimensions do not count.
    pub fn point_count(&self) -> usize {
        match &self.params {
            Params::Harq(g) => harq_points(g),
            Params::Layered(g) => harq_points(&g.harq) * g.alphas.len(),
            Params::Mimo(g) => {
                g.nts.len()
                    * g.nrs.as_ref().map_or(1, Vec::len)
                    * g.snrs.len()
                    * g.rates.len()
                    * g.buffers.len()
            }
            Params::Fbl(g) => {
                g.info_bits.len() * g.total_buffers.len() * g.eps_q.len() * g.snrs.len()
            }
            Params::MiTable(_) | Params::Waterfill(_) => 1,
        }
    }
}

fn harq_points(g: &HarqGrid) -> usize {
    g.schemes.len()
        * g.domains.len()
        * g.modulations.len()
        * g.snrs.len()
        * g.rates.len()
        * g.buffers.len()
        * g.etas.len()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    kind: Spanned<String>,
    seed: Option<u64>,
    trials: Option<u64>,
    output: Option<String>,
    #[serde(default)]
    params: BTreeMap<Spanned<String>, Value>,
}

const DEFAULT_SEED: u64 = 1;
const DEFAULT_TRIALS: u64 = 100_000;
const DEFAULT_N_MAX: usize = 10;

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parameter table with line lookup; every key must be consumed.
struct ParamTable {
    values: BTreeMap<String, (usize, Value)>,
    section_line: usize,
}

impl ParamTable {
    fn err<T>(&self, line: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::Spec {
            line,
            message: message.into(),
        })
    }

    fn take(&mut self, key: &str) -> Option<(usize, Value)> {
        self.values.remove(key)
    }

    /// Scalar or array, flattened; arrays must be non-empty.
    fn list(&mut self, key: &str) -> Result<Option<(usize, Vec<Value>)>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, Value::Array(items))) => {
                if items.is_empty() {
                    return self.err(line, format!("`{key}` must not be an empty grid"));
                }
                Ok(Some((line, items)))
            }
            Some((line, v)) => Ok(Some((line, vec![v]))),
        }
    }

    fn floats(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some((line, items)) = self.list(key)? else {
            return Ok(None);
        };
        items
            .into_iter()
            .map(|v| match v {
                Value::Float(x) => Ok(x),
                Value::Integer(i) => Ok(i as f64),
                other => self.err(
                    line,
                    format!("`{key}` expects numbers, found {}", other.type_str()),
                ),
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn strings(&mut self, key: &str) -> Result<Option<(usize, Vec<String>)>> {
        let Some((line, items)) = self.list(key)? else {
            return Ok(None);
        };
        let v = items
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                other => self.err(
                    line,
                    format!("`{key}` expects strings, found {}", other.type_str()),
                ),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Some((line, v)))
    }

    fn counts(&mut self, key: &str) -> Result<Option<Vec<usize>>> {
        let Some((line, items)) = self.list(key)? else {
            return Ok(None);
        };
        items
            .into_iter()
            .map(|v| match v {
                Value::Integer(i) if i >= 1 => Ok(i as usize),
                other => self.err(
                    line,
                    format!("`{key}` expects positive integers, found {other}"),
                ),
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn count(&mut self, key: &str, default: usize) -> Result<usize> {
        let Some((line, v)) = self.take(key) else {
            return Ok(default);
        };
        match v {
            Value::Integer(i) if i >= 1 => Ok(i as usize),
            Value::Array(_) => {
                self.err(line, format!("`{key}` must be a single value, not a grid"))
            }
            other => self.err(
                line,
                format!("`{key}` expects a positive integer, found {other}"),
            ),
        }
    }

    fn flag(&mut self, key: &str) -> Result<bool> {
        match self.take(key) {
            None => Ok(false),
            Some((_, Value::Boolean(b))) => Ok(b),
            Some((line, other)) => {
                self.err(line, format!("`{key}` expects a boolean, found {other}"))
            }
        }
    }

    fn required<T>(&self, key: &str, v: Option<T>) -> Result<T> {
        match v {
            Some(v) => Ok(v),
            None => self.err(
                self.section_line,
                format!("missing required parameter `{key}`"),
            ),
        }
    }

    /// Linear SNR grid from either `snr_db` or `snr` (linear).
    fn snrs(&mut self) -> Result<Option<Vec<f64>>> {
        let line_db = self.values.get("snr_db").map(|v| v.0);
        let db = self.floats("snr_db")?;
        let lin_line = self.values.get("snr").map(|v| v.0);
        let lin = self.floats("snr")?;
        match (db, lin) {
            (Some(_), Some(_)) => self.err(
                line_db.unwrap_or(self.section_line),
                "give either `snr_db` or `snr`, not both",
            ),
            (Some(db), None) => {
                if db.iter().any(|x| !x.is_finite()) {
                    return self.err(
                        line_db.unwrap_or(self.section_line),
                        "`snr_db` must be finite",
                    );
                }
                Ok(Some(db.into_iter().map(db_to_linear).collect()))
            }
            (None, Some(lin)) => {
                if lin.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                    return self.err(
                        lin_line.unwrap_or(self.section_line),
                        "`snr` is a linear power ratio and must be positive",
                    );
                }
                Ok(Some(lin))
            }
            (None, None) => Ok(None),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some((key, (line, _))) = self.values.iter().next() {
            return self.err(*line, format!("unknown parameter `{key}`"));
        }
        Ok(())
    }
}

fn harq_grid(p: &mut ParamTable, kind: ExperimentKind) -> Result<HarqGrid> {
    let schemes = match p.strings("scheme")? {
        Some((line, v)) => v
            .iter()
            .map(|s| {
                Scheme::parse(s).ok_or(Error::Spec {
                    line,
                    message: format!("unknown scheme `{s}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?,
        None => p.required("scheme", None)?,
    };
    let domains = match p.strings("domain")? {
        Some((line, v)) => v
            .iter()
            .map(|s| {
                StorageDomain::parse(s).ok_or(Error::Spec {
                    line,
                    message: format!("unknown domain `{s}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?,
        None => vec![StorageDomain::Baseband],
    };
    let modulations = match p.strings("modulation")? {
        Some((line, v)) => v
            .iter()
            .map(|s| {
                Modulation::parse(s).ok_or(Error::Spec {
                    line,
                    message: format!("unknown modulation `{s}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?,
        None => vec![Modulation::Gaussian],
    };
    let snrs = p.snrs()?;
    let snrs = p.required("snr_db", snrs)?;
    let rate_line = p.values.get("rate").map(|v| v.0);
    let rates = p.floats("rate")?;
    let rates = p.required("rate", rates)?;
    let buffers = match kind {
        ExperimentKind::Layered => p.floats("c")?.unwrap_or(vec![0.0]),
        _ => {
            let c = p.floats("c")?;
            p.required("c", c)?
        }
    };
    let etas = match p.list("eta")? {
        None => vec![None],
        Some((line, items)) => items
            .into_iter()
            .map(|v| match v {
                Value::Float(x) => Ok(Some(x)),
                Value::Integer(i) => Ok(Some(i as f64)),
                Value::String(s) if s.eq_ignore_ascii_case("inf") => Ok(Some(f64::INFINITY)),
                Value::String(s) if s.eq_ignore_ascii_case("none") => Ok(None),
                other => Err(Error::Spec {
                    line,
                    message: format!("`eta` expects numbers, \"inf\" or \"none\", found {other}"),
                }),
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let n_max = p.count("n_max", DEFAULT_N_MAX)?;
    let optimal_combiner = p.flag("optimal_combiner")?;
    if kind == ExperimentKind::BicmCompare && modulations.contains(&Modulation::Gaussian) {
        return p.err(p.section_line, "bicm_compare needs QAM modulations");
    }
    if kind == ExperimentKind::ThroughputVsR && rates.len() < 2 {
        return p.err(
            rate_line.unwrap_or(p.section_line),
            "throughput_vs_R needs a grid of rates",
        );
    }
    Ok(HarqGrid {
        schemes,
        domains,
        modulations,
        snrs,
        rates,
        buffers,
        etas,
        n_max,
        optimal_combiner,
    })
}

/// Parses and validates a spec.
pub fn parse_spec(text: &str) -> Result<ExperimentSpec> {
    let raw: RawSpec = toml::from_str(text).map_err(|e| Error::Spec {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(1),
        message: e.message().to_string(),
    })?;
    let kind_line = line_of(text, raw.kind.span().start);
    let kind = ExperimentKind::parse(raw.kind.get_ref()).ok_or_else(|| Error::Spec {
        line: kind_line,
        message: format!("unknown experiment kind `{}`", raw.kind.get_ref()),
    })?;
    let section_line = text
        .lines()
        .position(|l| l.trim() == "[params]")
        .map(|i| i + 1)
        .unwrap_or(kind_line);
    let values = raw
        .params
        .into_iter()
        .map(|(k, v)| {
            let line = line_of(text, k.span().start);
            (k.into_inner(), (line, v))
        })
        .collect();
    let mut p = ParamTable {
        values,
        section_line,
    };
    let trials = raw.trials.unwrap_or(DEFAULT_TRIALS);
    if trials == 0 {
        return p.err(1, "trials must be positive");
    }

    let params = match kind {
        ExperimentKind::ThroughputVsC
        | ExperimentKind::ThroughputVsR
        | ExperimentKind::BicmCompare => Params::Harq(harq_grid(&mut p, kind)?),
        ExperimentKind::Layered => {
            let harq = harq_grid(&mut p, kind)?;
            let alphas = p.floats("alpha")?;
            let alphas = p.required("alpha", alphas)?;
            let step = p.floats("rate1_step")?.map(|v| v[0]).unwrap_or(0.25);
            if !(step > 0.0) {
                return p.err(section_line, "`rate1_step` must be positive");
            }
            Params::Layered(LayeredGrid {
                harq,
                alphas,
                rate1_step: step,
            })
        }
        ExperimentKind::Mimo => {
            let nts = p.counts("nt")?;
            let nts = p.required("nt", nts)?;
            let nrs = p.counts("nr")?;
            let snrs = p.snrs()?;
            let snrs = p.required("snr_db", snrs)?;
            let rates = p.floats("rate")?;
            let rates = p.required("rate", rates)?;
            let buffers = p.floats("c")?;
            let buffers = p.required("c", buffers)?;
            let n_max = p.count("n_max", DEFAULT_N_MAX)?;
            let total_snr = p.flag("total_snr")?;
            Params::Mimo(MimoGrid {
                nts,
                nrs,
                snrs,
                rates,
                buffers,
                n_max,
                total_snr,
            })
        }
        ExperimentKind::FblBlocklength => {
            let info_bits = p.floats("info_bits")?;
            let info_bits = p.required("info_bits", info_bits)?;
            let total_buffers = p.floats("total_buffer")?;
            let total_buffers = p.required("total_buffer", total_buffers)?;
            let eps_q = p.floats("eps_q")?.unwrap_or(vec![1e-4]);
            let snrs = p.snrs()?;
            let snrs = p.required("snr_db", snrs)?;
            let blocklengths = p.floats("blocklength")?;
            let blocklengths = p.required("blocklength", blocklengths)?;
            let n_max = p.count("n_max", DEFAULT_N_MAX)?;
            Params::Fbl(FblGrid {
                info_bits,
                total_buffers,
                eps_q,
                snrs,
                blocklengths,
                n_max,
            })
        }
        ExperimentKind::MiTable => {
            let bits = match p.strings("modulation")? {
                Some((line, v)) => v
                    .iter()
                    .map(|s| match Modulation::parse(s) {
                        Some(Modulation::Qam { bits }) => Ok(bits),
                        _ => Err(Error::Spec {
                            line,
                            message: format!("mi_table needs QAM modulations, got `{s}`"),
                        }),
                    })
                    .collect::<Result<Vec<_>>>()?,
                None => p.required("modulation", None)?,
            };
            let snrs = p.snrs()?;
            let snrs = p.required("snr_db", snrs)?;
            let gains = p.floats("gain")?.unwrap_or(vec![1.0]);
            Params::MiTable(MiGrid { bits, snrs, gains })
        }
        ExperimentKind::WaterfillDemo => {
            let eigenvalues = p.floats("eigenvalues")?;
            let eigenvalues = p.required("eigenvalues", eigenvalues)?;
            let budgets = p.floats("budget")?;
            let budgets = p.required("budget", budgets)?;
            Params::Waterfill(WaterfillGrid {
                eigenvalues,
                budgets,
            })
        }
    };
    p.finish()?;

    let spec = ExperimentSpec {
        kind,
        seed: raw.seed.unwrap_or(DEFAULT_SEED),
        trials,
        output: raw.output.map(PathBuf::from),
        params,
    };
    validate_points(&spec, section_line)?;
    Ok(spec)
}

/// Checks every configuration the spec expands to.
pub fn validate_points(spec: &ExperimentSpec, line: usize) -> Result<()> {
    let wrap = |e: Error| Error::Spec {
        line,
        message: e.to_string(),
    };
    match &spec.params {
        Params::Harq(g) => {
            for cfg in g.points(spec.seed, spec.trials) {
                cfg.validate().map_err(wrap)?;
            }
        }
        Params::Layered(g) => {
            for cfg in g.harq.points(spec.seed, spec.trials) {
                for &alpha in &g.alphas {
                    crate::layered::LayeredConfig::with_split(cfg.clone(), 0.0, alpha)
                        .validate()
                        .map_err(wrap)?;
                }
            }
        }
        Params::Mimo(g) => {
            for cfg in super::mimo_points(g, spec.seed, spec.trials) {
                cfg.validate().map_err(wrap)?;
            }
        }
        Params::Fbl(g) => {
            for cfg in super::fbl_points(g, spec.seed, spec.trials) {
                cfg.validate().map_err(wrap)?;
                for &l in &g.blocklengths {
                    crate::fbl::FblConfig {
                        blocklength: l,
                        ..cfg.clone()
                    }
                    .validate()
                    .map_err(wrap)?;
                }
            }
        }
        Params::MiTable(g) => {
            for &m in &g.bits {
                crate::bicm::Constellation::new(m).map_err(wrap)?;
            }
            if g.gains.iter().any(|&x| !(x >= 0.0)) {
                return Err(wrap(Error::InvalidConfig(
                    "gains must be non-negative".into(),
                )));
            }
        }
        Params::Waterfill(g) => {
            if g.eigenvalues.iter().any(|&l| !(l >= 1.0) || !l.is_finite()) {
                return Err(wrap(Error::InvalidConfig(
                    "eigenvalues must be finite and at least 1".into(),
                )));
            }
            if g.budgets.iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
                return Err(wrap(Error::InvalidConfig(
                    "budgets must be finite and non-negative".into(),
                )));
            }
        }
    }
    Ok(())
}
