//! CSV output.
//!
//! Floats are written with 17 significant digits so that parsing a file back
//! recovers every value exactly. Lines end in LF.

use std::io::Write;

use crate::error::Result;

/// Header and rows of one output file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: Vec<String>) -> CsvTable {
        CsvTable {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Columns that precede the extra parameters in throughput tables.
pub const LEADING_COLUMNS: [&str; 8] = [
    "experiment",
    "scheme",
    "domain",
    "modulation",
    "snr_db",
    "rate",
    "c",
    "n_max",
];

/// Header of a throughput table: the leading columns, `extras`, the failure
/// curve `pe_1..pe_{n_max}`, then `throughput, ci95, trials, seed`.
pub fn throughput_header(extras: &[&str], n_max: usize) -> Vec<String> {
    let mut h: Vec<String> = LEADING_COLUMNS.iter().map(|s| s.to_string()).collect();
    h.extend(extras.iter().map(|s| s.to_string()));
    h.extend((1..=n_max).map(|n| format!("pe_{n}")));
    h.extend(["throughput", "ci95", "trials", "seed"].map(String::from));
    h
}

/// One row of a throughput table.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputRow {
    pub experiment: String,
    pub scheme: String,
    pub domain: String,
    pub modulation: String,
    pub snr_db: f64,
    pub rate: f64,
    pub c: f64,
    pub n_max: usize,
    pub extras: Vec<String>,
    /// `pe[n-1]` is the failure probability through attempt `n`.
    pub pe: Vec<f64>,
    pub throughput: f64,
    pub ci95: f64,
    pub trials: u64,
    pub seed: u64,
}

impl ThroughputRow {
    pub fn cells(&self) -> Vec<String> {
        let mut out = vec![
            self.experiment.clone(),
            self.scheme.clone(),
            self.domain.clone(),
            self.modulation.clone(),
            fmt_float(self.snr_db),
            fmt_float(self.rate),
            fmt_float(self.c),
            self.n_max.to_string(),
        ];
        out.extend(self.extras.iter().cloned());
        out.extend(self.pe.iter().map(|&p| fmt_float(p)));
        out.extend([
            fmt_float(self.throughput),
            fmt_float(self.ci95),
            self.trials.to_string(),
            self.seed.to_string(),
        ]);
        out
    }
}

pub fn emit_csv<W: Write>(table: &CsvTable, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_bytes(table: &CsvTable) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    emit_csv(table, &mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_when_empty() {
        let t = CsvTable::new(throughput_header(&["eta"], 2));
        let s = String::from_utf8(to_bytes(&t).unwrap()).unwrap();
        assert_eq!(s, "experiment,scheme,domain,modulation,snr_db,rate,c,n_max,eta,pe_1,pe_2,throughput,ci95,trials,seed\n");
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5e-7] {
            assert_eq!(fmt_float(x).parse::<f64>().unwrap(), x);
        }
    }
}
