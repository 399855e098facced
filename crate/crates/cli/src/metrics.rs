//! CSV metrics rows and the runtime protocol.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::CliResult;

pub const CSV_HEADER: &str =
    "experiment,method,n_antennas,n_users,snr_db,metric_name,value,runtime_ms,iterations,seed";

pub const WARMUP_RUNS: usize = 2;
pub const TIMED_RUNS: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    NmseDb,
    SumRate,
    Residual,
    MemoryBuffers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub experiment: String,
    pub method: String,
    pub n_antennas: usize,
    pub n_users: usize,
    pub snr_db: f64,
    pub metric_name: MetricName,
    pub value: f64,
    pub runtime_ms: f64,
    pub iterations: usize,
    pub seed: u64,
}

pub fn write_rows<W: Write>(w: W, rows: &[MetricsRow]) -> CliResult<()> {
    let mut out = csv::Writer::from_writer(w);
    // serde only emits the header with the first record
    if rows.is_empty() {
        out.write_record(CSV_HEADER.split(','))?;
    }
    for row in rows {
        debug_assert!(row.runtime_ms >= 0.0);
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_rows<R: std::io::Read>(r: R) -> CliResult<Vec<MetricsRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Into::into))
        .collect()
}

pub fn save_rows(path: &std::path::Path, rows: &[MetricsRow]) -> CliResult<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| crate::error::CliError::Io(format!("{}: {e}", path.display())))?;
    write_rows(std::io::BufWriter::new(file), rows)
}

/// Median wall time in milliseconds of `TIMED_RUNS` calls after
/// `WARMUP_RUNS` discarded ones.
pub fn median_runtime_ms<T>(mut f: impl FnMut() -> T) -> f64 {
    for _ in 0..WARMUP_RUNS {
        std::hint::black_box(f());
    }
    let mut times: Vec<f64> = (0..TIMED_RUNS)
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(f());
            start.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[TIMED_RUNS / 2]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> MetricsRow {
        MetricsRow {
            experiment: "demo".into(),
            method: "ls".into(),
            n_antennas: 64,
            n_users: 1,
            snr_db: 5.0,
            metric_name: MetricName::NmseDb,
            value: -3.25,
            runtime_ms: 0.5,
            iterations: 0,
            seed: 7,
        }
    }

    #[test]
    fn header_is_exact() {
        let mut buf = Vec::new();
        write_rows(&mut buf, &[row()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some(CSV_HEADER));
        assert_eq!(text.lines().nth(1), Some("demo,ls,64,1,5.0,nmse_db,-3.25,0.5,0,7"));

        let mut empty = Vec::new();
        write_rows(&mut empty, &[]).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap().trim_end(), CSV_HEADER);
    }

    #[test]
    fn rows_round_trip() {
        let mut buf = Vec::new();
        write_rows(&mut buf, &[row(), row()]).unwrap();
        assert_eq!(read_rows(buf.as_slice()).unwrap(), vec![row(), row()]);
    }

    #[test]
    fn median_runtime_is_nonnegative() {
        let mut calls = 0;
        let t = median_runtime_ms(|| calls += 1);
        assert!(t >= 0.0);
        assert_eq!(calls, WARMUP_RUNS + TIMED_RUNS);
    }
}
