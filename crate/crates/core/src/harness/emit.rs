use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{GridOutput, ReplicationRecord, SlopeFit};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => invalid(format!("unknown output format `{other}`")),
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

pub fn write_records_csv(records: &[ReplicationRecord], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records_csv(r: impl Read) -> Result<Vec<ReplicationRecord>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(csv_err))
        .collect()
}

pub fn write_slopes_csv(slopes: &[SlopeFit], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for s in slopes {
        out.serialize(s).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `table.json` plus the records and slopes in the chosen format
/// (`records.csv` and `slopes.csv`, or `records.json`). Returns the paths.
pub fn emit(dir: &Path, output: &GridOutput, format: OutputFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let table = dir.join("table.json");
    serde_json::to_writer_pretty(BufWriter::new(File::create(&table)?), &output.table)?;
    written.push(table);
    match format {
        OutputFormat::Csv => {
            let records = dir.join("records.csv");
            write_records_csv(&output.records, BufWriter::new(File::create(&records)?))?;
            written.push(records);
            let slopes = dir.join("slopes.csv");
            write_slopes_csv(&output.table.slopes, BufWriter::new(File::create(&slopes)?))?;
            written.push(slopes);
        }
        OutputFormat::Json => {
            let records = dir.join("records.json");
            serde_json::to_writer_pretty(
                BufWriter::new(File::create(&records)?),
                &output.records,
            )?;
            written.push(records);
        }
    }
    Ok(written)
}
