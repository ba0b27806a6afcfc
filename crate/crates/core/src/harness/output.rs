//! `timeseries.csv` and `summary.json` emission.

use std::fs;
use std::path::Path;

use super::run::{RunOutput, RunSummary};
use crate::error::Result;
use crate::metrics::RunRecord;

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Writes all algorithms' records, grouped by algorithm then slot.
pub fn write_timeseries(output: &RunOutput, path: &Path) -> Result<()> {
    let cells = output.summary.config.num_cells;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RunRecord::csv_header(cells))?;
    for run in &output.runs {
        for rec in &run.records {
            w.write_record(rec.csv_fields())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(summary: &RunSummary, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Creates `out_dir` and writes both files into it.
pub fn write_outputs(output: &RunOutput, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_timeseries(output, &out_dir.join(TIMESERIES_FILE))?;
    write_summary(&output.summary, &out_dir.join(SUMMARY_FILE))
}
