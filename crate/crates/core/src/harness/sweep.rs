//! One-axis parameter sweeps sharing a master seed.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use super::config::{PerCell, ScenarioConfig};
use super::output::write_outputs;
use super::run::{run_experiment, RunOptions, RunOutput};
use crate::error::{Error, Result};
use crate::metrics::fmt_f64;

pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Tau,
    PBarDbm,
    NC,
    Horizon,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::Tau => "tau",
            SweepAxis::PBarDbm => "p_bar_dbm",
            SweepAxis::NC => "n_c",
            SweepAxis::Horizon => "T",
        }
    }

    /// Copy of `base` with this axis set to `value`. `p_bar_dbm` is capped
    /// at each cell's `p_max_dbm`.
    pub fn apply(&self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut cfg = base.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::ConfigInvalid(format!(
                    "{} needs a positive integer, got {v}",
                    self.as_str()
                )))
            }
        };
        match self {
            SweepAxis::Tau => cfg.tau = count(value)?,
            SweepAxis::NC => cfg.antennas_per_cell = count(value)?,
            SweepAxis::Horizon => cfg.horizon = count(value)?,
            SweepAxis::PBarDbm => {
                if !value.is_finite() {
                    return Err(Error::ConfigInvalid(format!(
                        "p_bar_dbm must be finite, got {value}"
                    )));
                }
                let p_max = base.p_max_dbm.resolve(base.num_cells, "p_max_dbm")?;
                cfg.p_bar_dbm = PerCell::Each(p_max.iter().map(|&pm| value.min(pm)).collect());
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" => Ok(SweepAxis::Tau),
            "p_bar_dbm" | "p_bar" => Ok(SweepAxis::PBarDbm),
            "n_c" | "antennas_per_cell" => Ok(SweepAxis::NC),
            "T" | "horizon" => Ok(SweepAxis::Horizon),
            other => Err(Error::ConfigInvalid(format!(
                "unknown sweep axis {other:?} (expected tau, p_bar_dbm, n_c or T)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub output: RunOutput,
}

/// One run per value. Runs are independent, so with `options.parallel` they
/// execute concurrently; results come back in input order.
pub fn sweep(
    base: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    options: &RunOptions,
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::ConfigInvalid(
            "sweep needs at least one value".into(),
        ));
    }
    let configs = values
        .iter()
        .map(|&v| axis.apply(base, v))
        .collect::<Result<Vec<_>>>()?;
    let run = |(value, cfg): (&f64, &ScenarioConfig)| -> Result<SweepPoint> {
        let opts = RunOptions {
            parallel: options.parallel,
            trace_out: None,
        };
        Ok(SweepPoint {
            value: *value,
            output: run_experiment(cfg, &opts)?,
        })
    };
    if options.parallel {
        values.par_iter().zip(configs.par_iter()).map(run).collect()
    } else {
        values.iter().zip(configs.iter()).map(run).collect()
    }
}

/// Subdirectory name for one sweep value.
pub fn point_dir_name(axis: SweepAxis, value: f64) -> String {
    format!("{}_{}", axis.as_str(), fmt_f64(value))
}

pub fn sweep_summary_header() -> Vec<&'static str> {
    vec![
        "axis",
        "value",
        "algorithm",
        "f_bar",
        "r_bar",
        "p_bar_run",
        "RE",
        "VO_max",
        "B_measured",
        "re_bound",
        "vo_bound",
    ]
}

/// Writes each point's outputs to `out_dir/<axis>_<value>/` and a
/// one-row-per-(value, algorithm) summary CSV.
pub fn write_sweep(points: &[SweepPoint], axis: SweepAxis, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join(SWEEP_SUMMARY_FILE))?;
    w.write_record(sweep_summary_header())?;
    for p in points {
        write_outputs(&p.output, &out_dir.join(point_dir_name(axis, p.value)))?;
        let k = &p.output.summary.constants;
        for a in &p.output.summary.algorithms {
            let vo_max = a
                .violation
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            w.write_record([
                axis.as_str().to_string(),
                fmt_f64(p.value),
                a.algorithm.to_string(),
                fmt_f64(a.f_bar),
                fmt_f64(a.r_bar),
                fmt_f64(a.p_bar_run),
                fmt_f64(a.regret),
                fmt_f64(vo_max),
                fmt_f64(k.b_measured),
                fmt_f64(k.re_bound),
                fmt_f64(k.vo_bound),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
