//! Scenario configuration loaded from a flat TOML file.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A scalar shared by all cells or one value per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerCell {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerCell {
    pub fn resolve(&self, cells: usize, key: &str) -> Result<Vec<f64>> {
        match self {
            PerCell::Uniform(x) => Ok(vec![*x; cells]),
            PerCell::Each(v) if v.len() == cells => Ok(v.clone()),
            PerCell::Each(v) => Err(Error::ConfigInvalid(format!(
                "{key} lists {} values for {cells} cells",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Proposed,
    Saddle,
    Fdzf,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Proposed, Algorithm::Saddle, Algorithm::Fdzf];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Proposed => "proposed",
            Algorithm::Saddle => "saddle",
            Algorithm::Fdzf => "fdzf",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Algorithm::Proposed),
            "saddle" => Ok(Algorithm::Saddle),
            "fdzf" => Ok(Algorithm::Fdzf),
            other => Err(Error::ConfigInvalid(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_cells: usize,
    pub cell_radius_m: f64,
    pub antennas_per_cell: usize,
    pub num_sps: usize,
    pub users_per_sp: usize,
    pub min_distance_m: f64,

    pub bandwidth_hz: f64,
    pub n0_dbm_per_hz: f64,
    pub noise_figure_db: f64,
    pub carrier_ghz: f64,
    pub p_max_dbm: PerCell,
    pub p_bar_dbm: PerCell,
    /// Virtual power per `[cell][sp]` in watts; defaults to `p_max/M`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sp_power_w: Option<Vec<Vec<f64>>>,

    pub alpha_h: f64,
    pub shadowing: bool,
    pub shadowing_sigma_db: f64,
    /// Expected energy `N_c·β` of the strongest user-BS link after
    /// rescaling the channel and noise together. `0` keeps physical units.
    pub channel_norm_energy: f64,

    pub horizon: usize,
    pub tau: usize,
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub output_dir: PathBuf,
    /// Replay this channel trace instead of generating the fading process.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channel_trace: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_cells: 3,
            cell_radius_m: 500.0,
            antennas_per_cell: 32,
            num_sps: 4,
            users_per_sp: 2,
            min_distance_m: 10.0,
            bandwidth_hz: 15e3,
            n0_dbm_per_hz: -174.0,
            noise_figure_db: 10.0,
            carrier_ghz: 2.0,
            p_max_dbm: PerCell::Uniform(33.0),
            p_bar_dbm: PerCell::Uniform(30.0),
            sp_power_w: None,
            alpha_h: 0.998,
            shadowing: false,
            shadowing_sigma_db: 4.0,
            channel_norm_energy: 16.0,
            horizon: 1000,
            tau: 4,
            seed: 1,
            algorithms: Algorithm::ALL.to_vec(),
            output_dir: PathBuf::from("results"),
            channel_trace: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.num_cells == 0 || self.num_cells > 3 {
            return bad(format!(
                "num_cells must be 1, 2 or 3, got {}",
                self.num_cells
            ));
        }
        if self.antennas_per_cell == 0 || self.num_sps == 0 || self.users_per_sp == 0 {
            return bad("antenna, SP and user counts must be positive".into());
        }
        if self.num_sps * self.users_per_sp > self.antennas_per_cell {
            return bad(format!(
                "{} users per cell exceed {} antennas",
                self.num_sps * self.users_per_sp,
                self.antennas_per_cell
            ));
        }
        if !(self.cell_radius_m > 0.0)
            || !(self.min_distance_m >= 0.0)
            || self.min_distance_m >= self.cell_radius_m
        {
            return bad("need cell_radius_m > min_distance_m >= 0".into());
        }
        if !(self.bandwidth_hz > 0.0) || !(self.carrier_ghz > 0.0) {
            return bad("bandwidth and carrier must be positive".into());
        }
        if !self.n0_dbm_per_hz.is_finite() || !self.noise_figure_db.is_finite() {
            return bad("noise parameters must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.alpha_h) {
            return bad(format!("alpha_h must lie in [0, 1], got {}", self.alpha_h));
        }
        if self.shadowing && !(self.shadowing_sigma_db >= 0.0) {
            return bad("shadowing_sigma_db must be nonnegative".into());
        }
        if !(self.channel_norm_energy >= 0.0) || !self.channel_norm_energy.is_finite() {
            return bad("channel_norm_energy must be finite and nonnegative".into());
        }
        if self.tau == 0 || self.tau >= self.horizon {
            return bad(format!(
                "need 1 <= tau < horizon, got tau={}, horizon={}",
                self.tau, self.horizon
            ));
        }
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required".into());
        }
        let p_max = self.p_max_dbm.resolve(self.num_cells, "p_max_dbm")?;
        let p_bar = self.p_bar_dbm.resolve(self.num_cells, "p_bar_dbm")?;
        for (c, (pb, pm)) in p_bar.iter().zip(&p_max).enumerate() {
            if !pb.is_finite() || !pm.is_finite() || pb > pm {
                return bad(format!(
                    "cell {c}: need p_bar_dbm <= p_max_dbm, got {pb} > {pm}"
                ));
            }
        }
        if let Some(sp) = &self.sp_power_w {
            if sp.len() != self.num_cells || sp.iter().any(|r| r.len() != self.num_sps) {
                return bad("sp_power_w must have one row per cell and one entry per SP".into());
            }
            for (c, row) in sp.iter().enumerate() {
                if row.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
                    return bad(format!("cell {c}: virtual powers must be positive"));
                }
                let total: f64 = row.iter().sum();
                let cap = crate::metrics::dbm_to_watts(p_max[c]);
                if total > cap * (1.0 + 1e-12) {
                    return bad(format!(
                        "cell {c}: virtual powers sum to {total} W above p_max {cap} W"
                    ));
                }
            }
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::ConfigMissing(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    ScenarioConfig::from_toml_str(&text)
}
