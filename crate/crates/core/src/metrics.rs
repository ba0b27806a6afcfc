//! Losses, rates, regret and violation, and the bound constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;
use crate::online_precoder::{AlgoParams, PowerBudget};

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Thermal noise in dBm over `bandwidth_hz` with a receiver noise figure,
/// all added in the dB domain.
pub fn noise_power_dbm(n0_dbm_per_hz: f64, bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    n0_dbm_per_hz + 10.0 * bandwidth_hz.log10() + noise_figure_db
}

pub fn noise_power_watts(n0_dbm_per_hz: f64, bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    dbm_to_watts(noise_power_dbm(
        n0_dbm_per_hz,
        bandwidth_hz,
        noise_figure_db,
    ))
}

/// `‖H·V − D‖_F²`.
pub fn loss(h: &ComplexMatrix, v: &ComplexMatrix, d: &ComplexMatrix) -> Result<f64> {
    Ok(h.matmul(v)?.sub(d)?.fro_norm_sq())
}

/// `‖H̃^c·Ṽ^c − D̃^c‖_F²` per cell. Sums to the global loss when `V` is
/// block-diagonal.
pub fn cell_losses(
    local_views: &[ComplexMatrix],
    precoders: &[ComplexMatrix],
    embedded: &[ComplexMatrix],
) -> Result<Vec<f64>> {
    if local_views.len() != precoders.len() || precoders.len() != embedded.len() {
        return Err(Error::dim("cell_losses", "cell counts disagree"));
    }
    local_views
        .iter()
        .zip(precoders)
        .zip(embedded)
        .map(|((h, v), d)| loss(h, v, d))
        .collect()
}

/// Per-user rates in bit/s/Hz from the effective channel `E = H·V`, where
/// user `k` is served by column `k`.
pub fn rates_from_effective(e: &ComplexMatrix, noise: f64) -> Result<Vec<f64>> {
    if e.rows() != e.cols() {
        return Err(Error::dim(
            "per_user_rates",
            format!("effective channel is {:?}", e.shape()),
        ));
    }
    if !(noise > 0.0) {
        return Err(Error::Invariant(format!(
            "noise power must be positive, got {noise}"
        )));
    }
    Ok((0..e.rows())
        .map(|k| {
            let row = e.row(k);
            let total: f64 = row.iter().map(|z| z.norm_sqr()).sum();
            let signal = row[k].norm_sqr();
            let interference = (total - signal).max(0.0);
            (1.0 + signal / (interference + noise)).log2()
        })
        .collect())
}

pub fn per_user_rates(h: &ComplexMatrix, v: &ComplexMatrix, noise: f64) -> Result<Vec<f64>> {
    rates_from_effective(&h.matmul(v)?, noise)
}

/// `RE(T) = Σ_t (f_t(V_t) − f_t(V*))` and `VO^c(T) = Σ_t g^c(Ṽ_t^c)`.
/// `g[t][c]` holds the per-slot constraint values.
pub fn regret_and_violation(
    run_losses: &[f64],
    offline_losses: &[f64],
    g: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    if run_losses.len() != offline_losses.len() || run_losses.len() != g.len() {
        return Err(Error::dim(
            "regret_and_violation",
            format!(
                "series lengths {}, {}, {}",
                run_losses.len(),
                offline_losses.len(),
                g.len()
            ),
        ));
    }
    let re = run_losses
        .iter()
        .zip(offline_losses)
        .map(|(a, b)| a - b)
        .sum();
    let cells = g.first().map_or(0, Vec::len);
    let mut vo = vec![0.0; cells];
    for row in g {
        if row.len() != cells {
            return Err(Error::dim(
                "regret_and_violation",
                "ragged constraint series",
            ));
        }
        for (acc, x) in vo.iter_mut().zip(row) {
            *acc += x;
        }
    }
    Ok((re, vo))
}

/// Bounded-gain constants and the resulting regret and violation bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub b_measured: f64,
    /// Gradient bound `B²R`.
    pub d: f64,
    /// Lipschitz constant of `g`, `2√(max_c p_max)`.
    pub beta_lip: f64,
    /// Bound on `‖g(V)‖`.
    pub g: f64,
    /// Diameter of the feasible set, `2√(Σ_c p_max)`.
    pub r: f64,
    /// Slater margin `min_c p̄_c`.
    pub eps: f64,
    pub re_bound: f64,
    pub vo_bound: f64,
}

/// Budget-only constants `(β, G, R, ε)`.
pub fn budget_constants(budget: &PowerBudget) -> (f64, f64, f64, f64) {
    let p_max = budget.p_max_all();
    let p_bar = budget.p_bar_all();
    let beta = 2.0 * p_max.iter().copied().fold(0.0, f64::max).sqrt();
    let g = p_bar
        .iter()
        .zip(p_max)
        .map(|(&pb, &pm)| (pb * pb).max((pm - pb) * (pm - pb)))
        .sum::<f64>()
        .sqrt();
    let r = 2.0 * p_max.iter().sum::<f64>().sqrt();
    let eps = p_bar.iter().copied().fold(f64::INFINITY, f64::min);
    (beta, g, r, eps)
}

/// Constants plus bounds evaluated under `params`.
pub fn bound_constants(
    budget: &PowerBudget,
    b_measured: f64,
    params: &AlgoParams,
) -> BoundConstants {
    let (beta_lip, g, r, eps) = budget_constants(budget);
    let d = b_measured * b_measured * r;
    let (alpha, gamma, eta) = (params.alpha, params.gamma, params.eta);
    let t = params.horizon as f64;
    let tau = params.tau as f64;
    let re_bound = d * d * t / alpha
        + gamma * gamma * g * g / 2.0
        + (alpha * tau + eta) * r * r
        + 2.0 * d * r * tau;
    let vo_bound = 2.0 * g
        + (2.0 * gamma * gamma * g * g + 2.0 * d * r + (alpha + eta) * r * r)
            / (gamma * gamma * eps);
    BoundConstants {
        b_measured,
        d,
        beta_lip,
        g,
        r,
        eps,
        re_bound,
        vo_bound,
    }
}

/// Constants with the bounds evaluated under the standard schedule.
pub fn scheduled_bound_constants(
    budget: &PowerBudget,
    b_measured: f64,
    horizon: usize,
    tau: usize,
) -> Result<BoundConstants> {
    if !(b_measured > 0.0) {
        return Err(Error::Invariant(format!(
            "channel bound must be positive, got {b_measured}"
        )));
    }
    let (beta_lip, ..) = budget_constants(budget);
    let params = AlgoParams::standard_schedule(horizon, tau, beta_lip)?;
    Ok(bound_constants(budget, b_measured, &params))
}

/// One row of `timeseries.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub t: usize,
    pub algorithm: String,
    pub f_t: f64,
    pub f_bar: f64,
    pub p_inst: Vec<f64>,
    pub p_bar_run: f64,
    pub q: Vec<f64>,
    pub g: Vec<f64>,
    pub vo: Vec<f64>,
    pub re: f64,
    pub r_bar: f64,
}

impl RunRecord {
    pub fn csv_header(cells: usize) -> Vec<String> {
        let mut h = vec![
            "t".to_string(),
            "algorithm".into(),
            "f_t".into(),
            "f_bar".into(),
        ];
        h.extend((1..=cells).map(|c| format!("p_inst_c{c}")));
        h.push("p_bar_run".into());
        for prefix in ["Q", "g", "VO"] {
            h.extend((1..=cells).map(|c| format!("{prefix}_c{c}")));
        }
        h.extend(["RE".into(), "r_bar".into()]);
        h
    }

    pub fn csv_fields(&self) -> Vec<String> {
        let mut out = vec![
            self.t.to_string(),
            self.algorithm.clone(),
            fmt_f64(self.f_t),
            fmt_f64(self.f_bar),
        ];
        out.extend(self.p_inst.iter().map(|&x| fmt_f64(x)));
        out.push(fmt_f64(self.p_bar_run));
        for col in [&self.q, &self.g, &self.vo] {
            out.extend(col.iter().map(|&x| fmt_f64(x)));
        }
        out.push(fmt_f64(self.re));
        out.push(fmt_f64(self.r_bar));
        out
    }
}

/// Shortest representation that parses back to the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Running averages and sums owned by the slot loop.
#[derive(Debug, Clone)]
pub struct RunningMetrics {
    algorithm: String,
    slots: usize,
    f_bar_sum: f64,
    power_sum: Vec<f64>,
    vo: Vec<f64>,
    re: f64,
    rate_sum: f64,
}

/// Per-slot inputs to [`RunningMetrics::push`].
#[derive(Debug, Clone)]
pub struct SlotMetrics<'a> {
    pub t: usize,
    pub f_t: f64,
    pub f_star: f64,
    pub demand_norm_sq: f64,
    pub powers: &'a [f64],
    pub queues: &'a [f64],
    pub g: &'a [f64],
    pub mean_rate: f64,
}

impl RunningMetrics {
    pub fn new(algorithm: impl Into<String>, cells: usize) -> Self {
        Self {
            algorithm: algorithm.into(),
            slots: 0,
            f_bar_sum: 0.0,
            power_sum: vec![0.0; cells],
            vo: vec![0.0; cells],
            re: 0.0,
            rate_sum: 0.0,
        }
    }

    pub fn push(&mut self, s: SlotMetrics<'_>) -> Result<RunRecord> {
        if !(s.demand_norm_sq > 0.0) {
            return Err(Error::Invariant(
                "zero demand makes the normalized deviation undefined".into(),
            ));
        }
        if s.powers.len() != self.power_sum.len() || s.g.len() != self.vo.len() {
            return Err(Error::dim("RunningMetrics::push", "cell count changed"));
        }
        self.slots += 1;
        let n = self.slots as f64;
        self.f_bar_sum += s.f_t / s.demand_norm_sq;
        for (acc, p) in self.power_sum.iter_mut().zip(s.powers) {
            *acc += p;
        }
        for (acc, g) in self.vo.iter_mut().zip(s.g) {
            *acc += g;
        }
        self.re += s.f_t - s.f_star;
        self.rate_sum += s.mean_rate;
        let cells = self.power_sum.len() as f64;
        Ok(RunRecord {
            t: s.t,
            algorithm: self.algorithm.clone(),
            f_t: s.f_t,
            f_bar: self.f_bar_sum / n,
            p_inst: s.powers.to_vec(),
            p_bar_run: self.power_sum.iter().sum::<f64>() / (n * cells),
            q: s.queues.to_vec(),
            g: s.g.to_vec(),
            vo: self.vo.clone(),
            re: self.re,
            r_bar: self.rate_sum / n,
        })
    }

    /// Time-averaged power per cell so far.
    pub fn average_powers(&self) -> Vec<f64> {
        let n = self.slots.max(1) as f64;
        self.power_sum.iter().map(|p| p / n).collect()
    }
}
