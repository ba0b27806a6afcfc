//! Adapters that drive each algorithm from the delay buffer.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::Algorithm;
use super::delay::{DelayBuffer, PrecoderHistory};
use crate::baselines::{fd_zf_rates, fd_zf_step, SaddleBaseline};
use crate::channel::{ChannelState, Layout};
use crate::error::{Error, Result};
use crate::metrics::per_user_rates;
use crate::numerics::ComplexMatrix;
use crate::online_precoder::{
    distributed_step, init_precoders, AlgoParams, PowerBudget, PrecoderSet,
};

/// Invariant counters collected while a scheme runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemeDiagnostics {
    /// Slots at which some queue or dual variable was negative.
    pub queue_violations: usize,
    /// Slots at which `Q_t < −γ·g(Ṽ_t)` for some cell.
    pub queue_floor_violations: usize,
    /// Updates whose denominator was not positive.
    pub denominator_violations: usize,
    /// Smallest `(den − α − η)/(α + η)` seen; nonnegative in exact
    /// arithmetic. `None` for schemes without a proximal denominator.
    pub min_denominator_margin: Option<f64>,
    /// Largest delayed-gradient norm `‖∇f_{t−τ}(V_{t−τ})‖_F`.
    pub max_grad_norm: f64,
    /// Cell updates that needed scaling onto the power ball.
    pub projections: usize,
    /// Largest `‖Ṽ_t^c‖_F² − p_max` seen; nonpositive up to rounding.
    pub max_power_excess: Option<f64>,
}

impl SchemeDiagnostics {
    fn observe_set(&mut self, set: &PrecoderSet, budget: &PowerBudget) {
        if set.queues.iter().any(|&q| q < 0.0) {
            self.queue_violations += 1;
        }
        for (c, v) in set.cells.iter().enumerate() {
            let excess = v.fro_norm_sq() - budget.p_max(c);
            self.max_power_excess = Some(self.max_power_excess.map_or(excess, |m| m.max(excess)));
        }
    }
}

/// An online precoding scheme under the delayed-information contract. The
/// only channel and demand data a scheme may read is
/// [`DelayBuffer::observed`].
pub trait Scheme {
    fn algorithm(&self) -> Algorithm;

    /// Precoders for the buffer's current slot.
    fn act(&mut self, buffer: &DelayBuffer) -> Result<PrecoderSet>;

    /// Per-user rates of global precoder `v` on `channel`.
    fn rates(&self, channel: &ChannelState, v: &ComplexMatrix, noise: f64) -> Result<Vec<f64>> {
        per_user_rates(&channel.h, v, noise)
    }

    fn diagnostics(&self) -> SchemeDiagnostics;
}

/// Initialized precoders for a warm-up slot `t ≤ τ`.
fn warmup_set(budget: &PowerBudget, buffer: &DelayBuffer, layout: &Arc<Layout>) -> PrecoderSet {
    let mut set = init_precoders(budget, 1, layout).remove(0);
    set.t = buffer.current_slot();
    set
}

pub struct ProposedScheme {
    params: AlgoParams,
    budget: PowerBudget,
    layout: Arc<Layout>,
    history: PrecoderHistory,
    parallel: bool,
    diag: SchemeDiagnostics,
}

impl ProposedScheme {
    pub fn new(
        params: AlgoParams,
        budget: PowerBudget,
        layout: Arc<Layout>,
        parallel: bool,
    ) -> Self {
        Self {
            history: PrecoderHistory::new(params.tau),
            params,
            budget,
            layout,
            parallel,
            diag: SchemeDiagnostics::default(),
        }
    }

    pub fn params(&self) -> &AlgoParams {
        &self.params
    }
}

impl Scheme for ProposedScheme {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Proposed
    }

    fn act(&mut self, buffer: &DelayBuffer) -> Result<PrecoderSet> {
        let set = match buffer.observed() {
            None => warmup_set(&self.budget, buffer, &self.layout),
            Some((channel, demand)) => {
                let (v_delayed, v_prev) = self.history.delayed_and_prev()?;
                let (set, report) = distributed_step(
                    channel,
                    demand,
                    v_delayed,
                    v_prev,
                    &self.params,
                    &self.budget,
                    self.parallel,
                )?;
                let base = self.params.alpha + self.params.eta;
                for &den in &report.denominators {
                    if !(den > 0.0) {
                        self.diag.denominator_violations += 1;
                    }
                    let margin = (den - base) / base;
                    self.diag.min_denominator_margin = Some(
                        self.diag
                            .min_denominator_margin
                            .map_or(margin, |m| m.min(margin)),
                    );
                }
                let floor_broken = set
                    .queues
                    .iter()
                    .zip(set.constraints(&self.budget))
                    .any(|(&q, g)| q < -self.params.gamma * g);
                if floor_broken {
                    self.diag.queue_floor_violations += 1;
                }
                self.diag.max_grad_norm = self.diag.max_grad_norm.max(report.global_grad_norm());
                self.diag.projections += report.scaled.iter().filter(|&&s| s).count();
                set
            }
        };
        if set.t != buffer.current_slot() {
            return Err(Error::Invariant(format!(
                "precoder for slot {} emitted at slot {}",
                set.t,
                buffer.current_slot()
            )));
        }
        self.diag.observe_set(&set, &self.budget);
        self.history.push(set.clone());
        Ok(set)
    }

    fn diagnostics(&self) -> SchemeDiagnostics {
        self.diag.clone()
    }
}

pub struct SaddleScheme {
    inner: SaddleBaseline,
    budget: PowerBudget,
    layout: Arc<Layout>,
    history: PrecoderHistory,
    diag: SchemeDiagnostics,
}

impl SaddleScheme {
    pub fn new(horizon: usize, tau: usize, budget: PowerBudget, layout: Arc<Layout>) -> Self {
        Self {
            inner: SaddleBaseline::new(horizon),
            budget,
            layout,
            history: PrecoderHistory::new(tau),
            diag: SchemeDiagnostics::default(),
        }
    }
}

impl Scheme for SaddleScheme {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Saddle
    }

    fn act(&mut self, buffer: &DelayBuffer) -> Result<PrecoderSet> {
        let set = match buffer.observed() {
            None => warmup_set(&self.budget, buffer, &self.layout),
            Some((channel, demand)) => {
                let (v_delayed, v_prev) = self.history.delayed_and_prev()?;
                self.inner
                    .step(channel, demand, v_delayed, v_prev, &self.budget)?
            }
        };
        self.diag.observe_set(&set, &self.budget);
        self.history.push(set.clone());
        Ok(set)
    }

    fn diagnostics(&self) -> SchemeDiagnostics {
        self.diag.clone()
    }
}

pub struct FdZfScheme {
    budget: PowerBudget,
    layout: Arc<Layout>,
    diag: SchemeDiagnostics,
}

impl FdZfScheme {
    pub fn new(budget: PowerBudget, layout: Arc<Layout>) -> Self {
        Self {
            budget,
            layout,
            diag: SchemeDiagnostics::default(),
        }
    }
}

impl Scheme for FdZfScheme {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Fdzf
    }

    fn act(&mut self, buffer: &DelayBuffer) -> Result<PrecoderSet> {
        let set = match buffer.observed() {
            None => warmup_set(&self.budget, buffer, &self.layout),
            Some((channel, _)) => {
                let layout = &self.layout;
                let pre = fd_zf_step(channel, &self.budget)?;
                let cells = pre
                    .iter()
                    .enumerate()
                    .map(|(c, sps)| {
                        let mut v =
                            ComplexMatrix::zeros(layout.antennas(c), layout.users_in_cell(c));
                        for (m, zf) in sps.iter().enumerate() {
                            v.set_block(0, layout.sp_col_offset(c, m), &zf.w);
                        }
                        v
                    })
                    .collect();
                PrecoderSet {
                    t: buffer.current_slot(),
                    layout: layout.clone(),
                    cells,
                    queues: vec![0.0; layout.num_cells()],
                }
            }
        };
        self.diag.observe_set(&set, &self.budget);
        Ok(set)
    }

    fn rates(&self, channel: &ChannelState, v: &ComplexMatrix, noise: f64) -> Result<Vec<f64>> {
        fd_zf_rates(channel, v, noise)
    }

    fn diagnostics(&self) -> SchemeDiagnostics {
        self.diag.clone()
    }
}
