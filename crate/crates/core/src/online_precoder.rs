//! Virtual-queue online precoding with τ-slot delayed CSI.
//!
//! Each cell keeps a scalar virtual queue tracking its long-term power
//! pressure. At slot `t > τ` cell `c` takes a proximal step anchored at both
//! `Ṽ_{t−τ}^c` and `Ṽ_{t−1}^c`, using only its own delayed local channel
//! `H̃_{t−τ}^c` and demand `D̃_{t−τ}^c`. The step has the closed form
//!
//! ```text
//! X = (α·Ṽ_{t−τ} + η·Ṽ_{t−1} − ∇) / (γ·Q_{t−1} + γ²·g(Ṽ_{t−1}) + α + η)
//! ```
//!
//! followed by scaling onto the ball `‖Ṽ‖_F² ≤ p_max` when needed.
//!
//! Gradients are Wirtinger gradients `∂f/∂V*`. The real-coordinate gradient
//! is twice this value.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelState, Layout};
use crate::error::{Error, Result};
use crate::metrics::dbm_to_watts;
use crate::numerics::ComplexMatrix;
use crate::virtualization::Demand;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgoParams {
    pub alpha: f64,
    pub eta: f64,
    pub gamma: f64,
    pub tau: usize,
    pub horizon: usize,
}

impl AlgoParams {
    pub fn new(alpha: f64, eta: f64, gamma: f64, tau: usize, horizon: usize) -> Result<Self> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !(positive(alpha) && positive(eta) && positive(gamma)) {
            return Err(Error::ConfigInvalid(format!(
                "step weights must be positive (alpha={alpha}, eta={eta}, gamma={gamma})"
            )));
        }
        if tau == 0 || horizon < tau {
            return Err(Error::ConfigInvalid(format!(
                "need 1 <= tau <= T, got tau={tau}, T={horizon}"
            )));
        }
        Ok(Self {
            alpha,
            eta,
            gamma,
            tau,
            horizon,
        })
    }

    /// `α = √(T/τ)`, `γ = T^{1/4}`, `η = ½·β·√T`.
    pub fn standard_schedule(horizon: usize, tau: usize, beta_lip: f64) -> Result<Self> {
        if tau == 0 || horizon < tau {
            return Err(Error::ConfigInvalid(format!(
                "need 1 <= tau <= T, got tau={tau}, T={horizon}"
            )));
        }
        let t = horizon as f64;
        Self::new(
            (t / tau as f64).sqrt(),
            0.5 * beta_lip * t.sqrt(),
            t.powf(0.25),
            tau,
            horizon,
        )
    }
}

/// Per-cell power limits in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerBudget {
    p_bar: Vec<f64>,
    p_max: Vec<f64>,
}

impl PowerBudget {
    pub fn new(p_bar: Vec<f64>, p_max: Vec<f64>) -> Result<Self> {
        if p_bar.is_empty() || p_bar.len() != p_max.len() {
            return Err(Error::ConfigInvalid(
                "need one p_bar and one p_max per cell".into(),
            ));
        }
        for (c, (&pb, &pm)) in p_bar.iter().zip(&p_max).enumerate() {
            if !(pb > 0.0 && pb <= pm && pm.is_finite()) {
                return Err(Error::ConfigInvalid(format!(
                    "cell {c}: need 0 < p_bar <= p_max, got p_bar={pb} W, p_max={pm} W"
                )));
            }
        }
        Ok(Self { p_bar, p_max })
    }

    pub fn from_dbm(p_bar_dbm: &[f64], p_max_dbm: &[f64]) -> Result<Self> {
        Self::new(
            p_bar_dbm.iter().copied().map(dbm_to_watts).collect(),
            p_max_dbm.iter().copied().map(dbm_to_watts).collect(),
        )
    }

    pub fn uniform(cells: usize, p_bar: f64, p_max: f64) -> Result<Self> {
        Self::new(vec![p_bar; cells], vec![p_max; cells])
    }

    pub fn num_cells(&self) -> usize {
        self.p_bar.len()
    }

    pub fn p_bar(&self, c: usize) -> f64 {
        self.p_bar[c]
    }

    pub fn p_max(&self, c: usize) -> f64 {
        self.p_max[c]
    }

    pub fn p_bar_all(&self) -> &[f64] {
        &self.p_bar
    }

    pub fn p_max_all(&self) -> &[f64] {
        &self.p_max
    }

    /// `g^c(V) = ‖V‖_F² − p̄_c`.
    pub fn constraint(&self, c: usize, v: &ComplexMatrix) -> f64 {
        v.fro_norm_sq() - self.p_bar[c]
    }
}

/// Per-cell precoders `Ṽ_t^c` and queues `Q_t^c` of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub t: usize,
    pub layout: Arc<Layout>,
    /// `Ṽ_t^c`, N_c×K_c.
    pub cells: Vec<ComplexMatrix>,
    pub queues: Vec<f64>,
}

impl PrecoderSet {
    /// Block-diagonal `V_t`, N×K.
    pub fn global(&self) -> ComplexMatrix {
        let l = &self.layout;
        let mut v = ComplexMatrix::zeros(l.total_antennas(), l.total_users());
        for (c, vc) in self.cells.iter().enumerate() {
            v.set_block(l.col_offset(c), l.cell_row_offset(c), vc);
        }
        v
    }

    pub fn powers(&self) -> Vec<f64> {
        self.cells.iter().map(ComplexMatrix::fro_norm_sq).collect()
    }

    pub fn constraints(&self, budget: &PowerBudget) -> Vec<f64> {
        self.cells
            .iter()
            .enumerate()
            .map(|(c, v)| budget.constraint(c, v))
            .collect()
    }
}

/// Constant matrix with `‖·‖_F² = p_bar` exactly in exact arithmetic.
pub fn init_precoder(antennas: usize, users: usize, p_bar: f64) -> ComplexMatrix {
    let entry = (p_bar / (antennas * users) as f64).sqrt();
    ComplexMatrix::filled(antennas, users, Complex64::new(entry, 0.0))
}

/// Precoders for the warm-up slots `t = 1..=τ`, all with zero queues.
pub fn init_precoders(budget: &PowerBudget, tau: usize, layout: &Arc<Layout>) -> Vec<PrecoderSet> {
    let cells: Vec<ComplexMatrix> = (0..layout.num_cells())
        .map(|c| init_precoder(layout.antennas(c), layout.users_in_cell(c), budget.p_bar(c)))
        .collect();
    (1..=tau)
        .map(|t| PrecoderSet {
            t,
            layout: layout.clone(),
            cells: cells.clone(),
            queues: vec![0.0; layout.num_cells()],
        })
        .collect()
}

/// `H̃ᴴ(H̃V − D̃)`.
pub fn local_gradient(
    h: &ComplexMatrix,
    v: &ComplexMatrix,
    d: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    if h.cols() != v.rows() || h.rows() != d.rows() || v.cols() != d.cols() {
        return Err(Error::dim(
            "local_gradient",
            format!("H {:?}, V {:?}, D {:?}", h.shape(), v.shape(), d.shape()),
        ));
    }
    h.hermitian_matmul(&h.matmul(v)?.sub(d)?)
}

/// `Q_t = max(−γ·g, Q_{t−1} + γ·g)`.
pub fn queue_update(q_prev: f64, g_now: f64, gamma: f64) -> f64 {
    (-gamma * g_now).max(q_prev + gamma * g_now)
}

/// Scales `x` onto `‖·‖_F² ≤ radius_sq` if it lies outside. Returns the
/// scaling factor applied (1 when inside).
pub fn project_ball(x: &mut ComplexMatrix, radius_sq: f64) -> f64 {
    let n2 = x.fro_norm_sq();
    if n2 > radius_sq {
        let mut s = (radius_sq / n2).sqrt();
        x.scale_mut(s);
        // Rounding can leave the result an ulp outside the ball.
        while x.fro_norm_sq() > radius_sq {
            x.scale_mut(1.0 - f64::EPSILON);
            s *= 1.0 - f64::EPSILON;
        }
        s
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub precoder: ComplexMatrix,
    pub denominator: f64,
    /// `‖X‖_F²` before projection.
    pub candidate_norm_sq: f64,
    pub scaled: bool,
    /// Multiplier of the short-term constraint; zero when inactive.
    pub multiplier: f64,
}

/// Closed-form per-cell proximal step followed by the power-ball scaling.
#[allow(clippy::too_many_arguments)]
pub fn precoder_update(
    grad: &ComplexMatrix,
    v_delayed: &ComplexMatrix,
    v_prev: &ComplexMatrix,
    q_prev: f64,
    g_prev: f64,
    params: &AlgoParams,
    p_max: f64,
) -> Result<UpdateOutcome> {
    let den =
        params.gamma * q_prev + params.gamma * params.gamma * g_prev + params.alpha + params.eta;
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::Invariant(format!(
            "nonpositive update denominator {den:.6e} (Q={q_prev:.6e}, g={g_prev:.6e})"
        )));
    }
    let mut x = v_delayed
        .axpby(params.alpha, v_prev, params.eta)?
        .sub(grad)?;
    x.scale_mut(1.0 / den);
    x.check_finite("precoder_update")?;
    let candidate_norm_sq = x.fro_norm_sq();
    let s = project_ball(&mut x, p_max);
    let scaled = s < 1.0;
    let multiplier = if scaled { den * (1.0 / s - 1.0) } else { 0.0 };
    Ok(UpdateOutcome {
        precoder: x,
        denominator: den,
        candidate_norm_sq,
        scaled,
        multiplier,
    })
}

/// Objective whose constrained minimizer `precoder_update` returns, up to an
/// additive constant:
/// `2·Re⟨∇, V⟩ + α‖V − Ṽ_{t−τ}‖² + η‖V − Ṽ_{t−1}‖² + (γQ + γ²g)‖V‖²`.
#[allow(clippy::too_many_arguments)]
pub fn step_objective(
    v: &ComplexMatrix,
    grad: &ComplexMatrix,
    v_delayed: &ComplexMatrix,
    v_prev: &ComplexMatrix,
    q_prev: f64,
    g_prev: f64,
    params: &AlgoParams,
) -> Result<f64> {
    let weight = params.gamma * q_prev + params.gamma * params.gamma * g_prev;
    Ok(2.0 * grad.inner_re(v)?
        + params.alpha * v.sub(v_delayed)?.fro_norm_sq()
        + params.eta * v.sub(v_prev)?.fro_norm_sq()
        + weight * v.fro_norm_sq())
}

/// Per-cell diagnostics of one [`distributed_step`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub denominators: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub scaled: Vec<bool>,
    /// `‖∇_c‖_F` of each cell's delayed gradient.
    pub grad_norms: Vec<f64>,
}

impl StepReport {
    /// Norm of the stacked block-diagonal gradient.
    pub fn global_grad_norm(&self) -> f64 {
        self.grad_norms.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

fn cell_step(
    c: usize,
    channel: &ChannelState,
    demand: &Demand,
    v_delayed: &PrecoderSet,
    v_prev: &PrecoderSet,
    params: &AlgoParams,
    budget: &PowerBudget,
) -> Result<(UpdateOutcome, f64)> {
    let grad = local_gradient(
        &channel.local_view(c),
        &v_delayed.cells[c],
        &demand.embedded[c],
    )?;
    let g_prev = budget.constraint(c, &v_prev.cells[c]);
    let out = precoder_update(
        &grad,
        &v_delayed.cells[c],
        &v_prev.cells[c],
        v_prev.queues[c],
        g_prev,
        params,
        budget.p_max(c),
    )?;
    Ok((out, grad.fro_norm()))
}

/// One slot of the per-cell algorithm. `channel` and `demand` must be the
/// slot-`t−τ` observations, `v_delayed` and `v_prev` the sets of slots
/// `t−τ` and `t−1`.
pub fn distributed_step(
    channel: &ChannelState,
    demand: &Demand,
    v_delayed: &PrecoderSet,
    v_prev: &PrecoderSet,
    params: &AlgoParams,
    budget: &PowerBudget,
    parallel: bool,
) -> Result<(PrecoderSet, StepReport)> {
    let cells = channel.layout.num_cells();
    if budget.num_cells() != cells || v_delayed.cells.len() != cells || v_prev.cells.len() != cells
    {
        return Err(Error::dim("distributed_step", "cell counts disagree"));
    }
    let run = |c| cell_step(c, channel, demand, v_delayed, v_prev, params, budget);
    let outcomes: Vec<Result<_>> = if parallel {
        (0..cells).into_par_iter().map(run).collect()
    } else {
        (0..cells).map(run).collect()
    };

    let mut report = StepReport::default();
    let mut precoders = Vec::with_capacity(cells);
    let mut queues = Vec::with_capacity(cells);
    for (c, outcome) in outcomes.into_iter().enumerate() {
        let (out, grad_norm) = outcome?;
        let g_now = budget.constraint(c, &out.precoder);
        queues.push(queue_update(v_prev.queues[c], g_now, params.gamma));
        report.denominators.push(out.denominator);
        report.multipliers.push(out.multiplier);
        report.scaled.push(out.scaled);
        report.grad_norms.push(grad_norm);
        precoders.push(out.precoder);
    }
    Ok((
        PrecoderSet {
            t: v_prev.t + 1,
            layout: channel.layout.clone(),
            cells: precoders,
            queues,
        },
        report,
    ))
}
