//! Comparison schemes: the best fixed precoder in hindsight, a delayed
//! primal-dual method, and frequency-division ZF.

use std::sync::Arc;

use crate::channel::{ChannelState, Layout};
use crate::error::{Error, Result};
use crate::metrics::rates_from_effective;
use crate::numerics::{hermitian_eigh, ComplexMatrix};
use crate::online_precoder::{local_gradient, project_ball, PowerBudget, PrecoderSet};
use crate::virtualization::{zf_virtual_precoder, Demand, ZfPrecoder};

/// Eigen-directions with `λ_i ≤ NULL_EIG_REL·λ_max` are treated as null.
pub const NULL_EIG_REL: f64 = 1e-12;

/// Running sums `A_c = Σ H̃ᴴH̃`, `B_c = Σ H̃ᴴD̃` and `Σ ‖D̃‖²` per cell.
#[derive(Debug, Clone)]
pub struct OfflineAccumulator {
    gram: Vec<ComplexMatrix>,
    cross: Vec<ComplexMatrix>,
    demand_energy: Vec<f64>,
    slots: usize,
}

impl OfflineAccumulator {
    pub fn new(layout: &Layout) -> Self {
        let cells = layout.num_cells();
        Self {
            gram: (0..cells)
                .map(|c| ComplexMatrix::zeros(layout.antennas(c), layout.antennas(c)))
                .collect(),
            cross: (0..cells)
                .map(|c| ComplexMatrix::zeros(layout.antennas(c), layout.users_in_cell(c)))
                .collect(),
            demand_energy: vec![0.0; cells],
            slots: 0,
        }
    }

    pub fn push(&mut self, channel: &ChannelState, demand: &Demand) -> Result<()> {
        for c in 0..self.gram.len() {
            let h = channel.local_view(c);
            self.gram[c] = self.gram[c].add(&h.hermitian_matmul(&h)?)?;
            self.cross[c] = self.cross[c].add(&h.hermitian_matmul(&demand.embedded[c])?)?;
            self.demand_energy[c] += demand.embedded[c].fro_norm_sq();
        }
        self.slots += 1;
        Ok(())
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    /// Per cell, minimizes `Σ_t ‖H̃_t V − D̃_t‖²` over `‖V‖_F² ≤ p̄_c`.
    pub fn solve(self, budget: &PowerBudget) -> Result<OfflineSolution> {
        if budget.num_cells() != self.gram.len() {
            return Err(Error::dim(
                "offline solve",
                "budget does not match cell count",
            ));
        }
        let mut cells = Vec::with_capacity(self.gram.len());
        let mut multipliers = Vec::with_capacity(self.gram.len());
        for c in 0..self.gram.len() {
            let (v, lam) =
                solve_norm_constrained_ls(&self.gram[c], &self.cross[c], budget.p_bar(c))?;
            cells.push(v);
            multipliers.push(lam);
        }
        Ok(OfflineSolution {
            cells,
            multipliers,
            gram: self.gram,
            cross: self.cross,
            demand_energy: self.demand_energy,
        })
    }
}

/// Minimizes `tr(VᴴAV) − 2·Re tr(VᴴB)` subject to `‖V‖_F² ≤ radius_sq` for
/// Hermitian PSD `A`. Returns the minimizer and its multiplier.
///
/// With `A = UΛUᴴ` the stationary point for multiplier `λ` is
/// `V(λ) = U·diag(1/(λ_i + λ))·UᴴB`, whose norm strictly decreases in `λ`.
pub fn solve_norm_constrained_ls(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    radius_sq: f64,
) -> Result<(ComplexMatrix, f64)> {
    if a.rows() != a.cols() || a.rows() != b.rows() {
        return Err(Error::dim(
            "solve_norm_constrained_ls",
            format!("A {:?}, B {:?}", a.shape(), b.shape()),
        ));
    }
    if !(radius_sq > 0.0) {
        return Err(Error::Invariant(format!(
            "radius must be positive, got {radius_sq}"
        )));
    }
    let eig = hermitian_eigh(a)?;
    let ub = eig.vectors.hermitian_matmul(b)?;
    let lam_max = eig.values.last().copied().unwrap_or(0.0).max(0.0);
    let active: Vec<usize> = (0..eig.values.len())
        .filter(|&i| eig.values[i] > NULL_EIG_REL * lam_max && eig.values[i] > 0.0)
        .collect();
    let row_energy: Vec<f64> = active
        .iter()
        .map(|&i| ub.row(i).iter().map(|z| z.norm_sqr()).sum())
        .collect();
    let norm_sq = |lam: f64| -> f64 {
        active
            .iter()
            .zip(&row_energy)
            .map(|(&i, e)| e / (eig.values[i] + lam).powi(2))
            .sum()
    };

    let lam = if norm_sq(0.0) <= radius_sq {
        0.0
    } else {
        let mut lo = 0.0;
        let mut hi = b.fro_norm() / radius_sq.sqrt();
        if norm_sq(hi) > radius_sq {
            return Err(Error::Invariant(
                "multiplier bisection failed to bracket".into(),
            ));
        }
        // Bisect until the bracket collapses to adjacent floats.
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let n = norm_sq(mid);
            if (n - radius_sq).abs() <= 1e-15 * radius_sq {
                hi = mid;
                break;
            }
            if n > radius_sq {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };

    let mut scaled = ComplexMatrix::zeros(ub.rows(), ub.cols());
    for &i in &active {
        let w = 1.0 / (eig.values[i] + lam);
        for (dst, src) in scaled.row_mut(i).iter_mut().zip(ub.row(i)) {
            *dst = src * w;
        }
    }
    let v = eig.vectors.matmul(&scaled)?;
    v.check_finite("solve_norm_constrained_ls")?;
    Ok((v, lam))
}

/// Best fixed per-cell precoders in hindsight.
#[derive(Debug, Clone)]
pub struct OfflineSolution {
    pub cells: Vec<ComplexMatrix>,
    pub multipliers: Vec<f64>,
    pub gram: Vec<ComplexMatrix>,
    pub cross: Vec<ComplexMatrix>,
    pub demand_energy: Vec<f64>,
}

impl OfflineSolution {
    /// `Σ_t ‖H̃_t^c V − D̃_t^c‖_F²` evaluated through the accumulated sums.
    pub fn objective(&self, c: usize, v: &ComplexMatrix) -> Result<f64> {
        let av = self.gram[c].matmul(v)?;
        Ok(v.inner_re(&av)? - 2.0 * v.inner_re(&self.cross[c])? + self.demand_energy[c])
    }

    pub fn total_objective(&self) -> Result<f64> {
        (0..self.cells.len())
            .map(|c| self.objective(c, &self.cells[c]))
            .sum()
    }

    /// `f_t(V*)` at one slot.
    pub fn slot_loss(&self, channel: &ChannelState, demand: &Demand) -> Result<f64> {
        let mut total = 0.0;
        for (c, v) in self.cells.iter().enumerate() {
            total += channel
                .local_view(c)
                .matmul(v)?
                .sub(&demand.embedded[c])?
                .fro_norm_sq();
        }
        Ok(total)
    }
}

/// One cell of the delayed primal-dual baseline:
/// `V_t = Proj(V_{t−1} − σ(∇_{t−τ} + 2·dual·V_{t−1}))`, then
/// `dual_t = max(0, dual + μ·g(V_t))`.
pub fn delayed_saddle_step(
    grad_delayed: &ComplexMatrix,
    v_prev: &ComplexMatrix,
    dual_prev: f64,
    step: f64,
    dual_step: f64,
    p_max: f64,
    p_bar: f64,
) -> Result<(ComplexMatrix, f64)> {
    let descent = grad_delayed.axpby(1.0, v_prev, 2.0 * dual_prev)?;
    let mut v = v_prev.axpby(1.0, &descent, -step)?;
    v.check_finite("delayed_saddle_step")?;
    project_ball(&mut v, p_max);
    let dual = (dual_prev + dual_step * (v.fro_norm_sq() - p_bar)).max(0.0);
    Ok((v, dual))
}

/// Step-size state of the primal-dual baseline. The channel bound used in
/// `σ = R/(D√T)` with `D = B²R` is the running max of the delayed channel
/// norms observed so far, so the scheme stays causal.
#[derive(Debug, Clone)]
pub struct SaddleBaseline {
    horizon: usize,
    b_observed: f64,
}

impl SaddleBaseline {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            b_observed: 0.0,
        }
    }

    pub fn step_sizes(&self) -> (f64, f64) {
        let sqrt_t = (self.horizon as f64).sqrt();
        let step = if self.b_observed > 0.0 {
            1.0 / (self.b_observed * self.b_observed * sqrt_t)
        } else {
            0.0
        };
        (step, 1.0 / sqrt_t)
    }

    /// `channel` and `demand` are the slot-`t−τ` observations. The
    /// returned set stores the dual variables in `queues`.
    pub fn step(
        &mut self,
        channel: &ChannelState,
        demand: &Demand,
        v_delayed: &PrecoderSet,
        v_prev: &PrecoderSet,
        budget: &PowerBudget,
    ) -> Result<PrecoderSet> {
        self.b_observed = self.b_observed.max(channel.fro_norm());
        let (step, dual_step) = self.step_sizes();
        let cells = channel.layout.num_cells();
        let mut precoders = Vec::with_capacity(cells);
        let mut duals = Vec::with_capacity(cells);
        for c in 0..cells {
            let grad = local_gradient(
                &channel.local_view(c),
                &v_delayed.cells[c],
                &demand.embedded[c],
            )?;
            let (v, dual) = delayed_saddle_step(
                &grad,
                &v_prev.cells[c],
                v_prev.queues[c],
                step,
                dual_step,
                budget.p_max(c),
                budget.p_bar(c),
            )?;
            precoders.push(v);
            duals.push(dual);
        }
        Ok(PrecoderSet {
            t: v_prev.t + 1,
            layout: channel.layout.clone(),
            cells: precoders,
            queues: duals,
        })
    }
}

/// Per-SP ZF precoders of the frequency-division scheme, designed from
/// `channel`, each with power `p_max/M`. Indexed `[cell][sp]`.
pub fn fd_zf_step(channel: &ChannelState, budget: &PowerBudget) -> Result<Vec<Vec<ZfPrecoder>>> {
    let layout = &channel.layout;
    let m = layout.num_sps();
    (0..layout.num_cells())
        .map(|c| {
            (0..m)
                .map(|sp| {
                    zf_virtual_precoder(&channel.block(c, c, sp), budget.p_max(c) / m as f64)
                        .map_err(|e| Error::DegenerateChannel {
                            cell: c,
                            sp,
                            source: Box::new(e),
                        })
                })
                .collect()
        })
        .collect()
}

/// Block-diagonal N×K precoder from per-SP blocks.
pub fn fd_zf_global(layout: &Arc<Layout>, precoders: &[Vec<ZfPrecoder>]) -> ComplexMatrix {
    let mut v = ComplexMatrix::zeros(layout.total_antennas(), layout.total_users());
    for (c, sps) in precoders.iter().enumerate() {
        for (m, zf) in sps.iter().enumerate() {
            v.set_block(layout.col_offset(c), layout.sp_row_offset(c, m), &zf.w);
        }
    }
    v
}

/// Per-user rates when SP `m` owns a `1/M` subband: interference only from
/// same-SP streams of any cell, noise `noise/M`, rate weight `1/M`.
/// `v` is any N×K block-diagonal precoder.
pub fn fd_zf_rates(channel: &ChannelState, v: &ComplexMatrix, noise: f64) -> Result<Vec<f64>> {
    let layout = &channel.layout;
    let m = layout.num_sps();
    let e = channel.h.matmul(v)?;
    let owners: Vec<usize> = layout.rows().map(|(_, sp, _)| sp).collect();
    let mut rates = vec![0.0; layout.total_users()];
    for sp in 0..m {
        let idx: Vec<usize> = (0..owners.len()).filter(|&k| owners[k] == sp).collect();
        let sub = ComplexMatrix::from_fn(idx.len(), idx.len(), |i, j| e[(idx[i], idx[j])]);
        let r = rates_from_effective(&sub, noise / m as f64)?;
        for (k, rk) in idx.iter().zip(r) {
            rates[*k] = rk / m as f64;
        }
    }
    Ok(rates)
}
