//! Random instances and reference solvers shared by the integration tests.

#![allow(dead_code)]

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use wnv_core::channel::{ChannelState, Layout};
use wnv_core::online_precoder::{AlgoParams, PowerBudget, PrecoderSet};
use wnv_core::virtualization::{build_demand, Demand, VirtualBudgets};
use wnv_core::ComplexMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sd: f64) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * sd, im * sd)
    })
}

/// Random point of the ball `‖V‖_F² ≤ radius_sq`. A quarter of the draws
/// land exactly on the boundary.
pub fn in_ball(rng: &mut ChaCha8Rng, rows: usize, cols: usize, radius_sq: f64) -> ComplexMatrix {
    let dir = gaussian(rng, rows, cols, 1.0);
    let target = if rng.random_bool(0.25) {
        radius_sq
    } else {
        radius_sq * rng.random::<f64>()
    };
    dir.scale((target / dir.fro_norm_sq()).sqrt())
}

pub fn random_set(
    rng: &mut ChaCha8Rng,
    layout: &Arc<Layout>,
    budget: &PowerBudget,
    t: usize,
) -> PrecoderSet {
    let cells = (0..layout.num_cells())
        .map(|c| {
            in_ball(
                rng,
                layout.antennas(c),
                layout.users_in_cell(c),
                budget.p_max(c),
            )
        })
        .collect();
    PrecoderSet {
        t,
        layout: layout.clone(),
        cells,
        queues: vec![0.0; layout.num_cells()],
    }
}

pub fn random_budget(rng: &mut ChaCha8Rng, cells: usize) -> PowerBudget {
    let p_max: Vec<f64> = (0..cells).map(|_| rng.random_range(0.5..3.0)).collect();
    let p_bar = p_max
        .iter()
        .map(|p| p * rng.random_range(0.2..0.9))
        .collect();
    PowerBudget::new(p_bar, p_max).unwrap()
}

pub fn random_channel(rng: &mut ChaCha8Rng, layout: &Arc<Layout>, t: usize) -> ChannelState {
    let h = gaussian(rng, layout.total_users(), layout.total_antennas(), 0.7);
    ChannelState::new(t, h, layout.clone()).unwrap()
}

pub fn demand_for(channel: &ChannelState, budget: &PowerBudget) -> Demand {
    let budgets = VirtualBudgets::equal_split(budget.p_max_all(), channel.layout.num_sps());
    build_demand(channel, &budgets).unwrap()
}

/// Step weights from the standard schedule for a random horizon and delay.
pub fn random_params(rng: &mut ChaCha8Rng, budget: &PowerBudget) -> AlgoParams {
    let horizon = rng.random_range(50..3000);
    let tau = rng.random_range(1..10);
    let beta = 2.0
        * budget
            .p_max_all()
            .iter()
            .copied()
            .fold(0.0, f64::max)
            .sqrt();
    AlgoParams::standard_schedule(horizon, tau, beta).unwrap()
}

/// Queue state consistent with the recursion: `Q ≥ max(0, −γ·g)`.
pub fn random_queue(rng: &mut ChaCha8Rng, g_prev: f64, gamma: f64) -> f64 {
    (-gamma * g_prev).max(0.0) + rng.random_range(0.0..5.0)
}

/// One block of a separable proximal problem.
pub struct Block {
    pub grad: ComplexMatrix,
    pub delayed: ComplexMatrix,
    pub prev: ComplexMatrix,
    pub weight: f64,
    pub radius_sq: f64,
}

/// Projected gradient over a product of balls on
/// `Σ_b 2Re⟨G_b, V_b⟩ + α‖V_b − A_b‖² + η‖V_b − P_b‖² + w_b‖V_b‖²`.
/// Stops after `max_iter` steps or once no entry moves by more than 1e-15.
pub fn projected_gradient(
    blocks: &[Block],
    alpha: f64,
    eta: f64,
    max_iter: usize,
) -> Vec<ComplexMatrix> {
    let curvature = blocks
        .iter()
        .map(|b| 2.0 * (alpha + eta + b.weight))
        .fold(0.0, f64::max);
    let step = 1e-3f64.min(0.5 / curvature);
    let mut v: Vec<ComplexMatrix> = blocks.iter().map(|b| b.prev.clone()).collect();
    for _ in 0..max_iter {
        let mut moved = 0.0f64;
        for (vb, b) in v.iter_mut().zip(blocks) {
            // Real-coordinate gradient, written in complex form.
            let d = b
                .grad
                .add(&vb.sub(&b.delayed).unwrap().scale(alpha))
                .unwrap()
                .add(&vb.sub(&b.prev).unwrap().scale(eta))
                .unwrap()
                .add(&vb.scale(b.weight))
                .unwrap()
                .scale(2.0);
            let mut next = vb.sub(&d.scale(step)).unwrap();
            let n2 = next.fro_norm_sq();
            if n2 > b.radius_sq {
                next.scale_mut((b.radius_sq / n2).sqrt());
            }
            moved = moved.max(next.max_abs_diff(vb));
            *vb = next;
        }
        if moved < 1e-15 {
            break;
        }
    }
    v
}
