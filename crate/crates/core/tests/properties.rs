//! Property tests for the per-slot invariants.

mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;

use common::*;
use wnv_core::baselines::{delayed_saddle_step, solve_norm_constrained_ls};
use wnv_core::channel::Layout;
use wnv_core::metrics::{budget_constants, regret_and_violation, scheduled_bound_constants};
use wnv_core::online_precoder::{
    distributed_step, local_gradient, precoder_update, project_ball, queue_update, step_objective,
};
use wnv_core::virtualization::zf_residual;
use wnv_core::ComplexMatrix;

fn layout_strategy() -> impl Strategy<Value = Arc<Layout>> {
    (1usize..=3, 1usize..=3, 1usize..=2, 1usize..=2).prop_map(|(cells, extra, sps, per_sp)| {
        // Enough antennas per cell for ZF on every SP.
        let antennas = sps * per_sp + extra;
        Arc::new(Layout::uniform(cells, antennas, sps, per_sp).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn queue_stays_nonnegative_and_above_floor(
        q in 0.0f64..100.0,
        g in -10.0f64..10.0,
        gamma in 0.01f64..20.0,
    ) {
        let next = queue_update(q, g, gamma);
        prop_assert!(next >= 0.0);
        prop_assert!(next >= -gamma * g);
        prop_assert!(next >= q + gamma * g);
    }

    #[test]
    fn queue_sequence_never_goes_negative(gs in prop::collection::vec(-5.0f64..5.0, 1..200), gamma in 0.1f64..10.0) {
        let mut q = 0.0;
        for g in gs {
            q = queue_update(q, g, gamma);
            prop_assert!(q >= 0.0);
        }
    }

    #[test]
    fn projection_is_feasible_idempotent_and_nonexpansive(seed: u64, radius_sq in 0.01f64..10.0) {
        let mut r = rng(seed);
        let mut a = gaussian(&mut r, 3, 4, 2.0);
        let mut b = gaussian(&mut r, 3, 4, 2.0);
        let before = a.sub(&b).unwrap().fro_norm();
        project_ball(&mut a, radius_sq);
        project_ball(&mut b, radius_sq);
        prop_assert!(a.fro_norm_sq() <= radius_sq * (1.0 + 1e-12));
        prop_assert!(a.sub(&b).unwrap().fro_norm() <= before * (1.0 + 1e-12));
        let again = a.clone();
        let s = project_ball(&mut a, radius_sq);
        prop_assert_eq!(s, 1.0);
        prop_assert_eq!(a, again);
    }

    #[test]
    fn precoder_update_is_feasible_and_satisfies_kkt(seed: u64) {
        let mut r = rng(seed);
        let budget = random_budget(&mut r, 1);
        let params = random_params(&mut r, &budget);
        let (n, k) = (r.random_range(1..5), r.random_range(1..5));
        let sd = r.random_range(0.01..30.0);
        let grad = gaussian(&mut r, n, k, sd);
        let vd = in_ball(&mut r, n, k, budget.p_max(0));
        let vp = in_ball(&mut r, n, k, budget.p_max(0));
        let g = budget.constraint(0, &vp);
        let q = random_queue(&mut r, g, params.gamma);
        let out = precoder_update(&grad, &vd, &vp, q, g, &params, budget.p_max(0)).unwrap();
        let v = &out.precoder;
        prop_assert!(v.fro_norm_sq() <= budget.p_max(0) * (1.0 + 1e-12));
        prop_assert!(out.multiplier >= 0.0);
        // Stationarity of the Lagrangian with multiplier λ on ‖V‖² ≤ p_max.
        let weight = params.gamma * q + params.gamma * params.gamma * g;
        let residual = grad
            .add(&v.sub(&vd).unwrap().scale(params.alpha)).unwrap()
            .add(&v.sub(&vp).unwrap().scale(params.eta)).unwrap()
            .add(&v.scale(weight + out.multiplier)).unwrap();
        let scale = grad.fro_norm() + out.denominator * budget.p_max(0).sqrt() + out.multiplier;
        prop_assert!(residual.fro_norm() <= 1e-10 * scale, "residual {}", residual.fro_norm());
        // Complementary slackness.
        prop_assert!(out.multiplier * (v.fro_norm_sq() - budget.p_max(0)).abs() <= 1e-9 * (1.0 + out.multiplier));
        // No feasible perturbation does better.
        let f = |x: &ComplexMatrix| step_objective(x, &grad, &vd, &vp, q, g, &params).unwrap();
        let best = f(v);
        for _ in 0..20 {
            let mut probe = v.add(&gaussian(&mut r, n, k, 0.05)).unwrap();
            project_ball(&mut probe, budget.p_max(0));
            prop_assert!(f(&probe) >= best - 1e-9 * (1.0 + best.abs()));
        }
    }

    #[test]
    fn distributed_step_respects_short_term_power(layout in layout_strategy(), seed: u64) {
        let mut r = rng(seed);
        let budget = random_budget(&mut r, layout.num_cells());
        let params = random_params(&mut r, &budget);
        let channel = random_channel(&mut r, &layout, 1);
        let demand = demand_for(&channel, &budget);
        let vd = random_set(&mut r, &layout, &budget, 1);
        let mut vp = random_set(&mut r, &layout, &budget, 1);
        for c in 0..layout.num_cells() {
            vp.queues[c] = random_queue(&mut r, budget.constraint(c, &vp.cells[c]), params.gamma);
        }
        let (next, report) = distributed_step(&channel, &demand, &vd, &vp, &params, &budget, false).unwrap();
        prop_assert_eq!(next.t, 2);
        for c in 0..layout.num_cells() {
            prop_assert!(next.cells[c].fro_norm_sq() <= budget.p_max(c) * (1.0 + 1e-12));
            prop_assert!(next.queues[c] >= 0.0);
            prop_assert!(report.denominators[c] >= params.alpha + params.eta);
        }
    }

    #[test]
    fn lemma_bounds_hold_on_random_feasible_points(layout in layout_strategy(), seed: u64) {
        let mut r = rng(seed);
        let budget = random_budget(&mut r, layout.num_cells());
        let channel = random_channel(&mut r, &layout, 1);
        let demand = demand_for(&channel, &budget);
        let b = channel.fro_norm();
        let k = scheduled_bound_constants(&budget, b, 1000, 4).unwrap();
        let v1 = random_set(&mut r, &layout, &budget, 1);
        let v2 = random_set(&mut r, &layout, &budget, 1);
        let grad = local_gradient(&channel.h, &v1.global(), &demand.global()).unwrap();
        prop_assert!(grad.fro_norm() <= k.d * (1.0 + 1e-12));
        let g1 = v1.constraints(&budget);
        let g2 = v2.constraints(&budget);
        let dg = g1.iter().zip(&g2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let dv = v1.global().sub(&v2.global()).unwrap().fro_norm();
        prop_assert!(dg <= k.beta_lip * dv * (1.0 + 1e-12) + 1e-15);
        prop_assert!(g1.iter().map(|x| x * x).sum::<f64>().sqrt() <= k.g * (1.0 + 1e-12));
        prop_assert!(dv <= k.r * (1.0 + 1e-12));
        for c in 0..layout.num_cells() {
            prop_assert!(budget.constraint(c, &ComplexMatrix::zeros(1, 1)) <= -k.eps);
        }
    }

    #[test]
    fn zf_demand_is_exact(layout in layout_strategy(), seed: u64) {
        let mut r = rng(seed);
        let budget = random_budget(&mut r, layout.num_cells());
        let channel = random_channel(&mut r, &layout, 1);
        let demand = demand_for(&channel, &budget);
        let sps = layout.num_sps();
        for c in 0..layout.num_cells() {
            for m in 0..sps {
                let zf = &demand.precoders[c][m];
                prop_assert!(zf_residual(&channel.block(c, c, m), zf).unwrap() <= 1e-9);
                prop_assert!((zf.w.fro_norm_sq() - budget.p_max(c) / sps as f64).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn norm_constrained_least_squares_beats_feasible_points(seed: u64, n in 1usize..5, k in 1usize..4) {
        let mut r = rng(seed);
        let h = gaussian(&mut r, n + 2, n, 1.0);
        let a = h.hermitian_matmul(&h).unwrap();
        let b = gaussian(&mut r, n, k, 1.0);
        let radius_sq = r.random_range(0.05..3.0);
        let (v, lambda) = solve_norm_constrained_ls(&a, &b, radius_sq).unwrap();
        let obj = |x: &ComplexMatrix| {
            x.hermitian_matmul(&a.matmul(x).unwrap()).unwrap().trace().re - 2.0 * b.inner_re(x).unwrap()
        };
        prop_assert!(v.fro_norm_sq() <= radius_sq * (1.0 + 1e-12));
        prop_assert!(lambda >= 0.0);
        let best = obj(&v);
        for _ in 0..50 {
            let p = in_ball(&mut r, n, k, radius_sq);
            prop_assert!(obj(&p) >= best - 1e-9 * (1.0 + best.abs()));
        }
    }

    #[test]
    fn saddle_step_keeps_dual_nonnegative(seed: u64) {
        let mut r = rng(seed);
        let p_max = r.random_range(0.5..3.0);
        let p_bar = p_max * 0.5;
        let grad = gaussian(&mut r, 3, 2, 5.0);
        let vp = in_ball(&mut r, 3, 2, p_max);
        let dual = r.random_range(0.0..3.0);
        let (v, next) = delayed_saddle_step(&grad, &vp, dual, 0.01, 0.1, p_max, p_bar).unwrap();
        prop_assert!(v.fro_norm_sq() <= p_max * (1.0 + 1e-12));
        prop_assert!(next >= 0.0);
    }

    #[test]
    fn violation_is_sum_of_constraints(gs in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 1..50)) {
        let losses = vec![1.0; gs.len()];
        let (re, vo) = regret_and_violation(&losses, &losses, &gs).unwrap();
        prop_assert_eq!(re, 0.0);
        for c in 0..3 {
            let sum: f64 = gs.iter().map(|row| row[c]).sum();
            prop_assert!((vo[c] - sum).abs() <= 1e-12 * (1.0 + sum.abs()));
        }
    }
}

#[test]
fn constants_match_closed_form_example() {
    let budget = wnv_core::online_precoder::PowerBudget::uniform(3, 1.0, 2.0).unwrap();
    let (beta, g, r, eps) = budget_constants(&budget);
    assert!((r - 2.0 * 6f64.sqrt()).abs() < 1e-12);
    assert!((beta - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    assert!((g - 3f64.sqrt()).abs() < 1e-12);
    assert_eq!(eps, 1.0);
    let k = scheduled_bound_constants(&budget, 5.0, 1000, 4).unwrap();
    assert!((k.d - 25.0 * r).abs() < 1e-9);
}
