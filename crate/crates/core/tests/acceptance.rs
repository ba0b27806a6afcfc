//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! The process exits 0 so the workspace test gate reports the build, not the
//! experimental outcomes. Set `WNV_ACCEPTANCE_STRICT=1` to exit 1 when any
//! criterion fails.

mod common;

use std::collections::HashMap;
use std::error::Error;
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use common::*;
use wnv_core::channel::Layout;
use wnv_core::harness::{
    write_outputs, Algorithm, PerCell, RunOptions, RunOutput, Scenario, ScenarioConfig,
    SUMMARY_FILE, TIMESERIES_FILE,
};
use wnv_core::metrics::scheduled_bound_constants;
use wnv_core::online_precoder::{distributed_step, precoder_update, PowerBudget};
use wnv_core::virtualization::{build_demand, zf_residual};
use wnv_core::ComplexMatrix;

type Check = std::result::Result<(bool, String), Box<dyn Error>>;
type Criterion = (&'static str, fn(&mut Runs) -> Check);

const SEEDS: [u64; 3] = [1, 2, 3];
const QUEUE_SEEDS: std::ops::RangeInclusive<u64> = 1..=10;
const HORIZONS: [usize; 4] = [250, 500, 1000, 2000];
const PG_ITERATIONS: usize = 100_000;

fn config(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        ..ScenarioConfig::default()
    }
}

/// Memoised runs keyed by their serialised config.
#[derive(Default)]
struct Runs {
    done: HashMap<String, RunOutput>,
}

impl Runs {
    fn key(cfg: &ScenarioConfig) -> String {
        cfg.to_toml_string().expect("config serialises")
    }

    fn fetch(&mut self, cfgs: &[ScenarioConfig]) -> Result<Vec<&RunOutput>, Box<dyn Error>> {
        let missing: Vec<&ScenarioConfig> = cfgs
            .iter()
            .filter(|c| !self.done.contains_key(&Self::key(c)))
            .collect();
        let fresh: Vec<(String, RunOutput)> = missing
            .par_iter()
            .map(|c| {
                wnv_core::harness::run_experiment(c, &RunOptions::default())
                    .map(|out| (Self::key(c), out))
            })
            .collect::<wnv_core::Result<_>>()?;
        self.done.extend(fresh);
        Ok(cfgs.iter().map(|c| &self.done[&Self::key(c)]).collect())
    }

    fn one(&mut self, cfg: &ScenarioConfig) -> Result<&RunOutput, Box<dyn Error>> {
        Ok(self.fetch(std::slice::from_ref(cfg))?[0])
    }
}

fn summary(out: &RunOutput, algo: Algorithm) -> &wnv_core::harness::AlgorithmSummary {
    out.algorithm_summary(algo).expect("algorithm was run")
}

/// `H̃ᴴ(H̃V − D̃)` computed directly from the local view.
fn direct_gradient(h: &ComplexMatrix, v: &ComplexMatrix, d: &ComplexMatrix) -> ComplexMatrix {
    h.hermitian()
        .matmul(&h.matmul(v).unwrap().sub(d).unwrap())
        .unwrap()
}

fn random_small_layout(rng: &mut rand_chacha::ChaCha8Rng, cells: usize) -> std::sync::Arc<Layout> {
    let n_c = [2usize, 4][rng.random_range(0..2)];
    let k_c = [2usize, 4][rng.random_range(0..2)];
    // Split K_c users over one or two SPs with at most N_c users each.
    let (sps, per_sp) = if k_c > n_c || rng.random_bool(0.5) {
        (2, k_c / 2)
    } else {
        (1, k_c)
    };
    std::sync::Arc::new(Layout::uniform(cells, n_c, sps, per_sp).unwrap())
}

fn kkt_oracle(_: &mut Runs) -> Check {
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let mut r = rng(1000 + i);
        let cells = [1usize, 3][(i % 2) as usize];
        let layout = random_small_layout(&mut r, cells);
        let budget = random_budget(&mut r, cells);
        let params = random_params(&mut r, &budget);
        let channel = random_channel(&mut r, &layout, 1);
        let demand = demand_for(&channel, &budget);
        let vd = random_set(&mut r, &layout, &budget, 1);
        let vp = random_set(&mut r, &layout, &budget, 1);
        for c in 0..cells {
            let g = budget.constraint(c, &vp.cells[c]);
            let q = random_queue(&mut r, g, params.gamma);
            let grad = direct_gradient(&channel.local_view(c), &vd.cells[c], &demand.embedded[c]);
            let got = precoder_update(
                &grad,
                &vd.cells[c],
                &vp.cells[c],
                q,
                g,
                &params,
                budget.p_max(c),
            )?;
            let oracle = projected_gradient(
                &[Block {
                    grad,
                    delayed: vd.cells[c].clone(),
                    prev: vp.cells[c].clone(),
                    weight: params.gamma * (q + params.gamma * g),
                    radius_sq: budget.p_max(c),
                }],
                params.alpha,
                params.eta,
                PG_ITERATIONS,
            );
            let diff = got.precoder.sub(&oracle[0])?.fro_norm();
            worst = worst.max(diff / (1.0 + oracle[0].fro_norm()));
        }
    }
    Ok((
        worst <= 1e-6,
        format!("max relative diff {worst:.3e} over 100 instances"),
    ))
}

fn distributed_equals_centralized(_: &mut Runs) -> Check {
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let mut r = rng(2000 + i);
        let cells = 3;
        let layout = random_small_layout(&mut r, cells);
        let budget = random_budget(&mut r, cells);
        let params = random_params(&mut r, &budget);
        let channel = random_channel(&mut r, &layout, 1);
        let demand = demand_for(&channel, &budget);
        let vd = random_set(&mut r, &layout, &budget, 1);
        let mut vp = random_set(&mut r, &layout, &budget, 1);
        for c in 0..cells {
            vp.queues[c] = random_queue(&mut r, budget.constraint(c, &vp.cells[c]), params.gamma);
        }
        // Global gradient of the block-diagonal problem, then its diagonal blocks.
        let global_grad = direct_gradient(&channel.h, &vd.global(), &demand.global());
        let blocks: Vec<Block> = (0..cells)
            .map(|c| {
                let g = budget.constraint(c, &vp.cells[c]);
                Block {
                    grad: global_grad.submatrix(
                        layout.col_offset(c),
                        layout.cell_row_offset(c),
                        layout.antennas(c),
                        layout.users_in_cell(c),
                    ),
                    delayed: vd.cells[c].clone(),
                    prev: vp.cells[c].clone(),
                    weight: params.gamma * (vp.queues[c] + params.gamma * g),
                    radius_sq: budget.p_max(c),
                }
            })
            .collect();
        let oracle = projected_gradient(&blocks, params.alpha, params.eta, PG_ITERATIONS);
        let (got, _) = distributed_step(&channel, &demand, &vd, &vp, &params, &budget, false)?;
        let mut diff_sq = 0.0;
        let mut norm_sq = 0.0;
        for (mine, reference) in got.cells.iter().zip(&oracle) {
            diff_sq += mine.sub(reference)?.fro_norm_sq();
            norm_sq += reference.fro_norm_sq();
        }
        worst = worst.max(diff_sq.sqrt() / (1.0 + norm_sq.sqrt()));
    }
    Ok((
        worst <= 1e-6,
        format!("max relative diff {worst:.3e} over 50 instances"),
    ))
}

fn queue_invariants(runs: &mut Runs) -> Check {
    let cfgs: Vec<_> = QUEUE_SEEDS.map(config).collect();
    let mut bad = 0usize;
    let mut min_q = f64::INFINITY;
    for out in runs.fetch(&cfgs)? {
        let d = &summary(out, Algorithm::Proposed).diagnostics;
        bad += d.queue_violations + d.queue_floor_violations + d.denominator_violations;
        if d.min_denominator_margin.is_none_or(|m| m < 0.0) {
            bad += 1;
        }
        let run = out.run(Algorithm::Proposed).expect("proposed run");
        for rec in &run.records {
            for &q in &rec.q {
                min_q = min_q.min(q);
                if q < 0.0 {
                    bad += 1;
                }
            }
        }
    }
    Ok((
        bad == 0,
        format!("{bad} violations over 10 seeds x T=1000, min Q {min_q:.3e}"),
    ))
}

fn horizon_runs(runs: &mut Runs, seed: u64) -> Result<Vec<&RunOutput>, Box<dyn Error>> {
    let cfgs: Vec<_> = HORIZONS
        .iter()
        .map(|&horizon| ScenarioConfig {
            horizon,
            ..config(seed)
        })
        .collect();
    runs.fetch(&cfgs)
}

fn violation_bound(runs: &mut Runs) -> Check {
    let mut ok = true;
    let mut notes = Vec::new();
    for seed in SEEDS {
        let outs = horizon_runs(runs, seed)?;
        let cells = outs[0].summary.config.num_cells;
        let mut worst_ratio = f64::NEG_INFINITY;
        for out in &outs {
            let bound = out.summary.constants.vo_bound;
            for &vo in &summary(out, Algorithm::Proposed).violation {
                ok &= vo <= bound;
                worst_ratio = worst_ratio.max(vo / bound);
            }
        }
        let mut growth = Vec::new();
        for c in 0..cells {
            let series: Vec<f64> = outs
                .iter()
                .map(|o| summary(o, Algorithm::Proposed).violation[c])
                .collect();
            let base = series[0];
            let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let pass = max <= base + 0.2 * base.abs();
            ok &= pass;
            growth.push(format!(
                "c{}:{}",
                c + 1,
                if pass { "flat" } else { "grows" }
            ));
        }
        notes.push(format!(
            "seed {seed}: max VO/bound {worst_ratio:.2e}, {}",
            growth.join(" ")
        ));
    }
    Ok((ok, notes.join("; ")))
}

fn regret_sublinear(runs: &mut Runs) -> Check {
    let mut ok = true;
    let mut notes = Vec::new();
    for seed in SEEDS {
        let outs = horizon_runs(runs, seed)?;
        let per_slot: Vec<f64> = outs
            .iter()
            .map(|o| summary(o, Algorithm::Proposed).regret / o.summary.config.horizon as f64)
            .collect();
        let decreasing = per_slot.windows(2).all(|w| w[1] < w[0]);
        let bounded = outs
            .iter()
            .all(|o| summary(o, Algorithm::Proposed).regret <= o.summary.constants.re_bound);
        ok &= decreasing && bounded;
        let series: Vec<String> = per_slot.iter().map(|x| format!("{x:.4}")).collect();
        notes.push(format!(
            "seed {seed}: RE/T [{}]{}",
            series.join(", "),
            if bounded { "" } else { " above bound" }
        ));
    }
    Ok((ok, notes.join("; ")))
}

fn lemma_suite(runs: &mut Runs) -> Check {
    let cfg = config(1);
    let b_run = runs.one(&cfg)?.summary.constants.b_measured;
    let scenario = Scenario::build(&cfg, false)?;
    let mut source = scenario.channel.open()?;
    let mut trajectory = Vec::with_capacity(cfg.horizon);
    for _ in 0..cfg.horizon {
        let ch = source.next_channel()?;
        let d = build_demand(&ch, &scenario.virtual_budgets)?;
        trajectory.push((ch, d));
    }
    let b = trajectory
        .iter()
        .map(|(h, _)| h.fro_norm())
        .fold(0.0, f64::max);
    let budget: &PowerBudget = &scenario.budget;
    let k = scheduled_bound_constants(budget, b, cfg.horizon, cfg.tau)?;
    let layout = scenario.layout.clone();
    let mut r = rng(77);
    let mut fails = [0usize; 5];
    for i in 0..1000 {
        let (ch, d) = &trajectory[i % trajectory.len()];
        let v1 = random_set(&mut r, &layout, budget, ch.t);
        let mut v2 = random_set(&mut r, &layout, budget, ch.t);
        if i % 4 == 0 {
            // Antipodal boundary pair, the diameter case.
            for (c, v) in v2.cells.iter_mut().enumerate() {
                let u = v1.cells[c].scale(-1.0);
                let n2 = u.fro_norm_sq();
                *v = if n2 > 0.0 {
                    u.scale((budget.p_max(c) / n2).sqrt())
                } else {
                    u
                };
            }
        }
        let grad = direct_gradient(&ch.h, &v1.global(), &d.global());
        if grad.fro_norm() > k.d {
            fails[0] += 1;
        }
        let g1 = v1.constraints(budget);
        let g2 = v2.constraints(budget);
        let dg = g1
            .iter()
            .zip(&g2)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let dv = v1.global().sub(&v2.global())?.fro_norm();
        if dg > k.beta_lip * dv * (1.0 + 1e-12) {
            fails[1] += 1;
        }
        if g1.iter().map(|x| x * x).sum::<f64>().sqrt() > k.g * (1.0 + 1e-12) {
            fails[2] += 1;
        }
        if dv > k.r * (1.0 + 1e-12) {
            fails[3] += 1;
        }
    }
    let zero = (0..layout.num_cells())
        .all(|c| budget.constraint(c, &ComplexMatrix::zeros(1, 1)) <= -k.eps);
    if !zero {
        fails[4] += 1;
    }
    let total: usize = fails.iter().sum();
    let b_agrees = b == b_run;
    Ok((
        total == 0 && b_agrees,
        format!(
            "counterexamples gradient/lipschitz/g-bound/diameter/slater = {fails:?}, B = {b:.4}{}",
            if b_agrees { "" } else { " (differs from run)" }
        ),
    ))
}

fn zf_exactness(_: &mut Runs) -> Check {
    let mut worst_res = 0.0f64;
    let mut worst_pow = 0.0f64;
    let mut count = 0usize;
    for seed in SEEDS {
        let cfg = config(seed);
        let scenario = Scenario::build(&cfg, false)?;
        let layout = scenario.layout.clone();
        let mut source = scenario.channel.open()?;
        for _ in 0..cfg.horizon {
            let ch = source.next_channel()?;
            let d = build_demand(&ch, &scenario.virtual_budgets)?;
            for c in 0..layout.num_cells() {
                for m in 0..layout.num_sps() {
                    let zf = &d.precoders[c][m];
                    worst_res = worst_res.max(zf_residual(&ch.block(c, c, m), zf)?);
                    let p = scenario.virtual_budgets.get(c, m);
                    worst_pow = worst_pow.max((zf.w.fro_norm_sq() - p).abs());
                    count += 1;
                }
            }
        }
    }
    Ok((
        worst_res <= 1e-9 && worst_pow <= 1e-9,
        format!("{count} precoders, max residual {worst_res:.2e}, max power error {worst_pow:.2e}"),
    ))
}

fn delay_ordering(runs: &mut Runs) -> Check {
    let mut ok = true;
    let mut notes = Vec::new();
    for tau in [1usize, 4, 8] {
        let cfgs: Vec<_> = SEEDS
            .iter()
            .map(|&s| ScenarioConfig { tau, ..config(s) })
            .collect();
        let wins = runs
            .fetch(&cfgs)?
            .iter()
            .filter(|o| summary(o, Algorithm::Proposed).f_bar < summary(o, Algorithm::Saddle).f_bar)
            .count();
        ok &= wins * 2 > SEEDS.len();
        notes.push(format!("tau={tau}: {wins}/3"));
    }
    Ok((
        ok,
        format!("proposed f_bar below saddle on {}", notes.join(", ")),
    ))
}

fn mean_r_bar(outs: &[&RunOutput], algo: Algorithm) -> f64 {
    outs.iter().map(|o| summary(o, algo).r_bar).sum::<f64>() / outs.len() as f64
}

fn rate_trends(runs: &mut Runs) -> Check {
    let mut by_nc = Vec::new();
    let mut fdzf_32 = 0.0;
    for n_c in [8usize, 16, 32, 64] {
        let cfgs: Vec<_> = SEEDS
            .iter()
            .map(|&s| ScenarioConfig {
                antennas_per_cell: n_c,
                ..config(s)
            })
            .collect();
        let outs = runs.fetch(&cfgs)?;
        by_nc.push(mean_r_bar(&outs, Algorithm::Proposed));
        if n_c == 32 {
            fdzf_32 = mean_r_bar(&outs, Algorithm::Fdzf);
        }
    }
    let mut by_pbar = Vec::new();
    for p_bar in [24.0, 27.0, 30.0, 33.0f64] {
        let cfgs: Vec<_> = SEEDS
            .iter()
            .map(|&s| ScenarioConfig {
                p_bar_dbm: PerCell::Uniform(p_bar.min(33.0)),
                ..config(s)
            })
            .collect();
        by_pbar.push(mean_r_bar(&runs.fetch(&cfgs)?, Algorithm::Proposed));
    }
    let nc_ok = by_nc.windows(2).all(|w| w[1] >= w[0]);
    let fd_ok = by_nc[2] > fdzf_32;
    let pbar_ok = by_pbar.windows(2).all(|w| w[1] >= w[0]);
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.3}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    Ok((
        nc_ok && fd_ok && pbar_ok,
        format!(
            "R_bar over N_c [{}] {}; N_c=32 proposed {:.3} vs fdzf {:.3} {}; over p_bar [{}] {}",
            fmt(&by_nc),
            if nc_ok { "ok" } else { "not monotone" },
            by_nc[2],
            fdzf_32,
            if fd_ok { "ok" } else { "not above" },
            fmt(&by_pbar),
            if pbar_ok { "ok" } else { "not monotone" },
        ),
    ))
}

fn offline_optimality(runs: &mut Runs) -> Check {
    let cfgs: Vec<_> = QUEUE_SEEDS.map(config).collect();
    let mut worst_margin = f64::INFINITY;
    let mut worst_slack = 0.0f64;
    let mut r = rng(99);
    for out in runs.fetch(&cfgs)? {
        let sol = &out.offline;
        let cfg = &out.summary.config;
        let p_bar = cfg.p_bar_dbm.resolve(cfg.num_cells, "p_bar_dbm")?;
        let p_max = cfg.p_max_dbm.resolve(cfg.num_cells, "p_max_dbm")?;
        for c in 0..cfg.num_cells {
            let radius_sq = 10f64.powf((p_bar[c].min(p_max[c]) - 30.0) / 10.0);
            let star = &sol.cells[c];
            let best = sol.objective(c, star)?;
            let (n, k) = star.shape();
            for i in 0..200 {
                let probe = if i % 2 == 0 {
                    in_ball(&mut r, n, k, radius_sq)
                } else {
                    // Local perturbation of the optimum, pulled back inside.
                    let mut p = star.add(&gaussian(&mut r, n, k, 1e-3))?;
                    let n2 = p.fro_norm_sq();
                    if n2 > radius_sq {
                        p.scale_mut((radius_sq / n2).sqrt());
                    }
                    p
                };
                let margin = sol.objective(c, &probe)? - best;
                worst_margin = worst_margin.min(margin);
            }
            let slack = sol.multipliers[c] * (star.fro_norm_sq() - radius_sq);
            worst_slack = worst_slack.max(slack.abs());
        }
    }
    Ok((
        worst_margin >= -1e-8 && worst_slack <= 1e-8,
        format!("min margin {worst_margin:.3e}, max |slackness| {worst_slack:.3e} over 10 runs"),
    ))
}

fn determinism(_: &mut Runs) -> Check {
    let dir = tempfile::tempdir()?;
    let cfg = config(1);
    for (name, parallel) in [("serial_a", false), ("serial_b", false), ("parallel", true)] {
        let out = wnv_core::harness::run_experiment(
            &cfg,
            &RunOptions {
                parallel,
                trace_out: None,
            },
        )?;
        write_outputs(&out, &dir.path().join(name))?;
    }
    let mut same = true;
    for file in [TIMESERIES_FILE, SUMMARY_FILE] {
        let a = fs::read(dir.path().join("serial_a").join(file))?;
        same &= a == fs::read(dir.path().join("serial_b").join(file))?;
        same &= a == fs::read(dir.path().join("parallel").join(file))?;
    }
    Ok((
        same,
        "timeseries.csv and summary.json compared across three runs".into(),
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("kkt_oracle_equivalence", kkt_oracle),
        (
            "distributed_equals_centralized",
            distributed_equals_centralized,
        ),
        ("queue_invariants", queue_invariants),
        ("violation_bounded", violation_bound),
        ("regret_sublinear", regret_sublinear),
        ("lemma_constants", lemma_suite),
        ("zf_exactness", zf_exactness),
        ("delay_ordering", delay_ordering),
        ("rate_trends", rate_trends),
        ("offline_optimality", offline_optimality),
        ("determinism", determinism),
    ];
    let mut runs = Runs::default();
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let (pass, detail) = match check(&mut runs) {
            Ok(result) => result,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} {name} ({:.1}s): {detail}",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {}/{} passed",
        criteria.len() - failed,
        criteria.len()
    );
    let strict = std::env::var("WNV_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
