//! The per-slot simulation loop.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ScenarioConfig};
use super::delay::DelayBuffer;
use super::schemes::{FdZfScheme, ProposedScheme, SaddleScheme, Scheme, SchemeDiagnostics};
use crate::baselines::{OfflineAccumulator, OfflineSolution};
use crate::channel::{
    build_topology, large_scale_gain, Layout, PathLossModel, Topology, TopologyParams,
};
use crate::error::{Error, Result};
use crate::metrics::{
    bound_constants, budget_constants, cell_losses, loss, noise_power_dbm, noise_power_watts,
    BoundConstants, RunRecord, RunningMetrics, SlotMetrics,
};
use crate::online_precoder::{AlgoParams, PowerBudget};
use crate::trace::{ChannelSpec, TraceHeader, TraceReader, TraceWriter};
use crate::virtualization::{build_demand_with, VirtualBudgets};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Use the rayon pool for per-row and per-cell work. Outputs do not
    /// depend on this flag.
    pub parallel: bool,
    /// Write the generated channel trajectory here.
    pub trace_out: Option<PathBuf>,
}

/// Everything derived from a config before the first slot.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub topology: Topology,
    pub layout: Arc<Layout>,
    /// Factor applied to the large-scale power gains and the noise power.
    pub gain_scale: f64,
    /// Noise power in the rescaled units.
    pub noise: f64,
    pub budget: PowerBudget,
    pub virtual_budgets: VirtualBudgets,
    pub channel: ChannelSpec,
}

impl Scenario {
    pub fn build(config: &ScenarioConfig, parallel: bool) -> Result<Self> {
        config.validate()?;
        let topology = build_topology(
            &TopologyParams {
                num_cells: config.num_cells,
                cell_radius: config.cell_radius_m,
                antennas_per_cell: config.antennas_per_cell,
                num_sps: config.num_sps,
                users_per_sp: config.users_per_sp,
                min_distance: config.min_distance_m,
            },
            config.seed,
        )?;
        let layout = topology.layout.clone();
        let model = PathLossModel {
            carrier_ghz: config.carrier_ghz,
            shadowing_sigma_db: config.shadowing.then_some(config.shadowing_sigma_db),
        };
        let physical = large_scale_gain(&topology, &model, config.seed)?;
        let cells = config.num_cells;
        let budget = PowerBudget::from_dbm(
            &config.p_bar_dbm.resolve(cells, "p_bar_dbm")?,
            &config.p_max_dbm.resolve(cells, "p_max_dbm")?,
        )?;
        let virtual_budgets = match &config.sp_power_w {
            Some(v) => VirtualBudgets(v.clone()),
            None => VirtualBudgets::equal_split(budget.p_max_all(), config.num_sps),
        };

        let (gain_scale, channel) = match &config.channel_trace {
            Some(path) => {
                let header = TraceReader::open(path)?.header();
                (
                    header.gain_scale,
                    ChannelSpec::Replay {
                        path: path.clone(),
                        layout: layout.clone(),
                    },
                )
            }
            None => {
                let scale = physical.energy_normaliser(&layout, config.channel_norm_energy);
                (
                    scale,
                    ChannelSpec::Generated {
                        layout: layout.clone(),
                        large_scale: physical.scaled(scale),
                        alpha_h: config.alpha_h,
                        seed: config.seed,
                        parallel,
                    },
                )
            }
        };
        let noise = noise_power_watts(
            config.n0_dbm_per_hz,
            config.bandwidth_hz,
            config.noise_figure_db,
        ) * gain_scale;
        Ok(Self {
            config: config.clone(),
            topology,
            layout,
            gain_scale,
            noise,
            budget,
            virtual_budgets,
            channel,
        })
    }

    /// Step weights used by the proposed scheme.
    pub fn algo_params(&self) -> Result<AlgoParams> {
        let (beta_lip, ..) = budget_constants(&self.budget);
        AlgoParams::standard_schedule(self.config.horizon, self.config.tau, beta_lip)
    }

    fn make_scheme(&self, algorithm: Algorithm, parallel: bool) -> Result<Box<dyn Scheme>> {
        let layout = self.layout.clone();
        let budget = self.budget.clone();
        Ok(match algorithm {
            Algorithm::Proposed => Box::new(ProposedScheme::new(
                self.algo_params()?,
                budget,
                layout,
                parallel,
            )),
            Algorithm::Saddle => Box::new(SaddleScheme::new(
                self.config.horizon,
                self.config.tau,
                budget,
                layout,
            )),
            Algorithm::Fdzf => Box::new(FdZfScheme::new(budget, layout)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub f_bar: f64,
    pub r_bar: f64,
    pub p_bar_run: f64,
    /// Time-averaged `‖Ṽ_t^c‖_F²` per cell.
    pub avg_power: Vec<f64>,
    pub regret: f64,
    pub violation: Vec<f64>,
    pub final_queues: Vec<f64>,
    pub diagnostics: SchemeDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineSummary {
    /// `Σ_t f_t(V*)`.
    pub objective: f64,
    pub multipliers: Vec<f64>,
    /// `‖V*^c‖_F²` per cell.
    pub power: Vec<f64>,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub config: ScenarioConfig,
    pub gain_scale: f64,
    pub noise_power_dbm: f64,
    /// Noise power in the rescaled channel units.
    pub noise_power_model: f64,
    pub params: AlgoParams,
    pub constants: BoundConstants,
    pub offline: OfflineSummary,
    pub algorithms: Vec<AlgorithmSummary>,
    pub causality_violations: usize,
}

#[derive(Debug, Clone)]
pub struct AlgorithmRun {
    pub algorithm: Algorithm,
    pub records: Vec<RunRecord>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub runs: Vec<AlgorithmRun>,
    pub offline: OfflineSolution,
    /// `‖H_t‖_F` per slot.
    pub channel_norms: Vec<f64>,
}

impl RunOutput {
    pub fn run(&self, algorithm: Algorithm) -> Option<&AlgorithmRun> {
        self.runs.iter().find(|r| r.algorithm == algorithm)
    }

    pub fn algorithm_summary(&self, algorithm: Algorithm) -> Option<&AlgorithmSummary> {
        self.summary
            .algorithms
            .iter()
            .find(|s| s.algorithm == algorithm)
    }
}

/// Per-slot values kept between the two passes.
struct Pending {
    f_t: f64,
    demand_norm_sq: f64,
    powers: Vec<f64>,
    queues: Vec<f64>,
    g: Vec<f64>,
    mean_rate: f64,
}

/// Runs every algorithm in `config.algorithms` over one shared channel
/// trajectory.
pub fn run_experiment(config: &ScenarioConfig, options: &RunOptions) -> Result<RunOutput> {
    let scenario = Scenario::build(config, options.parallel)?;
    let schemes = config
        .algorithms
        .iter()
        .map(|&a| scenario.make_scheme(a, options.parallel))
        .collect::<Result<Vec<_>>>()?;
    run_schemes(&scenario, schemes, options)
}

/// Runs caller-supplied schemes. The first pass drives the schemes slot by
/// slot; the second regenerates the channel to score the offline
/// comparator.
pub fn run_schemes(
    scenario: &Scenario,
    mut schemes: Vec<Box<dyn Scheme>>,
    options: &RunOptions,
) -> Result<RunOutput> {
    let cfg = &scenario.config;
    let horizon = cfg.horizon;
    let layout = &scenario.layout;
    let cells = layout.num_cells();

    let mut source = scenario.channel.open()?;
    let mut trace = match &options.trace_out {
        Some(path) => Some(TraceWriter::create(
            path,
            TraceHeader {
                rows: layout.total_users(),
                cols: layout.total_antennas(),
                seed: cfg.seed,
                alpha_h: cfg.alpha_h,
                gain_scale: scenario.gain_scale,
            },
        )?),
        None => None,
    };

    let mut buffer = DelayBuffer::new(cfg.tau);
    let mut offline = OfflineAccumulator::new(layout);
    let mut pending: Vec<Vec<Pending>> = schemes
        .iter()
        .map(|_| Vec::with_capacity(horizon))
        .collect();
    let mut channel_norms = Vec::with_capacity(horizon);

    for t in 1..=horizon {
        let mut slot = || -> Result<()> {
            let channel = source.next_channel()?;
            if channel.t != t {
                return Err(Error::Invariant(format!(
                    "channel source produced slot {}",
                    channel.t
                )));
            }
            if let Some(w) = trace.as_mut() {
                w.write_slot(&channel)?;
            }
            let demand = build_demand_with(&channel, &scenario.virtual_budgets, options.parallel)?;
            channel_norms.push(channel.fro_norm());
            offline.push(&channel, &demand)?;
            let demand_norm_sq = demand.fro_norm_sq();
            let d_global = demand.global();
            let local_views: Vec<_> = (0..cells).map(|c| channel.local_view(c)).collect();
            let channel = Arc::new(channel);
            let demand = Arc::new(demand);
            buffer.push(channel.clone(), demand.clone())?;

            for (scheme, out) in schemes.iter_mut().zip(pending.iter_mut()) {
                let set = scheme.act(&buffer)?;
                let v = set.global();
                let f_t = loss(&channel.h, &v, &d_global)?;
                let per_cell: f64 = cell_losses(&local_views, &set.cells, &demand.embedded)?
                    .iter()
                    .sum();
                if (f_t - per_cell).abs() > 1e-9 * f_t.max(1.0) {
                    return Err(Error::Invariant(format!(
                        "global loss {f_t:.12e} differs from per-cell sum {per_cell:.12e}"
                    )));
                }
                let rates = scheme.rates(&channel, &v, scenario.noise)?;
                let mean_rate = rates.iter().sum::<f64>() / rates.len() as f64;
                out.push(Pending {
                    f_t,
                    demand_norm_sq,
                    powers: set.powers(),
                    queues: set.queues.clone(),
                    g: set.constraints(&scenario.budget),
                    mean_rate,
                });
            }
            Ok(())
        };
        slot().map_err(|e| e.at_slot(t))?;
    }
    if let Some(w) = trace {
        w.finish()?;
    }

    let solution = offline.solve(&scenario.budget)?;

    // Second pass: f_t(V*) on the same trajectory.
    let mut source = scenario.channel.open()?;
    let mut f_star = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let mut step = || -> Result<f64> {
            let channel = source.next_channel()?;
            let demand = build_demand_with(&channel, &scenario.virtual_budgets, options.parallel)?;
            solution.slot_loss(&channel, &demand)
        };
        f_star.push(step().map_err(|e| e.at_slot(t))?);
    }

    let b_measured = channel_norms.iter().copied().fold(0.0, f64::max);
    let params = scenario.algo_params()?;
    let constants = bound_constants(&scenario.budget, b_measured, &params);

    let mut runs = Vec::with_capacity(schemes.len());
    let mut summaries = Vec::with_capacity(schemes.len());
    for (scheme, slots) in schemes.iter().zip(pending) {
        let algorithm = scheme.algorithm();
        let diagnostics = scheme.diagnostics();
        if diagnostics.max_grad_norm > constants.d * (1.0 + 1e-9) {
            return Err(Error::Invariant(format!(
                "{algorithm}: gradient norm {:.6e} exceeds the bound {:.6e}",
                diagnostics.max_grad_norm, constants.d
            )));
        }
        let mut acc = RunningMetrics::new(algorithm.as_str(), cells);
        let mut records = Vec::with_capacity(horizon);
        for (i, (p, fs)) in slots.iter().zip(&f_star).enumerate() {
            records.push(acc.push(SlotMetrics {
                t: i + 1,
                f_t: p.f_t,
                f_star: *fs,
                demand_norm_sq: p.demand_norm_sq,
                powers: &p.powers,
                queues: &p.queues,
                g: &p.g,
                mean_rate: p.mean_rate,
            })?);
        }
        let last = records
            .last()
            .ok_or_else(|| Error::Invariant("empty run".into()))?;
        summaries.push(AlgorithmSummary {
            algorithm,
            f_bar: last.f_bar,
            r_bar: last.r_bar,
            p_bar_run: last.p_bar_run,
            avg_power: acc.average_powers(),
            regret: last.re,
            violation: last.vo.clone(),
            final_queues: last.q.clone(),
            diagnostics,
        });
        runs.push(AlgorithmRun { algorithm, records });
    }

    let summary = RunSummary {
        seed: cfg.seed,
        config: cfg.clone(),
        gain_scale: scenario.gain_scale,
        noise_power_dbm: noise_power_dbm(cfg.n0_dbm_per_hz, cfg.bandwidth_hz, cfg.noise_figure_db),
        noise_power_model: scenario.noise,
        params,
        constants,
        offline: OfflineSummary {
            objective: f_star.iter().sum(),
            multipliers: solution.multipliers.clone(),
            power: solution.cells.iter().map(|v| v.fro_norm_sq()).collect(),
        },
        algorithms: summaries,
        causality_violations: buffer.causality_violations(),
    };
    Ok(RunOutput {
        summary,
        runs,
        offline: solution,
        channel_norms,
    })
}
