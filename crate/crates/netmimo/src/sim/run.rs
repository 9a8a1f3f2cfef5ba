//! Monte Carlo driver: drops, slots, scheduling and per-scheme precoding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bd::{bd_user_rates, conventional_bd, effective_channels, scale_to_fit};
use crate::channel::{
    draw_shadowing, drop_users, generate_channels_with_shadowing, whiten_interference, ChannelSet,
    FadingParams, ShadowMap, UserDrop,
};
use crate::dual::{solve, TraceRecord};
use crate::error::{Error, Result};
use crate::layout::{build_layout, CellLayout};
use crate::linalg::CMat;
use crate::scheduler::{greedy_select, ScheduleState};

use super::config::{ConstraintKind, ExperimentConfig, GreedyEvaluator, Scheme, SchedulerKind};

pub const SEED_USERS: u64 = 1;
pub const SEED_SHADOW: u64 = 2;
pub const SEED_FADING: u64 = 3;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable stream seed for one (drop, purpose, slot) triple. Every random
/// draw in a run flows from the master seed through here, so results do not
/// depend on worker count or drop execution order.
pub fn derive_seed(master: u64, drop: u64, purpose: u64, slot: u64) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ drop);
    h = splitmix64(h ^ purpose);
    splitmix64(h ^ slot)
}

/// One scheme's outcome on one drop. Rates in bits/s/Hz.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeDropResult {
    pub scheme: Scheme,
    /// Cluster sum rate divided by the number of cells; PF drops report the
    /// mean over slots.
    pub normalized_rate_bits: f64,
    /// Per-user rate, indexed like the drop's user list; PF drops report the
    /// mean over slots (zero while unscheduled).
    pub user_rates_bits: Vec<f64>,
    pub converged: bool,
    /// Dual solver iterations, accumulated over slots.
    pub solver_iterations: usize,
    /// Per-iteration solver trace; recorded for traced MSR drops only.
    pub trace: Vec<TraceRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DropResult {
    pub drop_index: usize,
    /// One entry per configured scheme, in configuration order.
    pub schemes: Vec<SchemeDropResult>,
}

/// Across-drop statistics of the normalized rate; drops whose solve did not
/// converge are excluded and counted.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub drops_used: usize,
    pub nonconverged_drops: usize,
    pub mean_rate_bits: f64,
    /// Sample standard deviation (n - 1 normalization).
    pub std_rate_bits: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub drops: Vec<DropResult>,
    pub summaries: Vec<SchemeSummary>,
}

/// Draws one slot's whitened channels for a drop with fixed shadowing.
fn slot_channels(
    config: &ExperimentConfig,
    layout: &CellLayout,
    users: &UserDrop,
    shadows: &ShadowMap,
    params: &FadingParams,
    drop_index: usize,
    slot: usize,
) -> Result<ChannelSet> {
    let seed = derive_seed(
        config.master_seed,
        drop_index as u64,
        SEED_FADING,
        slot as u64,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw =
        generate_channels_with_shadowing(layout, users, params, shadows, config.n_t, config.n_r, &mut rng)?;
    whiten_interference(&raw, &config.per_antenna_budget())
}

fn rate_evaluator<'a>(
    config: &'a ExperimentConfig,
    channels: &'a ChannelSet,
) -> impl Fn(&[usize]) -> Option<Vec<f64>> + 'a {
    let budget = config.total_budget();
    move |subset: &[usize]| {
        let refs: Vec<&CMat> = subset.iter().map(|&u| channels.effective(u)).collect();
        match config.greedy_evaluator {
            GreedyEvaluator::Conventional => bd_user_rates(&refs, budget).ok(),
            GreedyEvaluator::Optimal => {
                let decomp = effective_channels(&refs).ok()?;
                let constraint = config.constraint_of_kind(config.constraint);
                let report = solve(&decomp, &constraint, &config.solver_options()).ok()?;
                Some(report.precoders.per_user_rates_bits.clone())
            }
        }
    }
}

/// Precodes one scheduled set under one scheme. Returns the subset-ordered
/// user rates, convergence flag, solver iteration count and optional trace.
fn precode_set(
    config: &ExperimentConfig,
    refs: &[&CMat],
    scheme: Scheme,
    record_trace: bool,
) -> Result<(Vec<f64>, bool, usize, Vec<TraceRecord>)> {
    let decomp = effective_channels(refs)?;
    match config.scheme_constraint(scheme) {
        None => {
            let set = conventional_bd(&decomp, config.total_budget())?;
            let set = match config.constraint {
                ConstraintKind::Sum => set,
                kind => scale_to_fit(refs, &set, &config.constraint_of_kind(kind)),
            };
            Ok((set.per_user_rates_bits, true, 0, Vec::new()))
        }
        Some(constraint) => {
            let mut options = config.solver_options();
            options.record_trace = record_trace;
            let report = solve(&decomp, &constraint, &options)?;
            let converged = report.meets(&options);
            Ok((
                report.precoders.per_user_rates_bits.clone(),
                converged,
                report.iterations,
                report.trace,
            ))
        }
    }
}

fn run_msr_drop(
    config: &ExperimentConfig,
    layout: &CellLayout,
    users: &UserDrop,
    shadows: &ShadowMap,
    params: &FadingParams,
    drop_index: usize,
) -> Result<DropResult> {
    let channels = slot_channels(config, layout, users, shadows, params, drop_index, 0)?;
    let num_users = channels.num_users();
    let pool: Vec<usize> = (0..num_users).collect();
    let weights = vec![1.0; num_users];
    let selected = greedy_select(
        &pool,
        config.k_max(),
        &weights,
        rate_evaluator(config, &channels),
    );
    let traced = drop_index < config.trace_drops;
    let mut schemes = Vec::with_capacity(config.schemes.len());
    for &scheme in &config.schemes {
        let mut result = SchemeDropResult {
            scheme,
            normalized_rate_bits: 0.0,
            user_rates_bits: vec![0.0; num_users],
            converged: true,
            solver_iterations: 0,
            trace: Vec::new(),
        };
        if !selected.is_empty() {
            let refs: Vec<&CMat> = selected.iter().map(|&u| channels.effective(u)).collect();
            match precode_set(config, &refs, scheme, traced) {
                Ok((rates, converged, iterations, trace)) => {
                    for (&u, &r) in selected.iter().zip(&rates) {
                        result.user_rates_bits[u] = r;
                    }
                    result.normalized_rate_bits =
                        rates.iter().sum::<f64>() / config.cluster_size as f64;
                    result.converged = converged;
                    result.solver_iterations = iterations;
                    result.trace = trace;
                }
                Err(err) => {
                    eprintln!(
                        "warning: drop {drop_index} {} precoding failed: {err}",
                        scheme.label()
                    );
                    result.converged = false;
                }
            }
        }
        schemes.push(result);
    }
    Ok(DropResult {
        drop_index,
        schemes,
    })
}

fn run_pf_drop(
    config: &ExperimentConfig,
    layout: &CellLayout,
    users: &UserDrop,
    shadows: &ShadowMap,
    params: &FadingParams,
    drop_index: usize,
) -> Result<DropResult> {
    let num_users = users.num_users();
    let num_schemes = config.schemes.len();
    let pool: Vec<usize> = (0..num_users).collect();
    let mut states: Vec<ScheduleState> = (0..num_schemes)
        .map(|_| ScheduleState::new(num_users, config.pf_window_slots))
        .collect();
    let mut rate_accum = vec![vec![0.0; num_users]; num_schemes];
    let mut sum_accum = vec![0.0; num_schemes];
    let mut iter_accum = vec![0usize; num_schemes];
    let mut all_converged = vec![true; num_schemes];
    for slot in 0..config.slots_per_drop {
        let channels = slot_channels(config, layout, users, shadows, params, drop_index, slot)?;
        for (s, &scheme) in config.schemes.iter().enumerate() {
            let selected = greedy_select(
                &pool,
                config.k_max(),
                &states[s].weights,
                rate_evaluator(config, &channels),
            );
            let mut slot_rates = vec![0.0; num_users];
            if !selected.is_empty() {
                let refs: Vec<&CMat> = selected.iter().map(|&u| channels.effective(u)).collect();
                match precode_set(config, &refs, scheme, false) {
                    Ok((rates, converged, iterations, _)) => {
                        for (&u, &r) in selected.iter().zip(&rates) {
                            slot_rates[u] = r;
                        }
                        iter_accum[s] += iterations;
                        if !converged {
                            all_converged[s] = false;
                        }
                    }
                    Err(err) => {
                        eprintln!(
                            "warning: drop {drop_index} slot {slot} {} precoding failed: {err}",
                            scheme.label()
                        );
                        all_converged[s] = false;
                    }
                }
            }
            sum_accum[s] += slot_rates.iter().sum::<f64>();
            for (acc, &r) in rate_accum[s].iter_mut().zip(&slot_rates) {
                *acc += r;
            }
            states[s].pf_update(&slot_rates);
        }
    }
    let slots = config.slots_per_drop as f64;
    let schemes = config
        .schemes
        .iter()
        .enumerate()
        .map(|(s, &scheme)| SchemeDropResult {
            scheme,
            normalized_rate_bits: sum_accum[s] / slots / config.cluster_size as f64,
            user_rates_bits: rate_accum[s].iter().map(|&r| r / slots).collect(),
            converged: all_converged[s],
            solver_iterations: iter_accum[s],
            trace: Vec::new(),
        })
        .collect();
    Ok(DropResult {
        drop_index,
        schemes,
    })
}

fn run_one_drop(
    config: &ExperimentConfig,
    layout: &CellLayout,
    drop_index: usize,
) -> Result<DropResult> {
    let params = config.fading();
    let users = drop_users(
        layout,
        config.users_per_cell,
        derive_seed(config.master_seed, drop_index as u64, SEED_USERS, 0),
    )?;
    let mut shadow_rng = ChaCha8Rng::seed_from_u64(derive_seed(
        config.master_seed,
        drop_index as u64,
        SEED_SHADOW,
        0,
    ));
    let shadows = draw_shadowing(layout, users.num_users(), &params, &mut shadow_rng);
    match config.scheduler {
        SchedulerKind::Msr => run_msr_drop(config, layout, &users, &shadows, &params, drop_index),
        SchedulerKind::Pf => run_pf_drop(config, layout, &users, &shadows, &params, drop_index),
    }
}

fn summarize(config: &ExperimentConfig, drops: &[DropResult]) -> Vec<SchemeSummary> {
    config
        .schemes
        .iter()
        .enumerate()
        .map(|(s, &scheme)| {
            let values: Vec<f64> = drops
                .iter()
                .map(|d| &d.schemes[s])
                .filter(|r| r.converged)
                .map(|r| r.normalized_rate_bits)
                .collect();
            let n = values.len();
            let mean = if n > 0 {
                values.iter().sum::<f64>() / n as f64
            } else {
                0.0
            };
            let var = if n > 1 {
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)
            } else {
                0.0
            };
            SchemeSummary {
                scheme,
                drops_used: n,
                nonconverged_drops: drops.len() - n,
                mean_rate_bits: mean,
                std_rate_bits: var.sqrt(),
            }
        })
        .collect()
}

/// Runs a full experiment. Drops execute in parallel on `workers` threads
/// (0 picks the machine default, 1 runs serially); results are identical
/// either way.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let layout = build_layout(config.cluster_size, config.cell_radius_km)?;
    let drops: Vec<DropResult> = if config.workers == 1 {
        (0..config.drops)
            .map(|d| run_one_drop(config, &layout, d))
            .collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool construction failed: {e}")))?;
        pool.install(|| {
            (0..config.drops)
                .into_par_iter()
                .map(|d| run_one_drop(config, &layout, d))
                .collect::<Result<_>>()
        })?
    };
    let summaries = summarize(config, &drops);
    for s in &summaries {
        let fraction = s.nonconverged_drops as f64 / config.drops as f64;
        if fraction > 0.01 {
            eprintln!(
                "warning: {} excluded {:.1}% of drops for nonconvergence",
                s.scheme.label(),
                100.0 * fraction
            );
        }
    }
    Ok(ExperimentResult {
        config: config.clone(),
        drops,
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            cluster_size: 1,
            n_t: 2,
            n_r: 1,
            users_per_cell: 3,
            drops: 3,
            workers: 1,
            schemes: vec![Scheme::Conventional, Scheme::OptimalSum],
            constraint: ConstraintKind::Sum,
            master_seed: 42,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn derived_seeds_separate_streams() {
        let base = derive_seed(1, 0, SEED_USERS, 0);
        assert_eq!(base, derive_seed(1, 0, SEED_USERS, 0));
        assert_ne!(base, derive_seed(1, 0, SEED_SHADOW, 0));
        assert_ne!(base, derive_seed(1, 1, SEED_USERS, 0));
        assert_ne!(base, derive_seed(2, 0, SEED_USERS, 0));
        assert_ne!(
            derive_seed(1, 0, SEED_FADING, 0),
            derive_seed(1, 0, SEED_FADING, 1)
        );
    }

    #[test]
    fn msr_experiment_has_consistent_shapes() {
        let config = tiny_config();
        let result = run_experiment(&config).unwrap();
        assert_eq!(result.drops.len(), 3);
        assert_eq!(result.summaries.len(), 2);
        for drop in &result.drops {
            assert_eq!(drop.schemes.len(), 2);
            for scheme in &drop.schemes {
                assert_eq!(scheme.user_rates_bits.len(), 3);
                let total: f64 = scheme.user_rates_bits.iter().sum();
                assert!((total - scheme.normalized_rate_bits).abs() < 1e-9);
            }
        }
        for summary in &result.summaries {
            assert!(summary.mean_rate_bits > 0.0);
            assert_eq!(summary.drops_used + summary.nonconverged_drops, 3);
        }
    }

    #[test]
    fn optimal_sum_dominates_conventional_per_drop() {
        let result = run_experiment(&tiny_config()).unwrap();
        for drop in &result.drops {
            let conventional = &drop.schemes[0];
            let optimal = &drop.schemes[1];
            if optimal.converged {
                // Water-filling is exact while the solve stops at a relative
                // gap of 1e-5, so allow that much shortfall.
                let margin = 1e-4 * (1.0 + conventional.normalized_rate_bits);
                assert!(
                    optimal.normalized_rate_bits >= conventional.normalized_rate_bits - margin,
                    "drop {}: {} < {}",
                    drop.drop_index,
                    optimal.normalized_rate_bits,
                    conventional.normalized_rate_bits
                );
            }
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut config = tiny_config();
        let serial = run_experiment(&config).unwrap();
        config.workers = 2;
        let parallel = run_experiment(&config).unwrap();
        assert_eq!(serial.drops, parallel.drops);
        assert_eq!(serial.summaries, parallel.summaries);
    }

    #[test]
    fn trace_covers_only_requested_drops() {
        let mut config = tiny_config();
        config.trace_drops = 1;
        let result = run_experiment(&config).unwrap();
        let optimal_first = &result.drops[0].schemes[1];
        assert!(!optimal_first.trace.is_empty());
        assert_eq!(
            optimal_first.trace.len(),
            optimal_first.solver_iterations + 1
        );
        assert!(result.drops[1].schemes[1].trace.is_empty());
        assert!(result.drops[0].schemes[0].trace.is_empty());
    }

    #[test]
    fn pf_run_averages_over_slots() {
        let config = ExperimentConfig {
            cluster_size: 1,
            n_t: 2,
            n_r: 1,
            users_per_cell: 4,
            drops: 1,
            workers: 1,
            schemes: vec![Scheme::OptimalPerAntenna],
            constraint: ConstraintKind::PerAntenna,
            scheduler: SchedulerKind::Pf,
            slots_per_drop: 6,
            pf_window_slots: 3.0,
            master_seed: 9,
            ..ExperimentConfig::default()
        };
        let result = run_experiment(&config).unwrap();
        let scheme = &result.drops[0].schemes[0];
        assert_eq!(scheme.user_rates_bits.len(), 4);
        let total: f64 = scheme.user_rates_bits.iter().sum();
        assert!((total - scheme.normalized_rate_bits).abs() < 1e-9);
        // Six slots with at most two streams spread rate over the pool.
        let served = scheme.user_rates_bits.iter().filter(|&&r| r > 0.0).count();
        assert!(served >= 2, "PF served only {served} of 4 users");
    }
}
