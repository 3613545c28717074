//! Monte Carlo simulation of the slotted service system.
//!
//! Each slot independently brings one request of size psi with probability
//! `p`. The policy decides how much of the arriving request to defer given
//! the leftover already pending; the slot then serves `pending + psi - u`
//! units at quadratic cost, and a deferring request pays the flat waiting
//! charge. A slot with no arrival serves the leftover alone and the pending
//! level resets to zero.
//!
//! Besides the long-run average slot cost, the simulator attributes costs
//! back to individual requests (each unit served pays the slot's total
//! load, so the split is exact), tracks renewal spacings (arrivals that
//! find an empty system), histograms the pending level seen by arrivals,
//! and watches for the pending level settling under consecutive arrivals.

use crate::model::{ModelError, ModelParams, THRESHOLD_TOL};
use crate::nash::equilibrium_policy;
use crate::optimal::optimal_policy;
use crate::policy::DeferralPolicy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::HashMap;
use std::fmt;

/// Smallest accepted horizon; below this the long-run averages are noise.
pub const MIN_HORIZON: u64 = 10_000;
/// Slots discarded before any statistic is collected.
pub const DEFAULT_WARMUP: u64 = 1_000;

/// Errors from simulation runs and the analytic pending distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    BadHorizon { horizon: u64, min: u64 },
    BadWarmup { warmup: u64, horizon: u64 },
    /// Truncation depth for the pending distribution must be at least 1.
    BadTruncation { k_max: usize },
    /// The policy produced a deferral outside `[0, psi]` (or a non-finite
    /// one); the run is aborted rather than silently clamped.
    PolicyOutOfRange { slot: u64, x: f64, u: f64 },
    Model(ModelError),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::BadHorizon { horizon, min } => {
                write!(f, "horizon {horizon} below the minimum of {min} slots")
            }
            SimError::BadWarmup { warmup, horizon } => {
                write!(f, "warm-up {warmup} must be shorter than the horizon {horizon}")
            }
            SimError::BadTruncation { k_max } => {
                write!(f, "truncation depth {k_max} must be at least 1")
            }
            SimError::PolicyOutOfRange { slot, x, u } => {
                write!(f, "policy returned deferral {u} at pending {x} (slot {slot})")
            }
            SimError::Model(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for SimError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            SimError::Model(e) => Some(e),
            _ => None,
        }
    }
}

impl From<ModelError> for SimError {
    fn from(e: ModelError) -> Self {
        SimError::Model(e)
    }
}

/// When the flat waiting charge applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum WaitChargeRule {
    /// Any positive deferral pays `d` (the default).
    DeferralPositive,
    /// Only a strictly partial split pays `d`; deferring the entire request
    /// does not. Differs from the default only when a policy defers exactly
    /// psi.
    PartialDeferralOnly,
}

/// Tunable run settings; the defaults match the headline statistics.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SimConfig {
    pub warmup: u64,
    pub wait_charge: WaitChargeRule,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { warmup: DEFAULT_WARMUP, wait_charge: WaitChargeRule::DeferralPositive }
    }
}

/// Everything a single run measures.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SimulationReport {
    /// Average slot cost over the counted horizon.
    pub avg_cost: f64,
    /// Average realized two-slot cost per request, when any request both
    /// arrived after warm-up and completed within the horizon.
    pub agent_avg_cost: Option<f64>,
    /// Mean spacing between arrivals that find an empty system; `None` at
    /// the degenerate arrival rates 0 and 1, or when fewer than two such
    /// arrivals were seen.
    pub renewal_mean: Option<f64>,
    /// Standard error of that mean, when at least two spacings were seen.
    pub renewal_stderr: Option<f64>,
    /// Pending level seen by each post-warm-up arrival: distinct levels
    /// with their empirical frequencies, ascending. Frequencies sum to 1.
    pub pending_histogram: Vec<(f64, f64)>,
    /// First pending level (after slot 100) at which two consecutive
    /// arrivals saw the level move by less than 1e-3.
    pub fixed_point_hit: Option<f64>,
    pub horizon: u64,
    pub warmup: u64,
    pub slots_counted: u64,
    pub arrivals_counted: u64,
    pub seed: u64,
}

/// A request that deferred and is waiting for its second slot to be priced.
struct OpenRequest {
    deferred: f64,
    partial_cost: f64,
    counted: bool,
}

/// Runs the slotted system under `policy` with default settings.
pub fn simulate<P>(
    policy: &P,
    params: &ModelParams,
    horizon: u64,
    seed: u64,
) -> Result<SimulationReport, SimError>
where
    P: DeferralPolicy + ?Sized,
{
    simulate_with(policy, params, horizon, seed, SimConfig::default())
}

/// Runs the slotted system with explicit warm-up and wait-charge settings.
pub fn simulate_with<P>(
    policy: &P,
    params: &ModelParams,
    horizon: u64,
    seed: u64,
    config: SimConfig,
) -> Result<SimulationReport, SimError>
where
    P: DeferralPolicy + ?Sized,
{
    if horizon < MIN_HORIZON {
        return Err(SimError::BadHorizon { horizon, min: MIN_HORIZON });
    }
    if config.warmup >= horizon {
        return Err(SimError::BadWarmup { warmup: config.warmup, horizon });
    }
    let (p, psi, d) = (params.p, params.psi, params.d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut pending = 0.0_f64;
    let mut prev_arrival = false;
    let mut prev_seen = f64::NAN;
    let mut open: Option<OpenRequest> = None;

    let mut total_cost = 0.0;
    let mut slots_counted = 0u64;
    let mut arrivals_counted = 0u64;
    let mut agent_total = 0.0;
    let mut agents_completed = 0u64;
    let mut histogram: HashMap<u64, u64> = HashMap::new();
    let mut fixed_point_hit = None;
    let mut last_renewal: Option<u64> = None;
    let mut spacing_sum = 0.0;
    let mut spacing_sq_sum = 0.0;
    let mut spacings = 0u64;

    for slot in 0..horizon {
        let counted = slot >= config.warmup;
        let arrival = rng.gen_bool(p);

        let slot_cost = if arrival {
            let x = pending;
            let u_raw = policy.deferral(x);
            if !u_raw.is_finite() || !(-THRESHOLD_TOL..=psi + THRESHOLD_TOL).contains(&u_raw) {
                return Err(SimError::PolicyOutOfRange { slot, x, u: u_raw });
            }
            let u = u_raw.clamp(0.0, psi);
            let load = x + psi - u;
            let charged = match config.wait_charge {
                WaitChargeRule::DeferralPositive => u > 0.0,
                WaitChargeRule::PartialDeferralOnly => u > 0.0 && u < psi,
            };
            let wait = if charged { d } else { 0.0 };

            // Settle the previous request's leftover: it owns `x` of this
            // slot's load.
            if let Some(req) = open.take() {
                if req.counted {
                    agent_total += req.partial_cost + req.deferred * load;
                    agents_completed += 1;
                }
            }
            let partial = (psi - u) * load + wait;
            if u > 0.0 {
                open = Some(OpenRequest { deferred: u, partial_cost: partial, counted });
            } else if counted {
                agent_total += partial;
                agents_completed += 1;
            }

            if counted {
                arrivals_counted += 1;
                *histogram.entry(x.to_bits()).or_insert(0) += 1;
                if !prev_arrival {
                    if let Some(prev) = last_renewal {
                        let gap = (slot - prev) as f64;
                        spacing_sum += gap;
                        spacing_sq_sum += gap * gap;
                        spacings += 1;
                    }
                    last_renewal = Some(slot);
                }
            }
            if fixed_point_hit.is_none()
                && slot >= 100
                && prev_arrival
                && (x - prev_seen).abs() < 1e-3
            {
                fixed_point_hit = Some(x);
            }
            prev_seen = x;
            pending = u;
            load * load + wait
        } else {
            let load = pending;
            if let Some(req) = open.take() {
                if req.counted {
                    agent_total += req.partial_cost + req.deferred * load;
                    agents_completed += 1;
                }
            }
            pending = 0.0;
            load * load
        };

        if counted {
            total_cost += slot_cost;
            slots_counted += 1;
        }
        prev_arrival = arrival;
    }

    let mut pending_histogram: Vec<(f64, f64)> = histogram
        .into_iter()
        .map(|(bits, count)| (f64::from_bits(bits), count as f64 / arrivals_counted as f64))
        .collect();
    pending_histogram.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (renewal_mean, renewal_stderr) = if spacings >= 2 {
        let n = spacings as f64;
        let mean = spacing_sum / n;
        let var = (spacing_sq_sum - n * mean * mean) / (n - 1.0);
        (Some(mean), Some((var.max(0.0) / n).sqrt()))
    } else {
        (None, None)
    };

    Ok(SimulationReport {
        avg_cost: total_cost / slots_counted as f64,
        agent_avg_cost: (agents_completed > 0).then(|| agent_total / agents_completed as f64),
        renewal_mean,
        renewal_stderr,
        pending_histogram,
        fixed_point_hit,
        horizon,
        warmup: config.warmup,
        slots_counted,
        arrivals_counted,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Analytic pending distribution
// ---------------------------------------------------------------------------

/// Stationary distribution of the pending level seen by an arrival, exact
/// up to truncation.
///
/// An arrival preceded by exactly `k` consecutive arrival slots sees the
/// `k`-th iterate of the policy's orbit from 0, with probability
/// `(1 - p) p^k`. Runs of `k_max` or more are lumped into a single atom at
/// the `k_max`-th iterate, so the returned masses sum to 1 exactly.
pub fn pending_distribution<P>(
    policy: &P,
    params: &ModelParams,
    k_max: usize,
) -> Result<Vec<(f64, f64)>, SimError>
where
    P: DeferralPolicy + ?Sized,
{
    if k_max < 1 {
        return Err(SimError::BadTruncation { k_max });
    }
    let (p, psi) = (params.p, params.psi);
    let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(k_max + 1);
    let mut level = 0.0_f64;
    let mut mass_left = 1.0_f64;
    for k in 0..k_max {
        let mass = mass_left * (1.0 - p);
        push_atom(&mut atoms, level, mass);
        mass_left -= mass;
        let next = policy.deferral(level);
        if !next.is_finite() || !(-THRESHOLD_TOL..=psi + THRESHOLD_TOL).contains(&next) {
            return Err(SimError::PolicyOutOfRange { slot: k as u64, x: level, u: next });
        }
        level = next.clamp(0.0, psi);
    }
    push_atom(&mut atoms, level, mass_left);
    Ok(atoms)
}

/// Accumulates mass onto an existing atom when the orbit has stalled at the
/// same float, keeping the support minimal.
fn push_atom(atoms: &mut Vec<(f64, f64)>, level: f64, mass: f64) {
    if let Some(last) = atoms.last_mut() {
        if last.0 == level {
            last.1 += mass;
            return;
        }
    }
    atoms.push((level, mass));
}

// ---------------------------------------------------------------------------
// Sweeps and the equilibrium/optimum cost ratio
// ---------------------------------------------------------------------------

/// Which closed-form policy family a sweep simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum PolicyMode {
    /// The planner's policy (exact in the defer-everywhere regime, the
    /// certified envelope elsewhere).
    Optimal,
    /// The symmetric equilibrium strategy.
    Nash,
}

/// Average cost at one arrival rate, aggregated across seeds.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SweepPoint {
    pub p: f64,
    pub mean_cost: f64,
    /// Standard error across seeds; `None` with a single seed.
    pub stderr: Option<f64>,
    pub seeds: usize,
}

/// Simulated long-run average cost across arrival rates, fanned out over
/// `(p, seed)` pairs in parallel.
pub fn average_cost_sweep(
    mode: PolicyMode,
    psi: f64,
    d: f64,
    p_values: &[f64],
    horizon: u64,
    seeds: &[u64],
) -> Result<Vec<SweepPoint>, SimError> {
    p_values
        .iter()
        .map(|&p| {
            let params = ModelParams::new(p, psi, d)?;
            let costs = run_mode_over_seeds(mode, &params, horizon, seeds)?;
            Ok(aggregate(p, &costs))
        })
        .collect()
}

/// Equilibrium-to-optimum cost ratio at one arrival rate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PoaPoint {
    pub p: f64,
    pub optimal_cost: f64,
    pub nash_cost: f64,
    /// `nash_cost / optimal_cost`, forced to 1 when the optimal cost is
    /// numerically zero.
    pub ratio: f64,
    /// True when the ratio was forced because the denominator vanished.
    pub degenerate: bool,
}

/// Simulated cost ratio between the equilibrium and the planner's policy,
/// with both runs sharing each seed so the arrival streams are paired.
pub fn price_of_anarchy(
    psi: f64,
    d: f64,
    p_values: &[f64],
    horizon: u64,
    seeds: &[u64],
) -> Result<Vec<PoaPoint>, SimError> {
    p_values
        .iter()
        .map(|&p| {
            let params = ModelParams::new(p, psi, d)?;
            let optimal = run_mode_over_seeds(PolicyMode::Optimal, &params, horizon, seeds)?;
            let nash = run_mode_over_seeds(PolicyMode::Nash, &params, horizon, seeds)?;
            let optimal_cost = mean(&optimal);
            let nash_cost = mean(&nash);
            let degenerate = optimal_cost.abs() < 1e-12;
            let ratio = if degenerate { 1.0 } else { nash_cost / optimal_cost };
            Ok(PoaPoint { p, optimal_cost, nash_cost, ratio, degenerate })
        })
        .collect()
}

fn run_mode_over_seeds(
    mode: PolicyMode,
    params: &ModelParams,
    horizon: u64,
    seeds: &[u64],
) -> Result<Vec<f64>, SimError> {
    let policy = match mode {
        PolicyMode::Optimal => optimal_policy(params).policy,
        PolicyMode::Nash => equilibrium_policy(params).policy,
    };
    seeds
        .par_iter()
        .map(|&seed| Ok(simulate(&policy, params, horizon, seed)?.avg_cost))
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn aggregate(p: f64, costs: &[f64]) -> SweepPoint {
    let m = mean(costs);
    let stderr = if costs.len() >= 2 {
        let n = costs.len() as f64;
        let var = costs.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / (n - 1.0);
        Some((var / n).sqrt())
    } else {
        None
    };
    SweepPoint { p, mean_cost: m, stderr, seeds: costs.len() }
}
