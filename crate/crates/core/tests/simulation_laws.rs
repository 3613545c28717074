//! Statistical laws the simulator must reproduce. Every check runs on a
//! fixed seed, so a pass is reproducible and a failure is a genuine bug,
//! not flakiness.

use defersched_core::model::ModelParams;
use defersched_core::nash::{agent_cost, equilibrium_policy};
use defersched_core::optimal::approximate_policy;
use defersched_core::oracle::{value_iteration, Grid};
use defersched_core::sim::{pending_distribution, simulate};

fn params(p: f64, psi: f64, d: f64) -> ModelParams {
    ModelParams::new(p, psi, d).unwrap()
}

/// Arrivals that find the system empty occur at rate p (1 - p), so their
/// spacings average 1 / (p (1 - p)) regardless of the policy.
#[test]
fn renewal_spacing_matches_the_analytic_mean() {
    for p in [0.3, 0.5, 0.7] {
        let pr = params(p, 2.0, 1.0);
        let eq = equilibrium_policy(&pr);
        let report = simulate(&eq.policy, &pr, 1_000_000, 1729).unwrap();
        let mean = report.renewal_mean.expect("interior p yields renewals");
        let stderr = report.renewal_stderr.expect("more than one spacing");
        let expect = 1.0 / (p * (1.0 - p));
        assert!(
            (mean - expect).abs() <= 3.0 * stderr,
            "renewal mean {mean} vs {expect} (3 SE = {}) at p = {p}",
            3.0 * stderr
        );
    }
}

/// The pending level seen by arrivals follows the policy's orbit from zero
/// with geometric weights; the empirical histogram must match in total
/// variation once each observed level is assigned to its nearest atom.
#[test]
fn empirical_pending_distribution_matches_the_analytic_atoms() {
    let pr = params(0.85, 2.0, 1.0);
    let eq = equilibrium_policy(&pr);
    let atoms = pending_distribution(&eq.policy, &pr, 9).unwrap();
    let report = simulate(&eq.policy, &pr, 1_000_000, 99).unwrap();

    let mut matched = vec![0.0_f64; atoms.len()];
    for &(level, freq) in &report.pending_histogram {
        let (idx, dist) = atoms
            .iter()
            .enumerate()
            .map(|(i, &(a, _))| (i, (a - level).abs()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        assert!(
            dist < 1e-3,
            "observed pending {level} sits {dist} from the nearest atom"
        );
        matched[idx] += freq;
    }
    let tv: f64 = atoms
        .iter()
        .zip(&matched)
        .map(|(&(_, mass), &freq)| (mass - freq).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.01, "total variation {tv}");
}

/// Realized per-request costs, attributed slot by slot, average to the
/// game's two-slot cost formula weighted by the stationary pending
/// distribution.
#[test]
fn per_agent_costs_match_the_game_formula() {
    let pr = params(0.85, 2.0, 1.0);
    let eq = equilibrium_policy(&pr);
    let atoms = pending_distribution(&eq.policy, &pr, 60).unwrap();
    let analytic: f64 = atoms
        .iter()
        .map(|&(level, mass)| mass * agent_cost(level, &eq.policy, &pr).unwrap())
        .sum();
    let report = simulate(&eq.policy, &pr, 1_000_000, 7).unwrap();
    let measured = report.agent_avg_cost.expect("agents completed");
    assert!(
        (measured - analytic).abs() < 0.01,
        "agent average {measured} vs stationary formula {analytic}"
    );
}

/// Simulated long-run cost ranks the policies correctly: the oracle-backed
/// table is best, the closed-form envelope matches it on path, and the
/// equilibrium pays extra. Paired seeds keep the comparisons tight.
#[test]
fn simulated_costs_rank_the_policies() {
    let seeds = [11, 12, 13, 14];
    let horizon = 300_000;
    for p in [0.5, 0.7, 0.85] {
        let pr = params(p, 2.0, 1.0);
        let grid = Grid::uniform(2.0, 2001).unwrap();
        let table = value_iteration(&pr, &grid, 1e-9, 100_000).unwrap().as_policy();
        let envelope = approximate_policy(&pr);
        let nash = equilibrium_policy(&pr).policy;

        let run = |policy: &dyn defersched_core::policy::DeferralPolicy, seed: u64| {
            simulate(policy, &pr, horizon, seed).unwrap().avg_cost
        };
        for (name, other) in [("envelope", &envelope as &dyn defersched_core::policy::DeferralPolicy), ("equilibrium", &nash)] {
            let diffs: Vec<f64> = seeds
                .iter()
                .map(|&s| run(other, s) - run(&table, s))
                .collect();
            let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
            let var = diffs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                / (diffs.len() - 1) as f64;
            let stderr = (var / diffs.len() as f64).sqrt();
            // Absolute slack covers the table policy's own grid error.
            assert!(
                mean >= -3.0 * stderr - 2e-3,
                "{name} beat the oracle table at p = {p}: mean diff {mean}, 3 SE {}",
                3.0 * stderr
            );
        }
    }
}

/// The true minimum average cost is p psi^2 whenever nothing is deferred on
/// path, and the simulator reproduces it to statistical accuracy.
#[test]
fn no_defer_regime_average_cost_is_the_arrival_rate_times_demand_squared() {
    for p in [0.62, 0.85] {
        let pr = params(p, 2.0, 1.0);
        let opt = defersched_core::optimal::optimal_policy(&pr);
        let report = simulate(&opt.policy, &pr, 1_000_000, 31).unwrap();
        // Zero policy: each arrival costs exactly psi^2, so the error is
        // purely binomial sampling of the arrival fraction.
        let expect = p * 4.0;
        let stderr = 4.0 * (p * (1.0 - p) / report.slots_counted as f64).sqrt();
        assert!(
            (report.avg_cost - expect).abs() <= 3.0 * stderr,
            "avg cost {} vs {expect} at p = {p}",
            report.avg_cost
        );
    }
}
