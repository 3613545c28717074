//! The `validate` battery: a self-check that replays the analytical layer
//! against the brute-force layer at one parameter point and reports every
//! comparison as a JSON line, machine-scrapeable and diffable.

use crate::error::CliError;
use defersched_core::model::ModelParams;
use defersched_core::nash::{self, best_response, equilibrium_limits, equilibrium_policy};
use defersched_core::optimal::{continuation_coefficients, continuation_limits, optimal_policy, Regime};
use defersched_core::oracle::{nash_value_iteration, value_iteration, Grid, DEFAULT_MAX_ITER};
use serde_json::json;

/// How many recursion steps "converged" is measured over.
const COEFFICIENT_HORIZON: u32 = 200;

fn check_line(
    check: &str,
    passed: bool,
    expected: serde_json::Value,
    actual: serde_json::Value,
    tolerance: f64,
) -> serde_json::Value {
    json!({
        "check": check,
        "passed": passed,
        "expected": expected,
        "actual": actual,
        "tolerance": tolerance,
    })
}

fn skipped_line(check: &str, reason: &str) -> serde_json::Value {
    json!({ "check": check, "passed": true, "skipped": true, "reason": reason })
}

/// Runs every check and returns one JSON object per check, in a fixed order.
pub fn run_checks(
    params: &ModelParams,
    grid_points: usize,
    tol: f64,
) -> Result<Vec<serde_json::Value>, CliError> {
    let mut lines = Vec::new();
    let psi = params.psi;

    // --- 1. Planner coefficients decrease monotonically onto their limits.
    let limits = continuation_limits(params);
    let mut monotone = true;
    let mut prev = continuation_coefficients(params, 0);
    for k in 1..=COEFFICIENT_HORIZON {
        let next = continuation_coefficients(params, k);
        if next.a > prev.a + 1e-15 || next.b > prev.b + 1e-15 {
            monotone = false;
        }
        prev = next;
    }
    let gap = (prev.a - limits.a).abs().max((prev.b - limits.b).abs());
    lines.push(check_line(
        "planner_coefficient_convergence",
        monotone && gap < 1e-10,
        json!({ "a": limits.a, "b": limits.b, "monotone": "nonincreasing" }),
        json!({ "a": prev.a, "b": prev.b, "monotone": monotone, "gap": gap }),
        1e-10,
    ));

    // --- 2. The limiting coefficients satisfy a psi + b / 2 = psi exactly.
    let identity = limits.a * psi + 0.5 * limits.b;
    lines.push(check_line(
        "planner_identity",
        (identity - psi).abs() < 1e-12,
        json!(psi),
        json!(identity),
        1e-12,
    ));

    // --- 3. Strategy coefficients increase monotonically onto their limits.
    let eq_limits = equilibrium_limits(params);
    let mut monotone = true;
    let mut prev = nash::strategy_coefficients(params, -1);
    for k in 0..=COEFFICIENT_HORIZON as i32 {
        let next = nash::strategy_coefficients(params, k);
        if next.a < prev.a - 1e-15 || next.b < prev.b - 1e-15 {
            monotone = false;
        }
        prev = next;
    }
    let gap = (prev.a - eq_limits.a_inf).abs().max((prev.b - eq_limits.b_inf).abs());
    lines.push(check_line(
        "game_coefficient_convergence",
        monotone && gap < 1e-10,
        json!({ "a": eq_limits.a_inf, "b": eq_limits.b_inf, "monotone": "nondecreasing" }),
        json!({ "a": prev.a, "b": prev.b, "monotone": monotone, "gap": gap }),
        1e-10,
    ));

    // --- 4. The limiting slope sits in (1/4, 1/3) and the fixed point is
    //        fixed by the strategy.
    let in_band = eq_limits.a_inf > 0.25 && eq_limits.a_inf < 1.0 / 3.0;
    let fp_residual = eq_limits
        .fixed_point
        .map(|fp| (eq_limits.a_inf * fp + eq_limits.b_inf - fp).abs());
    let fp_ok = fp_residual.map_or(true, |r| r < 1e-12);
    lines.push(check_line(
        "game_limit_band",
        in_band && fp_ok,
        json!({ "a_band": [0.25, 1.0 / 3.0], "fixed_point_residual": 0.0 }),
        json!({ "a": eq_limits.a_inf, "fixed_point_residual": fp_residual }),
        1e-12,
    ));

    // --- 5. The regime label, the regime inequality, and the grid oracle's
    //        greedy action at the empty state all agree.
    let opt = optimal_policy(params);
    let inequality_defers = psi * limits.a > (params.d * (1.0 + limits.a)).sqrt();
    let label_defers = opt.regime == Regime::DeferEverywhere;
    let grid = Grid::uniform(psi, grid_points).map_err(|e| CliError::config(e.to_string()))?;
    let sol = value_iteration(params, &grid, tol, DEFAULT_MAX_ITER).map_err(CliError::run)?;
    let origin_action = sol.actions[0];
    let oracle_defers_at_origin = if label_defers {
        let intercept =
            opt.policy.eval(0.0).expect("the policy covers the empty state");
        origin_action >= intercept - grid.step()
    } else {
        origin_action <= grid.step()
    };
    lines.push(check_line(
        "regime_dichotomy",
        (inequality_defers == label_defers) && oracle_defers_at_origin,
        json!({ "defers": inequality_defers }),
        json!({
            "label_defers": label_defers,
            "origin_action": origin_action,
        }),
        grid.step(),
    ));

    // --- 6. The closed-form policy matches the grid oracle's greedy rule
    //        wherever the closed form is certified.
    let certified_through = match opt.regime {
        Regime::DeferEverywhere => psi,
        Regime::NoDeferOnPath => {
            opt.zero_certified_through.expect("the no-defer regime certifies a prefix")
                - grid.step()
        }
    };
    let mut worst = 0.0_f64;
    for i in 0..grid.n_states() {
        let x = grid.state(i);
        if x > certified_through {
            break;
        }
        let closed = opt.policy.eval(x).expect("grid states lie in the policy domain");
        worst = worst.max((closed - sol.actions[i]).abs());
    }
    lines.push(check_line(
        "oracle_policy_agreement",
        worst <= grid.step() + 1e-12,
        json!({ "max_gap": 0.0, "through": certified_through }),
        json!({ "max_gap": worst }),
        grid.step(),
    ));

    // --- 7. The equilibrium is a best response to itself.
    let eq = equilibrium_policy(params);
    if eq.tail_is_partial {
        lines.push(skipped_line(
            "equilibrium_certificate",
            "the affine tail is not a certified equilibrium over the whole domain",
        ));
    } else {
        let br = best_response(&eq.policy, params, grid.step()).map_err(CliError::run)?;
        let mut residual = 0.0_f64;
        for i in 0..br.grid.n_states() {
            let x = br.grid.state(i);
            let prescribed =
                eq.policy.eval(x).expect("grid states lie in the strategy domain");
            residual = residual.max((br.actions[i] - prescribed).abs());
        }
        lines.push(check_line(
            "equilibrium_certificate",
            residual <= grid.step(),
            json!({ "sup_deviation": 0.0 }),
            json!({ "sup_deviation": residual }),
            grid.step(),
        ));
    }

    // --- 8. Iterated best responses land on the closed-form equilibrium.
    if eq.tail_is_partial {
        lines.push(skipped_line(
            "game_oracle_agreement",
            "the affine tail is not a certified equilibrium over the whole domain",
        ));
    } else {
        let (game, _) = nash_value_iteration(params, &grid, tol, DEFAULT_MAX_ITER)
            .map_err(CliError::run)?;
        let mut worst = 0.0_f64;
        for i in 0..grid.n_states() {
            let x = grid.state(i);
            let prescribed =
                eq.policy.eval(x).expect("grid states lie in the strategy domain");
            worst = worst.max((game.actions[i] - prescribed).abs());
        }
        lines.push(check_line(
            "game_oracle_agreement",
            worst <= grid.step(),
            json!({ "max_gap": 0.0 }),
            json!({ "max_gap": worst }),
            grid.step(),
        ));
    }

    Ok(lines)
}

/// Counts failures in a finished check list.
#[must_use]
pub fn failures(lines: &[serde_json::Value]) -> usize {
    lines.iter().filter(|l| l["passed"] == json!(false)).count()
}
