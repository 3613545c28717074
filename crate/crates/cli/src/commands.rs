//! The artifact builders behind each subcommand. Every command produces
//! both renderings of the same result — a [`Table`] for CSV and a
//! [`serde_json::Value`] mirroring the domain types — and the caller picks
//! one by `--format`.

use crate::args::{Mode, NashArgs, SimulateArgs, SolveArgs, SweepArgs};
use crate::error::CliError;
use crate::output::{fmt_opt, fmt_sig, Table};
use defersched_core::model::{DemandClass, GeneralDemandTable, ModelParams};
use defersched_core::nash::{best_response, equilibrium_policy};
use defersched_core::optimal::{deferral_threshold, general_demand_policies, optimal_policy, Regime};
use defersched_core::oracle::{value_iteration, Grid, DEFAULT_MAX_ITER};
use defersched_core::policy::{Segment, SegmentKind};
use defersched_core::sim::{average_cost_sweep, simulate, PolicyMode};
use serde_json::json;

/// Both renderings of one artifact.
pub struct Rendered {
    pub table: Table,
    pub json: serde_json::Value,
}

/// Interior-rate parameters from flags, with configuration-grade errors.
fn interior_params(p: f64, psi: f64, d: f64) -> Result<ModelParams, CliError> {
    ModelParams::new(p, psi, d).map_err(|e| CliError::config(e.to_string()))
}

/// The stringly (kind, slope, intercept) triple of a policy segment, with
/// the saturated rule materialized as its constant value so every row is
/// self-contained.
fn segment_fields(seg: &Segment, psi: f64) -> (&'static str, f64, f64) {
    match seg.kind {
        SegmentKind::Zero => ("zero", 0.0, 0.0),
        SegmentKind::Affine { slope, intercept } => ("affine", slope, intercept),
        SegmentKind::Saturated => ("saturated", 0.0, psi),
    }
}

fn regime_str(regime: Regime) -> &'static str {
    match regime {
        Regime::DeferEverywhere => "defer",
        Regime::NoDeferOnPath => "no-defer",
    }
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

pub fn cmd_solve(args: &SolveArgs) -> Result<Rendered, CliError> {
    if let Some(spec) = &args.table {
        return solve_demand_table(spec, args.d);
    }
    let (p, psi) = match (args.p, args.psi) {
        (Some(p), Some(psi)) => (p, psi),
        _ => {
            return Err(CliError::config(
                "solve needs either --p and --psi or a --table demand mix",
            ))
        }
    };
    let params = interior_params(p, psi, args.d)?;
    let opt = optimal_policy(&params);
    let theta = deferral_threshold(opt.limits.a, opt.limits.b, &params)
        .expect("limiting coefficients are nonnegative");

    let mut json = json!({
        "command": "solve",
        "params": params,
        "solution": opt,
        "theta": theta,
    });

    if args.oracle {
        let grid = Grid::uniform(psi, args.grid).map_err(|e| CliError::config(e.to_string()))?;
        let sol = value_iteration(&params, &grid, args.tol, DEFAULT_MAX_ITER)
            .map_err(CliError::run)?;
        let mut table = Table::new(&["x", "action", "oracle_action"]);
        for i in 0..grid.n_states() {
            let x = grid.state(i);
            let action = opt.policy.eval(x).expect("grid states lie in the policy domain");
            table.push_row(vec![fmt_sig(x), fmt_sig(action), fmt_sig(sol.actions[i])]);
        }
        json["oracle"] = serde_json::to_value(&sol).map_err(CliError::run)?;
        return Ok(Rendered { table, json });
    }

    let mut table = Table::new(&[
        "x_lo",
        "x_hi",
        "kind",
        "slope",
        "intercept",
        "regime",
        "a_inf",
        "b_inf",
        "theta",
        "regime_threshold",
        "zero_certified_through",
        "tail_is_numeric",
    ]);
    for seg in opt.policy.segments() {
        let (kind, slope, intercept) = segment_fields(seg, psi);
        table.push_row(vec![
            fmt_sig(seg.x_lo),
            fmt_sig(seg.x_hi),
            kind.to_string(),
            fmt_sig(slope),
            fmt_sig(intercept),
            regime_str(opt.regime).to_string(),
            fmt_sig(opt.limits.a),
            fmt_sig(opt.limits.b),
            fmt_sig(theta),
            fmt_sig(opt.regime_threshold),
            fmt_opt(opt.zero_certified_through),
            opt.tail_is_numeric.to_string(),
        ]);
    }
    Ok(Rendered { table, json })
}

/// Demand-class parsing for `--table "1:0.25,3:0.25"`.
fn parse_demand_classes(spec: &str) -> Result<Vec<DemandClass>, CliError> {
    let mut classes = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        let (demand, probability) = part.split_once(':').ok_or_else(|| {
            CliError::config(format!("demand class `{part}` is not a demand:probability pair"))
        })?;
        let demand: f64 = demand
            .trim()
            .parse()
            .map_err(|_| CliError::config(format!("demand `{demand}` is not a number")))?;
        let probability: f64 = probability
            .trim()
            .parse()
            .map_err(|_| CliError::config(format!("probability `{probability}` is not a number")))?;
        classes.push(DemandClass { demand, probability });
    }
    Ok(classes)
}

fn solve_demand_table(spec: &str, d: f64) -> Result<Rendered, CliError> {
    let classes = parse_demand_classes(spec)?;
    let mix = GeneralDemandTable::new(classes).map_err(|e| CliError::config(e.to_string()))?;
    let aggregate = mix.aggregate_params(d).map_err(|e| CliError::config(e.to_string()))?;
    let policies = general_demand_policies(&mix, d).map_err(|e| CliError::config(e.to_string()))?;
    let regime = optimal_policy(&aggregate).regime;

    let mut table = Table::new(&[
        "demand",
        "probability",
        "x_lo",
        "x_hi",
        "kind",
        "slope",
        "intercept",
        "aggregate_p",
        "aggregate_psi",
        "regime",
    ]);
    for class in &policies {
        for seg in class.policy.segments() {
            let (kind, slope, intercept) = segment_fields(seg, class.demand);
            table.push_row(vec![
                fmt_sig(class.demand),
                fmt_sig(class.probability),
                fmt_sig(seg.x_lo),
                fmt_sig(seg.x_hi),
                kind.to_string(),
                fmt_sig(slope),
                fmt_sig(intercept),
                fmt_sig(aggregate.p),
                fmt_sig(aggregate.psi),
                regime_str(regime).to_string(),
            ]);
        }
    }
    let json = json!({
        "command": "solve",
        "d": d,
        "classes": mix,
        "aggregate": aggregate,
        "regime": regime,
        "policies": policies,
    });
    Ok(Rendered { table, json })
}

// ---------------------------------------------------------------------------
// nash
// ---------------------------------------------------------------------------

pub fn cmd_nash(args: &NashArgs) -> Result<Rendered, CliError> {
    let params = interior_params(args.p, args.psi, args.d)?;
    let eq = equilibrium_policy(&params);

    let certificate_residual = if args.certificate {
        if args.grid < 101 {
            return Err(CliError::config(format!(
                "the certificate grid needs at least 101 points, got {}",
                args.grid
            )));
        }
        let step = args.psi / (args.grid - 1) as f64;
        let br = best_response(&eq.policy, &params, step).map_err(CliError::run)?;
        let mut residual = 0.0_f64;
        for i in 0..br.grid.n_states() {
            let x = br.grid.state(i);
            let prescribed =
                eq.policy.eval(x).expect("grid states lie in the strategy domain");
            residual = residual.max((br.actions[i] - prescribed).abs());
        }
        Some(residual)
    } else {
        None
    };

    let mut table = Table::new(&[
        "x_lo",
        "x_hi",
        "kind",
        "slope",
        "intercept",
        "a_inf",
        "b_inf",
        "x_inf",
        "fixed_point",
        "tail_is_partial",
        "certificate_residual",
    ]);
    for seg in eq.policy.segments() {
        let (kind, slope, intercept) = segment_fields(seg, args.psi);
        table.push_row(vec![
            fmt_sig(seg.x_lo),
            fmt_sig(seg.x_hi),
            kind.to_string(),
            fmt_sig(slope),
            fmt_sig(intercept),
            fmt_sig(eq.limits.a_inf),
            fmt_sig(eq.limits.b_inf),
            fmt_sig(eq.limits.x_inf),
            fmt_opt(eq.limits.fixed_point),
            eq.tail_is_partial.to_string(),
            fmt_opt(certificate_residual),
        ]);
    }
    let json = json!({
        "command": "nash",
        "params": params,
        "equilibrium": eq,
        "certificate_residual": certificate_residual,
    });
    Ok(Rendered { table, json })
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn cmd_simulate(args: &SimulateArgs) -> Result<Rendered, CliError> {
    // The simulator is the one place where the arrival-rate edges are
    // meaningful inputs.
    let params = ModelParams::with_edge_arrival_rate(args.p, args.psi, args.d)
        .map_err(|e| CliError::config(e.to_string()))?;
    let policy = match args.mode {
        Mode::Optimal => optimal_policy(&params).policy,
        Mode::Nash => equilibrium_policy(&params).policy,
    };
    let report = simulate(&policy, &params, args.horizon, args.seed).map_err(CliError::run)?;

    let table = if args.histogram {
        let mut table = Table::new(&["level", "mass"]);
        for &(level, mass) in &report.pending_histogram {
            table.push_row(vec![fmt_sig(level), fmt_sig(mass)]);
        }
        table
    } else {
        let mut table = Table::new(&[
            "p",
            "psi",
            "d",
            "mode",
            "horizon",
            "seed",
            "warmup",
            "slots_counted",
            "arrivals_counted",
            "avg_cost",
            "agent_avg_cost",
            "renewal_mean",
            "renewal_stderr",
            "fixed_point_hit",
        ]);
        table.push_row(vec![
            fmt_sig(params.p),
            fmt_sig(params.psi),
            fmt_sig(params.d),
            args.mode.as_str().to_string(),
            report.horizon.to_string(),
            report.seed.to_string(),
            report.warmup.to_string(),
            report.slots_counted.to_string(),
            report.arrivals_counted.to_string(),
            fmt_sig(report.avg_cost),
            fmt_opt(report.agent_avg_cost),
            fmt_opt(report.renewal_mean),
            fmt_opt(report.renewal_stderr),
            fmt_opt(report.fixed_point_hit),
        ]);
        table
    };
    let json = json!({
        "command": "simulate",
        "params": params,
        "mode": args.mode.as_str(),
        "report": report,
    });
    Ok(Rendered { table, json })
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

pub fn cmd_sweep(args: &SweepArgs) -> Result<Rendered, CliError> {
    if args.seeds == 0 {
        return Err(CliError::config("sweeps need at least one seed"));
    }
    for &p in &args.p {
        // Both policy families are closed forms for interior rates only;
        // the edges belong to `simulate`.
        if p == 0.0 || p == 1.0 {
            return Err(CliError::config(format!(
                "sweeps need arrival rates strictly inside (0, 1); run `simulate --p {p}` for the edge"
            )));
        }
        interior_params(p, args.psi, args.d)?;
    }
    let seed_list: Vec<u64> =
        (0..args.seeds).map(|i| args.seed.wrapping_add(i as u64)).collect();
    let optimal =
        average_cost_sweep(PolicyMode::Optimal, args.psi, args.d, &args.p, args.horizon, &seed_list)
            .map_err(CliError::run)?;
    let nash =
        average_cost_sweep(PolicyMode::Nash, args.psi, args.d, &args.p, args.horizon, &seed_list)
            .map_err(CliError::run)?;

    let mut table = Table::new(&[
        "p",
        "optimal_cost",
        "optimal_stderr",
        "nash_cost",
        "nash_stderr",
        "poa",
        "degenerate",
    ]);
    let mut rows = Vec::with_capacity(optimal.len());
    for (opt_point, nash_point) in optimal.iter().zip(&nash) {
        // Same seed list on both sides, so this is the paired-seed ratio;
        // the guard mirrors the library's degenerate-denominator convention.
        let degenerate = opt_point.mean_cost.abs() < 1e-12;
        let poa = if degenerate { 1.0 } else { nash_point.mean_cost / opt_point.mean_cost };
        table.push_row(vec![
            fmt_sig(opt_point.p),
            fmt_sig(opt_point.mean_cost),
            fmt_opt(opt_point.stderr),
            fmt_sig(nash_point.mean_cost),
            fmt_opt(nash_point.stderr),
            fmt_sig(poa),
            degenerate.to_string(),
        ]);
        rows.push(json!({
            "p": opt_point.p,
            "optimal_cost": opt_point.mean_cost,
            "optimal_stderr": opt_point.stderr,
            "nash_cost": nash_point.mean_cost,
            "nash_stderr": nash_point.stderr,
            "poa": poa,
            "degenerate": degenerate,
        }));
    }
    let json = json!({
        "command": "sweep",
        "psi": args.psi,
        "d": args.d,
        "horizon": args.horizon,
        "seeds": seed_list,
        "rows": rows,
    });
    Ok(Rendered { table, json })
}
