//! Symmetric equilibrium of the deferral game.
//!
//! Here each request belongs to a self-interested agent who pays only its
//! own two-slot cost: the shared-slot service charge now, the leftover
//! charge next slot (inflated by whatever the *next* agent defers onto it),
//! and the flat waiting charge if it defers at all. A strategy maps the
//! pending level an agent sees on arrival to its deferred amount.
//!
//! The best-response recursion against a fixed opponent strategy produces
//! affine strategies with coefficients
//!
//! ```text
//! a[k] = 1 / (2 (2 - p a[k-1]))            a[-1] = 0
//! b[k] = ((2 - p) psi + p b[k-1]) / (2 (2 - p a[k-1]))   b[-1] = 0
//! ```
//!
//! whose limits `(a, b)` pin down the stationary symmetric equilibrium. One
//! threshold decides its shape: deferring beats serving everything exactly
//! when the pending level exceeds
//!
//! ```text
//! x* = (sqrt(2 a d) - b) / a
//! ```
//!
//! If `x* < 0` the equilibrium strategy is `a x + b` everywhere; if `x*`
//! falls inside `[0, psi)` agents below it serve everything and agents above
//! it play the affine branch; if `x* >= psi` nobody ever defers. The affine
//! tail of the split case is certified only when the consecutive-arrival
//! fixed point `b / (1 - a)` does not fall below `x*`; otherwise the
//! strategy above the threshold is only partially characterized and callers
//! should consult the grid oracle.

use crate::model::{ModelParams, SequencePair, THRESHOLD_TOL};
use crate::oracle::{Grid, TabularSolution};
use crate::policy::{PiecewisePolicy, PolicyError, Segment, SegmentKind};
use rayon::prelude::*;
use std::fmt;

/// Errors from equilibrium queries and best-response runs.
#[derive(Debug, Clone, PartialEq)]
pub enum NashError {
    /// Best-response grid step must be positive and no coarser than psi/10.
    BadGridStep { step: f64, psi: f64 },
    /// Opponent policy and parameters disagree about the demand size.
    DomainMismatch { policy_psi: f64, params_psi: f64 },
    /// Pending level outside `[0, psi]`.
    PendingOutOfRange { x: f64, psi: f64 },
    /// Deviation outside `[0, psi]`.
    ActionOutOfRange { u: f64, psi: f64 },
    /// An opponent policy evaluation failed.
    Policy(PolicyError),
}

impl fmt::Display for NashError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NashError::BadGridStep { step, psi } => {
                write!(f, "grid step {step} must lie in (0, {}]", psi / 10.0)
            }
            NashError::DomainMismatch { policy_psi, params_psi } => {
                write!(f, "opponent covers [0, {policy_psi}] but params have psi = {params_psi}")
            }
            NashError::PendingOutOfRange { x, psi } => {
                write!(f, "pending level {x} outside [0, {psi}]")
            }
            NashError::ActionOutOfRange { u, psi } => {
                write!(f, "deviation {u} outside [0, {psi}]")
            }
            NashError::Policy(e) => write!(f, "opponent policy: {e}"),
        }
    }
}

impl std::error::Error for NashError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            NashError::Policy(e) => Some(e),
            _ => None,
        }
    }
}

impl From<PolicyError> for NashError {
    fn from(e: PolicyError) -> Self {
        NashError::Policy(e)
    }
}

// ---------------------------------------------------------------------------
// Strategy coefficients and their limits
// ---------------------------------------------------------------------------

/// `k`-th best-response strategy coefficients, starting from the rest point
/// `k = -1` (the strategy that defers nothing).
///
/// # Panics
///
/// Panics if `k < -1`; the recursion has no earlier terms.
#[must_use]
pub fn strategy_coefficients(params: &ModelParams, k: i32) -> SequencePair {
    assert!(k >= -1, "strategy recursion starts at index -1, got {k}");
    let (p, psi) = (params.p, params.psi);
    let mut a = 0.0;
    let mut b = 0.0;
    for _ in 0..=k {
        let denom = 2.0 * (2.0 - p * a);
        b = ((2.0 - p) * psi + p * b) / denom;
        a = 1.0 / denom;
    }
    SequencePair { index: k, a, b }
}

/// Limits of the strategy recursion and the derived equilibrium landmarks.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct NashLimits {
    /// Limiting strategy slope, strictly between 1/4 and 1/3.
    pub a_inf: f64,
    /// Limiting strategy intercept.
    pub b_inf: f64,
    /// Pending level at which deferring starts to beat serving everything
    /// against the limiting affine opponent. May be negative (defer
    /// everywhere) or beyond psi (never defer).
    pub x_inf: f64,
    /// Fixed point of the limiting map `x -> a x + b`, reported when it
    /// lands in `[0, psi]`. Under consecutive arrivals the pending level
    /// contracts to this value.
    pub fixed_point: Option<f64>,
}

impl NashLimits {
    /// The fixed point whether or not it lies in `[0, psi]`.
    #[must_use]
    pub fn raw_fixed_point(&self) -> f64 {
        self.b_inf / (1.0 - self.a_inf)
    }
}

/// Closed-form limits of [`strategy_coefficients`].
///
/// The slope limit solves `a = 1 / (2 (2 - p a))`; its stable root is
/// written as `1 / (2 + sqrt(4 - 2 p))`, which equals the textbook
/// `1/p - sqrt(4 - 2 p) / (2 p)` without the catastrophic cancellation at
/// small `p`.
#[must_use]
pub fn equilibrium_limits(params: &ModelParams) -> NashLimits {
    let (p, psi, d) = (params.p, params.psi, params.d);
    let a = 1.0 / (2.0 + (4.0 - 2.0 * p).sqrt());
    let b = a * (2.0 - p) * psi / (1.0 - a * p);
    let x_inf = ((2.0 * a * d).sqrt() - b) / a;
    let fp = b / (1.0 - a);
    let fixed_point = if (0.0..=psi).contains(&fp) { Some(fp) } else { None };
    NashLimits { a_inf: a, b_inf: b, x_inf, fixed_point }
}

/// Pending level below which serving everything beats every deviation
/// against the affine opponent `u -> slope * u + intercept`.
///
/// Derived from the deviation cost `(2 - p a) u^2 - (x + (2 - p) psi + p b) u
/// + psi (psi + x) + d`: its minimum beats the no-defer cost `psi (psi + x)`
/// exactly when `x` exceeds the returned value. At the limiting coefficients
/// this reproduces `x_inf` through an independent algebraic route.
///
/// # Panics
///
/// Panics if the deviation objective is not convex against this opponent
/// (`2 - p * slope <= 0`), where no such threshold exists.
#[must_use]
pub fn no_defer_threshold_against_affine(slope: f64, intercept: f64, params: &ModelParams) -> f64 {
    let curvature = 2.0 - params.p * slope;
    assert!(
        curvature > 0.0,
        "deviation objective needs 2 - p * slope > 0, got {curvature}"
    );
    2.0 * (params.d * curvature).sqrt() - (2.0 - params.p) * params.psi - params.p * intercept
}

// ---------------------------------------------------------------------------
// The equilibrium profile
// ---------------------------------------------------------------------------

/// A symmetric stationary equilibrium of the deferral game.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct NashEquilibrium {
    /// The equilibrium strategy as a policy over pending levels.
    pub policy: PiecewisePolicy,
    pub limits: NashLimits,
    /// True when the strategy above the no-defer threshold is only partially
    /// characterized (the affine fixed point falls below the threshold, so
    /// the tail's certificate does not apply). The below-threshold zero
    /// region is unaffected.
    pub tail_is_partial: bool,
}

/// The symmetric equilibrium strategy for the given parameters.
#[must_use]
pub fn equilibrium_policy(params: &ModelParams) -> NashEquilibrium {
    let limits = equilibrium_limits(params);
    let psi = params.psi;
    let interior = "limit strategy is interior: a in (1/4, 1/3) and a psi + b < psi";
    let (policy, tail_is_partial) = if limits.x_inf < 0.0 {
        let policy = PiecewisePolicy::affine(psi, limits.a_inf, limits.b_inf).expect(interior);
        (policy, false)
    } else if limits.x_inf >= psi {
        (PiecewisePolicy::zero(psi), false)
    } else {
        let policy = PiecewisePolicy::zero_then_affine(psi, limits.x_inf, limits.a_inf, limits.b_inf)
            .expect(interior);
        let certified = limits.raw_fixed_point() >= limits.x_inf;
        (policy, !certified)
    };
    NashEquilibrium { policy, limits, tail_is_partial }
}

// ---------------------------------------------------------------------------
// Costs
// ---------------------------------------------------------------------------

/// Two-slot cost of one agent when everyone, itself included, plays
/// `policy`. The agent arrives to pending level `x`, defers `u = policy(x)`,
/// and next slot is joined by a new arrival with probability `p` that defers
/// `policy(u)` onto it.
pub fn agent_cost(x: f64, policy: &PiecewisePolicy, params: &ModelParams) -> Result<f64, NashError> {
    let u = policy.eval(x)?;
    deviation_cost(x, u, policy, params)
}

/// Two-slot cost of deviating to `u` at pending level `x` while every other
/// agent plays `opponent`. `u = 0` serves everything immediately and pays no
/// waiting charge.
pub fn deviation_cost(
    x: f64,
    u: f64,
    opponent: &PiecewisePolicy,
    params: &ModelParams,
) -> Result<f64, NashError> {
    let (p, psi, d) = (params.p, params.psi, params.d);
    if (opponent.psi() - psi).abs() > THRESHOLD_TOL {
        return Err(NashError::DomainMismatch { policy_psi: opponent.psi(), params_psi: psi });
    }
    if !(-THRESHOLD_TOL..=psi + THRESHOLD_TOL).contains(&x) {
        return Err(NashError::PendingOutOfRange { x, psi });
    }
    if !(-THRESHOLD_TOL..=psi + THRESHOLD_TOL).contains(&u) {
        return Err(NashError::ActionOutOfRange { u, psi });
    }
    let x = x.clamp(0.0, psi);
    let u = u.clamp(0.0, psi);
    if u == 0.0 {
        return Ok(psi * (psi + x));
    }
    let next = opponent.eval(u)?;
    Ok((psi - u) * (psi - u + x) + u * (u + p * (psi - next)) + d)
}

// ---------------------------------------------------------------------------
// Exact best response
// ---------------------------------------------------------------------------

/// Pointwise best response against a piecewise opponent, tabulated on a
/// uniform grid of pending levels.
///
/// Within each opponent segment the deviation cost is an exact quadratic in
/// `u`, so the minimizer is found from segment endpoints and interior
/// vertices alone — no search error beyond float arithmetic. Ties prefer the
/// smallest deviation, and serving everything wins exact ties against the
/// best positive deviation.
///
/// The returned table reports the best-response action and its cost per
/// grid state; `iterations` is 1 because the response to a fixed opponent
/// is a single exact minimization, and re-applying it changes nothing.
pub fn best_response(
    opponent: &PiecewisePolicy,
    params: &ModelParams,
    grid_step: f64,
) -> Result<TabularSolution, NashError> {
    let psi = params.psi;
    if !(grid_step > 0.0) || grid_step > psi / 10.0 {
        return Err(NashError::BadGridStep { step: grid_step, psi });
    }
    if (opponent.psi() - psi).abs() > THRESHOLD_TOL {
        return Err(NashError::DomainMismatch { policy_psi: opponent.psi(), params_psi: psi });
    }
    let n = ((psi / grid_step).round() as usize + 1).max(101);
    let grid = Grid::uniform(psi, n).expect("resolution floor enforced by max(..., 101)");

    let results: Vec<(f64, f64)> = (0..grid.n_states())
        .into_par_iter()
        .map(|i| respond_at(grid.state(i), opponent, params))
        .collect();
    let (values, actions) = results.into_iter().unzip();
    Ok(TabularSolution {
        grid,
        values,
        actions,
        residual: 0.0,
        iterations: 1,
        residual_history: Vec::new(),
    })
}

/// Exact minimization of the deviation cost at one pending level.
pub(crate) fn respond_at(x: f64, opponent: &PiecewisePolicy, params: &ModelParams) -> (f64, f64) {
    let (p, psi, d) = (params.p, params.psi, params.d);
    let no_defer = psi * (psi + x);
    let eval_h = |u: f64| {
        let next = opponent.eval(u).expect("candidates lie inside the opponent's domain");
        (psi - u) * (psi - u + x) + u * (u + p * (psi - next)) + d
    };

    let mut best_u = f64::NAN;
    let mut best = f64::INFINITY;
    for seg in opponent.segments() {
        let (slope, intercept) = match seg.kind {
            SegmentKind::Zero => (0.0, 0.0),
            SegmentKind::Affine { slope, intercept } => (slope, intercept),
            SegmentKind::Saturated => (0.0, psi),
        };
        let mut consider = |u: f64| {
            if u <= 0.0 {
                return; // covered by the no-defer branch, without the wait charge
            }
            let val = eval_h(u);
            if val < best {
                best = val;
                best_u = u;
            }
        };
        consider(seg.x_lo);
        let curvature = 2.0 - p * slope;
        if curvature > 0.0 {
            let vertex = (x + (2.0 - p) * psi + p * intercept) / (2.0 * curvature);
            if vertex > seg.x_lo && vertex < seg.x_hi {
                consider(vertex);
            }
        }
        consider(seg.x_hi);
    }

    if no_defer <= best {
        (no_defer, 0.0)
    } else {
        (best, best_u)
    }
}

// ---------------------------------------------------------------------------
// Exact best response as a function
// ---------------------------------------------------------------------------

/// One candidate branch of the best response over a window of pending
/// levels: along the branch the deviation cost is the quadratic
/// `a x^2 + b x + c` and the chosen deviation is `u_slope * x + u_intercept`.
#[derive(Clone, Copy)]
struct ResponseArc {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
    c: f64,
    u_slope: f64,
    u_intercept: f64,
}

impl ResponseArc {
    fn value(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }

    fn action(&self, x: f64) -> f64 {
        self.u_slope * x + self.u_intercept
    }

    fn admits(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// Candidate branches of the deviation-cost minimization against `opponent`.
///
/// Within an opponent segment carrying the rule `alpha u + beta`, the cost of
/// deviating to `u` at pending level `x` splits as `g(u) + x (psi - u)` with
///
/// ```text
/// g(u) = (2 - p alpha) u^2 - ((2 - p) psi + p beta) u + psi^2 + d,
/// ```
///
/// so the per-segment candidates are the two endpoint deviations (cost affine
/// in `x`) and the interior stationary point
/// `u = (x + (2 - p) psi + p beta) / (2 (2 - p alpha))` (cost a concave
/// quadratic in `x`, valid exactly while the stationary point stays inside
/// the segment). Serving everything contributes the global line
/// `psi (psi + x)`, always at index 0.
fn response_arcs(opponent: &PiecewisePolicy, params: &ModelParams) -> Vec<ResponseArc> {
    let (p, psi, d) = (params.p, params.psi, params.d);
    let mut arcs = vec![ResponseArc {
        lo: 0.0,
        hi: psi,
        a: 0.0,
        b: psi,
        c: psi * psi,
        u_slope: 0.0,
        u_intercept: 0.0,
    }];
    for seg in opponent.segments() {
        let (alpha, beta) = match seg.kind {
            SegmentKind::Zero => (0.0, 0.0),
            SegmentKind::Affine { slope, intercept } => (slope, intercept),
            SegmentKind::Saturated => (0.0, psi),
        };
        let kappa = 2.0 - p * alpha;
        let lambda = -(2.0 - p) * psi - p * beta;
        for u in [seg.x_lo, seg.x_hi] {
            if u > 0.0 {
                arcs.push(ResponseArc {
                    lo: 0.0,
                    hi: psi,
                    a: 0.0,
                    b: psi - u,
                    c: (kappa * u + lambda) * u + psi * psi + d,
                    u_slope: 0.0,
                    u_intercept: u,
                });
            }
        }
        let lo = (2.0 * kappa * seg.x_lo + lambda).max(0.0);
        let hi = (2.0 * kappa * seg.x_hi + lambda).min(psi);
        if lo < hi {
            arcs.push(ResponseArc {
                lo,
                hi,
                a: -0.25 / kappa,
                b: 0.5 * lambda / kappa + psi,
                c: -0.25 * lambda * lambda / kappa + psi * psi + d,
                u_slope: 0.5 / kappa,
                u_intercept: -0.5 * lambda / kappa,
            });
        }
    }
    arcs
}

/// Appends the real roots of `a x^2 + b x + c` to `out`, degrading to the
/// linear and constant cases when the leading coefficients vanish.
fn push_real_roots(a: f64, b: f64, c: f64, out: &mut Vec<f64>) {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return;
    }
    if a.abs() <= 1e-14 * scale {
        if b.abs() > 1e-14 * scale {
            out.push(-c / b);
        }
        return;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    out.push(q / a);
    if q != 0.0 {
        out.push(c / q);
    }
}

/// Exact best response against `opponent`, as a policy rather than a table.
///
/// Solves the same minimization as [`best_response`], but in closed form
/// over the whole domain: every candidate branch costs a quadratic in the
/// pending level, so the winning branch can only change at pairwise tie
/// roots or where an interior stationary point crosses into its segment,
/// and between such switch points the chosen deviation is affine. The
/// returned policy is the exact piecewise function those winners trace out.
///
/// Ties keep the smallest deviation, so serving everything wins exact ties,
/// matching the tabulated responder. Where the opponent policy jumps, the
/// cheaper side's limiting cost stands in for an infimum that no single
/// deviation attains; such points only matter at opponent discontinuities
/// and never decide the winner over an interval of positive width.
///
/// The opponent's affine pieces must keep their raw values inside
/// `[0, psi]` on their own domains (every constructor in this crate does);
/// otherwise domain clamping would bend the quadratic structure that this
/// construction relies on.
pub fn best_response_policy(
    opponent: &PiecewisePolicy,
    params: &ModelParams,
) -> Result<PiecewisePolicy, NashError> {
    let psi = params.psi;
    if (opponent.psi() - psi).abs() > THRESHOLD_TOL {
        return Err(NashError::DomainMismatch { policy_psi: opponent.psi(), params_psi: psi });
    }
    let arcs = response_arcs(opponent, params);

    // Candidate switch points: window edges plus every pairwise tie.
    let mut cuts = vec![0.0, psi];
    for arc in &arcs {
        cuts.push(arc.lo);
        cuts.push(arc.hi);
    }
    let mut roots = Vec::new();
    for i in 0..arcs.len() {
        for j in i + 1..arcs.len() {
            push_real_roots(
                arcs[i].a - arcs[j].a,
                arcs[i].b - arcs[j].b,
                arcs[i].c - arcs[j].c,
                &mut roots,
            );
        }
    }
    cuts.extend(roots.into_iter().filter(|x| x.is_finite() && *x > 0.0 && *x < psi));
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("switch points are finite"));
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + psi));
    *cuts.first_mut().expect("0 and psi are always present") = 0.0;
    *cuts.last_mut().expect("0 and psi are always present") = psi;

    // Between consecutive cuts the winner is fixed; identify it mid-interval
    // and merge runs won by the same branch.
    let mut segments: Vec<Segment> = Vec::new();
    let mut last_winner = usize::MAX;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if !(hi > lo) {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let mut winner = 0;
        let mut best_value = f64::INFINITY;
        let mut best_action = f64::INFINITY;
        for (idx, arc) in arcs.iter().enumerate() {
            if !arc.admits(mid) {
                continue;
            }
            let value = arc.value(mid);
            let action = arc.action(mid);
            if value < best_value || (value == best_value && action < best_action) {
                winner = idx;
                best_value = value;
                best_action = action;
            }
        }
        if winner == last_winner {
            segments.last_mut().expect("a segment was emitted for this winner").x_hi = hi;
            continue;
        }
        let kind = if winner == 0 {
            SegmentKind::Zero
        } else {
            let arc = &arcs[winner];
            SegmentKind::Affine { slope: arc.u_slope, intercept: arc.u_intercept }
        };
        segments.push(Segment { x_lo: lo, x_hi: hi, kind });
        last_winner = winner;
    }
    PiecewisePolicy::new(psi, segments).map_err(NashError::Policy)
}
