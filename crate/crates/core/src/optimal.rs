//! Socially optimal deferral.
//!
//! The planner minimizes long-run average cost. Because every request must
//! finish within two slots, the pending work carried into a slot is at most
//! one deferred remainder, and the average-cost problem reduces to a
//! shortest-path recursion between empty slots. Its continuation cost after
//! deferring `u` is always of the form `a u^2 + b u + c`, where the
//! coefficient pairs `(a_k, b_k)` obey a scalar recursion:
//!
//! ```text
//! a_0 = 1,        a_k = 1 - p / (1 + a_{k-1})
//! b_0 = 2 p psi,  b_k = p (2 a_{k-1} psi + b_{k-1}) / (1 + a_{k-1})
//! ```
//!
//! Both sequences decrease monotonically to closed-form limits
//! `a_inf = sqrt(1 - p)` and `b_inf = 2 p psi / (1 + sqrt(1 - p))`, tied
//! together by the identity `a_inf psi + b_inf / 2 = psi`.
//!
//! Against a quadratic continuation the optimal deferral has a three-case
//! closed form ([`stage_deferral`]), and in the limit the stationary optimal
//! policy is either affine and strictly positive everywhere or defers
//! nothing at pending level zero — a sharp dichotomy decided by comparing
//! `psi` with `sqrt(d (1 + a_inf)) / a_inf`.

use crate::model::{GeneralDemandTable, ModelError, ModelParams, SequencePair, THRESHOLD_TOL};
use crate::policy::PiecewisePolicy;
use std::fmt;

/// Marker index for limiting coefficient pairs (`k -> infinity`).
pub const LIMIT_INDEX: i32 = i32::MAX;

/// Errors from the stage-cost analysis.
#[derive(Debug, Clone, PartialEq)]
pub enum StageError {
    /// Continuation coefficients must be nonnegative.
    NegativeCoefficient { a: f64, b: f64 },
    /// The defer/no-defer branch offset must be nonnegative.
    NegativeOffset { offset: f64 },
    /// Pending value outside `[0, psi]`.
    PendingOutOfRange { x: f64, psi: f64 },
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StageError::NegativeCoefficient { a, b } => {
                write!(f, "continuation coefficients (a = {a}, b = {b}) must be nonnegative")
            }
            StageError::NegativeOffset { offset } => {
                write!(f, "branch offset {offset} must be nonnegative")
            }
            StageError::PendingOutOfRange { x, psi } => {
                write!(f, "pending value {x} lies outside [0, {psi}]")
            }
        }
    }
}

impl std::error::Error for StageError {}

// ---------------------------------------------------------------------------
// Coefficient recursion and limits
// ---------------------------------------------------------------------------

/// `k`-th pair of continuation-cost coefficients, starting from
/// `(a_0, b_0) = (1, 2 p psi)`.
#[must_use]
pub fn continuation_coefficients(params: &ModelParams, k: u32) -> SequencePair {
    let (p, psi) = (params.p, params.psi);
    let mut a = 1.0;
    let mut b = 2.0 * p * psi;
    for _ in 0..k {
        let denom = 1.0 + a;
        let next_a = 1.0 - p / denom;
        let next_b = p * (2.0 * a * psi + b) / denom;
        a = next_a;
        b = next_b;
    }
    SequencePair { index: k as i32, a, b }
}

/// Closed-form limits of the coefficient recursion:
/// `a_inf = sqrt(1 - p)`, `b_inf = 2 p psi / (1 + sqrt(1 - p))`.
///
/// These satisfy `a_inf psi + b_inf / 2 = psi` exactly. The recursion itself
/// is kept around (see [`continuation_coefficients`]) so tests can confirm
/// convergence rather than trusting the algebra.
#[must_use]
pub fn continuation_limits(params: &ModelParams) -> SequencePair {
    let root = (1.0 - params.p).sqrt();
    SequencePair {
        index: LIMIT_INDEX,
        a: root,
        b: 2.0 * params.p * params.psi / (1.0 + root),
    }
}

// ---------------------------------------------------------------------------
// Single-stage analysis
// ---------------------------------------------------------------------------

/// Pending level at which deferring starts to beat serving everything, when
/// the continuation cost is `a u^2 + b u` and splitting costs `d`:
/// `sqrt(d (1 + a)) + b / 2 - psi`.
///
/// Negative values mean deferring already pays at an empty queue.
pub fn deferral_threshold(a: f64, b: f64, params: &ModelParams) -> Result<f64, StageError> {
    deferral_threshold_with_offset(a, b, params.d, params)
}

/// [`deferral_threshold`] with an explicit defer/no-defer branch offset in
/// place of `d`. The offset is the full constant-term gap between the two
/// branches; it equals `d` when both branches share the same continuation
/// constant, which is the convention everywhere in this module.
pub fn deferral_threshold_with_offset(
    a: f64,
    b: f64,
    offset: f64,
    params: &ModelParams,
) -> Result<f64, StageError> {
    if a < 0.0 || b < 0.0 {
        return Err(StageError::NegativeCoefficient { a, b });
    }
    if offset < 0.0 {
        return Err(StageError::NegativeOffset { offset });
    }
    Ok((offset * (1.0 + a)).sqrt() + 0.5 * b - params.psi)
}

/// Minimizer over `u` in `[0, psi]` of the one-slot objective
///
/// ```text
/// (psi + x - u)^2 + d + a u^2 + b u
/// ```
///
/// compared against the no-defer branch `(psi + x)^2`, which wins ties.
/// Three cases:
///
/// * if `a psi + b / 2 >= min(psi, threshold)`, the minimizer is 0 up to the
///   threshold and the clamped vertex `(x + psi - b / 2) / (1 + a)` above it;
/// * otherwise the choice is bang-bang: 0 up to
///   `((a - 1) psi + b) / 2 + d / (2 psi)`, then the full demand `psi`.
pub fn stage_deferral(a: f64, b: f64, x: f64, params: &ModelParams) -> Result<f64, StageError> {
    stage_deferral_with_offset(a, b, x, params.d, params)
}

/// [`stage_deferral`] with an explicit branch offset in place of `d` (see
/// [`deferral_threshold_with_offset`]).
pub fn stage_deferral_with_offset(
    a: f64,
    b: f64,
    x: f64,
    offset: f64,
    params: &ModelParams,
) -> Result<f64, StageError> {
    let psi = params.psi;
    if !(x >= -THRESHOLD_TOL && x <= psi + THRESHOLD_TOL) {
        return Err(StageError::PendingOutOfRange { x, psi });
    }
    let x = x.clamp(0.0, psi);
    let threshold = deferral_threshold_with_offset(a, b, offset, params)?;
    let vertex_saturates_at = a * psi + 0.5 * b;
    if vertex_saturates_at >= psi.min(threshold) {
        if x <= threshold {
            Ok(0.0)
        } else {
            Ok(((x + psi - 0.5 * b) / (1.0 + a)).clamp(0.0, psi))
        }
    } else {
        // The vertex saturates before deferring pays at all, so the only
        // contenders are the endpoints: defer nothing or everything.
        let switch = 0.5 * ((a - 1.0) * psi + b) + offset / (2.0 * psi);
        if x <= switch {
            Ok(0.0)
        } else {
            Ok(psi)
        }
    }
}

// ---------------------------------------------------------------------------
// Stationary policies
// ---------------------------------------------------------------------------

/// The two stationary regimes of the optimal policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Regime {
    /// Deferral is strictly positive at every pending level; the policy is a
    /// single affine piece.
    DeferEverywhere,
    /// Nothing is deferred at an empty queue, so nothing is ever deferred on
    /// the path that starts empty.
    NoDeferOnPath,
}

/// The stationary optimal policy together with how much of it is backed by
/// closed forms.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct OptimalPolicy {
    pub regime: Regime,
    /// In [`Regime::DeferEverywhere`] this is exact at every pending level.
    /// In [`Regime::NoDeferOnPath`] it is the all-zero policy: exact at every
    /// level the process actually visits (the queue starts empty and the
    /// zero action keeps it empty), and exact off path up to
    /// `zero_certified_through`.
    pub policy: PiecewisePolicy,
    /// Pending level up to which the zero action is certified analytically
    /// (`None` in the defer regime, where nothing is zero).
    pub zero_certified_through: Option<f64>,
    /// True when levels above `zero_certified_through` have no closed form;
    /// the grid oracle is the reference for those off-path levels.
    pub tail_is_numeric: bool,
    /// Limiting continuation coefficients.
    pub limits: SequencePair,
    /// Demand level separating the regimes: deferral happens everywhere
    /// exactly when `psi` strictly exceeds this (`sqrt(d (1 + a)) / a` at the
    /// limiting `a`).
    pub regime_threshold: f64,
}

/// True when the demand is large enough that the stationary optimum defers
/// at every pending level. Written multiplied out (`psi a > sqrt(d (1 + a))`)
/// so that the degenerate `a = 0` needs no special case; equality lands in
/// the no-defer regime.
#[must_use]
fn defers_everywhere(a: f64, params: &ModelParams) -> bool {
    params.psi * a > (params.d * (1.0 + a)).sqrt()
}

/// Stationary optimal policy for a single-demand system.
#[must_use]
pub fn optimal_policy(params: &ModelParams) -> OptimalPolicy {
    let limits = continuation_limits(params);
    let (a, b) = (limits.a, limits.b);
    let psi = params.psi;
    let regime_threshold = (params.d * (1.0 + a)).sqrt() / a;

    if defers_everywhere(a, params) {
        let slope = 1.0 / (1.0 + a);
        let intercept = (psi - 0.5 * b) / (1.0 + a);
        let policy = PiecewisePolicy::affine(psi, slope, intercept)
            .expect("affine optimal policy maps [0, psi] into itself");
        return OptimalPolicy {
            regime: Regime::DeferEverywhere,
            policy,
            zero_certified_through: None,
            tail_is_numeric: false,
            limits,
            regime_threshold,
        };
    }

    // No-defer regime. When the demand is small outright
    // (psi < sqrt(2 d) / (2 - p)) the zero policy is exact everywhere;
    // otherwise the zero action is certified only up to the limiting
    // threshold and the off-path tail is left to the grid oracle.
    let small_demand = psi < (2.0 * params.d).sqrt() / (2.0 - params.p);
    let theta_inf = deferral_threshold(a, b, params)
        .expect("limiting coefficients are nonnegative");
    let zero_through = if small_demand { psi } else { theta_inf.min(psi) };
    OptimalPolicy {
        regime: Regime::NoDeferOnPath,
        policy: PiecewisePolicy::zero(psi),
        zero_certified_through: Some(zero_through),
        tail_is_numeric: zero_through < psi,
        limits,
        regime_threshold,
    }
}

/// Closed-form stand-in for the optimal policy, exact in both extreme
/// regimes and conservative in between:
///
/// * all-zero when `psi < sqrt(2 d) / (2 - p)`;
/// * the limiting affine rule when `psi` exceeds the regime threshold;
/// * otherwise zero up to the limiting threshold, affine above it.
///
/// It never defers less than the optimal policy, which makes it a valid
/// upper envelope for structural comparisons.
#[must_use]
pub fn approximate_policy(params: &ModelParams) -> PiecewisePolicy {
    let limits = continuation_limits(params);
    let (a, b) = (limits.a, limits.b);
    let psi = params.psi;
    let slope = 1.0 / (1.0 + a);
    let intercept = (psi - 0.5 * b) / (1.0 + a);

    if defers_everywhere(a, params) {
        return PiecewisePolicy::affine(psi, slope, intercept)
            .expect("affine policy maps [0, psi] into itself");
    }
    if psi < (2.0 * params.d).sqrt() / (2.0 - params.p) {
        return PiecewisePolicy::zero(psi);
    }
    let theta_inf = deferral_threshold(a, b, params)
        .expect("limiting coefficients are nonnegative");
    PiecewisePolicy::zero_then_affine(psi, theta_inf, slope, intercept)
        .expect("threshold policy maps [0, psi] into itself")
}

/// Per-class scheduling rule for a heterogeneous demand mix.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DemandClassPolicy {
    pub demand: f64,
    pub probability: f64,
    pub policy: PiecewisePolicy,
}

/// Heuristic for heterogeneous demands: collapse the mix to its aggregate
/// single-demand system (rate `sum p_i`, demand `(sum p_i psi_i) / sum p_i`),
/// decide the regime there once, and give every class either the aggregate
/// affine rule capped into `[0, psi_i]` or the zero rule. The regime is a
/// property of the mix, never of an individual class.
pub fn general_demand_policies(
    table: &GeneralDemandTable,
    d: f64,
) -> Result<Vec<DemandClassPolicy>, ModelError> {
    let aggregate = table.aggregate_params(d)?;
    let limits = continuation_limits(&aggregate);
    let (a, b) = (limits.a, limits.b);
    let defer = defers_everywhere(a, &aggregate);
    let slope = 1.0 / (1.0 + a);

    let mut policies = Vec::with_capacity(table.classes().len());
    for class in table.classes() {
        let psi_i = class.demand;
        let policy = if defer {
            let intercept = (psi_i - 0.5 * b) / (1.0 + a);
            PiecewisePolicy::capped_affine(psi_i, slope, intercept)
                .map_err(|_| ModelError::Demand { value: psi_i })?
        } else {
            PiecewisePolicy::zero(psi_i)
        };
        policies.push(DemandClassPolicy {
            demand: psi_i,
            probability: class.probability,
            policy,
        });
    }
    Ok(policies)
}
