//! Model parameters for the slotted deferral-scheduling system.
//!
//! Time is divided into unit slots. In each slot a request arrives with
//! probability `p` (Bernoulli, independent across slots) and brings a service
//! demand of `psi` units. Serving `s` units within one slot costs `s^2`
//! (congestion pricing), and every unit must be served no later than the slot
//! after its arrival. Splitting a request across its two admissible slots
//! incurs a fixed waiting cost `d` on top of the congestion charges.

use std::fmt;

/// Absolute tolerance used for threshold and boundary comparisons throughout
/// the crate. Quantities compared against thresholds are all O(psi) or O(d),
/// so a fixed absolute scale is appropriate.
pub const THRESHOLD_TOL: f64 = 1e-9;

/// Errors raised while validating model inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    /// Arrival probability outside the admissible range.
    ArrivalProbability { value: f64, allow_edges: bool },
    /// Demand must be strictly positive and finite.
    Demand { value: f64 },
    /// Waiting cost must be strictly positive and finite.
    WaitingCost { value: f64 },
    /// A demand table must contain at least one class.
    EmptyDemandTable,
    /// Demand classes must have pairwise distinct demands.
    DuplicateDemand { value: f64 },
    /// Per-class arrival probabilities must be positive and sum to at most 1.
    ClassProbability { value: f64 },
    /// Total arrival probability of a demand table exceeds 1.
    TotalProbability { value: f64 },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::ArrivalProbability { value, allow_edges } => {
                if *allow_edges {
                    write!(f, "arrival probability {value} is outside [0, 1]")
                } else {
                    write!(f, "arrival probability {value} is outside the open interval (0, 1)")
                }
            }
            ModelError::Demand { value } => {
                write!(f, "demand {value} must be a positive finite number")
            }
            ModelError::WaitingCost { value } => {
                write!(f, "waiting cost {value} must be a positive finite number")
            }
            ModelError::EmptyDemandTable => write!(f, "demand table has no classes"),
            ModelError::DuplicateDemand { value } => {
                write!(f, "demand table lists demand {value} more than once")
            }
            ModelError::ClassProbability { value } => {
                write!(f, "class arrival probability {value} must lie in (0, 1]")
            }
            ModelError::TotalProbability { value } => {
                write!(f, "total arrival probability {value} exceeds 1")
            }
        }
    }
}

impl std::error::Error for ModelError {}

/// Primitives of the single-demand model.
///
/// `new` enforces `0 < p < 1`, which every analytic result in this crate
/// assumes. The simulator also accepts the degenerate arrival rates `p = 0`
/// and `p = 1` (useful for limit studies); construct those parameter sets via
/// [`ModelParams::with_edge_arrival_rate`] and note that renewal statistics
/// are unavailable there.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ModelParams {
    /// Per-slot arrival probability.
    pub p: f64,
    /// Service demand brought by each request, in service units.
    pub psi: f64,
    /// Fixed waiting cost charged when a request is split across two slots.
    pub d: f64,
}

impl ModelParams {
    /// Validated constructor for the interior parameter range `0 < p < 1`.
    pub fn new(p: f64, psi: f64, d: f64) -> Result<Self, ModelError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(ModelError::ArrivalProbability { value: p, allow_edges: false });
        }
        Self::check_costs(psi, d)?;
        Ok(ModelParams { p, psi, d })
    }

    /// Constructor that additionally admits `p = 0` and `p = 1`.
    ///
    /// Only the simulator treats these edges as first-class inputs; the
    /// closed-form policies remain well defined there as limits.
    pub fn with_edge_arrival_rate(p: f64, psi: f64, d: f64) -> Result<Self, ModelError> {
        if !(p >= 0.0 && p <= 1.0) {
            return Err(ModelError::ArrivalProbability { value: p, allow_edges: true });
        }
        Self::check_costs(psi, d)?;
        Ok(ModelParams { p, psi, d })
    }

    fn check_costs(psi: f64, d: f64) -> Result<(), ModelError> {
        if !(psi.is_finite() && psi > 0.0) {
            return Err(ModelError::Demand { value: psi });
        }
        if !(d.is_finite() && d > 0.0) {
            return Err(ModelError::WaitingCost { value: d });
        }
        Ok(())
    }

    /// True when the arrival rate sits on an edge of `[0, 1]`, where cycle
    /// statistics (mean renewal length `1 / (p (1 - p))`) diverge.
    #[must_use]
    pub fn has_edge_arrival_rate(&self) -> bool {
        self.p == 0.0 || self.p == 1.0
    }
}

/// One demand class of a heterogeneous-demand system: requests of size
/// `demand` arrive with per-slot probability `probability`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DemandClass {
    pub demand: f64,
    pub probability: f64,
}

/// Arrival mix for the heterogeneous-demand extension: at most one request
/// arrives per slot, of class `i` with probability `p_i`.
///
/// The scheduling heuristic for this setting collapses the mix to an
/// aggregate single-demand system with arrival rate `sum p_i` and demand
/// equal to the arrival-weighted mean, then caps each class's deferral at its
/// own demand.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GeneralDemandTable {
    classes: Vec<DemandClass>,
}

impl GeneralDemandTable {
    /// Validates positivity, pairwise distinct demands, and total arrival
    /// probability in `(0, 1]`.
    pub fn new(classes: Vec<DemandClass>) -> Result<Self, ModelError> {
        if classes.is_empty() {
            return Err(ModelError::EmptyDemandTable);
        }
        let mut total = 0.0;
        for class in &classes {
            if !(class.demand.is_finite() && class.demand > 0.0) {
                return Err(ModelError::Demand { value: class.demand });
            }
            if !(class.probability > 0.0 && class.probability <= 1.0) {
                return Err(ModelError::ClassProbability { value: class.probability });
            }
            total += class.probability;
        }
        if total > 1.0 + THRESHOLD_TOL {
            return Err(ModelError::TotalProbability { value: total });
        }
        let mut sorted: Vec<f64> = classes.iter().map(|c| c.demand).collect();
        sorted.sort_by(|a, b| a.total_cmp(b));
        for pair in sorted.windows(2) {
            if pair[0] == pair[1] {
                return Err(ModelError::DuplicateDemand { value: pair[0] });
            }
        }
        Ok(GeneralDemandTable { classes })
    }

    #[must_use]
    pub fn classes(&self) -> &[DemandClass] {
        &self.classes
    }

    /// Total per-slot arrival probability `sum p_i`.
    #[must_use]
    pub fn total_arrival_probability(&self) -> f64 {
        self.classes.iter().map(|c| c.probability).sum()
    }

    /// Arrival-weighted mean demand `(sum p_i psi_i) / (sum p_i)`.
    #[must_use]
    pub fn aggregate_demand(&self) -> f64 {
        let p_bar = self.total_arrival_probability();
        self.classes.iter().map(|c| c.probability * c.demand).sum::<f64>() / p_bar
    }

    /// The aggregate single-demand system used by the heterogeneous
    /// heuristic. Fails only when `sum p_i = 1` exactly and `d` is invalid,
    /// both of which `new` has already screened, so the edge-tolerant
    /// constructor is used.
    pub fn aggregate_params(&self, d: f64) -> Result<ModelParams, ModelError> {
        ModelParams::with_edge_arrival_rate(
            self.total_arrival_probability().min(1.0),
            self.aggregate_demand(),
            d,
        )
    }
}

/// One element of the coefficient recursions that drive both the planner's
/// and the equilibrium analysis: at stage `index`, the relevant continuation
/// object is the quadratic `a u^2 + b u` (planner side) or the affine map
/// `a x + b` (equilibrium side).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SequencePair {
    /// Stage index. The planner recursion starts at 0, the equilibrium
    /// recursion at -1.
    pub index: i32,
    pub a: f64,
    pub b: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_edge_arrival_rates_in_strict_constructor() {
        assert!(matches!(
            ModelParams::new(0.0, 2.0, 1.0),
            Err(ModelError::ArrivalProbability { .. })
        ));
        assert!(matches!(
            ModelParams::new(1.0, 2.0, 1.0),
            Err(ModelError::ArrivalProbability { .. })
        ));
        assert!(ModelParams::new(0.5, 2.0, 1.0).is_ok());
    }

    #[test]
    fn edge_constructor_admits_and_flags_degenerate_rates() {
        let zero = ModelParams::with_edge_arrival_rate(0.0, 2.0, 1.0).unwrap();
        let one = ModelParams::with_edge_arrival_rate(1.0, 2.0, 1.0).unwrap();
        let mid = ModelParams::with_edge_arrival_rate(0.3, 2.0, 1.0).unwrap();
        assert!(zero.has_edge_arrival_rate());
        assert!(one.has_edge_arrival_rate());
        assert!(!mid.has_edge_arrival_rate());
        assert!(ModelParams::with_edge_arrival_rate(1.5, 2.0, 1.0).is_err());
        assert!(ModelParams::with_edge_arrival_rate(-0.1, 2.0, 1.0).is_err());
    }

    #[test]
    fn rejects_nonpositive_costs() {
        assert!(matches!(ModelParams::new(0.5, 0.0, 1.0), Err(ModelError::Demand { .. })));
        assert!(matches!(ModelParams::new(0.5, 2.0, 0.0), Err(ModelError::WaitingCost { .. })));
        assert!(matches!(
            ModelParams::new(0.5, f64::INFINITY, 1.0),
            Err(ModelError::Demand { .. })
        ));
        assert!(matches!(ModelParams::new(0.5, 2.0, f64::NAN), Err(ModelError::WaitingCost { .. })));
    }

    #[test]
    fn demand_table_validates_mix() {
        let table = GeneralDemandTable::new(vec![
            DemandClass { demand: 1.0, probability: 0.25 },
            DemandClass { demand: 3.0, probability: 0.25 },
        ])
        .unwrap();
        assert!((table.total_arrival_probability() - 0.5).abs() < 1e-15);
        // (0.25 * 1 + 0.25 * 3) / 0.5 = 2.
        assert!((table.aggregate_demand() - 2.0).abs() < 1e-15);

        assert!(matches!(GeneralDemandTable::new(vec![]), Err(ModelError::EmptyDemandTable)));
        assert!(matches!(
            GeneralDemandTable::new(vec![
                DemandClass { demand: 1.0, probability: 0.5 },
                DemandClass { demand: 1.0, probability: 0.25 },
            ]),
            Err(ModelError::DuplicateDemand { .. })
        ));
        assert!(matches!(
            GeneralDemandTable::new(vec![
                DemandClass { demand: 1.0, probability: 0.7 },
                DemandClass { demand: 2.0, probability: 0.7 },
            ]),
            Err(ModelError::TotalProbability { .. })
        ));
    }
}
