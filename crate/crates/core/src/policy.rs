//! Piecewise scheduling policies.
//!
//! A policy maps the pending service `x` (work deferred into the current slot
//! by the previous request) to the amount `u` of the newly arrived demand
//! that is deferred to the next slot. All policies arising in this model are
//! piecewise affine on `[0, psi]` with values in `[0, psi]`: a zero piece
//! (serve everything now), affine pieces with slope in `(0, 1)`, and a
//! saturated piece (defer the full demand).

use crate::model::THRESHOLD_TOL;
use std::fmt;

/// Shape of one policy segment.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum SegmentKind {
    /// Defer nothing.
    Zero,
    /// Defer `slope * x + intercept`, clamped to `[0, psi]`.
    Affine { slope: f64, intercept: f64 },
    /// Defer the full demand `psi`.
    Saturated,
}

/// A policy segment covering pending values in `(x_lo, x_hi]` (the left
/// boundary of the first segment is closed, so the pieces partition
/// `[0, psi]`; a shared boundary point belongs to the left piece).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Segment {
    pub x_lo: f64,
    pub x_hi: f64,
    pub kind: SegmentKind,
}

/// Errors from policy construction and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyError {
    /// No segments supplied.
    Empty,
    /// Segment endpoints out of order.
    BadSegmentOrder { index: usize, x_lo: f64, x_hi: f64 },
    /// Segments leave a gap or overlap.
    NotContiguous { index: usize, expected_lo: f64, found_lo: f64 },
    /// Segment list does not start at 0 or end at psi.
    BadCover { x_lo: f64, x_hi: f64, psi: f64 },
    /// An affine segment would produce values outside `[0, psi]` by more than
    /// the threshold tolerance, or has negative slope.
    BadAffine { index: usize, slope: f64, intercept: f64 },
    /// Evaluation point outside the policy domain.
    OutOfDomain { x: f64, psi: f64 },
}

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyError::Empty => write!(f, "policy needs at least one segment"),
            PolicyError::BadSegmentOrder { index, x_lo, x_hi } => {
                write!(f, "segment {index} has x_lo {x_lo} >= x_hi {x_hi}")
            }
            PolicyError::NotContiguous { index, expected_lo, found_lo } => {
                write!(
                    f,
                    "segment {index} starts at {found_lo} but the previous one ends at {expected_lo}"
                )
            }
            PolicyError::BadCover { x_lo, x_hi, psi } => {
                write!(f, "segments cover [{x_lo}, {x_hi}] instead of [0, {psi}]")
            }
            PolicyError::BadAffine { index, slope, intercept } => {
                write!(
                    f,
                    "affine segment {index} (slope {slope}, intercept {intercept}) leaves [0, psi] or decreases"
                )
            }
            PolicyError::OutOfDomain { x, psi } => {
                write!(f, "pending value {x} lies outside the policy domain [0, {psi}]")
            }
        }
    }
}

impl std::error::Error for PolicyError {}

/// A deferral policy given by contiguous segments partitioning `[0, psi]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PiecewisePolicy {
    psi: f64,
    segments: Vec<Segment>,
}

impl PiecewisePolicy {
    /// Builds a policy and checks the segment invariants: contiguous cover of
    /// `[0, psi]`, nonnegative slopes, and segment values inside `[0, psi]`
    /// up to the threshold tolerance (affine pieces are monotone, so endpoint
    /// checks suffice).
    pub fn new(psi: f64, segments: Vec<Segment>) -> Result<Self, PolicyError> {
        if segments.is_empty() {
            return Err(PolicyError::Empty);
        }
        for (i, seg) in segments.iter().enumerate() {
            if !(seg.x_lo < seg.x_hi) {
                return Err(PolicyError::BadSegmentOrder { index: i, x_lo: seg.x_lo, x_hi: seg.x_hi });
            }
            if i > 0 {
                let expected = segments[i - 1].x_hi;
                if (seg.x_lo - expected).abs() > THRESHOLD_TOL {
                    return Err(PolicyError::NotContiguous {
                        index: i,
                        expected_lo: expected,
                        found_lo: seg.x_lo,
                    });
                }
            }
            if let SegmentKind::Affine { slope, intercept } = seg.kind {
                let lo_val = slope * seg.x_lo + intercept;
                let hi_val = slope * seg.x_hi + intercept;
                if slope < 0.0 || lo_val < -THRESHOLD_TOL || hi_val > psi + THRESHOLD_TOL {
                    return Err(PolicyError::BadAffine { index: i, slope, intercept });
                }
            }
        }
        let x_lo = segments[0].x_lo;
        let x_hi = segments[segments.len() - 1].x_hi;
        if x_lo.abs() > THRESHOLD_TOL || (x_hi - psi).abs() > THRESHOLD_TOL {
            return Err(PolicyError::BadCover { x_lo, x_hi, psi });
        }
        Ok(PiecewisePolicy { psi, segments })
    }

    /// The all-zero policy: serve every request in its arrival slot.
    #[must_use]
    pub fn zero(psi: f64) -> Self {
        PiecewisePolicy {
            psi,
            segments: vec![Segment { x_lo: 0.0, x_hi: psi, kind: SegmentKind::Zero }],
        }
    }

    /// A single affine piece over the whole domain.
    pub fn affine(psi: f64, slope: f64, intercept: f64) -> Result<Self, PolicyError> {
        PiecewisePolicy::new(
            psi,
            vec![Segment { x_lo: 0.0, x_hi: psi, kind: SegmentKind::Affine { slope, intercept } }],
        )
    }

    /// The affine rule `slope * x + intercept` hard-clamped into `[0, psi]`,
    /// materialized as explicit segments: a zero piece while the rule is
    /// negative, the affine piece proper, and a saturated piece once the rule
    /// exceeds `psi`. Requires a strictly positive slope.
    pub fn capped_affine(psi: f64, slope: f64, intercept: f64) -> Result<Self, PolicyError> {
        if !(slope > 0.0) {
            return Err(PolicyError::BadAffine { index: 0, slope, intercept });
        }
        let crosses_zero = -intercept / slope;
        let saturates = (psi - intercept) / slope;
        let mut segments = Vec::new();
        let lo = crosses_zero.clamp(0.0, psi);
        let hi = saturates.clamp(0.0, psi);
        if lo > 0.0 {
            segments.push(Segment { x_lo: 0.0, x_hi: lo, kind: SegmentKind::Zero });
        }
        if hi > lo {
            segments.push(Segment { x_lo: lo, x_hi: hi, kind: SegmentKind::Affine { slope, intercept } });
        }
        if hi < psi {
            segments.push(Segment { x_lo: hi, x_hi: psi, kind: SegmentKind::Saturated });
        }
        PiecewisePolicy::new(psi, segments)
    }

    /// Zero up to `threshold`, then affine. A threshold at or below 0 yields
    /// the pure affine policy; at or above `psi`, the all-zero policy.
    pub fn zero_then_affine(
        psi: f64,
        threshold: f64,
        slope: f64,
        intercept: f64,
    ) -> Result<Self, PolicyError> {
        if threshold <= 0.0 {
            return PiecewisePolicy::affine(psi, slope, intercept);
        }
        if threshold >= psi {
            return Ok(PiecewisePolicy::zero(psi));
        }
        PiecewisePolicy::new(
            psi,
            vec![
                Segment { x_lo: 0.0, x_hi: threshold, kind: SegmentKind::Zero },
                Segment { x_lo: threshold, x_hi: psi, kind: SegmentKind::Affine { slope, intercept } },
            ],
        )
    }

    #[must_use]
    pub fn psi(&self) -> f64 {
        self.psi
    }

    #[must_use]
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Deferred amount for pending value `x`.
    ///
    /// A boundary point shared by two segments evaluates under the left one,
    /// so a policy that is zero up to a threshold still defers nothing at the
    /// threshold itself. Inputs within the threshold tolerance outside
    /// `[0, psi]` are clamped; anything further out is a domain error.
    pub fn eval(&self, x: f64) -> Result<f64, PolicyError> {
        if !(x >= -THRESHOLD_TOL && x <= self.psi + THRESHOLD_TOL) {
            return Err(PolicyError::OutOfDomain { x, psi: self.psi });
        }
        let x = x.clamp(0.0, self.psi);
        let seg = self
            .segments
            .iter()
            .find(|seg| x <= seg.x_hi)
            .unwrap_or(&self.segments[self.segments.len() - 1]);
        let raw = match seg.kind {
            SegmentKind::Zero => 0.0,
            SegmentKind::Affine { slope, intercept } => slope * x + intercept,
            SegmentKind::Saturated => self.psi,
        };
        Ok(raw.clamp(0.0, self.psi))
    }
}

/// Anything the simulator can drive: a rule assigning a deferral in
/// `[0, psi]` to each pending value in `[0, psi]`.
///
/// Implementations are expected to honor the range contract; the simulator
/// verifies every returned action and aborts with a diagnostic when an
/// implementation strays.
pub trait DeferralPolicy {
    /// Demand size; also the right end of the policy domain.
    fn psi(&self) -> f64;
    /// Deferred amount for pending value `x` (callers guarantee
    /// `0 <= x <= psi`).
    fn deferral(&self, x: f64) -> f64;
}

impl DeferralPolicy for PiecewisePolicy {
    fn psi(&self) -> f64 {
        self.psi
    }

    fn deferral(&self, x: f64) -> f64 {
        self.eval(x).expect("pending value within the policy domain")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_gapped_and_overlapping_segments() {
        let gap = PiecewisePolicy::new(
            2.0,
            vec![
                Segment { x_lo: 0.0, x_hi: 0.5, kind: SegmentKind::Zero },
                Segment { x_lo: 0.7, x_hi: 2.0, kind: SegmentKind::Saturated },
            ],
        );
        assert!(matches!(gap, Err(PolicyError::NotContiguous { index: 1, .. })));

        let overlap = PiecewisePolicy::new(
            2.0,
            vec![
                Segment { x_lo: 0.0, x_hi: 1.0, kind: SegmentKind::Zero },
                Segment { x_lo: 0.5, x_hi: 2.0, kind: SegmentKind::Saturated },
            ],
        );
        assert!(matches!(overlap, Err(PolicyError::NotContiguous { index: 1, .. })));
    }

    #[test]
    fn rejects_bad_cover_and_empty() {
        assert!(matches!(PiecewisePolicy::new(2.0, vec![]), Err(PolicyError::Empty)));
        let short = PiecewisePolicy::new(
            2.0,
            vec![Segment { x_lo: 0.0, x_hi: 1.5, kind: SegmentKind::Zero }],
        );
        assert!(matches!(short, Err(PolicyError::BadCover { .. })));
    }

    #[test]
    fn rejects_affine_pieces_leaving_range() {
        // Slope 1 with intercept 1.5 reaches 3.5 > psi at x_hi = 2.
        let out = PiecewisePolicy::affine(2.0, 1.0, 1.5);
        assert!(matches!(out, Err(PolicyError::BadAffine { .. })));
        let negative_slope = PiecewisePolicy::affine(2.0, -0.1, 1.0);
        assert!(matches!(negative_slope, Err(PolicyError::BadAffine { .. })));
    }

    #[test]
    fn boundary_point_belongs_to_left_segment() {
        let policy = PiecewisePolicy::zero_then_affine(2.0, 0.5, 0.5, 0.25).unwrap();
        // At the threshold itself nothing is deferred; just above it the
        // affine piece takes over.
        assert_eq!(policy.eval(0.5).unwrap(), 0.0);
        assert!(policy.eval(0.5 + 1e-6).unwrap() > 0.49);
    }

    #[test]
    fn eval_clamps_tolerance_noise_and_rejects_beyond() {
        let policy = PiecewisePolicy::zero(2.0);
        assert_eq!(policy.eval(-0.5e-9).unwrap(), 0.0);
        assert_eq!(policy.eval(2.0 + 0.5e-9).unwrap(), 0.0);
        assert!(matches!(policy.eval(-0.1), Err(PolicyError::OutOfDomain { .. })));
        assert!(matches!(policy.eval(2.1), Err(PolicyError::OutOfDomain { .. })));
    }

    #[test]
    fn threshold_constructor_degenerates_cleanly() {
        let all_affine = PiecewisePolicy::zero_then_affine(2.0, -0.3, 0.5, 0.25).unwrap();
        assert_eq!(all_affine.segments().len(), 1);
        assert!(all_affine.eval(0.0).unwrap() > 0.0);

        let all_zero = PiecewisePolicy::zero_then_affine(2.0, 2.5, 0.5, 0.25).unwrap();
        assert_eq!(all_zero.segments().len(), 1);
        assert_eq!(all_zero.eval(2.0).unwrap(), 0.0);
    }

    #[test]
    fn capped_affine_materializes_binding_caps_only() {
        // Rule 0.5 x + 0.25 on [0, 2]: never leaves [0, 2], single piece.
        let inside = PiecewisePolicy::capped_affine(2.0, 0.5, 0.25).unwrap();
        assert_eq!(inside.segments().len(), 1);

        // Rule 2 x - 0.5 crosses zero at 0.25 and hits psi = 1 at 0.75.
        let both = PiecewisePolicy::capped_affine(1.0, 2.0, -0.5).unwrap();
        assert_eq!(both.segments().len(), 3);
        assert_eq!(both.eval(0.2).unwrap(), 0.0);
        assert!((both.eval(0.5).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(both.eval(0.9).unwrap(), 1.0);

        // Rule far above the range is saturated outright.
        let sat = PiecewisePolicy::capped_affine(1.0, 0.5, 2.0).unwrap();
        assert_eq!(sat.segments().len(), 1);
        assert_eq!(sat.eval(0.0).unwrap(), 1.0);
    }

    #[test]
    fn saturated_segment_returns_full_demand() {
        let policy = PiecewisePolicy::new(
            2.0,
            vec![
                Segment { x_lo: 0.0, x_hi: 1.0, kind: SegmentKind::Zero },
                Segment { x_lo: 1.0, x_hi: 2.0, kind: SegmentKind::Saturated },
            ],
        )
        .unwrap();
        assert_eq!(policy.eval(1.0).unwrap(), 0.0);
        assert_eq!(policy.eval(1.5).unwrap(), 2.0);
    }
}
