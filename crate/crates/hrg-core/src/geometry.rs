//! Hyperbolic distances, the adjacency predicate and band ball approximations.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{circ_dist, phi_inverse, BandPoint, DiscPoint, ModelParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("height {y} is outside [0, {cutoff}]")]
    HeightOutOfRange { y: f64, cutoff: f64 },
    #[error("expected the first point to be at least as high as the second ({y1} < {y2})")]
    Unordered { y1: f64, y2: f64 },
    #[error("heights {y1} + {y2} reach the radius {radius}; the critical angle is saturated")]
    Saturated { y1: f64, y2: f64, radius: f64 },
}

/// Hyperbolic distance in the native representation.
pub fn hyp_dist(p1: &DiscPoint, p2: &DiscPoint) -> f64 {
    let s = (0.5 * (p1.theta - p2.theta)).sin();
    let c = (p1.r - p2.r).cosh() + 2.0 * p1.r.sinh() * p2.r.sinh() * s * s;
    c.max(1.0).acosh()
}

/// Per-point quantities reused by every adjacency test.
#[derive(Debug, Clone, Copy)]
pub struct Prepared {
    pub r: f64,
    pub theta: f64,
    sinh_r: f64,
    exp_r: f64,
    exp_neg_r: f64,
}

impl Prepared {
    pub fn new(p: &DiscPoint) -> Self {
        let exp_r = p.r.exp();
        Self {
            r: p.r,
            theta: p.theta,
            sinh_r: p.r.sinh(),
            exp_r,
            exp_neg_r: 1.0 / exp_r,
        }
    }
}

/// Radius-dependent constants of the adjacency test.
#[derive(Debug, Clone, Copy)]
pub struct EdgeRule {
    radius: f64,
    cosh_radius: f64,
}

impl EdgeRule {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            radius: params.radius(),
            cosh_radius: params.radius().cosh(),
        }
    }

    /// `cosh R - cosh(r1 - r2)`, halved.
    #[inline]
    fn half_gap(&self, a: &Prepared, b: &Prepared) -> f64 {
        let cosh_d = 0.5 * (a.exp_r * b.exp_neg_r + a.exp_neg_r * b.exp_r);
        0.5 * (self.cosh_radius - cosh_d)
    }

    /// True when the hyperbolic distance is at most `R`.
    ///
    /// Written as `sin^2(dtheta/2) <= sin^2(theta_R/2)` so that no inverse
    /// trigonometric call is needed per pair.
    #[inline]
    pub fn adjacent(&self, a: &Prepared, b: &Prepared) -> bool {
        if a.r + b.r <= self.radius {
            return true;
        }
        let s = (0.5 * (a.theta - b.theta)).sin();
        a.sinh_r * b.sinh_r * s * s <= self.half_gap(a, b)
    }

    /// Largest relative angle at which the two radii are still adjacent.
    pub fn critical_angle(&self, a: &Prepared, b: &Prepared) -> f64 {
        if a.r + b.r <= self.radius || a.sinh_r * b.sinh_r == 0.0 {
            return PI;
        }
        let q = self.half_gap(a, b) / (a.sinh_r * b.sinh_r);
        2.0 * q.max(0.0).sqrt().min(1.0).asin()
    }
}

/// Critical angle `theta_R(r1, r2)`: the largest relative angle at distance `<= R`.
pub fn theta_r(r1: f64, r2: f64, params: &ModelParams) -> f64 {
    let rule = EdgeRule::new(params);
    rule.critical_angle(
        &Prepared::new(&DiscPoint::new(r1, 0.0)),
        &Prepared::new(&DiscPoint::new(r2, 0.0)),
    )
}

/// Adjacency in the disc model (closed: distance exactly `R` counts).
pub fn edge_test(p1: &DiscPoint, p2: &DiscPoint, params: &ModelParams) -> bool {
    EdgeRule::new(params).adjacent(&Prepared::new(p1), &Prepared::new(p2))
}

/// Half-width of the band window in which two heights are adjacent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalWidth {
    pub value: f64,
    /// The heights sum to at least `R`, so every angle is adjacent.
    pub saturated: bool,
}

/// `e^{R/2} theta_R(R - y1, R - y2) / 2`.
pub fn delta(y1: f64, y2: f64, params: &ModelParams) -> CriticalWidth {
    let big_r = params.radius();
    CriticalWidth {
        value: 0.5 * (big_r / 2.0).exp() * theta_r(big_r - y1, big_r - y2, params),
        saturated: y1 + y2 >= big_r,
    }
}

/// Relative deviation of the exact window from `e^{(y1+y2)/2}`.
pub fn lambda_n(y1: f64, y2: f64, params: &ModelParams) -> Result<f64, GeometryError> {
    let w = delta(y1, y2, params);
    if w.saturated {
        return Err(GeometryError::Saturated {
            y1,
            y2,
            radius: params.radius(),
        });
    }
    Ok(w.value * (-(y1 + y2) / 2.0).exp() - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BallKind {
    /// Window shrunk by `1 - eps`, capped below `R - C`.
    Lower,
    /// Window widened by `1 + eps`, plus the full strip above the cap.
    Upper,
}

impl BallKind {
    pub fn scale(self, params: &ModelParams) -> f64 {
        match self {
            BallKind::Lower => 1.0 - params.slack(),
            BallKind::Upper => 1.0 + params.slack(),
        }
    }
}

/// Inner or outer approximation of the band image of a hyperbolic ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallApprox {
    pub center: BandPoint,
    pub kind: BallKind,
    /// Height where the window part stops, `R - y(center) - C` by default.
    pub height_cut: f64,
}

impl BallApprox {
    pub fn around(center: BandPoint, kind: BallKind, params: &ModelParams) -> Self {
        Self {
            center,
            kind,
            height_cut: params.radius() - center.y - params.slack_height(),
        }
    }
}

pub fn ball_contains(b: &BallApprox, q: &BandPoint, params: &ModelParams) -> bool {
    let a = b.kind.scale(params);
    let in_window =
        circ_dist(q.x, b.center.x, params) < a * (0.5 * (q.y + b.center.y)).exp();
    match b.kind {
        BallKind::Lower => q.y < b.height_cut && in_window,
        BallKind::Upper => in_window || (q.y > b.height_cut && q.y <= params.radius()),
    }
}

fn check_height(y: f64, params: &ModelParams) -> Result<(), GeometryError> {
    if !(0.0..=params.cutoff_height()).contains(&y) {
        return Err(GeometryError::HeightOutOfRange {
            y,
            cutoff: params.cutoff_height(),
        });
    }
    Ok(())
}

/// Membership of `q` in the part of the ball around `p` that lies no higher than `p`.
pub fn truncated_ball_contains(
    p: &BandPoint,
    q: &BandPoint,
    params: &ModelParams,
) -> Result<bool, GeometryError> {
    check_height(p.y, params)?;
    if q.y > p.y {
        return Ok(false);
    }
    Ok(edge_test(
        &phi_inverse(p, params),
        &phi_inverse(q, params),
        params,
    ))
}

/// Sufficient test that the capped windows of the two approximate balls do not meet.
pub fn balls_disjoint(p1: &BandPoint, p2: &BandPoint, kind: BallKind, params: &ModelParams) -> bool {
    let a = kind.scale(params);
    let h = params.radius() - p1.y - params.slack_height();
    circ_dist(p1.x, p2.x, params)
        > a * (h / 2.0).exp() * ((p1.y / 2.0).exp() + (p2.y / 2.0).exp())
}

/// Normalised description of two overlapping capped windows.
///
/// The higher point sits at abscissa 0 with scale `Y1 = e^{y1/2}`, the lower
/// one at distance `t` with scale `Y2 = e^{y2/2}`. Both windows have
/// half-width `scale * Y_i * e^{y/2}` at height `y` and stop at `height_cut`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntersectionFrame {
    pub upper_scale: f64,
    pub lower_scale: f64,
    pub t: f64,
    /// Window multiplier, `1 -+ eps` (or 1 for the infinite-limit windows).
    pub scale: f64,
    pub height_cut: f64,
    /// Height where the windows start to overlap; negative if they overlap at the base.
    pub y_lower: f64,
    /// Height where the lower window becomes nested in the upper one; infinite for equal heights.
    pub y_upper: f64,
    /// Exact adjacency half-width for the two heights, when known.
    pub pair_width: f64,
}

impl IntersectionFrame {
    pub fn new(y1: f64, y2: f64, t: f64, scale: f64, height_cut: f64) -> Self {
        let big = (y1 / 2.0).exp();
        let small = (y2 / 2.0).exp();
        let y_lower = 2.0 * (t / (scale * (big + small))).ln();
        let y_upper = if big > small {
            2.0 * (t / (scale * (big - small))).ln()
        } else {
            f64::INFINITY
        };
        Self {
            upper_scale: big,
            lower_scale: small,
            t,
            scale,
            height_cut,
            y_lower,
            y_upper,
            pair_width: f64::NAN,
        }
    }

    /// The windows already overlap at height 0.
    pub fn overlaps_at_base(&self) -> bool {
        self.t <= self.scale * (self.upper_scale + self.lower_scale)
    }

    /// Length of the overlap of the two windows at height `y`.
    pub fn overlap_at(&self, y: f64) -> f64 {
        if y >= self.height_cut {
            return 0.0;
        }
        let e = (y / 2.0).exp() * self.scale;
        let w1 = e * self.upper_scale;
        let w2 = e * self.lower_scale;
        let lo = (-w1).max(self.t - w2);
        let hi = w1.min(self.t + w2);
        (hi - lo).max(0.0)
    }
}

/// Frame of the capped approximate balls around `p1` (higher) and `p2`.
pub fn intersection_frame(
    p1: &BandPoint,
    p2: &BandPoint,
    kind: BallKind,
    params: &ModelParams,
) -> Result<IntersectionFrame, GeometryError> {
    check_height(p1.y, params)?;
    check_height(p2.y, params)?;
    if p1.y < p2.y {
        return Err(GeometryError::Unordered { y1: p1.y, y2: p2.y });
    }
    let t = circ_dist(p1.x, p2.x, params);
    let h = params.radius() - p1.y - params.slack_height();
    let mut frame = IntersectionFrame::new(p1.y, p2.y, t, kind.scale(params), h);
    frame.pair_width = delta(p1.y, p2.y, params).value;
    Ok(frame)
}
