//! Intensity mass of the band regions used in the variance analysis, pair
//! covariances of the score indicators, and the limit constants.
//!
//! Every closed form here has a `*_quadrature` twin that integrates the exact
//! x-interval length of the region height by height. The twins are the test
//! oracles and the fallback outside the windows where the closed forms hold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{delta, BallKind, GeometryError, IntersectionFrame};
use crate::model::{circ_dist, BandPoint, ModelParams};
use crate::quadrature::{
    integrate, integrate_breaks, integrate_to_infinity, QuadratureError, QuadratureSpec,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(
        "distance {t} is outside the closed-form window ({lo}, {hi}]; use mu_intersection_bound or the quadrature form"
    )]
    OutsideWindow { t: f64, lo: f64, hi: f64 },
    #[error("distance {t} is not above the bound threshold {threshold}")]
    BelowBoundThreshold { t: f64, threshold: f64 },
    #[error("truncation heights must be positive and finite")]
    BadTruncation,
}

fn check_height(y: f64, params: &ModelParams) -> Result<(), MeasureError> {
    if !(0.0..=params.cutoff_height()).contains(&y) {
        return Err(GeometryError::HeightOutOfRange {
            y,
            cutoff: params.cutoff_height(),
        }
        .into());
    }
    Ok(())
}

/// `int_a^b e^{c y} dy`, stable for `c` near 0.
fn exp_integral(c: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if c == 0.0 {
        return b - a;
    }
    (c * a).exp() * (c * (b - a)).exp_m1() / c
}

fn cap_height(y: f64, params: &ModelParams) -> f64 {
    (params.radius() - y - params.slack_height()).clamp(0.0, params.radius())
}

/// Mass of the approximate ball around `p`.
pub fn mu_ball_pm(p: &BandPoint, kind: BallKind, params: &ModelParams) -> Result<f64, MeasureError> {
    check_height(p.y, params)?;
    let a = params.alpha();
    let h = cap_height(p.y, params);
    let window = kind.scale(params)
        * params.ball_mass()
        * (p.y / 2.0).exp()
        * -((0.5 - a) * h).exp_m1();
    Ok(match kind {
        BallKind::Lower => window,
        BallKind::Upper => {
            window
                + params.intensity() * std::f64::consts::PI / a
                    * (params.radius() / 2.0).exp()
                    * ((-a * h).exp() - (-a * params.radius()).exp())
        }
    })
}

pub fn mu_ball_pm_quadrature(
    p: &BandPoint,
    kind: BallKind,
    params: &ModelParams,
    spec: &QuadratureSpec,
) -> Result<f64, MeasureError> {
    let (a, beta, i_n) = (params.alpha(), params.intensity(), params.half_length());
    let h = cap_height(p.y, params);
    let scale = kind.scale(params);
    let window = integrate(
        |y| (2.0 * scale * (0.5 * (y + p.y)).exp()).min(2.0 * i_n) * beta * (-a * y).exp(),
        0.0,
        h,
        spec,
    )?
    .value;
    Ok(match kind {
        BallKind::Lower => window,
        BallKind::Upper => {
            window
                + integrate(
                    |y| 2.0 * i_n * beta * (-a * y).exp(),
                    h,
                    params.radius(),
                    spec,
                )?
                .value
        }
    })
}

/// Mass of the approximate ball around `p` below the height of `p`.
pub fn mu_truncated_ball(
    p: &BandPoint,
    kind: BallKind,
    params: &ModelParams,
) -> Result<f64, MeasureError> {
    check_height(p.y, params)?;
    let a = params.alpha();
    Ok(kind.scale(params) * params.ball_mass() * (p.y / 2.0).exp() * -((0.5 - a) * p.y).exp_m1())
}

pub fn mu_truncated_ball_quadrature(
    p: &BandPoint,
    kind: BallKind,
    params: &ModelParams,
    spec: &QuadratureSpec,
) -> Result<f64, MeasureError> {
    let (a, beta, scale) = (params.alpha(), params.intensity(), kind.scale(params));
    Ok(integrate(
        |y| 2.0 * scale * (0.5 * (y + p.y)).exp() * beta * (-a * y).exp(),
        0.0,
        p.y,
        spec,
    )?
    .value)
}

/// Mass of the full-width strip above the cap height of `p1`.
///
/// Heights outside `[0, R]` are accepted; the strip is clipped to the band.
pub fn mu_z(p1: &BandPoint, params: &ModelParams) -> f64 {
    let a = params.alpha();
    let scale = 2.0 * params.half_length() * params.intensity() / a;
    let h = params.radius() - p1.y - params.slack_height();
    if h >= params.radius() {
        0.0
    } else if h <= 0.0 {
        scale * -(-a * params.radius()).exp_m1()
    } else {
        scale * (-a * params.radius()).exp() * (a * (p1.y + params.slack_height())).exp_m1()
    }
}

pub fn mu_z_quadrature(
    p1: &BandPoint,
    params: &ModelParams,
    spec: &QuadratureSpec,
) -> Result<f64, MeasureError> {
    let (a, beta, i_n) = (params.alpha(), params.intensity(), params.half_length());
    let r = params.radius();
    let h = (r - p1.y - params.slack_height()).clamp(0.0, r);
    Ok(integrate(|y| 2.0 * i_n * beta * (-a * y).exp(), h, r, spec)?.value)
}

/// Interval `(lo, hi]` of distances where [`mu_intersection`] applies.
pub fn intersection_window(frame: &IntersectionFrame) -> (f64, f64) {
    let a = frame.scale;
    let lo = (a * (frame.upper_scale + frame.lower_scale)).max(frame.pair_width);
    let hi = a * (frame.height_cut / 2.0).exp() * (frame.upper_scale - frame.lower_scale);
    (lo, hi)
}

/// Closed-form mass of the intersection of the two capped windows.
///
/// Valid while the windows are apart at the base and the lower one becomes
/// nested in the upper one before the cap.
pub fn mu_intersection(frame: &IntersectionFrame, params: &ModelParams) -> Result<f64, MeasureError> {
    let (lo, hi) = intersection_window(frame);
    let t = frame.t;
    if !(t > lo && t <= hi) {
        return Err(MeasureError::OutsideWindow { t, lo, hi });
    }
    let a = params.alpha();
    let g = params.ball_mass();
    let (y1, y2) = (frame.upper_scale, frame.lower_scale);
    let kappa = frame.scale.powf(2.0 * a) * g / (4.0 * a)
        * ((y1 + y2).powf(2.0 * a) - (y1 - y2).powf(2.0 * a));
    let eta = g * y2 * ((0.5 - a) * frame.height_cut).exp();
    Ok((kappa * t.powf(1.0 - 2.0 * a) - frame.scale * eta).max(0.0))
}

fn frame_breaks(frame: &IntersectionFrame, top: f64) -> Vec<f64> {
    let mut pts = vec![0.0, top];
    for y in [frame.y_lower, frame.y_upper] {
        if y.is_finite() && y > 0.0 && y < top {
            pts.push(y);
        }
    }
    pts.sort_by(f64::total_cmp);
    pts
}

/// Height-by-height integral of the window overlap, below the cap.
pub fn mu_intersection_quadrature(
    frame: &IntersectionFrame,
    params: &ModelParams,
    spec: &QuadratureSpec,
) -> Result<f64, MeasureError> {
    let (a, beta) = (params.alpha(), params.intensity());
    let top = frame.height_cut.max(0.0);
    Ok(integrate_breaks(
        |y| frame.overlap_at(y) * beta * (-a * y).exp(),
        &frame_breaks(frame, top),
        spec,
    )?
    .value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundCase {
    /// The lower window nests before the cap: the closed form applies.
    Nested,
    /// The windows meet below the cap but never nest.
    Partial,
    /// The windows do not meet below the cap; only the strip can contribute.
    Apart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntersectionBound {
    pub value: f64,
    pub case: BoundCase,
}

/// Upper bound on the intersection mass for well-separated points.
///
/// All three cases are dominated by
/// `k1 t^{1-2a} (Y1+Y2)^{2a} + k2 n^{1-2a} Y1^{2a}`, the second term being the
/// strip mass above the cap.
pub fn mu_intersection_bound(
    frame: &IntersectionFrame,
    params: &ModelParams,
) -> Result<IntersectionBound, MeasureError> {
    let (y1, y2, t, s) = (frame.upper_scale, frame.lower_scale, frame.t, frame.scale);
    let threshold = (params.radius() / 4.0).exp() * (y1 + y2);
    if !(t > threshold) {
        return Err(MeasureError::BelowBoundThreshold { t, threshold });
    }
    let a = params.alpha();
    let beta = params.intensity();
    let h = frame.height_cut;
    let near = s.powf(2.0 * a) * params.ball_mass() / (4.0 * a)
        * t.powf(1.0 - 2.0 * a)
        * (y1 + y2).powf(2.0 * a);
    let top = s * (h / 2.0).exp();
    Ok(if t <= top * (y1 - y2) {
        IntersectionBound {
            value: near,
            case: BoundCase::Nested,
        }
    } else if t <= top * (y1 + y2) {
        IntersectionBound {
            value: near + beta / a * t * (-a * h).exp(),
            case: BoundCase::Partial,
        }
    } else {
        let strip = 2.0 * params.half_length() * beta / a * (-a * h.clamp(0.0, params.radius())).exp();
        IntersectionBound {
            value: strip,
            case: BoundCase::Apart,
        }
    })
}

/// Covariance of the isolation indicators of two vertices.
///
/// Ball masses and their intersection use the inner (lower) approximation;
/// adjacency uses the exact window.
pub fn cov_iso(p1: &BandPoint, p2: &BandPoint, params: &ModelParams) -> Result<f64, MeasureError> {
    let (hi, lo) = if p1.y >= p2.y { (p1, p2) } else { (p2, p1) };
    check_height(hi.y, params)?;
    check_height(lo.y, params)?;
    let kind = BallKind::Lower;
    let e1 = (-mu_ball_pm(hi, kind, params)?).exp();
    let e2 = (-mu_ball_pm(lo, kind, params)?).exp();
    let t = circ_dist(hi.x, lo.x, params);
    let pair_width = delta(hi.y, lo.y, params).value;
    if t < pair_width {
        return Ok(-e1 * e2);
    }
    let h = params.radius() - hi.y - params.slack_height();
    let mut frame = IntersectionFrame::new(hi.y, lo.y, t, kind.scale(params), h);
    frame.pair_width = pair_width;
    let shared = match mu_intersection(&frame, params) {
        Ok(v) => v,
        Err(MeasureError::OutsideWindow { .. }) => {
            mu_intersection_quadrature(&frame, params, &QuadratureSpec::default())?
        }
        Err(e) => return Err(e),
    };
    Ok(e1 * e2 * shared.exp_m1())
}

/// `alpha * int_0^inf exp(-gamma e^{y/2}) e^{-alpha y} dy`, the limit of `E[S_iso] / n`.
pub fn iso_expectation_constant(params: &ModelParams, spec: &QuadratureSpec) -> Result<f64, MeasureError> {
    let (a, g) = (params.alpha(), params.ball_mass());
    Ok(a * integrate_to_infinity(|y| (-g * (y / 2.0).exp() - a * y).exp(), 0.0, spec)?.value)
}

/// Probability that a point at height `y` of the limit process is extreme.
pub fn ext_marginal(y: f64, params: &ModelParams) -> f64 {
    let a = params.alpha();
    (-params.ball_mass() * (y / 2.0).exp() * -((0.5 - a) * y).exp_m1()).exp()
}

/// `alpha * int_0^inf P(extreme at y) e^{-alpha y} dy`, the limit of `E[S_ext] / n`.
pub fn ext_expectation_constant(params: &ModelParams, spec: &QuadratureSpec) -> Result<f64, MeasureError> {
    let a = params.alpha();
    Ok(a * integrate_to_infinity(|y| ext_marginal(y, params) * (-a * y).exp(), 0.0, spec)?.value)
}

/// Mass shared by the truncated limit-process balls of heights `y1 >= y2` at distance `t`.
fn ideal_shared_mass(y1: f64, y2: f64, t: f64, params: &ModelParams) -> f64 {
    let (a, beta) = (params.alpha(), params.intensity());
    let f = IntersectionFrame::new(y1, y2, t, 1.0, y2);
    let top = y2;
    let lo = f.y_lower.clamp(0.0, top);
    let hi = f.y_upper.clamp(0.0, top);
    let partial = (f.upper_scale + f.lower_scale) * exp_integral(0.5 - a, lo, hi)
        - t * exp_integral(-a, lo, hi);
    let nested = 2.0 * f.lower_scale * exp_integral(0.5 - a, hi, top);
    (beta * (partial + nested)).max(0.0)
}

/// Quadrature twin of the shared mass used by [`ideal_pair_cov_ext`].
pub fn ideal_shared_mass_quadrature(
    y1: f64,
    y2: f64,
    t: f64,
    params: &ModelParams,
    spec: &QuadratureSpec,
) -> Result<f64, MeasureError> {
    let (hi, lo) = (y1.max(y2), y1.min(y2));
    let f = IntersectionFrame::new(hi, lo, t.abs(), 1.0, lo);
    let (a, beta) = (params.alpha(), params.intensity());
    Ok(integrate_breaks(
        |y| f.overlap_at(y) * beta * (-a * y).exp(),
        &frame_breaks(&f, lo),
        spec,
    )?
    .value)
}

/// Covariance of the extreme indicators of `(0, y1)` and `(z, y2)` in the limit process.
pub fn ideal_pair_cov_ext(y1: f64, y2: f64, z: f64, params: &ModelParams) -> f64 {
    let (hi, lo) = (y1.max(y2), y1.min(y2));
    let t = z.abs();
    let e = ext_marginal(hi, params) * ext_marginal(lo, params);
    // Equal heights take the inclusion branch too: it is the limit from either order.
    if t < (0.5 * (hi + lo)).exp() {
        return -e;
    }
    e * ideal_shared_mass(hi, lo, t, params).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaTruncation {
    pub y_cut: f64,
    pub z_cut: f64,
    pub quadrature: QuadratureSpec,
}

impl Default for SigmaTruncation {
    fn default() -> Self {
        Self {
            y_cut: 30.0,
            z_cut: 4.0 * 30f64.exp(),
            quadrature: QuadratureSpec::with_rel(1e-8),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaReport {
    pub sigma2: f64,
    /// Single-point term; equals the extreme expectation constant.
    pub diagonal: f64,
    /// Pair-covariance term.
    pub pair: f64,
    /// Bound on the mass dropped by cutting heights at `y_cut` and offsets at `z_cut`.
    pub truncation_bound: f64,
    pub y_cut: f64,
    pub z_cut: f64,
}

/// `int c(y1, y2, z) dz` over `|z| <= z_cut` for `y1 > y2`, split at the kinks.
fn pair_z_integral(
    y1: f64,
    y2: f64,
    z_cut: f64,
    params: &ModelParams,
    spec: &QuadratureSpec,
) -> f64 {
    let (s1, s2) = ((y1 / 2.0).exp(), (y2 / 2.0).exp());
    let e = ext_marginal(y1, params) * ext_marginal(y2, params);
    let inner = s1 * s2;
    let negative = -e * inner.min(z_cut);
    let end = (inner + s2 * s2).min(z_cut);
    if end <= inner {
        return 2.0 * negative;
    }
    let mut pts = vec![inner, end];
    for k in [s1 + s2, s1 - s2] {
        if k > inner && k < end {
            pts.push(k);
        }
    }
    pts.sort_by(f64::total_cmp);
    let positive = integrate_breaks(
        |z| e * ideal_shared_mass(y1, y2, z, params).exp_m1(),
        &pts,
        spec,
    )
    .map(|r| r.value)
    .unwrap_or(f64::NAN);
    2.0 * (negative + positive)
}

/// Limit of `Var[S_ext] / n`, from the truncated triple integral.
pub fn sigma_ext_constant(
    params: &ModelParams,
    trunc: &SigmaTruncation,
) -> Result<SigmaReport, MeasureError> {
    let (y_cut, z_cut) = (trunc.y_cut, trunc.z_cut);
    if !(y_cut.is_finite() && y_cut > 0.0 && z_cut.is_finite() && z_cut > 0.0) {
        return Err(MeasureError::BadTruncation);
    }
    let spec = &trunc.quadrature;
    let (a, beta) = (params.alpha(), params.intensity());
    let diagonal = a * integrate(|y| ext_marginal(y, params) * (-a * y).exp(), 0.0, y_cut, spec)?.value;

    let middle = |y1: f64| -> f64 {
        integrate(
            |y2| (-a * y2).exp() * pair_z_integral(y1, y2, z_cut, params, spec),
            0.0,
            y1,
            spec,
        )
        .map(|r| r.value)
        .unwrap_or(f64::NAN)
    };
    // Both height orders contribute equally.
    let pair = 2.0 * a * beta * integrate(|y1| (-a * y1).exp() * middle(y1), 0.0, y_cut, spec)?.value;

    let diagonal_tail =
        a * integrate_to_infinity(|y| ext_marginal(y, params) * (-a * y).exp(), y_cut, spec)?.value;
    let pair_tail = 8.0
        * beta
        * integrate_to_infinity(|y| ((1.0 - a) * y).exp() * ext_marginal(y, params), y_cut, spec)?.value;
    let z_tail = 4.0
        * beta
        * integrate(
            |y| (-a * y).exp() * ext_marginal(y, params) * (2.0 * y.exp() - z_cut).max(0.0),
            0.0,
            y_cut,
            spec,
        )?
        .value;
    Ok(SigmaReport {
        sigma2: diagonal + pair,
        diagonal,
        pair,
        truncation_bound: diagonal_tail + pair_tail + z_tail,
        y_cut,
        z_cut,
    })
}
