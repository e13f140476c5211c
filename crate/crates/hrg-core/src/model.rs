//! Model parameters, the radial law on the disc and the band map.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("alpha must exceed 1/2, got {0}")]
    AlphaTooSmall(f64),
    #[error("nu must be positive, got {0}")]
    NonPositiveNu(f64),
    #[error("n must exceed nu (n = {n}, nu = {nu})")]
    NotAboveNu { n: f64, nu: f64 },
    #[error("parameter {0} is not finite")]
    NotFinite(&'static str),
    #[error("cutoff height {cutoff} must lie in (0, radius = {radius})")]
    DegenerateCutoff { cutoff: f64, radius: f64 },
    #[error("slack height {slack} must lie in (0, radius = {radius})")]
    BadSlackHeight { slack: f64, radius: f64 },
}

/// Derived constants of the disc model `G(n, alpha, nu)`.
///
/// Built once by [`make_params`] and read-only afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    alpha: f64,
    nu: f64,
    n: f64,
    radius: f64,
    half_length: f64,
    cutoff_height: f64,
    intensity: f64,
    ball_mass: f64,
    slack_height: f64,
    slack: f64,
}

impl ModelParams {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Expected number of points.
    pub fn n(&self) -> f64 {
        self.n
    }

    /// Disc radius `2 ln(n / nu)`.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Half the band length, `(pi/2) e^{R/2}`. The band is `(-I, I] x [0, R]`.
    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    /// Height `4 ln R` above which vertices are left out of the truncated scores.
    pub fn cutoff_height(&self) -> f64 {
        self.cutoff_height
    }

    /// Intensity prefactor of the band image: density `intensity * e^{-alpha y}` per unit area.
    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    /// Ball-mass prefactor: the limiting ball around height `y` has mass `ball_mass * e^{y/2}`.
    pub fn ball_mass(&self) -> f64 {
        self.ball_mass
    }

    /// Height margin `C` used by the ball approximations.
    pub fn slack_height(&self) -> f64 {
        self.slack_height
    }

    /// Relative window slack `e^{-C}` of the ball approximations.
    pub fn slack(&self) -> f64 {
        self.slack
    }

    /// Mean degree of the infinite limit, `8 alpha^2 nu / (pi (2 alpha - 1)^2)`.
    pub fn limit_mean_degree(&self) -> f64 {
        let a = self.alpha;
        8.0 * a * a * self.nu / (PI * (2.0 * a - 1.0).powi(2))
    }
}

/// Validates inputs and derives every model constant.
///
/// `slack_height` defaults to `5 ln R`; when that would not fit below `R`
/// (tiny discs) it falls back to `R / 2`.
pub fn make_params(
    alpha: f64,
    nu: f64,
    n: f64,
    slack_height: Option<f64>,
) -> Result<ModelParams, ModelError> {
    for (name, v) in [("alpha", alpha), ("nu", nu), ("n", n)] {
        if !v.is_finite() {
            return Err(ModelError::NotFinite(name));
        }
    }
    if alpha <= 0.5 {
        return Err(ModelError::AlphaTooSmall(alpha));
    }
    if nu <= 0.0 {
        return Err(ModelError::NonPositiveNu(nu));
    }
    if n <= nu {
        return Err(ModelError::NotAboveNu { n, nu });
    }
    let radius = 2.0 * (n / nu).ln();
    let cutoff = 4.0 * radius.ln();
    if !(cutoff > 0.0 && cutoff < radius) {
        return Err(ModelError::DegenerateCutoff { cutoff, radius });
    }
    let c = match slack_height {
        Some(c) => {
            if !c.is_finite() {
                return Err(ModelError::NotFinite("slack_height"));
            }
            c
        }
        None => {
            let c = 5.0 * radius.ln();
            if c < radius {
                c
            } else {
                radius / 2.0
            }
        }
    };
    if !(c > 0.0 && c < radius) {
        return Err(ModelError::BadSlackHeight { slack: c, radius });
    }
    let intensity = nu * alpha / PI;
    Ok(ModelParams {
        alpha,
        nu,
        n,
        radius,
        half_length: PI / 2.0 * (radius / 2.0).exp(),
        cutoff_height: cutoff,
        intensity,
        ball_mass: 4.0 * intensity / (2.0 * alpha - 1.0),
        slack_height: c,
        slack: (-c).exp(),
    })
}

/// Density of the radial coordinate on `[0, R]`.
pub fn rho_radial(r: f64, params: &ModelParams) -> f64 {
    let a = params.alpha;
    let big_r = params.radius;
    if !(0.0..=big_r).contains(&r) {
        return 0.0;
    }
    if a * big_r > 30.0 {
        // sinh(ar) / (cosh(aR) - 1) with the exponentials factored out.
        let num = -(-2.0 * a * r).exp_m1();
        let den = (-(-a * big_r).exp_m1()).powi(2);
        a * (a * (r - big_r)).exp() * num / den
    } else {
        a * (a * r).sinh() / ((a * big_r).cosh() - 1.0)
    }
}

/// Density of the height `y = R - r`.
pub fn defect_density(y: f64, params: &ModelParams) -> f64 {
    if !(0.0..=params.radius).contains(&y) {
        return 0.0;
    }
    rho_radial(params.radius - y, params)
}

/// Inverse CDF of the radial law: maps `u` in `[0, 1]` to a radius.
pub fn radius_from_uniform(u: f64, params: &ModelParams) -> f64 {
    let a = params.alpha;
    let big_r = params.radius;
    let span = (a * big_r).cosh() - 1.0;
    let w = u * span;
    let z = 1.0 + w;
    let r = if z > 1e8 {
        // acosh(z) = ln(2z) up to O(z^-2)
        (2.0 * z).ln() / a
    } else {
        (w + (w * (w + 2.0)).sqrt()).ln_1p() / a
    };
    r.clamp(0.0, big_r)
}

/// Point on the hyperbolic disc in native polar coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscPoint {
    pub r: f64,
    pub theta: f64,
}

impl DiscPoint {
    pub fn new(r: f64, theta: f64) -> Self {
        Self { r, theta }
    }

    /// Height above the boundary circle.
    pub fn height(&self, params: &ModelParams) -> f64 {
        params.radius - self.r
    }
}

/// Point in the band `(-I, I] x [0, R]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub x: f64,
    pub y: f64,
}

impl BandPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Maps a disc point to the band: `x = theta e^{R/2} / 2`, `y = R - r`.
pub fn phi(p: &DiscPoint, params: &ModelParams) -> BandPoint {
    BandPoint {
        x: 0.5 * p.theta * (params.radius / 2.0).exp(),
        y: params.radius - p.r,
    }
}

/// Inverse of [`phi`].
pub fn phi_inverse(q: &BandPoint, params: &ModelParams) -> DiscPoint {
    DiscPoint {
        r: params.radius - q.y,
        theta: 2.0 * q.x * (-params.radius / 2.0).exp(),
    }
}

/// Distance between two abscissae on the circle of length `2I`.
pub fn circ_dist(x1: f64, x2: f64, params: &ModelParams) -> f64 {
    let len = 2.0 * params.half_length;
    let d = (x1 - x2).abs() % len;
    d.min(len - d)
}

/// Signed circular offset `x2 - x1` folded into `(-I, I]`.
pub fn circ_offset(x1: f64, x2: f64, params: &ModelParams) -> f64 {
    let len = 2.0 * params.half_length;
    let mut d = (x2 - x1) % len;
    if d > params.half_length {
        d -= len;
    } else if d <= -params.half_length {
        d += len;
    }
    d
}
