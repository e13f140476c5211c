//! Isolated and extreme vertex scores and radii of stabilization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{delta, edge_test};
use crate::graph::HrgGraph;
use crate::model::circ_dist;
use crate::sampler::{PointSet, ProcessKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("radii of stabilization are defined for band samples only")]
    NotBandSample,
    #[error("vertex {0} is out of range")]
    NoSuchVertex(usize),
    #[error("vertex height {y} exceeds the cutoff {cutoff}")]
    AboveCutoff { y: f64, cutoff: f64 },
}

/// Vertices with no neighbours.
pub fn isolated_flags(g: &HrgGraph) -> Vec<bool> {
    (0..g.n_vertices()).map(|v| g.degree(v) == 0).collect()
}

/// Vertices with no strictly lower neighbour (equal heights do not block).
pub fn extreme_flags(ps: &PointSet, g: &HrgGraph) -> Vec<bool> {
    (0..g.n_vertices())
        .map(|v| {
            let y = ps.band[v].y;
            g.neighbors(v).iter().all(|&u| ps.band[u as usize].y >= y)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreCounts {
    pub s_iso: u64,
    pub s_ext: u64,
    /// Counts restricted to vertices at height at most the cutoff `4 ln R`.
    pub s_iso_cut: u64,
    pub s_ext_cut: u64,
}

pub fn count_scores(ps: &PointSet, g: &HrgGraph) -> ScoreCounts {
    let cutoff = ps.params.cutoff_height();
    let iso = isolated_flags(g);
    let ext = extreme_flags(ps, g);
    let mut c = ScoreCounts::default();
    for v in 0..g.n_vertices() {
        let low = ps.band[v].y <= cutoff;
        if iso[v] {
            c.s_iso += 1;
            c.s_iso_cut += low as u64;
        }
        if ext[v] {
            c.s_ext += 1;
            c.s_ext_cut += low as u64;
        }
    }
    c
}

fn band_distance(ps: &PointSet, i: usize, j: usize) -> f64 {
    let dx = circ_dist(ps.band[i].x, ps.band[j].x, &ps.params);
    dx.hypot(ps.band[i].y - ps.band[j].y)
}

/// Diameter of the truncated ball below height `y`.
///
/// The region is `|x| <= w(s)` for `s` in `[0, y]` with `w` convex and
/// increasing, so the diameter is attained between corners.
pub fn truncated_ball_diameter(y: f64, params: &crate::model::ModelParams) -> f64 {
    let top = delta(y, y, params).value.min(params.half_length());
    let bottom = delta(0.0, y, params).value.min(params.half_length());
    (2.0 * top).max((top + bottom).hypot(y))
}

fn check_vertex(ps: &PointSet, i: usize) -> Result<(), ScoreError> {
    if !matches!(ps.kind, ProcessKind::Band { .. }) {
        return Err(ScoreError::NotBandSample);
    }
    if i >= ps.len() {
        return Err(ScoreError::NoSuchVertex(i));
    }
    let y = ps.band[i].y;
    if y > ps.params.cutoff_height() {
        return Err(ScoreError::AboveCutoff {
            y,
            cutoff: ps.params.cutoff_height(),
        });
    }
    Ok(())
}

/// Distance from vertex `i` to the nearest other point of its truncated ball,
/// or the diameter of that ball when it holds no other point.
pub fn stabilization_radius(ps: &PointSet, i: usize) -> Result<f64, ScoreError> {
    check_vertex(ps, i)?;
    let yi = ps.band[i].y;
    let nearest = (0..ps.len())
        .filter(|&j| j != i && ps.band[j].y <= yi)
        .filter(|&j| edge_test(&ps.disc[i], &ps.disc[j], &ps.params))
        .map(|j| band_distance(ps, i, j))
        .fold(f64::INFINITY, f64::min);
    Ok(if nearest.is_finite() {
        nearest
    } else {
        truncated_ball_diameter(yi, &ps.params)
    })
}

/// [`stabilization_radius`] for every vertex below the cutoff, read off the graph.
pub fn stabilization_radii(ps: &PointSet, g: &HrgGraph) -> Result<Vec<Option<f64>>, ScoreError> {
    if !matches!(ps.kind, ProcessKind::Band { .. }) {
        return Err(ScoreError::NotBandSample);
    }
    let cutoff = ps.params.cutoff_height();
    Ok((0..ps.len())
        .map(|i| {
            let yi = ps.band[i].y;
            if yi > cutoff {
                return None;
            }
            let nearest = g
                .neighbors(i)
                .iter()
                .map(|&j| j as usize)
                .filter(|&j| ps.band[j].y <= yi)
                .map(|j| band_distance(ps, i, j))
                .fold(f64::INFINITY, f64::min);
            Some(if nearest.is_finite() {
                nearest
            } else {
                truncated_ball_diameter(yi, &ps.params)
            })
        })
        .collect())
}

/// Exponent of the stabilization tail bound, `min(alpha t / 4, c0 sqrt(t / 3))`
/// with `c0 = sqrt(3) * intensity * (1 - e^{-8 alpha}) / alpha`.
pub fn stabilization_tail_exponent(t: f64, params: &crate::model::ModelParams) -> f64 {
    let a = params.alpha();
    let c0 = 3f64.sqrt() * params.intensity() * (-(-8.0 * a).exp_m1()) / a;
    (a * t / 4.0).min(c0 * (t / 3.0).sqrt())
}
