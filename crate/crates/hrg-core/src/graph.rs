//! Graph construction (brute force and layered angular sweep) and degree statistics.

use std::f64::consts::{LN_2, PI};

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{EdgeRule, Prepared};
use crate::sampler::PointSet;

/// Largest vertex count accepted by the quadratic builder.
pub const BRUTEFORCE_LIMIT: usize = 20_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("{0} vertices exceed the brute-force limit of {BRUTEFORCE_LIMIT}")]
    TooLarge(usize),
}

/// Undirected simple graph in compressed adjacency form, neighbours sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HrgGraph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl HrgGraph {
    /// Builds the graph from unordered pairs `(i, j)` with `i != j`.
    pub fn from_pairs(n: usize, pairs: &[(u32, u32)]) -> Self {
        let mut deg = vec![0usize; n];
        for &(i, j) in pairs {
            deg[i as usize] += 1;
            deg[j as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &deg {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut neighbors = vec![0u32; offsets[n]];
        for &(i, j) in pairs {
            neighbors[fill[i as usize]] = j;
            fill[i as usize] += 1;
            neighbors[fill[j as usize]] = i;
            fill[j as usize] += 1;
        }
        for v in 0..n {
            neighbors[offsets[v]..offsets[v + 1]].sort_unstable();
        }
        Self { offsets, neighbors }
    }

    pub fn n_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_vertices()).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .map(move |&j| (i, j as usize))
                .filter(|&(i, j)| i < j)
        })
    }
}

/// Tests every pair. Reference implementation for small inputs.
pub fn build_bruteforce(ps: &PointSet) -> Result<HrgGraph, GraphError> {
    let n = ps.len();
    if n > BRUTEFORCE_LIMIT {
        return Err(GraphError::TooLarge(n));
    }
    let rule = EdgeRule::new(&ps.params);
    let prep: Vec<Prepared> = ps.disc.iter().map(Prepared::new).collect();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rule.adjacent(&prep[i], &prep[j]) {
                pairs.push((i as u32, j as u32));
            }
        }
    }
    Ok(HrgGraph::from_pairs(n, &pairs))
}

struct Layer {
    /// Points sorted by angle.
    points: Vec<Prepared>,
    ids: Vec<u32>,
    min_r: f64,
}

/// Indices `lo..hi` of the sorted angles inside `[from, to]`.
fn angle_range(points: &[Prepared], from: f64, to: f64) -> (usize, usize) {
    let lo = points.partition_point(|p| p.theta < from);
    let hi = points.partition_point(|p| p.theta <= to);
    (lo, hi.max(lo))
}

/// Layered angular sweep.
///
/// Points are split into height layers of width `2 ln 2`. For each pair of
/// layers the candidate window is the critical angle of the two innermost
/// radii, which bounds the critical angle of every pair drawn from those
/// layers because it shrinks with both radii. Candidates are confirmed with
/// the same predicate as [`build_bruteforce`], so the two builders agree.
pub fn build_fast(ps: &PointSet) -> HrgGraph {
    let n = ps.len();
    let params = &ps.params;
    let rule = EdgeRule::new(params);
    let width = 2.0 * LN_2;
    let n_layers = (params.radius() / width).floor() as usize + 1;
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); n_layers];
    for (i, d) in ps.disc.iter().enumerate() {
        let y = (params.radius() - d.r).max(0.0);
        let k = ((y / width).floor() as usize).min(n_layers - 1);
        buckets[k].push(i as u32);
    }
    let layers: Vec<Layer> = buckets
        .into_iter()
        .filter(|b| !b.is_empty())
        .map(|mut ids| {
            ids.sort_unstable_by(|&a, &b| {
                ps.disc[a as usize]
                    .theta
                    .total_cmp(&ps.disc[b as usize].theta)
                    .then(a.cmp(&b))
            });
            let points: Vec<Prepared> = ids
                .iter()
                .map(|&i| Prepared::new(&ps.disc[i as usize]))
                .collect();
            let min_r = points.iter().map(|p| p.r).fold(f64::INFINITY, f64::min);
            Layer { points, ids, min_r }
        })
        .collect();

    let mut pairs: Vec<(u32, u32)> = Vec::new();
    for (k, lk) in layers.iter().enumerate() {
        for ll in &layers[k..] {
            let same = std::ptr::eq(lk, ll);
            let inner = rule.critical_angle(
                &Prepared::new(&crate::model::DiscPoint::new(lk.min_r, 0.0)),
                &Prepared::new(&crate::model::DiscPoint::new(ll.min_r, 0.0)),
            );
            let w = inner * (1.0 + 1e-9) + 1e-12;
            for (pos, a) in lk.points.iter().enumerate() {
                let id_a = lk.ids[pos];
                let mut visit = |lo: usize, hi: usize| {
                    for q in lo..hi {
                        if same && q <= pos {
                            continue;
                        }
                        if rule.adjacent(a, &ll.points[q]) {
                            let id_b = ll.ids[q];
                            pairs.push((id_a.min(id_b), id_a.max(id_b)));
                        }
                    }
                };
                if w >= PI {
                    visit(0, ll.points.len());
                    continue;
                }
                let from = a.theta - w;
                let to = a.theta + w;
                if from < -PI {
                    let (lo, hi) = angle_range(&ll.points, from + 2.0 * PI, PI);
                    visit(lo, hi);
                    let (lo, hi) = angle_range(&ll.points, -PI, to);
                    visit(lo, hi);
                } else if to > PI {
                    let (lo, hi) = angle_range(&ll.points, -PI, to - 2.0 * PI);
                    visit(lo, hi);
                    let (lo, hi) = angle_range(&ll.points, from, PI);
                    visit(lo, hi);
                } else {
                    let (lo, hi) = angle_range(&ll.points, from, to);
                    visit(lo, hi);
                }
            }
        }
    }
    HrgGraph::from_pairs(n, &pairs)
}

/// Least-squares fit of `ln P(D >= k)` against `ln k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailFit {
    pub k_min: usize,
    pub k_max: usize,
    /// Slope of the log-log complementary CDF, about `-2 alpha`.
    pub ccdf_slope: f64,
    /// Density exponent `1 - slope`, about `2 alpha + 1`.
    pub exponent: f64,
    pub points_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeStats {
    pub n_vertices: usize,
    pub mean_degree: f64,
    pub max_degree: usize,
    /// `ccdf[k]` is the number of vertices of degree at least `k`.
    pub ccdf: Vec<usize>,
    pub tail: Option<TailFit>,
}

/// Pools degree sequences and fits the tail over `[k_min, k_max]`.
///
/// With no explicit range, the fit starts at `max(4, 10 * mean)` and stops at
/// the last degree still reached by at least 10 vertices.
pub fn degree_stats_pooled(degrees: &[usize], range: Option<(usize, usize)>) -> DegreeStats {
    let n = degrees.len();
    let max_degree = degrees.iter().copied().max().unwrap_or(0);
    let mut hist = vec![0usize; max_degree + 2];
    for &d in degrees {
        hist[d] += 1;
    }
    let mut ccdf = vec![0usize; max_degree + 1];
    let mut acc = 0;
    for k in (0..=max_degree).rev() {
        acc += hist[k];
        ccdf[k] = acc;
    }
    let mean_degree = if n == 0 {
        0.0
    } else {
        degrees.iter().sum::<usize>() as f64 / n as f64
    };
    let (k_min, k_max) = range.unwrap_or_else(|| {
        // Below ~10x the mean, Poisson scatter around each vertex's expected
        // degree still steepens the local slope noticeably.
        let k_min = ((10.0 * mean_degree).ceil() as usize).max(4);
        let k_max = ccdf.iter().rposition(|&c| c >= 10).unwrap_or(0);
        (k_min, k_max)
    });
    let tail = fit_ccdf(&ccdf, k_min, k_max);
    DegreeStats {
        n_vertices: n,
        mean_degree,
        max_degree,
        ccdf,
        tail,
    }
}

pub fn degree_stats(g: &HrgGraph) -> DegreeStats {
    degree_stats_pooled(&g.degrees(), None)
}

fn fit_ccdf(ccdf: &[usize], k_min: usize, k_max: usize) -> Option<TailFit> {
    let pts: Vec<(f64, f64)> = (k_min.max(1)..=k_max.min(ccdf.len().saturating_sub(1)))
        .filter(|&k| ccdf[k] > 0)
        .map(|k| ((k as f64).ln(), (ccdf[k] as f64).ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Some(TailFit {
        k_min,
        k_max,
        ccdf_slope: slope,
        exponent: 1.0 - slope,
        points_used: pts.len(),
    })
}
