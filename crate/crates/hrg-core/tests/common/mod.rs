//! Property checks shared by the property suite and the acceptance run.
//!
//! Each check drives proptest's runner with a fixed RNG, so a given case
//! count always replays the same inputs.

use std::f64::consts::PI;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use hrg_core::experiments::{run_counts, ExperimentConfig, Statistic};
use hrg_core::geometry::{
    ball_contains, balls_disjoint, delta, edge_test, hyp_dist, intersection_frame, BallApprox, BallKind,
};
use hrg_core::graph::{build_bruteforce, build_fast};
use hrg_core::measures::{
    cov_iso, ext_expectation_constant, ext_marginal, intersection_window, iso_expectation_constant, mu_ball_pm,
    mu_ball_pm_quadrature, mu_intersection, mu_intersection_bound, mu_intersection_quadrature, mu_truncated_ball,
    mu_truncated_ball_quadrature, mu_z, mu_z_quadrature,
};
use hrg_core::model::{
    circ_dist, defect_density, make_params, phi, phi_inverse, BandPoint, DiscPoint, ModelParams,
};
use hrg_core::quadrature::{integrate, QuadratureSpec};
use hrg_core::sampler::{read_points, sample_disc, write_points, PointSet, ProcessKind};
use hrg_core::scores::{count_scores, extreme_flags, isolated_flags};
use hrg_core::stats::jackknife_mean;

pub struct Property {
    pub name: &'static str,
    /// Runs the property on the given number of cases.
    pub run: fn(u32) -> Result<(), String>,
    /// Default case count; expensive properties use fewer.
    pub cases: u32,
}

fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Admissible parameters with `ln(n / nu)` in `[lo, hi]`.
fn params_in(lo: f64, hi: f64) -> impl Strategy<Value = ModelParams> {
    (0.55f64..3.0, 0.5f64..3.0, lo..hi)
        .prop_map(|(a, nu, ln_ratio)| make_params(a, nu, nu * ln_ratio.exp(), None).unwrap())
}

fn any_params() -> impl Strategy<Value = ModelParams> {
    params_in(5.5, 14.0)
}

fn wrap_angle(t: f64) -> f64 {
    let w = t.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

fn band_point(params: &ModelParams, x_frac: f64, y_frac: f64, y_top: f64) -> BandPoint {
    BandPoint::new(x_frac * params.half_length(), y_frac * y_top)
}

fn band_map_round_trip(cases: u32) -> Result<(), String> {
    check(cases, (any_params(), 0.0f64..=1.0, -1.0f64..=1.0), |(p, rf, tf)| {
        let d = DiscPoint::new(rf * p.radius(), tf * PI);
        let b = phi(&d, &p);
        prop_assert!(b.x > -p.half_length() - 1e-9 && b.x <= p.half_length() + 1e-9);
        prop_assert!((2.0 * b.x * (-p.radius() / 2.0).exp() - d.theta).abs() <= 1e-12);
        let back = phi_inverse(&b, &p);
        prop_assert!((back.r - d.r).abs() <= 1e-12 * p.radius());
        prop_assert!((back.theta - d.theta).abs() <= 1e-12);
        Ok(())
    })
}

fn defect_density_normalised_and_close_to_exponential(cases: u32) -> Result<(), String> {
    check(cases, any_params(), |p| {
        let spec = QuadratureSpec::with_rel(1e-12);
        let total = integrate(|y| defect_density(y, &p), 0.0, p.radius(), &spec).unwrap().value;
        prop_assert!((total - 1.0).abs() < 1e-10, "mass {total}");
        let a = p.alpha();
        let bound = 2.0 * a / ((a * p.radius()).exp() - 2.0);
        for k in 0..10_000 {
            let y = p.radius() * k as f64 / 9_999.0;
            let exp = a * (-a * y).exp();
            let dev = (defect_density(y, &p) - exp).abs();
            // The bound can sit far below double resolution. The log-domain form
            // loses about alpha R ulps forming alpha (r - R), so allow that much.
            let ulps = 4.0 * (1.0 + a * p.radius()) * f64::EPSILON * exp;
            prop_assert!(dev <= bound * (1.0 + 1e-9) + ulps, "y = {y}: {dev} > {bound}");
        }
        Ok(())
    })
}

/// Pairs concentrated near the critical angle, where the predicates can disagree.
fn disc_pair() -> impl Strategy<Value = (ModelParams, DiscPoint, DiscPoint)> {
    (any_params(), 0.0f64..1.0, 0.0f64..1.0, -1.0f64..1.0, 0.0f64..1.0, 0.0f64..3.0, any::<bool>()).prop_map(
        |(p, u1, u2, t1, v, scale, near)| {
            let r1 = hrg_core::model::radius_from_uniform(u1, &p);
            let r2 = hrg_core::model::radius_from_uniform(u2, &p);
            let th = hrg_core::geometry::theta_r(r1, r2, &p);
            let gap = if near { scale * th } else { v * PI };
            let a = t1 * PI;
            (p, DiscPoint::new(r1, a), DiscPoint::new(r2, wrap_angle(a + gap)))
        },
    )
}

fn edge_test_matches_distance(cases: u32) -> Result<(), String> {
    check(cases, disc_pair(), |(p, a, b)| {
        let d = hyp_dist(&a, &b);
        if (d - p.radius()).abs() >= 1e-9 {
            prop_assert_eq!(edge_test(&a, &b, &p), d <= p.radius(), "d = {}", d);
        }
        prop_assert_eq!(edge_test(&a, &b, &p), edge_test(&b, &a, &p));
        Ok(())
    })
}

fn window_sandwich(cases: u32) -> Result<(), String> {
    check(cases, (any_params(), 0.0f64..1.0, 0.0f64..1.0), |(p, u, v)| {
        let top = p.radius() - p.slack_height();
        let y1 = u * top;
        let y2 = v * (top - y1);
        let ratio = delta(y1, y2, &p).value / (0.5 * (y1 + y2)).exp();
        let eps = p.slack();
        prop_assert!(ratio >= 1.0 - eps && ratio <= 1.0 + eps, "ratio {ratio}, eps {eps}");
        Ok(())
    })
}

/// Windows widen with height; in particular the left edges never cross.
fn frame_boundaries(cases: u32) -> Result<(), String> {
    check(cases, (any_params(), 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), |(p, u, v, w)| {
        let h = p.cutoff_height();
        let y1 = u * h;
        let y2 = v * y1;
        let p1 = BandPoint::new(0.0, y1);
        let t = w * 4.0 * (0.5 * (y1 + h)).exp();
        let p2 = BandPoint::new(t.min(p.half_length()), y2);
        for kind in [BallKind::Lower, BallKind::Upper] {
            let f = intersection_frame(&p1, &p2, kind, &p).unwrap();
            let (big, small) = (f.upper_scale, f.lower_scale);
            if big > small {
                // Left edges -a Y1 e^{y/2} and t - a Y2 e^{y/2} would meet at e^{y/2} = t / (a (Y2 - Y1)).
                prop_assert!(f.t / (f.scale * (small - big)) <= 0.0);
                prop_assert!(f.y_lower <= f.y_upper);
            } else {
                prop_assert!(f.y_upper.is_infinite());
            }
            let mut last = 0.0;
            for k in 0..200 {
                let y = f.height_cut.max(0.0) * k as f64 / 200.0;
                let o = f.overlap_at(y);
                prop_assert!(o >= last - 1e-9 * (1.0 + o));
                prop_assert!(o <= 2.0 * f.scale * small * (0.5 * y).exp() * (1.0 + 1e-12));
                last = o;
            }
        }
        Ok(())
    })
}

fn disjointness_formula(cases: u32) -> Result<(), String> {
    check(
        cases,
        (any_params(), -1.0f64..1.0, 0.0f64..1.0, -1.0f64..1.0, 0.0f64..1.0, any::<bool>()),
        |(p, x1, u1, x2, u2, lower)| {
            let h_cut = p.cutoff_height();
            let a = band_point(&p, x1, u1, h_cut);
            let b = band_point(&p, x2, u2, h_cut);
            let kind = if lower { BallKind::Lower } else { BallKind::Upper };
            let s = kind.scale(&p);
            let h = p.radius() - a.y - p.slack_height();
            let expect = circ_dist(a.x, b.x, &p) > s * (h / 2.0).exp() * ((a.y / 2.0).exp() + (b.y / 2.0).exp());
            prop_assert_eq!(balls_disjoint(&a, &b, kind, &p), expect);
            prop_assert!(!balls_disjoint(&a, &a, kind, &p));
            Ok(())
        },
    )
}

fn ball_sandwich(cases: u32) -> Result<(), String> {
    check(
        cases,
        (params_in(9.0, 14.0), 0.0f64..1.0, 0.0f64..1.0, -3.0f64..3.0, any::<bool>(), 0.0f64..2.5),
        |(p, u, v, k, near, far)| {
            let top = p.radius() - p.slack_height();
            let yp = u * top;
            let yq = v * (top - yp);
            let w = (0.5 * (yp + yq)).exp();
            let x = if near { w * (1.0 + k * p.slack()) } else { w * far };
            let c = BandPoint::new(0.0, yp);
            let q = BandPoint::new(x.min(p.half_length()), yq);
            let exact = edge_test(&phi_inverse(&c, &p), &phi_inverse(&q, &p), &p);
            let lower = ball_contains(&BallApprox::around(c, BallKind::Lower, &p), &q, &p);
            let upper = ball_contains(&BallApprox::around(c, BallKind::Upper, &p), &q, &p);
            prop_assert!(!lower || exact, "lower but not exact at x/w = {}", x / w);
            prop_assert!(!exact || upper, "exact but not upper at x/w = {}", x / w);
            Ok(())
        },
    )
}

fn small_sample() -> impl Strategy<Value = PointSet> {
    (prop::sample::select(vec![0.6, 0.8, 1.0, 1.5, 3.0]), 0.5f64..2.0, 100.0f64..1500.0, any::<u64>())
        .prop_map(|(a, nu, n, seed)| sample_disc(&make_params(a, nu, n.max(nu * 200.0), None).unwrap(), seed).unwrap())
}

fn builders_agree(cases: u32) -> Result<(), String> {
    check(cases, small_sample(), |ps| {
        let fast = build_fast(&ps);
        let brute = build_bruteforce(&ps).unwrap();
        prop_assert_eq!(&fast, &brute);
        for v in 0..fast.n_vertices() {
            for &u in fast.neighbors(v) {
                prop_assert!(u as usize != v, "loop at {}", v);
                prop_assert!(fast.neighbors(u as usize).binary_search(&(v as u32)).is_ok());
            }
        }
        Ok(())
    })
}

fn rotated(ps: &PointSet, c: f64) -> PointSet {
    let disc: Vec<DiscPoint> = ps.disc.iter().map(|d| DiscPoint::new(d.r, wrap_angle(d.theta + c))).collect();
    PointSet {
        band: disc.iter().map(|d| phi(d, &ps.params)).collect(),
        disc,
        ..ps.clone()
    }
}

fn permuted(ps: &PointSet, shift: usize) -> PointSet {
    let n = ps.len();
    let order: Vec<usize> = (0..n).rev().map(|i| (i + shift) % n.max(1)).collect();
    PointSet {
        disc: order.iter().map(|&i| ps.disc[i]).collect(),
        band: order.iter().map(|&i| ps.band[i]).collect(),
        ..ps.clone()
    }
}

fn score_invariances(cases: u32) -> Result<(), String> {
    check(cases, (small_sample(), -PI..PI, 0usize..1000), |(ps, c, shift)| {
        let g = build_fast(&ps);
        let iso = isolated_flags(&g);
        let ext = extreme_flags(&ps, &g);
        for v in 0..iso.len() {
            prop_assert!(!iso[v] || ext[v], "vertex {} isolated but not extreme", v);
        }
        let base = count_scores(&ps, &g);
        let r = rotated(&ps, c);
        prop_assert_eq!(count_scores(&r, &build_fast(&r)), base);
        let q = permuted(&ps, shift);
        prop_assert_eq!(count_scores(&q, &build_fast(&q)), base);
        Ok(())
    })
}

fn sampling_is_deterministic(cases: u32) -> Result<(), String> {
    check(cases, (any_params(), any::<u64>()), |(p, seed)| {
        let p = make_params(p.alpha(), p.nu(), p.nu() * 300.0, None).unwrap();
        let here = sample_disc(&p, seed).unwrap();
        let there = std::thread::spawn(move || sample_disc(&p, seed).unwrap()).join().unwrap();
        prop_assert_eq!(&here, &there);
        for (d, b) in here.disc.iter().zip(&here.band) {
            prop_assert_eq!(phi(d, &p), *b);
        }
        Ok(())
    })
}

fn csv_round_trip(cases: u32) -> Result<(), String> {
    check(cases, small_sample(), |ps| {
        let mut buf = Vec::new();
        write_points(&ps, &mut buf).unwrap();
        let back = read_points(buf.as_slice(), &ps.params, ps.seed, ProcessKind::Disc).unwrap();
        prop_assert_eq!(back, ps);
        Ok(())
    })
}

/// In-domain inputs for the closed-form masses: heights up to the cutoff.
fn measure_input() -> impl Strategy<Value = (ModelParams, BandPoint, bool)> {
    (params_in(6.0, 16.0), 0.0f64..1.0, any::<bool>())
        .prop_map(|(p, u, lower)| {
            let y = u * p.cutoff_height();
            (p, BandPoint::new(0.0, y), lower)
        })
}

fn kind_of(lower: bool) -> BallKind {
    if lower {
        BallKind::Lower
    } else {
        BallKind::Upper
    }
}

fn closed_forms_match_quadrature(cases: u32) -> Result<(), String> {
    let spec = QuadratureSpec::with_rel(1e-10);
    check(cases, measure_input(), |(p, q, lower)| {
        let kind = kind_of(lower);
        let pairs = [
            (mu_ball_pm(&q, kind, &p).unwrap(), mu_ball_pm_quadrature(&q, kind, &p, &spec).unwrap()),
            (
                mu_truncated_ball(&q, kind, &p).unwrap(),
                mu_truncated_ball_quadrature(&q, kind, &p, &spec).unwrap(),
            ),
            (mu_z(&q, &p), mu_z_quadrature(&q, &p, &spec).unwrap()),
        ];
        for (k, (v, o)) in pairs.iter().enumerate() {
            prop_assert!(rel(*v, *o) < 1e-6 || (v - o).abs() < 1e-12, "formula {}: {} vs {}", k, v, o);
        }
        Ok(())
    })
}

/// Frames inside the closed-form window, with the distance as a fraction of it.
pub fn window_frame() -> impl Strategy<Value = (ModelParams, f64, f64, bool, f64)> {
    (params_in(8.0, 16.0), 0.0f64..1.0, 0.0f64..1.0, any::<bool>(), 0.0f64..1.0)
        .prop_filter_map("empty closed-form window", |(p, u, v, lower, s)| {
            let y1 = u * p.cutoff_height();
            let y2 = v * y1;
            let kind = kind_of(lower);
            let probe = intersection_frame(&BandPoint::new(0.0, y1), &BandPoint::new(0.0, y2), kind, &p).ok()?;
            let (lo, hi) = intersection_window(&probe);
            (hi > lo * (1.0 + 1e-9) && hi < p.half_length()).then_some((p, y1, y2, lower, s))
        })
}

/// Frame at distance `lo (hi / lo)^s` inside the window.
fn frame_at(p: &ModelParams, y1: f64, y2: f64, lower: bool, s: f64) -> hrg_core::geometry::IntersectionFrame {
    let probe = intersection_frame(&BandPoint::new(0.0, y1), &BandPoint::new(0.0, y2), kind_of(lower), p).unwrap();
    let (lo, hi) = intersection_window(&probe);
    let t = (lo * (hi / lo).powf(s.max(1e-9))).min(hi);
    intersection_frame(&BandPoint::new(0.0, y1), &BandPoint::new(t, y2), kind_of(lower), p).unwrap()
}

fn intersection_matches_quadrature(cases: u32) -> Result<(), String> {
    let spec = QuadratureSpec::with_rel(1e-10);
    check(cases, window_frame(), |(p, y1, y2, lower, s)| {
        let f = frame_at(&p, y1, y2, lower, s);
        let v = mu_intersection(&f, &p).unwrap();
        let o = mu_intersection_quadrature(&f, &p, &spec).unwrap();
        prop_assert!(rel(v, o) < 1e-6 || (v - o).abs() < 1e-12, "{} vs {}", v, o);
        Ok(())
    })
}

fn intersection_continuous_in_distance(cases: u32) -> Result<(), String> {
    check(cases, window_frame(), |(p, y1, y2, lower, _)| {
        let steps = 4000;
        let values: Vec<f64> = (1..steps)
            .map(|k| mu_intersection(&frame_at(&p, y1, y2, lower, k as f64 / steps as f64), &p).unwrap())
            .collect();
        let scale = values.iter().cloned().fold(0.0, f64::max).max(1e-300);
        for w in values.windows(2) {
            prop_assert!((w[1] - w[0]).abs() <= 0.01 * scale, "jump {} -> {}", w[0], w[1]);
        }
        Ok(())
    })
}

fn intersection_bound_dominates(cases: u32) -> Result<(), String> {
    let spec = QuadratureSpec::with_rel(1e-10);
    check(
        cases,
        (params_in(8.0, 16.0), 0.0f64..1.0, 0.0f64..1.0, any::<bool>(), 0.0f64..1.0),
        |(p, u, v, lower, s)| {
            let y1 = u * p.cutoff_height();
            let y2 = v * y1;
            let threshold = (p.radius() / 4.0).exp() * ((y1 / 2.0).exp() + (y2 / 2.0).exp());
            let t = threshold * (1.0 + 1e-9) + s * (p.half_length() - threshold).max(0.0);
            if t > p.half_length() {
                return Ok(());
            }
            let f = intersection_frame(&BandPoint::new(0.0, y1), &BandPoint::new(t, y2), kind_of(lower), &p).unwrap();
            let bound = mu_intersection_bound(&f, &p).unwrap().value;
            let truth = mu_intersection_quadrature(&f, &p, &spec).unwrap();
            prop_assert!(bound >= truth * (1.0 - 1e-6) - 1e-12, "bound {} < {}", bound, truth);
            Ok(())
        },
    )
}

fn isolation_covariance_symmetric(cases: u32) -> Result<(), String> {
    check(
        cases,
        (params_in(8.0, 14.0), 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0),
        |(p, u, v, s)| {
            let h = p.cutoff_height();
            let a = BandPoint::new(0.0, u * h);
            let b = BandPoint::new(s * 4.0 * (h).exp().min(p.half_length() / 4.0), v * h);
            let ab = cov_iso(&a, &b, &p).unwrap();
            let ba = cov_iso(&b, &a, &p).unwrap();
            prop_assert!(ab == ba || rel(ab, ba) < 1e-12, "{} vs {}", ab, ba);
            Ok(())
        },
    )
}

fn limit_constants_stable(cases: u32) -> Result<(), String> {
    check(cases, (0.55f64..4.0, 0.2f64..4.0), |(a, nu)| {
        let p = make_params(a, nu, nu * 1e6, None).unwrap();
        for k in 0..400 {
            let y = k as f64 * 0.1;
            let m = ext_marginal(y, &p);
            prop_assert!(m >= 0.0 && m <= 1.0);
            prop_assert!((-p.ball_mass() * (y / 2.0).exp() - a * y).exp() >= 0.0);
        }
        let coarse = QuadratureSpec::with_rel(1e-9);
        let fine = QuadratureSpec::with_rel(1e-11);
        let i9 = iso_expectation_constant(&p, &coarse).unwrap();
        let i11 = iso_expectation_constant(&p, &fine).unwrap();
        let e9 = ext_expectation_constant(&p, &coarse).unwrap();
        let e11 = ext_expectation_constant(&p, &fine).unwrap();
        prop_assert!(rel(i9, i11) < 1e-6 && rel(e9, e11) < 1e-6);
        prop_assert!(i9 > 0.0 && e9 >= i9);
        Ok(())
    })
}

fn runs_are_thread_invariant(cases: u32) -> Result<(), String> {
    check(cases, (prop::sample::select(vec![0.75, 1.5, 2.5]), any::<u64>(), 1usize..4), |(a, seed, threads)| {
        let c = ExperimentConfig {
            alphas: vec![a],
            nu: 1.0,
            n_grid: vec![300, 600],
            replicates: 6,
            master_seed: seed,
            statistics: vec![Statistic::Iso, Statistic::Ext],
            conditioning: None,
            slack_height: None,
            max_points: 1e6,
            degree_law: None,
            stabilization: None,
        };
        let one = run_counts(&c, Some(1), |_| {}).unwrap();
        let many = run_counts(&c, Some(threads + 1), |_| {}).unwrap();
        prop_assert_eq!(one, many);
        Ok(())
    })
}

/// Coverage of the jackknife interval for the Poisson point-count mean.
fn jackknife_covers_poisson_mean(cases: u32) -> Result<(), String> {
    check(cases, any::<u64>(), |seed| {
        let n = 500u64;
        let mut covered = 0;
        let runs = 100;
        for run in 0..runs {
            let c = ExperimentConfig {
                alphas: vec![1.5],
                nu: 1.0,
                n_grid: vec![n],
                replicates: 30,
                master_seed: seed ^ run,
                statistics: vec![Statistic::Iso],
                conditioning: None,
                slack_height: None,
                max_points: 1e6,
                degree_law: None,
                stabilization: None,
            };
            let counts: Vec<f64> = run_counts(&c, None, |_| {}).unwrap().iter().map(|r| r.n_points as f64).collect();
            let ci = jackknife_mean(&counts);
            prop_assert!(ci.lo <= ci.estimate && ci.estimate <= ci.hi);
            covered += (ci.lo <= n as f64 && n as f64 <= ci.hi) as usize;
        }
        prop_assert!(covered >= 90, "covered {}/{}", covered, runs);
        Ok(())
    })
}

pub fn all() -> Vec<Property> {
    vec![
        Property { name: "band map round trip", run: band_map_round_trip, cases: 256 },
        Property {
            name: "defect density normalised and near exponential",
            run: defect_density_normalised_and_close_to_exponential,
            cases: 32,
        },
        Property { name: "edge test matches distance", run: edge_test_matches_distance, cases: 4096 },
        Property { name: "window width sandwich", run: window_sandwich, cases: 1024 },
        Property { name: "intersection frame boundaries", run: frame_boundaries, cases: 256 },
        Property { name: "disjointness formula", run: disjointness_formula, cases: 1024 },
        Property { name: "ball approximation sandwich", run: ball_sandwich, cases: 4096 },
        Property { name: "fast builder equals brute force", run: builders_agree, cases: 48 },
        Property { name: "score invariances", run: score_invariances, cases: 32 },
        Property { name: "sampling determinism", run: sampling_is_deterministic, cases: 32 },
        Property { name: "point csv round trip", run: csv_round_trip, cases: 16 },
        Property { name: "closed forms match quadrature", run: closed_forms_match_quadrature, cases: 256 },
        Property { name: "intersection matches quadrature", run: intersection_matches_quadrature, cases: 256 },
        Property { name: "intersection continuous in distance", run: intersection_continuous_in_distance, cases: 32 },
        Property { name: "intersection bound dominates", run: intersection_bound_dominates, cases: 256 },
        Property { name: "isolation covariance symmetric", run: isolation_covariance_symmetric, cases: 128 },
        Property { name: "limit constants stable", run: limit_constants_stable, cases: 16 },
        Property { name: "runs thread invariant", run: runs_are_thread_invariant, cases: 8 },
        Property { name: "jackknife covers poisson mean", run: jackknife_covers_poisson_mean, cases: 2 },
    ]
}
