mod common;

use common::{constant_flow, small_abc};
use lbto_core::extract::{run_extraction_with, ExecOptions, ExtractionConfig, FlowMapDataset, Strategy};
use lbto_core::geom::{Aabb, Point};
use lbto_core::reconstruct::{
    fill_holes, reconstruct_flowmap, trace_pathline, triangulate, LatticeMap, Location, Mode, PathlineStatus,
};
use rand::{rngs::StdRng, Rng, SeedableRng};

fn run(config: &ExtractionConfig) -> FlowMapDataset {
    run_extraction_with(config, &ExecOptions::sequential()).unwrap().dataset
}

fn random_points(rng: &mut StdRng, n: usize, d: usize) -> Vec<Point> {
    (0..n).map(|_| std::array::from_fn(|a| if a < d { rng.gen::<f64>() } else { 0.0 })).collect()
}

/// Circumcenter by solving 2 (c - a) . (b_i - a) = |b_i|^2 - |a|^2 with
/// Cramer's rule.
fn circumsphere(v: &[Point], d: usize) -> (Point, f64) {
    let a = v[0];
    let mut m = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for i in 0..d {
        for k in 0..d {
            m[i][k] = 2.0 * (v[i + 1][k] - a[k]);
        }
        rhs[i] = (0..d).map(|k| v[i + 1][k] * v[i + 1][k] - a[k] * a[k]).sum();
    }
    let det = |m: &[[f64; 3]; 3]| {
        if d == 2 {
            m[0][0] * m[1][1] - m[0][1] * m[1][0]
        } else {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
    };
    let full = det(&m);
    let mut c = [0.0; 3];
    for k in 0..d {
        let mut mk = m;
        for i in 0..d {
            mk[i][k] = rhs[i];
        }
        c[k] = det(&mk) / full;
    }
    let r = (0..d).map(|k| (a[k] - c[k]).powi(2)).sum::<f64>().sqrt();
    (c, r)
}

fn check_empty_circumspheres(pts: &[Point], d: usize) {
    let tri = triangulate(pts, d).unwrap();
    assert!(!tri.is_empty());
    for s in tri.simplices() {
        let v: Vec<Point> = s.iter().map(|&i| pts[i]).collect();
        let (c, r) = circumsphere(&v, d);
        for (j, q) in pts.iter().enumerate() {
            if s.contains(&j) {
                continue;
            }
            let dist = (0..d).map(|k| (q[k] - c[k]).powi(2)).sum::<f64>().sqrt();
            assert!(dist >= r * (1.0 - 1e-9), "point {j} inside circumsphere of {s:?}");
        }
    }
}

#[test]
fn random_triangulations_are_delaunay() {
    let mut rng = StdRng::seed_from_u64(7);
    for d in [2, 3] {
        for _ in 0..10 {
            let n = rng.gen_range(d + 1..=30);
            check_empty_circumspheres(&random_points(&mut rng, n, d), d);
        }
    }
}

/// Exhaustive containment test over every simplex.
fn containing(pts: &[Point], simplices: &[Vec<usize>], x: &Point, d: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for (s, v) in simplices.iter().enumerate() {
        let (c, _) = circumsphere(&v.iter().map(|&i| pts[i]).collect::<Vec<_>>(), d);
        let _ = c;
        // Barycentric via least-squares-free solve: x - v0 = sum w_i (v_i - v0).
        let a = pts[v[0]];
        let mut m = [[0.0; 3]; 3];
        for i in 0..d {
            for k in 0..d {
                m[k][i] = pts[v[i + 1]][k] - a[k];
            }
        }
        let b: Vec<f64> = (0..d).map(|k| x[k] - a[k]).collect();
        let w = solve(&m, &b, d);
        let w0 = 1.0 - w.iter().sum::<f64>();
        if w0 >= -1e-9 && w.iter().all(|&wi| wi >= -1e-9) {
            out.push(s);
        }
    }
    out
}

fn solve(m: &[[f64; 3]; 3], b: &[f64], d: usize) -> Vec<f64> {
    // Gaussian elimination with partial pivoting.
    let mut a: Vec<Vec<f64>> = (0..d).map(|i| { let mut r = m[i][..d].to_vec(); r.push(b[i]); r }).collect();
    for col in 0..d {
        let p = (col..d).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, p);
        for r in col + 1..d {
            let f = a[r][col] / a[col][col];
            for k in col..=d {
                a[r][k] -= f * a[col][k];
            }
        }
    }
    let mut x = vec![0.0; d];
    for r in (0..d).rev() {
        let s: f64 = (r + 1..d).map(|k| a[r][k] * x[k]).sum();
        x[r] = (a[r][d] - s) / a[r][r];
    }
    x
}

#[test]
fn locate_matches_exhaustive_scan() {
    let mut rng = StdRng::seed_from_u64(11);
    for d in [2, 3] {
        let mut pts = random_points(&mut rng, 40, d);
        // Box corners make the unit box the hull.
        for c in 0..(1 << d) {
            pts.push(std::array::from_fn(|a| if a < d { ((c >> a) & 1) as f64 } else { 0.0 }));
        }
        let tri = triangulate(&pts, d).unwrap();
        let simplices: Vec<Vec<usize>> = tri.simplices().map(|s| s.to_vec()).collect();
        for _ in 0..200 {
            let x = random_points(&mut rng, 1, d)[0];
            match tri.locate(&x) {
                Location::Inside { simplex, weights, vertices } => {
                    assert!(containing(&pts, &simplices, &x, d).contains(&simplex));
                    assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    for k in 0..d {
                        let r: f64 = (0..=d).map(|i| weights[i] * pts[vertices[i]][k]).sum();
                        assert!((r - x[k]).abs() < 1e-12);
                    }
                }
                Location::Outside => panic!("in-hull point reported outside"),
            }
        }
    }
}

#[test]
fn delaunay_interpolation_is_affine_exact() {
    let mut rng = StdRng::seed_from_u64(3);
    for d in [2, 3, 2, 3, 2, 3, 2, 3] {
        let mut pts = random_points(&mut rng, 60, d);
        for c in 0..(1 << d) {
            pts.push(std::array::from_fn(|a| if a < d { ((c >> a) & 1) as f64 } else { 0.0 }));
        }
        let map = |x: &Point| -> Point { [0.3 + 1.2 * x[0] - 0.4 * x[1], 0.7 * x[1] + 0.2 * x[2] - 1.0, x[0] + x[2]] };
        let ends: Vec<Point> = pts.iter().map(map).collect();
        let tri = triangulate(&pts, d).unwrap();
        for _ in 0..300 {
            let x = random_points(&mut rng, 1, d)[0];
            let got = tri.interpolate(&x, &ends).unwrap();
            let want = map(&x);
            for k in 0..3 {
                assert!((got[k] - want[k]).abs() < 1e-12);
            }
        }
        for (p, e) in pts.iter().zip(&ends) {
            assert_eq!(tri.interpolate(p, &ends).unwrap(), *e);
        }
    }
}

#[test]
fn filled_hole_in_smooth_map_is_second_order() {
    // f(u) = sin-free quadratic; one hole in the middle of an n x n lattice of
    // spacing h: the axis average of linear fills misses by h^2 * f''/2 terms.
    let f = |x: f64, y: f64| [x * x + 0.5 * y * y, x * y, 0.0];
    let mut errs = Vec::new();
    for n in [5usize, 9, 17] {
        let h = 1.0 / (n - 1) as f64;
        let mut map = LatticeMap::new([n, n, 1]);
        for j in 0..n {
            for i in 0..n {
                let idx = map.index([i, j, 0]);
                map.values[idx] = Some(f(i as f64 * h, j as f64 * h));
            }
        }
        let c = n / 2;
        let hole = map.index([c, c, 0]);
        map.values[hole] = None;
        let filled = fill_holes(&map).unwrap();
        let truth = f(c as f64 * h, c as f64 * h);
        let err = ((filled.values[hole][0] - truth[0]).powi(2) + (filled.values[hole][1] - truth[1]).powi(2)).sqrt();
        // Exact value: average of h^2 (x-axis) and 0.5 h^2 (y-axis).
        assert!((err - 0.75 * h * h).abs() < 1e-12, "{err}");
        errs.push(err);
    }
    assert!(errs.windows(2).all(|w| (w[0] / w[1] - 4.0).abs() < 1e-6));
}

fn zero_field(dir: &std::path::Path, layout: [usize; 2], reduction: u32, strategy: Strategy) -> ExtractionConfig {
    let domain = Aabb::new([0.0; 3], [1.0, 1.0, 0.0], 2);
    lbto_core::io::lvel::write_series(dir, domain, [9, 9, 1], 12, |_, _| [0.0; 3]).unwrap();
    ExtractionConfig {
        field: lbto_core::fields::FieldSpec::gridded(dir.to_path_buf(), 0.1),
        decomposition: lbto_core::domain::DecompositionSpec { global_dims: vec![9, 9], rank_layout: layout.to_vec() },
        interval: 4,
        reduction: lbto_core::domain::Reduction(reduction),
        total_cycles: 12,
        strategy,
        rng_seed: 0,
    }
}

#[test]
fn zero_discard_reconstruction_returns_stored_ends() {
    let dir = tempfile::tempdir().unwrap();
    let ds = run(&zero_field(dir.path(), [2, 2], 1, Strategy::Bto));
    assert_eq!(ds.total_stats().discarded, 0);
    for mode in [Mode::GridFill, Mode::Delaunay] {
        for k in 0..3 {
            for set in &ds.sets[k] {
                let seeds: Vec<Point> = set.flows.iter().map(|f| f.seed).collect();
                let rec = reconstruct_flowmap(&ds, &seeds, k, mode).unwrap();
                assert_eq!(rec.outside, 0);
                for (f, e) in set.flows.iter().zip(&rec.ends) {
                    assert_eq!(e.unwrap(), f.end, "{mode:?}");
                }
            }
        }
    }
}

#[test]
fn single_rank_reconstructions_agree() {
    let bto = run(&small_abc(10, [1, 1, 1], 10, 20, 8, Strategy::Bto));
    let exch = run(&small_abc(10, [1, 1, 1], 10, 20, 8, Strategy::Exchange));
    let mut rng = StdRng::seed_from_u64(5);
    let probes: Vec<Point> = (0..50).map(|_| std::array::from_fn(|_| rng.gen::<f64>() * 6.0)).collect();
    for mode in [Mode::GridFill, Mode::Delaunay] {
        let a = reconstruct_flowmap(&bto, &probes, 1, mode).unwrap();
        let b = reconstruct_flowmap(&exch, &probes, 1, mode).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn constant_flow_band_is_reconstructed_within_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let bto = run(&constant_flow(dir.path(), 2, Strategy::Bto));
    let exch = run(&constant_flow(dir.path(), 2, Strategy::Exchange));
    // Upper bound on the band width: ht * vmax + hx.
    let bound = 5.0 * 0.04 * 1.0 + 1.0 / 19.0;
    for mode in [Mode::GridFill, Mode::Delaunay] {
        for k in 0..2 {
            let flows = &exch.sets[k][0].flows;
            let seeds: Vec<Point> = flows.iter().map(|f| f.seed).collect();
            let rec = reconstruct_flowmap(&bto, &seeds, k, mode).unwrap();
            for (f, e) in flows.iter().zip(&rec.ends) {
                let e = e.expect("seed inside the hull");
                let err = ((e[0] - f.end[0]).powi(2) + (e[1] - f.end[1]).powi(2)).sqrt();
                assert!(err <= bound);
                // A translation is affine, so the fill is exact here.
                assert!(err < 1e-12, "{mode:?} {err}");
            }
        }
    }
}

#[test]
fn uniform_flow_pathline_truncates_at_the_face() {
    let dir = tempfile::tempdir().unwrap();
    let domain = Aabb::new([0.0; 3], [1.0; 3], 3);
    lbto_core::io::lvel::write_series(dir.path(), domain, [11, 11, 11], 10, |_, _| [1.0, 0.0, 0.0]).unwrap();
    let cfg = ExtractionConfig {
        field: lbto_core::fields::FieldSpec::gridded(dir.path().to_path_buf(), 0.1),
        decomposition: lbto_core::domain::DecompositionSpec { global_dims: vec![11, 11, 11], rank_layout: vec![2, 1, 1] },
        interval: 5,
        reduction: lbto_core::domain::Reduction(1),
        total_cycles: 10,
        strategy: Strategy::Exchange,
        rng_seed: 0,
    };
    let ds = run(&cfg);
    for mode in [Mode::GridFill, Mode::Delaunay] {
        let line = trace_pathline(&ds, &[0.1, 0.5, 0.5], 0, 2, mode).unwrap();
        assert_eq!(line.samples.len(), 2);
        assert!((line.samples[1].1[0] - 0.6).abs() < 1e-12);
        assert!((line.samples[1].0 - 0.5).abs() < 1e-12);
        assert_ne!(line.status, PathlineStatus::Complete);
    }
}

#[test]
fn zero_field_pathline_stays_put() {
    let dir = tempfile::tempdir().unwrap();
    let ds = run(&zero_field(dir.path(), [2, 2], 4, Strategy::Bto));
    for mode in [Mode::GridFill, Mode::Delaunay] {
        let seed = [0.37, 0.61, 0.0];
        let line = trace_pathline(&ds, &seed, 0, 3, mode).unwrap();
        assert_eq!(line.status, PathlineStatus::Complete);
        assert_eq!(line.samples.len(), 4);
        for (_, p) in &line.samples {
            assert!((p[0] - seed[0]).abs() < 1e-12 && (p[1] - seed[1]).abs() < 1e-12);
        }
        assert!(line.samples.windows(2).all(|w| w[0].0 < w[1].0));
    }
}
