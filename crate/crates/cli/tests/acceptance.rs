//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tetra_oracle::{
    clip_halfspaces, exact_triangle, least_squares, matvec, matvec_transposed, singular_range,
    tet_chord_length, P3,
};
use tetraproj::geom::moller_trumbore;
use tetraproj::rstar::{MAX_FAN, MIN_FAN};
use tetraproj::solvers::{cgls_f64, os_sart};
use tetraproj::trace::{project, trace_path};
use tetraproj::{
    MeshGraph, Precision, Projector, RStarTree, Ray, RayStatus, ScanGeometry, SolveParams,
    TraceConfig, Vec3,
};
use tetraproj_cli::commands::{bench_mesh, cmd_bench, BenchArgs};
use tetraproj_cli::generate::{jittered_mesh, phantom, stress_geometry, stress_mesh, StressParams};

struct Outcome {
    pass: bool,
    summary: String,
}

fn outcome(pass: bool, summary: String) -> Outcome {
    Outcome { pass, summary }
}

fn p3(v: Vec3) -> P3 {
    [v.x, v.y, v.z]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Shared meshes
// ---------------------------------------------------------------------------

fn a2_mesh() -> MeshGraph {
    jittered_mesh(2, -1.0, 1.0, 0.3, 11).unwrap()
}

fn a3_mesh() -> MeshGraph {
    jittered_mesh(8, -1.0, 1.0, 0.0, 0).unwrap()
}

fn a5_mesh() -> MeshGraph {
    jittered_mesh(3, -1.0, 1.0, 0.25, 4).unwrap()
}

fn a3_geometry() -> ScanGeometry {
    ScanGeometry::circular(60, 5.0, 10.0, 64, 64, 0.12, 0.12).unwrap()
}

/// Outward half-spaces `n·x <= c` of the boundary faces; for a convex mesh
/// their intersection is the hull.
fn hull_halfspaces(g: &MeshGraph) -> Vec<(P3, f64)> {
    g.boundary()
        .iter()
        .map(|b| {
            let e = b.element as usize;
            let f = g.face_points(e, b.face as usize);
            let apex = g.tet_points(e)[b.face as usize];
            let mut n = (f[1] - f[0]).cross(&(f[2] - f[0]));
            if n.dot(&(apex - f[0])) > 0.0 {
                n = -n;
            }
            (p3(n), n.dot(&f[0]))
        })
        .collect()
}

fn random_ray_through_bbox(rng: &mut ChaCha8Rng, g: &MeshGraph) -> Ray {
    let (lo, hi) = g.bbox();
    let span = g.diagonal();
    let through = Vec3::from_fn(|i, _| rng.gen_range(lo[i]..=hi[i]));
    let dir = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0)).normalize();
    Ray::new(through - dir * 2.0 * span, through + dir * 2.0 * span).unwrap()
}

// ---------------------------------------------------------------------------
// A1
// ---------------------------------------------------------------------------

const DET_CUTOFF: f64 = 1e-8;

fn a1() -> Outcome {
    const PAIRS: usize = 100_000;
    let eps = TraceConfig::default().eps0;
    let mut rng = ChaCha8Rng::seed_from_u64(0xA1);
    let (mut hits, mut band, mut band_disagree, mut below_cutoff) = (0, 0, 0, 0);
    let mut bad_class = 0;
    let mut worst_t: f64 = 0.0;
    for i in 0..PAIRS {
        let scale = 10f64.powf(rng.gen_range(-3.0..=3.0));
        let centre = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0)) * scale;
        let p: Vec<Vec3> = (0..3)
            .map(|_| centre + Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0)) * scale)
            .collect();
        // Aim at a barycentric point that lands inside, outside, or (every
        // tenth pair) exactly on an edge.
        let (mut a, mut b) = (rng.gen_range(-0.3..1.2), rng.gen_range(-0.3..1.2));
        if i % 10 == 0 {
            match rng.gen_range(0..3) {
                0 => a = 0.0,
                1 => b = 0.0,
                _ => b = 1.0 - a,
            }
        }
        let target = p[0] + (p[1] - p[0]) * a + (p[2] - p[0]) * b;
        let dir = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0)).normalize();
        // Rays span source to detector: at least ten units whatever the scale.
        let len = 10.0 * scale.max(1.0);
        let along = rng.gen_range(0.2..0.8);
        let r1 = target - dir * (len * along);
        let r2 = target + dir * (len * (1.0 - along));
        let ray = Ray::new(r1, r2).unwrap();

        let exact = exact_triangle(p3(r1), p3(r2), p3(p[0]), p3(p[1]), p3(p[2]));
        let got = moller_trumbore(&ray, &p[0], &p[1], &p[2], eps);
        // The predicate treats |det| < 1e-8 as parallel and accepts margins
        // down to -eps.
        let above_cutoff = !exact.parallel && exact.det.abs() >= DET_CUTOFF;
        if !above_cutoff {
            below_cutoff += 1;
        }
        let expect_hit = above_cutoff && exact.margin >= -eps;
        let in_band = exact.margin.abs() <= 2.0 * eps
            || (exact.det.abs() - DET_CUTOFF).abs() <= 1e-6 * DET_CUTOFF;
        if in_band {
            band += 1;
        }
        if got.is_some() != expect_hit {
            if in_band {
                band_disagree += 1;
            } else {
                bad_class += 1;
            }
        }
        if let (Some(t), Some(te)) = (got, exact.t) {
            hits += 1;
            worst_t = worst_t.max((t - te).abs() / te.abs());
        }
    }
    let pass = bad_class == 0 && worst_t <= 1e-10;
    outcome(
        pass,
        format!(
            "{PAIRS} pairs, {hits} hits, {bad_class} hit/miss disagreements outside the eps band \
             ({band_disagree} of {band} in-band), worst relative t error {worst_t:.2e}, \
             {below_cutoff} below the determinant cutoff"
        ),
    )
}

// ---------------------------------------------------------------------------
// A2
// ---------------------------------------------------------------------------

fn a2() -> Outcome {
    let g = a2_mesh();
    let tree = RStarTree::build(&g).unwrap();
    let mut scan = ScanGeometry::circular(8, 4.0, 8.0, 16, 16, 0.35, 0.35).unwrap();
    scan.offset_u = 0.07;
    scan.offset_v = -0.11;
    let op = Projector::new(&g, &tree, &scan, TraceConfig::for_mesh(&g));
    let angles = op.all_angles();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA2);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..scan.ray_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (ax, _) = op.forward(&x, &angles);
        let (aty, _) = op.adjoint(&y, &angles);
        let gap = (dot(&ax, &y) - dot(&x, &aty)).abs() / (norm(&ax) * norm(&y));
        worst = worst.max(gap);
    }
    outcome(
        g.len() == 48 && worst < 1e-10,
        format!("{} elements, 20 pairs, worst normalised gap {worst:.2e}", g.len()),
    )
}

// ---------------------------------------------------------------------------
// A3 / A9
// ---------------------------------------------------------------------------

fn a3_reconstruct() -> (Vec<f64>, Vec<f64>, Duration) {
    let g = a3_mesh();
    let tree = RStarTree::build(&g).unwrap();
    let scan = a3_geometry();
    let truth = phantom(&g);
    let cfg = TraceConfig::for_mesh(&g);
    let start = Instant::now();
    let (data, _) = project(&g, &tree, &truth, &scan, &cfg).unwrap();
    let op = Projector::new(&g, &tree, &scan, cfg);
    let rec = os_sart(&op, &data, &SolveParams::default()).unwrap();
    (rec.values, truth.to_f64(), start.elapsed())
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    with_threads(1, f)
}

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .unwrap()
        .install(f)
}

fn a3() -> (Outcome, Vec<f64>) {
    let (x, truth, elapsed) = single_thread(a3_reconstruct);
    let diff: Vec<f64> = x.iter().zip(&truth).map(|(a, b)| a - b).collect();
    let rel = norm(&diff) / norm(&truth);
    let levels: std::collections::BTreeSet<u64> = truth.iter().map(|v| v.to_bits()).collect();
    let pass = rel < 0.01 && elapsed < Duration::from_secs(300) && levels.len() == 3;
    let summary = format!(
        "{} elements, 60 angles, 64x64, OS-SART 50/20: relative RMSE {:.3}% in {:.1} s (1 thread)",
        x.len(),
        100.0 * rel,
        elapsed.as_secs_f64()
    );
    (outcome(pass, summary), x)
}

fn a9(reference_one_thread: &[f64]) -> Outcome {
    let mut mismatched = Vec::new();
    for n in [2, 8] {
        let (x, _, _) = with_threads(n, a3_reconstruct);
        let same = x.len() == reference_one_thread.len()
            && x.iter().zip(reference_one_thread).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            mismatched.push(n);
        }
    }
    outcome(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            "A3 field bitwise identical with 1, 2 and 8 workers".into()
        } else {
            format!("fields differ from the 1-worker run with {mismatched:?} workers")
        },
    )
}

// ---------------------------------------------------------------------------
// A4
// ---------------------------------------------------------------------------

fn a4() -> Outcome {
    let meshes: Vec<(&str, MeshGraph)> = vec![
        ("A2 jittered", a2_mesh()),
        ("A3 regular", a3_mesh()),
        ("A5 jittered", a5_mesh()),
        ("A6 regular 32", bench_mesh(32).unwrap()),
        ("A7 stress", stress_mesh(&StressParams::default()).unwrap()),
    ];
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, (name, g)) in meshes.iter().enumerate() {
        let tree = RStarTree::build(g).unwrap();
        let cfg = TraceConfig::for_mesh(g);
        let hull = hull_halfspaces(g);
        let tol = 1e-9 * g.diagonal();
        let mut rng = ChaCha8Rng::seed_from_u64(0xA4 + k as u64);
        let (mut aborted, mut bad, mut over_budget) = (0, 0, 0);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let ray = random_ray_through_bbox(&mut rng, g);
            let mut total = 0.0;
            let path = trace_path(g, &tree, &ray, &cfg, |s| total += s.chord);
            if matches!(path.status, RayStatus::Aborted(_)) {
                aborted += 1;
                continue;
            }
            if path.elements_visited > cfg.max_elements_per_ray {
                over_budget += 1;
            }
            let exact = clip_halfspaces(p3(ray.origin()), p3(ray.target()), &hull)
                .map_or(0.0, |(a, b)| (b - a) * ray.length());
            let err = (total - exact).abs();
            worst = worst.max(err / g.diagonal());
            if err > tol {
                bad += 1;
            }
        }
        pass &= aborted == 0 && bad == 0 && over_budget == 0;
        parts.push(format!(
            "{name}: {aborted} aborted, {bad} off, worst {worst:.1e}·diag"
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!("10^4 rays per mesh in {:.1} s; {}", elapsed.as_secs_f64(), parts.join("; ")),
    )
}

// ---------------------------------------------------------------------------
// A5
// ---------------------------------------------------------------------------

fn a5() -> Outcome {
    let g = a5_mesh();
    let tree = RStarTree::build(&g).unwrap();
    // Off-centre detector so no ray lies inside a shared face, where the
    // per-element oracle would count the chord twice.
    let mut scan = ScanGeometry::circular(8, 5.0, 10.0, 12, 12, 0.55, 0.55).unwrap();
    scan.offset_u = 0.137;
    scan.offset_v = -0.291;
    let op = Projector::new(&g, &tree, &scan, TraceConfig::for_mesh(&g));
    let angles = op.all_angles();

    let rows: Vec<Vec<f64>> = (0..scan.ray_count())
        .map(|i| {
            let ray = scan.ray_at(i);
            (0..g.len())
                .map(|e| {
                    let pts = g.tet_points(e).map(p3);
                    tet_chord_length(p3(ray.origin()), p3(ray.target()), &pts)
                })
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(0xA5);
    let x: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(0.0..2.0)).collect();
    let y: Vec<f64> = (0..scan.ray_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (ax, _) = op.forward(&x, &angles);
    let (aty, _) = op.adjoint(&y, &angles);
    let fwd = max_abs_diff(&ax, &matvec(&rows, &x));
    let adj = max_abs_diff(&aty, &matvec_transposed(&rows, &y));

    // Inconsistent data so the least-squares problem has a non-zero residual.
    let b: Vec<f64> = matvec(&rows, &x)
        .into_iter()
        .map(|v| v + rng.gen_range(-0.01..0.01))
        .collect();
    let (smin, smax) = singular_range(&rows);
    let dense = least_squares(&rows, &b);
    let rec = cgls_f64(&op, &b, 2000).unwrap();
    let diff: Vec<f64> = rec.values.iter().zip(&dense).map(|(a, b)| a - b).collect();
    let cg = norm(&diff) / norm(&dense);

    outcome(
        g.len() <= 200 && fwd <= 1e-10 && adj <= 1e-10 && cg <= 1e-6,
        format!(
            "{} elements, {} rays: |Ax - A_dense x| {fwd:.1e}, |A'y - A_dense'y| {adj:.1e}, \
             CGLS vs dense LS {cg:.1e} after {} iterations (cond {:.1e})",
            g.len(),
            scan.ray_count(),
            rec.iterations,
            smax / smin
        ),
    )
}

// ---------------------------------------------------------------------------
// A6
// ---------------------------------------------------------------------------

/// Exhaustive entry search with the same tie rule as the tree.
fn first_hit_exhaustive(g: &MeshGraph, ray: &Ray, eps: f64) -> Option<(u32, f64)> {
    let mut best: Option<(u32, f64)> = None;
    for b in g.boundary() {
        let f = g.face_points(b.element as usize, b.face as usize);
        let Some(t) = moller_trumbore(ray, &f[0], &f[1], &f[2], eps) else {
            continue;
        };
        if t < 0.0 {
            continue;
        }
        if best.is_none_or(|(e, bt)| t < bt || (t == bt && b.element < e)) {
            best = Some((b.element, t));
        }
    }
    best
}

fn a6() -> Outcome {
    let start = Instant::now();
    let eps = TraceConfig::default().eps0;
    let mut pass = true;
    let mut parts = Vec::new();

    // Entry search against the exhaustive scan.
    let g = jittered_mesh(10, -1.0, 1.0, 0.3, 6).unwrap();
    let tree = RStarTree::build(&g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA6);
    let (mut mismatches, mut entered) = (0, 0);
    for _ in 0..10_000 {
        // Half the rays start inside the box, so some miss every face.
        let ray = random_ray_through_bbox(&mut rng, &g);
        let ray = if rng.gen_bool(0.5) {
            ray
        } else {
            Ray::new(ray.point(0.5) + Vec3::repeat(1.7), ray.target()).unwrap()
        };
        let a = tree.first_hit(&g, &ray).map(|h| (h.element, h.t));
        let b = first_hit_exhaustive(&g, &ray, eps);
        entered += a.is_some() as usize;
        if a.map(|(e, t)| (e, t.to_bits())) != b.map(|(e, t)| (e, t.to_bits())) {
            mismatches += 1;
        }
    }
    pass &= mismatches == 0;
    parts.push(format!("first_hit: {mismatches} mismatches over 10^4 rays ({entered} entering)"));

    // Shape on regular meshes up to 6·32^3 elements.
    for n in [8, 16, 24, 32] {
        let g = bench_mesh(n).unwrap();
        let tree = RStarTree::build(&g).unwrap();
        let infos = tree.node_infos();
        let root_fan = infos[0].fanout;
        let inner_ok = infos[1..].iter().all(|i| (MIN_FAN..=MAX_FAN).contains(&i.fanout));
        let root_ok = (2..=MAX_FAN).contains(&root_fan) || infos.len() == 1;
        let leaf_depths: std::collections::BTreeSet<usize> =
            infos.iter().filter(|i| i.leaf).map(|i| i.depth).collect();
        let ok = inner_ok && root_ok && leaf_depths.len() == 1;
        pass &= ok;
        parts.push(format!(
            "{} el / {} faces: depth {}, root fan-out {root_fan}, other fan-outs in [{MIN_FAN},{MAX_FAN}]: {inner_ok}, leaf depths {:?}",
            g.len(),
            g.boundary().len(),
            tree.depth(),
            leaf_depths
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(120);
    outcome(pass, format!("{:.1} s; {}", elapsed.as_secs_f64(), parts.join("; ")))
}

// ---------------------------------------------------------------------------
// A7
// ---------------------------------------------------------------------------

fn a7() -> Outcome {
    let p = StressParams::default();
    let g = stress_mesh(&p).unwrap();
    let scan = stress_geometry(&p, 8).unwrap();
    let tree = RStarTree::build(&g).unwrap();
    let field = tetraproj::AttenuationField::uniform(g.len(), 1.0);
    let per = scan.pixels_per_angle() as u64;
    let mut counts = Vec::new();
    for precision in [Precision::Single, Precision::Double] {
        let cfg = TraceConfig::for_mesh(&g).with_precision(precision);
        let (_, diag) = project(&g, &tree, &field, &scan, &cfg).unwrap();
        let mut per_angle = vec![0u64; scan.n_angles()];
        for r in &diag.aborted_rays {
            per_angle[(r / per) as usize] += 1;
        }
        counts.push((diag.aborted_loop, diag.aborted_epsilon, per_angle));
    }
    let (single, double) = (&counts[0], &counts[1]);
    let pass = single.2.iter().all(|&c| c > 0) && double.2.iter().all(|&c| c == 0);
    outcome(
        pass,
        format!(
            "{} slivers, 8 angles: 32-bit {} looping + {} epsilon-exhausted, per angle {:?}; \
             64-bit {} aborted",
            g.len(),
            single.0,
            single.1,
            single.2,
            double.0 + double.1
        ),
    )
}

// ---------------------------------------------------------------------------
// A8
// ---------------------------------------------------------------------------

fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

fn a8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let args = BenchArgs {
        edge_lengths: vec![8, 16, 24, 32],
        detector: 64,
        angles: 4,
        repeats: 5,
        out: dir.path().join("bench.csv"),
    };
    let rows = single_thread(|| cmd_bench(&args)).expect("bench runs");
    let x: Vec<f64> = rows.iter().map(|r| r.edge_length as f64).collect();
    let prop: Vec<f64> = rows.iter().map(|r| r.propagation_ms).collect();
    let r2 = r_squared(&x, &prop);
    let ratio = rows[3].init_ms / rows[0].init_ms;
    let faces = rows[3].boundary_faces as f64 / rows[0].boundary_faces as f64;
    let table: Vec<String> = rows
        .iter()
        .map(|r| format!("n={} init {:.2} ms prop {:.2} ms", r.edge_length, r.init_ms, r.propagation_ms))
        .collect();
    outcome(
        r2 > 0.95 && ratio < 4.0,
        format!(
            "propagation R² {r2:.4}; init(32)/init(8) {ratio:.2} while boundary faces grow {faces:.0}x; {}",
            table.join(", ")
        ),
    )
}

fn main() {
    // `cargo test` passes harness flags; a name filter selects criteria.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |id: &str| filter.is_empty() || filter.iter().any(|f| id.contains(f.as_str()));

    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |id: &'static str, o: Outcome| {
        println!("{id} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.summary);
        results.push((id, o));
    };
    if wanted("A1") {
        report("A1", a1());
    }
    if wanted("A2") {
        report("A2", a2());
    }
    if wanted("A3") || wanted("A9") {
        let (o3, x) = a3();
        report("A3", o3);
        if wanted("A9") {
            report("A9", a9(&x));
        }
    }
    if wanted("A4") {
        report("A4", a4());
    }
    if wanted("A5") {
        report("A5", a5());
    }
    if wanted("A6") {
        report("A6", a6());
    }
    if wanted("A7") {
        report("A7", a7());
    }
    if wanted("A8") {
        report("A8", a8());
    }

    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(id, _)| *id).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: failed {failed:?}");
        std::process::exit(1);
    }
}
