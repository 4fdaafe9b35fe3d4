use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tetraproj_cli::projfile::read_proj;

fn tetraproj(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tetraproj"))
        .current_dir(dir)
        .args(args)
        .env_remove("TETRAPROJ_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = tetraproj(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Small cube mesh, phantom and geometry in `dir`.
fn scene(dir: &Path) {
    ok(dir, &["generate", "mesh", "--n", "3", "--jitter", "0.2", "--out", "m"]);
    ok(dir, &["generate", "phantom", "--mesh", "m", "--out", "f.txt"]);
    ok(
        dir,
        &[
            "generate", "geometry", "--angles", "6", "--n-u", "12", "--n-v", "10", "--du",
            "0.7", "--dv", "0.7", "--out", "g.json",
        ],
    );
}

#[test]
fn project_writes_stack_sidecar_previews_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scene(d);
    ok(
        d,
        &[
            "project", "--mesh", "m", "--field", "f.txt", "--geometry", "g.json", "--out", "p",
            "--preview", "--window", "0:4",
        ],
    );
    let (stack, scan, sidecar) = read_proj(&d.join("p")).unwrap();
    assert_eq!(stack.dims(), (6, 10, 12));
    assert_eq!(scan.n_angles(), 6);
    assert_eq!(sidecar.diagnostics.unwrap().aborted(), 0);
    assert!(stack.data.iter().any(|&v| v > 0.0));
    for a in 0..6 {
        assert!(d.join(format!("p_{a:03}.png")).exists());
    }
    let m = json(d.join("p.manifest.json"));
    assert_eq!(m["command"], "project");
    assert_eq!(m["diagnostics"]["aborted_loop"], 0);
    assert_eq!(m["trace"]["precision"], "double");
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scene(d);
    ok(d, &["project", "--mesh", "m", "--field", "f.txt", "--geometry", "g.json", "--out", "p"]);
    let mut fields = Vec::new();
    for threads in ["1", "3"] {
        let out = format!("r{threads}.txt");
        let status = Command::new(env!("CARGO_BIN_EXE_tetraproj"))
            .current_dir(d)
            .args(["reconstruct", "--mesh", "m", "--proj", "p", "--iters", "5", "--block", "2"])
            .args(["--out", &out])
            .env("TETRAPROJ_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success());
        fields.push(std::fs::read(d.join(&out)).unwrap());
    }
    assert_eq!(fields[0], fields[1]);
}

#[test]
fn reconstruct_records_solver_settings() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scene(d);
    ok(d, &["project", "--mesh", "m", "--field", "f.txt", "--geometry", "g.json", "--out", "p"]);
    ok(
        d,
        &["reconstruct", "--mesh", "m", "--proj", "p.proj", "--algo", "cgls", "--iters", "7", "--out", "x.raw"],
    );
    let m = json(d.join("x.raw.manifest.json"));
    assert_eq!(m["solver"]["algo"], "cgls");
    assert_eq!(m["solver"]["state_precision"], "f64");
    assert_eq!(m["solver"]["iterations_requested"], 7);
    assert!(m["solver"]["residuals"].as_array().unwrap().len() >= 2);
    assert!(m["solver"].get("block_size").is_none());
    // Raw f32, one value per element.
    assert_eq!(std::fs::metadata(d.join("x.raw")).unwrap().len(), 4 * 162);

    ok(
        d,
        &["reconstruct", "--mesh", "m", "--proj", "p", "--iters", "3", "--block", "2", "--nonneg", "--out", "y.txt"],
    );
    let m = json(d.join("y.txt.manifest.json"));
    assert_eq!(m["solver"]["algo"], "os-sart");
    assert_eq!(m["solver"]["block_size"], 2);
    assert_eq!(m["solver"]["nonneg"], true);
    let values: Vec<f32> = std::fs::read_to_string(d.join("y.txt"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(values.len(), 162);
    assert!(values.iter().all(|&v| v >= 0.0));
}

#[test]
fn validate_reports_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scene(d);
    let out = ok(d, &["validate", "--mesh", "m", "--json", "v.json"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("status: clean"));
    assert_eq!(json(d.join("v.json"))["clean"], true);

    // Two tetrahedra glued along a face whose apexes make the union
    // non-convex.
    std::fs::write(
        d.join("bad.node"),
        "5 3 0 0\n0 0 0 0\n1 1 0 0\n2 0 1 0\n3 0 0 1\n4 2 2 -1\n",
    )
    .unwrap();
    std::fs::write(d.join("bad.ele"), "2 4 0\n0 0 1 2 3\n1 0 1 2 4\n").unwrap();
    let out = tetraproj(d, &["validate", "--mesh", "bad"]);
    assert_eq!(out.status.code(), Some(2));
    let report = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(report.contains("convexity violations: ") && !report.contains("convexity violations: 0"));
    assert!(!report.contains("status: clean"));

    let out = tetraproj(d, &["project", "--mesh", "bad", "--field", "f.txt", "--geometry", "g.json", "--out", "q"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("q.proj").exists());
}

#[test]
fn malformed_inputs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scene(d);
    let out = tetraproj(d, &["validate", "--mesh", "missing"]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(d.join("broken.node"), "4 3 0 0\n0 0 0 0\n1 1 x 0\n2 0 1 0\n3 0 0 1\n").unwrap();
    std::fs::copy(d.join("m.ele"), d.join("broken.ele")).unwrap();
    let out = tetraproj(d, &["validate", "--mesh", "broken"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.node:3"));

    std::fs::write(d.join("short.txt"), "1\n2\n").unwrap();
    let out = tetraproj(d, &["project", "--mesh", "m", "--field", "short.txt", "--geometry", "g.json", "--out", "p"]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(d.join("neg.json"), r#"{"dso": -1}"#).unwrap();
    let out = tetraproj(d, &["project", "--mesh", "m", "--field", "f.txt", "--geometry", "neg.json", "--out", "p"]);
    assert_eq!(out.status.code(), Some(2));

    let out = tetraproj(d, &["reconstruct", "--mesh", "m", "--proj", "nothing", "--out", "r.txt"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn aborted_rays_exit_with_code_3_after_writing_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "stress", "--angles", "2", "--out", "s"]);
    ok(d, &["generate", "phantom", "--mesh", "s", "--out", "sf.txt"]);
    let args = [
        "project", "--mesh", "s", "--field", "sf.txt", "--geometry", "s.geometry.json", "--out",
        "sp", "--precision", "single",
    ];
    let out = tetraproj(d, &args);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("sp.proj").exists());
    let aborted = json(d.join("sp.manifest.json"))["diagnostics"]["aborted_loop"]
        .as_u64()
        .unwrap();
    assert!(aborted > 0);

    let mut relaxed = args.to_vec();
    let limit = aborted.to_string();
    relaxed.extend(["--max-aborted", &limit]);
    ok(d, &relaxed);

    let double = [
        "project", "--mesh", "s", "--field", "sf.txt", "--geometry", "s.geometry.json", "--out",
        "dp",
    ];
    ok(d, &double);
}

#[test]
fn fp_study_reports_both_precisions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "stress", "--angles", "3", "--out", "s"]);
    ok(d, &["fp-study", "--mesh", "s", "--geometry", "s.geometry.json", "--out", "fp"]);
    assert!(d.join("fp_single.png").exists());
    assert!(d.join("fp_double.png").exists());
    let details = &json(d.join("fp.manifest.json"))["details"];
    assert_eq!(details["double"]["aborted"], 0);
    let per_angle: Vec<u64> = details["single"]["per_angle"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(per_angle.len(), 3);
    assert!(per_angle.iter().all(|&c| c > 0), "{per_angle:?}");
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &["bench", "--edge-lengths", "2,4", "--detector", "8", "--angles", "2", "--repeats", "1", "--out", "b.csv"],
    );
    let csv = std::fs::read_to_string(d.join("b.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "edge_length,elements,boundary_faces,rays,init_ms,propagation_ms");
    assert!(lines[1].starts_with("2,48,48,64,"));
    assert!(lines[2].starts_with("4,384,192,64,"));
}
