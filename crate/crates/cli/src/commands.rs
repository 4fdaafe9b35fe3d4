//! Subcommand definitions and implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use tetraproj::baseline::regular_tet_mesh;
use tetraproj::io::{load_mesh, read_field, write_field, write_mesh};
use tetraproj::solvers::{cgls, os_sart, sart};
use tetraproj::trace::{project, walk_from};
use tetraproj::{
    validate, AttenuationField, Diagnostics, MeshGraph, Precision, ProjectionStack, Projector,
    RStarTree, ScanGeometry, SolveParams, TraceConfig, ValidationReport, Vec3,
};

use crate::generate::{jittered_mesh, phantom, stress_geometry, stress_mesh, StressParams};
use crate::manifest::{RunManifest, SolverRecord};
use crate::preview::{parse_window, write_png};
use crate::projfile::{proj_paths, read_proj, write_proj, ProjSidecar};

/// Failure classes, mapped to process exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable, malformed or invalid input (exit 2).
    Input(anyhow::Error),
    /// More aborted rays than allowed (exit 3). Outputs were still written.
    Aborted { aborted: u64, allowed: u64 },
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Aborted { .. } => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Input(e) => {
                // Causes already quoted by their parent are not repeated.
                let mut last = e.to_string();
                write!(f, "{last}")?;
                for cause in e.chain().skip(1) {
                    let text = cause.to_string();
                    if !last.contains(&text) {
                        write!(f, ": {text}")?;
                    }
                    last = text;
                }
                Ok(())
            }
            Failure::Aborted { aborted, allowed } => {
                write!(f, "{aborted} rays aborted (allowed: {allowed})")
            }
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(name = "tetraproj", version, about = "Cone-beam projection on tetrahedral meshes")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "TETRAPROJ_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forward-project a field into a projection stack.
    Project(ProjectArgs),
    /// Reconstruct a field from a projection stack.
    Reconstruct(ReconstructArgs),
    /// Check a mesh for the invariants ray propagation needs.
    Validate(ValidateArgs),
    /// Time ray initialisation and propagation on regular meshes.
    Bench(BenchArgs),
    /// Project with 32-bit and 64-bit predicates and count aborted rays.
    FpStudy(FpStudyArgs),
    /// Write synthetic meshes, phantoms and geometries.
    #[command(subcommand)]
    Generate(GenerateCommand),
}

#[derive(Debug, Clone, Args)]
pub struct MeshArg {
    /// Mesh prefix: reads `<MESH>.node` and `<MESH>.ele`.
    #[arg(long)]
    pub mesh: PathBuf,
}

impl MeshArg {
    pub fn paths(&self) -> (PathBuf, PathBuf) {
        mesh_paths(&self.mesh)
    }
}

pub fn mesh_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let with = |ext: &str| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".node"), with(".ele"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    Single,
    Double,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Single => Precision::Single,
            PrecisionArg::Double => Precision::Double,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub mesh: MeshArg,
    /// Per-element field (`.txt` text or raw f32).
    #[arg(long)]
    pub field: PathBuf,
    /// Geometry JSON.
    #[arg(long)]
    pub geometry: PathBuf,
    /// Output prefix for `.proj`, `.json` and `.manifest.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Write one PNG per angle.
    #[arg(long)]
    pub preview: bool,
    /// Fixed preview window instead of per-image min/max.
    #[arg(long, value_parser = parse_window)]
    pub window: Option<(f32, f32)>,
    /// Exit with code 3 when more rays than this abort.
    #[arg(long, default_value_t = 0)]
    pub max_aborted: u64,
    #[arg(long, value_enum, default_value_t = PrecisionArg::Double)]
    pub precision: PrecisionArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    OsSart,
    Sart,
    Cgls,
}

#[derive(Debug, Clone, Args)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub mesh: MeshArg,
    /// Projection prefix (`<PROJ>.proj` + `<PROJ>.json`).
    #[arg(long)]
    pub proj: PathBuf,
    #[arg(long, value_enum, default_value_t = Algo::OsSart)]
    pub algo: Algo,
    #[arg(long, default_value_t = 50)]
    pub iters: usize,
    /// Projections per OS-SART block.
    #[arg(long, default_value_t = 20)]
    pub block: usize,
    #[arg(long, default_value_t = 1.0)]
    pub relax: f64,
    #[arg(long)]
    pub nonneg: bool,
    /// Output field (`.txt` text, anything else raw f32).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub mesh: MeshArg,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Cells per cube edge, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "8,16,24,32")]
    pub edge_lengths: Vec<usize>,
    /// Detector pixels per side.
    #[arg(long, default_value_t = 64)]
    pub detector: usize,
    #[arg(long, default_value_t = 4)]
    pub angles: usize,
    /// Timing repetitions; the fastest is reported.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FpStudyArgs {
    #[command(flatten)]
    pub mesh: MeshArg,
    #[arg(long)]
    pub geometry: PathBuf,
    /// Field to project (default: 1 everywhere).
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Output prefix for the PNGs and the manifest.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum GenerateCommand {
    /// Regular (optionally jittered) Kuhn mesh of a cube.
    Mesh(GenMeshArgs),
    /// Thin tilted sliver slab plus a matching long-range geometry.
    Stress(GenStressArgs),
    /// Three-value phantom (0, 1, 2) on the elements of a mesh.
    Phantom(GenPhantomArgs),
    /// Circular geometry JSON.
    Geometry(GenGeometryArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GenMeshArgs {
    /// Cells per edge.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub hi: f64,
    /// Random interior displacement, in cells (< 0.5).
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output prefix for `.node` / `.ele`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GenStressArgs {
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 8)]
    pub angles: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output prefix: `.node`, `.ele` and `.geometry.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GenPhantomArgs {
    #[command(flatten)]
    pub mesh: MeshArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GenGeometryArgs {
    #[arg(long, default_value_t = 60)]
    pub angles: usize,
    #[arg(long, default_value_t = 5.0)]
    pub dso: f64,
    #[arg(long, default_value_t = 10.0)]
    pub dsd: f64,
    #[arg(long, default_value_t = 64)]
    pub n_u: usize,
    #[arg(long, default_value_t = 64)]
    pub n_v: usize,
    #[arg(long, default_value_t = 0.12)]
    pub du: f64,
    #[arg(long, default_value_t = 0.12)]
    pub dv: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs a parsed command line inside a pool of the requested size.
pub fn run(cli: Cli) -> Result<(), Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Input(anyhow!("--threads must be >= 1")));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| anyhow!(e))?;
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Project(a) => cmd_project(&a).map(|_| ()),
        Command::Reconstruct(a) => cmd_reconstruct(&a).map(|_| ()),
        Command::Validate(a) => {
            let (report, text) = cmd_validate(&a)?;
            print!("{text}");
            if report.is_clean() {
                Ok(())
            } else {
                Err(Failure::Input(anyhow!("mesh has {} issues", report.issue_count())))
            }
        }
        Command::Bench(a) => {
            for row in cmd_bench(&a)? {
                println!(
                    "n={:>3} elements={:>7} boundary={:>6} init={:.3} ms propagation={:.3} ms",
                    row.edge_length, row.elements, row.boundary_faces, row.init_ms, row.propagation_ms
                );
            }
            Ok(())
        }
        Command::FpStudy(a) => {
            let m = cmd_fp_study(&a)?;
            println!("{}", serde_json::to_string_pretty(&m.details)?);
            Ok(())
        }
        Command::Generate(g) => cmd_generate(&g),
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Loads a mesh and insists on a clean validation report.
pub fn load_valid_mesh(arg: &MeshArg) -> anyhow::Result<MeshGraph> {
    let (node, ele) = arg.paths();
    let graph = load_mesh(&node, &ele)?;
    let report = validate(&graph);
    if !report.is_clean() {
        return Err(anyhow!(
            "{}: mesh failed validation ({} issues; run `validate` for details)",
            arg.mesh.display(),
            report.issue_count()
        ));
    }
    Ok(graph)
}

pub fn cmd_project(a: &ProjectArgs) -> Result<RunManifest, Failure> {
    let mut m = RunManifest::new("project");
    let (node, ele) = a.mesh.paths();
    m.input("node", &node);
    m.input("ele", &ele);
    m.input("field", &a.field);
    m.input("geometry", &a.geometry);

    let start = Instant::now();
    let graph = load_valid_mesh(&a.mesh)?;
    let field = read_field(&a.field, graph.len())?;
    let scan = ScanGeometry::load(&a.geometry)?;
    m.time("load", start);

    let start = Instant::now();
    let tree = RStarTree::build(&graph)?;
    m.time("tree", start);

    let cfg = TraceConfig::for_mesh(&graph).with_precision(a.precision.into());
    let start = Instant::now();
    let (stack, diag) = project(&graph, &tree, &field, &scan, &cfg)?;
    m.time("project", start);

    let (raw, json) = proj_paths(&a.out);
    write_proj(&a.out, &stack, &ProjSidecar::new(&scan, Some(diag.clone())))?;
    m.output("proj", &raw);
    m.output("sidecar", &json);
    if a.preview {
        for angle in 0..stack.n_angles {
            let png = with_suffix(&a.out, &format!("_{angle:03}.png"));
            write_png(&png, stack.image(angle), stack.n_v, stack.n_u, a.window)?;
            m.output(&format!("preview_{angle:03}"), &png);
        }
    }
    m.geometry = Some(scan.to_config());
    m.trace = Some(cfg);
    m.diagnostics = Some(diag.clone());
    m.write(&with_suffix(&a.out, ".manifest.json"))?;

    if diag.aborted() > a.max_aborted {
        return Err(Failure::Aborted {
            aborted: diag.aborted(),
            allowed: a.max_aborted,
        });
    }
    Ok(m)
}

pub fn cmd_reconstruct(a: &ReconstructArgs) -> Result<RunManifest, Failure> {
    let mut m = RunManifest::new("reconstruct");
    let (node, ele) = a.mesh.paths();
    m.input("node", &node);
    m.input("ele", &ele);
    m.input("proj", &proj_paths(&a.proj).0);

    let start = Instant::now();
    let graph = load_valid_mesh(&a.mesh)?;
    let (stack, scan, _) = read_proj(&a.proj)?;
    m.time("load", start);

    let start = Instant::now();
    let tree = RStarTree::build(&graph)?;
    m.time("tree", start);

    let cfg = TraceConfig::for_mesh(&graph);
    let op = Projector::new(&graph, &tree, &scan, cfg);
    let params = SolveParams {
        iterations: a.iters,
        block_size: a.block,
        relax: a.relax,
        nonneg: a.nonneg,
    };
    let start = Instant::now();
    let (rec, record) = match a.algo {
        Algo::OsSart | Algo::Sart => {
            let (rec, name, block) = if a.algo == Algo::OsSart {
                (os_sart(&op, &stack, &params)?, "os-sart", a.block)
            } else {
                (sart(&op, &stack, &params)?, "sart", 1)
            };
            let record = SolverRecord {
                algo: name.into(),
                iterations_requested: a.iters,
                iterations_run: rec.iterations,
                block_size: Some(block),
                relax: Some(a.relax),
                nonneg: Some(a.nonneg),
                state_precision: "f64".into(),
                residuals: Vec::new(),
            };
            (rec, record)
        }
        Algo::Cgls => {
            let rec = cgls(&op, &stack, a.iters)?;
            let record = SolverRecord {
                algo: "cgls".into(),
                iterations_requested: a.iters,
                iterations_run: rec.iterations,
                block_size: None,
                relax: None,
                nonneg: None,
                state_precision: "f64".into(),
                residuals: rec.residuals.clone(),
            };
            (rec, record)
        }
    };
    m.time("solve", start);

    write_field(&a.out, &rec.field())?;
    m.output("field", &a.out);
    m.geometry = Some(scan.to_config());
    m.trace = Some(cfg);
    m.solver = Some(record);
    m.diagnostics = Some(rec.diagnostics);
    m.write(&with_suffix(&a.out, ".manifest.json"))?;
    Ok(m)
}

pub fn render_report(graph: &MeshGraph, report: &ValidationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "elements: {}", graph.len());
    let _ = writeln!(s, "vertices: {}", graph.vertices().len());
    let _ = writeln!(s, "boundary faces: {}", graph.boundary().len());
    let _ = writeln!(s, "volume: {:e}", graph.total_volume());
    let _ = writeln!(s, "degenerate elements: {}", report.degenerate_elements.len());
    for e in &report.degenerate_elements {
        let _ = writeln!(s, "  element {e}: volume {:e}", graph.signed_volume(*e as usize));
    }
    let _ = writeln!(s, "reciprocity violations: {}", report.reciprocity_violations.len());
    for (e, f) in &report.reciprocity_violations {
        let _ = writeln!(s, "  element {e} face {f}");
    }
    let _ = writeln!(s, "open boundary edges: {}", report.open_edges.len());
    for [a, b] in &report.open_edges {
        let _ = writeln!(s, "  edge {a}-{b}");
    }
    let _ = writeln!(s, "convexity violations: {}", report.convexity_violations.len());
    for v in &report.convexity_violations {
        let _ = writeln!(
            s,
            "  element {} face {}: vertex {} lies {:e} outside",
            v.element, v.face, v.vertex, v.distance
        );
    }
    if report.is_clean() {
        let _ = writeln!(s, "status: clean");
    } else {
        let _ = writeln!(s, "status: {} issues", report.issue_count());
    }
    s
}

pub fn cmd_validate(a: &ValidateArgs) -> Result<(ValidationReport, String), Failure> {
    let (node, ele) = a.mesh.paths();
    let graph = load_mesh(&node, &ele)?;
    let report = validate(&graph);
    let text = render_report(&graph, &report);
    if let Some(path) = &a.json {
        let doc = json!({
            "mesh": a.mesh.mesh.display().to_string(),
            "elements": graph.len(),
            "vertices": graph.vertices().len(),
            "boundary_faces": graph.boundary().len(),
            "clean": report.is_clean(),
            "report": report,
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok((report, text))
}

/// One line of the benchmark CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub edge_length: usize,
    pub elements: usize,
    pub boundary_faces: usize,
    /// Rays per projection.
    pub rays: usize,
    /// Milliseconds per projection for the R*-tree entry search.
    pub init_ms: f64,
    /// Milliseconds per projection for walking the element graph.
    pub propagation_ms: f64,
}

pub const BENCH_HEADER: &str = "edge_length,elements,boundary_faces,rays,init_ms,propagation_ms";

/// Benchmark scanner: the mesh spans `[-1, 1]^3`, the detector covers its
/// magnified shadow.
pub fn bench_geometry(detector: usize, angles: usize) -> tetraproj::Result<ScanGeometry> {
    let pitch = 8.0 / detector as f64;
    ScanGeometry::circular(angles, 5.0, 10.0, detector, detector, pitch, pitch)
}

pub fn bench_mesh(n: usize) -> tetraproj::Result<MeshGraph> {
    regular_tet_mesh(n, Vec3::repeat(-1.0), Vec3::repeat(1.0))
}

struct BenchCase {
    n: usize,
    graph: MeshGraph,
    tree: RStarTree,
    cfg: TraceConfig,
    entries: Vec<Option<u32>>,
    init: f64,
    propagation: f64,
}

/// Times the entry search and the walk for every mesh size. Each repeat
/// cycles through all sizes, so a burst of background load hits every size
/// instead of one; the fastest repeat is kept.
pub fn cmd_bench(a: &BenchArgs) -> Result<Vec<BenchRow>, Failure> {
    let scan = bench_geometry(a.detector, a.angles)?;
    let rays: Vec<_> = (0..scan.ray_count()).map(|i| scan.ray_at(i)).collect();
    let repeats = a.repeats.max(1);
    let mut m = RunManifest::new("bench");
    let mut cases = Vec::new();
    for &n in &a.edge_lengths {
        let graph = bench_mesh(n)?;
        let start = Instant::now();
        let tree = RStarTree::build(&graph)?;
        m.time(&format!("tree_{n}"), start);
        let cfg = TraceConfig::for_mesh(&graph);
        cases.push(BenchCase {
            n,
            graph,
            tree,
            cfg,
            entries: Vec::new(),
            init: f64::INFINITY,
            propagation: f64::INFINITY,
        });
    }

    for _ in 0..repeats {
        for case in cases.iter_mut() {
            let start = Instant::now();
            case.entries = rays
                .iter()
                .map(|r| case.tree.first_hit(&case.graph, r).map(|h| h.element))
                .collect();
            case.init = case.init.min(start.elapsed().as_secs_f64());

            let start = Instant::now();
            let mut visited = 0usize;
            for (ray, entry) in rays.iter().zip(&case.entries) {
                if let Some(e) = entry {
                    visited += walk_from(&case.graph, *e, ray, &case.cfg, |_| {}).elements_visited;
                }
            }
            std::hint::black_box(visited);
            case.propagation = case.propagation.min(start.elapsed().as_secs_f64());
        }
    }

    let per = 1e3 / a.angles as f64;
    let rows: Vec<BenchRow> = cases
        .iter()
        .map(|c| BenchRow {
            edge_length: c.n,
            elements: c.graph.len(),
            boundary_faces: c.graph.boundary().len(),
            rays: scan.pixels_per_angle(),
            init_ms: c.init * per,
            propagation_ms: c.propagation * per,
        })
        .collect();

    let mut csv = String::from(BENCH_HEADER);
    csv.push('\n');
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{:.6},{:.6}",
            r.edge_length, r.elements, r.boundary_faces, r.rays, r.init_ms, r.propagation_ms
        );
    }
    std::fs::write(&a.out, csv).with_context(|| format!("writing {}", a.out.display()))?;
    m.output("csv", &a.out);
    m.geometry = Some(scan.to_config());
    m.details = json!({ "repeats": repeats, "edge_lengths": a.edge_lengths });
    m.write(&with_suffix(&a.out, ".manifest.json"))?;
    Ok(rows)
}

/// Aborted-ray counts of one fp-study pass.
pub fn abort_summary(diag: &Diagnostics, scan: &ScanGeometry) -> serde_json::Value {
    let per = scan.pixels_per_angle() as u64;
    let mut per_angle = vec![0u64; scan.n_angles()];
    for &r in &diag.aborted_rays {
        per_angle[(r / per) as usize] += 1;
    }
    json!({
        "aborted": diag.aborted(),
        "aborted_epsilon": diag.aborted_epsilon,
        "aborted_loop": diag.aborted_loop,
        "per_angle": per_angle,
        "rays": diag.rays,
        "missed": diag.missed,
        "escalation_histogram": diag.escalation_histogram,
    })
}

pub fn cmd_fp_study(a: &FpStudyArgs) -> Result<RunManifest, Failure> {
    let mut m = RunManifest::new("fp-study");
    let (node, ele) = a.mesh.paths();
    m.input("node", &node);
    m.input("ele", &ele);
    m.input("geometry", &a.geometry);
    let graph = load_valid_mesh(&a.mesh)?;
    let scan = ScanGeometry::load(&a.geometry)?;
    let field = match &a.field {
        Some(p) => {
            m.input("field", p);
            read_field(p, graph.len())?
        }
        None => AttenuationField::uniform(graph.len(), 1.0),
    };
    let tree = RStarTree::build(&graph)?;

    let mut details = serde_json::Map::new();
    let mut stacks: Vec<ProjectionStack> = Vec::new();
    for (name, precision) in [("single", Precision::Single), ("double", Precision::Double)] {
        let cfg = TraceConfig::for_mesh(&graph).with_precision(precision);
        let start = Instant::now();
        let (stack, diag) = project(&graph, &tree, &field, &scan, &cfg)?;
        m.time(name, start);
        details.insert(name.into(), abort_summary(&diag, &scan));
        stacks.push(stack);
    }
    // Both images share the 64-bit window so dropped rays show as dark dots.
    let reference = stacks[1].image(0);
    let window = reference
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    let window = (window.1 > window.0).then_some(window);
    for (name, stack) in ["single", "double"].iter().zip(&stacks) {
        let png = with_suffix(&a.out, &format!("_{name}.png"));
        write_png(&png, stack.image(0), stack.n_v, stack.n_u, window)?;
        m.output(name, &png);
    }
    m.geometry = Some(scan.to_config());
    m.details = serde_json::Value::Object(details);
    m.write(&with_suffix(&a.out, ".manifest.json"))?;
    Ok(m)
}

fn write_geometry(path: &Path, scan: &ScanGeometry) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(&scan.to_config())? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_generate(g: &GenerateCommand) -> Result<(), Failure> {
    match g {
        GenerateCommand::Mesh(a) => {
            let graph = jittered_mesh(a.n, a.lo, a.hi, a.jitter, a.seed)?;
            let (node, ele) = mesh_paths(&a.out);
            write_mesh(&node, &ele, &graph)?;
        }
        GenerateCommand::Stress(a) => {
            let p = StressParams {
                n: a.n,
                seed: a.seed,
                ..Default::default()
            };
            let graph = stress_mesh(&p)?;
            let (node, ele) = mesh_paths(&a.out);
            write_mesh(&node, &ele, &graph)?;
            write_geometry(&with_suffix(&a.out, ".geometry.json"), &stress_geometry(&p, a.angles)?)?;
        }
        GenerateCommand::Phantom(a) => {
            let (node, ele) = a.mesh.paths();
            let graph = load_mesh(&node, &ele)?;
            write_field(&a.out, &phantom(&graph))?;
        }
        GenerateCommand::Geometry(a) => {
            let scan = ScanGeometry::circular(a.angles, a.dso, a.dsd, a.n_u, a.n_v, a.du, a.dv)?;
            write_geometry(&a.out, &scan)?;
        }
    }
    Ok(())
}
