use std::fmt::Display;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use grasp_score::candidates::generate_views;
use grasp_score::config::Config;
use grasp_score::eval::{evaluate_ap, EvalError, EvalReport};
use grasp_score::labels::{read_labels, read_predictions, write_labels, LabelError};
use grasp_score::metrics::{recombine, MetricWeights};
use grasp_score::pipeline::{histogram, label_mesh, load_library_object, load_object_mesh, PipelineError};
use grasp_score::scene::{place_on_table, ObjectLibrary, SceneError, SceneFile, SceneLayout};

#[derive(Parser)]
#[command(name = "grasp-score", version, about = "Grasp candidate labeling, hybrid scoring and AP evaluation")]
struct Cli {
    /// TOML configuration file; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Multiplier applied to mesh coordinates on load (e.g. 0.001 for millimeter files).
    #[arg(long, global = true, default_value_t = 1.0)]
    unit_scale: f64,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the configured sampling seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and score grasp candidates on a mesh.
    Label(LabelArgs),
    /// Recompute s_hybrid of a label file under new weights.
    Rescore(RescoreArgs),
    /// Place objects on a table, or validate a scene file, and write the scene.
    Scene(SceneArgs),
    /// Evaluate predicted grasps on a scene with NMS, collision filtering and top-k AP.
    Eval(EvalArgs),
    /// Print the approach views as x,y,z lines.
    Views(ViewsArgs),
}

#[derive(Args)]
struct LabelArgs {
    mesh: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Object id written to every record (default: the mesh file stem).
    #[arg(long)]
    object_id: Option<String>,
    /// Hybrid weights "t,f,g,c".
    #[arg(long)]
    weights: Option<MetricWeights>,
    /// Write contact midpoints colored by s_hybrid to this PLY file.
    #[arg(long)]
    dump_ply: Option<PathBuf>,
}

#[derive(Args)]
struct RescoreArgs {
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    weights: Option<MetricWeights>,
}

#[derive(Args)]
struct SceneArgs {
    /// Directory holding `<object_id>.obj` / `.ply` meshes.
    #[arg(long)]
    meshes_dir: PathBuf,
    /// Comma-separated object ids to place in a row on the table.
    #[arg(long, value_delimiter = ',', conflicts_with = "layout", required_unless_present = "layout")]
    objects: Vec<String>,
    /// Existing scene file to validate instead of placing objects.
    #[arg(long)]
    layout: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    table_height: f64,
    /// Gap between neighboring objects, meters.
    #[arg(long, default_value_t = 0.05)]
    gap: f64,
    /// Scene JSON output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scene point cloud (objects and table) as PLY.
    #[arg(long)]
    cloud_ply: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    predictions: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    meshes_dir: PathBuf,
    /// JSON copy of the report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ViewsArgs {
    /// Number of views (default: the configured grid size).
    #[arg(long)]
    count: Option<usize>,
}

enum Failure {
    Input(String),
    Compute(String),
}

impl Failure {
    fn input(e: impl Display) -> Self {
        Failure::Input(e.to_string())
    }
    fn compute(e: impl Display) -> Self {
        Failure::Compute(e.to_string())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::input(e)
    }
}

impl From<LabelError> for Failure {
    fn from(e: LabelError) -> Self {
        Failure::input(e)
    }
}

impl From<SceneError> for Failure {
    fn from(e: SceneError) -> Self {
        Failure::input(e)
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::UnknownObjectId(_) | EvalError::NoPredictions | EvalError::EmptyScene | EvalError::Scene(_) => {
                Failure::input(e)
            }
        }
    }
}

fn write_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Compute(format!("IoError: cannot write {}: {e}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p).map_err(Failure::input)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if !(cli.unit_scale > 0.0 && cli.unit_scale.is_finite()) {
        return Err(Failure::Input(format!("--unit-scale must be positive, got {}", cli.unit_scale)));
    }
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(Failure::compute)?;
    }
    match cli.command {
        Command::Label(a) => cmd_label(a, &mut config, cli.unit_scale),
        Command::Rescore(a) => cmd_rescore(a, &config),
        Command::Scene(a) => cmd_scene(a, &config, cli.unit_scale),
        Command::Eval(a) => cmd_eval(a, &config, cli.unit_scale),
        Command::Views(a) => cmd_views(a, &config),
    }
}

fn print_histograms(s_t: &[f64], s_hybrid: &[f64]) {
    let ht = histogram(s_t.iter().copied());
    let hh = histogram(s_hybrid.iter().copied());
    println!("{:<12} {:>10} {:>10}", "bin", "S_t", "S_hybrid");
    for i in 0..10 {
        let close = if i == 9 { ']' } else { ')' };
        let label = format!("[{:.1}, {:.1}{close}", i as f64 / 10.0, (i + 1) as f64 / 10.0);
        println!("{label:<12} {:>10} {:>10}", ht[i], hh[i]);
    }
    let distinct = |v: &[f64]| {
        let mut bits: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
        bits.sort_unstable();
        bits.dedup();
        bits.len()
    };
    println!("distinct values: S_t {}, S_hybrid {}", distinct(s_t), distinct(s_hybrid));
}

fn cmd_label(a: LabelArgs, config: &mut Config, unit_scale: f64) -> Result<(), Failure> {
    if let Some(w) = a.weights {
        config.metric.weights = w;
    }
    let mesh = load_object_mesh(&a.mesh, unit_scale, config)?;
    let id = a
        .object_id
        .clone()
        .unwrap_or_else(|| a.mesh.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    let out = label_mesh(&mesh, config);
    let n = write_labels(out.records(&id), &a.out).map_err(|e| match e {
        LabelError::Io(io) => write_failure(&a.out, io),
        other => Failure::compute(other),
    })?;

    let g = &config.grid;
    println!("object: {id}");
    println!(
        "mesh: {} vertices, {} faces, {} surface samples",
        mesh.vertices().len(),
        mesh.faces().len(),
        mesh.surface().map_or(0, |s| s.len())
    );
    let gc = out.mass.gravity_center;
    println!("gravity center: ({}, {}, {}) via {:?}", gc.x, gc.y, gc.z, out.mass.method_used);
    println!(
        "grid: {} seeds x {} views x {} angles x {} depths = {}",
        g.num_seeds.min(mesh.surface().map_or(0, |s| s.len())),
        g.num_views,
        g.num_angles,
        config.gripper.depth_levels.len(),
        out.grid_size
    );
    println!(
        "candidates: {n} written ({} without contact, {} self-colliding, {} unscorable)",
        out.stats.invalid_contacts, out.stats.self_collisions, out.scoring_failures
    );
    let s_t: Vec<f64> = out.breakdowns.iter().map(|b| b.s_t).collect();
    let s_h: Vec<f64> = out.breakdowns.iter().map(|b| b.s_hybrid).collect();
    print_histograms(&s_t, &s_h);
    println!("wrote {}", a.out.display());

    if let Some(path) = a.dump_ply {
        let points: Vec<_> = out.candidates.iter().map(|c| nalgebra::center(&c.frame.p_cl, &c.frame.p_cr)).collect();
        write_colored_points(&points, &s_h, &path).map_err(|e| write_failure(&path, e))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// ASCII PLY with a blue (0) to red (1) ramp.
fn write_colored_points(points: &[nalgebra::Point3<f64>], scores: &[f64], path: &Path) -> io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(
        out,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        points.len()
    )?;
    for (p, s) in points.iter().zip(scores) {
        let s = s.clamp(0.0, 1.0);
        let r = (255.0 * s).round() as u8;
        let b = (255.0 * (1.0 - s)).round() as u8;
        writeln!(out, "{} {} {} {r} 0 {b}", p.x, p.y, p.z)?;
    }
    out.flush()
}

fn cmd_rescore(a: RescoreArgs, config: &Config) -> Result<(), Failure> {
    let weights = a.weights.unwrap_or(config.metric.weights);
    let mut recs = read_labels(&a.labels)?;
    for r in &mut recs {
        r.breakdown = recombine(&r.breakdown, &weights);
    }
    let n = write_labels(recs.iter().map(|r| r.as_record()), &a.out).map_err(|e| match e {
        LabelError::Io(io) => write_failure(&a.out, io),
        other => Failure::compute(other),
    })?;
    let s_t: Vec<f64> = recs.iter().map(|r| r.breakdown.s_t).collect();
    let s_h: Vec<f64> = recs.iter().map(|r| r.breakdown.s_hybrid).collect();
    println!(
        "rescored {n} records with weights t={} f={} g={} c={}",
        weights.lambda_t, weights.lambda_f, weights.lambda_g, weights.lambda_c
    );
    print_histograms(&s_t, &s_h);
    println!("wrote {}", a.out.display());
    Ok(())
}

fn load_library<'a>(
    ids: impl IntoIterator<Item = &'a str>,
    dir: &Path,
    unit_scale: f64,
    config: &Config,
) -> Result<ObjectLibrary, Failure> {
    let mut lib = ObjectLibrary::new();
    for id in ids {
        if !lib.contains(id) {
            lib.insert(id, load_library_object(dir, id, unit_scale, config)?);
        }
    }
    Ok(lib)
}

fn cmd_scene(a: SceneArgs, config: &Config, unit_scale: f64) -> Result<(), Failure> {
    let (file, lib) = match &a.layout {
        Some(path) => {
            let file = SceneFile::load(path)?;
            let lib = load_library(file.instances.iter().map(|i| i.object_id.as_str()), &a.meshes_dir, unit_scale, config)?;
            (file, lib)
        }
        None => {
            let lib = load_library(a.objects.iter().map(String::as_str), &a.meshes_dir, unit_scale, config)?;
            (place_on_table(&a.objects, &lib, a.table_height, a.gap, config.seed)?, lib)
        }
    };
    let scene = SceneLayout::compose(&file, &lib, &config.table)?;
    println!("instances: {}", scene.instances.len());
    for inst in &scene.instances {
        let t = inst.pose.translation.vector;
        println!("  {:<16} at ({:.4}, {:.4}, {:.4})", inst.object_id, t.x, t.y, t.z);
    }
    println!("table height: {}", scene.table_height);
    println!("scene cloud: {} points", scene.scene_cloud.len());
    if let Some(out) = &a.out {
        scene.to_file().save(out)?;
        println!("wrote {}", out.display());
    }
    if let Some(path) = &a.cloud_ply {
        grasp_score::mesh::write_ply_points(scene.scene_cloud.points(), Some(scene.scene_cloud.normals()), path)
            .map_err(|e| write_failure(path, e))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn print_report(r: &EvalReport) {
    println!("predictions: {}", r.n_predictions);
    println!("removed by NMS: {}", r.n_filtered_nms);
    println!("removed by collision: {}", r.n_filtered_collision);
    println!("evaluated: {}", r.n_evaluated);
    if r.empty_after_filtering {
        println!("warning: no predictions survived filtering");
    }
    println!("{:>9}  {:>7}", "threshold", "AP");
    for t in &r.ap_at_threshold {
        println!("{:>9.1}  {:>7.3}", t.threshold, t.ap);
    }
    println!("{:>9}  {:>7.3}", "mAP", r.map_value);
}

fn cmd_eval(a: EvalArgs, config: &Config, unit_scale: f64) -> Result<(), Failure> {
    let predictions = read_predictions(&a.predictions)?;
    let file = SceneFile::load(&a.scene)?;
    let lib = load_library(file.instances.iter().map(|i| i.object_id.as_str()), &a.meshes_dir, unit_scale, config)?;
    let scene = SceneLayout::compose(&file, &lib, &config.table)?;
    let report = evaluate_ap(&predictions, &scene, &lib, &config.gripper, &config.metric, &config.nms, &config.eval)?;
    print_report(&report);
    if let Some(out) = &a.out {
        let mut text = serde_json::to_string_pretty(&report).map_err(Failure::compute)?;
        text.push('\n');
        fs::write(out, text).map_err(|e| write_failure(out, e))?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn cmd_views(a: ViewsArgs, config: &Config) -> Result<(), Failure> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for v in generate_views(a.count.unwrap_or(config.grid.num_views)) {
        writeln!(out, "{},{},{}", v.x, v.y, v.z).map_err(Failure::compute)?;
    }
    out.flush().map_err(Failure::compute)
}
