use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use primseg::error::{Error, Result};
use primseg::evaluation::evaluate_labels;
use primseg::frames::{frame_files, load_frames};
use primseg::io::ply::{load_ply, save_ply};
use primseg::merging::load_boxes;
use primseg::partition::{format_labels, read_labels, write_labels};
use primseg::pipeline::{segment_scene, InputDigest, RunManifest};
use primseg::primitives::compute_primitives;
use primseg::synth::{export_scene, generate_scene, SceneSpec};
use primseg::PipelineConfig;

#[derive(Parser)]
#[command(name = "primseg", version, about = "3D instance segmentation from point clouds and posed 2D masks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment a scene into instances.
    Segment(SegmentArgs),
    /// Over-segment a scene into geometric primitives only.
    Primitives(PrimitivesArgs),
    /// Score predicted labels against ground truth (JSON on stdout).
    Eval(EvalArgs),
    /// Generate a synthetic scene with ground truth.
    Synth(SynthArgs),
    /// Write a PLY colored by instance label.
    Export(ExportArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON file with pipeline parameters; missing keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weight of the normal term in primitive edge weights.
    #[arg(long)]
    wn: Option<f64>,
    /// Weight of the color term in primitive edge weights.
    #[arg(long)]
    wc: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(w) = self.wn {
            cfg.w_n = w;
        }
        if let Some(w) = self.wc {
            cfg.w_c = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn init_threads(&self) -> Result<()> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build_global()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))
    }
}

#[derive(Args)]
struct SegmentArgs {
    /// Point cloud (PLY with x y z red green blue).
    #[arg(long)]
    scene: PathBuf,
    /// Directory of frames: <id>.json, <id>.depth.pgm, <id>.mask.pgm.
    #[arg(long)]
    frames: PathBuf,
    /// JSON list of axis-aligned boxes used to fuse fragments.
    #[arg(long, conflicts_with = "no_boxes")]
    boxes: Option<PathBuf>,
    /// Skip box refinement.
    #[arg(long)]
    no_boxes: bool,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct PrimitivesArgs {
    /// Point cloud (PLY with x y z red green blue).
    #[arg(long)]
    scene: PathBuf,
    /// Output label file.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted labels, one per line.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth labels: a label file or a PLY with a `label` property.
    #[arg(long)]
    gt: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description (JSON). Defaults to the room-8 preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the seed of the scene description.
    #[arg(long)]
    seed: Option<u64>,
    /// Probability of splitting an object's mask into two parts per frame.
    #[arg(long)]
    part_split_prob: Option<f64>,
    /// Mask boundary jitter radius in pixels.
    #[arg(long)]
    boundary_noise_px: Option<u32>,
    /// Write the scene description used and exit.
    #[arg(long)]
    print_spec: bool,
    /// Output directory for scene.ply, frames/, boxes.json and gt_labels.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    /// Point cloud to paint.
    #[arg(long)]
    scene: PathBuf,
    /// Instance labels, one per point; -1 is painted black.
    #[arg(long)]
    labels: PathBuf,
    /// Output PLY.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Segment(a) => run_segment(a),
        Command::Primitives(a) => run_primitives(a),
        Command::Eval(a) => run_eval(a),
        Command::Synth(a) => run_synth(a),
        Command::Export(a) => run_export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Deterministic, reasonably bright color per instance id; -1 is black.
fn label_color(label: i64) -> [u8; 3] {
    if label < 0 {
        return [0, 0, 0];
    }
    let mut x = (label as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    [0, 8, 16].map(|s| 64 + ((x >> s) & 0xFF) as u8 % 192)
}

fn write_colored(path: &Path, cloud: &primseg::PointCloud, labels: &[i64]) -> Result<()> {
    let colors: Vec<[u8; 3]> = labels.iter().map(|&l| label_color(l)).collect();
    save_ply(path, &cloud.positions, &colors, Some(labels))
}

fn run_segment(a: SegmentArgs) -> Result<()> {
    a.config.init_threads()?;
    let cfg = a.config.load()?;
    let cloud = load_ply(&a.scene)?;
    let frames = load_frames(&a.frames)?;
    let boxes = match (&a.boxes, a.no_boxes) {
        (Some(p), false) => Some(load_boxes(p)?),
        _ => None,
    };
    let outcome = segment_scene(&cloud, &frames, boxes.as_deref(), &cfg)?;

    let mut inputs = vec![InputDigest::of_file("scene", &a.scene)?];
    for f in frame_files(&a.frames)? {
        inputs.push(InputDigest::of_file("frame", &f)?);
    }
    if let (Some(p), Some(_)) = (&a.boxes, &boxes) {
        inputs.push(InputDigest::of_file("boxes", p)?);
    }
    if let Some(p) = &a.config.config {
        inputs.push(InputDigest::of_file("config", p)?);
    }
    let labels_text = format_labels(&outcome.partition.labels);
    let manifest = RunManifest::new(&cfg, inputs, &cloud, &frames, boxes.as_deref(), &outcome, &labels_text);

    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let labels_path = a.out.join("pred_labels.txt");
    let ply_path = a.out.join("colored.ply");
    let manifest_path = a.out.join("manifest.json");
    let written = (|| -> Result<()> {
        fs::write(&labels_path, &labels_text).map_err(|e| Error::io(&labels_path, e))?;
        write_colored(&ply_path, &cloud, &outcome.partition.labels)?;
        let json = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))
    })();
    if written.is_err() {
        for p in [&labels_path, &ply_path, &manifest_path] {
            let _ = fs::remove_file(p);
        }
    }
    written
}

fn run_primitives(a: PrimitivesArgs) -> Result<()> {
    a.config.init_threads()?;
    let cfg = a.config.load()?;
    let cloud = load_ply(&a.scene)?;
    let part = compute_primitives(&cloud, &cfg.primitives())?;
    write_labels(&a.out, &part.labels)
}

fn load_gt(path: &Path) -> Result<Vec<i64>> {
    let is_ply = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    if !is_ply {
        return read_labels(path);
    }
    load_ply(path)?
        .labels
        .ok_or_else(|| Error::Labels(format!("{}: PLY has no label property", path.display())))
}

fn run_eval(a: EvalArgs) -> Result<()> {
    let pred = read_labels(&a.pred)?;
    let gt = load_gt(&a.gt)?;
    let report = evaluate_labels(&pred, &gt)?;
    print_stdout(&serde_json::to_string_pretty(&report)?)
}

/// Print to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print_stdout(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn run_synth(a: SynthArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => SceneSpec::load(p)?,
        None => SceneSpec::room8(a.seed.unwrap_or(0)),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(p) = a.part_split_prob {
        spec.mask_corruption.part_split_prob = p;
    }
    if let Some(r) = a.boundary_noise_px {
        spec.mask_corruption.boundary_noise_px = r;
    }
    spec.validate()?;
    if a.print_spec {
        return print_stdout(&serde_json::to_string_pretty(&spec)?);
    }
    let scene = generate_scene(&spec)?;
    export_scene(&scene, &a.out)?;
    let spec_path = a.out.join("spec.json");
    fs::write(&spec_path, serde_json::to_string_pretty(&spec)? + "\n").map_err(|e| Error::io(&spec_path, e))
}

fn run_export(a: ExportArgs) -> Result<()> {
    let cloud = load_ply(&a.scene)?;
    let labels = read_labels(&a.labels)?;
    if labels.len() != cloud.len() {
        return Err(Error::Dimension(format!("{} labels for {} points", labels.len(), cloud.len())));
    }
    write_colored(&a.out, &cloud, &labels)
}
