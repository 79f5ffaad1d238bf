use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vtalign::inspect::{self, SynthOptions};
use vtalign::pipeline::{self, ManifestTransform};
use vtalign::{
    evo, load_image, save_image, BatchConfig, Error, PairManifest, RegistrationConfig, TransformKind, TransformParams,
};

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(name = "vtalign", version, about = "Calibration-free visual/thermal frame registration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register one visual/thermal pair and write its manifest.
    Register(RegisterArgs),
    /// Register every pair under <root>/visual and <root>/thermal.
    Batch(BatchArgs),
    /// Compose a visual frame with an aligned thermal frame.
    Overlay(OverlayArgs),
    /// Intensity histogram as `bin,count` CSV.
    Histogram(HistogramArgs),
    /// FAST corners on the visual frame and co-located 32x32 patch pairs.
    Patches(PatchesArgs),
    /// Generate a visual/pseudo-thermal pair with a known transform.
    Synth(SynthArgs),
}

#[derive(Args)]
struct Tuning {
    #[arg(long, value_enum, default_value_t = Kind::Similarity)]
    kind: Kind,
    /// Histogram bins per axis.
    #[arg(long)]
    bins: Option<usize>,
    /// Reduced-resolution levels before full resolution.
    #[arg(long, default_value_t = 0)]
    pyramid: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Radius multiplier after an accepted mutation.
    #[arg(long)]
    growth: Option<f64>,
    /// Radius multiplier after a rejected mutation.
    #[arg(long)]
    shrink: Option<f64>,
    /// Initial search radius.
    #[arg(long)]
    radius: Option<f64>,
    /// Stop once the radius drops below this.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Fraction of visual pixels sampled by the metric.
    #[arg(long)]
    sampling: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Similarity,
    Affine,
}

impl Tuning {
    fn config(&self) -> RegistrationConfig {
        let mut cfg = RegistrationConfig {
            kind: match self.kind {
                Kind::Similarity => TransformKind::Similarity,
                Kind::Affine => TransformKind::Affine,
            },
            pyramid_levels: self.pyramid,
            ..RegistrationConfig::default()
        };
        let (m, e) = (&mut cfg.metric, &mut cfg.evo);
        e.seed = self.seed;
        m.sample_seed = self.seed;
        if let Some(v) = self.bins {
            m.bin_count = v;
        }
        if let Some(v) = self.sampling {
            m.sampling_fraction = v;
        }
        if let Some(v) = self.growth {
            e.growth_factor = v;
        }
        if let Some(v) = self.shrink {
            e.shrink_factor = v;
        }
        if let Some(v) = self.radius {
            e.initial_radius = v;
        }
        if let Some(v) = self.epsilon {
            e.epsilon = v;
        }
        if let Some(v) = self.max_iters {
            e.max_iterations = v;
        }
        cfg
    }
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long)]
    visual: PathBuf,
    #[arg(long)]
    thermal: PathBuf,
    /// Manifest path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the thermal frame resampled onto the visual grid.
    #[arg(long)]
    aligned: Option<PathBuf>,
    /// Write the full-resolution optimizer trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    no_timestamp: bool,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long)]
    root: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "visual")]
    visual_dir: String,
    #[arg(long, default_value = "thermal")]
    thermal_dir: String,
    /// Concurrent pairs; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    no_timestamp: bool,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Clone, Copy, ValueEnum)]
enum OverlayMode {
    Redcyan,
    Difference,
    Checkerboard,
}

#[derive(Args)]
struct OverlayArgs {
    #[arg(long, value_enum)]
    mode: OverlayMode,
    #[arg(long)]
    visual: PathBuf,
    #[arg(long)]
    aligned: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Checkerboard tile side in pixels.
    #[arg(long, default_value_t = 32)]
    tile: usize,
}

#[derive(Args)]
struct HistogramArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = 256)]
    bins: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PatchesArgs {
    #[arg(long)]
    visual: PathBuf,
    #[arg(long)]
    thermal: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 6)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// FAST intensity threshold.
    #[arg(long, default_value_t = 20.0)]
    threshold: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Image used as the visual frame.
    #[arg(long, required_unless_present = "scene", conflicts_with = "scene")]
    source: Option<PathBuf>,
    /// Generate an N x N structured scene instead of reading a source.
    #[arg(long, value_name = "N")]
    scene: Option<usize>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    tx: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    ty: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    rot_deg: f64,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Standard deviation of the Gaussian blur, in pixels.
    #[arg(long, default_value_t = 0.0)]
    blur: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Format { .. } | Error::Manifest { .. } | Error::NoPairsFound(_) => EXIT_IO,
        Error::InvalidConfig(_) | Error::InvalidParams(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

fn create_dir(dir: &Path) -> vtalign::Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> vtalign::Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn register(args: RegisterArgs) -> vtalign::Result<()> {
    let cfg = args.tuning.config();
    let visual = load_image(&args.visual)?;
    let thermal = load_image(&args.thermal)?;
    let result = vtalign::register(&visual, &thermal, &cfg)?;

    let timestamp = (!args.no_timestamp).then(pipeline::utc_timestamp);
    PairManifest::success(&args.visual, &args.thermal, &result, timestamp).write(&args.out)?;
    if let Some(path) = &args.aligned {
        save_image(&pipeline::align_moving(&visual, &thermal, &result.matrix), path)?;
    }
    if let (Some(path), Some(level)) = (&args.trace, result.levels.last()) {
        let mut csv = Vec::new();
        evo::write_trace_csv(&level.trace, &mut csv).expect("writing to memory");
        pipeline::write_atomic(path, &csv)?;
    }
    println!(
        "params {:?} cost {:.6} iterations {} stop {}",
        result.params.values,
        result.final_cost,
        result.iterations,
        result.stop_label()
    );
    Ok(())
}

fn batch(args: BatchArgs) -> vtalign::Result<()> {
    let cfg = BatchConfig {
        registration: args.tuning.config(),
        visual_dir: args.visual_dir,
        thermal_dir: args.thermal_dir,
        out_dir: args.out_dir,
        jobs: args.jobs,
        timestamps: !args.no_timestamp,
    };
    let out = vtalign::batch(&args.root, &cfg)?;
    let s = &out.summary;
    println!(
        "{} pairs, {} failed, {} unpaired",
        s.pairs.len(),
        s.failed.len(),
        s.unpaired.len()
    );
    for stem in &s.failed {
        eprintln!("failed: {stem}");
    }
    Ok(())
}

fn overlay(args: OverlayArgs) -> vtalign::Result<()> {
    let visual = load_image(&args.visual)?;
    let aligned = load_image(&args.aligned)?;
    match args.mode {
        OverlayMode::Redcyan => inspect::save_rgb(&inspect::overlay_redcyan(&visual, &aligned)?, &args.out),
        OverlayMode::Difference => save_image(&inspect::overlay_difference(&visual, &aligned)?, &args.out),
        OverlayMode::Checkerboard => {
            let (v, a) = (inspect::rescale_to_display(&visual), inspect::rescale_to_display(&aligned));
            save_image(&inspect::overlay_checkerboard(&v, &a, args.tile)?, &args.out)
        }
    }
}

fn histogram(args: HistogramArgs) -> vtalign::Result<()> {
    if args.bins == 0 {
        return Err(Error::InvalidConfig("at least one bin is required".into()));
    }
    let h = load_image(&args.image)?.histogram(args.bins);
    let mut csv = String::from("bin,count\n");
    for (i, c) in h.counts.iter().enumerate() {
        csv.push_str(&format!("{i},{c}\n"));
    }
    write_text(&args.out, &csv)
}

fn patches(args: PatchesArgs) -> vtalign::Result<()> {
    let visual = load_image(&args.visual)?;
    let thermal = load_image(&args.thermal)?;
    let manifest = PairManifest::read(&args.manifest)?;
    let m = manifest.matrix().ok_or_else(|| Error::Manifest {
        path: args.manifest.clone(),
        reason: "the pair has no transform".into(),
    })?;
    let corners = inspect::fast_detect(&visual, args.threshold, 9);
    let pairs = inspect::extract_patch_pairs(&visual, &thermal, &m, &corners, args.count, args.seed)?;

    create_dir(&args.out_dir)?;
    let stem = args.visual.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    for (i, p) in pairs.iter().enumerate() {
        let vis = args.out_dir.join(format!("{stem}_pair{i}_vis.png"));
        let thm = args.out_dir.join(format!("{stem}_pair{i}_thm.png"));
        save_image(&inspect::rescale_to_display(&p.visual_patch), vis)?;
        save_image(&inspect::rescale_to_display(&p.thermal_patch), thm)?;
        let (vx, vy) = p.visual_center;
        let (tx, ty) = p.thermal_center;
        println!("pair {i}: visual ({vx}, {vy}) thermal ({tx:.3}, {ty:.3})");
    }
    Ok(())
}

fn synth(args: SynthArgs) -> vtalign::Result<()> {
    let source = match (&args.source, args.scene) {
        (Some(path), _) => load_image(path)?,
        (None, Some(n)) => inspect::synthetic_scene(n, n, args.seed),
        (None, None) => unreachable!("clap requires one input"),
    };
    let truth = TransformParams::similarity(args.rot_deg.to_radians(), args.scale, args.tx, args.ty);
    let opts = SynthOptions {
        gamma: args.gamma,
        noise_sigma: args.noise,
        blur_sigma: args.blur,
        seed: args.seed,
    };
    let pair = inspect::synth_pair(&source, &truth, &opts)?;

    create_dir(&args.out_dir)?;
    save_image(&pair.visual, args.out_dir.join("visual.png"))?;
    save_image(&pair.thermal, args.out_dir.join("thermal.png"))?;
    let record = ManifestTransform {
        kind: pair.truth.kind,
        params: pair.truth.values.clone(),
        center: pair.truth.center,
        matrix: pair.truth.to_matrix()?,
    };
    let mut json = serde_json::to_string_pretty(&record).expect("transform serializes");
    json.push('\n');
    write_text(&args.out_dir.join("truth.json"), &json)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Register(a) => register(a),
        Command::Batch(a) => batch(a),
        Command::Overlay(a) => overlay(a),
        Command::Histogram(a) => histogram(a),
        Command::Patches(a) => patches(a),
        Command::Synth(a) => synth(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
