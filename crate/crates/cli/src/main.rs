use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use spc3d_core::hadamard::MaskedSensingPlan;
use spc3d_core::io::{self, pfm, pgm, QualityReport, SceneBundle, SceneMetadata};
use spc3d_core::log::{read_log, write_log};
use spc3d_core::metrics::psnr;
use spc3d_core::scene_gen::{generate, SceneKind, SceneParams};
use spc3d_core::{run, Image, ReconConfig, ReplaySource, SimulatorSource};

#[derive(Parser)]
#[command(
    name = "spc3d",
    version,
    about = "Adaptive single-pixel photon-counting 3D imaging"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic scene bundles.
    Scene {
        #[command(subcommand)]
        action: SceneAction,
    },
    /// Simulate acquisition of a scene and reconstruct it.
    Simulate(SimulateArgs),
    /// Reconstruct from a recorded measurement log.
    Reconstruct(ReconstructArgs),
    /// PSNR of reconstructed images against a reference scene.
    Metrics(MetricsArgs),
    /// Sensing pattern dumps.
    Patterns {
        #[command(subcommand)]
        action: PatternsAction,
    },
}

#[derive(Subcommand)]
enum SceneAction {
    /// Generate a scene bundle directory.
    Gen(SceneGenArgs),
}

#[derive(Args)]
struct SceneGenArgs {
    /// steps, spheres or planes
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 512)]
    side: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// JSON file with generator parameters
    #[arg(long)]
    params: Option<PathBuf>,
    /// Plateau grid cell in pixels (steps)
    #[arg(long)]
    block: Option<usize>,
    /// Number of plateaus (steps)
    #[arg(long)]
    plateaus: Option<usize>,
    /// Total expected photons per dwell over the frame
    #[arg(long)]
    total_rate: Option<f64>,
}

#[derive(Args)]
struct ImageOutputs {
    #[arg(long)]
    out_intensity: PathBuf,
    #[arg(long)]
    out_depth: PathBuf,
    /// Also write 8-bit PGM previews next to the float maps
    #[arg(long)]
    preview: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene bundle directory
    #[arg(long)]
    scene: PathBuf,
    /// Reconstruction config (JSON); defaults match the scene side
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_log: Option<PathBuf>,
    #[command(flatten)]
    images: ImageOutputs,
    /// Quality report (JSON)
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    images: ImageOutputs,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    ref_scene: PathBuf,
    #[arg(long)]
    intensity: PathBuf,
    #[arg(long)]
    depth: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Depth PSNR peak; defaults to the default range gate
    #[arg(long)]
    range_gate: Option<f64>,
}

#[derive(Subcommand)]
enum PatternsAction {
    /// Write pattern rows of a masked plan as PGM images.
    Export(PatternsExportArgs),
}

#[derive(Args)]
struct PatternsExportArgs {
    #[arg(long)]
    side: usize,
    /// PGM mask; nonzero pixels are marked. Without it every pixel is marked.
    #[arg(long)]
    mark_file: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Export at most this many rows
    #[arg(long)]
    rows: Option<usize>,
}

fn scene_gen(args: &SceneGenArgs) -> Result<()> {
    let kind: SceneKind = args.kind.parse()?;
    let mut params: SceneParams = match &args.params {
        Some(p) => io::read_json(p)?,
        None => SceneParams::default(),
    };
    if let Some(b) = args.block {
        params.block = b;
    }
    if let Some(n) = args.plateaus {
        params.plateaus = n;
    }
    if let Some(r) = args.total_rate {
        params.total_rate = r;
    }
    let scene = generate(kind, args.side, &params, args.seed)?;
    let bundle = SceneBundle {
        scene,
        metadata: SceneMetadata::generated(args.side, kind, args.seed, params),
    };
    bundle.write(&args.out)?;
    Ok(())
}

fn write_images(out: &ImageOutputs, intensity: &Image, depth: &Image) -> Result<()> {
    pfm::write(&out.out_intensity, intensity)?;
    pfm::write(&out.out_depth, depth)?;
    if out.preview {
        pgm::write_preview(&io::preview_path(&out.out_intensity), intensity)?;
        pgm::write_preview(&io::preview_path(&out.out_depth), depth)?;
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let bundle = SceneBundle::read(&args.scene)?;
    let side = bundle.scene.side();
    let cfg = match &args.config {
        Some(p) => io::load_config(p)?,
        None => {
            let cfg = ReconConfig {
                initial_side: side.min(64),
                final_side: side,
                ..ReconConfig::default()
            };
            cfg.validate()?;
            cfg
        }
    };
    if cfg.final_side != side {
        bail!(
            "config final_side {} does not match scene side {side}",
            cfg.final_side
        );
    }
    let mut source = SimulatorSource::new(bundle.scene, cfg.sim.clone())?;
    let out = run(&cfg, &mut source)?;
    if let Some(log) = &args.out_log {
        write_log(log, source.records())?;
    }
    write_images(&args.images, &out.intensity, &out.depth)?;
    let report = QualityReport::from_stats(&out.stats);
    if let Some(path) = &args.report {
        io::write_json(path, &report)?;
    }
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn reconstruct(args: &ReconstructArgs) -> Result<()> {
    let cfg = io::load_config(&args.config)?;
    let records = read_log(&args.log)?;
    let out = run(&cfg, &mut ReplaySource::new(records))?;
    write_images(&args.images, &out.intensity, &out.depth)?;
    let report = QualityReport::from_stats(&out.stats);
    if let Some(path) = &args.report {
        io::write_json(path, &report)?;
    }
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn metrics(args: &MetricsArgs) -> Result<()> {
    let reference = SceneBundle::read(&args.ref_scene)?.scene;
    let intensity = pfm::read(&args.intensity)?;
    let depth = pfm::read(&args.depth)?;
    let gate = args
        .range_gate
        .unwrap_or_else(|| ReconConfig::default().sim.range_gate_m);
    let peak = reference.intensity.max();
    let psnr_i = if peak > 0.0 {
        Some(psnr(&intensity, &reference.intensity, peak)?)
    } else {
        None
    };
    let psnr_d = psnr(&depth, &reference.depth, gate)?;
    let report = QualityReport::metrics_only(psnr_i, psnr_d, (peak > 0.0).then_some(peak), gate);
    if let Some(path) = &args.report {
        io::write_json(path, &report)?;
    }
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn read_mark(path: &Path, side: usize) -> Result<Vec<bool>> {
    let mask = pgm::read(path)?;
    if mask.side() != side {
        bail!("mark file is {0}x{0}, expected {side}x{side}", mask.side());
    }
    Ok(mask.as_slice().iter().map(|&v| v != 0.0).collect())
}

fn patterns_export(args: &PatternsExportArgs) -> Result<()> {
    let mark = match &args.mark_file {
        Some(p) => read_mark(p, args.side)?,
        None => vec![true; args.side * args.side],
    };
    let plan = MaskedSensingPlan::new(args.side, mark)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let rows = args.rows.unwrap_or(plan.order()).min(plan.order());
    for m in 0..rows {
        let row: Vec<u8> = plan.pattern_row(m)?.iter().map(|&b| b * 255).collect();
        pgm::write_u8(
            &args.out.join(format!("pattern_{m:06}.pgm")),
            args.side,
            &row,
        )?;
    }
    println!(
        "wrote {rows} of {} patterns ({} marked pixels)",
        plan.order(),
        plan.n_marked()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Scene {
            action: SceneAction::Gen(a),
        } => scene_gen(a),
        Command::Simulate(a) => simulate(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Metrics(a) => metrics(a),
        Command::Patterns {
            action: PatternsAction::Export(a),
        } => patterns_export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
