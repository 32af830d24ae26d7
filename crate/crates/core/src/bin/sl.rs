//! `sl` — structured-light scanning toolkit CLI.
//!
//! Subcommands mirror the pipeline stages: `gen-patterns`, `simulate`,
//! `sync-check`, `decode`, `reconstruct`, `evaluate`. Exit codes: 0 success,
//! 1 usage/config error, 2 data error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use sl_core::decode::decode_full;
use sl_core::error::{Error, ErrorClass};
use sl_core::evaluate::{
    cone_report, cross_section, depth_std, fit_cones, plane_esd, ConeSeed, PixelRect,
};
use sl_core::geometry::StereoRig;
use sl_core::io::{self, PgmEncoding, SyncManifest};
use sl_core::patterns::{generate, quantize, Orientation, PatternSpec};
use sl_core::pipeline::{
    load_frame_set, run_reconstruct, save_simulation, MotionAxis, PipelineConfig, PlyFormatOpt,
    ProjectorCorrectionOpt,
};
use sl_core::simulator::{render_sequence, RenderConfig, Scene};
use sl_core::sync::{assemble, SyncConfig};
use sl_core::triangulate::PointCloud;
use sl_core::Grid;

#[derive(Parser)]
#[command(name = "sl", version, about = "Structured-light scanning toolkit")]
struct Cli {
    /// JSON pipeline config; individual flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a PSP fringe pattern sequence as image files.
    GenPatterns(GenPatternsArgs),
    /// Render a synthetic capture of a scene through a rig.
    Simulate(SimulateArgs),
    /// Match trigger and image timestamp streams and report frame sets.
    SyncCheck(SyncCheckArgs),
    /// Decode a frame sequence into phase and projector-coordinate maps.
    Decode(DecodeArgs),
    /// Full pipeline: sync, optional motion compensation, decode,
    /// triangulate, write the point cloud.
    Reconstruct(ReconstructArgs),
    /// Quality metrics over clouds and depth maps.
    #[command(subcommand)]
    Evaluate(EvaluateCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum OrientationOpt {
    Vertical,
    Horizontal,
}

#[derive(Clone, Copy, ValueEnum)]
enum ImageFormat {
    Pgm,
    Png,
}

#[derive(Args)]
struct GenPatternsArgs {
    #[arg(long, value_enum, default_value = "vertical")]
    orientation: OrientationOpt,
    #[arg(long, default_value_t = 3)]
    steps: usize,
    #[arg(long, default_value_t = 16)]
    n_fringe: u32,
    #[arg(long, default_value_t = 912)]
    width: u32,
    #[arg(long, default_value_t = 1140)]
    height: u32,
    /// Quantization depth for the exported images.
    #[arg(long, default_value_t = 8)]
    bits: u8,
    #[arg(long, value_enum, default_value = "pgm")]
    format: ImageFormat,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    rig: PathBuf,
    /// Scene description JSON.
    #[arg(long)]
    scene: PathBuf,
    /// Render config JSON; defaults apply when omitted.
    #[arg(long)]
    render: Option<PathBuf>,
    /// Pattern spec JSON (the gen-patterns sidecar); flags below otherwise.
    #[arg(long)]
    pattern: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "vertical")]
    orientation: OrientationOpt,
    #[arg(long, default_value_t = 3)]
    steps: usize,
    #[arg(long, default_value_t = 16)]
    n_fringe: u32,
    /// Noise seed override.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SyncCheckArgs {
    /// Manifest with trigger and image timestamp streams.
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    /// Frames manifest (simulate output).
    #[arg(long)]
    frames: PathBuf,
    /// Modulation threshold on the [0,1] intensity scale.
    #[arg(long, default_value_t = sl_core::decode::DEFAULT_MODULATION_THRESHOLD)]
    threshold_b: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    rig: Option<PathBuf>,
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Enable phase-correlation motion compensation.
    #[arg(long)]
    motion_comp: bool,
    #[arg(long, value_enum)]
    motion_axis: Option<MotionAxisOpt>,
    /// Reference image index (default: middle image).
    #[arg(long)]
    reference: Option<usize>,
    /// Nearest-neighbour alignment resampling instead of bilinear.
    #[arg(long)]
    nearest: bool,
    #[arg(long)]
    threshold_b: Option<f64>,
    #[arg(long, value_enum)]
    proj_correction: Option<ProjCorrectionOpt>,
    /// Output point cloud (.ply).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    ply_format: Option<PlyFormatArg>,
    /// Write the motion plan JSON here.
    #[arg(long)]
    debug_motion: Option<PathBuf>,
    /// Write a JSON run report (timings, drops, mask stats) here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MotionAxisOpt {
    X,
    Y,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProjCorrectionOpt {
    None,
    Iterative,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlyFormatArg {
    Binary,
    Ascii,
}

#[derive(Subcommand)]
enum EvaluateCmd {
    /// Per-pixel depth std over repeated scans of a static scene.
    Precision(PrecisionArgs),
    /// Plane-fit roughness (ESD) of a patch.
    Esd(EsdArgs),
    /// Cone fitting and apex distances on an evaluation board.
    Cones(ConesArgs),
    /// Depth profile along a pixel segment with ripple amplitude.
    CrossSection(CrossSectionArgs),
}

#[derive(Args)]
struct PrecisionArgs {
    /// Point clouds (.ply with u_c/v_c provenance), one per scan.
    #[arg(long, num_args = 2.., required = true)]
    clouds: Vec<PathBuf>,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
}

#[derive(Args)]
struct EsdArgs {
    #[arg(long)]
    cloud: PathBuf,
    /// Patch as x0,y0,x1,y1 in camera pixels (half-open).
    #[arg(long, value_delimiter = ',')]
    patch: Vec<u32>,
}

#[derive(Args)]
struct ConesArgs {
    #[arg(long)]
    cloud: PathBuf,
    /// JSON list of cone seeds.
    #[arg(long)]
    seeds: PathBuf,
    /// Reference apex distances cone0->coneJ in mm, for RMSE.
    #[arg(long, value_delimiter = ',')]
    reference: Vec<f64>,
}

#[derive(Args)]
struct CrossSectionArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    /// Segment endpoints x0,y0,x1,y1 (pixels).
    #[arg(long, value_delimiter = ',')]
    line: Vec<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Write the profile as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Keep clap's help/version on stdout with success, everything
            // else is a usage error (exit 1).
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e.class() {
                ErrorClass::Config => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numerical => 3,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::GenPatterns(args) => gen_patterns(args),
        Command::Simulate(args) => simulate(args),
        Command::SyncCheck(args) => sync_check(args),
        Command::Decode(args) => decode(args),
        Command::Reconstruct(args) => reconstruct(cli.config.as_deref(), args),
        Command::Evaluate(cmd) => evaluate(cmd),
    }
}

#[derive(Serialize, Deserialize)]
struct PatternSidecar {
    spec: PatternSpec,
    bits: u8,
    files: Vec<String>,
}

fn gen_patterns(args: GenPatternsArgs) -> Result<ExitCode, Error> {
    let orientation = match args.orientation {
        OrientationOpt::Vertical => Orientation::Vertical,
        OrientationOpt::Horizontal => Orientation::Horizontal,
    };
    let spec = PatternSpec::new(orientation, args.steps, args.n_fringe, args.width, args.height)?;
    let seq = quantize(&generate(&spec), args.bits)?;
    std::fs::create_dir_all(&args.out)?;
    let ext = match args.format {
        ImageFormat::Pgm => "pgm",
        ImageFormat::Png => "png",
    };
    let mut files = Vec::new();
    for (i, img) in seq.images.iter().enumerate() {
        let (set, idx) = if i < spec.steps {
            ("hf", i + 1)
        } else {
            ("uf", i - spec.steps + 1)
        };
        let name = format!("pat_{set}_{idx}.{ext}");
        let path = args.out.join(&name);
        let bits = if args.bits > 8 { 16 } else { 8 };
        match args.format {
            ImageFormat::Pgm => io::write_pgm(&path, img, bits, PgmEncoding::Binary)?,
            ImageFormat::Png => io::write_png_gray(&path, img, bits)?,
        }
        files.push(name);
    }
    let sidecar = PatternSidecar {
        spec,
        bits: args.bits,
        files,
    };
    std::fs::write(
        args.out.join("pattern.json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    println!(
        "wrote {} pattern images ({}x{}, lambda = {} px) to {}",
        seq.images.len(),
        args.width,
        args.height,
        spec.wavelength(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn simulate(args: SimulateArgs) -> Result<ExitCode, Error> {
    let rig = StereoRig::load(&args.rig)?;
    let scene: Scene = serde_json::from_str(&std::fs::read_to_string(&args.scene)?)?;
    let mut render_cfg = match &args.render {
        Some(path) => serde_json::from_str::<RenderConfig>(&std::fs::read_to_string(path)?)?,
        None => RenderConfig::default(),
    };
    if let Some(seed) = args.seed {
        render_cfg.seed = seed;
    }
    let spec = match &args.pattern {
        Some(path) => {
            let sidecar: PatternSidecar = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            sidecar.spec
        }
        None => {
            let orientation = match args.orientation {
                OrientationOpt::Vertical => Orientation::Vertical,
                OrientationOpt::Horizontal => Orientation::Horizontal,
            };
            PatternSpec::new(
                orientation,
                args.steps,
                args.n_fringe,
                rig.projector.intrinsics.width,
                rig.projector.intrinsics.height,
            )?
        }
    };
    let seq = generate(&spec);
    let (frames, gt) = render_sequence(&rig, &scene, &seq, &render_cfg)?;
    let n = frames.images.len();
    let mut cumulative = vec![[0.0f64; 3]; n];
    for f in 1..n {
        let d = render_cfg.motion.get(f - 1).copied().unwrap_or([0.0; 3]);
        for k in 0..3 {
            cumulative[f][k] = cumulative[f - 1][k] + d[k];
        }
    }
    let manifest = save_simulation(
        &args.out,
        &frames,
        &gt,
        &rig,
        &cumulative,
        render_cfg.seed,
        render_cfg.dt_img,
    )?;
    println!(
        "rendered {} frames ({}x{}) -> {}",
        n,
        frames.width(),
        frames.height(),
        manifest.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn sync_check(args: SyncCheckArgs) -> Result<ExitCode, Error> {
    let manifest = SyncManifest::load(&args.manifest)?;
    let mut cfg = SyncConfig::with_default_tol(manifest.dt_img)?;
    if let Some(t) = manifest.tol_lower {
        cfg.tol_lower = t;
    }
    if let Some(t) = manifest.tol_upper {
        cfg.tol_upper = t;
    }
    let assembly = assemble(&manifest.triggers, &manifest.images, manifest.seq_len, &cfg)?;
    for set in &assembly.sets {
        let labels: Vec<&str> = set.slots.iter().map(|(_, l)| l.as_str()).collect();
        println!(
            "sequence {} @ {:.6}s: complete [{}]",
            set.sequence,
            set.trigger_time,
            labels.join(", ")
        );
    }
    for inc in &assembly.report.incomplete {
        println!(
            "sequence {}: incomplete, missing slot(s) {:?}",
            inc.sequence, inc.missing
        );
    }
    for c in &assembly.report.conflicts {
        println!(
            "sequence {} slot {}: {} candidates, kept t={:.6}s",
            c.sequence, c.index, c.candidates, c.kept_time
        );
    }
    if !assembly.report.unmatched_images.is_empty() {
        println!(
            "unmatched images at {:?}",
            assembly.report.unmatched_images
        );
    }
    if assembly.sets.is_empty() {
        Ok(ExitCode::from(2))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn decode(args: DecodeArgs) -> Result<ExitCode, Error> {
    let (frames, _manifest) = load_frame_set(&args.frames)?;
    let (maps, coords) = decode_full(&frames, args.threshold_b)?;
    std::fs::create_dir_all(&args.out)?;
    io::write_f32_map(&args.out.join("phi_abs.f32"), &maps.phi_abs)?;
    io::write_f32_map(&args.out.join("proj_coord.f32"), &coords.coord)?;
    io::write_f32_map(&args.out.join("modulation.f32"), &maps.modulation)?;
    let mask_img = maps.mask.map(|v| if v { 1.0 } else { 0.0 });
    io::write_pgm(&args.out.join("mask.pgm"), &mask_img, 8, PgmEncoding::Binary)?;
    let sidecar = serde_json::json!({
        "width": frames.width(),
        "height": frames.height(),
        "axis": coords.axis,
        "extent": coords.extent,
        "valid_pixels": maps.mask.count_true(),
        "files": {
            "phi_abs": "phi_abs.f32",
            "proj_coord": "proj_coord.f32",
            "modulation": "modulation.f32",
            "mask": "mask.pgm",
        },
    });
    std::fs::write(
        args.out.join("decode.json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    println!(
        "decoded {} valid pixels of {} -> {}",
        maps.mask.count_true(),
        frames.width() * frames.height(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn reconstruct(config: Option<&Path>, args: ReconstructArgs) -> Result<ExitCode, Error> {
    let mut cfg = match config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(rig) = args.rig {
        cfg.rig = rig;
    }
    if let Some(frames) = args.frames {
        cfg.frames = frames;
    }
    if args.motion_comp {
        cfg.motion_comp = true;
    }
    if let Some(axis) = args.motion_axis {
        cfg.motion_axis = match axis {
            MotionAxisOpt::X => MotionAxis::X,
            MotionAxisOpt::Y => MotionAxis::Y,
        };
    }
    if args.reference.is_some() {
        cfg.reference = args.reference;
    }
    if args.nearest {
        cfg.interpolation_nearest = true;
    }
    if let Some(t) = args.threshold_b {
        cfg.modulation_threshold = t;
    }
    if let Some(c) = args.proj_correction {
        cfg.projector_correction = match c {
            ProjCorrectionOpt::None => ProjectorCorrectionOpt::None,
            ProjCorrectionOpt::Iterative => ProjectorCorrectionOpt::Iterative,
        };
    }
    if args.out.is_some() {
        cfg.output = args.out;
    }
    if let Some(f) = args.ply_format {
        cfg.ply_format = match f {
            PlyFormatArg::Binary => PlyFormatOpt::Binary,
            PlyFormatArg::Ascii => PlyFormatOpt::Ascii,
        };
    }
    if args.debug_motion.is_some() {
        cfg.debug_motion = args.debug_motion;
    }
    if cfg.rig.as_os_str().is_empty() || cfg.frames.as_os_str().is_empty() {
        return Err(Error::Config(
            "reconstruct needs --rig and --frames (or a --config providing them)".into(),
        ));
    }

    let out = run_reconstruct(&cfg)?;
    println!(
        "reconstructed {} points ({} dropped); decode {:.1} Mpx/s, triangulate {:.1} Mpx/s",
        out.cloud.len(),
        out.drops.total(),
        out.timings.decode_mpix_per_s,
        out.timings.triangulate_mpix_per_s
    );
    if let Some(path) = &cfg.output {
        println!("cloud -> {}", path.display());
    }
    if let Some(report_path) = args.report {
        let report = serde_json::json!({
            "points": out.cloud.len(),
            "dropped_degenerate": out.drops.degenerate,
            "dropped_behind_camera": out.drops.behind_camera,
            "valid_pixels": out.maps.mask.count_true(),
            "timings": out.timings,
            "motion_plan": out.motion_plan.as_ref().map(|p| {
                serde_json::json!({
                    "reference_index": p.reference_index,
                    "shifts": p.shifts.iter().map(|s| s.map(|s| (s.dx, s.dy))).collect::<Vec<_>>(),
                })
            }),
        });
        std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn load_cloud(path: &Path) -> Result<PointCloud, Error> {
    let (cloud, _) = io::read_ply(path)?;
    Ok(cloud)
}

fn depth_map_of(cloud: &PointCloud, width: usize, height: usize) -> Result<Grid<f64>, Error> {
    if cloud.points.iter().all(|p| p.pixel == (0, 0)) && cloud.len() > 1 {
        return Err(Error::Data(
            "cloud lacks per-point source pixels (u_c/v_c); re-export with provenance".into(),
        ));
    }
    Ok(cloud.depth_map(width, height))
}

fn evaluate(cmd: EvaluateCmd) -> Result<ExitCode, Error> {
    match cmd {
        EvaluateCmd::Precision(args) => {
            let mut maps = Vec::new();
            for path in &args.clouds {
                maps.push(depth_map_of(&load_cloud(path)?, args.width, args.height)?);
            }
            let r = depth_std(&maps)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "scans": r.scan_count,
                    "valid_pixels": r.valid_pixels,
                    "mean_depth_std_mm": r.mean_mm,
                    "max_depth_std_mm": r.max_mm,
                }))?
            );
        }
        EvaluateCmd::Esd(args) => {
            let [x0, y0, x1, y1]: [u32; 4] = args
                .patch
                .as_slice()
                .try_into()
                .map_err(|_| Error::Config("--patch needs x0,y0,x1,y1".into()))?;
            let r = plane_esd(&load_cloud(&args.cloud)?, PixelRect { x0, y0, x1, y1 })?;
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "esd_mm": r.esd_mm,
                    "points": r.point_count,
                    "patch_area_m2": r.area_m2,
                    "plane_normal": [r.plane.normal.x, r.plane.normal.y, r.plane.normal.z],
                    "plane_offset_m": r.plane.offset,
                }))?
            );
        }
        EvaluateCmd::Cones(args) => {
            let seeds: Vec<ConeSeed> =
                serde_json::from_str(&std::fs::read_to_string(&args.seeds)?)?;
            let fit = fit_cones(&load_cloud(&args.cloud)?, &seeds)?;
            let mut doc = serde_json::json!({
                "cones": fit.cones.iter().map(|c| serde_json::json!({
                    "apex_m": [c.apex.x, c.apex.y, c.apex.z],
                    "axis": [c.axis.x, c.axis.y, c.axis.z],
                    "half_angle_rad": c.half_angle,
                    "rms_m": c.rms_m,
                    "points": c.point_count,
                })).collect::<Vec<_>>(),
                "distances_to_first_mm": fit.distances_to_first_mm,
            });
            if !args.reference.is_empty() {
                let stats = cone_report(std::slice::from_ref(&fit), &args.reference)?;
                doc["rmse_mm"] = serde_json::json!(stats.rmse_mm);
            }
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
        EvaluateCmd::CrossSection(args) => {
            let [x0, y0, x1, y1]: [f64; 4] = args
                .line
                .as_slice()
                .try_into()
                .map_err(|_| Error::Config("--line needs x0,y0,x1,y1".into()))?;
            let depth = depth_map_of(&load_cloud(&args.cloud)?, args.width, args.height)?;
            let n = args
                .samples
                .unwrap_or_else(|| ((x1 - x0).abs().max((y1 - y0).abs()) as usize + 1).max(2));
            let cs = cross_section(&depth, (x0, y0), (x1, y1), n)?;
            if let Some(csv) = &args.csv {
                let mut text = String::from("index,depth_mm\n");
                for (i, v) in cs.samples_mm.iter().enumerate() {
                    text.push_str(&format!("{i},{v}\n"));
                }
                std::fs::write(csv, text)?;
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "samples": cs.samples_mm.len(),
                    "ripple_mm": cs.ripple_mm,
                }))?
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
