//! The staged in-process reconstruction pipeline behind `sl reconstruct`:
//! sync -> motion compensation -> decode -> triangulate, with per-stage
//! timings. Images pass between stages by reference; nothing is copied.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::decode::{decode_full, FrameSet, PhaseMaps, ProjectorCoordMap, DEFAULT_MODULATION_THRESHOLD};
use crate::error::{Error, Result};
use crate::geometry::StereoRig;
use crate::grid::Grid;
use crate::io::{
    self, FrameEntry, FramesManifest, GroundTruthEntry, PgmEncoding, PlyFormat, PlyOptions,
};
use crate::register::{
    align, default_reference_index, plan_motion, AxisConstraint, Interpolation, MotionPlan,
    RegistrationConfig,
};
use crate::simulator::GroundTruth;
use crate::sync::{assemble, SyncConfig};
use crate::triangulate::{build_table, triangulate_map, DropStats, PointCloud, ProjectorCorrection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionAxis {
    #[default]
    X,
    Y,
}

impl From<MotionAxis> for AxisConstraint {
    fn from(a: MotionAxis) -> Self {
        match a {
            MotionAxis::X => AxisConstraint::XOnly,
            MotionAxis::Y => AxisConstraint::YOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlyFormatOpt {
    #[default]
    Binary,
    Ascii,
}

impl From<PlyFormatOpt> for PlyFormat {
    fn from(f: PlyFormatOpt) -> Self {
        match f {
            PlyFormatOpt::Binary => PlyFormat::BinaryLittleEndian,
            PlyFormatOpt::Ascii => PlyFormat::Ascii,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectorCorrectionOpt {
    None,
    #[default]
    Iterative,
}

impl From<ProjectorCorrectionOpt> for ProjectorCorrection {
    fn from(c: ProjectorCorrectionOpt) -> Self {
        match c {
            ProjectorCorrectionOpt::None => ProjectorCorrection::None,
            ProjectorCorrectionOpt::Iterative => ProjectorCorrection::Iterative,
        }
    }
}

/// Everything `reconstruct` needs; loadable from a JSON config file with
/// CLI flags overriding individual fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub rig: PathBuf,
    pub frames: PathBuf,
    pub motion_comp: bool,
    pub motion_axis: MotionAxis,
    /// Reference image index; middle image when absent.
    pub reference: Option<usize>,
    pub interpolation_nearest: bool,
    pub modulation_threshold: f64,
    pub projector_correction: ProjectorCorrectionOpt,
    pub output: Option<PathBuf>,
    pub ply_format: PlyFormatOpt,
    /// Dump the motion plan as JSON next to the output.
    pub debug_motion: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            rig: PathBuf::new(),
            frames: PathBuf::new(),
            motion_comp: false,
            motion_axis: MotionAxis::X,
            reference: None,
            interpolation_nearest: false,
            modulation_threshold: DEFAULT_MODULATION_THRESHOLD,
            projector_correction: ProjectorCorrectionOpt::Iterative,
            output: None,
            ply_format: PlyFormatOpt::Binary,
            debug_motion: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct StageTimings {
    pub sync_s: f64,
    pub register_s: f64,
    pub decode_s: f64,
    pub table_s: f64,
    pub triangulate_s: f64,
    /// Throughputs over the camera pixel count.
    pub decode_mpix_per_s: f64,
    pub triangulate_mpix_per_s: f64,
}

pub struct ReconstructionOutput {
    pub cloud: PointCloud,
    pub maps: PhaseMaps,
    pub coords: ProjectorCoordMap,
    pub motion_plan: Option<MotionPlan>,
    pub drops: DropStats,
    pub timings: StageTimings,
    pub manifest: FramesManifest,
}

/// Load the frame set referenced by a manifest; when trigger timings are
/// present the images are first grouped by the sync stage and the first
/// complete sequence is used.
pub fn load_frame_set(manifest_path: &Path) -> Result<(FrameSet, FramesManifest)> {
    let manifest = FramesManifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut images = Vec::with_capacity(manifest.frames.len());
    for entry in &manifest.frames {
        let (img, _) = io::read_pgm(&dir.join(&entry.file))?;
        if img.dims() != (manifest.width, manifest.height) {
            return Err(Error::Format(format!(
                "frame {} is {}x{}, manifest says {}x{}",
                entry.file,
                img.dims().0,
                img.dims().1,
                manifest.width,
                manifest.height
            )));
        }
        images.push(img);
    }
    let timestamps: Vec<f64> = manifest.frames.iter().map(|f| f.timestamp).collect();

    let (images, timestamps) = match &manifest.triggers {
        None => (images, timestamps),
        Some(triggers) => {
            let cfg = SyncConfig::with_default_tol(manifest.dt_img)?;
            let seq_len = 2 * manifest.pattern.steps;
            let stamped: Vec<(f64, usize)> = timestamps
                .iter()
                .enumerate()
                .map(|(i, &t)| (t, i))
                .collect();
            let assembly = assemble(triggers, &stamped, seq_len, &cfg)?;
            let set = assembly.sets.first().ok_or_else(|| {
                Error::Data(format!(
                    "no complete frame set; {} incomplete sequence(s)",
                    assembly.report.incomplete.len()
                ))
            })?;
            let mut sel_images = Vec::with_capacity(seq_len);
            let mut sel_times = Vec::with_capacity(seq_len);
            for &(t, idx) in &set.slots {
                sel_images.push(images[idx].clone());
                sel_times.push(t);
            }
            (sel_images, sel_times)
        }
    };

    let frames = FrameSet::new(images, timestamps, manifest.pattern)?;
    Ok((frames, manifest))
}

/// Run the full staged pipeline described by `cfg`.
pub fn run_reconstruct(cfg: &PipelineConfig) -> Result<ReconstructionOutput> {
    let rig = StereoRig::load(&cfg.rig)?;

    let t_sync = Instant::now();
    let (frames, manifest) = load_frame_set(&cfg.frames)?;
    let sync_s = t_sync.elapsed().as_secs_f64();

    if manifest.rig_fingerprint != rig.fingerprint() && !manifest.rig_fingerprint.is_empty() {
        return Err(Error::Config(format!(
            "frames were rendered with rig {}, reconstruction rig is {}",
            manifest.rig_fingerprint,
            rig.fingerprint()
        )));
    }

    let t_reg = Instant::now();
    let (frames, motion_plan) = if cfg.motion_comp {
        let reference = cfg
            .reference
            .unwrap_or_else(|| default_reference_index(frames.images.len()));
        let plan = plan_motion(
            &frames,
            reference,
            cfg.motion_axis.into(),
            &RegistrationConfig::default(),
        )?;
        let interp = if cfg.interpolation_nearest {
            Interpolation::Nearest
        } else {
            Interpolation::Bilinear
        };
        let aligned = align(&frames, &plan, interp)?;
        (aligned, Some(plan))
    } else {
        (frames, None)
    };
    let register_s = t_reg.elapsed().as_secs_f64();

    if let (Some(path), Some(plan)) = (&cfg.debug_motion, &motion_plan) {
        let rows: Vec<serde_json::Value> = plan
            .shifts
            .iter()
            .enumerate()
            .map(|(i, s)| match s {
                Some(s) => serde_json::json!({
                    "image": i,
                    "dx": s.dx,
                    "dy": s.dy,
                    "peak": s.peak_value,
                }),
                None => serde_json::json!({"image": i, "failed": true}),
            })
            .collect();
        let doc = serde_json::json!({
            "reference_index": plan.reference_index,
            "shifts": rows,
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    }

    let pixels = (frames.width() * frames.height()) as f64 / 1e6;

    let t_dec = Instant::now();
    let (maps, coords) = decode_full(&frames, cfg.modulation_threshold)?;
    let decode_s = t_dec.elapsed().as_secs_f64();

    let t_table = Instant::now();
    let table = build_table(&rig, coords.axis)?;
    let table_s = t_table.elapsed().as_secs_f64();

    let t_tri = Instant::now();
    let (cloud, drops) = triangulate_map(
        &coords,
        &rig,
        &table,
        cfg.projector_correction.into(),
        Some(&maps.shading),
    )?;
    let triangulate_s = t_tri.elapsed().as_secs_f64();

    if let Some(path) = &cfg.output {
        let opts = PlyOptions {
            format: cfg.ply_format.into(),
            with_intensity: true,
            with_pixel: true,
            comments: vec![
                format!("rig_fingerprint={}", rig.fingerprint()),
                format!(
                    "pattern=orientation:{:?},steps:{},n_fringe:{},extent:{}",
                    manifest.pattern.orientation,
                    manifest.pattern.steps,
                    manifest.pattern.n_fringe,
                    manifest.pattern.extent()
                ),
            ],
        };
        io::write_ply(path, &cloud, &opts)?;
    }

    Ok(ReconstructionOutput {
        cloud,
        maps,
        coords,
        motion_plan,
        drops,
        timings: StageTimings {
            sync_s,
            register_s,
            decode_s,
            table_s,
            triangulate_s,
            decode_mpix_per_s: pixels / decode_s.max(1e-12),
            triangulate_mpix_per_s: pixels / triangulate_s.max(1e-12),
        },
        manifest,
    })
}

/// Persist a rendered sequence as 16-bit PGM frames plus manifest and
/// ground-truth maps, the layout `decode`/`reconstruct` consume.
pub fn save_simulation(
    dir: &Path,
    frames: &FrameSet,
    gt: &GroundTruth,
    rig: &StereoRig,
    cumulative_motion: &[[f64; 3]],
    seed: u64,
    dt_img: f64,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(frames.images.len());
    for (i, img) in frames.images.iter().enumerate() {
        let name = format!("frame_{i:03}.pgm");
        io::write_pgm(&dir.join(&name), img, 16, PgmEncoding::Binary)?;
        entries.push(FrameEntry {
            file: name,
            timestamp: frames.timestamps[i],
            motion: cumulative_motion.get(i).copied().unwrap_or([0.0; 3]),
        });
    }
    io::write_f32_map(&dir.join("gt_depth.f32"), &gt.depth)?;
    io::write_f32_map(&dir.join("gt_coord.f32"), &gt.coord)?;
    let valid_img = gt.valid.map(|v| if v { 1.0 } else { 0.0 });
    io::write_pgm(&dir.join("gt_valid.pgm"), &valid_img, 8, PgmEncoding::Binary)?;

    let manifest = FramesManifest {
        width: frames.width(),
        height: frames.height(),
        pattern: frames.spec,
        bits: 16,
        dt_img,
        seed,
        rig_fingerprint: rig.fingerprint(),
        frames: entries,
        ground_truth: Some(GroundTruthEntry {
            depth_file: "gt_depth.f32".into(),
            coord_file: "gt_coord.f32".into(),
            valid_file: "gt_valid.pgm".into(),
            axis: gt.axis,
            frame: gt.frame,
        }),
        triggers: None,
    };
    let path = dir.join("frames.json");
    manifest.save(&path)?;
    rig.save(&dir.join("rig.json"))?;
    Ok(path)
}

/// Load the ground-truth depth map referenced by a manifest.
pub fn load_ground_truth_depth(manifest_path: &Path) -> Result<Grid<f64>> {
    let manifest = FramesManifest::load(manifest_path)?;
    let gt = manifest
        .ground_truth
        .as_ref()
        .ok_or_else(|| Error::Data("manifest has no ground truth".into()))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    io::read_f32_map(&dir.join(&gt.depth_file), manifest.width, manifest.height)
}
