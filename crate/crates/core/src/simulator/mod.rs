//! Synthetic fringe-sequence renderer: the ground-truth oracle for the
//! decoding, registration and triangulation stages.
//!
//! Each camera pixel is undistorted to a ray and intersected with a
//! parametric scene; the hit point is projected into the projector (with
//! projector lens distortion) and the pattern sampled there. Intensities
//! follow the linear model `I = ambient + albedo * (A0 + B0 * cos(phase))`,
//! with optional per-pixel Gaussian noise, quantization, and per-frame
//! linear sensor motion (the scene stays fixed; camera and projector move
//! together as a rigid rig).

mod scene;

pub use scene::{Cone, ConeBoard, HeightField, Plane, Scene, Sphere};

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::decode::{CoordAxis, FrameSet};
use crate::error::{Error, Result};
use crate::geometry::{project, undistort_pixel, StereoRig};
use crate::grid::{Grid, Mask};
use crate::patterns::{Orientation, PatternSequence};
use crate::triangulate::{CloudPoint, PointCloud};

/// How pattern values are looked up during rendering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternSampling {
    /// Bilinear interpolation of the stored (possibly quantized) images.
    #[default]
    Bilinear,
    /// Evaluate the analytic sinusoid at the exact projector coordinate;
    /// eliminates interpolation error for tight-tolerance tests.
    Analytic,
}

/// Surface reflectance model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AlbedoModel {
    #[default]
    Uniform,
    /// Smooth seeded value noise over world x/y, lattice pitch `cell_size`
    /// meters; albedo spans `[1 - strength, 1]`. Gives otherwise featureless
    /// surfaces the broadband texture real materials have (and image
    /// registration needs).
    ValueNoise {
        seed: u64,
        strength: f64,
        cell_size: f64,
    },
}

impl AlbedoModel {
    fn eval(&self, q: &Vector3<f64>) -> f64 {
        match *self {
            AlbedoModel::Uniform => 1.0,
            AlbedoModel::ValueNoise {
                seed,
                strength,
                cell_size,
            } => {
                let u = q.x / cell_size;
                let v = q.y / cell_size;
                let x0 = u.floor();
                let y0 = v.floor();
                let fx = smoothstep(u - x0);
                let fy = smoothstep(v - y0);
                let (ix, iy) = (x0 as i64, y0 as i64);
                let at = |dx: i64, dy: i64| lattice_value(seed, ix + dx, iy + dy);
                let val = (at(0, 0) * (1.0 - fx) + at(1, 0) * fx) * (1.0 - fy)
                    + (at(0, 1) * (1.0 - fx) + at(1, 1) * fx) * fy;
                1.0 - strength * val
            }
        }
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn lattice_value(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = splitmix64(
        seed ^ (ix as u64).wrapping_mul(0x9e3779b97f4a7c15)
            ^ (iy as u64).wrapping_mul(0xbf58476d1ce4e5b9),
    );
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Average reflected intensity A0 in [0, 1].
    pub reflectance: f64,
    /// Fringe modulation B0 in [0, 1].
    pub modulation: f64,
    /// Intensity of pixels the projector does not reach.
    pub ambient: f64,
    /// Std-dev of i.i.d. Gaussian intensity noise per pixel per frame.
    pub noise_sigma: f64,
    /// Sensor translation applied between consecutive captures, meters;
    /// empty for a static scan, otherwise one entry per frame gap.
    pub motion: Vec<[f64; 3]>,
    /// Quantize rendered intensities to `2^bits - 1` levels.
    pub quantize_bits: Option<u8>,
    pub sampling: PatternSampling,
    pub albedo: AlbedoModel,
    /// Seed for the noise stream (split per frame deterministically).
    pub seed: u64,
    /// Camera trigger interval, seconds; sets frame timestamps.
    pub dt_img: f64,
    /// Frame whose pose anchors the ground truth maps.
    pub ground_truth_frame: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            reflectance: 0.5,
            modulation: 0.4,
            ambient: 0.0,
            noise_sigma: 0.0,
            motion: Vec::new(),
            quantize_bits: None,
            sampling: PatternSampling::Bilinear,
            albedo: AlbedoModel::Uniform,
            seed: 0,
            dt_img: 1.0 / 30.0,
            ground_truth_frame: 0,
        }
    }
}

impl RenderConfig {
    fn validate(&self, n_frames: usize) -> Result<()> {
        for (name, v) in [
            ("reflectance", self.reflectance),
            ("modulation", self.modulation),
            ("ambient", self.ambient),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParam(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if self.reflectance + 0.5 * self.modulation > 1.0 {
            return Err(Error::InvalidParam(
                "reflectance + modulation/2 exceeds 1; sinusoid would saturate".into(),
            ));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidParam("noise_sigma must be >= 0".into()));
        }
        if !self.motion.is_empty() && self.motion.len() < n_frames - 1 {
            return Err(Error::InvalidParam(format!(
                "motion has {} entries for {} frame gaps",
                self.motion.len(),
                n_frames - 1
            )));
        }
        if self.ground_truth_frame >= n_frames {
            return Err(Error::InvalidParam(format!(
                "ground_truth_frame {} out of range for {n_frames} frames",
                self.ground_truth_frame
            )));
        }
        Ok(())
    }

    /// Accumulated sensor translation at each frame.
    fn cumulative_motion(&self, n_frames: usize) -> Vec<Vector3<f64>> {
        let mut cum = Vec::with_capacity(n_frames);
        let mut acc = Vector3::zeros();
        cum.push(acc);
        for f in 1..n_frames {
            if let Some(d) = self.motion.get(f - 1) {
                acc += Vector3::new(d[0], d[1], d[2]);
            }
            cum.push(acc);
        }
        cum
    }
}

/// Exact per-pixel geometry at the ground-truth frame's pose.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Camera-frame hit depth, meters; NaN where invalid.
    pub depth: Grid<f64>,
    /// Exact (distorted) projector coordinate on the coded axis.
    pub coord: Grid<f64>,
    pub axis: CoordAxis,
    /// Pixels that hit the scene and land inside the projector frustum.
    pub valid: Mask,
    /// The frame whose pose these maps describe.
    pub frame: usize,
}

/// Render the full 2N-image sequence of `seq` as seen by the rig's camera.
pub fn render_sequence(
    rig: &StereoRig,
    scene: &Scene,
    seq: &PatternSequence,
    cfg: &RenderConfig,
) -> Result<(FrameSet, GroundTruth)> {
    scene.validate()?;
    let n_frames = seq.images.len();
    cfg.validate(n_frames)?;
    let (w, h) = (
        rig.camera.intrinsics.width as usize,
        rig.camera.intrinsics.height as usize,
    );

    // Camera rays are fixed in the camera frame; undistort each pixel once.
    let mut rays = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            rays.push(undistort_pixel(&rig.camera, x as f64, y as f64)?);
        }
    }

    let cum = cfg.cumulative_motion(n_frames);
    let levels = cfg.quantize_bits.map(|b| ((1u64 << b) - 1) as f64);
    let horizontal = seq.spec.orientation == Orientation::Horizontal;

    let mut images = Vec::with_capacity(n_frames);
    let mut gt_depth = Grid::new(w, h, f64::NAN);
    let mut gt_coord = Grid::new(w, h, f64::NAN);
    let mut gt_valid = Grid::new(w, h, false);

    for (f, pattern_idx) in (0..n_frames).zip(0..) {
        let d = cum[f];
        let record_gt = f == cfg.ground_truth_frame;
        let mut img = Grid::new(w, h, 0.0);
        for idx in 0..w * h {
            // Sensor translated by d: rays emanate from d in the fixed frame.
            let ray = rays[idx];
            let value = match scene.intersect(&d, &ray) {
                None => cfg.ambient,
                Some(t) => {
                    let hit_fixed = d + ray * t;
                    let hit_cam = hit_fixed - d;
                    match project(&rig.projector, &rig.cam_t_proj, &hit_cam) {
                        Err(_) => cfg.ambient,
                        Ok(pp) if !rig.projector.intrinsics.contains(pp.x, pp.y) => cfg.ambient,
                        Ok(pp) => {
                            let coded = if horizontal { pp.y } else { pp.x };
                            let sample = match cfg.sampling {
                                PatternSampling::Bilinear => {
                                    seq.sample(pattern_idx, pp.x, pp.y)
                                }
                                PatternSampling::Analytic => {
                                    seq.sample_analytic(pattern_idx, coded)
                                }
                            };
                            if record_gt {
                                let (x, y) = (idx % w, idx / w);
                                gt_depth.set(x, y, hit_cam.z);
                                gt_coord.set(x, y, coded);
                                gt_valid.set(x, y, true);
                            }
                            let alb = cfg.albedo.eval(&hit_fixed);
                            cfg.ambient
                                + alb
                                    * (cfg.reflectance
                                        + cfg.modulation * (2.0 * sample - 1.0))
                        }
                    }
                }
            };
            img.as_mut_slice()[idx] = value;
        }
        if cfg.noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ (f as u64)));
            let normal = Normal::new(0.0, cfg.noise_sigma)
                .map_err(|e| Error::InvalidParam(e.to_string()))?;
            for v in img.as_mut_slice() {
                *v += normal.sample(&mut rng);
            }
        }
        for v in img.as_mut_slice() {
            let mut x = v.clamp(0.0, 1.0);
            if let Some(levels) = levels {
                x = (x * levels).round() / levels;
            }
            *v = x;
        }
        images.push(img);
    }

    if gt_valid.count_true() == 0 {
        return Err(Error::EmptyVisibility);
    }

    let timestamps = (0..n_frames).map(|f| f as f64 * cfg.dt_img).collect();
    let frames = FrameSet::new(images, timestamps, seq.spec)?;
    Ok((
        frames,
        GroundTruth {
            depth: gt_depth,
            coord: gt_coord,
            axis: seq.spec.orientation.into(),
            valid: gt_valid,
            frame: cfg.ground_truth_frame,
        },
    ))
}

/// Exact per-pixel intersection depths as a point cloud in the camera frame
/// (static pose, no noise): the evaluation oracle.
pub fn ground_truth_cloud(scene: &Scene, rig: &StereoRig) -> Result<PointCloud> {
    scene.validate()?;
    let (w, h) = (
        rig.camera.intrinsics.width as usize,
        rig.camera.intrinsics.height as usize,
    );
    let origin = Vector3::zeros();
    let mut points = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let ray = undistort_pixel(&rig.camera, x as f64, y as f64)?;
            if let Some(t) = scene.intersect(&origin, &ray) {
                let q = ray * t;
                points.push(CloudPoint {
                    position: [q.x, q.y, q.z],
                    pixel: (x as u32, y as u32),
                    intensity: 1.0,
                });
            }
        }
    }
    Ok(PointCloud { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Device, Distortion, Extrinsics, Intrinsics};
    use crate::patterns::{generate, PatternSpec};
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;

    /// Small test rig: 64x48 camera, 912x570 projector, 10 cm baseline.
    fn small_rig(distortion: Distortion) -> StereoRig {
        let cam = Device::new(
            Intrinsics::new(110.0, 110.0, 32.0, 24.0, 64, 48).unwrap(),
            distortion,
        )
        .unwrap();
        let proj = Device::new(
            Intrinsics::new(700.0, 700.0, 456.0, 285.0, 912, 570).unwrap(),
            distortion,
        )
        .unwrap();
        StereoRig::new(
            cam,
            proj,
            Extrinsics::new(Matrix3::identity(), Vector3::new(-0.1, 0.0, 0.0)).unwrap(),
        )
        .unwrap()
    }

    fn fronto_plane() -> Scene {
        Scene::Plane(Plane {
            point: Vector3::new(0.0, 0.0, 0.5),
            normal: Vector3::new(0.0, 0.0, -1.0),
        })
    }

    fn spec() -> PatternSpec {
        PatternSpec::new(Orientation::Vertical, 3, 16, 912, 570).unwrap()
    }

    #[test]
    fn intensity_follows_linear_model_exactly() {
        let rig = small_rig(Distortion::ZERO);
        let seq = generate(&spec());
        let cfg = RenderConfig {
            sampling: PatternSampling::Analytic,
            ..Default::default()
        };
        let (frames, gt) = render_sequence(&rig, &fronto_plane(), &seq, &cfg).unwrap();
        let mut peak: f64 = 0.0;
        for (x, y, ok) in gt.valid.iter_pixels() {
            if !ok {
                continue;
            }
            let p = gt.coord.get(x, y);
            for (i, img) in frames.images.iter().enumerate() {
                let expected = 0.5 + 0.4 * (2.0 * seq.sample_analytic(i, p) - 1.0);
                assert_relative_eq!(img.get(x, y), expected, epsilon = 1e-12);
            }
            peak = peak.max(frames.images[0].get(x, y));
        }
        // A + B at the fringe peak: 0.5 + 0.4 = 0.9.
        assert!(peak > 0.899 && peak <= 0.9, "peak = {peak}");
    }

    #[test]
    fn shadowed_pixels_are_ambient_and_invalid() {
        let rig = small_rig(Distortion::ZERO);
        let seq = generate(&spec());
        let cfg = RenderConfig {
            ambient: 0.07,
            ..Default::default()
        };
        // A plane so close that part of the camera image misses the
        // projector frustum.
        let near_plane = Scene::Plane(Plane {
            point: Vector3::new(0.0, 0.0, 0.18),
            normal: Vector3::new(0.0, 0.0, -1.0),
        });
        let (frames, gt) = render_sequence(&rig, &near_plane, &seq, &cfg).unwrap();
        let shadowed: Vec<(usize, usize)> = gt
            .valid
            .iter_pixels()
            .filter(|&(_, _, ok)| !ok)
            .map(|(x, y, _)| (x, y))
            .collect();
        assert!(!shadowed.is_empty(), "expected some unlit pixels");
        for &(x, y) in &shadowed {
            assert_eq!(frames.images[0].get(x, y), 0.07);
        }
    }

    #[test]
    fn empty_visibility_is_an_error() {
        let rig = small_rig(Distortion::ZERO);
        let seq = generate(&spec());
        let behind = Scene::Plane(Plane {
            point: Vector3::new(0.0, 0.0, -0.5),
            normal: Vector3::new(0.0, 0.0, -1.0),
        });
        assert!(matches!(
            render_sequence(&rig, &behind, &seq, &RenderConfig::default()),
            Err(Error::EmptyVisibility)
        ));
    }

    #[test]
    fn rendered_intensity_is_affine_in_pattern_value() {
        let rig = small_rig(Distortion::ZERO);
        let base = generate(&spec());
        // Three-step sequence whose third image is the average of the first
        // two; rendering must preserve that affine relation pixelwise.
        let mut images = base.images.clone();
        let avg = Grid::from_fn(912, 570, |x, y| {
            0.5 * (base.images[0].get(x, y) + base.images[1].get(x, y))
        });
        images[2] = avg;
        let seq = PatternSequence {
            spec: base.spec,
            images,
            bits: None,
        };
        let (frames, _) = render_sequence(&rig, &fronto_plane(), &seq, &RenderConfig::default())
            .unwrap();
        for idx in 0..frames.images[0].len() {
            let a = frames.images[0].as_slice()[idx];
            let b = frames.images[1].as_slice()[idx];
            let c = frames.images[2].as_slice()[idx];
            assert!((c - 0.5 * (a + b)).abs() < 1e-12);
        }
    }

    #[test]
    fn sensor_motion_equals_opposite_scene_motion() {
        let rig = small_rig(Distortion::ZERO);
        let seq = generate(&spec());
        let d = [0.0012, -0.0004, 0.0];
        let moving_cfg = RenderConfig {
            motion: vec![d; 5],
            ..Default::default()
        };
        let (frames_sensor, _) =
            render_sequence(&rig, &fronto_plane(), &seq, &moving_cfg).unwrap();
        // Render each frame statically against the scene translated by the
        // negative accumulated motion.
        for f in 0..6 {
            let offset = -Vector3::new(d[0], d[1], d[2]) * f as f64;
            let scene_moved = fronto_plane().translated(&offset);
            let single = PatternSequence {
                spec: seq.spec,
                images: vec![seq.images[f].clone(); 6],
                bits: None,
            };
            let (frames_scene, _) =
                render_sequence(&rig, &scene_moved, &single, &RenderConfig::default()).unwrap();
            for idx in 0..frames_sensor.images[f].len() {
                let a = frames_sensor.images[f].as_slice()[idx];
                let b = frames_scene.images[0].as_slice()[idx];
                assert!((a - b).abs() < 1e-9, "frame {f}, idx {idx}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let rig = small_rig(Distortion::ZERO);
        let seq = generate(&spec());
        let cfg = RenderConfig {
            noise_sigma: 0.01,
            seed: 42,
            ..Default::default()
        };
        let (a, _) = render_sequence(&rig, &fronto_plane(), &seq, &cfg).unwrap();
        let (b, _) = render_sequence(&rig, &fronto_plane(), &seq, &cfg).unwrap();
        assert_eq!(a.images, b.images);
        let cfg2 = RenderConfig { seed: 43, ..cfg };
        let (c, _) = render_sequence(&rig, &fronto_plane(), &seq, &cfg2).unwrap();
        assert_ne!(a.images, c.images);
    }

    #[test]
    fn ground_truth_cloud_plane_depth_is_exact() {
        let rig = small_rig(Distortion::ZERO);
        let cloud = ground_truth_cloud(&fronto_plane(), &rig).unwrap();
        assert_eq!(cloud.len(), 64 * 48);
        for p in &cloud.points {
            assert_relative_eq!(p.position[2], 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn ground_truth_cloud_sphere_radius_is_exact() {
        let rig = small_rig(Distortion::ZERO);
        let center = Vector3::new(0.0, 0.0, 0.5);
        let scene = Scene::Sphere(Sphere {
            center,
            radius: 0.08,
        });
        let cloud = ground_truth_cloud(&scene, &rig).unwrap();
        assert!(cloud.len() > 100);
        for p in &cloud.points {
            let q = Vector3::new(p.position[0], p.position[1], p.position[2]);
            assert!(((q - center).norm() - 0.08).abs() < 1e-12);
        }
    }

    #[test]
    fn ground_truth_cloud_cone_apex_distances() {
        let rig = small_rig(Distortion::ZERO);
        let mk = |x: f64, y: f64| Cone {
            apex: Vector3::new(x, y, 0.46),
            axis: Vector3::new(0.0, 0.0, 1.0),
            half_angle: 0.5,
            height: 0.04,
        };
        let scene = Scene::ConeBoard(ConeBoard {
            base: Plane {
                point: Vector3::new(0.0, 0.0, 0.5),
                normal: Vector3::new(0.0, 0.0, -1.0),
            },
            cones: vec![mk(-0.05, 0.0), mk(0.05, 0.0)],
        });
        let cloud = ground_truth_cloud(&scene, &rig).unwrap();
        assert!(cloud.len() > 1000);
    }

    /// Noiseless render -> decode -> Eq.-5 reproduces the ground-truth
    /// projector coordinate within 1e-3 px on all valid pixels.
    #[test]
    fn renderer_decoder_roundtrip() {
        use crate::decode::{decode_full, DEFAULT_MODULATION_THRESHOLD};
        let rig = small_rig(Distortion::new(0.05, 0.0, 0.0, 0.0, 0.0).unwrap());
        let seq = generate(&spec());
        let cfg = RenderConfig {
            sampling: PatternSampling::Analytic,
            ..Default::default()
        };
        let (frames, gt) = render_sequence(&rig, &fronto_plane(), &seq, &cfg).unwrap();
        let (_, coords) = decode_full(&frames, DEFAULT_MODULATION_THRESHOLD).unwrap();
        let mut checked = 0usize;
        let mut worst: f64 = 0.0;
        for (x, y, ok) in gt.valid.iter_pixels() {
            if ok && coords.mask.get(x, y) {
                worst = worst.max((coords.coord.get(x, y) - gt.coord.get(x, y)).abs());
                checked += 1;
            }
        }
        assert!(checked > 1000);
        assert!(worst < 1e-3, "worst |p - p_truth| = {worst:.2e} px");
    }
}
