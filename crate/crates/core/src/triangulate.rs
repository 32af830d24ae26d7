//! Camera-projector triangulation: solve the two-view projective system for
//! each (camera pixel, projector coordinate) correspondence.
//!
//! The camera pixel pins the 3D point to a ray through the origin (the world
//! frame is the camera frame), and the projector coordinate adds one plane
//! constraint. The per-pixel solve reduces to a ratio of expressions affine
//! in the projector coordinate; [`TriangulationTable`] precomputes the eight
//! coefficients per camera pixel so map-scale triangulation needs no linear
//! solve.

use nalgebra::{Matrix3, Vector3};

use crate::decode::{CoordAxis, ProjectorCoordMap};
use crate::error::{Error, Result};
use crate::geometry::{projection_matrix, undistort_pixel, DeviceKind, StereoRig};
use crate::grid::Grid;

/// Relative determinant threshold below which a configuration is degenerate.
const DEGENERACY_TOL: f64 = 1e-12;

/// How the measured (distorted) projector coordinate is corrected before
/// entering the distortion-free triangulation equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectorCorrection {
    /// Use the coordinate as-is (distortion assumed calibrated out).
    None,
    /// Invert projector distortion along the coded axis using the current
    /// depth estimate; two fixed-point iterations.
    #[default]
    Iterative,
}

/// One triangulated point with its source camera pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    /// Camera-frame position, meters.
    pub position: [f64; 3],
    /// Source camera pixel (u_c, v_c).
    pub pixel: (u32, u32),
    /// Shading intensity carried through from decoding, if any.
    pub intensity: f32,
}

/// Triangulated points in the camera frame, ordered by source pixel
/// (row-major) so output is reproducible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Rasterize depth (camera-frame z) back to a map using the stored
    /// source-pixel provenance; pixels without a point are NaN.
    pub fn depth_map(&self, width: usize, height: usize) -> Grid<f64> {
        let mut map = Grid::new(width, height, f64::NAN);
        for p in &self.points {
            let (u, v) = p.pixel;
            if (u as usize) < width && (v as usize) < height {
                map.set(u as usize, v as usize, p.position[2]);
            }
        }
        map
    }
}

/// Solve one correspondence directly: rows `u*m3 - m1`, `v*m3 - m2` of the
/// camera matrix and `p*n3 - n_axis` of the projector matrix form a 3x3
/// system. `(u, v)` must be undistorted pixel coordinates.
pub fn triangulate_pixel(
    rig: &StereoRig,
    u: f64,
    v: f64,
    p: f64,
    axis: CoordAxis,
) -> Result<Vector3<f64>> {
    let mc = projection_matrix(rig, DeviceKind::Camera);
    let mp = projection_matrix(rig, DeviceKind::Projector);
    let rows = [
        u * mc.row(2) - mc.row(0),
        v * mc.row(2) - mc.row(1),
        match axis {
            CoordAxis::U => p * mp.row(2) - mp.row(0),
            CoordAxis::V => p * mp.row(2) - mp.row(1),
        },
    ];
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for (i, row) in rows.iter().enumerate() {
        a[(i, 0)] = row[0];
        a[(i, 1)] = row[1];
        a[(i, 2)] = row[2];
        b[i] = -row[3];
    }
    let det = a.determinant();
    let scale: f64 = (0..3).map(|i| a.row(i).norm()).product();
    if det.abs() < DEGENERACY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateRay);
    }
    a.lu().solve(&b).ok_or(Error::DegenerateRay)
}

/// Per-camera-pixel coefficients `[ax, bx, ay, by, az, bz, c, d]` such that
/// the triangulated point for projector coordinate `p` is
/// `((ax + bx p)/(c + d p), (ay + by p)/(c + d p), (az + bz p)/(c + d p))`.
///
/// Camera lens distortion is baked in (each pixel's coefficients derive from
/// its undistorted ray). The table is tagged with the rig fingerprint and
/// rejected when evaluated against a different rig.
#[derive(Debug, Clone)]
pub struct TriangulationTable {
    pub width: usize,
    pub height: usize,
    pub axis: CoordAxis,
    pub rig_fingerprint: String,
    coeffs: Vec<[f64; 8]>,
}

impl TriangulationTable {
    /// Evaluate at an integer camera pixel. `None` for a degenerate ray.
    #[inline]
    pub fn evaluate(&self, x: usize, y: usize, p: f64) -> Option<Vector3<f64>> {
        let c = &self.coeffs[y * self.width + x];
        let den = c[6] + c[7] * p;
        if den.abs() < DEGENERACY_TOL * (c[6].abs() + (c[7] * p).abs()).max(f64::MIN_POSITIVE) {
            return None;
        }
        let inv = 1.0 / den;
        Some(Vector3::new(
            (c[0] + c[1] * p) * inv,
            (c[2] + c[3] * p) * inv,
            (c[4] + c[5] * p) * inv,
        ))
    }

    pub fn matches_rig(&self, rig: &StereoRig) -> bool {
        self.rig_fingerprint == rig.fingerprint()
    }
}

/// Precompute the triangulation table for every camera pixel.
///
/// For undistorted ray `r` the point is `X = t r` with
/// `t = (alpha + beta p) / (gamma + delta p)`, where `alpha`, `beta` come
/// from the fourth column of the projector matrix and `gamma`, `delta` are
/// row-ray products; the eight stored coefficients are those expressions
/// multiplied through by the ray components.
pub fn build_table(rig: &StereoRig, axis: CoordAxis) -> Result<TriangulationTable> {
    let (w, h) = (
        rig.camera.intrinsics.width as usize,
        rig.camera.intrinsics.height as usize,
    );
    let mp = projection_matrix(rig, DeviceKind::Projector);
    let n3 = mp.row(2);
    let na = match axis {
        CoordAxis::U => mp.row(0),
        CoordAxis::V => mp.row(1),
    };
    let mut coeffs = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let ray = undistort_pixel(&rig.camera, x as f64, y as f64)?;
            let alpha = na[3];
            let beta = -n3[3];
            let gamma = -(na[0] * ray.x + na[1] * ray.y + na[2]);
            let delta = n3[0] * ray.x + n3[1] * ray.y + n3[2];
            coeffs.push([
                ray.x * alpha,
                ray.x * beta,
                ray.y * alpha,
                ray.y * beta,
                alpha,
                beta,
                gamma,
                delta,
            ]);
        }
    }
    Ok(TriangulationTable {
        width: w,
        height: h,
        axis,
        rig_fingerprint: rig.fingerprint(),
        coeffs,
    })
}

/// Correct a measured (distorted) projector coordinate to its ideal value
/// using a current 3D estimate: take the off-axis coordinate from the
/// estimate's distorted projection, undistort the pair, keep the coded axis.
fn correct_projector_coord(
    rig: &StereoRig,
    point: &Vector3<f64>,
    measured: f64,
    axis: CoordAxis,
) -> Option<f64> {
    let proj = &rig.projector;
    let q = rig.cam_t_proj.transform(point);
    if q.z <= 0.0 {
        return None;
    }
    let (xd, yd) = proj.distortion.distort(q.x / q.z, q.y / q.z);
    let (du, dv) = proj.intrinsics.apply(xd, yd);
    let (u_dist, v_dist) = match axis {
        CoordAxis::U => (measured, dv),
        CoordAxis::V => (du, measured),
    };
    let ideal = undistort_pixel(proj, u_dist, v_dist).ok()?;
    let (iu, iv) = proj.intrinsics.apply(ideal.x, ideal.y);
    Some(match axis {
        CoordAxis::U => iu,
        CoordAxis::V => iv,
    })
}

/// Outcome counters for a map-scale triangulation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DropStats {
    /// Degenerate or non-finite solutions.
    pub degenerate: usize,
    /// Points that landed behind the camera.
    pub behind_camera: usize,
}

impl DropStats {
    pub fn total(&self) -> usize {
        self.degenerate + self.behind_camera
    }
}

/// Triangulate every valid pixel of a projector-coordinate map.
///
/// Camera pixels are undistorted via the table; the projector coordinate is
/// corrected according to `correction`. Per-pixel failures drop the point
/// and are counted, never aborting the map.
pub fn triangulate_map(
    coords: &ProjectorCoordMap,
    rig: &StereoRig,
    table: &TriangulationTable,
    correction: ProjectorCorrection,
    shading: Option<&Grid<f64>>,
) -> Result<(PointCloud, DropStats)> {
    if !table.matches_rig(rig) {
        return Err(Error::Config(format!(
            "triangulation table was built for rig {}, got {}",
            table.rig_fingerprint,
            rig.fingerprint()
        )));
    }
    if table.axis != coords.axis {
        return Err(Error::Config(
            "triangulation table axis does not match the coordinate map".into(),
        ));
    }
    let (w, h) = coords.coord.dims();
    if (table.width, table.height) != (w, h) {
        return Err(Error::DimensionMismatch {
            expected: (table.width, table.height),
            got: (w, h),
        });
    }
    let projector_distorted = !rig.projector.distortion.is_zero();
    let mut points = Vec::new();
    let mut stats = DropStats::default();
    for y in 0..h {
        for x in 0..w {
            if !coords.mask.get(x, y) {
                continue;
            }
            let measured = coords.coord.get(x, y);
            let mut p = measured;
            if matches!(correction, ProjectorCorrection::Iterative) && projector_distorted {
                for _ in 0..2 {
                    match table.evaluate(x, y, p) {
                        Some(est) if est.z > 0.0 => {
                            match correct_projector_coord(rig, &est, measured, coords.axis) {
                                Some(corrected) => p = corrected,
                                None => break,
                            }
                        }
                        _ => break,
                    }
                }
            }
            match table.evaluate(x, y, p) {
                Some(pt) if pt.iter().all(|c| c.is_finite()) => {
                    if pt.z > 0.0 {
                        points.push(CloudPoint {
                            position: [pt.x, pt.y, pt.z],
                            pixel: (x as u32, y as u32),
                            intensity: shading.map_or(0.0, |s| s.get(x, y) as f32),
                        });
                    } else {
                        stats.behind_camera += 1;
                    }
                }
                _ => stats.degenerate += 1,
            }
        }
    }
    Ok((PointCloud { points }, stats))
}
