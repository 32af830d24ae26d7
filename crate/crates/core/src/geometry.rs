//! Pinhole camera/projector models, Brown 5-coefficient lens distortion,
//! extrinsics, and the projection/undistortion primitives shared by the
//! renderer and the triangulator.
//!
//! The world frame coincides with the camera frame: the camera extrinsics
//! are the identity and the projector pose is stored relative to the camera.

use nalgebra::{Matrix2, Matrix3, Matrix3x4, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidParam(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(Error::InvalidParam(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} sensor"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// The 3x3 intrinsic matrix `[[fx,0,cx],[0,fy,cy],[0,0,1]]`.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Normalized image coordinates -> pixel.
    #[inline]
    pub fn apply(&self, xn: f64, yn: f64) -> (f64, f64) {
        (self.fx * xn + self.cx, self.fy * yn + self.cy)
    }

    /// Pixel -> normalized image coordinates (no distortion).
    #[inline]
    pub fn invert(&self, u: f64, v: f64) -> (f64, f64) {
        ((u - self.cx) / self.fx, (v - self.cy) / self.fy)
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

/// Brown radial/tangential distortion. Calibration files store the
/// coefficients in the order `[k1, k2, p1, p2, k3]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Distortion {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub p1: f64,
    pub p2: f64,
}

impl Distortion {
    pub const ZERO: Distortion = Distortion {
        k1: 0.0,
        k2: 0.0,
        k3: 0.0,
        p1: 0.0,
        p2: 0.0,
    };

    pub fn new(k1: f64, k2: f64, p1: f64, p2: f64, k3: f64) -> Result<Self> {
        let d = Self { k1, k2, k3, p1, p2 };
        if ![k1, k2, k3, p1, p2].iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParam(
                "distortion coefficients must be finite".into(),
            ));
        }
        Ok(d)
    }

    /// Coefficients in calibration-file order.
    pub fn coefficients(&self) -> [f64; 5] {
        [self.k1, self.k2, self.p1, self.p2, self.k3]
    }

    pub fn is_zero(&self) -> bool {
        self == &Self::ZERO
    }

    /// Apply the forward distortion map to normalized coordinates.
    #[inline]
    pub fn distort(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let xd = x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x);
        let yd = y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y;
        (xd, yd)
    }

    /// Jacobian of the forward map at `(x, y)`.
    pub fn jacobian(&self, x: f64, y: f64) -> Matrix2<f64> {
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        // d(radial)/d(r2)
        let dr = self.k1 + r2 * (2.0 * self.k2 + 3.0 * self.k3 * r2);
        let dxdx = radial + x * dr * 2.0 * x + 2.0 * self.p1 * y + 6.0 * self.p2 * x;
        let dxdy = x * dr * 2.0 * y + 2.0 * self.p1 * x + 2.0 * self.p2 * y;
        let dydx = y * dr * 2.0 * x + 2.0 * self.p1 * x + 2.0 * self.p2 * y;
        let dydy = radial + y * dr * 2.0 * y + 6.0 * self.p1 * y + 2.0 * self.p2 * x;
        Matrix2::new(dxdx, dxdy, dydx, dydy)
    }
}

/// Rigid transform: `q = R p + t`, translation in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrinsics {
    r: Matrix3<f64>,
    t: Vector3<f64>,
}

const ROTATION_TOL: f64 = 1e-9;

impl Extrinsics {
    pub fn new(r: Matrix3<f64>, t: Vector3<f64>) -> Result<Self> {
        let rtr = r.transpose() * r;
        let ortho_err = (rtr - Matrix3::identity()).abs().max();
        if ortho_err > ROTATION_TOL {
            return Err(Error::InvalidParam(format!(
                "rotation is not orthonormal (max |R'R - I| = {ortho_err:.3e})"
            )));
        }
        let det = r.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidParam(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(Self { r, t })
    }

    pub fn identity() -> Self {
        Self {
            r: Matrix3::identity(),
            t: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.r
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.t
    }

    #[inline]
    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.r * p + self.t
    }
}

/// One imaging device: intrinsics plus lens distortion.
///
/// Construction verifies numerically that the forward distortion map is
/// injective over the modeled sensor footprint (positive Jacobian
/// determinant on a grid spanning the normalized image of the sensor).
#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub intrinsics: Intrinsics,
    pub distortion: Distortion,
}

impl Device {
    pub fn new(intrinsics: Intrinsics, distortion: Distortion) -> Result<Self> {
        let d = Self {
            intrinsics,
            distortion,
        };
        d.check_injective()?;
        Ok(d)
    }

    fn check_injective(&self) -> Result<()> {
        if self.distortion.is_zero() {
            return Ok(());
        }
        let i = &self.intrinsics;
        let (x0, y0) = i.invert(0.0, 0.0);
        let (x1, y1) = i.invert((i.width - 1) as f64, (i.height - 1) as f64);
        const N: usize = 17;
        for gy in 0..N {
            for gx in 0..N {
                let x = x0 + (x1 - x0) * gx as f64 / (N - 1) as f64;
                let y = y0 + (y1 - y0) * gy as f64 / (N - 1) as f64;
                let det = self.distortion.jacobian(x, y).determinant();
                if det <= 0.0 {
                    return Err(Error::InvalidParam(format!(
                        "distortion map is not injective over the sensor \
                         footprint (Jacobian det = {det:.3e} at ({x:.3}, {y:.3}))"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Calibrated camera-projector pair. `cam_t_proj` is the projector pose such
/// that `M_p = K_p [R|t]` maps camera-frame points to projector pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoRig {
    pub camera: Device,
    pub projector: Device,
    pub cam_t_proj: Extrinsics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceKind {
    Camera,
    Projector,
}

impl StereoRig {
    pub fn new(camera: Device, projector: Device, cam_t_proj: Extrinsics) -> Result<Self> {
        if cam_t_proj.translation().norm() <= 0.0 {
            return Err(Error::InvalidParam(
                "camera-projector baseline must be nonzero".into(),
            ));
        }
        Ok(Self {
            camera,
            projector,
            cam_t_proj,
        })
    }

    pub fn device(&self, kind: DeviceKind) -> &Device {
        match kind {
            DeviceKind::Camera => &self.camera,
            DeviceKind::Projector => &self.projector,
        }
    }

    pub fn baseline(&self) -> f64 {
        self.cam_t_proj.translation().norm()
    }

    /// Stable hex digest of all rig parameters; used to tag caches and
    /// point-cloud headers so stale precomputed tables are rejected.
    pub fn fingerprint(&self) -> String {
        let mut h = Fnv1a::new();
        for dev in [&self.camera, &self.projector] {
            let i = &dev.intrinsics;
            for v in [i.fx, i.fy, i.cx, i.cy] {
                h.write_f64(v);
            }
            h.write_u64(i.width as u64);
            h.write_u64(i.height as u64);
            for v in dev.distortion.coefficients() {
                h.write_f64(v);
            }
        }
        for v in self.cam_t_proj.rotation().iter() {
            h.write_f64(*v);
        }
        for v in self.cam_t_proj.translation().iter() {
            h.write_f64(*v);
        }
        format!("{:016x}", h.finish())
    }
}

/// FNV-1a 64-bit, enough for cache-invalidation fingerprints.
struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf29ce484222325)
    }
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }
    fn write_f64(&mut self, v: f64) {
        self.write(&v.to_le_bytes());
    }
    fn write_u64(&mut self, v: u64) {
        self.write(&v.to_le_bytes());
    }
    fn finish(&self) -> u64 {
        self.0
    }
}

/// Project a 3D point (meters, world = camera frame) to distorted pixel
/// coordinates of the given device: rigid transform, perspective divide,
/// distortion, then intrinsics.
pub fn project(
    device: &Device,
    extrinsics: &Extrinsics,
    point: &Vector3<f64>,
) -> Result<Vector2<f64>> {
    let q = extrinsics.transform(point);
    if q.z <= 0.0 {
        return Err(Error::PointBehindDevice { z: q.z });
    }
    let (xd, yd) = device.distortion.distort(q.x / q.z, q.y / q.z);
    let (u, v) = device.intrinsics.apply(xd, yd);
    Ok(Vector2::new(u, v))
}

const UNDISTORT_TOL: f64 = 1e-10;
const UNDISTORT_MAX_ITERS: usize = 20;

/// Invert intrinsics and distortion: pixel -> normalized ray `(x, y, 1)`.
///
/// Damped Newton on the 2D distortion residual, initialized at the distorted
/// normalized point; converges to 1e-10 in normalized coordinates.
/// Non-convergence after 20 iterations signals an out-of-model pixel.
pub fn undistort_pixel(device: &Device, u: f64, v: f64) -> Result<Vector3<f64>> {
    let (xd, yd) = device.intrinsics.invert(u, v);
    if device.distortion.is_zero() {
        return Ok(Vector3::new(xd, yd, 1.0));
    }
    let target = Vector2::new(xd, yd);
    let mut p = target;
    let mut res = residual(&device.distortion, &p, &target);
    for _ in 0..UNDISTORT_MAX_ITERS {
        if res.norm() < UNDISTORT_TOL {
            return Ok(Vector3::new(p.x, p.y, 1.0));
        }
        let j = device.distortion.jacobian(p.x, p.y);
        let step = j
            .lu()
            .solve(&res)
            .ok_or(Error::UndistortDiverged { u, v })?;
        // Backtracking damping: halve the step until the residual shrinks.
        let mut lambda = 1.0;
        loop {
            let cand = p - step * lambda;
            let cand_res = residual(&device.distortion, &cand, &target);
            if cand_res.norm() < res.norm() || lambda < 1.0 / 64.0 {
                p = cand;
                res = cand_res;
                break;
            }
            lambda *= 0.5;
        }
    }
    if res.norm() < UNDISTORT_TOL {
        Ok(Vector3::new(p.x, p.y, 1.0))
    } else {
        Err(Error::UndistortDiverged { u, v })
    }
}

fn residual(dist: &Distortion, p: &Vector2<f64>, target: &Vector2<f64>) -> Vector2<f64> {
    let (xd, yd) = dist.distort(p.x, p.y);
    Vector2::new(xd - target.x, yd - target.y)
}

/// The 3x4 distortion-free projection matrix of a rig device:
/// `M_c = K_c [I|0]` for the camera, `M_p = K_p [R|t]` for the projector.
pub fn projection_matrix(rig: &StereoRig, kind: DeviceKind) -> Matrix3x4<f64> {
    let (k, r, t) = match kind {
        DeviceKind::Camera => (
            rig.camera.intrinsics.matrix(),
            Matrix3::identity(),
            Vector3::zeros(),
        ),
        DeviceKind::Projector => (
            rig.projector.intrinsics.matrix(),
            *rig.cam_t_proj.rotation(),
            *rig.cam_t_proj.translation(),
        ),
    };
    let mut m = Matrix3x4::zeros();
    let rt = k * r;
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
    m.column_mut(3).copy_from(&(k * t));
    m
}

// --- calibration file -------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct DeviceFile {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    /// [k1, k2, p1, p2, k3]
    dist: [f64; 5],
}

#[derive(Debug, Serialize, Deserialize)]
struct ExtrinsicsFile {
    /// Row-major 3x3 rotation.
    #[serde(rename = "R")]
    r: [f64; 9],
    /// Translation, meters.
    t: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct RigFile {
    camera: DeviceFile,
    projector: DeviceFile,
    extrinsics: ExtrinsicsFile,
}

impl DeviceFile {
    fn to_device(&self) -> Result<Device> {
        let [k1, k2, p1, p2, k3] = self.dist;
        Device::new(
            Intrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)?,
            Distortion::new(k1, k2, p1, p2, k3)?,
        )
    }

    fn from_device(d: &Device) -> Self {
        let i = &d.intrinsics;
        Self {
            fx: i.fx,
            fy: i.fy,
            cx: i.cx,
            cy: i.cy,
            width: i.width,
            height: i.height,
            dist: d.distortion.coefficients(),
        }
    }
}

impl StereoRig {
    pub fn from_json_str(json: &str) -> Result<Self> {
        let file: RigFile = serde_json::from_str(json)?;
        let r = Matrix3::from_row_slice(&file.extrinsics.r);
        let t = Vector3::from_row_slice(&file.extrinsics.t);
        StereoRig::new(
            file.camera.to_device()?,
            file.projector.to_device()?,
            Extrinsics::new(r, t)?,
        )
    }

    pub fn to_json_string(&self) -> String {
        let mut r = [0.0; 9];
        for row in 0..3 {
            for col in 0..3 {
                r[row * 3 + col] = self.cam_t_proj.rotation()[(row, col)];
            }
        }
        let t = self.cam_t_proj.translation();
        let file = RigFile {
            camera: DeviceFile::from_device(&self.camera),
            projector: DeviceFile::from_device(&self.projector),
            extrinsics: ExtrinsicsFile {
                r,
                t: [t.x, t.y, t.z],
            },
        };
        serde_json::to_string_pretty(&file).expect("rig serialization cannot fail")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}
