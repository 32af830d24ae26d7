//! Parametric test scenes with analytic ray intersection (plane, sphere,
//! cone board) and a ray-marched height field.
//!
//! All geometry lives in the fixed world frame, which coincides with the
//! camera frame of the first capture.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ignore intersections closer than this along the ray.
const RAY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vector3<f64>,
    pub radius: f64,
}

/// Finite cone sheet: apex plus a unit axis pointing toward the base, with
/// points at axial distance `0..=height` from the apex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    pub apex: Vector3<f64>,
    pub axis: Vector3<f64>,
    /// Half-angle, radians, in (0, pi/2).
    pub half_angle: f64,
    pub height: f64,
}

/// A base plane with cones mounted on it, tips toward the sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeBoard {
    pub base: Plane,
    pub cones: Vec<Cone>,
}

/// Grid of offsets along the base-plane normal, bilinearly interpolated.
/// `origin` is the grid corner; `u_axis` and `v_axis` are orthonormal
/// in-plane directions with lattice pitch `spacing` meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightField {
    pub origin: Vector3<f64>,
    pub u_axis: Vector3<f64>,
    pub v_axis: Vector3<f64>,
    pub spacing: f64,
    pub nu: usize,
    pub nv: usize,
    /// Row-major `nv` rows of `nu` offsets, meters along the normal.
    pub offsets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Scene {
    Plane(Plane),
    Sphere(Sphere),
    HeightField(HeightField),
    ConeBoard(ConeBoard),
}

impl Plane {
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let denom = dir.dot(&self.normal);
        if denom.abs() < 1e-15 {
            return None;
        }
        let t = (self.point - origin).dot(&self.normal) / denom;
        (t > RAY_EPS).then_some(t)
    }
}

impl Sphere {
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let oc = origin - self.center;
        let a = dir.dot(dir);
        let b = 2.0 * oc.dot(dir);
        let c = oc.dot(&oc) - self.radius * self.radius;
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let t0 = (-b - sq) / (2.0 * a);
        let t1 = (-b + sq) / (2.0 * a);
        if t0 > RAY_EPS {
            Some(t0)
        } else if t1 > RAY_EPS {
            Some(t1)
        } else {
            None
        }
    }
}

impl Cone {
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let w = self.axis;
        let cos2 = self.half_angle.cos().powi(2);
        let co = origin - self.apex;
        let dw = dir.dot(&w);
        let cw = co.dot(&w);
        let a = dw * dw - cos2 * dir.dot(dir);
        let b = 2.0 * (cw * dw - cos2 * co.dot(dir));
        let c = cw * cw - cos2 * co.dot(&co);
        let mut best: Option<f64> = None;
        let mut consider = |t: f64| {
            if t > RAY_EPS {
                let h = cw + t * dw;
                if (0.0..=self.height).contains(&h) && best.is_none_or(|b| t < b) {
                    best = Some(t);
                }
            }
        };
        if a.abs() < 1e-15 {
            if b.abs() > 1e-15 {
                consider(-c / b);
            }
        } else {
            let disc = b * b - 4.0 * a * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                consider((-b - sq) / (2.0 * a));
                consider((-b + sq) / (2.0 * a));
            }
        }
        best
    }
}

impl HeightField {
    pub fn validate(&self) -> Result<()> {
        if self.spacing <= 0.0 {
            return Err(Error::InvalidParam("height-field spacing must be > 0".into()));
        }
        if self.nu < 2 || self.nv < 2 {
            return Err(Error::InvalidParam("height-field grid must be >= 2x2".into()));
        }
        if self.offsets.len() != self.nu * self.nv {
            return Err(Error::InvalidParam(format!(
                "height-field has {} offsets for a {}x{} grid",
                self.offsets.len(),
                self.nu,
                self.nv
            )));
        }
        let ortho = self.u_axis.dot(&self.v_axis).abs();
        if (self.u_axis.norm() - 1.0).abs() > 1e-9
            || (self.v_axis.norm() - 1.0).abs() > 1e-9
            || ortho > 1e-9
        {
            return Err(Error::InvalidParam(
                "height-field axes must be orthonormal".into(),
            ));
        }
        Ok(())
    }

    fn normal(&self) -> Vector3<f64> {
        self.u_axis.cross(&self.v_axis)
    }

    /// Bilinear height at grid coordinates; `None` outside the grid.
    fn height_at(&self, u: f64, v: f64) -> Option<f64> {
        if u < 0.0 || v < 0.0 || u > (self.nu - 1) as f64 || v > (self.nv - 1) as f64 {
            return None;
        }
        let x0 = (u.floor() as usize).min(self.nu - 2);
        let y0 = (v.floor() as usize).min(self.nv - 2);
        let fx = u - x0 as f64;
        let fy = v - y0 as f64;
        let at = |x: usize, y: usize| self.offsets[y * self.nu + x];
        Some(
            (at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx) * (1.0 - fy)
                + (at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx) * fy,
        )
    }

    /// March along the ray for a sign change of (height above surface),
    /// then bisect to 1e-7 m.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let n = self.normal();
        let (hmin, hmax) = self
            .offsets
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        // Entry/exit of the slab bounding the surface along the normal.
        let dn = dir.dot(&n);
        let on = (origin - self.origin).dot(&n);
        let margin = 1e-6 + (hmax - hmin) * 1e-3;
        let (t0, mut t1) = if dn.abs() < 1e-15 {
            (RAY_EPS, f64::INFINITY)
        } else {
            let ta = (hmin - margin - on) / dn;
            let tb = (hmax + margin - on) / dn;
            (ta.min(tb).max(RAY_EPS), ta.max(tb))
        };
        if t1 <= t0 {
            return None;
        }
        // Never march further than the grid diagonal allows.
        let span = self.spacing * ((self.nu + self.nv) as f64) + (hmax - hmin) + 1.0;
        t1 = t1.min(t0 + span / dir.norm() * 4.0);

        // Signed height of the ray point above the surface, along n.
        let above = |t: f64| -> Option<f64> {
            let q = origin + dir * t;
            let rel = q - self.origin;
            let u = rel.dot(&self.u_axis) / self.spacing;
            let v = rel.dot(&self.v_axis) / self.spacing;
            let h = self.height_at(u, v)?;
            Some(rel.dot(&n) - h)
        };

        let step = (0.5 * self.spacing / dir.norm()).min(t1 - t0);
        let n_steps = ((t1 - t0) / step).ceil() as usize;
        let mut t_prev = t0;
        let mut g_prev = above(t_prev);
        for i in 1..=n_steps {
            let t = (t0 + i as f64 * step).min(t1);
            let g = above(t);
            if let (Some(gp), Some(gc)) = (g_prev, g) {
                // Any sign change is a surface crossing (the entry-side sign
                // depends on the normal orientation); bisect it down to
                // 1e-7 m of ray travel.
                if (gp > 0.0) != (gc > 0.0) {
                    let entry_positive = gp > 0.0;
                    let (mut lo, mut hi) = (t_prev, t);
                    while (hi - lo) * dir.norm() > 1e-7 {
                        let mid = 0.5 * (lo + hi);
                        match above(mid) {
                            Some(g) if (g > 0.0) == entry_positive => lo = mid,
                            _ => hi = mid,
                        }
                    }
                    return Some(0.5 * (lo + hi));
                }
            }
            t_prev = t;
            g_prev = g;
        }
        None
    }
}

impl Scene {
    /// Nearest intersection parameter `t > 0` of `origin + t * dir`, if any.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match self {
            Scene::Plane(p) => p.intersect(origin, dir),
            Scene::Sphere(s) => s.intersect(origin, dir),
            Scene::HeightField(h) => h.intersect(origin, dir),
            Scene::ConeBoard(board) => {
                let mut best = board.base.intersect(origin, dir);
                for cone in &board.cones {
                    if let Some(t) = cone.intersect(origin, dir) {
                        if best.is_none_or(|b| t < b) {
                            best = Some(t);
                        }
                    }
                }
                best
            }
        }
    }

    /// The scene rigidly translated by `offset`.
    pub fn translated(&self, offset: &Vector3<f64>) -> Scene {
        match self {
            Scene::Plane(p) => Scene::Plane(Plane {
                point: p.point + offset,
                normal: p.normal,
            }),
            Scene::Sphere(s) => Scene::Sphere(Sphere {
                center: s.center + offset,
                radius: s.radius,
            }),
            Scene::HeightField(h) => Scene::HeightField(HeightField {
                origin: h.origin + offset,
                ..h.clone()
            }),
            Scene::ConeBoard(b) => Scene::ConeBoard(ConeBoard {
                base: Plane {
                    point: b.base.point + offset,
                    normal: b.base.normal,
                },
                cones: b
                    .cones
                    .iter()
                    .map(|c| Cone {
                        apex: c.apex + offset,
                        ..*c
                    })
                    .collect(),
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Scene::Plane(p) => {
                if p.normal.norm() < 1e-12 {
                    return Err(Error::InvalidParam("plane normal is zero".into()));
                }
            }
            Scene::Sphere(s) => {
                if s.radius <= 0.0 {
                    return Err(Error::InvalidParam("sphere radius must be > 0".into()));
                }
            }
            Scene::HeightField(h) => h.validate()?,
            Scene::ConeBoard(b) => {
                for c in &b.cones {
                    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&c.half_angle)
                        || c.half_angle == 0.0
                    {
                        return Err(Error::InvalidParam(
                            "cone half-angle must be in (0, pi/2)".into(),
                        ));
                    }
                    if (c.axis.norm() - 1.0).abs() > 1e-9 {
                        return Err(Error::InvalidParam("cone axis must be unit".into()));
                    }
                    if c.height <= 0.0 {
                        return Err(Error::InvalidParam("cone height must be > 0".into()));
                    }
                }
            }
        }
        Ok(())
    }
}
