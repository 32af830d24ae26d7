//! Reconstruction quality metrics: per-pixel depth precision over repeated
//! scans, plane-fit roughness (empirical standard deviation of orthogonal
//! distances), cone-distance accuracy on a known board, and cross-section
//! ripple profiles.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::triangulate::PointCloud;

/// Per-pixel depth standard deviation over repeated scans of a static scene.
#[derive(Debug, Clone)]
pub struct PrecisionReport {
    /// Sample std-dev (n-1 denominator) per pixel, millimeters; NaN where
    /// fewer than all scans were valid.
    pub std_map: Grid<f64>,
    pub mean_mm: f64,
    pub max_mm: f64,
    pub scan_count: usize,
    pub valid_pixels: usize,
}

/// Depth std over the pixels valid in every scan.
///
/// Scans are depth maps in meters with NaN marking invalid pixels (see
/// [`PointCloud::depth_map`]).
pub fn depth_std(scans: &[Grid<f64>]) -> Result<PrecisionReport> {
    if scans.len() < 2 {
        return Err(Error::InvalidParam(format!(
            "precision needs >= 2 scans, got {}",
            scans.len()
        )));
    }
    let dims = scans[0].dims();
    for s in &scans[1..] {
        if s.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                got: s.dims(),
            });
        }
    }
    let (w, h) = dims;
    let n = scans.len() as f64;
    let mut std_map = Grid::new(w, h, f64::NAN);
    let mut sum = 0.0;
    let mut max = 0.0f64;
    let mut count = 0usize;
    for idx in 0..w * h {
        let values: Vec<f64> = scans.iter().map(|s| s.as_slice()[idx]).collect();
        if values.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std_mm = var.sqrt() * 1000.0;
        std_map.as_mut_slice()[idx] = std_mm;
        sum += std_mm;
        max = max.max(std_mm);
        count += 1;
    }
    if count == 0 {
        return Err(Error::Data("no pixel is valid in every scan".into()));
    }
    Ok(PrecisionReport {
        std_map,
        mean_mm: sum / count as f64,
        max_mm: max,
        scan_count: scans.len(),
        valid_pixels: count,
    })
}

/// Axis-aligned pixel-space patch (half-open bounds).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn contains(&self, u: u32, v: u32) -> bool {
        u >= self.x0 && u < self.x1 && v >= self.y0 && v < self.y1
    }
}

/// Total-least-squares plane `normal . x = offset` with unit normal.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedPlane {
    pub normal: Vector3<f64>,
    pub offset: f64,
    pub centroid: Vector3<f64>,
}

#[derive(Debug, Clone)]
pub struct RoughnessReport {
    /// Empirical standard deviation of signed orthogonal distances, mm.
    pub esd_mm: f64,
    pub plane: FittedPlane,
    pub patch: PixelRect,
    pub point_count: usize,
    /// Metric extent of the patch in the plane, m^2 (in-plane bounding box).
    pub area_m2: f64,
}

/// Fit a total-least-squares plane to the points whose source pixels fall in
/// `patch`, and report the ESD of their orthogonal distances.
pub fn plane_esd(cloud: &PointCloud, patch: PixelRect) -> Result<RoughnessReport> {
    let pts: Vec<Vector3<f64>> = cloud
        .points
        .iter()
        .filter(|p| patch.contains(p.pixel.0, p.pixel.1))
        .map(|p| Vector3::from(p.position))
        .collect();
    let plane = fit_plane(&pts)?;
    let dists: Vec<f64> = pts
        .iter()
        .map(|p| plane.normal.dot(p) - plane.offset)
        .collect();
    let n = dists.len() as f64;
    let mean = dists.iter().sum::<f64>() / n;
    let var = dists.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);

    // Metric patch area from the in-plane bounding box.
    let (eu, ev) = plane_basis(&plane.normal);
    let (mut u0, mut u1, mut v0, mut v1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in &pts {
        let rel = p - plane.centroid;
        let (u, v) = (rel.dot(&eu), rel.dot(&ev));
        u0 = u0.min(u);
        u1 = u1.max(u);
        v0 = v0.min(v);
        v1 = v1.max(v);
    }
    Ok(RoughnessReport {
        esd_mm: var.sqrt() * 1000.0,
        plane,
        patch,
        point_count: pts.len(),
        area_m2: (u1 - u0) * (v1 - v0),
    })
}

/// Smallest-eigenvector TLS plane fit.
pub fn fit_plane(points: &[Vector3<f64>]) -> Result<FittedPlane> {
    if points.len() < 3 {
        return Err(Error::Data(format!(
            "plane fit needs >= 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let (mut min_i, mut min_v) = (0, f64::MAX);
    for i in 0..3 {
        if eig.eigenvalues[i] < min_v {
            min_v = eig.eigenvalues[i];
            min_i = i;
        }
    }
    // Collinear points leave two (near-)zero eigenvalues.
    let mut sorted = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
    sorted.sort_by(f64::total_cmp);
    if sorted[1] <= 1e-18 * sorted[2].max(1e-30) {
        return Err(Error::Data("degenerate (collinear) patch".into()));
    }
    let normal = eig.eigenvectors.column(min_i).into_owned().normalize();
    Ok(FittedPlane {
        normal,
        offset: normal.dot(&centroid),
        centroid,
    })
}

fn plane_basis(normal: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if normal.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let eu = normal.cross(&helper).normalize();
    let ev = normal.cross(&eu);
    (eu, ev)
}

/// Initial guess for one cone: approximate apex plus the board-known axis,
/// half-angle and height used for point selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeSeed {
    pub apex: Vector3<f64>,
    pub axis: Vector3<f64>,
    pub half_angle: f64,
    pub height: f64,
}

#[derive(Debug, Clone)]
pub struct FittedCone {
    pub apex: Vector3<f64>,
    pub axis: Vector3<f64>,
    pub half_angle: f64,
    pub rms_m: f64,
    pub point_count: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct ConeFitResult {
    pub cones: Vec<FittedCone>,
    /// Apex-to-apex distances from cone 0 to every other cone, mm.
    pub distances_to_first_mm: Vec<f64>,
}

/// Signed orthogonal distance of a point to the (infinite) cone surface.
fn cone_distance(p: &Vector3<f64>, apex: &Vector3<f64>, axis: &Vector3<f64>, half_angle: f64) -> f64 {
    let v = p - apex;
    let h = v.dot(axis);
    let rho = (v - axis * h).norm();
    rho * half_angle.cos() - h * half_angle.sin()
}

const CONE_MIN_POINTS: usize = 100;
const CONE_STEP_TOL: f64 = 1e-10;
const CONE_MAX_ITERS: usize = 100;

/// Nonlinear least-squares cone fit (apex, axis, half-angle) per seed over
/// points selected by the seed geometry, Levenberg-Marquardt damped,
/// converged when the parameter step drops below 1e-10 m.
pub fn fit_cones(cloud: &PointCloud, seeds: &[ConeSeed]) -> Result<ConeFitResult> {
    let mut cones = Vec::with_capacity(seeds.len());
    for (i, seed) in seeds.iter().enumerate() {
        let mut pts: Vec<Vector3<f64>> = cloud
            .points
            .iter()
            .map(|p| Vector3::from(p.position))
            .filter(|p| {
                let v = p - seed.apex;
                let h = v.dot(&seed.axis);
                // Interior band of the sheet. The upper cap stays clear of
                // the mounting-plane ring around the base rim.
                if h < 0.02 * seed.height || h > 0.90 * seed.height {
                    return false;
                }
                cone_distance(p, &seed.apex, &seed.axis, seed.half_angle).abs()
                    < 0.15 * seed.height
            })
            .collect();
        if pts.len() < CONE_MIN_POINTS {
            return Err(Error::Data(format!(
                "cone seed {i}: only {} points near the seed surface (need {CONE_MIN_POINTS})",
                pts.len()
            )));
        }
        let mut fit = fit_single_cone(&pts, seed)?;
        // Trim outliers against the fitted surface and refit.
        for _ in 0..2 {
            let threshold = (4.0 * fit.rms_m).max(1e-9);
            let kept: Vec<Vector3<f64>> = pts
                .iter()
                .copied()
                .filter(|p| {
                    cone_distance(p, &fit.apex, &fit.axis, fit.half_angle).abs() <= threshold
                })
                .collect();
            if kept.len() == pts.len() || kept.len() < CONE_MIN_POINTS {
                break;
            }
            pts = kept;
            fit = fit_single_cone(&pts, seed)?;
        }
        cones.push(fit);
    }
    let distances = cones
        .iter()
        .skip(1)
        .map(|c| (c.apex - cones[0].apex).norm() * 1000.0)
        .collect();
    Ok(ConeFitResult {
        cones,
        distances_to_first_mm: distances,
    })
}

fn fit_single_cone(pts: &[Vector3<f64>], seed: &ConeSeed) -> Result<FittedCone> {
    // Parameters: apex (3), axis tangent perturbation (2), half-angle (1).
    let mut apex = seed.apex;
    let mut axis = seed.axis.normalize();
    let mut alpha = seed.half_angle;

    let residuals = |apex: &Vector3<f64>, axis: &Vector3<f64>, alpha: f64| -> Vec<f64> {
        pts.iter()
            .map(|p| cone_distance(p, apex, axis, alpha))
            .collect()
    };
    let sq_sum = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();

    let mut lambda = 1e-4;
    let mut converged = false;
    let mut res = residuals(&apex, &axis, alpha);
    let mut cost = sq_sum(&res);

    for _ in 0..CONE_MAX_ITERS {
        let (eu, ev) = plane_basis(&axis);
        // Forward-difference Jacobian over the 6 parameters.
        let h_pos = 1e-7;
        let h_ang = 1e-7;
        let mut jac = vec![[0.0; 6]; pts.len()];
        for k in 0..6 {
            let (da, dax, dal) = match k {
                0 => (Vector3::new(h_pos, 0.0, 0.0), Vector3::zeros(), 0.0),
                1 => (Vector3::new(0.0, h_pos, 0.0), Vector3::zeros(), 0.0),
                2 => (Vector3::new(0.0, 0.0, h_pos), Vector3::zeros(), 0.0),
                3 => (Vector3::zeros(), eu * h_ang, 0.0),
                4 => (Vector3::zeros(), ev * h_ang, 0.0),
                _ => (Vector3::zeros(), Vector3::zeros(), h_ang),
            };
            let pert = residuals(
                &(apex + da),
                &(axis + dax).normalize(),
                alpha + dal,
            );
            let h = if k < 3 { h_pos } else { h_ang };
            for (j, (rp, r0)) in pert.iter().zip(&res).enumerate() {
                jac[j][k] = (rp - r0) / h;
            }
        }
        // Normal equations with LM damping.
        let mut jtj = [[0.0f64; 6]; 6];
        let mut jtr = [0.0f64; 6];
        for j in 0..pts.len() {
            for a in 0..6 {
                jtr[a] += jac[j][a] * res[j];
                for b in 0..6 {
                    jtj[a][b] += jac[j][a] * jac[j][b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..8 {
            let mut m = nalgebra::Matrix6::<f64>::zeros();
            let mut rhs = nalgebra::Vector6::<f64>::zeros();
            for a in 0..6 {
                rhs[a] = -jtr[a];
                for b in 0..6 {
                    m[(a, b)] = jtj[a][b];
                }
                m[(a, a)] += lambda * jtj[a][a].max(1e-12);
            }
            let Some(step) = m.lu().solve(&rhs) else {
                lambda *= 10.0;
                continue;
            };
            let new_apex = apex + Vector3::new(step[0], step[1], step[2]);
            let new_axis = (axis + eu * step[3] + ev * step[4]).normalize();
            let new_alpha = (alpha + step[5]).clamp(1e-3, std::f64::consts::FRAC_PI_2 - 1e-3);
            let new_res = residuals(&new_apex, &new_axis, new_alpha);
            let new_cost = sq_sum(&new_res);
            if new_cost < cost {
                apex = new_apex;
                axis = new_axis;
                alpha = new_alpha;
                res = new_res;
                cost = new_cost;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if step.norm() < CONE_STEP_TOL {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !improved {
            // Stalled: accept only if the fit is already essentially exact.
            converged = cost < 1e-16 * pts.len() as f64;
            break;
        }
    }

    if !converged && (cost / pts.len() as f64).sqrt() > 1e-6 {
        return Err(Error::NonConvergence(format!(
            "cone fit stalled at rms {:.3e} m",
            (cost / pts.len() as f64).sqrt()
        )));
    }
    Ok(FittedCone {
        apex,
        axis,
        half_angle: alpha,
        rms_m: (cost / pts.len() as f64).sqrt(),
        point_count: pts.len(),
        converged: true,
    })
}

/// Distance statistics across repeated scans against reference distances.
#[derive(Debug, Clone)]
pub struct ConeReport {
    /// Per-pair RMSE vs the reference, mm (pair j = cone 0 -> cone j+1).
    pub rmse_mm: Vec<f64>,
    /// Per-pair std-dev of the measured distances over scans, mm.
    pub std_mm: Vec<f64>,
    pub scan_count: usize,
}

pub fn cone_report(scans: &[ConeFitResult], reference_mm: &[f64]) -> Result<ConeReport> {
    if scans.is_empty() {
        return Err(Error::Data("no cone-fit scans provided".into()));
    }
    let pairs = reference_mm.len();
    for s in scans {
        if s.distances_to_first_mm.len() != pairs {
            return Err(Error::Data(format!(
                "scan reports {} distances, reference has {pairs}",
                s.distances_to_first_mm.len()
            )));
        }
    }
    let n = scans.len() as f64;
    let mut rmse = Vec::with_capacity(pairs);
    let mut std = Vec::with_capacity(pairs);
    for j in 0..pairs {
        let dists: Vec<f64> = scans.iter().map(|s| s.distances_to_first_mm[j]).collect();
        let mse = dists
            .iter()
            .map(|d| (d - reference_mm[j]).powi(2))
            .sum::<f64>()
            / n;
        rmse.push(mse.sqrt());
        let mean = dists.iter().sum::<f64>() / n;
        let var = if scans.len() > 1 {
            dists.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        std.push(var.sqrt());
    }
    Ok(ConeReport {
        rmse_mm: rmse,
        std_mm: std,
        scan_count: scans.len(),
    })
}

/// Depth profile along a line segment in pixel space.
#[derive(Debug, Clone)]
pub struct CrossSection {
    /// Sampled depths, millimeters; NaN over invalid pixels.
    pub samples_mm: Vec<f64>,
    /// max - min of the linearly detrended finite samples, mm.
    pub ripple_mm: f64,
}

/// Sample `n` points along the segment (bilinear off-axis), detrend linearly
/// and report the residual ripple amplitude.
pub fn cross_section(
    depth: &Grid<f64>,
    from: (f64, f64),
    to: (f64, f64),
    n: usize,
) -> Result<CrossSection> {
    if n < 2 {
        return Err(Error::InvalidParam("cross-section needs >= 2 samples".into()));
    }
    let (w, h) = depth.dims();
    for (x, y) in [from, to] {
        if x < 0.0 || y < 0.0 || x > (w - 1) as f64 || y > (h - 1) as f64 {
            return Err(Error::InvalidParam(format!(
                "cross-section endpoint ({x}, {y}) outside {w}x{h} map"
            )));
        }
    }
    let samples: Vec<f64> = (0..n)
        .map(|i| {
            let s = i as f64 / (n - 1) as f64;
            let x = from.0 + (to.0 - from.0) * s;
            let y = from.1 + (to.1 - from.1) * s;
            match depth.sample_bilinear(x, y) {
                Some(v) if v.is_finite() => v * 1000.0,
                _ => f64::NAN,
            }
        })
        .collect();

    // Least-squares line over the finite samples.
    let finite: Vec<(f64, f64)> = samples
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .map(|(i, &v)| (i as f64, v))
        .collect();
    let ripple = if finite.len() >= 2 {
        let n_f = finite.len() as f64;
        let sx = finite.iter().map(|(x, _)| x).sum::<f64>();
        let sy = finite.iter().map(|(_, y)| y).sum::<f64>();
        let sxx = finite.iter().map(|(x, _)| x * x).sum::<f64>();
        let sxy = finite.iter().map(|(x, y)| x * y).sum::<f64>();
        let denom = n_f * sxx - sx * sx;
        let (a, b) = if denom.abs() < 1e-12 {
            (0.0, sy / n_f)
        } else {
            let a = (n_f * sxy - sx * sy) / denom;
            (a, (sy - a * sx) / n_f)
        };
        let rs: Vec<f64> = finite.iter().map(|(x, y)| y - (a * x + b)).collect();
        rs.iter().cloned().fold(f64::MIN, f64::max) - rs.iter().cloned().fold(f64::MAX, f64::min)
    } else {
        0.0
    };
    Ok(CrossSection {
        samples_mm: samples,
        ripple_mm: ripple,
    })
}
