//! Phase-correlation image registration and constrained linear-motion
//! compensation: every image of a frame set is registered against a chosen
//! reference image and resampled into its frame before decoding.
//!
//! Registration computes the normalised cross-power spectrum
//! `C = (F o M*) / |F o M*|` of the two DFTs and locates the peak of its
//! inverse transform; a circular translation of `(dx, dy)` puts the peak at
//! `(-dx mod w, -dy mod h)`. The motion model is translation-only.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::decode::FrameSet;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Restricts the estimated shift to one image axis (the rig moves along a
/// single direction); the other component is reported as exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AxisConstraint {
    #[default]
    None,
    /// Motion along image x only; dy is forced to zero.
    XOnly,
    /// Motion along image y only; dx is forced to zero.
    YOnly,
}

/// Sub-pixel peak refinement method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SubpixelMethod {
    /// Integer peak only.
    None,
    /// 3-point parabolic fit per axis.
    Parabolic,
    /// Ratio fit of the periodic-sinc correlation kernel per axis
    /// (exact on ideal circular shifts, unbiased where the parabola is not).
    #[default]
    KernelRatio,
}

#[derive(Debug, Clone, Copy)]
pub struct RegistrationConfig {
    /// Apply a separable Hann window before the forward transforms. On by
    /// default to suppress edge-discontinuity leakage under real (non-
    /// circular) motion; turn off for exact circular-shift tests.
    pub window: bool,
    pub subpixel: SubpixelMethod,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            window: true,
            subpixel: SubpixelMethod::KernelRatio,
        }
    }
}

/// Estimated translation of a moving image relative to a fixed one, with the
/// correlation peak height (1.0 for identical images).
#[derive(Debug, Clone, Copy)]
pub struct ShiftEstimate {
    pub dx: f64,
    pub dy: f64,
    pub peak_value: f64,
    pub constraint: AxisConstraint,
}

impl ShiftEstimate {
    pub fn zero(constraint: AxisConstraint) -> Self {
        Self {
            dx: 0.0,
            dy: 0.0,
            peak_value: 1.0,
            constraint,
        }
    }
}

/// Fraction of non-negligible bins required in the cross-power spectrum.
const SPECTRUM_NEAR_ZERO_LIMIT: f64 = 0.5;

/// Estimate the translation between `fixed` and `moving` with the default
/// configuration (Hann window on, kernel-ratio sub-pixel refinement).
pub fn phase_correlate(
    fixed: &Grid<f64>,
    moving: &Grid<f64>,
    constraint: AxisConstraint,
) -> Result<ShiftEstimate> {
    phase_correlate_with(fixed, moving, constraint, &RegistrationConfig::default())
}

pub fn phase_correlate_with(
    fixed: &Grid<f64>,
    moving: &Grid<f64>,
    constraint: AxisConstraint,
    cfg: &RegistrationConfig,
) -> Result<ShiftEstimate> {
    if !fixed.same_dims(moving) {
        return Err(Error::DimensionMismatch {
            expected: fixed.dims(),
            got: moving.dims(),
        });
    }
    let (w, h) = fixed.dims();
    if w < 4 || h < 4 {
        return Err(Error::InvalidParam(
            "images too small for phase correlation".into(),
        ));
    }

    let fft = Fft2d::new(w, h);
    let fa = fft.forward(fixed, cfg.window);
    let fb = fft.forward(moving, cfg.window);

    // Normalised cross-power spectrum with a guard against near-zero bins:
    // bins below 1e-12 * max are zeroed instead of divided.
    let mut cross: Vec<Complex<f64>> = fa
        .iter()
        .zip(&fb)
        .map(|(a, b)| a * b.conj())
        .collect();
    let max_norm = cross.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if max_norm <= 0.0 {
        return Err(Error::DegenerateSpectrum {
            near_zero_fraction: 100.0,
        });
    }
    let eps = 1e-12 * max_norm;
    let mut near_zero = 0usize;
    for c in cross.iter_mut() {
        let n = c.norm();
        if n < eps {
            *c = Complex::new(0.0, 0.0);
            near_zero += 1;
        } else {
            *c /= n;
        }
    }
    let frac = near_zero as f64 / cross.len() as f64;
    if frac > SPECTRUM_NEAR_ZERO_LIMIT {
        return Err(Error::DegenerateSpectrum {
            near_zero_fraction: 100.0 * frac,
        });
    }

    let corr = fft.inverse_real(cross);

    // Locate the correlation peak on the constraint-consistent support.
    let (px, py) = match constraint {
        AxisConstraint::None => {
            let mut best = (0usize, 0usize);
            let mut best_v = f64::NEG_INFINITY;
            for y in 0..h {
                for x in 0..w {
                    let v = corr[y * w + x];
                    if v > best_v {
                        best_v = v;
                        best = (x, y);
                    }
                }
            }
            best
        }
        AxisConstraint::XOnly => {
            // dy = 0 puts the peak in row 0.
            let mut best = 0usize;
            let mut best_v = f64::NEG_INFINITY;
            for x in 0..w {
                if corr[x] > best_v {
                    best_v = corr[x];
                    best = x;
                }
            }
            (best, 0)
        }
        AxisConstraint::YOnly => {
            let mut best = 0usize;
            let mut best_v = f64::NEG_INFINITY;
            for y in 0..h {
                if corr[y * w] > best_v {
                    best_v = corr[y * w];
                    best = y;
                }
            }
            (0, best)
        }
    };
    let peak_value = corr[py * w + px];

    let sample_x = |x: isize| -> f64 { corr[py * w + (x.rem_euclid(w as isize) as usize)] };
    let sample_y = |y: isize| -> f64 { corr[(y.rem_euclid(h as isize) as usize) * w + px] };

    let delta_x = match constraint {
        AxisConstraint::YOnly => 0.0,
        _ => subpixel_offset(cfg.subpixel, sample_x(px as isize - 1), peak_value, sample_x(px as isize + 1)),
    };
    let delta_y = match constraint {
        AxisConstraint::XOnly => 0.0,
        _ => subpixel_offset(cfg.subpixel, sample_y(py as isize - 1), peak_value, sample_y(py as isize + 1)),
    };

    // Peak sits at (-dx mod w, -dy mod h); unwrap to the nearest shift.
    let unwrap = |p: f64, n: usize| -> f64 {
        if p > n as f64 / 2.0 {
            p - n as f64
        } else {
            p
        }
    };
    let dx = match constraint {
        AxisConstraint::YOnly => 0.0,
        _ => -unwrap(px as f64 + delta_x, w),
    };
    let dy = match constraint {
        AxisConstraint::XOnly => 0.0,
        _ => -unwrap(py as f64 + delta_y, h),
    };

    Ok(ShiftEstimate {
        dx,
        dy,
        peak_value,
        constraint,
    })
}

/// Sub-pixel offset of the peak center from its integer bin, from the two
/// circular neighbours `l`, `r` around the peak value `a`.
fn subpixel_offset(method: SubpixelMethod, l: f64, a: f64, r: f64) -> f64 {
    match method {
        SubpixelMethod::None => 0.0,
        SubpixelMethod::Parabolic => {
            let denom = l - 2.0 * a + r;
            if denom.abs() < 1e-300 {
                0.0
            } else {
                (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
            }
        }
        SubpixelMethod::KernelRatio => {
            // The correlation surface of a pure translation is a periodic-
            // sinc kernel; the center offset follows from the neighbour
            // ratio: s = r/(a + r) for the dominant side. Neighbours below
            // 1% of the peak are sidelobe residue of an integer-bin delta
            // (guard-zeroed spectrum bins), not a fractional offset.
            let (side, n) = if r >= l { (1.0, r) } else { (-1.0, l) };
            let n = n.max(0.0);
            if n < 0.01 * a || a <= 0.0 {
                return 0.0;
            }
            side * (n / (a + n)).clamp(0.0, 0.75)
        }
    }
}

/// Per-image shift estimates anchoring a frame set to one reference image.
/// `shifts[reference_index]` is exactly zero; images whose registration
/// failed carry `None` and are unusable for alignment.
#[derive(Debug, Clone)]
pub struct MotionPlan {
    pub reference_index: usize,
    pub shifts: Vec<Option<ShiftEstimate>>,
}

impl MotionPlan {
    /// All images registered successfully.
    pub fn is_complete(&self) -> bool {
        self.shifts.iter().all(|s| s.is_some())
    }
}

/// Default reference: the middle image, `ceil(count/2) - 1`.
pub fn default_reference_index(count: usize) -> usize {
    count.div_ceil(2).saturating_sub(1)
}

/// Register every non-reference image of the set against the reference
/// image. Estimates are per-image (no interpolation between frames), so
/// non-uniform motion is handled.
pub fn plan_motion(
    frames: &FrameSet,
    reference_index: usize,
    constraint: AxisConstraint,
    cfg: &RegistrationConfig,
) -> Result<MotionPlan> {
    let n = frames.images.len();
    if n < 2 {
        return Err(Error::InvalidParam(
            "motion planning needs at least 2 images".into(),
        ));
    }
    if reference_index >= n {
        return Err(Error::InvalidParam(format!(
            "reference index {reference_index} out of range for {n} images"
        )));
    }
    let reference = &frames.images[reference_index];
    let mut shifts = Vec::with_capacity(n);
    for (i, img) in frames.images.iter().enumerate() {
        if i == reference_index {
            shifts.push(Some(ShiftEstimate::zero(constraint)));
        } else {
            shifts.push(phase_correlate_with(reference, img, constraint, cfg).ok());
        }
    }
    Ok(MotionPlan {
        reference_index,
        shifts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    Nearest,
    #[default]
    Bilinear,
}

/// Resample every image by its negative shift so the whole set sits in the
/// reference image frame. Pixels sampled from outside their source image are
/// flagged invalid, shrinking the set's common mask.
pub fn align(frames: &FrameSet, plan: &MotionPlan, interpolation: Interpolation) -> Result<FrameSet> {
    if plan.shifts.len() != frames.images.len() {
        return Err(Error::Data(format!(
            "motion plan covers {} images, frame set has {}",
            plan.shifts.len(),
            frames.images.len()
        )));
    }
    let (w, h) = frames.images[0].dims();
    let mut valid = frames.valid.clone();
    let mut images = Vec::with_capacity(frames.images.len());
    for (i, img) in frames.images.iter().enumerate() {
        let shift = plan.shifts[i].ok_or_else(|| {
            Error::Data(format!("image {i} has no usable shift estimate"))
        })?;
        if shift.dx == 0.0 && shift.dy == 0.0 {
            images.push(img.clone());
            continue;
        }
        let mut out = Grid::new(w, h, 0.0);
        for y in 0..h {
            for x in 0..w {
                let sx = x as f64 + shift.dx;
                let sy = y as f64 + shift.dy;
                let v = match interpolation {
                    Interpolation::Nearest => {
                        let rx = sx.round();
                        let ry = sy.round();
                        if rx < 0.0 || ry < 0.0 || rx >= w as f64 || ry >= h as f64 {
                            None
                        } else {
                            Some(img.get(rx as usize, ry as usize))
                        }
                    }
                    Interpolation::Bilinear => img.sample_bilinear(sx, sy),
                };
                match v {
                    Some(v) => out.set(x, y, v),
                    None => valid.set(x, y, false),
                }
            }
        }
        images.push(out);
    }
    Ok(FrameSet {
        images,
        timestamps: frames.timestamps.clone(),
        spec: frames.spec,
        valid,
    })
}

/// Row-column 2D FFT on top of cached 1D plans.
struct Fft2d {
    w: usize,
    h: usize,
    fwd_w: std::sync::Arc<dyn rustfft::Fft<f64>>,
    fwd_h: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inv_w: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inv_h: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Fft2d {
    fn new(w: usize, h: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            w,
            h,
            fwd_w: planner.plan_fft_forward(w),
            fwd_h: planner.plan_fft_forward(h),
            inv_w: planner.plan_fft_inverse(w),
            inv_h: planner.plan_fft_inverse(h),
        }
    }

    fn forward(&self, img: &Grid<f64>, window: bool) -> Vec<Complex<f64>> {
        let (w, h) = (self.w, self.h);
        let mut data: Vec<Complex<f64>> = if window {
            let wx = hann(w);
            let wy = hann(h);
            img.as_slice()
                .iter()
                .enumerate()
                .map(|(i, &v)| Complex::new(v * wx[i % w] * wy[i / w], 0.0))
                .collect()
        } else {
            img.as_slice().iter().map(|&v| Complex::new(v, 0.0)).collect()
        };
        for row in data.chunks_exact_mut(w) {
            self.fwd_w.process(row);
        }
        let mut t = transpose(&data, w, h);
        for col in t.chunks_exact_mut(h) {
            self.fwd_h.process(col);
        }
        transpose(&t, h, w)
    }

    /// Inverse transform normalised by `1/(w*h)`, real part.
    fn inverse_real(&self, mut data: Vec<Complex<f64>>) -> Vec<f64> {
        let (w, h) = (self.w, self.h);
        for row in data.chunks_exact_mut(w) {
            self.inv_w.process(row);
        }
        let mut t = transpose(&data, w, h);
        for col in t.chunks_exact_mut(h) {
            self.inv_h.process(col);
        }
        let back = transpose(&t, h, w);
        let scale = 1.0 / (w * h) as f64;
        back.iter().map(|c| c.re * scale).collect()
    }
}

fn transpose(data: &[Complex<f64>], w: usize, h: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); data.len()];
    for y in 0..h {
        for x in 0..w {
            out[x * h + y] = data[y * w + x];
        }
    }
    out
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / n as f64).cos()))
        .collect()
}
