//! PSP decoding: wrapped phase via the N-step arctangent estimator, shading
//! and modulation maps, temporal phase unwrapping against the unit-frequency
//! set, and conversion of absolute phase to projector coordinates.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};
use crate::patterns::{Orientation, PatternSpec, PHASE_SHIFT_SIGN};

/// Default modulation threshold (on the [0,1] intensity scale) below which a
/// pixel is considered unlit.
pub const DEFAULT_MODULATION_THRESHOLD: f64 = 0.02;

/// Ordered, timestamp-tagged intensity images of one projected sequence.
#[derive(Debug, Clone)]
pub struct FrameSet {
    pub images: Vec<Grid<f64>>,
    /// Capture time of each image, seconds.
    pub timestamps: Vec<f64>,
    pub spec: PatternSpec,
    /// Pixels valid in every image (alignment and resampling shrink this).
    pub valid: Mask,
}

impl FrameSet {
    /// A full 3+3-style set has `2*steps` images; a single-frequency set has
    /// `steps`.
    pub fn new(images: Vec<Grid<f64>>, timestamps: Vec<f64>, spec: PatternSpec) -> Result<Self> {
        if images.len() != 2 * spec.steps && images.len() != spec.steps {
            return Err(Error::IncompleteFrameSet {
                expected: 2 * spec.steps,
                got: images.len(),
            });
        }
        if timestamps.len() != images.len() {
            return Err(Error::Data(format!(
                "{} timestamps for {} images",
                timestamps.len(),
                images.len()
            )));
        }
        let dims = images[0].dims();
        for img in &images[1..] {
            if img.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    got: img.dims(),
                });
            }
        }
        let valid = Grid::new(dims.0, dims.1, true);
        Ok(Self {
            images,
            timestamps,
            spec,
            valid,
        })
    }

    pub fn width(&self) -> usize {
        self.images[0].width()
    }

    pub fn height(&self) -> usize {
        self.images[0].height()
    }

    pub fn high_set(&self) -> &[Grid<f64>] {
        &self.images[..self.spec.steps]
    }

    pub fn unit_set(&self) -> Result<&[Grid<f64>]> {
        if self.images.len() < 2 * self.spec.steps {
            return Err(Error::IncompleteFrameSet {
                expected: 2 * self.spec.steps,
                got: self.images.len(),
            });
        }
        Ok(&self.images[self.spec.steps..2 * self.spec.steps])
    }
}

/// Wrapped phase in [0, 2*pi) with the shading (A) and modulation (B) maps.
#[derive(Debug, Clone)]
pub struct WrappedPhase {
    pub phi: Grid<f64>,
    pub shading: Grid<f64>,
    pub modulation: Grid<f64>,
}

/// Wrap a radian value into [0, 2*pi); `atan2` lands in (-pi, pi].
#[inline]
pub fn wrap_tau(x: f64) -> f64 {
    if x < 0.0 {
        x + TAU
    } else {
        x
    }
}

/// N-step wrapped-phase estimator.
///
/// For N = 3 this evaluates `atan2(sqrt(3)(I2 - I3), 2 I1 - I2 - I3)`
/// verbatim; for N > 3 the uniform-step least-squares generalization
/// `atan2(sum_i I_i sin(2 pi (i-1)/N), sum_i I_i cos(2 pi (i-1)/N))`.
/// Both agree at N = 3 and follow the shared step-shift sign convention.
pub fn wrapped_phase(images: &[Grid<f64>]) -> Result<WrappedPhase> {
    let n = images.len();
    if n < 3 {
        return Err(Error::InvalidParam(format!(
            "wrapped phase needs at least 3 images, got {n}"
        )));
    }
    let dims = images[0].dims();
    for img in &images[1..] {
        if img.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                got: img.dims(),
            });
        }
    }
    let (w, h) = dims;
    let mut phi = Grid::new(w, h, 0.0);
    let mut shading = Grid::new(w, h, 0.0);
    let mut modulation = Grid::new(w, h, 0.0);

    // With I_i = A + B cos(phi + s*2*pi*(i-1)/N) and s = PHASE_SHIFT_SIGN:
    // sum I_i sin(delta_i) = -s * B sin(phi) * N/2, sum I_i cos(delta_i) =
    // B cos(phi) * N/2, where delta_i = 2*pi*(i-1)/N.
    let sincos: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let d = TAU * i as f64 / n as f64;
            d.sin_cos()
        })
        .collect();

    let inv_n = 1.0 / n as f64;
    for idx in 0..w * h {
        let (mut s, mut c, mut sum) = (0.0, 0.0, 0.0);
        for (img, (sd, cd)) in images.iter().zip(&sincos) {
            let v = img.as_slice()[idx];
            s += v * sd;
            c += v * cd;
            sum += v;
        }
        let p = if n == 3 {
            let i1 = images[0].as_slice()[idx];
            let i2 = images[1].as_slice()[idx];
            let i3 = images[2].as_slice()[idx];
            wrap_tau(f64::atan2(3f64.sqrt() * (i2 - i3), 2.0 * i1 - i2 - i3))
        } else {
            wrap_tau(f64::atan2(-PHASE_SHIFT_SIGN * s, c))
        };
        phi.as_mut_slice()[idx] = p;
        shading.as_mut_slice()[idx] = sum * inv_n;
        modulation.as_mut_slice()[idx] = 2.0 * inv_n * (s * s + c * c).sqrt();
    }
    Ok(WrappedPhase {
        phi,
        shading,
        modulation,
    })
}

/// Temporal phase unwrapping: fringe order
/// `k = round((n_fringe * phi_l - phi_h) / 2 pi)` and absolute phase
/// `Phi = phi_h + 2 pi k`.
///
/// `k` outside `[0, n_fringe - 1]` marks the pixel invalid in the returned
/// mask (the stored value is clamped into range).
pub struct Unwrapped {
    pub fringe_order: Grid<i32>,
    pub phi_abs: Grid<f64>,
    pub in_range: Mask,
}

pub fn unwrap_temporal(phi_h: &Grid<f64>, phi_l: &Grid<f64>, n_fringe: u32) -> Result<Unwrapped> {
    if !phi_h.same_dims(phi_l) {
        return Err(Error::DimensionMismatch {
            expected: phi_h.dims(),
            got: phi_l.dims(),
        });
    }
    if n_fringe < 1 {
        return Err(Error::InvalidParam("n_fringe must be >= 1".into()));
    }
    let (w, h) = phi_h.dims();
    let mut fringe_order = Grid::new(w, h, 0i32);
    let mut phi_abs = Grid::new(w, h, 0.0);
    let mut in_range = Grid::new(w, h, true);
    let kmax = n_fringe as i64 - 1;
    for idx in 0..w * h {
        let ph = phi_h.as_slice()[idx];
        let pl = phi_l.as_slice()[idx];
        let k = ((n_fringe as f64 * pl - ph) / TAU).round() as i64;
        let ok = (0..=kmax).contains(&k);
        let kc = k.clamp(0, kmax);
        fringe_order.as_mut_slice()[idx] = kc as i32;
        phi_abs.as_mut_slice()[idx] = ph + TAU * kc as f64;
        in_range.as_mut_slice()[idx] = ok;
    }
    Ok(Unwrapped {
        fringe_order,
        phi_abs,
        in_range,
    })
}

/// Which projector axis a coordinate map encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoordAxis {
    /// Horizontal projector coordinate `u_p` (vertical patterns).
    U,
    /// Vertical projector coordinate `v_p` (horizontal patterns).
    V,
}

impl From<Orientation> for CoordAxis {
    fn from(o: Orientation) -> Self {
        match o {
            Orientation::Vertical => CoordAxis::U,
            Orientation::Horizontal => CoordAxis::V,
        }
    }
}

/// Per-camera-pixel projector coordinate along one axis.
#[derive(Debug, Clone)]
pub struct ProjectorCoordMap {
    pub coord: Grid<f64>,
    pub axis: CoordAxis,
    /// Projector extent of the coded axis, pixels.
    pub extent: u32,
    pub mask: Mask,
}

/// Absolute phase -> projector coordinate, `p = lambda * Phi / (2 pi)`.
/// The mask excludes coordinates outside `[0, extent)`.
pub fn to_projector_coord(phi_abs: &Grid<f64>, spec: &PatternSpec) -> ProjectorCoordMap {
    let lambda = spec.wavelength();
    let extent = spec.extent();
    let coord = phi_abs.map(|phi| lambda * phi / TAU);
    let mask = coord.map(|p| p.is_finite() && p >= 0.0 && p < extent as f64);
    ProjectorCoordMap {
        coord,
        axis: spec.orientation.into(),
        extent,
        mask,
    }
}

/// All per-pixel maps produced by a full decode.
#[derive(Debug, Clone)]
pub struct PhaseMaps {
    pub phi_h: Grid<f64>,
    pub phi_l: Grid<f64>,
    /// Shading map A (high-frequency set).
    pub shading: Grid<f64>,
    /// Modulation map B of the high-frequency set.
    pub modulation: Grid<f64>,
    /// Modulation of the unit-frequency set (also thresholded for masking).
    pub modulation_low: Grid<f64>,
    pub fringe_order: Grid<i32>,
    pub phi_abs: Grid<f64>,
    pub mask: Mask,
}

/// Full decode of a 2N frame set: wrapped phases for both sets, temporal
/// unwrapping, and projector coordinates. The output mask requires both
/// modulations above `threshold`, an in-range fringe order, an in-range
/// projector coordinate, and a valid input pixel.
pub fn decode_full(frames: &FrameSet, threshold: f64) -> Result<(PhaseMaps, ProjectorCoordMap)> {
    let high = wrapped_phase(frames.high_set())?;
    let unit = wrapped_phase(frames.unit_set()?)?;
    let unwrapped = unwrap_temporal(&high.phi, &unit.phi, frames.spec.n_fringe)?;
    let mut coords = to_projector_coord(&unwrapped.phi_abs, &frames.spec);

    let (w, h) = high.phi.dims();
    let mut mask = Grid::new(w, h, true);
    for idx in 0..w * h {
        let ok = high.modulation.as_slice()[idx] >= threshold
            && unit.modulation.as_slice()[idx] >= threshold
            && unwrapped.in_range.as_slice()[idx]
            && coords.mask.as_slice()[idx]
            && frames.valid.as_slice()[idx];
        mask.as_mut_slice()[idx] = ok;
    }
    coords.mask = mask.clone();
    let maps = PhaseMaps {
        phi_h: high.phi,
        phi_l: unit.phi,
        shading: high.shading,
        modulation: high.modulation,
        modulation_low: unit.modulation,
        fringe_order: unwrapped.fringe_order,
        phi_abs: unwrapped.phi_abs,
        mask,
    };
    Ok((maps, coords))
}
