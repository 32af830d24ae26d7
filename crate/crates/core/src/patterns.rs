//! PSP fringe pattern generation: N-step phase-shifted sinusoid sequences
//! (high-frequency set followed by a unit-frequency set) at projector
//! resolution, plus the codification constants consumed by the decoder.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Sign of the per-step phase shift: pattern `i` (1-based) carries
/// `PHASE_SHIFT_SIGN * 2*pi*(i-1)/N`. The decoder must use the same sign;
/// both sides reference this constant.
pub const PHASE_SHIFT_SIGN: f64 = -1.0;

/// `Vertical`: the sinusoid propagates along projector x and encodes `u_p`.
/// `Horizontal`: along y, encoding `v_p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Vertical,
    Horizontal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub orientation: Orientation,
    /// Phase steps N >= 3.
    pub steps: usize,
    /// Fringe count of the high-frequency set.
    pub n_fringe: u32,
    /// Projector resolution in pixels.
    pub width: u32,
    pub height: u32,
}

impl PatternSpec {
    pub fn new(
        orientation: Orientation,
        steps: usize,
        n_fringe: u32,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        if steps < 3 {
            return Err(Error::InvalidParam(format!(
                "need at least 3 phase steps, got {steps}"
            )));
        }
        if n_fringe < 1 {
            return Err(Error::InvalidParam("n_fringe must be >= 1".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidParam("projector resolution must be nonzero".into()));
        }
        Ok(Self {
            orientation,
            steps,
            n_fringe,
            width,
            height,
        })
    }

    /// Extent of the coded axis: width for vertical patterns, height for
    /// horizontal ones.
    pub fn extent(&self) -> u32 {
        match self.orientation {
            Orientation::Vertical => self.width,
            Orientation::Horizontal => self.height,
        }
    }

    /// Fringe wavelength in projector pixels, `extent / n_fringe`.
    /// May be fractional.
    pub fn wavelength(&self) -> f64 {
        self.extent() as f64 / self.n_fringe as f64
    }

    /// Carrier phase of the coded axis at projector coordinate `p`:
    /// `2*pi*f*p/extent` with `f = n_fringe` (high set) or 1 (unit set).
    pub fn carrier_phase(&self, p: f64, high_frequency: bool) -> f64 {
        let f = if high_frequency { self.n_fringe as f64 } else { 1.0 };
        TAU * f * p / self.extent() as f64
    }

    /// Phase shift of step `i` (0-based).
    pub fn step_shift(&self, i: usize) -> f64 {
        PHASE_SHIFT_SIGN * TAU * i as f64 / self.steps as f64
    }

    /// Sinusoid value in [0, 1] at projector coordinate `p` for step `i` of
    /// the given set; the analytic counterpart of the stored images.
    pub fn value(&self, p: f64, i: usize, high_frequency: bool) -> f64 {
        0.5 + 0.5 * (self.carrier_phase(p, high_frequency) + self.step_shift(i)).cos()
    }
}

/// The 2N generated intensity maps in [0, 1]: N high-frequency images
/// followed by N unit-frequency images.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSequence {
    pub spec: PatternSpec,
    pub images: Vec<Grid<f64>>,
    /// Set when the values have been quantized to `2^bits - 1` levels.
    pub bits: Option<u8>,
}

impl PatternSequence {
    pub fn high_set(&self) -> &[Grid<f64>] {
        &self.images[..self.spec.steps]
    }

    pub fn unit_set(&self) -> &[Grid<f64>] {
        &self.images[self.spec.steps..]
    }

    /// Bilinear sample of image `idx` at projector position `(u_p, v_p)`,
    /// clamped at the border.
    pub fn sample(&self, idx: usize, u_p: f64, v_p: f64) -> f64 {
        self.images[idx].sample_bilinear_clamped(u_p, v_p)
    }

    /// Evaluate the analytic sinusoid behind image `idx` at the coded
    /// coordinate `p`, bypassing interpolation and quantization.
    pub fn sample_analytic(&self, idx: usize, p: f64) -> f64 {
        let n = self.spec.steps;
        let (i, high) = if idx < n { (idx, true) } else { (idx - n, false) };
        self.spec.value(p, i, high)
    }
}

/// Generate the 2N pattern images for a spec. Values are constant along the
/// axis perpendicular to the propagation direction.
pub fn generate(spec: &PatternSpec) -> PatternSequence {
    let (w, h) = (spec.width as usize, spec.height as usize);
    let mut images = Vec::with_capacity(2 * spec.steps);
    for &high in &[true, false] {
        for i in 0..spec.steps {
            // 1D profile along the coded axis, then broadcast.
            let extent = spec.extent() as usize;
            let profile: Vec<f64> = (0..extent).map(|p| spec.value(p as f64, i, high)).collect();
            let img = match spec.orientation {
                Orientation::Vertical => Grid::from_fn(w, h, |x, _| profile[x]),
                Orientation::Horizontal => Grid::from_fn(w, h, |_, y| profile[y]),
            };
            images.push(img);
        }
    }
    PatternSequence {
        spec: *spec,
        images,
        bits: None,
    }
}

/// Quantize every value to `2^bits - 1` levels (round half up). Idempotent.
pub fn quantize(seq: &PatternSequence, bits: u8) -> Result<PatternSequence> {
    if ![8, 10, 12, 16].contains(&bits) {
        return Err(Error::InvalidParam(format!(
            "unsupported quantization depth {bits}; expected 8, 10, 12 or 16"
        )));
    }
    let levels = ((1u32 << bits) - 1) as f64;
    let images = seq
        .images
        .iter()
        .map(|img| img.map(|v| (v * levels).round() / levels))
        .collect();
    Ok(PatternSequence {
        spec: seq.spec,
        images,
        bits: Some(bits),
    })
}
