//! JSON manifests tying raw image/map files to their dimensions, pattern
//! spec, timestamps, per-frame motion, and ground truth.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decode::CoordAxis;
use crate::error::Result;
use crate::patterns::PatternSpec;
use crate::sync::TriggerEvent;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameEntry {
    pub file: String,
    /// Capture time, seconds.
    pub timestamp: f64,
    /// Accumulated sensor translation at this frame, meters.
    pub motion: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthEntry {
    /// Raw float32 depth map, meters (NaN = invalid).
    pub depth_file: String,
    /// Raw float32 projector-coordinate map, pixels.
    pub coord_file: String,
    /// 8-bit PGM validity mask (nonzero = valid).
    pub valid_file: String,
    pub axis: CoordAxis,
    /// Frame whose pose the maps describe.
    pub frame: usize,
}

/// Sidecar manifest for a rendered or captured frame sequence. All file
/// names are relative to the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FramesManifest {
    pub width: usize,
    pub height: usize,
    pub pattern: PatternSpec,
    /// Bit depth of the frame files.
    pub bits: u8,
    pub dt_img: f64,
    pub seed: u64,
    pub rig_fingerprint: String,
    pub frames: Vec<FrameEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruthEntry>,
    /// Present when the capture carries trigger timings for sync matching.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triggers: Option<Vec<TriggerEvent>>,
}

impl FramesManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Input for `sync-check`: trigger and image timestamp streams.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyncManifest {
    pub dt_img: f64,
    #[serde(default)]
    pub tol_lower: Option<f64>,
    #[serde(default)]
    pub tol_upper: Option<f64>,
    pub seq_len: usize,
    pub triggers: Vec<TriggerEvent>,
    /// (timestamp, label) pairs, time-ordered.
    pub images: Vec<(f64, String)>,
}

impl SyncManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
