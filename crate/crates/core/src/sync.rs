//! Trigger/image matching: group timestamped camera images into complete
//! frame sets given projector trigger timings.
//!
//! An image at `t_c` matches slot `i` (1-based) of a sequence triggered at
//! `t_p` when `-tol_lower <= t_c - (t_p + (i-1) dt_img) <= tol_upper`.
//! Slots are filled in slot-time order, each taking the unassigned image
//! with the smallest absolute residual (earlier image wins ties); a sequence
//! is emitted only when every slot filled, otherwise it is reported
//! incomplete and discarded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Projector trigger timing for pattern `index` of a sequence. All events
/// of one sequence carry the same trigger time `t_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerEvent {
    /// Trigger time t_p, seconds.
    pub time: f64,
    pub sequence: u64,
    /// 1-based pattern index within the sequence.
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncConfig {
    /// Time interval between camera triggers, seconds.
    pub dt_img: f64,
    pub tol_lower: f64,
    pub tol_upper: f64,
}

impl SyncConfig {
    /// Tolerances default to `0.2 * dt_img` on both sides.
    pub fn with_default_tol(dt_img: f64) -> Result<Self> {
        Self::new(dt_img, 0.2 * dt_img, 0.2 * dt_img)
    }

    pub fn new(dt_img: f64, tol_lower: f64, tol_upper: f64) -> Result<Self> {
        if !(dt_img > 0.0) {
            return Err(Error::InvalidParam("dt_img must be positive".into()));
        }
        if tol_lower < 0.0 || tol_upper < 0.0 {
            return Err(Error::InvalidParam("tolerances must be >= 0".into()));
        }
        Ok(Self {
            dt_img,
            tol_lower,
            tol_upper,
        })
    }

    /// Expected capture time of slot `index` (1-based) for trigger time `t_p`.
    pub fn slot_time(&self, t_p: f64, index: usize) -> f64 {
        t_p + (index - 1) as f64 * self.dt_img
    }
}

/// Signed residual `t_c - (t_p + (i-1) dt_img)`.
pub fn residual(t_c: f64, trigger: &TriggerEvent, cfg: &SyncConfig) -> f64 {
    t_c - cfg.slot_time(trigger.time, trigger.index)
}

/// The matching rule, evaluated exactly.
pub fn match_image(t_c: f64, trigger: &TriggerEvent, cfg: &SyncConfig) -> bool {
    let r = residual(t_c, trigger, cfg);
    -cfg.tol_lower <= r && r <= cfg.tol_upper
}

/// A fully matched pattern sequence: one `(t_c, payload)` per slot, in slot
/// order.
#[derive(Debug, Clone)]
pub struct AssembledSet<T> {
    pub sequence: u64,
    pub trigger_time: f64,
    pub slots: Vec<(f64, T)>,
}

/// An incomplete sequence and the 1-based slots that stayed empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncompleteSet {
    pub sequence: u64,
    pub missing: Vec<usize>,
}

/// Two or more images satisfied the rule for one slot; the smaller-residual
/// image was kept.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotConflict {
    pub sequence: u64,
    pub index: usize,
    pub kept_time: f64,
    pub candidates: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RejectionReport {
    pub incomplete: Vec<IncompleteSet>,
    /// Capture times of images no slot claimed.
    pub unmatched_images: Vec<f64>,
    pub conflicts: Vec<SlotConflict>,
}

#[derive(Debug, Clone)]
pub struct Assembly<T> {
    pub sets: Vec<AssembledSet<T>>,
    pub report: RejectionReport,
}

/// Match `images` (time-ordered `(t_c, payload)` pairs) against the trigger
/// stream and emit every complete `seq_len`-slot sequence in trigger order.
///
/// Each image is assigned to at most one slot and each slot holds at most
/// one image. Slots are processed in slot-time order; conflicts resolve to
/// the minimum absolute residual with ties to the earlier image.
pub fn assemble<T: Clone>(
    triggers: &[TriggerEvent],
    images: &[(f64, T)],
    seq_len: usize,
    cfg: &SyncConfig,
) -> Result<Assembly<T>> {
    if seq_len == 0 {
        return Err(Error::InvalidParam("seq_len must be >= 1".into()));
    }
    if triggers.windows(2).any(|w| w[1].time < w[0].time) {
        return Err(Error::Data("trigger stream is not time-ordered".into()));
    }
    if images.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(Error::Data("image stream is not time-ordered".into()));
    }
    for t in triggers {
        if t.index == 0 || t.index > seq_len {
            return Err(Error::Data(format!(
                "trigger index {} outside 1..={seq_len}",
                t.index
            )));
        }
    }

    // One sequence per id, anchored at its first trigger event's time.
    let mut sequences: Vec<(u64, f64)> = Vec::new();
    for t in triggers {
        if sequences.last().map(|&(id, _)| id) != Some(t.sequence) {
            if sequences.iter().any(|&(id, _)| id == t.sequence) {
                return Err(Error::Data(format!(
                    "sequence {} appears non-contiguously in the trigger stream",
                    t.sequence
                )));
            }
            sequences.push((t.sequence, t.time));
        }
    }

    // All slots of all sequences ordered by expected capture time.
    let mut slots: Vec<(f64, u64, usize)> = sequences
        .iter()
        .flat_map(|&(id, t_p)| (1..=seq_len).map(move |i| (cfg.slot_time(t_p, i), id, i)))
        .collect();
    slots.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut used = vec![false; images.len()];
    let mut filled: std::collections::HashMap<(u64, usize), (f64, usize)> =
        std::collections::HashMap::new();
    let mut report = RejectionReport::default();

    for &(slot_time, id, index) in &slots {
        let trig = TriggerEvent {
            time: slot_time - (index - 1) as f64 * cfg.dt_img,
            sequence: id,
            index,
        };
        let mut best: Option<(f64, usize)> = None; // (|residual|, image idx)
        let mut candidates = 0usize;
        for (img_idx, (t_c, _)) in images.iter().enumerate() {
            if used[img_idx] {
                continue;
            }
            if *t_c > slot_time + cfg.tol_upper {
                break;
            }
            if match_image(*t_c, &trig, cfg) {
                candidates += 1;
                let r = residual(*t_c, &trig, cfg).abs();
                let better = match best {
                    None => true,
                    Some((best_r, _)) => r < best_r,
                };
                if better {
                    best = Some((r, img_idx));
                }
            }
        }
        if let Some((_, img_idx)) = best {
            used[img_idx] = true;
            filled.insert((id, index), (images[img_idx].0, img_idx));
            if candidates > 1 {
                report.conflicts.push(SlotConflict {
                    sequence: id,
                    index,
                    kept_time: images[img_idx].0,
                    candidates,
                });
            }
        }
    }

    let mut sets = Vec::new();
    for &(id, t_p) in &sequences {
        let missing: Vec<usize> = (1..=seq_len)
            .filter(|i| !filled.contains_key(&(id, *i)))
            .collect();
        if missing.is_empty() {
            let slots = (1..=seq_len)
                .map(|i| {
                    let &(t_c, img_idx) = filled.get(&(id, i)).expect("slot filled");
                    (t_c, images[img_idx].1.clone())
                })
                .collect();
            sets.push(AssembledSet {
                sequence: id,
                trigger_time: t_p,
                slots,
            });
        } else {
            report.incomplete.push(IncompleteSet {
                sequence: id,
                missing,
            });
        }
    }
    report.unmatched_images = images
        .iter()
        .zip(&used)
        .filter(|(_, &u)| !u)
        .map(|((t, _), _)| *t)
        .collect();

    Ok(Assembly { sets, report })
}
