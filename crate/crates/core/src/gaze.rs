//! Fixation preprocessing and area-of-interest aggregation.
//!
//! The pipeline per participant: drop fixations shorter than the threshold,
//! keep the stable eye, clip every stimulus to the span between entering it
//! and the first interaction, then count hits and dwell time per AOI.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shortest fixation kept by default, in milliseconds.
pub const DEFAULT_MIN_FIXATION_MS: u64 = 104;

/// Identifier recorded alongside stable-eye decisions.
pub const STABLE_EYE_METRIC: &str = "smoothed-binocular-midpoint-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Eye {
    Left,
    Right,
}

impl fmt::Display for Eye {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Eye::Left => "left",
            Eye::Right => "right",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub participant: String,
    pub eye: Eye,
    pub stimulus: String,
    pub x: f64,
    pub y: f64,
    pub start_ms: i64,
    pub duration_ms: u64,
}

impl Fixation {
    fn end_ms(&self) -> i64 {
        self.start_ms + self.duration_ms as i64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aoi {
    pub name: String,
    pub stimulus: String,
    /// `[x, y, width, height]` in pixels.
    pub rect: [f64; 4],
}

impl Aoi {
    /// Half-open containment: `[x, x + w) x [y, y + h)`.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let [rx, ry, w, h] = self.rect;
        x >= rx && x < rx + w && y >= ry && y < ry + h
    }

    pub fn validate(&self) -> Result<(), GazeError> {
        let [x, y, w, h] = self.rect;
        if !(w > 0.0 && h > 0.0) || ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(GazeError::InvalidAoi(self.name.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusWindow {
    pub participant: String,
    pub stimulus: String,
    pub enter_ms: i64,
    pub first_interaction_ms: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AoiStats {
    pub aoi: String,
    pub n_participants: usize,
    pub total_fixations: u64,
    pub mean_fixations: f64,
    /// Kept in milliseconds internally so totals stay exact.
    pub total_dwell_ms: u64,
    pub total_dwell_s: f64,
    pub mean_dwell_s: f64,
}

/// A fixation that landed in more than one AOI; it is counted in all of them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapWarning {
    pub participant: String,
    pub stimulus: String,
    pub start_ms: i64,
    pub aois: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AoiReport {
    pub stats: Vec<AoiStats>,
    pub overlaps: Vec<OverlapWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StableEyeDecision {
    pub eye: Eye,
    pub left_divergence: Option<f64>,
    pub right_divergence: Option<f64>,
    pub pairs: usize,
    pub metric: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GazeError {
    #[error("no fixations for either eye")]
    NoSamples,
    #[error("AOI {0:?} needs a finite rectangle with positive width and height")]
    InvalidAoi(String),
    #[error("window for {participant}/{stimulus} ends before it starts")]
    InvalidWindow {
        participant: String,
        stimulus: String,
    },
}

/// Keeps fixations lasting at least `min_duration_ms` (inclusive).
pub fn filter_fixations(fixations: &[Fixation], min_duration_ms: u64) -> Vec<Fixation> {
    fixations
        .iter()
        .filter(|f| f.duration_ms >= min_duration_ms)
        .cloned()
        .collect()
}

/// Chooses the eye whose scanpath stays closer to the binocular consensus.
///
/// Left and right fixations on the same stimulus are paired one-to-one by
/// largest temporal overlap. The consensus at pair `k` is the mean of the
/// binocular midpoints of pairs `k-1..=k+1` (truncated at the ends); an eye's
/// divergence is the mean distance of its paired fixations from that
/// consensus. Lower divergence wins, exact ties go to the left eye, and a
/// participant with data from one eye only gets that eye.
pub fn select_stable_eye(fixations: &[Fixation]) -> Result<StableEyeDecision, GazeError> {
    let mut left: Vec<&Fixation> = fixations.iter().filter(|f| f.eye == Eye::Left).collect();
    let mut right: Vec<&Fixation> = fixations.iter().filter(|f| f.eye == Eye::Right).collect();
    let single = |eye| StableEyeDecision {
        eye,
        left_divergence: None,
        right_divergence: None,
        pairs: 0,
        metric: STABLE_EYE_METRIC,
    };
    match (left.is_empty(), right.is_empty()) {
        (true, true) => return Err(GazeError::NoSamples),
        (false, true) => return Ok(single(Eye::Left)),
        (true, false) => return Ok(single(Eye::Right)),
        (false, false) => {}
    }
    left.sort_by(|a, b| chronological(a, b));
    right.sort_by(|a, b| chronological(a, b));

    let mut used = vec![false; right.len()];
    let mut pairs: Vec<(&Fixation, &Fixation)> = Vec::new();
    for l in &left {
        let mut best: Option<(i64, usize)> = None;
        for (j, r) in right.iter().enumerate() {
            if used[j] || r.stimulus != l.stimulus {
                continue;
            }
            let overlap = l.end_ms().min(r.end_ms()) - l.start_ms.max(r.start_ms);
            if overlap > 0 && best.is_none_or(|(o, _)| overlap > o) {
                best = Some((overlap, j));
            }
        }
        if let Some((_, j)) = best {
            used[j] = true;
            pairs.push((l, right[j]));
        }
    }
    if pairs.is_empty() {
        return Ok(StableEyeDecision {
            pairs: 0,
            ..single(Eye::Left)
        });
    }

    let mid: Vec<(f64, f64)> = pairs
        .iter()
        .map(|(l, r)| ((l.x + r.x) / 2.0, (l.y + r.y) / 2.0))
        .collect();
    let (mut dl, mut dr) = (0.0, 0.0);
    for (k, (l, r)) in pairs.iter().enumerate() {
        let lo = k.saturating_sub(1);
        let hi = (k + 1).min(mid.len() - 1);
        let span = &mid[lo..=hi];
        let cx = span.iter().map(|m| m.0).sum::<f64>() / span.len() as f64;
        let cy = span.iter().map(|m| m.1).sum::<f64>() / span.len() as f64;
        dl += (l.x - cx).hypot(l.y - cy);
        dr += (r.x - cx).hypot(r.y - cy);
    }
    let count = pairs.len() as f64;
    let (dl, dr) = (dl / count, dr / count);
    Ok(StableEyeDecision {
        eye: if dr < dl { Eye::Right } else { Eye::Left },
        left_divergence: Some(dl),
        right_divergence: Some(dr),
        pairs: pairs.len(),
        metric: STABLE_EYE_METRIC,
    })
}

/// Total order so results never depend on input order.
fn chronological(a: &Fixation, b: &Fixation) -> std::cmp::Ordering {
    (a.start_ms, a.duration_ms, &a.stimulus)
        .cmp(&(b.start_ms, b.duration_ms, &b.stimulus))
        .then(a.x.total_cmp(&b.x))
        .then(a.y.total_cmp(&b.y))
}

/// Keeps fixations starting in `[enter_ms, first_interaction_ms)`; without an
/// interaction, everything from `enter_ms` on.
pub fn clip_to_window(fixations: &[Fixation], window: &StimulusWindow) -> Vec<Fixation> {
    fixations
        .iter()
        .filter(|f| {
            f.start_ms >= window.enter_ms
                && window
                    .first_interaction_ms
                    .is_none_or(|end| f.start_ms < end)
        })
        .cloned()
        .collect()
}

/// Per-AOI totals and per-participant means over participants with at least
/// one hit. Output follows the order of `aois`.
pub fn aoi_stats(fixations: &[Fixation], aois: &[Aoi]) -> AoiReport {
    // Per AOI: participant -> (hits, dwell ms).
    let mut per_aoi: Vec<BTreeMap<&str, (u64, u64)>> = vec![BTreeMap::new(); aois.len()];
    let mut overlaps = Vec::new();
    for f in fixations {
        let hits: Vec<usize> = aois
            .iter()
            .enumerate()
            .filter(|(_, a)| a.stimulus == f.stimulus && a.contains(f.x, f.y))
            .map(|(i, _)| i)
            .collect();
        if hits.len() > 1 {
            overlaps.push(OverlapWarning {
                participant: f.participant.clone(),
                stimulus: f.stimulus.clone(),
                start_ms: f.start_ms,
                aois: hits.iter().map(|&i| aois[i].name.clone()).collect(),
            });
        }
        for i in hits {
            let entry = per_aoi[i].entry(f.participant.as_str()).or_default();
            entry.0 += 1;
            entry.1 += f.duration_ms;
        }
    }
    overlaps.sort_by(|a, b| {
        (&a.participant, &a.stimulus, a.start_ms, &a.aois).cmp(&(
            &b.participant,
            &b.stimulus,
            b.start_ms,
            &b.aois,
        ))
    });

    let stats = aois
        .iter()
        .zip(per_aoi)
        .map(|(aoi, participants)| {
            let n = participants.len();
            let total_fixations: u64 = participants.values().map(|v| v.0).sum();
            let total_dwell_ms: u64 = participants.values().map(|v| v.1).sum();
            let total_dwell_s = total_dwell_ms as f64 / 1000.0;
            let (mean_fixations, mean_dwell_s) = if n > 0 {
                (total_fixations as f64 / n as f64, total_dwell_s / n as f64)
            } else {
                (0.0, 0.0)
            };
            AoiStats {
                aoi: aoi.name.clone(),
                n_participants: n,
                total_fixations,
                mean_fixations,
                total_dwell_ms,
                total_dwell_s,
                mean_dwell_s,
            }
        })
        .collect();
    AoiReport { stats, overlaps }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub report: AoiReport,
    pub eyes: BTreeMap<String, StableEyeDecision>,
    /// Fixations left after filtering, eye selection and clipping.
    pub retained: Vec<Fixation>,
}

/// Full pipeline over many participants. Fixations on a stimulus without a
/// window for that participant are dropped.
pub fn run_pipeline(
    fixations: &[Fixation],
    windows: &[StimulusWindow],
    aois: &[Aoi],
    min_duration_ms: u64,
) -> Result<PipelineOutput, GazeError> {
    for aoi in aois {
        aoi.validate()?;
    }
    let mut window_index: HashMap<(&str, &str), &StimulusWindow> = HashMap::new();
    for w in windows {
        if w.first_interaction_ms.is_some_and(|end| end < w.enter_ms) {
            return Err(GazeError::InvalidWindow {
                participant: w.participant.clone(),
                stimulus: w.stimulus.clone(),
            });
        }
        window_index.insert((&w.participant, &w.stimulus), w);
    }

    let kept = filter_fixations(fixations, min_duration_ms);
    let participants: BTreeSet<&str> = kept.iter().map(|f| f.participant.as_str()).collect();

    let mut eyes = BTreeMap::new();
    let mut retained = Vec::new();
    for p in participants {
        let own: Vec<Fixation> = kept
            .iter()
            .filter(|f| f.participant == p)
            .cloned()
            .collect();
        let decision = select_stable_eye(&own)?;
        let eye = decision.eye;
        eyes.insert(p.to_string(), decision);

        let chosen: Vec<Fixation> = own.into_iter().filter(|f| f.eye == eye).collect();
        let stimuli: BTreeSet<&str> = chosen.iter().map(|f| f.stimulus.as_str()).collect();
        for s in stimuli {
            let Some(window) = window_index.get(&(p, s)) else {
                continue;
            };
            let on_stimulus: Vec<Fixation> =
                chosen.iter().filter(|f| f.stimulus == s).cloned().collect();
            retained.extend(clip_to_window(&on_stimulus, window));
        }
    }

    Ok(PipelineOutput {
        report: aoi_stats(&retained, aois),
        eyes,
        retained,
    })
}

/// Renders AOI statistics as CSV with the columns
/// `aoi,n,total_fixations,mean_fixations,total_dwell_s,mean_dwell_s`.
pub fn stats_to_csv(stats: &[AoiStats]) -> String {
    let mut out = String::from("aoi,n,total_fixations,mean_fixations,total_dwell_s,mean_dwell_s\n");
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{:.2},{:.3},{:.3}\n",
            s.aoi,
            s.n_participants,
            s.total_fixations,
            s.mean_fixations,
            s.total_dwell_s,
            s.mean_dwell_s
        ));
    }
    out
}
