use serde::{Deserialize, Serialize};

use super::linking::DefectTrace;
use crate::fitting::median;
use crate::spectroscopy::{SegmentPlan, SweepChannel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Junction,
    Surface,
    Unclassified,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Junction => "junction",
            Classification::Surface => "surface",
            Classification::Unclassified => "unclassified",
        }
    }
}

impl std::str::FromStr for Classification {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "junction" => Ok(Classification::Junction),
            "surface" => Ok(Classification::Surface),
            "unclassified" => Ok(Classification::Unclassified),
            other => Err(format!("unknown classification '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    /// Motion across a full gate sweep below which a trace counts as flat (MHz).
    /// Defaults to one frequency-grid step.
    pub flatness_mhz: Option<f64>,
}

/// Frequency motion (MHz) of the trace across a full gate sweep, or `None`
/// when no gate sweep caught at least two of its points.
///
/// Each gate sweep is judged together with the column just before it, so the
/// gate group covers the full gate range. The slope is the median of all
/// pairwise slopes taken within a group, pooled over groups (Theil–Sen), so a
/// few misassigned dips can't fake a slope. Motion is that slope times the
/// widest group range.
pub fn gate_motion_mhz(trace: &DefectTrace, plan: &SegmentPlan) -> Option<f64> {
    let offsets = plan.segment_offsets();
    let columns = plan.columns();
    let mut slopes = Vec::new();
    let mut range: f64 = 0.0;
    for (s, seg) in plan.segments.iter().enumerate() {
        if seg.channel != SweepChannel::Gate || seg.is_empty() {
            continue;
        }
        let hi = offsets[s] + seg.len() - 1;
        let lo = offsets[s].saturating_sub(1);
        let pts: Vec<_> = trace
            .points
            .iter()
            .filter(|p| p.column >= lo && p.column <= hi)
            .collect();
        let before = slopes.len();
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                let dv = b.bias.v_gate - a.bias.v_gate;
                if dv.abs() > 1e-12 {
                    slopes.push((b.freq_ghz - a.freq_ghz) / dv);
                }
            }
        }
        if slopes.len() > before {
            let (min, max) = columns[lo..=hi]
                .iter()
                .map(|c| c.bias.v_gate)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            range = range.max(max - min);
        }
    }
    median(&mut slopes).map(|k| k.abs() * range * 1e3)
}

/// Junction if every judged gate sweep leaves the trace flat, Surface if any
/// moves it by at least the flatness threshold, Unclassified if no gate sweep
/// saw it.
pub fn classify_trace(trace: &DefectTrace, plan: &SegmentPlan, cfg: &ClassifyConfig) -> Classification {
    let threshold = cfg.flatness_mhz.unwrap_or(plan.freq.step_ghz * 1e3);
    match gate_motion_mhz(trace, plan) {
        None => Classification::Unclassified,
        Some(m) if m < threshold => Classification::Junction,
        Some(_) => Classification::Surface,
    }
}
