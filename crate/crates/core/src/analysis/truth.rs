//! Scoring of analysis output against the simulated ground truth.

use serde::{Deserialize, Serialize};

use super::classify::Classification;
use super::linking::DefectTrace;
use crate::spectroscopy::{resonances, SegmentPlan, SweepChannel, Timeline};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassScore {
    /// Traces given this label.
    pub labeled: usize,
    /// Of those, traces matched to a defect of this class.
    pub correct: usize,
    /// Defects of this class that a gate sweep could have caught in the window.
    pub truth_total: usize,
    /// Of those, defects with at least one correctly labeled trace.
    pub truth_found: usize,
}

impl ClassScore {
    /// 1 when nothing was labeled.
    pub fn precision(&self) -> f64 {
        if self.labeled == 0 {
            1.0
        } else {
            self.correct as f64 / self.labeled as f64
        }
    }

    /// 1 when nothing was findable.
    pub fn recall(&self) -> f64 {
        if self.truth_total == 0 {
            1.0
        } else {
            self.truth_found as f64 / self.truth_total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthComparison {
    pub junction: ClassScore,
    pub surface: ClassScore,
    pub unclassified_traces: usize,
    /// Traces not within the match tolerance of any defect.
    pub unmatched_traces: usize,
    /// Matched defect id per trace, in trace order.
    pub matches: Vec<Option<usize>>,
}

/// Match each trace to the defect whose simulated frequency is closest on
/// average over the trace's points (within `match_tol_mhz`), then score labels.
pub fn compare_to_truth(
    traces: &[DefectTrace],
    plan: &SegmentPlan,
    timeline: &Timeline,
    match_tol_mhz: f64,
) -> TruthComparison {
    let columns = plan.columns();
    let offsets = plan.segment_offsets();
    let window = plan.window();
    let defects = &timeline.ensemble.defects;
    // freq[column][defect]
    let freq: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            resonances(timeline, c.bias, c.index)
                .iter()
                .map(|r| r.freq_ghz)
                .collect()
        })
        .collect();

    let matches: Vec<Option<usize>> = traces
        .iter()
        .map(|t| {
            (0..defects.len())
                .map(|k| {
                    let err = t
                        .points
                        .iter()
                        .map(|p| (p.freq_ghz - freq[p.column][k]).abs())
                        .sum::<f64>()
                        / t.points.len().max(1) as f64;
                    (k, err)
                })
                .filter(|&(_, e)| e * 1e3 <= match_tol_mhz)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(k, _)| k)
        })
        .collect();

    let class_of = |k: usize| {
        if defects[k].tls.location.is_junction() {
            Classification::Junction
        } else {
            Classification::Surface
        }
    };

    // A defect is findable when some gate group has it in the window at >= 2 columns.
    let findable: Vec<bool> = (0..defects.len())
        .map(|k| {
            plan.segments.iter().enumerate().any(|(s, seg)| {
                if seg.channel != SweepChannel::Gate || seg.is_empty() {
                    return false;
                }
                let lo = offsets[s].saturating_sub(1);
                let hi = offsets[s] + seg.len() - 1;
                (lo..=hi).filter(|&c| window.contains(freq[c][k])).count() >= 2
            })
        })
        .collect();

    let mut out = TruthComparison {
        junction: ClassScore::default(),
        surface: ClassScore::default(),
        unclassified_traces: 0,
        unmatched_traces: matches.iter().filter(|m| m.is_none()).count(),
        matches: matches.clone(),
    };
    for (class, score) in [
        (Classification::Junction, &mut out.junction),
        (Classification::Surface, &mut out.surface),
    ] {
        for (t, m) in traces.iter().zip(&matches) {
            if t.classification == class {
                score.labeled += 1;
                if m.is_some_and(|k| class_of(k) == class) {
                    score.correct += 1;
                }
            }
        }
        for k in 0..defects.len() {
            if class_of(k) != class || !findable[k] {
                continue;
            }
            score.truth_total += 1;
            if traces
                .iter()
                .zip(&matches)
                .any(|(t, m)| *m == Some(k) && t.classification == class)
            {
                score.truth_found += 1;
            }
        }
    }
    out.unclassified_traces = traces
        .iter()
        .filter(|t| t.classification == Classification::Unclassified)
        .count();
    out
}
