//! Inverse pipeline: dips in T1 maps → linked traces → junction/surface labels.

mod classify;
mod dips;
mod linking;
mod truth;

pub use classify::{classify_trace, gate_motion_mhz, Classification, ClassifyConfig};
pub use dips::{detect_dips, DipConfig, DipDetection};
pub use linking::{fit_hyperbola, link_traces, DefectTrace, HyperbolaFit, LinkConfig, TracePoint};
pub use truth::{compare_to_truth, ClassScore, TruthComparison};

use serde::{Deserialize, Serialize};

use crate::spectroscopy::{SegmentPlan, T1Map};

/// Settings for the whole detection → linking → classification chain.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub dips: DipConfig,
    pub link: LinkConfig,
    pub classify: ClassifyConfig,
}

/// Run detection on every map, link, and classify.
pub fn analyze_maps(maps: &[T1Map], plan: &SegmentPlan, cfg: &AnalysisConfig) -> Vec<DefectTrace> {
    use rayon::prelude::*;
    let detections: Vec<Vec<DipDetection>> = maps
        .par_iter()
        .map(|m| detect_dips(m, cfg.dips.threshold_sigma, &cfg.dips))
        .collect();
    let mut traces = link_traces(&detections, plan, &cfg.link);
    for t in &mut traces {
        t.gate_motion_mhz = gate_motion_mhz(t, plan);
        t.classification = classify_trace(t, plan, &cfg.classify);
    }
    traces
}
