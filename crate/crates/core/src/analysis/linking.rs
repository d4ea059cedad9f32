use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::classify::Classification;
use super::dips::DipDetection;
use crate::fitting::levenberg_marquardt;
use crate::spectroscopy::{Column, SegmentPlan};
use crate::tls::BiasPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkConfig {
    /// Gate on |detection − prediction| for a one-step continuation (MHz).
    pub max_jump_mhz: f64,
    /// Gate when no in-segment velocity is available yet (MHz).
    pub segment_jump_mhz: f64,
    /// A trace is closed after this many columns without a detection.
    pub max_gap: usize,
    /// Traces with fewer detections are discarded as noise.
    pub min_points: usize,
    /// Number of recent in-segment points used for the velocity estimate.
    pub history: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            max_jump_mhz: 3.0,
            segment_jump_mhz: 12.0,
            max_gap: 12,
            min_points: 3,
            history: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Global bias index in execution order.
    pub column: usize,
    pub segment: usize,
    pub bias: BiasPoint,
    pub freq_ghz: f64,
    pub depth: f64,
    pub width_mhz: f64,
}

/// Hyperbola `f = √(Δ² + (ε_i + κ_gate·V_gate + κ_piezo·V_piezo)²)` fitted to a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbolaFit {
    pub delta_ghz: f64,
    pub eps_i_ghz: f64,
    pub kappa_gate: f64,
    pub kappa_piezo: f64,
    pub rms_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectTrace {
    pub id: usize,
    pub points: Vec<TracePoint>,
    pub fit: Option<HyperbolaFit>,
    pub classification: Classification,
    /// Frequency motion across a full gate sweep (MHz), if any gate sweep saw the trace.
    pub gate_motion_mhz: Option<f64>,
}

impl DefectTrace {
    pub fn first_column(&self) -> usize {
        self.points.first().map_or(0, |p| p.column)
    }

    pub fn last_column(&self) -> usize {
        self.points.last().map_or(0, |p| p.column)
    }

    /// Segments with at least one detection, in execution order.
    pub fn segments(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.points.iter().map(|p| p.segment).collect();
        s.dedup();
        s
    }

    /// Whether the trace is taken to be in the window at `column`: anywhere
    /// between its first and last detection, so isolated misses count as present.
    pub fn spans(&self, column: usize) -> bool {
        !self.points.is_empty() && column >= self.first_column() && column <= self.last_column()
    }
}

struct Track {
    points: Vec<TracePoint>,
}

impl Track {
    fn last(&self) -> &TracePoint {
        self.points.last().expect("tracks are never empty")
    }

    /// Predicted frequency (GHz) and gate half-width (GHz) at `col`.
    fn predict(&self, col: &Column, cfg: &LinkConfig) -> (f64, f64) {
        let last = self.last();
        let gap = (col.index - last.column) as f64;
        let recent: Vec<&TracePoint> = self
            .points
            .iter()
            .rev()
            .take_while(|p| p.segment == col.segment)
            .take(cfg.history)
            .collect();
        if recent.len() < 2 {
            return (last.freq_ghz, cfg.segment_jump_mhz * 1e-3);
        }
        // Least-squares line through the recent in-segment points.
        let n = recent.len() as f64;
        let mx = recent.iter().map(|p| p.column as f64).sum::<f64>() / n;
        let my = recent.iter().map(|p| p.freq_ghz).sum::<f64>() / n;
        let sxx: f64 = recent.iter().map(|p| (p.column as f64 - mx).powi(2)).sum();
        let sxy: f64 = recent
            .iter()
            .map(|p| (p.column as f64 - mx) * (p.freq_ghz - my))
            .sum();
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let pred = my + slope * (col.index as f64 - mx);
        let tol = cfg.max_jump_mhz * 1e-3 * (1.0 + 0.5 * (gap - 1.0));
        (pred, tol)
    }
}

/// Link per-segment detections into traces, scanning columns in execution order.
///
/// Each detection joins at most one trace. Competing claims are resolved by
/// the smallest distance to the trace prediction, ties going to the longer trace;
/// unclaimed detections seed new traces.
pub fn link_traces(
    detections: &[Vec<DipDetection>],
    plan: &SegmentPlan,
    cfg: &LinkConfig,
) -> Vec<DefectTrace> {
    let columns = plan.columns();
    let offsets = plan.segment_offsets();
    let mut by_column: Vec<Vec<DipDetection>> = vec![Vec::new(); columns.len()];
    for seg in detections {
        for d in seg {
            if let Some(&off) = offsets.get(d.segment) {
                let c = off + d.bias_index;
                if c < by_column.len() {
                    by_column[c].push(*d);
                }
            }
        }
    }

    let mut active: Vec<Track> = Vec::new();
    let mut finished: Vec<Track> = Vec::new();

    for col in &columns {
        let (still, closed): (Vec<Track>, Vec<Track>) = active
            .into_iter()
            .partition(|t| col.index - t.last().column <= cfg.max_gap);
        finished.extend(closed);
        active = still;

        let dets = &by_column[col.index];
        let predictions: Vec<(f64, f64)> = active.iter().map(|t| t.predict(col, cfg)).collect();
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, &(pred, tol)) in predictions.iter().enumerate() {
            for (di, d) in dets.iter().enumerate() {
                let dist = (d.center_ghz - pred).abs();
                if dist <= tol {
                    pairs.push((dist, ti, di));
                }
            }
        }
        pairs.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then_with(|| active[b.1].points.len().cmp(&active[a.1].points.len()))
        });

        let mut track_used = vec![false; active.len()];
        let mut det_used = vec![false; dets.len()];
        for (_, ti, di) in pairs {
            if track_used[ti] || det_used[di] {
                continue;
            }
            track_used[ti] = true;
            det_used[di] = true;
            active[ti].points.push(point(col, &dets[di]));
        }
        for (di, d) in dets.iter().enumerate() {
            if !det_used[di] {
                active.push(Track {
                    points: vec![point(col, d)],
                });
            }
        }
    }
    finished.extend(active);

    let mut traces: Vec<DefectTrace> = finished
        .into_iter()
        .filter(|t| t.points.len() >= cfg.min_points)
        .map(|t| DefectTrace {
            id: 0,
            fit: fit_hyperbola(&t.points),
            points: t.points,
            classification: Classification::Unclassified,
            gate_motion_mhz: None,
        })
        .collect();
    traces.sort_by(|a, b| {
        a.first_column()
            .cmp(&b.first_column())
            .then(a.points[0].freq_ghz.total_cmp(&b.points[0].freq_ghz))
    });
    for (i, t) in traces.iter_mut().enumerate() {
        t.id = i;
    }
    traces
}

fn point(col: &Column, d: &DipDetection) -> TracePoint {
    TracePoint {
        column: col.index,
        segment: col.segment,
        bias: col.bias,
        freq_ghz: d.center_ghz,
        depth: d.depth,
        width_mhz: d.width_mhz,
    }
}

/// Fit the tunneling-model hyperbola to a trace. Channels that never vary
/// across the trace keep κ = 0. Returns `None` for fewer than three points.
pub fn fit_hyperbola(points: &[TracePoint]) -> Option<HyperbolaFit> {
    if points.len() < 3 {
        return None;
    }
    let vg: Vec<f64> = points.iter().map(|p| p.bias.v_gate).collect();
    let vp: Vec<f64> = points.iter().map(|p| p.bias.v_piezo).collect();
    let f: Vec<f64> = points.iter().map(|p| p.freq_ghz).collect();
    let varies = |v: &[f64]| v.iter().any(|x| (x - v[0]).abs() > 1e-12);
    let (use_g, use_p) = (varies(&vg), varies(&vp));

    // Linear first guess f ≈ a + b_g·V_g + b_p·V_p.
    let mut cols = vec![vec![1.0; points.len()]];
    if use_g {
        cols.push(vg.clone());
    }
    if use_p {
        cols.push(vp.clone());
    }
    let x = DMatrix::from_fn(points.len(), cols.len(), |i, j| cols[j][i]);
    let y = DVector::from_column_slice(&f);
    let coef = (x.transpose() * &x)
        .lu()
        .solve(&(x.transpose() * &y))
        .unwrap_or_else(|| DVector::from_element(cols.len(), 0.0));
    let mut k = 1;
    let b_g = if use_g {
        k += 1;
        coef[k - 1]
    } else {
        0.0
    };
    let b_p = if use_p { coef[k] } else { 0.0 };

    let n = points.len() as f64;
    let f_mean = f.iter().sum::<f64>() / n;
    let vg_mean = vg.iter().sum::<f64>() / n;
    let vp_mean = vp.iter().sum::<f64>() / n;
    let delta0 = 0.3 * f_mean;
    let eps_mean = (f_mean * f_mean - delta0 * delta0).sqrt();
    let kg0 = b_g * f_mean / eps_mean;
    let kp0 = b_p * f_mean / eps_mean;
    let eps0 = eps_mean - kg0 * vg_mean - kp0 * vp_mean;

    let unpack = |p: &[f64]| -> (f64, f64, f64, f64) {
        let mut i = 2;
        let kg = if use_g {
            i += 1;
            p[i - 1]
        } else {
            0.0
        };
        let kp = if use_p { p[i] } else { 0.0 };
        (p[0], p[1], kg, kp)
    };
    let model = |p: &[f64], idx: f64| {
        let i = idx as usize;
        let (d, e, kg, kp) = unpack(p);
        d.hypot(e + kg * vg[i] + kp * vp[i])
    };
    let mut init = vec![delta0, eps0];
    if use_g {
        init.push(kg0);
    }
    if use_p {
        init.push(kp0);
    }
    let xs: Vec<f64> = (0..points.len()).map(|i| i as f64).collect();
    let steps = vec![1e-7; init.len()];
    let fit = levenberg_marquardt(model, &xs, &f, &init, &steps, 200);
    let (d, mut e, mut kg, mut kp) = unpack(&fit.params);
    if e < 0.0 {
        e = -e;
        kg = -kg;
        kp = -kp;
    }
    Some(HyperbolaFit {
        delta_ghz: d.abs(),
        eps_i_ghz: e,
        kappa_gate: kg,
        kappa_piezo: kp,
        rms_mhz: (fit.rss / n).sqrt() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(column: usize, segment: usize, vg: f64, vp: f64, f: f64) -> TracePoint {
        TracePoint {
            column,
            segment,
            bias: BiasPoint::new(vg, vp),
            freq_ghz: f,
            depth: 1.0,
            width_mhz: 1.6,
        }
    }

    #[test]
    fn hyperbola_fit_reproduces_noiseless_trace() {
        let (delta, eps, kp): (f64, f64, f64) = (4.0, 3.0, 0.02);
        let pts: Vec<TracePoint> = (0..40)
            .map(|i| {
                let v = -100.0 + 5.0 * i as f64;
                pt(i, 0, 0.0, v, delta.hypot(eps + kp * v))
            })
            .collect();
        let fit = fit_hyperbola(&pts).unwrap();
        assert!(fit.rms_mhz < 1e-3, "{fit:?}");
        assert!((fit.delta_ghz - delta).abs() < 1e-3, "{fit:?}");
        assert!((fit.kappa_piezo.abs() - kp).abs() < 1e-5);
        assert_eq!(fit.kappa_gate, 0.0);
        assert!(fit_hyperbola(&pts[..2]).is_none());
    }
}
