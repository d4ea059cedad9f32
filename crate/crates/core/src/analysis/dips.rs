use serde::{Deserialize, Serialize};

use crate::fitting::{levenberg_marquardt, median};
use crate::spectroscopy::T1Map;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DipConfig {
    /// Minimum prominence in units of the map's log-noise level.
    pub threshold_sigma: f64,
    /// Half-width (grid points) of the running-median baseline.
    pub baseline_half_window: usize,
    /// Half-width (grid points) of the local Lorentzian fit.
    pub fit_half_window: usize,
    /// Noise floor used when the map reports zero noise.
    pub min_sigma: f64,
}

impl Default for DipConfig {
    fn default() -> Self {
        Self {
            threshold_sigma: 4.0,
            baseline_half_window: 15,
            fit_half_window: 4,
            min_sigma: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipDetection {
    pub segment: usize,
    /// Bias index within the segment.
    pub bias_index: usize,
    pub center_ghz: f64,
    /// Added relaxation rate at the dip centre (1/µs).
    pub depth: f64,
    /// Lorentzian half-width (MHz).
    pub width_mhz: f64,
    /// rms residual of the local fit (1/µs).
    pub residual: f64,
    /// Log-rate excess over the local baseline.
    pub prominence: f64,
}

fn running_median(values: &[f64], half: usize) -> Vec<f64> {
    let n = values.len();
    let mut buf = Vec::with_capacity(2 * half + 1);
    (0..n)
        .map(|i| {
            buf.clear();
            buf.extend_from_slice(&values[i.saturating_sub(half)..(i + half + 1).min(n)]);
            median(&mut buf).unwrap_or(0.0)
        })
        .collect()
}

fn lorentzian(p: &[f64], f: f64) -> f64 {
    let w2 = p[3] * p[3];
    p[0] + p[1] * w2 / ((f - p[2]) * (f - p[2]) + w2)
}

/// Report T1 dips whose local prominence exceeds `threshold_sigma` times the
/// map noise level, with sub-grid centres from a local Lorentzian fit.
pub fn detect_dips(map: &T1Map, threshold_sigma: f64, cfg: &DipConfig) -> Vec<DipDetection> {
    let sigma = map.noise_sigma.max(cfg.min_sigma);
    let freqs = &map.freqs_ghz;
    let n = freqs.len();
    if n < 3 {
        return Vec::new();
    }
    let step = freqs[1] - freqs[0];
    let mut out = Vec::new();

    for b in 0..map.n_bias() {
        let rate: Vec<f64> = map.row(b).iter().map(|t| 1.0 / t).collect();
        let log_rate: Vec<f64> = rate.iter().map(|r| r.ln()).collect();
        let base = running_median(&log_rate, cfg.baseline_half_window);
        let excess: Vec<f64> = log_rate.iter().zip(&base).map(|(l, m)| l - m).collect();

        let candidates: Vec<usize> = (1..n - 1)
            .filter(|&i| {
                excess[i] > threshold_sigma * sigma
                    && excess[i] > excess[i - 1]
                    && excess[i] >= excess[i + 1]
            })
            .collect();

        let mut row_dips: Vec<DipDetection> = Vec::with_capacity(candidates.len());
        for (k, &i) in candidates.iter().enumerate() {
            let lo_limit = k
                .checked_sub(1)
                .map_or(0, |p| (candidates[p] + i).div_ceil(2));
            let hi_limit = candidates.get(k + 1).map_or(n - 1, |&q| (i + q) / 2);
            let lo = i.saturating_sub(cfg.fit_half_window).max(lo_limit);
            let hi = (i + cfg.fit_half_window).min(hi_limit).min(n - 1);

            let floor = base[i].exp();
            let (center, depth, width, residual) = fit_local(
                &freqs[lo..=hi],
                &rate[lo..=hi],
                freqs[i],
                rate[i],
                floor,
                step,
            )
            .unwrap_or_else(|| {
                let (l, c, r) = (log_rate[i - 1], log_rate[i], log_rate[i + 1]);
                let curv = l - 2.0 * c + r;
                let shift = if curv < 0.0 { 0.5 * (l - r) / curv } else { 0.0 };
                (freqs[i] + shift.clamp(-0.5, 0.5) * step, rate[i] - floor, step, f64::NAN)
            });

            row_dips.push(DipDetection {
                segment: map.segment,
                bias_index: b,
                center_ghz: center,
                depth,
                width_mhz: width * 1e3,
                residual,
                prominence: excess[i],
            });
        }

        // Two candidates that converge onto the same resonance collapse to the stronger one.
        row_dips.sort_by(|a, b| a.center_ghz.total_cmp(&b.center_ghz));
        let mut merged: Vec<DipDetection> = Vec::with_capacity(row_dips.len());
        for d in row_dips {
            match merged.last_mut() {
                Some(last) if (d.center_ghz - last.center_ghz).abs() < step => {
                    if d.prominence > last.prominence {
                        *last = d;
                    }
                }
                _ => merged.push(d),
            }
        }
        out.extend(merged);
    }
    out
}

/// Fit `b + A w²/((f - f0)² + w²)`; `None` if the fit wanders off the candidate.
fn fit_local(
    freqs: &[f64],
    rate: &[f64],
    f_peak: f64,
    r_peak: f64,
    floor: f64,
    step: f64,
) -> Option<(f64, f64, f64, f64)> {
    if freqs.len() < 4 {
        return None;
    }
    let init = [floor, (r_peak - floor).max(1e-9), f_peak, 0.8 * step];
    let steps = [
        floor.abs().max(1e-9) * 1e-6,
        init[1] * 1e-6,
        step * 1e-5,
        step * 1e-5,
    ];
    let fit = levenberg_marquardt(lorentzian, freqs, rate, &init, &steps, 200);
    let [b, a, f0, w] = [fit.params[0], fit.params[1], fit.params[2], fit.params[3].abs()];
    let ok = a > 0.0
        && b > 0.0
        && w > 1e-3 * step
        && w < 10.0 * step
        && (f0 - f_peak).abs() <= 1.5 * step
        && fit.rss.is_finite();
    ok.then(|| (f0, a, w, (fit.rss / freqs.len() as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectroscopy::SweepChannel;
    use crate::tls::BiasPoint;

    fn map_from(rows: Vec<Vec<f64>>, freqs: Vec<f64>, noise: f64) -> T1Map {
        T1Map {
            segment: 0,
            channel: SweepChannel::Piezo,
            biases: vec![BiasPoint::REFERENCE; rows.len()],
            freqs_ghz: freqs,
            t1_us: rows.into_iter().flatten().collect(),
            noise_sigma: noise,
        }
    }

    fn grid() -> Vec<f64> {
        (0..201).map(|i| 5.0 + 0.002 * i as f64).collect()
    }

    fn synth(centers: &[(f64, f64)]) -> Vec<f64> {
        let w = 0.0016;
        grid()
            .iter()
            .map(|&f| {
                let rate = 0.1
                    + centers
                        .iter()
                        .map(|&(c, a)| a * w * w / ((f - c).powi(2) + w * w))
                        .sum::<f64>();
                1.0 / rate
            })
            .collect()
    }

    #[test]
    fn flat_map_has_no_dips() {
        let m = map_from(vec![vec![10.0; 201]; 3], grid(), 0.0);
        assert!(detect_dips(&m, 4.0, &DipConfig::default()).is_empty());
    }

    #[test]
    fn single_lorentzian_centre_within_tenth_of_step() {
        for offset in [0.0, 0.0003, 0.0007, 0.001, -0.0004] {
            let c = 5.2 + offset;
            let m = map_from(vec![synth(&[(c, 0.3)])], grid(), 0.0);
            let dips = detect_dips(&m, 4.0, &DipConfig::default());
            assert_eq!(dips.len(), 1, "{dips:?}");
            assert!((dips[0].center_ghz - c).abs() < 0.0002, "{:?} vs {c}", dips[0]);
            assert!((dips[0].width_mhz - 1.6).abs() < 0.05);
            assert!((dips[0].depth - 0.3).abs() < 0.01);
        }
    }

    #[test]
    fn two_separated_dips_both_found() {
        // 5 widths apart is 8 MHz; go a bit further to 10 MHz.
        let m = map_from(vec![synth(&[(5.1503, 0.2), (5.1603, 0.5)])], grid(), 0.0);
        let dips = detect_dips(&m, 4.0, &DipConfig::default());
        assert_eq!(dips.len(), 2, "{dips:?}");
        assert!((dips[0].center_ghz - 5.1503).abs() < 0.0005);
        assert!((dips[1].center_ghz - 5.1603).abs() < 0.0005);
    }

    #[test]
    fn detections_respect_threshold() {
        let m = map_from(vec![synth(&[(5.1, 0.02), (5.3, 0.5)])], grid(), 0.1);
        let dips = detect_dips(&m, 4.0, &DipConfig::default());
        assert_eq!(dips.len(), 1);
        assert!(dips.iter().all(|d| d.prominence >= 0.4 && d.width_mhz > 0.0));
    }
}
