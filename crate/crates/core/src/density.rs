//! Spectral densities from classified traces, and the linear density models
//! fitted to them.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::{Classification, DefectTrace};
use crate::error::{Error, Result};
use crate::spectroscopy::{SegmentPlan, SweepChannel};

/// Mean spectral densities (per GHz) seen in one segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentDensity {
    pub segment: usize,
    pub channel: SweepChannel,
    pub rho_jj: f64,
    pub rho_surf: f64,
    /// Unclassified traces; always zero on gate-swept segments.
    pub rho_nc: f64,
    pub window_ghz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunDensity {
    pub rho_jj: f64,
    pub rho_surf: f64,
    pub rho_nc: f64,
}

/// Per segment, the number of traces of each class present at a bias point,
/// averaged over the segment's bias points and divided by the window width.
pub fn estimate_segment_densities(
    traces: &[DefectTrace],
    plan: &SegmentPlan,
) -> Result<Vec<SegmentDensity>> {
    let width = plan.window().width();
    if !(width > 0.0) {
        return Err(Error::invalid("window", "zero-width frequency window"));
    }
    let offsets = plan.segment_offsets();
    Ok(plan
        .segments
        .iter()
        .enumerate()
        .map(|(s, seg)| {
            let cols = offsets[s]..offsets[s] + seg.len();
            let mean = |class: Classification| {
                let present: usize = cols
                    .clone()
                    .map(|c| {
                        traces
                            .iter()
                            .filter(|t| t.classification == class && t.spans(c))
                            .count()
                    })
                    .sum();
                present as f64 / seg.len().max(1) as f64 / width
            };
            let rho_nc = match seg.channel {
                SweepChannel::Piezo => mean(Classification::Unclassified),
                SweepChannel::Gate => 0.0,
            };
            SegmentDensity {
                segment: s,
                channel: seg.channel,
                rho_jj: mean(Classification::Junction),
                rho_surf: mean(Classification::Surface),
                rho_nc,
                window_ghz: width,
            }
        })
        .collect())
}

/// Mean over segments.
pub fn run_density(segments: &[SegmentDensity]) -> RunDensity {
    if segments.is_empty() {
        return RunDensity::default();
    }
    let n = segments.len() as f64;
    RunDensity {
        rho_jj: segments.iter().map(|s| s.rho_jj).sum::<f64>() / n,
        rho_surf: segments.iter().map(|s| s.rho_surf).sum::<f64>() / n,
        rho_nc: segments.iter().map(|s| s.rho_nc).sum::<f64>() / n,
    }
}

/// Stray-junction density: qubit density minus the reference qubit's, floored at zero.
pub fn stray_junction_density(rho_s_qubit: f64, rho_s_reference: f64) -> f64 {
    (rho_s_qubit - rho_s_reference).max(0.0)
}

/// Defects per (GHz·µm³) in a barrier of area `area_um2` and thickness `d_nm`.
pub fn volume_density(rho_sjj: f64, area_um2: f64, d_nm: f64) -> Result<f64> {
    if !(area_um2 > 0.0) {
        return Err(Error::invalid("area_um2", "must be > 0"));
    }
    if !(d_nm > 0.0) {
        return Err(Error::invalid("d_nm", "must be > 0"));
    }
    Ok(rho_sjj / (area_um2 * d_nm * 1e-3))
}

/// Unclassified density times the junction share of classified defects.
pub fn junction_density_errorbar(rho_nc: f64, rho_sjj: f64, rho_surf: f64) -> Result<f64> {
    let denom = rho_sjj + rho_surf;
    if denom == 0.0 {
        return Err(Error::invalid("rho_sjj + rho_surf", "must be nonzero"));
    }
    Ok(rho_nc * rho_sjj / denom)
}

/// A fitted coefficient. `sigma` is `None` when the fit has no residual
/// degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: Option<f64>,
}

impl Estimate {
    /// |value| < sigma. An unknown sigma never counts as consistent.
    pub fn consistent_with_zero(&self) -> bool {
        self.sigma.is_some_and(|s| self.value.abs() < s)
    }
}

struct Ols {
    coef: Vec<f64>,
    sigma: Vec<Option<f64>>,
    residuals: Vec<f64>,
}

/// Least squares of `y ≈ X·β` with optional per-point weights 1/σᵢ².
/// Standard errors come from s²(XᵀWX)⁻¹ with s² the weighted residual variance.
fn ols(x: &DMatrix<f64>, y: &DVector<f64>, weights: Option<&[f64]>) -> Result<Ols> {
    let (n, p) = x.shape();
    if n < p {
        return Err(Error::DegenerateGeometry(format!(
            "{n} points cannot determine {p} coefficients"
        )));
    }
    let w = DVector::from_iterator(n, (0..n).map(|i| weights.map_or(1.0, |w| w[i])));
    let sw = w.map(f64::sqrt);
    let xw = DMatrix::from_fn(n, p, |i, j| x[(i, j)] * sw[i]);
    let yw = y.component_mul(&sw);

    // Rank check on column-normalized design so unit choices do not matter.
    let norms: Vec<f64> = (0..p).map(|j| xw.column(j).norm()).collect();
    if norms.iter().any(|&c| c == 0.0) {
        return Err(Error::DegenerateGeometry("design matrix has a zero column".into()));
    }
    let xn = DMatrix::from_fn(n, p, |i, j| xw[(i, j)] / norms[j]);
    let sv = xn.clone().svd(false, false).singular_values;
    let (smin, smax) = sv.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &s| (a.min(s), b.max(s)));
    if smin <= 1e-10 * smax {
        return Err(Error::DegenerateGeometry(format!(
            "design matrix is rank deficient (condition {:.1e})",
            smax / smin
        )));
    }

    let xtx = xn.transpose() * &xn;
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::DegenerateGeometry("normal matrix not invertible".into()))?;
    let beta_n = &inv * (xn.transpose() * &yw);
    let coef: Vec<f64> = (0..p).map(|j| beta_n[j] / norms[j]).collect();
    let fitted = x * DVector::from_column_slice(&coef);
    let residuals: Vec<f64> = (y - fitted).iter().copied().collect();
    let dof = n - p;
    let sigma = if dof == 0 {
        vec![None; p]
    } else {
        let rss: f64 = residuals.iter().zip(w.iter()).map(|(r, wi)| wi * r * r).sum();
        let s2 = rss / dof as f64;
        (0..p)
            .map(|j| Some((s2 * inv[(j, j)]).sqrt() / norms[j]))
            .collect()
    };
    Ok(Ols {
        coef,
        sigma,
        residuals,
    })
}

/// One stray-junction data point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaEdgePoint {
    pub area_um2: f64,
    pub l_open_um: f64,
    pub l_covered_um: f64,
    pub rho_sjj: f64,
    /// Uncertainty of `rho_sjj`, used only by weighted fits. Poisson √ρ (per
    /// GHz of window) when absent.
    #[serde(default)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaEdgeFit {
    /// per (GHz·µm²)
    pub rho_area: Estimate,
    /// per (GHz·µm²) of open-edge strip l_open·d
    pub rho_open: Estimate,
    /// per (GHz·µm²) of covered-edge strip l_covered·d
    pub rho_covered: Estimate,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalEdgeFit {
    pub rho_area: Estimate,
    /// per (GHz·µm²) of the total edge strip (l_open + l_covered)·d
    pub rho_total_edge: Estimate,
    pub residuals: Vec<f64>,
}

fn point_weights(points: &[AreaEdgePoint]) -> Vec<f64> {
    points
        .iter()
        .map(|p| {
            let s = p.sigma.unwrap_or_else(|| p.rho_sjj.max(1.0).sqrt());
            1.0 / (s * s)
        })
        .collect()
}

/// Zero-intercept fit of ρ_sjj = ρ_A·A + ρ_o·l_op·d + ρ_c·l_cov·d, with d in nm.
pub fn fit_area_edge(points: &[AreaEdgePoint], d_nm: f64, weighted: bool) -> Result<AreaEdgeFit> {
    if points.len() < 3 {
        return Err(Error::invalid("points", "need at least 3 points"));
    }
    let d = d_nm * 1e-3;
    let x = DMatrix::from_fn(points.len(), 3, |i, j| match j {
        0 => points[i].area_um2,
        1 => points[i].l_open_um * d,
        _ => points[i].l_covered_um * d,
    });
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.rho_sjj));
    let w = weighted.then(|| point_weights(points));
    let r = ols(&x, &y, w.as_deref())?;
    let est = |j: usize| Estimate {
        value: r.coef[j],
        sigma: r.sigma[j],
    };
    Ok(AreaEdgeFit {
        rho_area: est(0),
        rho_open: est(1),
        rho_covered: est(2),
        residuals: r.residuals,
    })
}

/// Zero-intercept fit of ρ_sjj = ρ_A·A + ρ_tot·(l_op + l_cov)·d, with d in nm.
pub fn fit_total_edge(points: &[AreaEdgePoint], d_nm: f64, weighted: bool) -> Result<TotalEdgeFit> {
    if points.len() < 2 {
        return Err(Error::invalid("points", "need at least 2 points"));
    }
    let d = d_nm * 1e-3;
    let x = DMatrix::from_fn(points.len(), 2, |i, j| match j {
        0 => points[i].area_um2,
        _ => (points[i].l_open_um + points[i].l_covered_um) * d,
    });
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.rho_sjj));
    let w = weighted.then(|| point_weights(points));
    let r = ols(&x, &y, w.as_deref())?;
    Ok(TotalEdgeFit {
        rho_area: Estimate {
            value: r.coef[0],
            sigma: r.sigma[0],
        },
        rho_total_edge: Estimate {
            value: r.coef[1],
            sigma: r.sigma[1],
        },
        residuals: r.residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub l_open_um: f64,
    pub l_covered_um: f64,
    pub rho_surf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceFit {
    /// per (GHz·µm) of open edge
    pub rho_open: Estimate,
    /// per (GHz·µm) of covered edge
    pub rho_covered: Estimate,
    /// per GHz, from the first pass
    pub offset: f64,
    pub residuals: Vec<f64>,
}

/// ρ_surf = ρ_op·l_op + ρ_cov·l_cov + const, fitted twice: the first pass
/// finds the offset, which is subtracted before a zero-offset second pass
/// that supplies the reported slopes and their uncertainties.
pub fn fit_surface_two_pass(points: &[SurfacePoint]) -> Result<SurfaceFit> {
    if points.len() < 3 {
        return Err(Error::invalid("points", "need at least 3 points"));
    }
    let n = points.len();
    let y = DVector::from_iterator(n, points.iter().map(|p| p.rho_surf));
    let x1 = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => points[i].l_open_um,
        1 => points[i].l_covered_um,
        _ => 1.0,
    });
    let offset = ols(&x1, &y, None)?.coef[2];
    let x2 = x1.columns(0, 2).into_owned();
    let y2 = y.add_scalar(-offset);
    let r = ols(&x2, &y2, None)?;
    Ok(SurfaceFit {
        rho_open: Estimate {
            value: r.coef[0],
            sigma: r.sigma[0],
        },
        rho_covered: Estimate {
            value: r.coef[1],
            sigma: r.sigma[1],
        },
        offset,
        residuals: r.residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pts(coef: [f64; 3]) -> Vec<AreaEdgePoint> {
        [
            (12.1, 7.1, 10.1),
            (12.7, 7.1, 19.1),
            (14.0, 15.7, 11.1),
            (13.1, 6.6, 10.8),
            (13.6, 6.6, 18.4),
        ]
        .iter()
        .map(|&(a, lo, lc)| AreaEdgePoint {
            area_um2: a,
            l_open_um: lo,
            l_covered_um: lc,
            rho_sjj: coef[0] * a + coef[1] * lo * 0.002 + coef[2] * lc * 0.002,
            sigma: None,
        })
        .collect()
    }

    #[test]
    fn exact_data_recovered() {
        let fit = fit_area_edge(&pts([1.5, 200.0, -80.0]), 2.0, false).unwrap();
        assert_relative_eq!(fit.rho_area.value, 1.5, max_relative = 1e-9);
        assert_relative_eq!(fit.rho_open.value, 200.0, max_relative = 1e-7);
        assert_relative_eq!(fit.rho_covered.value, -80.0, max_relative = 1e-7);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-9));
    }

    #[test]
    fn rank_deficient_design_rejected() {
        let mut p = pts([1.0, 0.0, 0.0]);
        for q in &mut p {
            q.l_covered_um = 2.0 * q.l_open_um;
        }
        assert!(matches!(
            fit_area_edge(&p, 2.0, false),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn surface_fit_exact_linear() {
        let p: Vec<SurfacePoint> = [(7.1, 10.1), (7.1, 19.1), (15.7, 11.1)]
            .iter()
            .map(|&(lo, lc)| SurfacePoint {
                l_open_um: lo,
                l_covered_um: lc,
                rho_surf: 2.0 * lo - 0.5 * lc + 3.0,
            })
            .collect();
        let fit = fit_surface_two_pass(&p).unwrap();
        assert_relative_eq!(fit.offset, 3.0, epsilon = 1e-9);
        assert_relative_eq!(fit.rho_open.value, 2.0, epsilon = 1e-9);
        assert_relative_eq!(fit.rho_covered.value, -0.5, epsilon = 1e-9);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-9));
        assert!(fit_surface_two_pass(&p[..2]).is_err());
    }

    #[test]
    fn small_helpers() {
        assert_relative_eq!(stray_junction_density(19.6, 0.8), 18.8, epsilon = 1e-12);
        assert_relative_eq!(stray_junction_density(25.4, 2.3), 23.1, epsilon = 1e-12);
        assert_eq!(stray_junction_density(0.8, 0.8), 0.0);
        assert_relative_eq!(volume_density(18.8, 12.1, 2.0).unwrap(), 18.8 / 0.0242);
        assert_eq!(volume_density(0.0, 12.1, 2.0).unwrap(), 0.0);
        assert!(volume_density(1.0, 0.0, 2.0).is_err());
        assert_eq!(junction_density_errorbar(0.0, 18.8, 10.0).unwrap(), 0.0);
        assert_relative_eq!(junction_density_errorbar(3.5, 18.8, 0.0).unwrap(), 3.5, max_relative = 1e-15);
        assert!(junction_density_errorbar(1.0, 0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn fit_is_linear_in_data(c in 0.1f64..10.0, a in 0.5f64..3.0, o in -500.0f64..500.0) {
            let base = pts([a, o, 0.0]);
            let mut noisy = base.clone();
            for (i, q) in noisy.iter_mut().enumerate() {
                q.rho_sjj += [0.3, -0.2, 0.5, -0.1, 0.05][i];
            }
            let scaled: Vec<_> = noisy.iter().map(|q| AreaEdgePoint { rho_sjj: c * q.rho_sjj, ..*q }).collect();
            let f1 = fit_area_edge(&noisy, 2.0, false).unwrap();
            let f2 = fit_area_edge(&scaled, 2.0, false).unwrap();
            prop_assert!((f2.rho_area.value - c * f1.rho_area.value).abs() < 1e-8 * (1.0 + f2.rho_area.value.abs()));
            prop_assert!((f2.rho_open.value - c * f1.rho_open.value).abs() < 1e-6 * (1.0 + f2.rho_open.value.abs()));
            prop_assert!((f2.rho_area.sigma.unwrap() - c * f1.rho_area.sigma.unwrap()).abs() < 1e-8 * (1.0 + f2.rho_area.sigma.unwrap()));
        }

        #[test]
        fn exact_generation_recovered(a in 0.1f64..5.0, o in -1e3f64..1e3, cv in -1e3f64..1e3) {
            let fit = fit_area_edge(&pts([a, o, cv]), 2.0, false).unwrap();
            prop_assert!((fit.rho_area.value - a).abs() < 1e-8);
            prop_assert!((fit.rho_open.value - o).abs() < 1e-5);
            prop_assert!((fit.rho_covered.value - cv).abs() < 1e-5);
        }
    }
}
