//! Density fits of the published device table, collected into one report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::density::{
    fit_area_edge, fit_surface_two_pass, fit_total_edge, junction_density_errorbar,
    volume_density, AreaEdgeFit, Estimate, SurfaceFit, TotalEdgeFit,
};
use crate::error::Result;
use crate::paper::PaperDataset;

/// Observed and model values for one stray-junction qubit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitReportRow {
    pub chip: u32,
    pub qubit: String,
    pub area_um2: f64,
    pub l_open_um: f64,
    pub l_covered_um: f64,
    pub rho_s_per_ghz: f64,
    pub rho_reference_per_ghz: f64,
    pub rho_sjj_per_ghz: f64,
    /// Area/edge model evaluated at this geometry.
    pub rho_sjj_area_edge_per_ghz: f64,
    /// Area-only term ρ_A·A of the same fit.
    pub rho_sjj_area_only_per_ghz: f64,
    pub rho_sjj_total_edge_per_ghz: f64,
    pub volume_density_per_ghz_um3: f64,
    pub errorbar_per_ghz: f64,
    pub rho_surf_per_ghz: f64,
    pub rho_surf_model_per_ghz: f64,
    pub rho_nc_per_ghz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipSurfaceFit {
    pub chip: u32,
    pub fit: SurfaceFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperReport {
    pub barrier_nm: f64,
    pub weighted: bool,
    pub area_edge: AreaEdgeFit,
    pub total_edge: TotalEdgeFit,
    pub surface: Vec<ChipSurfaceFit>,
    pub qubits: Vec<QubitReportRow>,
    pub volume_density_mean_per_ghz_um3: f64,
}

/// Refit every density model to `data` with barrier thickness `d_nm`.
pub fn fit_paper(data: &PaperDataset, d_nm: f64, weighted: bool) -> Result<PaperReport> {
    let points = data.area_edge_points();
    let area_edge = fit_area_edge(&points, d_nm, weighted)?;
    let total_edge = fit_total_edge(&points, d_nm, weighted)?;

    let mut chips: Vec<u32> = data.stray_rows().map(|r| r.chip).collect();
    chips.dedup();
    let surface = chips
        .iter()
        .map(|&chip| {
            Ok(ChipSurfaceFit {
                chip,
                fit: fit_surface_two_pass(&data.surface_points(chip))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let d = d_nm * 1e-3;
    let mut qubits = Vec::new();
    for r in data.stray_rows() {
        let (a, lo, lc) = (
            r.area_um2.unwrap_or(0.0),
            r.l_open_um.unwrap_or(0.0),
            r.l_covered_um.unwrap_or(0.0),
        );
        let rho_sjj = data.rho_sjj(r);
        let sf = surface.iter().find(|s| s.chip == r.chip).map(|s| &s.fit);
        qubits.push(QubitReportRow {
            chip: r.chip,
            qubit: r.qubit.clone(),
            area_um2: a,
            l_open_um: lo,
            l_covered_um: lc,
            rho_s_per_ghz: r.rho_s,
            rho_reference_per_ghz: data.reference(r.chip).map_or(0.0, |x| x.rho_s),
            rho_sjj_per_ghz: rho_sjj,
            rho_sjj_area_edge_per_ghz: area_edge.rho_area.value * a
                + area_edge.rho_open.value * lo * d
                + area_edge.rho_covered.value * lc * d,
            rho_sjj_area_only_per_ghz: area_edge.rho_area.value * a,
            rho_sjj_total_edge_per_ghz: total_edge.rho_area.value * a
                + total_edge.rho_total_edge.value * (lo + lc) * d,
            volume_density_per_ghz_um3: volume_density(rho_sjj, a, d_nm)?,
            errorbar_per_ghz: junction_density_errorbar(r.rho_nc, rho_sjj, r.rho_surf)?,
            rho_surf_per_ghz: r.rho_surf,
            rho_surf_model_per_ghz: sf.map_or(f64::NAN, |f| {
                f.rho_open.value * lo + f.rho_covered.value * lc + f.offset
            }),
            rho_nc_per_ghz: r.rho_nc,
        });
    }
    let volume_density_mean_per_ghz_um3 = qubits
        .iter()
        .map(|q| q.volume_density_per_ghz_um3)
        .sum::<f64>()
        / qubits.len().max(1) as f64;

    Ok(PaperReport {
        barrier_nm: d_nm,
        weighted,
        area_edge,
        total_edge,
        surface,
        qubits,
        volume_density_mean_per_ghz_um3,
    })
}

fn est(e: &Estimate) -> String {
    match e.sigma {
        Some(s) => format!("{:.4} ± {:.4}", e.value, s),
        None => format!("{:.4} ± n/a", e.value),
    }
}

impl PaperReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let w = if self.weighted { "weighted" } else { "unweighted" };
        let _ = writeln!(s, "Junction-defect density fits ({w}, d = {} nm)", self.barrier_nm);
        let _ = writeln!(s);
        let _ = writeln!(s, "area + open/covered edge:");
        let _ = writeln!(s, "  rho_area     {} /(GHz um2)", est(&self.area_edge.rho_area));
        let _ = writeln!(s, "  rho_open     {} /(GHz um2)", est(&self.area_edge.rho_open));
        let _ = writeln!(s, "  rho_covered  {} /(GHz um2)", est(&self.area_edge.rho_covered));
        let _ = writeln!(s, "area + total edge:");
        let _ = writeln!(s, "  rho_area     {} /(GHz um2)", est(&self.total_edge.rho_area));
        let _ = writeln!(s, "  rho_edge     {} /(GHz um2)", est(&self.total_edge.rho_total_edge));
        for c in &self.surface {
            let _ = writeln!(s, "surface defects, chip {} (offset {:.3} /GHz):", c.chip, c.fit.offset);
            let _ = writeln!(s, "  rho_open     {} /(GHz um)", est(&c.fit.rho_open));
            let _ = writeln!(s, "  rho_covered  {} /(GHz um)", est(&c.fit.rho_covered));
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:>5} {:>7} {:>7} {:>8} {:>8} {:>8} {:>9} {:>7}",
            "qubit", "rho_s", "rho_ref", "rho_sjj", "model", "A-only", "rho_V", "err"
        );
        for q in &self.qubits {
            let _ = writeln!(
                s,
                "{:>5} {:>7.1} {:>7.1} {:>8.2} {:>8.2} {:>8.2} {:>9.1} {:>7.2}",
                q.qubit,
                q.rho_s_per_ghz,
                q.rho_reference_per_ghz,
                q.rho_sjj_per_ghz,
                q.rho_sjj_area_edge_per_ghz,
                q.rho_sjj_area_only_per_ghz,
                q.volume_density_per_ghz_um3,
                q.errorbar_per_ghz
            );
        }
        let _ = writeln!(
            s,
            "mean volume density {:.1} /(GHz um3)",
            self.volume_density_mean_per_ghz_um3
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_covers_every_stray_qubit() {
        let r = fit_paper(&PaperDataset::embedded(), 2.0, false).unwrap();
        assert_eq!(r.qubits.len(), 6);
        assert_eq!(r.surface.len(), 2);
        let text = r.to_text();
        assert!(text.contains("rho_area"));
        assert!(text.contains("2.4"));
    }
}
