//! Published device table for the two measured chips, and the derived inputs
//! of the density fits.

use serde::{Deserialize, Serialize};

use crate::density::{stray_junction_density, AreaEdgePoint, SurfacePoint};

/// One qubit row. Reference qubits (stray junction shorted) have no geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRow {
    pub chip: u32,
    pub qubit: String,
    pub area_um2: Option<f64>,
    pub l_open_um: Option<f64>,
    pub l_covered_um: Option<f64>,
    /// Junction-defect density (per GHz).
    pub rho_s: f64,
    /// Surface-defect density (per GHz).
    pub rho_surf: f64,
    /// Unclassified-defect density (per GHz).
    pub rho_nc: f64,
    pub f01_ghz: f64,
    pub t1_us: f64,
}

impl PaperRow {
    pub fn is_reference(&self) -> bool {
        self.area_um2.is_none()
    }
}

pub const E_CHARGE_GHZ: f64 = 0.2;
pub const FIELD_SMALL_JUNCTION_V_PER_M: f64 = 2300.0;
pub const FIELD_STRAY_JUNCTION_V_PER_M: f64 = 25.0;
pub const BARRIER_NM: f64 = 2.0;

pub fn e_josephson_ghz(chip: u32) -> Option<f64> {
    match chip {
        1 => Some(24.0),
        2 => Some(21.0),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperDataset {
    pub rows: Vec<PaperRow>,
}

impl PaperDataset {
    pub fn embedded() -> Self {
        #[rustfmt::skip]
        let raw: [(u32, &str, Option<(f64, f64, f64)>, f64, f64, f64, f64, f64); 8] = [
            (1, "1.1", None,                     0.8, 28.8, 7.7, 6.0, 10.0),
            (1, "1.2", Some((12.1, 7.1, 10.1)), 19.6, 10.0, 3.5, 6.0, 10.0),
            (1, "1.3", Some((12.7, 7.1, 19.1)), 19.6, 10.2, 3.0, 6.2, 6.0),
            (1, "1.4", Some((14.0, 15.7, 11.1)), 22.5, 24.7, 9.7, 6.2, 8.0),
            (2, "2.1", None,                     2.3, 67.7, 7.1, 5.9, 17.0),
            (2, "2.2", Some((13.1, 6.6, 10.8)), 22.4, 22.4, 3.3, 5.8, 11.0),
            (2, "2.3", Some((13.6, 6.6, 18.4)), 23.8, 23.8, 3.9, 5.7, 12.0),
            (2, "2.4", Some((14.3, 17.2, 11.7)), 25.4, 64.9, 7.1, 5.9, 8.0),
        ];
        let rows = raw
            .iter()
            .map(|&(chip, q, geom, rho_s, rho_surf, rho_nc, f01, t1)| PaperRow {
                chip,
                qubit: q.to_string(),
                area_um2: geom.map(|g| g.0),
                l_open_um: geom.map(|g| g.1),
                l_covered_um: geom.map(|g| g.2),
                rho_s,
                rho_surf,
                rho_nc,
                f01_ghz: f01,
                t1_us: t1,
            })
            .collect();
        PaperDataset { rows }
    }

    pub fn reference(&self, chip: u32) -> Option<&PaperRow> {
        self.rows.iter().find(|r| r.chip == chip && r.is_reference())
    }

    pub fn stray_rows(&self) -> impl Iterator<Item = &PaperRow> {
        self.rows.iter().filter(|r| !r.is_reference())
    }

    /// Stray-junction density of a row: its ρ_s minus its chip's reference ρ_s.
    pub fn rho_sjj(&self, row: &PaperRow) -> f64 {
        let reference = self.reference(row.chip).map_or(0.0, |r| r.rho_s);
        stray_junction_density(row.rho_s, reference)
    }

    /// Inputs of the area/edge fit, both chips merged.
    pub fn area_edge_points(&self) -> Vec<AreaEdgePoint> {
        self.stray_rows()
            .map(|r| AreaEdgePoint {
                area_um2: r.area_um2.unwrap_or(0.0),
                l_open_um: r.l_open_um.unwrap_or(0.0),
                l_covered_um: r.l_covered_um.unwrap_or(0.0),
                rho_sjj: self.rho_sjj(r),
                sigma: None,
            })
            .collect()
    }

    /// Inputs of the surface fit for one chip.
    pub fn surface_points(&self, chip: u32) -> Vec<SurfacePoint> {
        self.stray_rows()
            .filter(|r| r.chip == chip)
            .map(|r| SurfacePoint {
                l_open_um: r.l_open_um.unwrap_or(0.0),
                l_covered_um: r.l_covered_um.unwrap_or(0.0),
                rho_surf: r.rho_surf,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_subtraction() {
        let p = PaperDataset::embedded();
        let rho: Vec<f64> = p.area_edge_points().iter().map(|q| q.rho_sjj).collect();
        for (got, want) in rho.iter().zip([18.8, 18.8, 21.7, 20.1, 21.5, 23.1]) {
            assert_relative_eq!(*got, want, epsilon = 1e-9);
        }
        assert_eq!(p.surface_points(1).len(), 3);
        assert_eq!(p.surface_points(2).len(), 3);
    }
}
