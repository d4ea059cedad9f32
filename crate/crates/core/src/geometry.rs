//! Junction and qubit geometry, planted defect densities and ensemble sampling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectroscopy::resonant_rate;
use crate::tls::{transverse_coupling, LeverArms, Location, TwoLevelSystem};

/// Large-area parasitic junction in series with the qubit's small junctions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrayJunction {
    pub area_um2: f64,
    pub l_open_um: f64,
    pub l_covered_um: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JunctionGeometry {
    /// `None` for reference qubits whose stray junction is shorted.
    pub stray: Option<StrayJunction>,
    pub barrier_thickness_nm: f64,
    /// Small junction width × height (nm).
    pub small_junction_nm: [f64; 2],
}

impl JunctionGeometry {
    pub const DEFAULT_BARRIER_NM: f64 = 2.0;
    pub const SMALL_JUNCTION_NM: [f64; 2] = [260.0, 280.0];

    pub fn with_stray(area_um2: f64, l_open_um: f64, l_covered_um: f64) -> Self {
        Self {
            stray: Some(StrayJunction {
                area_um2,
                l_open_um,
                l_covered_um,
            }),
            barrier_thickness_nm: Self::DEFAULT_BARRIER_NM,
            small_junction_nm: Self::SMALL_JUNCTION_NM,
        }
    }

    pub fn reference() -> Self {
        Self {
            stray: None,
            barrier_thickness_nm: Self::DEFAULT_BARRIER_NM,
            small_junction_nm: Self::SMALL_JUNCTION_NM,
        }
    }

    pub fn barrier_thickness_um(&self) -> f64 {
        self.barrier_thickness_nm * 1e-3
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.barrier_thickness_nm > 0.0) {
            return Err(Error::invalid("barrier_thickness_nm", "must be > 0"));
        }
        if !(self.small_junction_nm[0] > 0.0 && self.small_junction_nm[1] > 0.0) {
            return Err(Error::invalid("small_junction_nm", "both dimensions must be > 0"));
        }
        if let Some(s) = &self.stray {
            for (name, v) in [
                ("area_um2", s.area_um2),
                ("l_open_um", s.l_open_um),
                ("l_covered_um", s.l_covered_um),
            ] {
                if !(v > 0.0) {
                    return Err(Error::invalid(name, format!("must be > 0, got {v}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitParams {
    pub f01_max_ghz: f64,
    pub e_charge_ghz: f64,
    pub e_josephson_ghz: f64,
    pub t1_baseline_us: f64,
    /// rms vacuum field of the plasma mode in the small junction (V/m).
    #[serde(rename = "field_small_junction_v_per_m")]
    pub field_small_junction: f64,
    /// Same, in the stray junction (V/m).
    #[serde(rename = "field_stray_junction_v_per_m")]
    pub field_stray_junction: f64,
    /// Per-qubit scale of the DC-gate coupling, set by its position relative to the gate.
    pub gate_lever_scale: f64,
}

impl QubitParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.f01_max_ghz > 0.0) {
            return Err(Error::invalid("f01_max_ghz", "must be > 0"));
        }
        if !(self.t1_baseline_us > 0.0) {
            return Err(Error::invalid("t1_baseline_us", "must be > 0"));
        }
        if !(self.field_small_junction > self.field_stray_junction) {
            return Err(Error::invalid(
                "field_small_junction",
                "must exceed the stray-junction field",
            ));
        }
        Ok(())
    }
}

/// Planted spectral densities. Junction terms per (GHz·µm²), edge-surface
/// terms per (GHz·µm), background terms per GHz.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedDensities {
    #[serde(rename = "rho_area_per_ghz_um2")]
    pub rho_area: f64,
    /// Per (GHz·µm²) of the strip l_open·d.
    #[serde(rename = "rho_open_edge_per_ghz_um2")]
    pub rho_open_edge: f64,
    #[serde(rename = "rho_covered_edge_per_ghz_um2")]
    pub rho_covered_edge: f64,
    #[serde(rename = "rho_surface_open_per_ghz_um")]
    pub rho_surface_open: f64,
    #[serde(rename = "rho_surface_covered_per_ghz_um")]
    pub rho_surface_covered: f64,
    #[serde(rename = "rho_surface_background_per_ghz")]
    pub rho_surface_background: f64,
    /// Junction defects in the two small qubit junctions (per GHz).
    #[serde(rename = "rho_small_junction_per_ghz")]
    pub rho_small_junction: f64,
}

impl PlantedDensities {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("rho_area_per_ghz_um2", self.rho_area),
            ("rho_open_edge_per_ghz_um2", self.rho_open_edge),
            ("rho_covered_edge_per_ghz_um2", self.rho_covered_edge),
            ("rho_surface_open_per_ghz_um", self.rho_surface_open),
            ("rho_surface_covered_per_ghz_um", self.rho_surface_covered),
            ("rho_surface_background_per_ghz", self.rho_surface_background),
            ("rho_small_junction_per_ghz", self.rho_small_junction),
        ];
        for (name, v) in all {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Where a sampled defect lives. Each region maps onto one [`Location`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    StrayBarrier,
    StrayOpenEdge,
    StrayCoveredEdge,
    SmallJunction,
    SurfaceOpenEdge,
    SurfaceCoveredEdge,
    SurfaceBackground,
}

impl Region {
    pub const ALL: [Region; 7] = [
        Region::StrayBarrier,
        Region::StrayOpenEdge,
        Region::StrayCoveredEdge,
        Region::SmallJunction,
        Region::SurfaceOpenEdge,
        Region::SurfaceCoveredEdge,
        Region::SurfaceBackground,
    ];

    pub fn location(self) -> Location {
        match self {
            Region::StrayBarrier | Region::SmallJunction => Location::BarrierInterior,
            Region::StrayOpenEdge => Location::OpenEdge,
            Region::StrayCoveredEdge => Location::CoveredEdge,
            Region::SurfaceOpenEdge | Region::SurfaceCoveredEdge | Region::SurfaceBackground => {
                Location::ElectrodeSurface
            }
        }
    }

    pub fn is_stray(self) -> bool {
        matches!(
            self,
            Region::StrayBarrier | Region::StrayOpenEdge | Region::StrayCoveredEdge
        )
    }

    /// Expected defects per GHz in this region.
    pub fn spectral_count(self, geom: &JunctionGeometry, rho: &PlantedDensities) -> f64 {
        let d_um = geom.barrier_thickness_um();
        match (self, geom.stray.as_ref()) {
            (Region::StrayBarrier, Some(s)) => rho.rho_area * s.area_um2,
            (Region::StrayOpenEdge, Some(s)) => rho.rho_open_edge * s.l_open_um * d_um,
            (Region::StrayCoveredEdge, Some(s)) => rho.rho_covered_edge * s.l_covered_um * d_um,
            (Region::SurfaceOpenEdge, Some(s)) => rho.rho_surface_open * s.l_open_um,
            (Region::SurfaceCoveredEdge, Some(s)) => rho.rho_surface_covered * s.l_covered_um,
            (Region::SmallJunction, _) => rho.rho_small_junction,
            (Region::SurfaceBackground, _) => rho.rho_surface_background,
            (_, None) => 0.0,
        }
    }

    /// Local bounding box `[x0, x1] × [y0, y1]` (nm) positions are drawn from.
    pub fn bounds(self, geom: &JunctionGeometry) -> Option<[f64; 4]> {
        let d = geom.barrier_thickness_nm;
        let stray = geom.stray.as_ref();
        match self {
            Region::StrayBarrier => {
                let side = stray?.area_um2.sqrt() * 1e3;
                Some([d, side - d, d, side - d])
            }
            Region::StrayOpenEdge => Some([0.0, stray?.l_open_um * 1e3, 0.0, d]),
            Region::StrayCoveredEdge => Some([0.0, stray?.l_covered_um * 1e3, 0.0, d]),
            Region::SmallJunction => {
                Some([0.0, geom.small_junction_nm[0], 0.0, geom.small_junction_nm[1]])
            }
            // Surface defects sit beyond the ~10 nm band next to the open edge
            // that is neither gate-tunable nor qubit-coupled.
            Region::SurfaceOpenEdge => Some([0.0, stray?.l_open_um * 1e3, 10.0, 100.0]),
            Region::SurfaceCoveredEdge => Some([0.0, stray?.l_covered_um * 1e3, 10.0, 100.0]),
            Region::SurfaceBackground => Some([0.0, 1e4, 0.0, 100.0]),
        }
    }
}

/// Ensemble priors. None of these are measured quantities; they are tunable
/// simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsemblePriors {
    pub dipole_min_e_nm: f64,
    pub dipole_max_e_nm: f64,
    /// Δ is log-uniform (P ∝ 1/Δ) over this range, truncated at the transition energy.
    pub delta_min_ghz: f64,
    pub delta_max_ghz: f64,
    /// Lorentzian half-width of each defect resonance (MHz).
    pub linewidth_mhz: f64,
    /// Only defects whose on-resonance rate reaches this multiple of the
    /// baseline rate are planted, so planted densities count detectable defects.
    pub detection_contrast_floor: f64,
    /// rms qubit field seen by electrode-surface defects (V/m).
    pub surface_field_v_per_m: f64,
    pub kappa_piezo_min_ghz_per_v: f64,
    pub kappa_piezo_max_ghz_per_v: f64,
    /// Gate lever of surface defects before the per-qubit scale.
    pub kappa_gate_min_ghz_per_v: f64,
    pub kappa_gate_max_ghz_per_v: f64,
    /// Strain per piezo volt, used only to report γ.
    pub strain_per_volt: f64,
    pub max_draws: usize,
}

impl Default for EnsemblePriors {
    fn default() -> Self {
        Self {
            dipole_min_e_nm: 0.1,
            dipole_max_e_nm: 1.0,
            delta_min_ghz: 0.1,
            delta_max_ghz: 20.0,
            linewidth_mhz: 1.6,
            detection_contrast_floor: 2.0,
            surface_field_v_per_m: 25.0,
            kappa_piezo_min_ghz_per_v: 0.5e-3,
            kappa_piezo_max_ghz_per_v: 2.5e-3,
            kappa_gate_min_ghz_per_v: 2e-3,
            kappa_gate_max_ghz_per_v: 6e-3,
            strain_per_volt: 1e-6,
            max_draws: 100_000,
        }
    }
}

impl EnsemblePriors {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("dipole_e_nm", self.dipole_min_e_nm, self.dipole_max_e_nm),
            ("delta_ghz", self.delta_min_ghz, self.delta_max_ghz),
            (
                "kappa_piezo_ghz_per_v",
                self.kappa_piezo_min_ghz_per_v,
                self.kappa_piezo_max_ghz_per_v,
            ),
            (
                "kappa_gate_ghz_per_v",
                self.kappa_gate_min_ghz_per_v,
                self.kappa_gate_max_ghz_per_v,
            ),
        ];
        for (name, lo, hi) in ranges {
            if !(lo > 0.0 && hi >= lo) {
                return Err(Error::invalid(name, format!("need 0 < min <= max, got [{lo}, {hi}]")));
            }
        }
        if !(self.linewidth_mhz > 0.0) {
            return Err(Error::invalid("linewidth_mhz", "must be > 0"));
        }
        if !(self.detection_contrast_floor >= 0.0) {
            return Err(Error::invalid("detection_contrast_floor", "must be >= 0"));
        }
        Ok(())
    }

    fn coupling_field(&self, region: Region, qubit: &QubitParams) -> f64 {
        match region {
            Region::SmallJunction => qubit.field_small_junction,
            r if r.is_stray() => qubit.field_stray_junction,
            _ => self.surface_field_v_per_m,
        }
    }
}

/// One sampled defect with its bias couplings and qubit-coupling context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Defect {
    pub id: usize,
    pub region: Region,
    pub tls: TwoLevelSystem,
    pub arms: LeverArms,
    pub linewidth_mhz: f64,
    /// Qubit field at the defect's location (V/m).
    pub field_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Ensemble {
    pub defects: Vec<Defect>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.defects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defects.is_empty()
    }

    pub fn count(&self, region: Region) -> usize {
        self.defects.iter().filter(|d| d.region == region).count()
    }

    /// Concatenate two ensembles, renumbering ids of `other`.
    pub fn union(&self, other: &Ensemble) -> Ensemble {
        let mut defects = self.defects.clone();
        let offset = defects.len();
        defects.extend(other.defects.iter().cloned().enumerate().map(|(i, mut d)| {
            d.id = offset + i;
            d
        }));
        Ensemble { defects }
    }
}

/// Frequency band (GHz) defects are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyWindow {
    pub lo_ghz: f64,
    pub hi_ghz: f64,
}

impl FrequencyWindow {
    pub fn new(lo_ghz: f64, hi_ghz: f64) -> Result<Self> {
        if !(hi_ghz > lo_ghz) || !lo_ghz.is_finite() || !hi_ghz.is_finite() {
            return Err(Error::invalid(
                "freq_window",
                format!("empty or non-finite window [{lo_ghz}, {hi_ghz}]"),
            ));
        }
        Ok(Self { lo_ghz, hi_ghz })
    }

    pub fn width(&self) -> f64 {
        self.hi_ghz - self.lo_ghz
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.lo_ghz && f <= self.hi_ghz
    }

    pub fn padded(&self, margin_ghz: f64) -> Self {
        Self {
            lo_ghz: self.lo_ghz - margin_ghz,
            hi_ghz: self.hi_ghz + margin_ghz,
        }
    }
}

/// Expected junction-defect density of the stray junction (per GHz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedDensity {
    pub per_ghz: f64,
    /// False when the geometry has no stray junction; `per_ghz` is then 0.
    pub has_stray: bool,
}

/// ρ_A·A_S + ρ_o·l_op·d + ρ_c·l_cov·d, with d in µm.
pub fn expected_junction_density(
    geom: &JunctionGeometry,
    densities: &PlantedDensities,
) -> ExpectedDensity {
    match geom.stray {
        None => ExpectedDensity {
            per_ghz: 0.0,
            has_stray: false,
        },
        Some(_) => ExpectedDensity {
            per_ghz: [
                Region::StrayBarrier,
                Region::StrayOpenEdge,
                Region::StrayCoveredEdge,
            ]
            .iter()
            .map(|r| r.spectral_count(geom, densities))
            .sum(),
            has_stray: true,
        },
    }
}

/// Draw a defect ensemble: per region a Poisson number of defects with mean
/// density × measure × window width, transition energies uniform in the window.
pub fn sample_ensemble(
    geom: &JunctionGeometry,
    qubit: &QubitParams,
    densities: &PlantedDensities,
    window: FrequencyWindow,
    seed: u64,
    priors: &EnsemblePriors,
) -> Result<Ensemble> {
    FrequencyWindow::new(window.lo_ghz, window.hi_ghz)?;
    geom.validate()?;
    densities.validate()?;
    priors.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut defects = Vec::new();
    for region in Region::ALL {
        let mean = region.spectral_count(geom, densities) * window.width();
        if mean <= 0.0 {
            continue;
        }
        let n = Poisson::new(mean)
            .map_err(|e| Error::invalid("density", e.to_string()))?
            .sample(&mut rng) as usize;
        for _ in 0..n {
            let id = defects.len();
            defects.push(draw_defect(id, region, geom, qubit, window, priors, &mut rng)?);
        }
    }
    Ok(Ensemble { defects })
}

fn draw_defect(
    id: usize,
    region: Region,
    geom: &JunctionGeometry,
    qubit: &QubitParams,
    window: FrequencyWindow,
    priors: &EnsemblePriors,
    rng: &mut ChaCha8Rng,
) -> Result<Defect> {
    let energy = rng.gen_range(window.lo_ghz..window.hi_ghz);
    let field = priors.coupling_field(region, qubit);
    let baseline_rate = 1.0 / qubit.t1_baseline_us;

    let delta_hi = priors.delta_max_ghz.min(energy);
    let delta_lo = priors.delta_min_ghz.min(delta_hi);
    let (ln_lo, ln_hi) = (delta_lo.ln(), delta_hi.ln());

    let location = region.location();
    let mut accepted = None;
    for _ in 0..priors.max_draws {
        let delta = if ln_hi > ln_lo {
            rng.gen_range(ln_lo..ln_hi).exp()
        } else {
            delta_hi
        };
        let eps_mag = (energy * energy - delta * delta).max(0.0).sqrt();
        let eps0 = if rng.gen_bool(0.5) { eps_mag } else { -eps_mag };
        let dipole = rng.gen_range(priors.dipole_min_e_nm..=priors.dipole_max_e_nm);
        let orientation = rng.gen_range(-1.0..=1.0);
        let tls = TwoLevelSystem {
            delta,
            eps0,
            dipole,
            dipole_orientation: orientation,
            deformation: 0.0,
            location,
            position: [0.0, 0.0],
        };
        let g = transverse_coupling(&tls, field);
        if resonant_rate(g, priors.linewidth_mhz) >= priors.detection_contrast_floor * baseline_rate
        {
            accepted = Some(tls);
            break;
        }
    }
    let mut tls = accepted.ok_or_else(|| {
        Error::invalid(
            "detection_contrast_floor",
            format!(
                "no detectable {region:?} defect after {} draws; field {field} V/m is too weak for the dipole prior",
                priors.max_draws
            ),
        )
    })?;

    let sign = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let kappa_piezo = sign(rng)
        * rng.gen_range(priors.kappa_piezo_min_ghz_per_v..=priors.kappa_piezo_max_ghz_per_v);
    let kappa_gate = if location.is_junction() {
        0.0
    } else {
        sign(rng)
            * rng.gen_range(priors.kappa_gate_min_ghz_per_v..=priors.kappa_gate_max_ghz_per_v)
            * qubit.gate_lever_scale
    };
    tls.deformation = kappa_piezo / (2.0 * priors.strain_per_volt);

    let [x0, x1, y0, y1] = region
        .bounds(geom)
        .ok_or_else(|| Error::DegenerateGeometry(format!("{region:?} needs a stray junction")))?;
    tls.position = [rng.gen_range(x0..=x1), rng.gen_range(y0..=y1)];

    Ok(Defect {
        id,
        region,
        tls,
        arms: LeverArms {
            kappa_gate,
            kappa_piezo,
        },
        linewidth_mhz: priors.linewidth_mhz,
        field_rms: field,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn qubit() -> QubitParams {
        QubitParams {
            f01_max_ghz: 6.0,
            e_charge_ghz: 0.2,
            e_josephson_ghz: 24.0,
            t1_baseline_us: 10.0,
            field_small_junction: 2300.0,
            field_stray_junction: 25.0,
            gate_lever_scale: 1.0,
        }
    }

    fn window() -> FrequencyWindow {
        FrequencyWindow::new(5.0, 6.0).unwrap()
    }

    #[test]
    fn zero_densities_give_empty_ensemble() {
        let e = sample_ensemble(
            &JunctionGeometry::with_stray(12.1, 7.1, 10.1),
            &qubit(),
            &PlantedDensities::default(),
            window(),
            7,
            &EnsemblePriors::default(),
        )
        .unwrap();
        assert!(e.is_empty());
    }

    #[test]
    fn empty_window_rejected() {
        assert!(FrequencyWindow::new(5.0, 5.0).is_err());
        let bad = FrequencyWindow {
            lo_ghz: 6.0,
            hi_ghz: 5.0,
        };
        let err = sample_ensemble(
            &JunctionGeometry::reference(),
            &qubit(),
            &PlantedDensities::default(),
            bad,
            0,
            &EnsemblePriors::default(),
        );
        assert!(matches!(err, Err(Error::InvalidParameter { name: "freq_window", .. })));
    }

    #[test]
    fn poisson_mean_for_barrier_region() {
        let geom = JunctionGeometry::with_stray(12.1, 7.1, 10.1);
        let rho = PlantedDensities {
            rho_area: 1.5,
            ..Default::default()
        };
        assert_relative_eq!(
            Region::StrayBarrier.spectral_count(&geom, &rho) * window().width(),
            18.15,
            max_relative = 1e-12
        );
    }

    #[test]
    fn same_seed_same_ensemble() {
        let geom = JunctionGeometry::with_stray(12.1, 7.1, 10.1);
        let rho = PlantedDensities {
            rho_area: 1.5,
            rho_surface_open: 1.0,
            rho_small_junction: 0.8,
            ..Default::default()
        };
        let a = sample_ensemble(&geom, &qubit(), &rho, window(), 42, &EnsemblePriors::default())
            .unwrap();
        let b = sample_ensemble(&geom, &qubit(), &rho, window(), 42, &EnsemblePriors::default())
            .unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        let c = sample_ensemble(&geom, &qubit(), &rho, window(), 43, &EnsemblePriors::default())
            .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn expected_density_examples() {
        let rho = PlantedDensities {
            rho_area: 1.5,
            ..Default::default()
        };
        let e = expected_junction_density(&JunctionGeometry::with_stray(12.1, 7.1, 10.1), &rho);
        assert!(e.has_stray);
        assert_relative_eq!(e.per_ghz, 18.15, max_relative = 1e-12);

        let reference = expected_junction_density(&JunctionGeometry::reference(), &rho);
        assert!(!reference.has_stray);
        assert_eq!(reference.per_ghz, 0.0);

        // Vanishing area leaves only the edge terms: 100·7.1·0.002 + 200·10.1·0.002.
        let edges = PlantedDensities {
            rho_area: 1.5,
            rho_open_edge: 100.0,
            rho_covered_edge: 200.0,
            ..Default::default()
        };
        let tiny = JunctionGeometry::with_stray(1e-300, 7.1, 10.1);
        assert_relative_eq!(
            expected_junction_density(&tiny, &edges).per_ghz,
            100.0 * 7.1 * 0.002 + 200.0 * 10.1 * 0.002,
            max_relative = 1e-12
        );

        // Published fit coefficients on the qubit 1.3 geometry:
        // 1.5·12.7 − 6·7.1·0.002 − 70·19.1·0.002 = 16.2908
        let published = PlantedDensities {
            rho_area: 1.5,
            rho_open_edge: -6.0,
            rho_covered_edge: -70.0,
            ..Default::default()
        };
        assert_relative_eq!(
            expected_junction_density(&JunctionGeometry::with_stray(12.7, 7.1, 19.1), &published)
                .per_ghz,
            16.2908,
            max_relative = 1e-12
        );
    }

    #[test]
    fn defects_stay_in_their_regions_and_junction_defects_are_gate_blind() {
        let geom = JunctionGeometry::with_stray(12.1, 7.1, 10.1);
        let rho = PlantedDensities {
            rho_area: 1.5,
            rho_open_edge: 300.0,
            rho_covered_edge: 300.0,
            rho_surface_open: 1.0,
            rho_surface_covered: 0.5,
            rho_surface_background: 5.0,
            rho_small_junction: 1.0,
        };
        for seed in 0..20 {
            let e = sample_ensemble(&geom, &qubit(), &rho, window(), seed, &EnsemblePriors::default())
                .unwrap();
            for d in &e.defects {
                let [x0, x1, y0, y1] = d.region.bounds(&geom).unwrap();
                let [x, y] = d.tls.position;
                assert!(x >= x0 && x <= x1 && y >= y0 && y <= y1, "{d:?}");
                if d.region == Region::StrayBarrier {
                    let side = 12.1f64.sqrt() * 1e3;
                    assert!(x >= 2.0 && x <= side - 2.0 && y >= 2.0 && y <= side - 2.0);
                }
                if d.tls.location.is_junction() {
                    assert_eq!(d.arms.kappa_gate, 0.0);
                } else {
                    assert_ne!(d.arms.kappa_gate, 0.0);
                }
                assert_ne!(d.arms.kappa_piezo, 0.0);
                assert!(window().contains(d.tls.delta.hypot(d.tls.eps0)));
                d.tls.validate().unwrap();
            }
        }
    }

    #[test]
    fn impossible_detection_floor_is_reported() {
        let priors = EnsemblePriors {
            detection_contrast_floor: 1e12,
            max_draws: 50,
            ..Default::default()
        };
        let rho = PlantedDensities {
            rho_area: 5.0,
            ..Default::default()
        };
        let err = sample_ensemble(
            &JunctionGeometry::with_stray(12.1, 7.1, 10.1),
            &qubit(),
            &rho,
            window(),
            1,
            &priors,
        );
        assert!(err.is_err());
    }
}
