#![allow(dead_code)]

use std::path::PathBuf;

use jjdefects_core::config::ChipsFile;
use jjdefects_core::geometry::{Defect, Ensemble, QubitParams, Region};
use jjdefects_core::tls::{dipole_for_one_mhz, LeverArms, TwoLevelSystem};

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn chips() -> ChipsFile {
    ChipsFile::load(&repo_root().join("chips.cfg")).unwrap()
}

pub fn qubit(id: &str) -> QubitParams {
    chips().qubit(id).unwrap().qubit_params()
}

/// Alternating junction / surface defects, 120 MHz apart at the reference
/// bias, strongly coupled, with modest lever arms so no two ever meet.
pub fn separated_ensemble(n: usize, gate_lever: f64) -> Ensemble {
    let defects = (0..n)
        .map(|i| {
            let f = 4.88 + 0.12 * i as f64;
            let junction = i % 2 == 0;
            let (region, field) = if junction {
                (Region::StrayBarrier, 2300.0)
            } else {
                (Region::SurfaceBackground, 25.0)
            };
            Defect {
                id: i,
                region,
                tls: TwoLevelSystem {
                    delta: 0.6 * f,
                    eps0: 0.8 * f,
                    dipole: 2.0 * dipole_for_one_mhz(field),
                    dipole_orientation: 1.0,
                    deformation: 1.0,
                    location: region.location(),
                    position: [0.0, 0.0],
                },
                arms: LeverArms {
                    kappa_gate: if junction { 0.0 } else { gate_lever },
                    kappa_piezo: if i % 4 < 2 { 0.4e-3 } else { -0.4e-3 },
                },
                linewidth_mhz: 1.6,
                field_rms: field,
            }
        })
        .collect();
    Ensemble { defects }
}

use jjdefects_core::analysis::{analyze_maps, compare_to_truth, AnalysisConfig, Classification, TruthComparison};
use jjdefects_core::geometry::{sample_ensemble, EnsemblePriors, PlantedDensities};
use jjdefects_core::pipeline::RunSpec;
use jjdefects_core::spectroscopy::{run_swap_spectroscopy, AlternatingPlan, NoiseModel, Timeline};

/// Noiseless run of [`separated_ensemble`] on qubit 1.4 with the default plan.
pub fn separated_comparison(n: usize, gate_lever: f64) -> TruthComparison {
    let q = qubit("1.4");
    let timeline = Timeline::from(separated_ensemble(n, gate_lever));
    let plan = AlternatingPlan::default().build().unwrap();
    let maps = run_swap_spectroscopy(&plan, &timeline, &q, NoiseModel::None, 0).unwrap();
    let traces = analyze_maps(&maps, &plan, &AnalysisConfig::default());
    compare_to_truth(&traces, &plan, &timeline, 3.0)
}

/// Unclassified share of all traces for a piezo step (segment width / points)
/// on one ensemble, sampled once over the band of the widest plan.
pub fn dead_fraction(piezo_step_v: f64, widest_step_v: f64, seed: u64) -> f64 {
    let chips = chips();
    let rec = chips.qubit("1.4").unwrap();
    let widest = AlternatingPlan {
        piezo_step_v: widest_step_v,
        ..AlternatingPlan::default()
    };
    let densities = PlantedDensities {
        rho_area: 1.5,
        rho_surface_open: 0.5,
        rho_surface_covered: 0.1,
        rho_surface_background: 3.0,
        rho_small_junction: 0.8,
        ..PlantedDensities::default()
    };
    let spec = RunSpec::for_qubit(
        rec,
        densities,
        EnsemblePriors::default(),
        widest,
        NoiseModel::default(),
        seed,
        seed + 1,
    )
    .unwrap();
    let window = spec.ensemble_window(&widest.build().unwrap());
    let ensemble =
        sample_ensemble(&spec.geometry, &spec.qubit, &densities, window, seed, &spec.priors).unwrap();
    let timeline = Timeline::from(ensemble);

    let plan = AlternatingPlan {
        piezo_step_v,
        ..AlternatingPlan::default()
    }
    .build()
    .unwrap();
    let maps = run_swap_spectroscopy(&plan, &timeline, &spec.qubit, spec.noise, spec.noise_seed).unwrap();
    let traces = analyze_maps(&maps, &plan, &AnalysisConfig::default());
    let dead = traces
        .iter()
        .filter(|t| t.classification == Classification::Unclassified)
        .count();
    dead as f64 / traces.len().max(1) as f64
}
