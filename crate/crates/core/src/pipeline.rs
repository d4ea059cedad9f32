//! End-to-end runs: sample → simulate → analyze → densities, and the
//! planted-density round trip over many seeds.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{analyze_maps, AnalysisConfig, DefectTrace};
use crate::config::{ChipsFile, QubitRecord, SimulationConfig};
use crate::density::{
    estimate_segment_densities, fit_area_edge, run_density, stray_junction_density, AreaEdgeFit,
    AreaEdgePoint, RunDensity, SegmentDensity,
};
use crate::error::{Error, Result};
use crate::geometry::{
    sample_ensemble, EnsemblePriors, FrequencyWindow, JunctionGeometry, PlantedDensities,
    QubitParams,
};
use crate::spectroscopy::{
    run_swap_spectroscopy, AlternatingPlan, NoiseModel, SegmentPlan, T1Map, Timeline,
};

/// Everything a simulation depends on. Serialized into the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub chip: u32,
    pub qubit_id: String,
    pub qubit: QubitParams,
    pub geometry: JunctionGeometry,
    pub densities: PlantedDensities,
    pub priors: EnsemblePriors,
    pub plan: AlternatingPlan,
    pub noise: NoiseModel,
    pub seed: u64,
    pub noise_seed: u64,
}

impl RunSpec {
    pub fn from_config(cfg: &SimulationConfig, chips: &ChipsFile) -> Result<Self> {
        let rec = chips.qubit(&cfg.qubit)?;
        Self::for_qubit(
            rec,
            cfg.densities,
            cfg.priors,
            cfg.plan,
            cfg.noise,
            cfg.seed,
            cfg.noise_seed(),
        )
    }

    pub fn for_qubit(
        rec: &QubitRecord,
        densities: PlantedDensities,
        priors: EnsemblePriors,
        plan: AlternatingPlan,
        noise: NoiseModel,
        seed: u64,
        noise_seed: u64,
    ) -> Result<Self> {
        Ok(RunSpec {
            chip: rec.chip,
            qubit_id: rec.id.clone(),
            qubit: rec.qubit_params(),
            geometry: rec.geometry()?,
            densities,
            priors,
            plan,
            noise,
            seed,
            noise_seed,
        })
    }

    /// sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("run spec serializes");
        hex::encode(Sha256::digest(json))
    }

    /// Sampling band: the plan window widened by the largest bias-induced
    /// shift, so defects that sweep in from outside are present.
    pub fn ensemble_window(&self, plan: &SegmentPlan) -> FrequencyWindow {
        let max = plan.max_bias();
        let shift = self.priors.kappa_piezo_max_ghz_per_v * max.v_piezo.abs()
            + self.priors.kappa_gate_max_ghz_per_v * self.qubit.gate_lever_scale * max.v_gate.abs();
        plan.window().padded(shift)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedRun {
    pub spec: RunSpec,
    pub plan: SegmentPlan,
    pub timeline: Timeline,
    pub maps: Vec<T1Map>,
}

pub fn simulate(spec: &RunSpec) -> Result<SimulatedRun> {
    let plan = spec.plan.build()?;
    let window = spec.ensemble_window(&plan);
    let ensemble = sample_ensemble(
        &spec.geometry,
        &spec.qubit,
        &spec.densities,
        window,
        spec.seed,
        &spec.priors,
    )?;
    let timeline = Timeline::from(ensemble);
    let maps = run_swap_spectroscopy(&plan, &timeline, &spec.qubit, spec.noise, spec.noise_seed)?;
    Ok(SimulatedRun {
        spec: spec.clone(),
        plan,
        timeline,
        maps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub traces: Vec<DefectTrace>,
    pub segments: Vec<SegmentDensity>,
    pub run: RunDensity,
}

pub fn analyze(maps: &[T1Map], plan: &SegmentPlan, cfg: &AnalysisConfig) -> Result<Analysis> {
    if maps.len() != plan.segments.len() {
        return Err(Error::invalid(
            "maps",
            format!("{} maps for {} planned segments", maps.len(), plan.segments.len()),
        ));
    }
    let traces = analyze_maps(maps, plan, cfg);
    let segments = estimate_segment_densities(&traces, plan)?;
    let run = run_density(&segments);
    Ok(Analysis {
        traces,
        segments,
        run,
    })
}

/// Settings of the planted-density round trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundTripConfig {
    pub seeds: usize,
    pub first_seed: u64,
    /// Densities planted on every qubit, except the small-junction term.
    pub densities: PlantedDensities,
    /// Small-junction density per GHz, keyed by chip number.
    pub small_junction_per_ghz: BTreeMap<String, f64>,
    pub priors: EnsemblePriors,
    pub plan: AlternatingPlan,
    pub noise: NoiseModel,
    pub analysis: AnalysisConfig,
    pub barrier_nm: f64,
    pub weighted: bool,
}

impl Default for RoundTripConfig {
    fn default() -> Self {
        Self {
            seeds: 20,
            first_seed: 1,
            densities: PlantedDensities {
                rho_area: 1.5,
                rho_open_edge: 0.0,
                rho_covered_edge: 0.0,
                rho_surface_open: 0.5,
                rho_surface_covered: 0.1,
                rho_surface_background: 3.0,
                rho_small_junction: 0.0,
            },
            small_junction_per_ghz: BTreeMap::from([("1".to_string(), 0.8), ("2".to_string(), 2.3)]),
            priors: EnsemblePriors::default(),
            plan: AlternatingPlan::default(),
            noise: NoiseModel::default(),
            analysis: AnalysisConfig::default(),
            barrier_nm: 2.0,
            weighted: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitRoundTrip {
    pub qubit: String,
    pub chip: u32,
    pub rho_jj: f64,
    pub rho_surf: f64,
    pub rho_nc: f64,
    pub n_traces: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRoundTrip {
    pub seed: u64,
    pub qubits: Vec<QubitRoundTrip>,
    pub fit: AreaEdgeFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub mean: f64,
    /// Standard error of the seed mean from the seed-to-seed scatter.
    pub se_empirical: f64,
    /// Mean of the per-seed fit uncertainties.
    pub sigma_fit_mean: f64,
    /// √(se_empirical² + sigma_fit_mean²/n).
    pub se_combined: f64,
}

impl CoefficientSummary {
    fn from_samples(values: &[f64], sigmas: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let se_empirical = (var / n).sqrt();
        let sigma_fit_mean = if sigmas.is_empty() {
            0.0
        } else {
            sigmas.iter().sum::<f64>() / sigmas.len() as f64
        };
        Self {
            mean,
            se_empirical,
            sigma_fit_mean,
            se_combined: (se_empirical.powi(2) + sigma_fit_mean.powi(2) / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTripSummary {
    pub planted_rho_area: f64,
    pub seeds: Vec<SeedRoundTrip>,
    pub rho_area: CoefficientSummary,
    pub rho_open: CoefficientSummary,
    pub rho_covered: CoefficientSummary,
    pub elapsed_s: f64,
}

impl RoundTripSummary {
    /// Mean ρ_A within 2 combined standard errors of the planted value.
    pub fn area_recovered(&self) -> bool {
        (self.rho_area.mean - self.planted_rho_area).abs() <= 2.0 * self.rho_area.se_combined
    }

    /// Edge means not larger than the typical per-seed fit uncertainty.
    pub fn edges_consistent_with_zero(&self) -> bool {
        [&self.rho_open, &self.rho_covered]
            .iter()
            .all(|c| c.mean.abs() < c.sigma_fit_mean)
    }
}

/// Plant densities on every qubit of `chips`, simulate and analyze each, and
/// refit the area/edge model per seed.
pub fn roundtrip(chips: &ChipsFile, cfg: &RoundTripConfig) -> Result<RoundTripSummary> {
    let start = std::time::Instant::now();
    if cfg.seeds == 0 {
        return Err(Error::invalid("seeds", "must be >= 1"));
    }
    let jobs: Vec<(u64, &QubitRecord)> = (0..cfg.seeds as u64)
        .flat_map(|s| chips.qubits.iter().map(move |q| (cfg.first_seed + s, q)))
        .collect();

    let results: Vec<(u64, QubitRoundTrip)> = jobs
        .par_iter()
        .map(|&(seed, rec)| -> Result<_> {
            let mut densities = cfg.densities;
            densities.rho_small_junction =
                cfg.small_junction_per_ghz.get(&rec.chip.to_string()).copied().unwrap_or(0.0);
            // Different qubits on one seed get independent ensembles.
            let qseed = seed
                .wrapping_mul(1_000_003)
                .wrapping_add(chips.qubits.iter().position(|q| q.id == rec.id).unwrap_or(0) as u64);
            let spec = RunSpec::for_qubit(
                rec,
                densities,
                cfg.priors,
                cfg.plan,
                cfg.noise,
                qseed,
                qseed ^ 0x5DEE_CE66_D1CE_B00C,
            )?;
            let run = simulate(&spec)?;
            let a = analyze(&run.maps, &run.plan, &cfg.analysis)?;
            Ok((
                seed,
                QubitRoundTrip {
                    qubit: rec.id.clone(),
                    chip: rec.chip,
                    rho_jj: a.run.rho_jj,
                    rho_surf: a.run.rho_surf,
                    rho_nc: a.run.rho_nc,
                    n_traces: a.traces.len(),
                },
            ))
        })
        .collect::<Result<_>>()?;

    let mut seeds = Vec::with_capacity(cfg.seeds);
    for s in 0..cfg.seeds as u64 {
        let seed = cfg.first_seed + s;
        let qubits: Vec<QubitRoundTrip> = results
            .iter()
            .filter(|(sd, _)| *sd == seed)
            .map(|(_, q)| q.clone())
            .collect();
        let points = area_edge_points(chips, &qubits)?;
        let fit = fit_area_edge(&points, cfg.barrier_nm, cfg.weighted)?;
        seeds.push(SeedRoundTrip { seed, qubits, fit });
    }

    let pick = |f: fn(&AreaEdgeFit) -> &crate::density::Estimate| {
        let values: Vec<f64> = seeds.iter().map(|s| f(&s.fit).value).collect();
        let sigmas: Vec<f64> = seeds.iter().filter_map(|s| f(&s.fit).sigma).collect();
        CoefficientSummary::from_samples(&values, &sigmas)
    };
    Ok(RoundTripSummary {
        planted_rho_area: cfg.densities.rho_area,
        rho_area: pick(|f| &f.rho_area),
        rho_open: pick(|f| &f.rho_open),
        rho_covered: pick(|f| &f.rho_covered),
        seeds,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

/// Reference-subtracted ρ_SJJ per stray-junction qubit of one seed.
fn area_edge_points(chips: &ChipsFile, qubits: &[QubitRoundTrip]) -> Result<Vec<AreaEdgePoint>> {
    let mut points = Vec::new();
    for q in qubits {
        let rec = chips.qubit(&q.qubit)?;
        let (Some(a), Some(o), Some(c)) = (rec.area_um2, rec.l_open_um, rec.l_covered_um) else {
            continue;
        };
        let reference = chips
            .reference(rec.chip)
            .and_then(|r| qubits.iter().find(|x| x.qubit == r.id))
            .map_or(0.0, |r| r.rho_jj);
        points.push(AreaEdgePoint {
            area_um2: a,
            l_open_um: o,
            l_covered_um: c,
            rho_sjj: stray_junction_density(q.rho_jj, reference),
            sigma: None,
        });
    }
    Ok(points)
}
