use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde_json::json;

use jjdefects_core::analysis::{compare_to_truth, AnalysisConfig, Classification};
use jjdefects_core::config::{parse_toml, ChipsFile, SimulationConfig};
use jjdefects_core::field::{parallel_plate_check, screening_study, ScreeningConfig, SolverOptions};
use jjdefects_core::io::{self, FieldGrid};
use jjdefects_core::paper::PaperDataset;
use jjdefects_core::pipeline::{analyze, roundtrip, simulate, RoundTripConfig, RunSpec};
use jjdefects_core::report::fit_paper;
use jjdefects_core::{Error, Result};

#[derive(Parser)]
#[command(name = "jjdefects", version, about = "TLS defect spectroscopy: simulate, analyze, fit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a defect ensemble and simulate swap-spectroscopy T1 maps.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "dataset")]
        out: PathBuf,
    },
    /// Detect, link and classify defect traces in a dataset.
    Analyze {
        dataset: PathBuf,
        /// Output directory (default: <dataset>/analysis).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Analysis settings (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Score the result against the simulator's ground truth.
        #[arg(long)]
        compare: bool,
        #[arg(long, default_value_t = 3.0)]
        match_tol_mhz: f64,
    },
    /// Refit the density models to the published device table.
    FitPaper {
        #[arg(long, default_value = "fit_paper")]
        out: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        barrier_nm: f64,
        /// Poisson-weighted least squares.
        #[arg(long)]
        weighted: bool,
    },
    /// Solve DC and AC fields around a junction cross-section.
    Fieldmap {
        /// Cross-section and solver settings (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "fieldmap")]
        out: PathBuf,
        /// Repeat on a mesh with all spacings halved and report the change.
        #[arg(long)]
        refine: bool,
        /// Only check the solver against two parallel plates.
        #[arg(long)]
        parallel_plate: bool,
    },
    /// Planted-density recovery over many seeds on every qubit of a chips file.
    Roundtrip {
        #[arg(long, default_value = "chips.cfg")]
        chips: PathBuf,
        /// Round-trip settings (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long, default_value = "roundtrip")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Simulate { config, seed, out } => cmd_simulate(&config, seed, &out),
        Cmd::Analyze {
            dataset,
            out,
            config,
            compare,
            match_tol_mhz,
        } => {
            let out = out.unwrap_or_else(|| dataset.join("analysis"));
            cmd_analyze(&dataset, &out, config.as_deref(), compare, match_tol_mhz)
        }
        Cmd::FitPaper {
            out,
            barrier_nm,
            weighted,
        } => cmd_fit_paper(&out, barrier_nm, weighted),
        Cmd::Fieldmap {
            config,
            out,
            refine,
            parallel_plate,
        } => cmd_fieldmap(config.as_deref(), &out, refine, parallel_plate),
        Cmd::Roundtrip {
            chips,
            config,
            seeds,
            out,
        } => cmd_roundtrip(&chips, config.as_deref(), seeds, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = json!({"error": {"category": e.category(), "message": e.to_string()}});
            eprintln!("{line}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config { field: path.display().to_string(), message: e.to_string() })?;
    parse_toml(&text)
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn cmd_simulate(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let (mut cfg, chips) = SimulationConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let spec = RunSpec::from_config(&cfg, &chips)?;
    let run = simulate(&spec)?;
    let manifest = io::write_dataset(out, &run, now_unix())?;
    println!(
        "simulated qubit {} (seed {}): {} defects, {} segments, {} bias points -> {}",
        spec.qubit_id,
        spec.seed,
        run.timeline.ensemble.len(),
        run.maps.len(),
        run.plan.columns().len(),
        out.display()
    );
    println!("config sha256 {}", manifest.config_sha256);
    Ok(())
}

fn cmd_analyze(
    dataset: &Path,
    out: &Path,
    config: Option<&Path>,
    compare: bool,
    match_tol_mhz: f64,
) -> Result<()> {
    let cfg: AnalysisConfig = match config {
        Some(p) => load_toml(p)?,
        None => AnalysisConfig::default(),
    };
    let data = io::read_dataset(dataset)?;
    let plan = &data.manifest.segment_plan;
    let a = analyze(&data.maps, plan, &cfg)?;

    std::fs::create_dir_all(out)?;
    io::write_traces(&out.join("traces.csv"), &out.join("trace_points.csv"), &a.traces)?;
    io::write_segment_densities(&out.join("segment_densities.csv"), &a.segments)?;

    let count = |c: Classification| a.traces.iter().filter(|t| t.classification == c).count();
    let (nj, ns, nu) = (
        count(Classification::Junction),
        count(Classification::Surface),
        count(Classification::Unclassified),
    );
    println!("{} traces: {nj} junction (flat in gate), {ns} surface (gate-tuned), {nu} unclassified", a.traces.len());
    println!(
        "densities per GHz: rho_jj {:.3}  rho_surf {:.3}  rho_nc {:.3}",
        a.run.rho_jj, a.run.rho_surf, a.run.rho_nc
    );

    let mut summary = json!({
        "dataset": dataset.display().to_string(),
        "config_sha256": data.manifest.config_sha256,
        "n_traces": a.traces.len(),
        "n_junction": nj,
        "n_surface": ns,
        "n_unclassified": nu,
        "rho_jj_per_ghz": a.run.rho_jj,
        "rho_surf_per_ghz": a.run.rho_surf,
        "rho_nc_per_ghz": a.run.rho_nc,
        "analysis": cfg,
    });
    if compare {
        let truth = data.load_ground_truth()?;
        let cmp = compare_to_truth(&a.traces, plan, &truth, match_tol_mhz);
        for (name, s) in [("junction", &cmp.junction), ("surface", &cmp.surface)] {
            println!(
                "{name:>8}: precision {:.3} ({}/{})  recall {:.3} ({}/{})",
                s.precision(),
                s.correct,
                s.labeled,
                s.recall(),
                s.truth_found,
                s.truth_total
            );
        }
        println!("unmatched traces: {}", cmp.unmatched_traces);
        summary["comparison"] = json!({
            "junction": {"precision": cmp.junction.precision(), "recall": cmp.junction.recall(), "score": cmp.junction},
            "surface": {"precision": cmp.surface.precision(), "recall": cmp.surface.recall(), "score": cmp.surface},
            "unclassified_traces": cmp.unclassified_traces,
            "unmatched_traces": cmp.unmatched_traces,
            "match_tol_mhz": match_tol_mhz,
        });
    }
    io::write_json(&out.join("analysis.json"), &summary)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_fit_paper(out: &Path, barrier_nm: f64, weighted: bool) -> Result<()> {
    let start = Instant::now();
    let data = PaperDataset::embedded();
    let report = fit_paper(&data, barrier_nm, weighted)?;
    let text = report.to_text();
    print!("{text}");
    io::write_atomic(&out.join("report.txt"), text.as_bytes())?;
    io::write_json(&out.join("report.json"), &report)?;
    io::write_csv(&out.join("qubits.csv"), &report.qubits)?;
    println!("fit-paper done in {:.3} s -> {}", start.elapsed().as_secs_f64(), out.display());
    Ok(())
}

fn cmd_fieldmap(config: Option<&Path>, out: &Path, refine: bool, parallel_plate: bool) -> Result<()> {
    let cfg: ScreeningConfig = match config {
        Some(p) => load_toml(p)?,
        None => ScreeningConfig::default(),
    };
    if parallel_plate {
        let check = parallel_plate_check(10.0, 1.0, &SolverOptions { refine: 0, ..cfg.solver })?;
        let ok = check.max_relative_error < 1e-6;
        println!(
            "parallel plate: expected {:.6e} V/m, max relative error {:.2e} after {} iterations: {}",
            check.expected_v_per_m,
            check.max_relative_error,
            check.iterations,
            if ok { "ok" } else { "MISMATCH" }
        );
        return Ok(());
    }
    let start = Instant::now();
    let study = screening_study(&cfg, refine)?;
    std::fs::create_dir_all(out)?;
    io::write_field_grid(&out.join("dc_map.csv"), &FieldGrid::from(&study.dc_map))?;
    io::write_field_grid(&out.join("ac_map.csv"), &FieldGrid::from(&study.ac_map))?;
    io::write_series(
        &out.join("dc_edge_profile.csv"),
        ["distance_nm", "field_over_reference"],
        &study.dc.edge_profile,
    )?;
    io::write_series(
        &out.join("ac_decay_profile.csv"),
        ["distance_nm", "field_over_barrier"],
        &study.ac.normalized(),
    )?;

    println!(
        "DC: barrier field {:.3e} V/m, unscreened {:.3e} V/m, ratio {:.3e}",
        study.dc.barrier_field_v_per_m, study.dc.reference_field_v_per_m, study.dc.ratio
    );
    match study.ac.decay_length_nm {
        Some(l) => println!(
            "AC: 1/e decay length outside the open edge {:.3} nm ({:.2} d)",
            l,
            l / cfg.junction.barrier_nm
        ),
        None => println!("AC: field does not fall below 1/e within the profile"),
    }
    println!("{:>6} {:>6} {:>6} {:>11} {:>10} {:>9} {:>9}", "refine", "nx", "ny", "dc_ratio", "decay_nm", "dc_w_nm", "ac_w_nm");
    for l in &study.levels {
        println!(
            "{:>6} {:>6} {:>6} {:>11.4e} {:>10.4} {:>9.3} {:>9.3}",
            l.refine,
            l.nx,
            l.ny,
            l.dc_ratio,
            l.decay_length_nm.unwrap_or(f64::NAN),
            l.dc_screened_width_nm,
            l.ac_coupled_width_nm
        );
    }
    if let Some(r) = &study.refinement {
        println!(
            "refinement change: dc_ratio {:.2}%  decay_length {:.2}%  ac_profile {:.2}%",
            100.0 * r.dc_ratio,
            100.0 * r.decay_length,
            100.0 * r.ac_profile
        );
    }
    io::write_json(
        &out.join("fieldmap.json"),
        &json!({
            "config": cfg,
            "dc": {
                "barrier_field_v_per_m": study.dc.barrier_field_v_per_m,
                "reference_field_v_per_m": study.dc.reference_field_v_per_m,
                "ratio": study.dc.ratio,
            },
            "ac": {
                "barrier_field_v_per_m": study.ac.barrier_field_v_per_m,
                "decay_length_nm": study.ac.decay_length_nm,
            },
            "solver": {
                "dc_iterations": study.dc_map.iterations,
                "dc_residual": study.dc_map.residual,
                "ac_iterations": study.ac_map.iterations,
                "ac_residual": study.ac_map.residual,
            },
            "levels": study.levels,
            "refinement": study.refinement,
            "elapsed_s": start.elapsed().as_secs_f64(),
        }),
    )?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_roundtrip(chips: &Path, config: Option<&Path>, seeds: Option<usize>, out: &Path) -> Result<()> {
    let chips = ChipsFile::load(chips)?;
    let mut cfg: RoundTripConfig = match config {
        Some(p) => load_toml(p)?,
        None => RoundTripConfig::default(),
    };
    if let Some(n) = seeds {
        cfg.seeds = n;
    }
    let s = roundtrip(&chips, &cfg)?;
    for (name, c) in [("rho_area", &s.rho_area), ("rho_open", &s.rho_open), ("rho_covered", &s.rho_covered)] {
        println!(
            "{name:>11}: mean {:>9.4}  se(seeds) {:>8.4}  mean fit sigma {:>8.4}  combined se {:>8.4}",
            c.mean, c.se_empirical, c.sigma_fit_mean, c.se_combined
        );
    }
    println!(
        "planted rho_area {}: recovered within 2 se: {}; edges consistent with zero: {}",
        s.planted_rho_area,
        s.area_recovered(),
        s.edges_consistent_with_zero()
    );
    println!("{} seeds x {} qubits in {:.1} s", s.seeds.len(), chips.qubits.len(), s.elapsed_s);

    let rows: Vec<_> = s
        .seeds
        .iter()
        .map(|sd| SeedRow {
            seed: sd.seed,
            rho_area: sd.fit.rho_area.value,
            rho_area_sigma: sd.fit.rho_area.sigma,
            rho_open: sd.fit.rho_open.value,
            rho_open_sigma: sd.fit.rho_open.sigma,
            rho_covered: sd.fit.rho_covered.value,
            rho_covered_sigma: sd.fit.rho_covered.sigma,
        })
        .collect();
    io::write_csv(&out.join("roundtrip_seeds.csv"), &rows)?;
    io::write_json(&out.join("roundtrip.json"), &json!({"config": cfg, "summary": s}))?;
    println!("wrote {}", out.display());
    Ok(())
}

#[derive(serde::Serialize)]
struct SeedRow {
    seed: u64,
    rho_area: f64,
    rho_area_sigma: Option<f64>,
    rho_open: f64,
    rho_open_sigma: Option<f64>,
    rho_covered: f64,
    rho_covered_sigma: Option<f64>,
}
