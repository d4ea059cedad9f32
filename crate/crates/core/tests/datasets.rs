mod common;

use std::fs;
use std::path::Path;

use jjdefects_core::config::SimulationConfig;
use jjdefects_core::field::{solve_laplace, JunctionCrossSection, SolverOptions};
use jjdefects_core::io::{
    read_dataset, read_field_grid, read_ground_truth, read_json, read_segment_densities,
    read_telegraph_jumps, read_traces, write_dataset, write_field_grid, write_ground_truth,
    write_segment_densities, write_telegraph_jumps, write_traces, FieldGrid, RunManifest,
    MANIFEST_FILE,
};
use jjdefects_core::pipeline::{analyze, simulate, RunSpec, SimulatedRun};
use jjdefects_core::spectroscopy::inject_telegraph_jump;

fn run_14(seed: u64) -> SimulatedRun {
    let (mut cfg, chips) =
        SimulationConfig::load(&common::repo_root().join("configs/qubit_1.4.toml")).unwrap();
    cfg.seed = seed;
    simulate(&RunSpec::from_config(&cfg, &chips).unwrap()).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn same_config_and_seed_give_identical_datasets() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_dataset(a.path(), &run_14(3), 1_700_000_000).unwrap();
    write_dataset(b.path(), &run_14(3), 1_800_000_000).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.len(), fb.len());
    for ((na, da), (nb, db)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        if na == MANIFEST_FILE {
            // Only the creation time may differ.
            let mut ma: RunManifest = serde_json::from_slice(da).unwrap();
            let mb: RunManifest = serde_json::from_slice(db).unwrap();
            ma.created_unix_s = mb.created_unix_s;
            assert_eq!(ma, mb);
        } else {
            assert!(da == db, "{na} differs");
        }
    }

    let c = tempfile::tempdir().unwrap();
    write_dataset(c.path(), &run_14(4), 1_700_000_000).unwrap();
    assert_ne!(files(a.path()), files(c.path()));
}

#[test]
fn dataset_round_trip_and_analysis_match_memory() {
    let run = run_14(5);
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(dir.path(), &run, 42).unwrap();
    let ds = read_dataset(dir.path()).unwrap();
    assert_eq!(ds.manifest, manifest);
    assert_eq!(ds.manifest.spec, run.spec);
    assert_eq!(ds.manifest.segment_plan, run.plan);
    assert_eq!(ds.maps, run.maps);
    assert_eq!(ds.load_ground_truth().unwrap(), run.timeline);
    let _: RunManifest = read_json(&dir.path().join(MANIFEST_FILE)).unwrap();

    let cfg = Default::default();
    let mem = analyze(&run.maps, &run.plan, &cfg).unwrap();
    let disk = analyze(&ds.maps, &ds.manifest.segment_plan, &cfg).unwrap();
    assert_eq!(mem, disk);
    assert!(!mem.traces.is_empty());
}

#[test]
fn tampered_manifest_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &run_14(6), 0).unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let mut m: RunManifest = read_json(&path).unwrap();
    m.spec.seed += 1;
    fs::write(&path, serde_json::to_vec(&m).unwrap()).unwrap();
    let err = read_dataset(dir.path()).unwrap_err();
    assert_eq!(err.category(), "dataset");

    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &run_14(6), 0).unwrap();
    fs::remove_file(dir.path().join("segment_002.csv")).unwrap();
    assert!(read_dataset(dir.path()).is_err());
}

#[test]
fn truth_traces_and_densities_round_trip() {
    let run = run_14(8);
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);

    write_ground_truth(&p("gt.csv"), &run.timeline.ensemble).unwrap();
    assert_eq!(read_ground_truth(&p("gt.csv")).unwrap(), run.timeline.ensemble);

    let id = run.timeline.ensemble.defects[0].id;
    let tl = inject_telegraph_jump(&run.timeline, id, 1.25, 33).unwrap();
    write_telegraph_jumps(&p("tj.csv"), &tl.jumps).unwrap();
    assert_eq!(read_telegraph_jumps(&p("tj.csv")).unwrap(), tl.jumps);
    write_telegraph_jumps(&p("none.csv"), &[]).unwrap();
    assert!(read_telegraph_jumps(&p("none.csv")).unwrap().is_empty());

    let a = analyze(&run.maps, &run.plan, &Default::default()).unwrap();
    write_traces(&p("traces.csv"), &p("points.csv"), &a.traces).unwrap();
    assert_eq!(read_traces(&p("traces.csv"), &p("points.csv")).unwrap(), a.traces);
    write_traces(&p("t0.csv"), &p("p0.csv"), &[]).unwrap();
    assert!(read_traces(&p("t0.csv"), &p("p0.csv")).unwrap().is_empty());

    write_segment_densities(&p("seg.csv"), &a.segments).unwrap();
    assert_eq!(read_segment_densities(&p("seg.csv")).unwrap(), a.segments);
}

#[test]
fn field_grid_round_trip() {
    let j = JunctionCrossSection::default();
    let opts = SolverOptions {
        refine: 0,
        ..SolverOptions::default()
    };
    let map = solve_laplace(&j.ac_model(1e-3), &opts).unwrap();
    let grid = FieldGrid::from(&map);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ac.csv");
    write_field_grid(&path, &grid).unwrap();
    assert_eq!(read_field_grid(&path).unwrap(), grid);
}
