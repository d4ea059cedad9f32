//! Dataset directories and CSV/JSON persistence. Every writer has a matching
//! reader, and all writes go through a temp file renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::{Classification, DefectTrace, HyperbolaFit, TracePoint};
use crate::density::SegmentDensity;
use crate::error::{Error, Result};
use crate::field::FieldMap;
use crate::geometry::{Defect, Ensemble, Region};
use crate::pipeline::{RunSpec, SimulatedRun};
use crate::spectroscopy::{SegmentPlan, SweepChannel, T1Map, TelegraphJump, Timeline};
use crate::tls::{BiasPoint, LeverArms, TwoLevelSystem};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const TELEGRAPH_FILE: &str = "telegraph_jumps.csv";

/// Write `bytes` to `path` atomically (temp file in the same directory, then rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| Error::dataset(path, e.to_string()))
}

/// CSV with a header row from the field names of `T`.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Like [`write_csv`], but writes the header even when `rows` is empty.
fn write_csv_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if !rows.is_empty() {
        return write_csv(path, rows);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_file(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::dataset(path, e.to_string()))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::dataset(path, e.to_string()))
}

// ---------------------------------------------------------------- datasets

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software_version: String,
    /// sha256 of the run spec; identical specs give identical datasets.
    pub config_sha256: String,
    pub created_unix_s: u64,
    pub spec: RunSpec,
    pub segment_plan: SegmentPlan,
    /// Relative noise level of one T1 estimate.
    pub noise_sigma: f64,
    pub segment_files: Vec<String>,
    pub ground_truth_file: String,
    pub telegraph_file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct MapRow {
    v_gate_v: f64,
    v_piezo_v: f64,
    freq_ghz: f64,
    t1_us: f64,
}

pub fn segment_file_name(segment: usize) -> String {
    format!("segment_{segment:03}.csv")
}

pub fn write_t1_map(path: &Path, map: &T1Map) -> Result<()> {
    let mut rows = Vec::with_capacity(map.t1_us.len());
    for (b, bias) in map.biases.iter().enumerate() {
        for (i, &f) in map.freqs_ghz.iter().enumerate() {
            rows.push(MapRow {
                v_gate_v: bias.v_gate,
                v_piezo_v: bias.v_piezo,
                freq_ghz: f,
                t1_us: map.get(b, i),
            });
        }
    }
    write_csv_with_header(path, &["v_gate_v", "v_piezo_v", "freq_ghz", "t1_us"], &rows)
}

/// Read a segment file; rows are grouped into bias points by consecutive
/// (v_gate, v_piezo) pairs, and every bias point must have the same grid.
pub fn read_t1_map(
    path: &Path,
    segment: usize,
    channel: SweepChannel,
    noise_sigma: f64,
) -> Result<T1Map> {
    let rows: Vec<MapRow> = read_csv(path)?;
    let mut biases: Vec<BiasPoint> = Vec::new();
    let mut freqs: Vec<f64> = Vec::new();
    let mut t1 = Vec::with_capacity(rows.len());
    for r in &rows {
        let bias = BiasPoint::new(r.v_gate_v, r.v_piezo_v);
        if biases.last() != Some(&bias) {
            biases.push(bias);
        }
        if biases.len() == 1 {
            freqs.push(r.freq_ghz);
        } else {
            let i = t1.len() % freqs.len().max(1);
            if freqs.get(i) != Some(&r.freq_ghz) {
                return Err(Error::dataset(path, "frequency grid differs between bias points"));
            }
        }
        t1.push(r.t1_us);
    }
    if freqs.is_empty() || t1.len() != biases.len() * freqs.len() {
        return Err(Error::dataset(path, "empty or ragged T1 map"));
    }
    if t1.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::dataset(path, "T1 values must be finite and > 0"));
    }
    Ok(T1Map {
        segment,
        channel,
        biases,
        freqs_ghz: freqs,
        t1_us: t1,
        noise_sigma,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct DefectRow {
    id: usize,
    region: Region,
    delta_ghz: f64,
    eps_i_ghz: f64,
    dipole_e_nm: f64,
    dipole_orientation: f64,
    deformation_ghz: f64,
    x_nm: f64,
    y_nm: f64,
    kappa_gate_ghz_per_v: f64,
    kappa_piezo_ghz_per_v: f64,
    linewidth_mhz: f64,
    field_v_per_m: f64,
}

pub fn write_ground_truth(path: &Path, ensemble: &Ensemble) -> Result<()> {
    let rows: Vec<DefectRow> = ensemble
        .defects
        .iter()
        .map(|d| DefectRow {
            id: d.id,
            region: d.region,
            delta_ghz: d.tls.delta,
            eps_i_ghz: d.tls.eps0,
            dipole_e_nm: d.tls.dipole,
            dipole_orientation: d.tls.dipole_orientation,
            deformation_ghz: d.tls.deformation,
            x_nm: d.tls.position[0],
            y_nm: d.tls.position[1],
            kappa_gate_ghz_per_v: d.arms.kappa_gate,
            kappa_piezo_ghz_per_v: d.arms.kappa_piezo,
            linewidth_mhz: d.linewidth_mhz,
            field_v_per_m: d.field_rms,
        })
        .collect();
    write_csv_with_header(
        path,
        &[
            "id",
            "region",
            "delta_ghz",
            "eps_i_ghz",
            "dipole_e_nm",
            "dipole_orientation",
            "deformation_ghz",
            "x_nm",
            "y_nm",
            "kappa_gate_ghz_per_v",
            "kappa_piezo_ghz_per_v",
            "linewidth_mhz",
            "field_v_per_m",
        ],
        &rows,
    )
}

pub fn read_ground_truth(path: &Path) -> Result<Ensemble> {
    let rows: Vec<DefectRow> = read_csv(path)?;
    let defects = rows
        .into_iter()
        .map(|r| Defect {
            id: r.id,
            region: r.region,
            tls: TwoLevelSystem {
                delta: r.delta_ghz,
                eps0: r.eps_i_ghz,
                dipole: r.dipole_e_nm,
                dipole_orientation: r.dipole_orientation,
                deformation: r.deformation_ghz,
                location: r.region.location(),
                position: [r.x_nm, r.y_nm],
            },
            arms: LeverArms {
                kappa_gate: r.kappa_gate_ghz_per_v,
                kappa_piezo: r.kappa_piezo_ghz_per_v,
            },
            linewidth_mhz: r.linewidth_mhz,
            field_rms: r.field_v_per_m,
        })
        .collect();
    Ok(Ensemble { defects })
}

#[derive(Debug, Serialize, Deserialize)]
struct JumpRow {
    defect_id: usize,
    new_eps_i_ghz: f64,
    at_bias_index: usize,
}

pub fn write_telegraph_jumps(path: &Path, jumps: &[TelegraphJump]) -> Result<()> {
    let rows: Vec<JumpRow> = jumps
        .iter()
        .map(|j| JumpRow {
            defect_id: j.defect_id,
            new_eps_i_ghz: j.new_eps0,
            at_bias_index: j.at_bias_index,
        })
        .collect();
    write_csv_with_header(path, &["defect_id", "new_eps_i_ghz", "at_bias_index"], &rows)
}

pub fn read_telegraph_jumps(path: &Path) -> Result<Vec<TelegraphJump>> {
    let rows: Vec<JumpRow> = read_csv(path)?;
    Ok(rows
        .into_iter()
        .map(|r| TelegraphJump {
            defect_id: r.defect_id,
            new_eps0: r.new_eps_i_ghz,
            at_bias_index: r.at_bias_index,
        })
        .collect())
}

/// Write a simulated run into `dir`: manifest, one CSV per segment, and the
/// ground truth.
pub fn write_dataset(dir: &Path, run: &SimulatedRun, created_unix_s: u64) -> Result<RunManifest> {
    std::fs::create_dir_all(dir)?;
    let mut segment_files = Vec::with_capacity(run.maps.len());
    for map in &run.maps {
        let name = segment_file_name(map.segment);
        write_t1_map(&dir.join(&name), map)?;
        segment_files.push(name);
    }
    write_ground_truth(&dir.join(GROUND_TRUTH_FILE), &run.timeline.ensemble)?;
    write_telegraph_jumps(&dir.join(TELEGRAPH_FILE), &run.timeline.jumps)?;
    let manifest = RunManifest {
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: run.spec.hash(),
        created_unix_s,
        spec: run.spec.clone(),
        segment_plan: run.plan.clone(),
        noise_sigma: run.maps.first().map_or(0.0, |m| m.noise_sigma),
        segment_files,
        ground_truth_file: GROUND_TRUTH_FILE.to_string(),
        telegraph_file: TELEGRAPH_FILE.to_string(),
    };
    // Manifest last: a directory with a manifest is complete.
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Measured part of a dataset. Ground truth is loaded separately.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub maps: Vec<T1Map>,
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let mpath = dir.join(MANIFEST_FILE);
    let manifest: RunManifest = read_json(&mpath)?;
    if manifest.spec.hash() != manifest.config_sha256 {
        return Err(Error::dataset(&mpath, "config_sha256 does not match the recorded spec"));
    }
    let plan = &manifest.segment_plan;
    plan.validate().map_err(|e| Error::dataset(&mpath, e.to_string()))?;
    if manifest.segment_files.len() != plan.segments.len() {
        return Err(Error::dataset(
            &mpath,
            format!(
                "{} segment files for {} planned segments",
                manifest.segment_files.len(),
                plan.segments.len()
            ),
        ));
    }
    let freqs = plan.freq.values();
    let mut maps = Vec::with_capacity(plan.segments.len());
    for (s, (seg, name)) in plan.segments.iter().zip(&manifest.segment_files).enumerate() {
        let path = dir.join(name);
        let map = read_t1_map(&path, s, seg.channel, manifest.noise_sigma)?;
        if map.biases != seg.biases() {
            return Err(Error::dataset(&path, "bias points differ from the segment plan"));
        }
        if map.freqs_ghz.len() != freqs.len()
            || map.freqs_ghz.iter().zip(&freqs).any(|(a, b)| (a - b).abs() > 1e-9)
        {
            return Err(Error::dataset(&path, "frequency grid differs from the segment plan"));
        }
        maps.push(map);
    }
    Ok(Dataset {
        dir: dir.to_path_buf(),
        manifest,
        maps,
    })
}

impl Dataset {
    /// Ground truth written by the simulator. Only comparison code calls this.
    pub fn load_ground_truth(&self) -> Result<Timeline> {
        let ensemble = read_ground_truth(&self.dir.join(&self.manifest.ground_truth_file))?;
        let jumps = read_telegraph_jumps(&self.dir.join(&self.manifest.telegraph_file))?;
        Ok(Timeline { ensemble, jumps })
    }
}

// ---------------------------------------------------------------- traces

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub trace_id: usize,
    pub classification: Classification,
    pub delta_ghz: Option<f64>,
    pub eps_i_ghz: Option<f64>,
    pub kappa_gate_ghz_per_v: Option<f64>,
    pub kappa_piezo_ghz_per_v: Option<f64>,
    pub fit_rms_mhz: Option<f64>,
    pub gate_motion_mhz: Option<f64>,
    pub n_points: usize,
    pub first_column: usize,
    pub last_column: usize,
    /// Segment indices separated by ';'.
    pub segments_seen: String,
}

impl From<&DefectTrace> for TraceRow {
    fn from(t: &DefectTrace) -> Self {
        TraceRow {
            trace_id: t.id,
            classification: t.classification,
            delta_ghz: t.fit.map(|f| f.delta_ghz),
            eps_i_ghz: t.fit.map(|f| f.eps_i_ghz),
            kappa_gate_ghz_per_v: t.fit.map(|f| f.kappa_gate),
            kappa_piezo_ghz_per_v: t.fit.map(|f| f.kappa_piezo),
            fit_rms_mhz: t.fit.map(|f| f.rms_mhz),
            gate_motion_mhz: t.gate_motion_mhz,
            n_points: t.points.len(),
            first_column: t.first_column(),
            last_column: t.last_column(),
            segments_seen: t
                .segments()
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TracePointRow {
    trace_id: usize,
    column: usize,
    segment: usize,
    v_gate_v: f64,
    v_piezo_v: f64,
    freq_ghz: f64,
    depth: f64,
    width_mhz: f64,
}

const TRACE_HEADER: [&str; 12] = [
    "trace_id",
    "classification",
    "delta_ghz",
    "eps_i_ghz",
    "kappa_gate_ghz_per_v",
    "kappa_piezo_ghz_per_v",
    "fit_rms_mhz",
    "gate_motion_mhz",
    "n_points",
    "first_column",
    "last_column",
    "segments_seen",
];

/// Trace table plus the per-dip points behind it.
pub fn write_traces(table: &Path, points: &Path, traces: &[DefectTrace]) -> Result<()> {
    let rows: Vec<TraceRow> = traces.iter().map(TraceRow::from).collect();
    write_csv_with_header(table, &TRACE_HEADER, &rows)?;
    let pts: Vec<TracePointRow> = traces
        .iter()
        .flat_map(|t| {
            t.points.iter().map(move |p| TracePointRow {
                trace_id: t.id,
                column: p.column,
                segment: p.segment,
                v_gate_v: p.bias.v_gate,
                v_piezo_v: p.bias.v_piezo,
                freq_ghz: p.freq_ghz,
                depth: p.depth,
                width_mhz: p.width_mhz,
            })
        })
        .collect();
    write_csv_with_header(
        points,
        &[
            "trace_id",
            "column",
            "segment",
            "v_gate_v",
            "v_piezo_v",
            "freq_ghz",
            "depth",
            "width_mhz",
        ],
        &pts,
    )
}

pub fn read_trace_table(path: &Path) -> Result<Vec<TraceRow>> {
    read_csv(path)
}

pub fn read_traces(table: &Path, points_path: &Path) -> Result<Vec<DefectTrace>> {
    let rows = read_trace_table(table)?;
    let pts: Vec<TracePointRow> = read_csv(points_path)?;
    rows.into_iter()
        .map(|r| {
            let fit = match (
                r.delta_ghz,
                r.eps_i_ghz,
                r.kappa_gate_ghz_per_v,
                r.kappa_piezo_ghz_per_v,
                r.fit_rms_mhz,
            ) {
                (Some(d), Some(e), Some(kg), Some(kp), Some(rms)) => Some(HyperbolaFit {
                    delta_ghz: d,
                    eps_i_ghz: e,
                    kappa_gate: kg,
                    kappa_piezo: kp,
                    rms_mhz: rms,
                }),
                (None, None, None, None, None) => None,
                _ => return Err(Error::dataset(table, format!("trace {} has a partial fit", r.trace_id))),
            };
            let points: Vec<TracePoint> = pts
                .iter()
                .filter(|p| p.trace_id == r.trace_id)
                .map(|p| TracePoint {
                    column: p.column,
                    segment: p.segment,
                    bias: BiasPoint::new(p.v_gate_v, p.v_piezo_v),
                    freq_ghz: p.freq_ghz,
                    depth: p.depth,
                    width_mhz: p.width_mhz,
                })
                .collect();
            if points.len() != r.n_points {
                return Err(Error::dataset(
                    points_path,
                    format!("trace {}: {} points, table says {}", r.trace_id, points.len(), r.n_points),
                ));
            }
            Ok(DefectTrace {
                id: r.trace_id,
                points,
                fit,
                classification: r.classification,
                gate_motion_mhz: r.gate_motion_mhz,
            })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct SegmentDensityRow {
    segment: usize,
    channel: SweepChannel,
    rho_jj_per_ghz: f64,
    rho_surf_per_ghz: f64,
    rho_nc_per_ghz: f64,
    window_ghz: f64,
}

pub fn write_segment_densities(path: &Path, segments: &[SegmentDensity]) -> Result<()> {
    let rows: Vec<SegmentDensityRow> = segments
        .iter()
        .map(|s| SegmentDensityRow {
            segment: s.segment,
            channel: s.channel,
            rho_jj_per_ghz: s.rho_jj,
            rho_surf_per_ghz: s.rho_surf,
            rho_nc_per_ghz: s.rho_nc,
            window_ghz: s.window_ghz,
        })
        .collect();
    write_csv_with_header(
        path,
        &[
            "segment",
            "channel",
            "rho_jj_per_ghz",
            "rho_surf_per_ghz",
            "rho_nc_per_ghz",
            "window_ghz",
        ],
        &rows,
    )
}

pub fn read_segment_densities(path: &Path) -> Result<Vec<SegmentDensity>> {
    let rows: Vec<SegmentDensityRow> = read_csv(path)?;
    Ok(rows
        .into_iter()
        .map(|r| SegmentDensity {
            segment: r.segment,
            channel: r.channel,
            rho_jj: r.rho_jj_per_ghz,
            rho_surf: r.rho_surf_per_ghz,
            rho_nc: r.rho_nc_per_ghz,
            window_ghz: r.window_ghz,
        })
        .collect())
}

// ---------------------------------------------------------------- fields

/// Node values of a field map. Solver statistics live in the JSON summary.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub xs_nm: Vec<f64>,
    pub ys_nm: Vec<f64>,
    /// Row-major `[y][x]`.
    pub potential_v: Vec<f64>,
    pub field_v_per_m: Vec<f64>,
}

impl From<&FieldMap> for FieldGrid {
    fn from(m: &FieldMap) -> Self {
        FieldGrid {
            xs_nm: m.xs_nm.clone(),
            ys_nm: m.ys_nm.clone(),
            potential_v: m.potential_v.clone(),
            field_v_per_m: m.field_v_per_m.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldRow {
    x_nm: f64,
    y_nm: f64,
    potential_v: f64,
    field_v_per_m: f64,
}

pub fn write_field_grid(path: &Path, grid: &FieldGrid) -> Result<()> {
    let nx = grid.xs_nm.len();
    let rows: Vec<FieldRow> = grid
        .potential_v
        .iter()
        .zip(&grid.field_v_per_m)
        .enumerate()
        .map(|(k, (&p, &e))| FieldRow {
            x_nm: grid.xs_nm[k % nx],
            y_nm: grid.ys_nm[k / nx],
            potential_v: p,
            field_v_per_m: e,
        })
        .collect();
    write_csv(path, &rows)
}

pub fn read_field_grid(path: &Path) -> Result<FieldGrid> {
    let rows: Vec<FieldRow> = read_csv(path)?;
    let Some(first) = rows.first() else {
        return Err(Error::dataset(path, "empty field map"));
    };
    let xs_nm: Vec<f64> = rows
        .iter()
        .take_while(|r| r.y_nm == first.y_nm)
        .map(|r| r.x_nm)
        .collect();
    let nx = xs_nm.len();
    if rows.len() % nx != 0 {
        return Err(Error::dataset(path, "field map is not a full tensor grid"));
    }
    let ys_nm: Vec<f64> = rows.iter().step_by(nx).map(|r| r.y_nm).collect();
    for (k, r) in rows.iter().enumerate() {
        if r.x_nm != xs_nm[k % nx] || r.y_nm != ys_nm[k / nx] {
            return Err(Error::dataset(path, format!("row {} is off the tensor grid", k + 2)));
        }
    }
    Ok(FieldGrid {
        xs_nm,
        ys_nm,
        potential_v: rows.iter().map(|r| r.potential_v).collect(),
        field_v_per_m: rows.iter().map(|r| r.field_v_per_m).collect(),
    })
}

/// Two-column numeric series with the given header names.
pub fn write_series(path: &Path, header: [&str; 2], points: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for &(a, b) in points {
        w.serialize((a, b))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

pub fn read_series(path: &Path) -> Result<Vec<(f64, f64)>> {
    read_csv(path)
}
