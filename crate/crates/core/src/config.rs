//! Device and run configuration files (TOML, units in key names).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EnsemblePriors, JunctionGeometry, PlantedDensities, QubitParams, StrayJunction};
use crate::spectroscopy::{AlternatingPlan, NoiseModel};

fn default_barrier_nm() -> f64 {
    JunctionGeometry::DEFAULT_BARRIER_NM
}

/// One qubit of a chips file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitRecord {
    pub id: String,
    pub chip: u32,
    pub f01_max_ghz: f64,
    pub e_charge_ghz: f64,
    pub e_josephson_ghz: f64,
    pub t1_baseline_us: f64,
    pub field_small_junction_v_per_m: f64,
    pub field_stray_junction_v_per_m: f64,
    pub gate_lever_scale: f64,
    /// Stray junction; all three absent on reference qubits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_um2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_open_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_covered_um: Option<f64>,
    #[serde(default = "default_barrier_nm")]
    pub barrier_thickness_nm: f64,
}

impl QubitRecord {
    pub fn is_reference(&self) -> bool {
        self.area_um2.is_none()
    }

    pub fn qubit_params(&self) -> QubitParams {
        QubitParams {
            f01_max_ghz: self.f01_max_ghz,
            e_charge_ghz: self.e_charge_ghz,
            e_josephson_ghz: self.e_josephson_ghz,
            t1_baseline_us: self.t1_baseline_us,
            field_small_junction: self.field_small_junction_v_per_m,
            field_stray_junction: self.field_stray_junction_v_per_m,
            gate_lever_scale: self.gate_lever_scale,
        }
    }

    pub fn geometry(&self) -> Result<JunctionGeometry> {
        let field = |name: &str| format!("qubit[{}].{name}", self.id);
        let stray = match (self.area_um2, self.l_open_um, self.l_covered_um) {
            (Some(a), Some(o), Some(c)) => Some(StrayJunction {
                area_um2: a,
                l_open_um: o,
                l_covered_um: c,
            }),
            (None, None, None) => None,
            _ => {
                return Err(Error::config(
                    field("area_um2"),
                    "area_um2, l_open_um and l_covered_um must be given together",
                ))
            }
        };
        let g = JunctionGeometry {
            stray,
            barrier_thickness_nm: self.barrier_thickness_nm,
            small_junction_nm: JunctionGeometry::SMALL_JUNCTION_NM,
        };
        g.validate().map_err(|e| scoped(e, &format!("qubit[{}]", self.id)))?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        self.qubit_params()
            .validate()
            .map_err(|e| scoped(e, &format!("qubit[{}]", self.id)))?;
        if !(self.gate_lever_scale > 0.0) {
            return Err(Error::config(
                format!("qubit[{}].gate_lever_scale", self.id),
                "must be > 0",
            ));
        }
        self.geometry().map(|_| ())
    }
}

/// Re-label a parameter error as a config error under `scope`.
fn scoped(err: Error, scope: &str) -> Error {
    match err {
        Error::InvalidParameter { name, reason } => {
            let name = match name {
                "field_small_junction" => "field_small_junction_v_per_m",
                other => other,
            };
            Error::config(format!("{scope}.{name}"), reason)
        }
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChipsFile {
    #[serde(rename = "qubit")]
    pub qubits: Vec<QubitRecord>,
}

impl ChipsFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ChipsFile = parse_toml(text)?;
        let mut seen = std::collections::HashSet::new();
        for q in &file.qubits {
            if !seen.insert(q.id.as_str()) {
                return Err(Error::config(format!("qubit[{}].id", q.id), "duplicate qubit id"));
            }
            q.validate()?;
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        Self::parse(&text).map_err(|e| in_file(e, path))
    }

    pub fn qubit(&self, id: &str) -> Result<&QubitRecord> {
        self.qubits
            .iter()
            .find(|q| q.id == id)
            .ok_or_else(|| Error::config("qubit", format!("no qubit '{id}' in chips file")))
    }

    /// The reference qubit of `chip`, if the file has one.
    pub fn reference(&self, chip: u32) -> Option<&QubitRecord> {
        self.qubits.iter().find(|q| q.chip == chip && q.is_reference())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("qubit", e.to_string()))
    }
}

/// A `simulate` run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Chips file, relative to the config file's directory.
    pub chips_file: PathBuf,
    pub qubit: String,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to a value derived from `seed`.
    #[serde(default)]
    pub noise_seed: Option<u64>,
    #[serde(default)]
    pub densities: PlantedDensities,
    #[serde(default)]
    pub priors: EnsemblePriors,
    #[serde(default)]
    pub plan: AlternatingPlan,
    #[serde(default)]
    pub noise: NoiseModel,
}

impl SimulationConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: SimulationConfig = parse_toml(text)?;
        cfg.densities.validate().map_err(|e| scoped(e, "densities"))?;
        cfg.priors.validate().map_err(|e| scoped(e, "priors"))?;
        cfg.plan.build().map_err(|e| scoped(e, "plan"))?;
        match cfg.noise {
            NoiseModel::LogNormal { sigma } if !(sigma >= 0.0) => {
                return Err(Error::config("noise.sigma", "must be >= 0"))
            }
            NoiseModel::Binomial { delay_us } if !(delay_us > 0.0) => {
                return Err(Error::config("noise.delay_us", "must be > 0"))
            }
            _ => {}
        }
        Ok(cfg)
    }

    /// Load the config and its chips file.
    pub fn load(path: &Path) -> Result<(Self, ChipsFile)> {
        let text = read_text(path)?;
        let cfg = Self::parse(&text).map_err(|e| in_file(e, path))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let chips = ChipsFile::load(&base.join(&cfg.chips_file))?;
        chips.qubit(&cfg.qubit).map_err(|e| in_file(e, path))?;
        Ok((cfg, chips))
    }

    pub fn noise_seed(&self) -> u64 {
        self.noise_seed
            .unwrap_or_else(|| self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03)
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
}

fn in_file(err: Error, path: &Path) -> Error {
    match err {
        Error::Config { field, message } => Error::Config {
            field,
            message: format!("{message} (in {})", path.display()),
        },
        other => other,
    }
}

/// Parse TOML, turning errors into config errors that name the offending key.
pub fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        let field = offending_field(text, &e).unwrap_or_else(|| "<document>".to_string());
        Error::Config { field, message }
    })
}

fn offending_field(text: &str, err: &toml::de::Error) -> Option<String> {
    let msg = err.message();
    if let Some(start) = msg.find('`') {
        if let Some(len) = msg[start + 1..].find('`') {
            let key = &msg[start + 1..start + 1 + len];
            if msg.starts_with("unknown field") || msg.starts_with("missing field") {
                return Some(key.to_string());
            }
        }
    }
    let span = err.span()?;
    let line_start = text[..span.start.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next()?;
    let key = line.split('=').next()?.trim();
    (!key.is_empty()).then(|| key.trim_matches(|c| c == '[' || c == ']').to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = r#"
[[qubit]]
id = "1.2"
chip = 1
f01_max_ghz = 6.0
e_charge_ghz = 0.2
e_josephson_ghz = 24.0
t1_baseline_us = 10.0
field_small_junction_v_per_m = 2300.0
field_stray_junction_v_per_m = 25.0
gate_lever_scale = 1.0
area_um2 = 12.1
l_open_um = 7.1
l_covered_um = 10.1
"#;

    #[test]
    fn chips_round_trip() {
        let c = ChipsFile::parse(ONE).unwrap();
        assert_eq!(c.qubits.len(), 1);
        assert_eq!(ChipsFile::parse(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let typo = ONE.replace("area_um2", "aera_um2");
        match ChipsFile::parse(&typo) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "aera_um2"),
            other => panic!("{other:?}"),
        }
        let bad_type = ONE.replace("t1_baseline_us = 10.0", "t1_baseline_us = \"ten\"");
        match ChipsFile::parse(&bad_type) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "t1_baseline_us"),
            other => panic!("{other:?}"),
        }
        let negative = ONE.replace("area_um2 = 12.1", "area_um2 = -1.0");
        match ChipsFile::parse(&negative) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "qubit[1.2].area_um2"),
            other => panic!("{other:?}"),
        }
        let partial = ONE.replace("l_open_um = 7.1\n", "");
        assert!(matches!(ChipsFile::parse(&partial), Err(Error::Config { .. })));
    }

    #[test]
    fn simulation_config_defaults_and_errors() {
        let cfg = SimulationConfig::parse("chips_file = \"chips.cfg\"\nqubit = \"1.2\"\n").unwrap();
        assert_eq!(cfg.plan, AlternatingPlan::default());
        assert_eq!(cfg.noise, NoiseModel::default());
        let bad = "chips_file = \"c\"\nqubit = \"1.2\"\n[densities]\nrho_area_per_ghz_um2 = -1.0\n";
        match SimulationConfig::parse(bad) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "densities.rho_area_per_ghz_um2"),
            other => panic!("{other:?}"),
        }
        let unknown = "chips_file = \"c\"\nqubit = \"1.2\"\n[densities]\nrho_area = 1.0\n";
        match SimulationConfig::parse(unknown) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "rho_area"),
            other => panic!("{other:?}"),
        }
    }
}
