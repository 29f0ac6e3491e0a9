//! INI scenario files.
//!
//! Every key has a default except the two profile paths. Unknown sections
//! and keys are rejected so that a typo cannot silently fall back to a
//! default. See [`KEYS`] for the full table.

use std::path::{Path, PathBuf};

use ini::Ini;
use thiserror::Error;

use crate::control::{FlexLoadConfig, FlexMode, PiConfig, ScRegulatorConfig};
use crate::interchange::{OrchestratorPolicy, DEFAULT_BASE_PORT};
use crate::models::{BatteryParams, ConverterRating, PvArrayConfig, SupercapParams};
use crate::sim::{InjectionCommand, ParamRegistry, SimConfig, SimMode};

use super::profile::{parse_env_csv, parse_load_csv, EnvProfile, LoadProfile, ProfileError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("{section}.{key}: unknown key")]
    UnknownKey { section: String, key: String },
    #[error("{section}.{key}: {message}")]
    Value {
        section: String,
        key: String,
        message: String,
    },
    #[error("override `{0}` is not of the form section.key=value")]
    Override(String),
    #[error("profiles.{key}: {path}: {source}")]
    Profile {
        key: &'static str,
        path: PathBuf,
        source: ProfileError,
    },
    #[error("profiles.{0}: required")]
    MissingProfile(&'static str),
    #[error("{0}")]
    Invalid(String),
}

/// One row of the key table: section, key, default, meaning.
pub type KeyDoc = (&'static str, &'static str, &'static str, &'static str);

pub const KEYS: &[KeyDoc] = &[
    ("sim", "mode", "energy", "energy (quasi-static) or transient (bus ODE)"),
    ("sim", "dt", "1 (energy), 0.001 (transient)", "step, s"),
    ("sim", "duration", "86400 (energy), 20 (transient)", "simulated span, s"),
    ("sim", "realtime", "false", "pace steps to wall-clock time"),
    ("sim", "seed", "0", "recorded with the run; the engine is deterministic"),
    ("sim", "v_grid_setpoint", "100", "bus voltage setpoint, V"),
    ("sim", "droop", "0.05", "bus voltage change per unplaced watt, V/W"),
    ("sim", "bus_capacitance", "0.01558", "bus capacitance, F"),
    ("sim", "settle_window", "5", "time allowed to re-enter the ±1 V band, s"),
    ("pv", "series_count", "3", "modules in series"),
    ("pv", "parallel_count", "10", "strings in parallel"),
    ("pv", "cells_per_module", "36", "cells in series per module"),
    ("pv", "rated_power", "5000", "STC maximum power the array is calibrated to, W"),
    ("pv", "rated_voltage", "69", "nominal array voltage, V"),
    ("pv", "efficiency", "0.15", "cell efficiency"),
    ("pv", "ideality", "1.3", "diode ideality factor"),
    ("pv", "sat_current", "1e-9", "diode saturation current, A"),
    ("pv", "shunt_resistance", "500", "cell shunt resistance, Ω"),
    ("pv", "mppt_step", "0.5", "perturb-and-observe step, V"),
    ("pv", "mppt_period", "0.01", "perturb-and-observe period, s"),
    ("nodes", "count", "4", "number of BESS nodes"),
    ("nodes", "open_circuit_voltage", "69", "battery EMF, V"),
    ("nodes", "internal_resistance", "0.05", "battery internal resistance, Ω"),
    ("nodes", "capacity_ah", "150", "battery capacity, A·h"),
    ("nodes", "soc_min", "0.1", "lower SoC bound"),
    ("nodes", "soc_max", "0.9", "upper SoC bound"),
    ("nodes", "initial_soc", "0.5", "one value for all nodes, or a comma list per node"),
    ("nodes", "power_rating", "5000", "converter power rating, W"),
    ("nodes", "cv_node", "0", "node holding CV at start"),
    ("nodes", "cv_kp", "0.5", "CV voltage loop proportional gain, A/V"),
    ("nodes", "cv_ki", "20", "CV voltage loop integral gain, A/(V·s)"),
    ("converter", "v_in", "69", "boost input voltage, V"),
    ("converter", "v_out", "100", "boost output voltage, V"),
    ("converter", "i_out", "50", "rated output current, A"),
    ("converter", "switching_freq", "1000", "switching frequency, Hz"),
    ("supercap", "enabled", "true", "supercapacitor bus support"),
    ("supercap", "capacitance", "50", "F"),
    ("supercap", "esr", "0.01", "equivalent series resistance, Ω"),
    ("supercap", "v_init", "48", "initial stored voltage, V"),
    ("supercap", "deadband", "1", "quiet band around the setpoint, V"),
    ("supercap", "kp", "10", "regulator proportional gain, A/V"),
    ("supercap", "ki", "100", "regulator integral gain, A/(V·s)"),
    ("supercap", "i_max", "100", "injection limit, A"),
    ("supercap", "decay_time", "0.05", "integrator decay inside the band, s"),
    ("flex", "mode", "disabled", "disabled, full or partial"),
    ("flex", "gamma", "0", "surplus reserved away from flexible loads, W"),
    ("flex", "p_max", "5000", "flexible load rating, W"),
    ("profiles", "load", "(required)", "non-flexible load CSV, relative to the scenario file"),
    ("profiles", "env", "(required)", "irradiance/temperature CSV, relative to the scenario file"),
    ("interchange", "enabled", "false", "run the orchestrator and node agents"),
    ("interchange", "soc_min", "10", "orchestrator lower SoC bound, %"),
    ("interchange", "soc_max", "90", "orchestrator upper SoC bound, %"),
    ("interchange", "v_max", "105", "highest CV setpoint the orchestrator issues, V"),
    ("interchange", "i_max", "70", "largest charge current the orchestrator issues, A"),
    ("interchange", "surplus_threshold", "10", "fleet absorption treated as surplus, W"),
    ("interchange", "deal_duration", "3600", "planning horizon written on deals, s"),
    ("interchange", "status_interval", "1", "status exchange period, s"),
    ("interchange", "base_port", "44380", "node i listens on base_port + i"),
    ("injections", "<label>", "", "`<apply_at> <path> <value>`"),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvSetup {
    pub array: PvArrayConfig,
    pub mppt_step: f64,
    pub mppt_period: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSetup {
    pub count: usize,
    pub battery: BatteryParams,
    pub converter: ConverterRating,
    /// One entry for all nodes, or one per node.
    pub initial_soc: Vec<f64>,
    pub cv_node: usize,
    pub cv_kp: f64,
    pub cv_ki: f64,
}

impl NodeSetup {
    pub fn initial_soc_for(&self, id: usize) -> f64 {
        match self.initial_soc.as_slice() {
            [one] => *one,
            many => many.get(id).copied().unwrap_or(0.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupercapSetup {
    pub enabled: bool,
    pub params: SupercapParams,
    pub regulator: ScRegulatorConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterchangeSetup {
    pub enabled: bool,
    pub policy: OrchestratorPolicy,
    pub base_port: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub sim: SimConfig,
    pub pv: PvSetup,
    pub nodes: NodeSetup,
    pub supercap: SupercapSetup,
    pub flex: FlexLoadConfig,
    pub load: LoadProfile,
    pub env: EnvProfile,
    /// Files the profiles were read from, if any.
    pub profile_paths: Option<(PathBuf, PathBuf)>,
    pub injections: Vec<InjectionCommand>,
    pub interchange: InterchangeSetup,
}

impl ScenarioConfig {
    /// The defaulted 4-node, 100 V, 5 kW topology driven by the given profiles.
    pub fn new(load: LoadProfile, env: EnvProfile) -> Self {
        let battery = BatteryParams::default();
        Self {
            name: "scenario".into(),
            sim: SimConfig::energy(),
            pv: PvSetup {
                array: PvArrayConfig::rated_3s10p(),
                mppt_step: 0.5,
                mppt_period: 0.01,
            },
            nodes: NodeSetup {
                count: 4,
                battery,
                converter: ConverterRating::default(),
                initial_soc: vec![0.5],
                cv_node: 0,
                cv_kp: 0.5,
                cv_ki: 20.0,
            },
            supercap: SupercapSetup {
                enabled: true,
                params: SupercapParams::default(),
                regulator: ScRegulatorConfig::default(),
            },
            flex: FlexLoadConfig::default(),
            load,
            env,
            profile_paths: None,
            injections: Vec::new(),
            interchange: InterchangeSetup {
                enabled: false,
                policy: OrchestratorPolicy {
                    soc_min: battery.soc_min * 100.0,
                    soc_max: battery.soc_max * 100.0,
                    ..OrchestratorPolicy::default()
                },
                base_port: DEFAULT_BASE_PORT,
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.sim.validate().map_err(|e| invalid(&e))?;
        self.pv.array.validate().map_err(|e| invalid(&e))?;
        if !(self.pv.mppt_step > 0.0 && self.pv.mppt_period > 0.0) {
            return Err(ConfigError::Invalid("pv.mppt_step and pv.mppt_period must be > 0".into()));
        }
        let n = &self.nodes;
        if n.count == 0 {
            return Err(ConfigError::Invalid("nodes.count must be >= 1".into()));
        }
        if n.cv_node >= n.count {
            return Err(ConfigError::Invalid(format!(
                "nodes.cv_node = {} but nodes.count = {}",
                n.cv_node, n.count
            )));
        }
        n.battery.validate().map_err(|e| invalid(&e))?;
        n.converter.validate().map_err(|e| invalid(&e))?;
        if n.initial_soc.len() != 1 && n.initial_soc.len() != n.count {
            return Err(ConfigError::Invalid(format!(
                "nodes.initial_soc has {} values for {} nodes",
                n.initial_soc.len(),
                n.count
            )));
        }
        if let Some(s) = n.initial_soc.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(ConfigError::Invalid(format!("nodes.initial_soc {s} is outside [0, 1]")));
        }
        PiConfig {
            kp: n.cv_kp,
            ki: n.cv_ki,
            u_min: -1.0,
            u_max: 1.0,
        }
        .validate()
        .map_err(|e| invalid(&e))?;
        self.supercap.params.validate().map_err(|e| invalid(&e))?;
        self.supercap.regulator.validate().map_err(|e| invalid(&e))?;
        self.flex.validate().map_err(|e| invalid(&e))?;
        self.interchange.policy.validate().map_err(ConfigError::Invalid)?;
        let registry = ParamRegistry::new(n.count);
        for cmd in &self.injections {
            registry.validate(&cmd.path, cmd.value).map_err(|e| invalid(&e))?;
            if !(cmd.apply_at >= 0.0) {
                return Err(ConfigError::Invalid(format!(
                    "injection {} has negative apply time",
                    cmd.path
                )));
            }
        }
        Ok(())
    }
}

fn value_err(section: &str, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        section: section.into(),
        key: key.into(),
        message: message.into(),
    }
}

fn num(section: &str, key: &str, raw: &str) -> Result<f64, ConfigError> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| value_err(section, key, format!("`{raw}` is not a number")))?;
    if !v.is_finite() {
        return Err(value_err(section, key, "must be finite"));
    }
    Ok(v)
}

fn int<T: std::str::FromStr>(section: &str, key: &str, raw: &str) -> Result<T, ConfigError> {
    raw.trim()
        .parse()
        .map_err(|_| value_err(section, key, format!("`{raw}` is not a non-negative integer")))
}

fn flag(section: &str, key: &str, raw: &str) -> Result<bool, ConfigError> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(value_err(section, key, format!("`{raw}` is not a boolean"))),
    }
}

/// Unresolved scenario: everything but the profiles, which are read last so
/// that overrides may redirect them.
struct Draft {
    cfg: ScenarioConfig,
    base_dir: PathBuf,
    load_path: Option<PathBuf>,
    env_path: Option<PathBuf>,
    /// `sim.dt`/`sim.duration` given explicitly; otherwise they follow the mode.
    dt_set: bool,
    duration_set: bool,
    pv_dirty: bool,
}

impl Draft {
    fn set(&mut self, section: &str, key: &str, raw: &str) -> Result<(), ConfigError> {
        let c = &mut self.cfg;
        let f = || num(section, key, raw);
        match (section, key) {
            ("sim", "mode") => {
                c.sim.mode = raw
                    .trim()
                    .parse::<SimMode>()
                    .map_err(|m| value_err(section, key, m))?
            }
            ("sim", "dt") => {
                c.sim.dt = f()?;
                self.dt_set = true;
            }
            ("sim", "duration") => {
                c.sim.duration = f()?;
                self.duration_set = true;
            }
            ("sim", "realtime") => c.sim.realtime_pacing = flag(section, key, raw)?,
            ("sim", "seed") => c.sim.seed = int(section, key, raw)?,
            ("sim", "v_grid_setpoint") => c.sim.v_grid_setpoint = f()?,
            ("sim", "droop") => c.sim.droop = f()?,
            ("sim", "bus_capacitance") => c.sim.bus_capacitance = f()?,
            ("sim", "settle_window") => c.sim.settle_window = f()?,

            ("pv", k) => {
                let a = &mut c.pv.array;
                match k {
                    "series_count" => a.series_count = int(section, key, raw)?,
                    "parallel_count" => a.parallel_count = int(section, key, raw)?,
                    "cells_per_module" => a.cells_per_module = int(section, key, raw)?,
                    "rated_power" => a.rated_power = f()?,
                    "rated_voltage" => a.rated_voltage = f()?,
                    "efficiency" => a.cell.efficiency = f()?,
                    "ideality" => a.cell.ideality = f()?,
                    "sat_current" => a.cell.sat_current = f()?,
                    "shunt_resistance" => a.cell.shunt_resistance = f()?,
                    "mppt_step" => c.pv.mppt_step = f()?,
                    "mppt_period" => c.pv.mppt_period = f()?,
                    _ => return Err(unknown(section, key)),
                }
                self.pv_dirty |= !k.starts_with("mppt");
            }

            ("nodes", "count") => c.nodes.count = int(section, key, raw)?,
            ("nodes", "open_circuit_voltage") => c.nodes.battery.open_circuit_voltage = f()?,
            ("nodes", "internal_resistance") => c.nodes.battery.internal_resistance = f()?,
            ("nodes", "capacity_ah") => c.nodes.battery.capacity_ah = f()?,
            ("nodes", "soc_min") => c.nodes.battery.soc_min = f()?,
            ("nodes", "soc_max") => c.nodes.battery.soc_max = f()?,
            ("nodes", "initial_soc") => {
                c.nodes.initial_soc = raw
                    .split(',')
                    .map(|s| num(section, key, s))
                    .collect::<Result<_, _>>()?
            }
            ("nodes", "power_rating") => c.nodes.converter.power_rating = f()?,
            ("nodes", "cv_node") => c.nodes.cv_node = int(section, key, raw)?,
            ("nodes", "cv_kp") => c.nodes.cv_kp = f()?,
            ("nodes", "cv_ki") => c.nodes.cv_ki = f()?,

            ("converter", "v_in") => c.nodes.converter.v_in = f()?,
            ("converter", "v_out") => c.nodes.converter.v_out = f()?,
            ("converter", "i_out") => c.nodes.converter.i_out = f()?,
            ("converter", "switching_freq") => c.nodes.converter.switching_freq = f()?,

            ("supercap", "enabled") => c.supercap.enabled = flag(section, key, raw)?,
            ("supercap", "capacitance") => c.supercap.params.capacitance = f()?,
            ("supercap", "esr") => c.supercap.params.esr = f()?,
            ("supercap", "v_init") => c.supercap.params.v_init = f()?,
            ("supercap", "deadband") => c.supercap.regulator.deadband = f()?,
            ("supercap", "kp") => c.supercap.regulator.pi.kp = f()?,
            ("supercap", "ki") => c.supercap.regulator.pi.ki = f()?,
            ("supercap", "i_max") => {
                let i = f()?;
                let r = &mut c.supercap.regulator;
                r.i_max = i;
                r.pi.u_min = -i;
                r.pi.u_max = i;
            }
            ("supercap", "decay_time") => c.supercap.regulator.decay_time = f()?,

            ("flex", "mode") => {
                c.flex.mode = match raw.trim() {
                    "disabled" => FlexMode::Disabled,
                    "full" => FlexMode::Full,
                    "partial" => FlexMode::Partial,
                    other => {
                        return Err(value_err(
                            section,
                            key,
                            format!("`{other}` is not one of disabled, full, partial"),
                        ))
                    }
                }
            }
            ("flex", "gamma") => c.flex.gamma = f()?,
            ("flex", "p_max") => c.flex.p_max = f()?,

            ("profiles", "load") => self.load_path = Some(self.base_dir.join(raw.trim())),
            ("profiles", "env") => self.env_path = Some(self.base_dir.join(raw.trim())),

            ("interchange", k) => {
                let p = &mut c.interchange.policy;
                match k {
                    "enabled" => c.interchange.enabled = flag(section, key, raw)?,
                    "soc_min" => p.soc_min = f()?,
                    "soc_max" => p.soc_max = f()?,
                    "v_max" => p.v_max = f()?,
                    "i_max" => p.i_max = f()?,
                    "surplus_threshold" => p.surplus_threshold = f()?,
                    "deal_duration" => p.deal_duration = f()?,
                    "status_interval" => p.status_interval = f()?,
                    "base_port" => c.interchange.base_port = int(section, key, raw)?,
                    _ => return Err(unknown(section, key)),
                }
            }

            ("injections", label) => {
                let parts: Vec<&str> = raw.split_whitespace().collect();
                let [at, path, value] = parts.as_slice() else {
                    return Err(value_err(
                        section,
                        label,
                        "expected `<apply_at> <path> <value>`",
                    ));
                };
                c.injections.push(InjectionCommand {
                    apply_at: num(section, label, at)?,
                    path: path.to_string(),
                    value: num(section, label, value)?,
                });
            }

            ("sim" | "nodes" | "converter" | "supercap" | "flex" | "profiles", _) => {
                return Err(unknown(section, key))
            }
            _ => return Err(ConfigError::UnknownSection(section.into())),
        }
        Ok(())
    }

    fn finish(mut self) -> Result<ScenarioConfig, ConfigError> {
        let c = &mut self.cfg;
        if c.sim.mode == SimMode::Transient {
            let t = SimConfig::transient();
            if !self.dt_set {
                c.sim.dt = t.dt;
            }
            if !self.duration_set {
                c.sim.duration = t.duration;
            }
        }
        if self.pv_dirty {
            c.pv.array = c
                .pv
                .array
                .calibrated()
                .map_err(|e| ConfigError::Invalid(format!("pv: {e}")))?;
        }
        c.supercap.regulator.v_ref = c.sim.v_grid_setpoint;
        c.interchange.policy.v_setpoint = c.sim.v_grid_setpoint;

        let load_path = self.load_path.ok_or(ConfigError::MissingProfile("load"))?;
        let env_path = self.env_path.ok_or(ConfigError::MissingProfile("env"))?;
        c.load = parse_load_csv(&load_path).map_err(|source| ConfigError::Profile {
            key: "load",
            path: load_path.clone(),
            source,
        })?;
        c.env = parse_env_csv(&env_path).map_err(|source| ConfigError::Profile {
            key: "env",
            path: env_path.clone(),
            source,
        })?;
        c.profile_paths = Some((load_path, env_path));
        c.validate()?;
        Ok(self.cfg)
    }
}

fn unknown(section: &str, key: &str) -> ConfigError {
    ConfigError::UnknownKey {
        section: section.into(),
        key: key.into(),
    }
}

/// Splits `section.key=value`.
fn split_override(s: &str) -> Result<(&str, &str, &str), ConfigError> {
    let bad = || ConfigError::Override(s.to_string());
    let (lhs, value) = s.split_once('=').ok_or_else(bad)?;
    let (section, key) = lhs.trim().split_once('.').ok_or_else(bad)?;
    if section.is_empty() || key.is_empty() {
        return Err(bad());
    }
    Ok((section, key, value.trim()))
}

/// Parses scenario text. Relative profile paths resolve against `base_dir`.
pub fn parse_scenario_str(
    text: &str,
    base_dir: &Path,
    overrides: &[String],
) -> Result<ScenarioConfig, ConfigError> {
    let source = base_dir.join("<scenario>");
    let ini = Ini::load_from_str(text).map_err(|e| ConfigError::Syntax {
        path: source,
        message: e.to_string(),
    })?;
    let mut draft = Draft {
        cfg: ScenarioConfig::new(LoadProfile::constant(0.0), EnvProfile::constant(0.0, 25.0)),
        base_dir: base_dir.to_path_buf(),
        load_path: None,
        env_path: None,
        dt_set: false,
        duration_set: false,
        pv_dirty: false,
    };
    for (section, props) in ini.iter() {
        let Some(section) = section else {
            if let Some((k, _)) = props.iter().next() {
                return Err(ConfigError::UnknownKey {
                    section: "(none)".into(),
                    key: k.into(),
                });
            }
            continue;
        };
        for (key, value) in props.iter() {
            draft.set(section, key, value)?;
        }
    }
    for o in overrides {
        let (section, key, value) = split_override(o)?;
        draft.set(section, key, value)?;
    }
    draft.finish()
}

/// Reads and parses a scenario file, then applies `section.key=value`
/// overrides in order.
pub fn parse_scenario(
    path: impl AsRef<Path>,
    overrides: &[String],
) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut cfg = parse_scenario_str(&text, base, overrides).map_err(|e| match e {
        ConfigError::Syntax { message, .. } => ConfigError::Syntax {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })?;
    if let Some(stem) = path.file_stem() {
        cfg.name = stem.to_string_lossy().into_owned();
    }
    Ok(cfg)
}
