//! Runtime-mutable parameters addressable by dotted path.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InjectionError {
    #[error("unknown parameter `{path}`; valid paths: {}", valid.join(", "))]
    UnknownPath { path: String, valid: Vec<String> },
    #[error("{path} = {value} is out of range: {bound}")]
    OutOfRange {
        path: String,
        value: f64,
        bound: String,
    },
}

/// A resolved parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    /// W/m²
    Irradiance,
    /// K
    Temperature,
    NonflexPower,
    NonflexCurrent,
    FlexGamma,
    FlexPmax,
    NodeSoc(usize),
    /// 0 or 1
    NodeOnline(usize),
    /// 0 or 1
    SupercapEnabled,
    VgridSetpoint,
}

const GLOBAL: [(&str, Param); 8] = [
    ("env.irradiance", Param::Irradiance),
    ("env.temperature", Param::Temperature),
    ("load.nonflex_power", Param::NonflexPower),
    ("load.nonflex_current", Param::NonflexCurrent),
    ("flex.gamma", Param::FlexGamma),
    ("flex.p_max", Param::FlexPmax),
    ("supercap.enabled", Param::SupercapEnabled),
    ("sim.v_grid_setpoint", Param::VgridSetpoint),
];

/// Dotted-path parameter table for a grid with `node_count` BESS nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamRegistry {
    node_count: usize,
}

impl ParamRegistry {
    pub fn new(node_count: usize) -> Self {
        Self { node_count }
    }

    pub fn paths(&self) -> Vec<String> {
        let mut out: Vec<String> = GLOBAL.iter().map(|(p, _)| p.to_string()).collect();
        for i in 0..self.node_count {
            out.push(format!("node.{i}.soc"));
            out.push(format!("node.{i}.online"));
        }
        out
    }

    pub fn resolve(&self, path: &str) -> Result<Param, InjectionError> {
        if let Some((_, p)) = GLOBAL.iter().find(|(name, _)| *name == path) {
            return Ok(*p);
        }
        let parts: Vec<&str> = path.split('.').collect();
        if let ["node", idx, field] = parts.as_slice() {
            if let Ok(i) = idx.parse::<usize>() {
                if i < self.node_count && idx.bytes().all(|b| b.is_ascii_digit()) {
                    match *field {
                        "soc" => return Ok(Param::NodeSoc(i)),
                        "online" => return Ok(Param::NodeOnline(i)),
                        _ => {}
                    }
                }
            }
        }
        Err(InjectionError::UnknownPath {
            path: path.to_string(),
            valid: self.paths(),
        })
    }

    /// Resolves `path` and checks `value` against the parameter's static bounds.
    pub fn validate(&self, path: &str, value: f64) -> Result<Param, InjectionError> {
        let param = self.resolve(path)?;
        let bound = |ok: bool, text: &str| {
            if ok && value.is_finite() {
                Ok(param)
            } else {
                Err(InjectionError::OutOfRange {
                    path: path.to_string(),
                    value,
                    bound: text.to_string(),
                })
            }
        };
        match param {
            Param::Irradiance => bound((0.0..=2000.0).contains(&value), "0 <= W/m² <= 2000"),
            Param::Temperature => bound((150.0..=400.0).contains(&value), "150 K <= T <= 400 K"),
            Param::NonflexPower | Param::FlexGamma | Param::FlexPmax => {
                bound(value >= 0.0, "must be >= 0")
            }
            Param::NonflexCurrent => bound(value >= 0.0, "must be >= 0"),
            Param::NodeSoc(_) => bound((0.0..=1.0).contains(&value), "0 <= soc <= 1"),
            Param::NodeOnline(_) | Param::SupercapEnabled => {
                bound(value == 0.0 || value == 1.0, "must be 0 or 1")
            }
            Param::VgridSetpoint => bound(value > 0.0 && value <= 1000.0, "0 < V <= 1000"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolves_known_paths() {
        let r = ParamRegistry::new(4);
        assert_eq!(r.resolve("node.1.soc").unwrap(), Param::NodeSoc(1));
        assert_eq!(r.resolve("env.temperature").unwrap(), Param::Temperature);
        assert!(r.resolve("node.4.soc").is_err());
        assert!(r.resolve("node.+1.soc").is_err());
    }

    #[test]
    fn unknown_path_lists_valid_ones() {
        let err = ParamRegistry::new(2).resolve("bogus.x").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus.x"));
        assert!(msg.contains("env.irradiance"));
        assert!(msg.contains("node.1.online"));
    }

    #[test]
    fn range_errors_cite_bound() {
        let r = ParamRegistry::new(1);
        let err = r.validate("node.0.soc", 1.5).unwrap_err();
        assert!(err.to_string().contains("0 <= soc <= 1"));
        assert!(r.validate("env.irradiance", -1.0).is_err());
        assert!(r.validate("env.irradiance", 400.0).is_ok());
    }
}
