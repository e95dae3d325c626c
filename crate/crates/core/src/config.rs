//! Flat, typed key-value configuration with sections.
//!
//! ```text
//! [model]
//! eps = 0.25
//! p = 1.0
//! ```
//!
//! Every key a subcommand reads is marked consumed; unknown keys are
//! rejected with their line number. Floats round-trip through the standard
//! shortest representation, so rewritten artifacts are byte-stable.

use crate::drift::{DriftModel, DriftSpec};
use crate::error::ConfigError;
use crate::geometry::ModelParams;
use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    value: String,
    consumed: bool,
}

/// Parsed configuration file with consumption tracking.
#[derive(Debug)]
pub struct ExperimentConfig {
    path: String,
    sections: BTreeMap<String, RefCell<BTreeMap<String, Entry>>>,
    touched: RefCell<std::collections::BTreeSet<String>>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        let mut sections: BTreeMap<String, RefCell<BTreeMap<String, Entry>>> = BTreeMap::new();
        let mut current = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| ConfigError::Parse {
                    path: path.into(),
                    line: line_no,
                    message: "unterminated section header".into(),
                })?;
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                path: path.into(),
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            if current.is_empty() {
                return Err(ConfigError::Parse {
                    path: path.into(),
                    line: line_no,
                    message: "key outside of any [section]".into(),
                });
            }
            let prev = sections.get_mut(&current).unwrap().get_mut().insert(
                key.trim().to_string(),
                Entry {
                    line: line_no,
                    value: value.trim().to_string(),
                    consumed: false,
                },
            );
            if prev.is_some() {
                return Err(ConfigError::Parse {
                    path: path.into(),
                    line: line_no,
                    message: format!("duplicate key `{}`", key.trim()),
                });
            }
        }
        Ok(Self {
            path: path.into(),
            sections,
            touched: RefCell::new(Default::default()),
        })
    }

    fn raw(&self, section: &str, key: &str) -> Option<String> {
        self.touched.borrow_mut().insert(section.to_string());
        let sec = self.sections.get(section)?;
        let mut map = sec.borrow_mut();
        let entry = map.get_mut(key)?;
        entry.consumed = true;
        Some(entry.value.clone())
    }

    fn required(&self, section: &str, key: &str) -> Result<String, ConfigError> {
        self.raw(section, key).ok_or_else(|| ConfigError::MissingKey {
            section: section.into(),
            key: key.into(),
        })
    }

    pub fn f64(&self, section: &str, key: &str) -> Result<f64, ConfigError> {
        let v = self.required(section, key)?;
        v.parse().map_err(|_| ConfigError::BadValue {
            key: format!("{section}.{key}"),
            message: format!("expected a number, got `{v}`"),
        })
    }

    pub fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
                key: format!("{section}.{key}"),
                message: format!("expected a number, got `{v}`"),
            }),
        }
    }

    pub fn usize_or(&self, section: &str, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
                key: format!("{section}.{key}"),
                message: format!("expected an integer, got `{v}`"),
            }),
        }
    }

    pub fn u64_or(&self, section: &str, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
                key: format!("{section}.{key}"),
                message: format!("expected an integer, got `{v}`"),
            }),
        }
    }

    pub fn bool_or(&self, section: &str, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => match v.as_str() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(ConfigError::BadValue {
                    key: format!("{section}.{key}"),
                    message: format!("expected a boolean, got `{v}`"),
                }),
            },
        }
    }

    pub fn string_or(&self, section: &str, key: &str, default: &str) -> Result<String, ConfigError> {
        Ok(self.raw(section, key).unwrap_or_else(|| default.to_string()))
    }

    pub fn f64_list(&self, section: &str, key: &str) -> Result<Vec<f64>, ConfigError> {
        let v = self.required(section, key)?;
        v.split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| ConfigError::BadValue {
                    key: format!("{section}.{key}"),
                    message: format!("expected a comma-separated number list, got `{v}`"),
                })
            })
            .collect()
    }

    /// Model parameters from `[model]`.
    pub fn model(&self) -> Result<ModelParams, ConfigError> {
        let eps = self.f64("model", "eps")?;
        let p = self.f64("model", "p")?;
        ModelParams::new(eps, p).map_err(|e| ConfigError::BadValue {
            key: "model.eps/p".into(),
            message: e.to_string(),
        })
    }

    /// Drift field from `[drift]`.
    pub fn drift(&self) -> Result<DriftSpec, ConfigError> {
        let preset = self.string_or("drift", "preset", "zero")?;
        let spec = match preset.as_str() {
            "zero" => DriftSpec::zero(),
            "const_leg" => DriftSpec::const_leg(
                self.f64("drift", "value")?,
                self.f64_or("drift", "upto", 1.0)?,
            ),
            "smooth_bump" => DriftSpec::smooth_bump(
                self.f64_or("drift", "leg_amp", 0.5)?,
                self.f64_or("drift", "plane_amp", 0.4)?,
            ),
            "custom_table" => {
                let ys = self.f64_list("drift", "ys")?;
                let values = self.f64_list("drift", "values")?;
                if ys.len() != values.len() || ys.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(ConfigError::BadValue {
                        key: "drift.ys/values".into(),
                        message: "need increasing ys and matching value count".into(),
                    });
                }
                DriftSpec::new(
                    DriftModel::CustomTable { ys, values },
                    f64::INFINITY,
                    f64::INFINITY,
                    self.f64_or("drift", "cap", 8.0)?,
                )
            }
            other => {
                return Err(ConfigError::BadValue {
                    key: "drift.preset".into(),
                    message: format!(
                        "unknown preset `{other}` (zero, const_leg, smooth_bump, custom_table)"
                    ),
                })
            }
        };
        Ok(spec)
    }

    /// Rejects any unconsumed key within the sections this run read,
    /// naming its line. Sections belonging to other subcommands are left
    /// alone, so one shared file can drive every command.
    pub fn finish(&self) -> Result<(), ConfigError> {
        let touched = self.touched.borrow();
        for (section, entries) in &self.sections {
            if !touched.contains(section) {
                continue;
            }
            for (key, entry) in entries.borrow().iter() {
                if !entry.consumed {
                    return Err(ConfigError::UnknownKey {
                        path: self.path.clone(),
                        line: entry.line,
                        section: section.clone(),
                        key: key.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# comment
[model]
eps = 0.25
p = 1.0

[sim]
dt = 1e-4      # inline comment
n_paths = 1000
mode = girsanov
flags = 0.1, 0.2, 0.3
";

    #[test]
    fn parses_and_types() {
        let c = ExperimentConfig::parse(SAMPLE, "test.cfg").unwrap();
        assert_eq!(c.f64("model", "eps").unwrap(), 0.25);
        assert_eq!(c.f64("sim", "dt").unwrap(), 1e-4);
        assert_eq!(c.usize_or("sim", "n_paths", 0).unwrap(), 1000);
        assert_eq!(c.string_or("sim", "mode", "x").unwrap(), "girsanov");
        assert_eq!(c.f64_list("sim", "flags").unwrap(), vec![0.1, 0.2, 0.3]);
        assert!(c.model().is_ok());
        assert!(c.finish().is_ok());
    }

    #[test]
    fn rejects_unknown_keys_with_line() {
        let c = ExperimentConfig::parse(SAMPLE, "test.cfg").unwrap();
        let _ = c.f64("model", "eps");
        let err = c.finish().unwrap_err();
        match err {
            ConfigError::UnknownKey { line, key, .. } => {
                assert_eq!(key, "p");
                assert_eq!(line, 4);
            }
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_values_naming_key() {
        let c = ExperimentConfig::parse("[sim]\ndt = fast\n", "t.cfg").unwrap();
        let err = c.f64("sim", "dt").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { ref key, .. } if key == "sim.dt"));
        let c = ExperimentConfig::parse("[sim]\n", "t.cfg").unwrap();
        assert!(matches!(
            c.f64("sim", "dt").unwrap_err(),
            ConfigError::MissingKey { .. }
        ));
    }

    #[test]
    fn rejects_syntax_errors_with_line() {
        assert!(matches!(
            ExperimentConfig::parse("[sim\n", "t.cfg").unwrap_err(),
            ConfigError::Parse { line: 1, .. }
        ));
        assert!(matches!(
            ExperimentConfig::parse("[s]\njust a line\n", "t.cfg").unwrap_err(),
            ConfigError::Parse { line: 2, .. }
        ));
        assert!(matches!(
            ExperimentConfig::parse("key = 1\n", "t.cfg").unwrap_err(),
            ConfigError::Parse { line: 1, .. }
        ));
        assert!(matches!(
            ExperimentConfig::parse("[s]\na = 1\na = 2\n", "t.cfg").unwrap_err(),
            ConfigError::Parse { line: 3, .. }
        ));
    }

    #[test]
    fn drift_presets_resolve() {
        let c = ExperimentConfig::parse(
            "[drift]\npreset = const_leg\nvalue = 0.5\nupto = 1.2\n",
            "t.cfg",
        )
        .unwrap();
        let d = c.drift().unwrap();
        assert_eq!(d.on_leg(0.6), 0.5);
        assert!(c.finish().is_ok());

        let c = ExperimentConfig::parse("[drift]\npreset = bogus\n", "t.cfg").unwrap();
        assert!(c.drift().is_err());
    }
}
