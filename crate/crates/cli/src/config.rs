//! Run configuration: defaults, an optional `key = value` file, then flags.
//!
//! ```text
//! # comment
//! subcommand = primary      # used when no subcommand is given on the command line
//! seed = 7                  # top-level keys apply to every subcommand that has them
//! [primary]                 # section keys apply to that subcommand only
//! eps = 1 + 0.1*t + 0.05*t^2
//! chi = 0.7
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use covkit::fieldcalc::{parse_expression, Expression};

use crate::params::{self, Kind, Param, Sub};
use crate::CliError;

type Entry = (String, String, usize);

/// A parsed, not yet validated configuration file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    pub subcommand: Option<(String, usize)>,
    pub top: Vec<Entry>,
    pub sections: BTreeMap<String, Vec<Entry>>,
}

pub fn parse_config(text: &str) -> Result<ConfigFile, CliError> {
    let mut file = ConfigFile::default();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| CliError::ConfigSyntax {
                    line,
                    message: "section header must be '[name]'".into(),
                })?
                .trim();
            if params::find(name).is_none() {
                return Err(CliError::ConfigSyntax {
                    line,
                    message: format!("unknown section '{name}'"),
                });
            }
            file.sections.entry(name.to_string()).or_default();
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| CliError::ConfigSyntax {
            line,
            message: "expected 'key = value'".into(),
        })?;
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        if key.is_empty() {
            return Err(CliError::ConfigSyntax {
                line,
                message: "empty key".into(),
            });
        }
        match &section {
            None if key == "subcommand" => {
                if params::find(&value).is_none() {
                    return Err(CliError::ConfigSyntax {
                        line,
                        message: format!("unknown subcommand '{value}'"),
                    });
                }
                file.subcommand = Some((value, line));
            }
            None => {
                if !params::known_anywhere(&key) {
                    return Err(CliError::ConfigSyntax {
                        line,
                        message: format!("unknown key '{key}'"),
                    });
                }
                file.top.push((key, value, line));
            }
            Some(name) => {
                let sub = params::find(name).expect("validated section");
                if sub.param(&key).is_none() {
                    return Err(CliError::ConfigSyntax {
                        line,
                        message: format!("'{key}' is not an option of '{name}'"),
                    });
                }
                file.sections.get_mut(name).expect("section exists").push((key, value, line));
            }
        }
    }
    Ok(file)
}

/// Fully validated settings for one subcommand.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub subcommand: &'static Sub,
    values: BTreeMap<&'static str, String>,
}

impl PartialEq for Sub {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

impl RunConfig {
    /// Merges defaults, `file` and `flags` (highest precedence) for `sub`, then validates.
    pub fn build(sub: &'static Sub, file: Option<&ConfigFile>, flags: &[(String, String)]) -> Result<Self, CliError> {
        let mut values: BTreeMap<&'static str, String> = BTreeMap::new();
        for p in sub.all_params() {
            if let Some(d) = p.default {
                values.insert(p.name, d.to_string());
            }
        }
        if let Some(file) = file {
            for (key, value, _) in &file.top {
                if let Some(p) = sub.param(key) {
                    values.insert(p.name, value.clone());
                }
            }
            for (key, value, _) in file.sections.get(sub.name).into_iter().flatten() {
                let p = sub.param(key).expect("validated on parse");
                values.insert(p.name, value.clone());
            }
        }
        for (key, value) in flags {
            let p = sub.param(key).ok_or_else(|| CliError::Usage(format!("unknown option '--{key}'")))?;
            values.insert(p.name, value.clone());
        }
        let cfg = RunConfig { subcommand: sub, values };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        for p in self.subcommand.all_params() {
            if self.values.contains_key(p.name) {
                self.check(p)?;
            }
        }
        Ok(())
    }

    fn check(&self, p: &Param) -> Result<(), CliError> {
        match p.kind {
            Kind::Float => self.f64(p.name).map(drop),
            Kind::Positive => {
                let v = self.f64(p.name)?;
                if v > 0.0 {
                    Ok(())
                } else {
                    Err(invalid(p.name, format!("must be positive, got {v}")))
                }
            }
            Kind::Int(_) => self.int(p.name).map(drop),
            Kind::Floats(_) => self.floats(p.name).map(drop),
            Kind::Formula(_) | Kind::FormulaIn(_) => self.formula(p.name).map(drop),
            Kind::FormulaList(_) | Kind::Formulas(_) => self.formulas(p.name).map(drop),
            Kind::Names => self.names(p.name).map(drop),
            Kind::Text => Ok(()),
        }
    }

    fn param(&self, name: &str) -> &'static Param {
        self.subcommand
            .param(name)
            .unwrap_or_else(|| panic!("'{name}' is not an option of '{}'", self.subcommand.name))
    }

    pub fn raw(&self, name: &str) -> Option<&str> {
        self.param(name);
        self.values.get(name).map(String::as_str)
    }

    fn required(&self, name: &str) -> Result<&str, CliError> {
        self.raw(name).ok_or_else(|| invalid(name, "is required".into()))
    }

    pub fn f64(&self, name: &str) -> Result<f64, CliError> {
        let raw = self.required(name)?;
        let v: f64 = raw
            .trim()
            .parse()
            .map_err(|_| invalid(name, format!("'{raw}' is not a number")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(invalid(name, format!("'{raw}' is not finite")))
        }
    }

    fn int(&self, name: &str) -> Result<i64, CliError> {
        let raw = self.required(name)?;
        let v: i64 = raw
            .trim()
            .parse()
            .map_err(|_| invalid(name, format!("'{raw}' is not an integer")))?;
        if let Kind::Int(min) = self.param(name).kind {
            if v < min {
                return Err(invalid(name, format!("must be at least {min}, got {v}")));
            }
        }
        Ok(v)
    }

    pub fn usize(&self, name: &str) -> Result<usize, CliError> {
        let v = self.int(name)?;
        usize::try_from(v).map_err(|_| invalid(name, format!("must be non-negative, got {v}")))
    }

    pub fn u64(&self, name: &str) -> Result<u64, CliError> {
        let v = self.int(name)?;
        u64::try_from(v).map_err(|_| invalid(name, format!("must be non-negative, got {v}")))
    }

    pub fn floats(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let raw = self.required(name)?;
        let vals = raw
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| invalid(name, format!("'{}' is not a number", s.trim())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Kind::Floats(Some(n)) = self.param(name).kind {
            if vals.len() != n {
                return Err(invalid(name, format!("expects {n} comma-separated numbers, got {}", vals.len())));
            }
        }
        Ok(vals)
    }

    pub fn names(&self, name: &str) -> Result<Vec<String>, CliError> {
        let raw = self.required(name)?;
        let names: Vec<String> = raw.split(',').map(|s| s.trim().to_string()).collect();
        for (i, n) in names.iter().enumerate() {
            let ok = n.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !ok {
                return Err(invalid(name, format!("'{n}' is not an identifier")));
            }
            if names[..i].contains(n) {
                return Err(invalid(name, format!("'{n}' is repeated")));
            }
        }
        Ok(names)
    }

    /// Variables a formula parameter may use.
    pub fn variables(&self, name: &str) -> Result<Vec<String>, CliError> {
        match self.param(name).kind {
            Kind::Formula(vars) | Kind::FormulaList(vars) => Ok(vars.iter().map(|s| s.to_string()).collect()),
            Kind::FormulaIn(other) | Kind::Formulas(other) => self.names(other),
            _ => panic!("'{name}' is not a formula option"),
        }
    }

    pub fn formula(&self, name: &str) -> Result<Expression, CliError> {
        let vars = self.variables(name)?;
        let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
        parse_expression(self.required(name)?, &refs).map_err(|e| invalid(name, e.to_string()))
    }

    pub fn formulas(&self, name: &str) -> Result<Vec<Expression>, CliError> {
        let vars = self.variables(name)?;
        let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
        self.required(name)?
            .split(';')
            .map(|s| parse_expression(s, &refs).map_err(|e| invalid(name, e.to_string())))
            .collect()
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.u64("seed")
    }

    pub fn output(&self) -> Option<&str> {
        self.raw("output")
    }
}

fn invalid(field: &str, message: String) -> CliError {
    CliError::Invalid {
        field: field.to_string(),
        message,
    }
}

/// Reads and parses a configuration file.
pub fn read_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Loads `path`, picks the subcommand (argument first, then the file's
/// `subcommand` key), applies `flags` on top and validates.
pub fn load_config(path: &Path, subcommand: Option<&str>, flags: &[(String, String)]) -> Result<RunConfig, CliError> {
    let file = read_config(path)?;
    let name = match (subcommand, &file.subcommand) {
        (Some(s), _) => s.to_string(),
        (None, Some((s, _))) => s.clone(),
        (None, None) => return Err(CliError::Usage("no subcommand given on the command line or in the config file".into())),
    };
    let sub = params::find(&name).ok_or_else(|| CliError::Usage(format!("unknown subcommand '{name}'")))?;
    RunConfig::build(sub, Some(&file), flags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_file_flags_precedence() {
        let file = parse_config("chi = 0.1\n[primary]\nm = 2.5\nrho = 0.5\n").unwrap();
        let sub = params::find("primary").unwrap();
        let cfg = RunConfig::build(sub, Some(&file), &flags(&[("rho", "0.25")])).unwrap();
        assert_eq!(cfg.f64("chi").unwrap(), 0.1);
        assert_eq!(cfg.f64("m").unwrap(), 2.5);
        assert_eq!(cfg.f64("rho").unwrap(), 0.25);
        assert_eq!(cfg.f64("n").unwrap(), 1.0);
        assert_eq!(cfg.seed().unwrap(), 42);
        // top-level keys other subcommands do not use are ignored for them
        let frame = RunConfig::build(params::find("frame").unwrap(), Some(&file), &[]).unwrap();
        assert_eq!(frame.f64("c").unwrap(), 1.0);
    }

    #[test]
    fn syntax_errors_name_the_line() {
        let err = |t: &str| match parse_config(t) {
            Err(CliError::ConfigSyntax { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(err("seed = 1\nnonsense\n"), 2);
        assert_eq!(err("[primary\n"), 1);
        assert_eq!(err("\n\n[nosuch]\n"), 3);
        assert_eq!(err("[frame]\neps = t\n"), 2);
        assert_eq!(err("bogus = 1"), 1);
        assert_eq!(err("subcommand = dance"), 1);
    }

    #[test]
    fn validation_errors_name_the_field() {
        let sub = params::find("flow").unwrap();
        let field = |f: &[(&str, &str)]| match RunConfig::build(sub, None, &flags(f)) {
            Err(CliError::Invalid { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(field(&[("tol", "-1e-3")]), "tol");
        assert_eq!(field(&[("rho", "abc")]), "rho");
        assert_eq!(field(&[("b", "y; -q")]), "b");
        assert_eq!(field(&[("coords", "x, 1y")]), "coords");
        assert_eq!(field(&[("order", "-2")]), "order");
        let sub = params::find("primary").unwrap();
        assert!(matches!(
            RunConfig::build(sub, None, &flags(&[("point", "1, 2, 3")])),
            Err(CliError::Invalid { field, .. }) if field == "point"
        ));
    }

    #[test]
    fn formula_lists_use_coordinates() {
        let sub = params::find("flow").unwrap();
        let cfg = RunConfig::build(sub, None, &flags(&[("coords", "u, v, w"), ("b", "v; w; -u"), ("c", "0"), ("psi", "u*w"), ("point", "1,2,3")])).unwrap();
        assert_eq!(cfg.formulas("b").unwrap().len(), 3);
        assert_eq!(cfg.floats("point").unwrap(), vec![1.0, 2.0, 3.0]);
    }
}
