use std::fmt;
use std::path::{Path, PathBuf};

use quasilin::dnmap::EPS_RANGE;
use quasilin::forward::Preset;
use serde::Deserialize;
use thiserror::Error;

pub const DEFAULT_GRID_N: usize = 33;
pub const DEFAULT_EPS: f64 = 1e-3;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_TAUS: [f64; 3] = [5.0, 10.0, 20.0];
pub const MIN_GRID_N: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Forward,
    Dn,
    Linearize,
    Verify,
    GaugeDemo,
    CgoProbe,
    Recon,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::Dn => "dn",
            Command::Linearize => "linearize",
            Command::Verify => "verify",
            Command::GaugeDemo => "gauge-demo",
            Command::CgoProbe => "cgo-probe",
            Command::Recon => "recon",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Coefficient fields read from CSV instead of the preset.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvFields {
    pub sigma: Option<PathBuf>,
    pub q: Option<PathBuf>,
    pub source: Option<PathBuf>,
}

impl CsvFields {
    fn overlay(self, over: CsvFields) -> CsvFields {
        CsvFields {
            sigma: over.sigma.or(self.sigma),
            q: over.q.or(self.q),
            source: over.source.or(self.source),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub grid_n: usize,
    pub eps: f64,
    pub tol: f64,
    pub tau: Vec<f64>,
    pub seed: u64,
    pub preset: Preset,
    pub fields: CsvFields,
    pub output_dir: PathBuf,
    /// `gauge-demo` only: run the linear counterexample.
    pub linear: bool,
}

/// Optional settings shared by the config file and the command line.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub grid_n: Option<i64>,
    pub eps: Option<f64>,
    pub tol: Option<f64>,
    pub tau: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub fields: CsvFields,
}

impl Overrides {
    /// Values set in `over` win.
    pub fn overlay(self, over: Overrides) -> Overrides {
        Overrides {
            grid_n: over.grid_n.or(self.grid_n),
            eps: over.eps.or(self.eps),
            tol: over.tol.or(self.tol),
            tau: over.tau.or(self.tau),
            seed: over.seed.or(self.seed),
            preset: over.preset.or(self.preset),
            output_dir: over.output_dir.or(self.output_dir),
            fields: self.fields.overlay(over.fields),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {message}")]
    Read { path: String, message: String },
    #[error("config file {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{key}: {message}")]
    Invalid { key: &'static str, message: String },
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        message: message.into(),
    }
}

pub fn read_file(path: &Path) -> Result<Overrides, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_file(&text).map_err(|message| ConfigError::Parse {
        path: path.display().to_string(),
        message,
    })
}

pub fn parse_file(text: &str) -> Result<Overrides, String> {
    toml::from_str(text).map_err(|e| e.to_string().trim().to_string())
}

/// Merges file and flag values over the defaults and validates the result.
pub fn parse_config(
    command: Command,
    linear: bool,
    file: Option<Overrides>,
    flags: Overrides,
) -> Result<RunConfig, ConfigError> {
    let o = file.unwrap_or_default().overlay(flags);
    let grid_n = match o.grid_n {
        None => DEFAULT_GRID_N,
        Some(n) if n >= MIN_GRID_N as i64 => n as usize,
        Some(n) => {
            return Err(invalid(
                "grid_n",
                format!("{n} is below the minimum {MIN_GRID_N}"),
            ))
        }
    };
    let eps = o.eps.unwrap_or(DEFAULT_EPS);
    if !(EPS_RANGE.0..=EPS_RANGE.1).contains(&eps) {
        return Err(invalid(
            "eps",
            format!("{eps} outside [{:e}, {:e}]", EPS_RANGE.0, EPS_RANGE.1),
        ));
    }
    let tol = o.tol.unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(invalid("tol", format!("{tol} outside (0, 1)")));
    }
    let tau = o.tau.unwrap_or_else(|| DEFAULT_TAUS.to_vec());
    if tau.is_empty() {
        return Err(invalid("tau", "empty list"));
    }
    if let Some(t) = tau.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(invalid("tau", format!("{t} is not a non-negative number")));
    }
    let preset = match o.preset {
        None => Preset::Manufactured,
        Some(name) => Preset::parse(&name).ok_or_else(|| {
            invalid(
                "preset",
                format!(
                    "unknown preset {name:?}; expected constant, affine, manufactured or linear"
                ),
            )
        })?,
    };
    Ok(RunConfig {
        command,
        grid_n,
        eps,
        tol,
        tau,
        seed: o.seed.unwrap_or(DEFAULT_SEED),
        preset,
        fields: o.fields,
        output_dir: o.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        linear,
    })
}

impl RunConfig {
    /// `key = value` lines echoed into the report.
    pub fn echo(&self) -> Vec<(String, String)> {
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map_or("-".to_string(), |p| p.display().to_string())
        };
        vec![
            ("command".into(), self.command.to_string()),
            ("grid_n".into(), self.grid_n.to_string()),
            ("eps".into(), format!("{:e}", self.eps)),
            ("tol".into(), format!("{:e}", self.tol)),
            ("tau".into(), format!("{:?}", self.tau)),
            ("seed".into(), self.seed.to_string()),
            ("preset".into(), self.preset.name().to_string()),
            ("fields.sigma".into(), path(&self.fields.sigma)),
            ("fields.q".into(), path(&self.fields.q)),
            ("fields.source".into(), path(&self.fields.source)),
            ("output_dir".into(), self.output_dir.display().to_string()),
            ("linear".into(), self.linear.to_string()),
        ]
    }
}
