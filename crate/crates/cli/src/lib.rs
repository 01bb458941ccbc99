//! Configuration, report and experiment dispatch behind the `quasilin`
//! binary.

pub mod commands;
pub mod config;
pub mod report;

use std::path::Path;
use std::time::Instant;

pub use commands::{run, Output};
pub use config::{parse_config, Command, ConfigError, Overrides, RunConfig};
pub use report::{Report, Status};

/// Runs `cfg`, fills in provenance and writes `report.txt` plus the CSV
/// artifacts into the output directory.
pub fn execute(cfg: &RunConfig) -> Result<Report, ExecError> {
    let start = Instant::now();
    let mut out = run(cfg)?;
    let mut provenance: Vec<(String, String)> = cfg
        .echo()
        .into_iter()
        .map(|(k, v)| (format!("config.{k}"), v))
        .collect();
    provenance.push(("version".into(), env!("CARGO_PKG_VERSION").into()));
    provenance.append(&mut out.report.provenance);
    provenance.push((
        "wall_time_s".into(),
        format!("{:.3}", start.elapsed().as_secs_f64()),
    ));
    out.report.provenance = provenance;
    write_outputs(&cfg.output_dir, &out)?;
    Ok(out.report)
}

fn write_outputs(dir: &Path, out: &Output) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, content) in &out.files {
        std::fs::write(dir.join(name), content)?;
    }
    std::fs::write(dir.join("report.txt"), out.report.render())
}

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("writing outputs: {0}")]
    Io(#[from] std::io::Error),
}
