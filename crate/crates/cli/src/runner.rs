//! Output writing: one trials CSV, one summary CSV (when the experiment has
//! aggregates) and a JSON manifest per run. The CSVs are byte-reproducible
//! from `(config, master seed)`; the manifest carries everything that is
//! allowed to vary, such as wall time.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use fglab_core::Result;

use crate::csvout::CsvTable;

pub struct RunArtifacts {
    pub trials_path: PathBuf,
    pub summary_path: Option<PathBuf>,
    pub manifest_path: PathBuf,
}

pub struct RunOutcome<'a> {
    pub name: &'a str,
    pub config_echo: serde_json::Value,
    pub trials: &'a CsvTable,
    pub summary: Option<&'a CsvTable>,
    pub attempted: usize,
    pub recorded: usize,
    pub skipped: usize,
}

pub fn write_run(
    out_dir: &Path,
    outcome: RunOutcome<'_>,
    started: Instant,
) -> Result<RunArtifacts> {
    std::fs::create_dir_all(out_dir)?;
    let trials_path = out_dir.join(format!("{}_trials.csv", outcome.name));
    std::fs::write(&trials_path, outcome.trials.render())?;
    let summary_path = match outcome.summary {
        Some(summary) => {
            let p = out_dir.join(format!("{}_summary.csv", outcome.name));
            std::fs::write(&p, summary.render())?;
            Some(p)
        }
        None => None,
    };
    let manifest = json!({
        "experiment": outcome.name,
        "config": outcome.config_echo,
        "crate_version": env!("CARGO_PKG_VERSION"),
        "trials_attempted": outcome.attempted,
        "trials_recorded": outcome.recorded,
        "trials_skipped": outcome.skipped,
        "wall_time_ms": started.elapsed().as_millis() as u64,
    });
    let manifest_path = out_dir.join(format!("{}_manifest.json", outcome.name));
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(RunArtifacts {
        trials_path,
        summary_path,
        manifest_path,
    })
}
