//! Scenario runner, outputs and figure data.

pub mod config;
pub mod figures;
pub mod output;
pub mod selfcheck;
pub mod sim;
pub mod summary;

use std::path::Path;

use crate::Result;
use config::ScenarioConfig;
use summary::Summary;

/// Run a scenario and write its outputs into `dir`.
pub fn run_to_dir(cfg: &ScenarioConfig, dir: &Path) -> Result<Summary> {
    let trace = sim::run_scenario(cfg)?;
    let summary = summary::summarize(&trace, cfg.dt);
    output::write_run(dir, cfg, &trace, &summary)?;
    Ok(summary)
}
