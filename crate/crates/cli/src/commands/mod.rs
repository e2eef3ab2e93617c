pub mod filter;
pub mod least_action;
pub mod linear_analysis;
pub mod simulate;

use std::path::PathBuf;

use crate::config::RunConfig;

pub use filter::{cmd_filter, FilterReport};
pub use least_action::{cmd_least_action, LeastActionReport};
pub use linear_analysis::{cmd_linear_analysis, LinearReport};
pub use simulate::{cmd_simulate, SimulateReport};

/// Command-line overrides applied on top of a [`RunConfig`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub allow_blowup: bool,
}

impl RunOptions {
    pub fn out_dir(&self, config: &RunConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| config.output.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// A blow-up or failed run, already recorded in the written report.
#[derive(Debug, Clone)]
pub struct Incident(pub String);

pub(crate) fn fail_on_incidents(incidents: &[Incident], allow: bool) -> anyhow::Result<()> {
    if incidents.is_empty() {
        return Ok(());
    }
    for i in incidents {
        log::warn!("{}", i.0);
    }
    if allow {
        return Ok(());
    }
    let list: Vec<&str> = incidents.iter().map(|i| i.0.as_str()).collect();
    anyhow::bail!("{} (pass --allow-blowup to accept)", list.join("; "))
}
