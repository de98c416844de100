//! Code-version stamp written next to every output.

use serde::{Deserialize, Serialize};

use crate::csvio::{Schema, SummaryRow, SweepRow, VerifyRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub package: String,
    pub version: String,
    pub git_revision: String,
    pub checkpoint_format: String,
    pub csv_schemas: Vec<String>,
    pub parallel: bool,
}

impl Stamp {
    pub fn current() -> Self {
        Self {
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            git_revision: option_env!("RISKGRAD_GIT_REVISION").unwrap_or("unknown").to_string(),
            checkpoint_format: riskgrad_core::algos::checkpoint::CHECKPOINT_FORMAT.to_string(),
            csv_schemas: vec![schema::<SweepRow>(), schema::<VerifyRow>(), schema::<SummaryRow>()],
            parallel: riskgrad_core::par::is_parallel(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stamp serializes") + "\n"
    }
}

fn schema<T: Schema>() -> String {
    format!("{}/{}", T::NAME, T::VERSION)
}
