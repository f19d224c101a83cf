//! Experimental design: space-filling sampling, campaign runs and reports.

mod campaign;
mod report;
pub mod wsp;

use thiserror::Error;

use crate::harness::HarnessError;

#[cfg(feature = "parallel")]
pub use campaign::run_cells_parallel;
pub use campaign::wsp_sample;
pub use campaign::{
    cells, header, median, read_results, read_results_from, run_campaign, run_campaign_to_file,
    run_cell, run_cells_sequential, run_seed, write_results, CampaignSpec, Contender, Execution,
    ModeKind, ParamSpace, Point, PointSpec, ResultRow, RowStatus, SpaceLoss, SCHEMA_VERSION,
};
pub use report::{ecdf, ecdf_by_contender, ratio, ratio_table, write_ecdf, write_ratios, Metric};

#[derive(Debug, Error)]
pub enum XdesignError {
    #[error("unsupported campaign schema {0} (expected 1)")]
    Schema(u32),
    #[error("invalid campaign: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}
