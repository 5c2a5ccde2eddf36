use thiserror::Error;

use crate::ensemble::EnsembleError;
use crate::macemu::MacError;
use crate::outage::OutageError;
use crate::selection::SelectionError;
use crate::topology::TopologyError;

/// Crate-level error, wrapping the per-module errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Outage(#[from] OutageError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Mac(#[from] MacError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
