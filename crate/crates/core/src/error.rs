use thiserror::Error;

use crate::cleaning::CleanError;
use crate::enet::EnetError;
use crate::eval::EvalError;
use crate::metrics::MetricsError;
use crate::model::DataError;
use crate::synth::SynthError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Clean(#[from] CleanError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Enet(#[from] EnetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

pub type Result<T> = std::result::Result<T, Error>;
