use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no route from {from} to {to}")]
    Unreachable { from: String, to: String },

    #[error("auction batch exceeded {0} rounds without reaching quiescence")]
    RoundGuard(u32),

    #[error("price normaliser must be positive, got {0}")]
    PriceNormaliser(f64),

    #[error("simulation did not drain: {active} vehicles still active at t={time}s")]
    Stalled { time: u32, active: usize },

    #[error("empty run: {0}")]
    EmptyRun(&'static str),

    #[error("malformed input in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("{failed} of {total} runs failed: {ids:?}")]
    Matrix {
        failed: usize,
        total: usize,
        ids: Vec<String>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
