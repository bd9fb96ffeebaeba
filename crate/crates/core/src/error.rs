use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("training data contains a single class only")]
    SingleClassData,

    #[error("ambiguous event in session {channel_id}: candidate targets {candidates:?}")]
    AmbiguousEvent {
        channel_id: String,
        candidates: Vec<String>,
    },

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("non-monotonic open_time at line {line} for {coin}/{pairing}")]
    NonMonotonicTime {
        line: usize,
        coin: String,
        pairing: String,
    },

    #[error("missing candle data for {coin}/{pairing} near t={timestamp}")]
    MissingData {
        coin: String,
        pairing: String,
        timestamp: i64,
    },

    #[error("target coin {coin} absent from the listing snapshot at t={timestamp}")]
    TargetNotListed { coin: String, timestamp: i64 },

    #[error("empty split: {which} partition has no positive sample")]
    EmptySplit { which: String },

    #[error("unknown symbol {0} (vocabulary injection disabled)")]
    UnknownSymbol(String),

    #[error("id {id} out of range for {table} table of size {size}")]
    IdOutOfRange {
        table: String,
        id: usize,
        size: usize,
    },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("infeasible world config: {0}")]
    InfeasibleConfig(String),

    #[error("config error: {0}")]
    ConfigError(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
