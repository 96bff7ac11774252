use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vocabulary needs at least 2 distinct words, got {0}")]
    EmptyVocabulary(usize),
    #[error("unknown word: {0:?}")]
    UnknownWord(String),
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("word id {id} out of range for vocabulary of size {vocab_size}")]
    WordOutOfRange { id: usize, vocab_size: usize },
    #[error("instance does not match the {0} architecture")]
    ArchitectureMismatch(&'static str),
    #[error("corpus yields no training instances")]
    EmptyCorpus,
    #[error("non-finite loss {loss} at instance {instance} (eta = {eta})")]
    NonFiniteLoss { loss: f64, instance: u64, eta: f64 },
    #[error("update would produce non-finite weights at instance {instance} (eta = {eta})")]
    NonFiniteWeights { instance: u64, eta: f64 },
    #[error("malformed embedding file, line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
