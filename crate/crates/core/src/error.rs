use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("query {query}: document {doc} appears more than once in the candidate pool")]
    DuplicatePoolDoc { query: String, doc: String },

    #[error("query {query}: candidate scores increase at rank {rank}")]
    PoolOrder { query: String, rank: u32 },

    #[error("document {doc}: entity {entity} has rho {rho} outside [0, 1]")]
    RhoOutOfRange { doc: String, entity: String, rho: f64 },

    #[error("document {0} is in a candidate pool but has no entity-link record")]
    MissingLinks(String),

    #[error("unknown query {0}")]
    UnknownQuery(String),

    #[error("document {doc} is not in the candidate pool of query {query}")]
    UnknownDoc { query: String, doc: String },

    #[error("rank-deficient design: column `{column}` is collinear with {others:?}")]
    RankDeficient { column: String, others: Vec<String> },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn parse(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid(message.into())
    }
}
