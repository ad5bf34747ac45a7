use std::path::PathBuf;

use prewhiten_core::{
    ArError, DataError, DesignError, Error as CoreError, GlmError, RegularizeError, SimError, StatsError,
};
use thiserror::Error;

/// Process exit codes of the command line tool.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Format { path: PathBuf, line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Invalid {
        path: PathBuf,
        #[source]
        source: DataError,
    },
    #[error("{}: {message}", path.display())]
    Json { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("vertex {vertex}: {source}")]
    Vertex {
        vertex: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

macro_rules! from_core {
    ($($t:ty),*) => {$(
        impl From<$t> for Error {
            fn from(e: $t) -> Self {
                Error::Core(e.into())
            }
        }
    )*};
}

from_core!(DataError, DesignError, GlmError, ArError, RegularizeError, StatsError, SimError);

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }

    pub fn at_vertex(self, vertex: usize) -> Self {
        Error::Vertex { vertex, source: Box::new(self) }
    }

    /// Exit code for this failure: configuration, data, or numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => exit::CONFIG,
            Error::Io { .. } | Error::Format { .. } | Error::Invalid { .. } => exit::DATA,
            Error::Json { .. } => exit::CONFIG,
            Error::Vertex { source, .. } | Error::Stage { source, .. } => source.exit_code(),
            Error::Core(e) => core_exit_code(e),
        }
    }
}

fn core_exit_code(e: &CoreError) -> i32 {
    use exit::*;
    match e {
        CoreError::Linalg(_) => NUMERIC,
        CoreError::Data(_) => DATA,
        CoreError::Design(d) => match d {
            DesignError::LengthMismatch { .. } | DesignError::NonFinite { .. } => DATA,
            DesignError::RankDeficient { .. } => NUMERIC,
            _ => CONFIG,
        },
        CoreError::Glm(g) => match g {
            GlmError::Singular => NUMERIC,
            GlmError::NoDegreesOfFreedom(_) | GlmError::ColumnOutOfRange { .. } => CONFIG,
            _ => DATA,
        },
        CoreError::Ar(a) => match a {
            ArError::InvalidLagZero(_) | ArError::NonStationary => NUMERIC,
            _ => DATA,
        },
        CoreError::Regularize(r) => match r {
            RegularizeError::InvalidFwhm(_) => CONFIG,
            _ => DATA,
        },
        CoreError::Stats(s) => match s {
            StatsError::InvalidLevel(_) | StatsError::InvalidDof => CONFIG,
            _ => DATA,
        },
        CoreError::Sim(_) => CONFIG,
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_failure_class() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(Error::from(DataError::NoVertices).exit_code(), 3);
        assert_eq!(Error::from(GlmError::Singular).exit_code(), 4);
        assert_eq!(Error::from(RegularizeError::InvalidFwhm(0.0)).exit_code(), 2);
        let nested = Error::from(ArError::NonStationary).at_vertex(7).in_stage("arfit");
        assert_eq!(nested.exit_code(), 4);
        assert_eq!(nested.to_string(), "stage arfit: vertex 7: AR polynomial is not stationary");
    }
}
