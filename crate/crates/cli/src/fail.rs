//! Exit codes: 0 success, 1 usage/config, 2 data/I-O, 3 numeric failure.

use std::fmt;

pub const USAGE: i32 = 1;
pub const DATA: i32 = 2;
pub const NUMERIC: i32 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub msg: String,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self { code: USAGE, msg: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self { code: DATA, msg: msg.into() }
    }

    /// Re-labels any non-numeric failure as a configuration error; used for
    /// errors raised while reading a training or grid config.
    pub fn into_config(self) -> Self {
        if self.code == NUMERIC {
            self
        } else {
            Self { code: USAGE, ..self }
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

pub type CliResult<T> = Result<T, Failure>;

impl From<surro_core::Error> for Failure {
    fn from(e: surro_core::Error) -> Self {
        let code = match e {
            surro_core::Error::InvalidArgument(_) => USAGE,
            _ => DATA,
        };
        Self { code, msg: e.to_string() }
    }
}

impl From<surro_models::Error> for Failure {
    fn from(e: surro_models::Error) -> Self {
        use surro_models::Error as E;
        match e {
            E::Core(c) => c.into(),
            E::InvalidConfig(_) => Self::usage(e.to_string()),
            E::NumericFailure { .. } => Self { code: NUMERIC, msg: e.to_string() },
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<surro_eval::Error> for Failure {
    fn from(e: surro_eval::Error) -> Self {
        use surro_eval::Error as E;
        match e {
            E::Core(c) => c.into(),
            E::Models(m) => m.into(),
            E::InvalidArgument(_) => Self::usage(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}
