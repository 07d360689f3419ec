use std::fmt;

use dars_core::allocator::AllocError;
use dars_core::backend::BackendError;
use dars_core::config::ConfigError;
use dars_core::cost::CostError;
use dars_core::dataset::DatasetError;
use dars_core::profiler::ProfileError;
use dars_core::scheduler::SchedulerError;
use dars_core::DomainError;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Backend(m) => write!(f, "backend error: {m}"),
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        })*
    };
}

data_error!(DatasetError, ConfigError, AllocError, DomainError, std::io::Error, serde_json::Error);

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::MissingProfile(_) => CliError::Data(e.to_string()),
            BackendError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Backend(e.to_string()),
        }
    }
}

impl From<ProfileError> for CliError {
    fn from(e: ProfileError) -> Self {
        match e {
            ProfileError::Backend(b) => b.into(),
            ProfileError::Domain(d) => d.into(),
        }
    }
}

impl From<SchedulerError> for CliError {
    fn from(e: SchedulerError) -> Self {
        match e {
            SchedulerError::Backend { query_id, source } => {
                let inner: CliError = source.into();
                match inner {
                    CliError::Backend(m) => CliError::Backend(format!("query {query_id}: {m}")),
                    other => other,
                }
            }
            SchedulerError::Interrupted { .. } => CliError::Backend(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CostError> for CliError {
    fn from(e: CostError) -> Self {
        match e {
            CostError::Scheduler(s) => s.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}
