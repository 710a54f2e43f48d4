use hvac_mpc::dataio::DataError;
use hvac_mpc::mpc::MpcError;
use hvac_mpc::plant::PlantError;
use hvac_mpc::surrogate::SurrogateError;

/// Command failure, split by the exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments, missing inputs, malformed configs or files: exit 2.
    #[error("{0}")]
    Usage(String),
    /// Failure while running a valid request: exit 3.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub(crate) fn usage(m: impl Into<String>) -> Self {
        CliError::Usage(m.into())
    }

    pub(crate) fn runtime(m: impl Into<String>) -> Self {
        CliError::Runtime(m.into())
    }
}

impl From<PlantError> for CliError {
    fn from(e: PlantError) -> Self {
        match e {
            PlantError::InvalidConfig(_) | PlantError::InvalidArgument(_) => CliError::Usage(e.to_string()),
            PlantError::NumericDomain(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } => CliError::Runtime(e.to_string()),
            DataError::Parse { .. } | DataError::Invalid(_) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<SurrogateError> for CliError {
    fn from(e: SurrogateError) -> Self {
        match e {
            SurrogateError::Data(d) => d.into(),
            SurrogateError::Shape(_) | SurrogateError::Checkpoint(_) | SurrogateError::Contract(_) => {
                CliError::Usage(e.to_string())
            }
            SurrogateError::Diverged { .. } | SurrogateError::Diff(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<MpcError> for CliError {
    fn from(e: MpcError) -> Self {
        match e {
            MpcError::Surrogate(s) => s.into(),
            MpcError::Plant(p) => p.into(),
            MpcError::ChannelMismatch(_) | MpcError::Contract(_) => CliError::Usage(e.to_string()),
            MpcError::NonFinite { .. } | MpcError::Diff(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}
