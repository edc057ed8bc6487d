use std::fmt;
use std::process::ExitCode;

/// Exit statuses of the command-line tool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass = 0,
    CheckFailed = 1,
    ConfigError = 2,
    Unreliable = 3,
}

impl From<Status> for ExitCode {
    fn from(s: Status) -> ExitCode {
        ExitCode::from(s as u8)
    }
}

#[derive(Debug)]
pub struct CliError {
    pub status: Status,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            status: Status::ConfigError,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<hypofk::Error> for CliError {
    fn from(e: hypofk::Error) -> Self {
        use hypofk::Error as E;
        let status = match &e {
            E::NonFiniteSample { .. } | E::AllCensoredByCap(_) | E::TooFewSurvivors { .. } => {
                Status::Unreliable
            }
            _ => Status::ConfigError,
        };
        CliError {
            status,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::config(e.to_string())
    }
}
