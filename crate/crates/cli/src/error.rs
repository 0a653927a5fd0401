use std::fmt;

use cardioshape::{CalibrationError, EvaluateError, MaskError, ReportError, SynthError};

/// Process exit codes.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DATA: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    /// Inputs that are readable but inconsistent or malformed.
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Data(_) => EXIT_DATA,
        }
    }

    pub fn io(context: impl fmt::Display, err: std::io::Error) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl From<MaskError> for CliError {
    fn from(e: MaskError) -> Self {
        match e {
            MaskError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvaluateError> for CliError {
    fn from(e: EvaluateError) -> Self {
        match e {
            EvaluateError::Mask(m) => m.into(),
            EvaluateError::Calibration(c) => c.into(),
            EvaluateError::Pool(_) => CliError::Io(e.to_string()),
            EvaluateError::LabelMap(_)
            | EvaluateError::Manifest { .. }
            | EvaluateError::EmptyManifest
            | EvaluateError::InvalidJobs => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::UnknownFormat(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Mask(m) => m.into(),
            SynthError::InvalidSpec(_)
            | SynthError::ExceedsCanvas { .. }
            | SynthError::UnsortedMagnitudes => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}
