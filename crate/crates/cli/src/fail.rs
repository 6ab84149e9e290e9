use std::fmt;

/// Error carrying the process exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or unreadable input: exit 2.
    Usage(String),
    /// The computation itself failed: exit 1.
    Compute(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Compute(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Compute(m) => f.write_str(m),
        }
    }
}

/// Input-side library errors are usage errors, the rest are computation
/// errors.
impl From<hodgeflow::Error> for Failure {
    fn from(e: hodgeflow::Error) -> Self {
        use hodgeflow::Error as E;
        match e {
            E::Parse { .. }
            | E::Io { .. }
            | E::Csv(_)
            | E::Json(_)
            | E::UnknownDetector(_)
            | E::EmptyInput(_)
            | E::SelfLoop(_)
            | E::Negative { .. }
            | E::NonFinite { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Compute(e.to_string()),
        }
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;

pub fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

pub fn io_failure(path: &std::path::Path, e: impl fmt::Display) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}
