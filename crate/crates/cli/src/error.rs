use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}{}: {msg}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Parse {
        path: PathBuf,
        line: Option<u64>,
        msg: String,
    },
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn parse(path: impl Into<PathBuf>, line: Option<u64>, msg: impl Into<String>) -> Self {
        Self::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Numerical(_) => 3,
            _ => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Parse { .. } => "parse",
            Self::Config(_) => "config",
            Self::Io { .. } => "io",
            Self::Numerical(_) => "numerical",
        }
    }

    /// Single-line `key=value` record for standard error.
    pub fn record(&self) -> ErrorRecord<'_> {
        ErrorRecord(self)
    }
}

pub struct ErrorRecord<'a>(&'a CliError);

impl fmt::Display for ErrorRecord<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = self.0;
        write!(f, "level=error kind={} code={}", e.kind(), e.exit_code())?;
        match e {
            CliError::Parse { path, line, msg } => {
                write!(f, " file={}", quote(&path.display().to_string()))?;
                if let Some(l) = line {
                    write!(f, " line={l}")?;
                }
                write!(f, " message={}", quote(msg))
            }
            CliError::Io { path, source } => write!(
                f,
                " file={} message={}",
                quote(&path.display().to_string()),
                quote(&source.to_string())
            ),
            CliError::Config(m) | CliError::Numerical(m) => write!(f, " message={}", quote(m)),
        }
    }
}

/// Double-quoted with backslash escapes; newlines flattened.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' | '\r' | '\t' => out.push(' '),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_is_one_line() {
        let e = CliError::parse("a.tsv", Some(4), "bad \"y\"\nvalue");
        let r = e.record().to_string();
        assert_eq!(
            r,
            "level=error kind=parse code=2 file=\"a.tsv\" line=4 message=\"bad \\\"y\\\" value\""
        );
        assert_eq!(CliError::Numerical("x".into()).exit_code(), 3);
    }
}
