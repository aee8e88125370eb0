use serde::Serialize;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

/// Failure reported as `{"error": {"code", "kind", "message"}}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub code: i32,
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, kind: "config".into(), message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERIC, kind: "io".into(), message: message.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl From<isochron::Error> for CliError {
    fn from(e: isochron::Error) -> Self {
        let debug = format!("{e:?}");
        let kind = debug.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string();
        let code = match e {
            isochron::Error::InvalidArgument(_) => EXIT_CONFIG,
            _ => EXIT_NUMERIC,
        };
        Self { code, kind, message: e.to_string() }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}
