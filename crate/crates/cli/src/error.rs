//! Machine-readable command errors.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    /// Offending configuration key, when there is one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        let key = key.into();
        CliError {
            kind: "config",
            message: format!("{key}: {}", message.into()),
            key: Some(key),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            kind: "io",
            message: message.into(),
            key: None,
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            kind: "input",
            message: message.into(),
            key: None,
        }
    }

    pub fn from_toml(e: toml::de::Error) -> Self {
        let message = e.message().to_string();
        // serde names fields in backticks: "missing field `x`", "unknown field `x`"
        let key = message.split('`').nth(1).map(str::to_string);
        CliError {
            kind: "config",
            message: e.to_string().trim().to_string(),
            key,
        }
    }

    pub fn from_core(e: cppf::Error) -> Self {
        use cppf::Error as E;
        let kind = match &e {
            E::Invalid { .. } => "invalid",
            E::Parse { .. } | E::Json(_) => "parse",
            E::Io(_) => "io",
            E::PredictionMissing(..) | E::PredictorLength { .. } => "predictor",
            _ => "voting",
        };
        let key = match &e {
            E::Invalid { what, .. } if is_config_key(what) => Some(what.to_string()),
            _ => None,
        };
        CliError {
            kind,
            message: e.to_string(),
            key,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

fn is_config_key(what: &str) -> bool {
    matches!(
        what,
        "k_circle" | "grid_resolution" | "orientation_resolution" | "epsilon" | "n_pairs"
    )
}

impl From<cppf::Error> for CliError {
    fn from(e: cppf::Error) -> Self {
        CliError::from_core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}
