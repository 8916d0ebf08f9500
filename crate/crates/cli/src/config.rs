//! TOML run configuration.

use std::path::{Path, PathBuf};

use cppf::eval::{MatchCriteria, Symmetry, DEFAULT_IOU_FLOOR};
use cppf::predictor::NoiseSigmas;
use cppf::{Vec3, VotingConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

fn default_k_circle() -> usize {
    72
}
fn default_orientation_resolution() -> f64 {
    1.5
}
fn default_n_pairs() -> usize {
    100_000
}
fn yes() -> bool {
    true
}
fn default_category() -> String {
    "object".into()
}
pub fn default_criteria() -> Vec<String> {
    ["iou25", "iou50", "5deg_2cm", "5deg_5cm", "10deg_5cm"]
        .map(String::from)
        .to_vec()
}
fn default_predictor() -> String {
    "exact".into()
}
fn default_outlier_fraction() -> f64 {
    0.3
}
fn default_min_point_votes() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid_resolution: f64,
    #[serde(default = "default_k_circle")]
    pub k_circle: usize,
    #[serde(default = "default_orientation_resolution")]
    pub orientation_resolution: f64,
    /// Defaults to three grid cells.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_n_pairs")]
    pub n_pairs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub coarse_to_fine: bool,
    #[serde(default = "yes")]
    pub disambiguate: bool,
    #[serde(default)]
    pub cap_smoothing: bool,
    #[serde(default = "yes")]
    pub uniform_arc: bool,

    /// `exact`, `corrupted` or `file:PATH`.
    #[serde(default = "default_predictor")]
    pub predictor: String,
    #[serde(default)]
    pub corruption: CorruptionConfig,
    /// Ground-truth object the single-object oracles describe.
    #[serde(default)]
    pub object: usize,
    /// Category mean extents; defaults to the ground-truth extents when a
    /// scene sidecar is present.
    #[serde(default)]
    pub mean_scale: Option<[f64; 3]>,
    #[serde(default)]
    pub scene: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Multi-instance detection instead of a single estimate.
    #[serde(default)]
    pub detect: Option<DetectConfig>,
    #[serde(default)]
    pub dump_grid: bool,

    #[serde(default = "default_category")]
    pub category: String,
    #[serde(default)]
    pub symmetry: SymmetryConfig,
    #[serde(default = "default_criteria")]
    pub criteria: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionConfig {
    #[serde(default = "default_outlier_fraction")]
    pub outlier_fraction: f64,
    #[serde(default)]
    pub sigma_mu: f64,
    #[serde(default)]
    pub sigma_nu: f64,
    #[serde(default)]
    pub sigma_alpha: f64,
    #[serde(default)]
    pub sigma_beta: f64,
    #[serde(default)]
    pub sigma_gamma: f64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            outlier_fraction: default_outlier_fraction(),
            sigma_mu: 0.0,
            sigma_nu: 0.0,
            sigma_alpha: 0.0,
            sigma_beta: 0.0,
            sigma_gamma: 0.0,
        }
    }
}

impl CorruptionConfig {
    pub fn sigmas(&self) -> NoiseSigmas<f64> {
        NoiseSigmas {
            mu: self.sigma_mu,
            nu: self.sigma_nu,
            alpha: self.sigma_alpha,
            beta: self.sigma_beta,
            gamma: self.sigma_gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectConfig {
    pub vote_threshold: u32,
    #[serde(default = "default_min_point_votes")]
    pub min_point_votes: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SymmetryConfig {
    #[default]
    None,
    Axis {
        axis: [f64; 3],
    },
    UpHeading {
        up: [f64; 3],
        heading: [f64; 3],
    },
}

impl SymmetryConfig {
    pub fn symmetry(&self) -> Symmetry {
        let v = |a: &[f64; 3]| Vec3::new(a[0], a[1], a[2]);
        match self {
            SymmetryConfig::None => Symmetry::None,
            SymmetryConfig::Axis { axis } => Symmetry::Axis(v(axis)),
            SymmetryConfig::UpHeading { up, heading } => Symmetry::UpHeading {
                up: v(up),
                heading: v(heading),
            },
        }
    }
}

/// Which predictor a run uses.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictorChoice {
    Exact,
    Corrupted,
    File(PathBuf),
}

impl PredictorChoice {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "exact" => Ok(PredictorChoice::Exact),
            "corrupted" => Ok(PredictorChoice::Corrupted),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(PredictorChoice::File(PathBuf::from(p))),
                _ => Err(CliError::config(
                    "predictor",
                    format!("expected exact, corrupted or file:PATH, got {s:?}"),
                )),
            },
        }
    }
}

/// Raw config text with its parsed form.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(text).map_err(CliError::from_toml)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("reading {}: {e}", path.display())))?;
        Ok(LoadedConfig {
            config: RunConfig::parse(&text)?,
            sha256: sha256_hex(text.as_bytes()),
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.voting().validate().map_err(CliError::from_core)?;
        PredictorChoice::parse(&self.predictor)?;
        let f = self.corruption.outlier_fraction;
        if !(0.0..=1.0).contains(&f) {
            return Err(CliError::config("corruption.outlier_fraction", "must lie in [0, 1]"));
        }
        let c = &self.corruption;
        for (key, s) in [
            ("corruption.sigma_mu", c.sigma_mu),
            ("corruption.sigma_nu", c.sigma_nu),
            ("corruption.sigma_alpha", c.sigma_alpha),
            ("corruption.sigma_beta", c.sigma_beta),
            ("corruption.sigma_gamma", c.sigma_gamma),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(CliError::config(key, "must be finite and non-negative"));
            }
        }
        if let Some(m) = self.mean_scale {
            if !m.iter().all(|x| *x > 0.0 && x.is_finite()) {
                return Err(CliError::config("mean_scale", "entries must be positive"));
            }
        }
        if let Some(d) = &self.detect {
            if d.vote_threshold == 0 {
                return Err(CliError::config("detect.vote_threshold", "must be positive"));
            }
        }
        for c in &self.criteria {
            parse_criterion(c)?;
        }
        Ok(())
    }

    pub fn voting(&self) -> VotingConfig {
        VotingConfig {
            k_circle: self.k_circle,
            grid_resolution: self.grid_resolution,
            orientation_resolution: self.orientation_resolution,
            epsilon: self.epsilon.unwrap_or(3.0 * self.grid_resolution),
            n_pairs: self.n_pairs,
            seed: self.seed,
            coarse_to_fine: self.coarse_to_fine,
            disambiguate: self.disambiguate,
            cap_smoothing: self.cap_smoothing,
            uniform_arc: self.uniform_arc,
        }
    }

}

/// Parses labels such as `iou25`, `5deg_2cm`, `10deg` or `iou50_5cm`.
pub fn parse_criterion(label: &str) -> Result<MatchCriteria, CliError> {
    let bad = || CliError::config("criteria", format!("cannot parse criterion {label:?}"));
    let mut c = MatchCriteria {
        detection_iou_floor: DEFAULT_IOU_FLOOR,
        ..MatchCriteria::default()
    };
    for part in label.split('_') {
        let num = |s: &str| -> Result<f64, CliError> {
            s.parse::<f64>().ok().filter(|v| *v > 0.0).ok_or_else(bad)
        };
        if let Some(v) = part.strip_prefix("iou") {
            c.iou_threshold = Some(num(v)? / 100.0);
        } else if let Some(v) = part.strip_suffix("deg") {
            c.rot_threshold_deg = Some(num(v)?);
        } else if let Some(v) = part.strip_suffix("cm") {
            c.trans_threshold = Some(num(v)? / 100.0);
        } else {
            return Err(bad());
        }
    }
    Ok(c)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::parse("grid_resolution = 0.004\n").unwrap();
        let v = c.voting();
        assert_eq!(v.k_circle, 72);
        assert!((v.epsilon - 0.012).abs() < 1e-15);
        assert_eq!(c.predictor, "exact");
        assert_eq!(c.criteria.len(), 5);
    }

    #[test]
    fn missing_and_unknown_keys_are_named() {
        let e = RunConfig::parse("n_pairs = 10\n").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("grid_resolution"));
        let e = RunConfig::parse("grid_resolution = 0.004\ngrid_res = 1\n").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("grid_res"));
        let e = RunConfig::parse("grid_resolution = -1.0\n").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("grid_resolution"));
        let e = RunConfig::parse("grid_resolution = 0.004\n[corruption]\noutlier_fraction = 2.0\n").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("corruption.outlier_fraction"));
    }

    #[test]
    fn symmetry_tables() {
        let c = RunConfig::parse("grid_resolution = 0.004\n[symmetry]\nkind = \"axis\"\naxis = [0.0, 1.0, 0.0]\n").unwrap();
        assert_eq!(c.symmetry.symmetry(), Symmetry::Axis(Vec3::y()));
    }

    #[test]
    fn criterion_labels_round_trip() {
        for label in ["iou25", "iou50", "5deg_2cm", "10deg_5cm", "10deg", "iou50_5cm"] {
            assert_eq!(parse_criterion(label).unwrap().label(), label);
        }
        assert!(parse_criterion("5dg").is_err());
        assert!(parse_criterion("iou-3").is_err());
    }

    #[test]
    fn predictor_choices() {
        assert_eq!(PredictorChoice::parse("exact").unwrap(), PredictorChoice::Exact);
        assert_eq!(
            PredictorChoice::parse("file:a/b.jsonl").unwrap(),
            PredictorChoice::File("a/b.jsonl".into())
        );
        assert!(PredictorChoice::parse("file:").is_err());
        assert!(PredictorChoice::parse("network").is_err());
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
