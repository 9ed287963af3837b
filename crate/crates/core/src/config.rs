//! Experiment configuration: strict TOML with `model`, `run`, `rng`,
//! `output` and optional `sweep` sections, plus the named preset catalogue.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{ReplicaPlan, Simulator};
use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::path::DEFAULT_JUMP_CAP;

/// The only stream scheme implemented: ChaCha8 streams derived through
/// [`SeedTree`](crate::rng::SeedTree).
pub const STREAM_SCHEME: &str = "chacha8-tree-v1";

fn default_level() -> i64 {
    20
}
fn default_replicas() -> usize {
    1000
}
fn default_box_radius() -> i64 {
    5
}
fn default_jump_cap() -> u64 {
    DEFAULT_JUMP_CAP
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Horizon `T` of every walk.
    pub horizon: f64,
    /// Classification threshold `K`.
    #[serde(default = "default_level")]
    pub level: i64,
    /// Number of replicas `N`.
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    /// Radius `n` of the exit-time box.
    #[serde(default = "default_box_radius")]
    pub box_radius: i64,
    #[serde(default = "default_jump_cap")]
    pub jump_cap: u64,
    /// Times (before the horizon) at which time series are reported.
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    /// Torus margin of the exclusion model; defaults to `L / 4`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<i64>,
    /// Half-width of lazily sampled windows; defaults to a bound on the
    /// distance a walk can cover by the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reach: Option<i64>,
    #[serde(default)]
    pub simulator: Simulator,
    /// Horizon of the exit-time survey; defaults to `horizon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_horizon: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngSection {
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_scheme")]
    pub stream_scheme: String,
}

fn default_scheme() -> String {
    STREAM_SCHEME.to_string()
}

impl Default for RngSection {
    fn default() -> Self {
        Self {
            base_seed: 0,
            stream_scheme: default_scheme(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    /// One JSON object per line for estimates and summaries.
    Jsonl,
    /// Checkpoint time series.
    Csv,
    /// Line-oriented environment, arrow and path files.
    Text,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Jsonl, OutputFormat::Csv, OutputFormat::Text]
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

/// A grid over one scalar model parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub run: RunSection,
    #[serde(default)]
    pub rng: RngSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Serialize)]
struct HashedFields<'a> {
    model: &'a ModelSpec,
    run: &'a RunSection,
    stream_scheme: &'a str,
    sweep: &'a Option<SweepSection>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        self.model.validate()?;
        self.plan().validate()?;
        let run = &self.run;
        if run.level < 1 {
            return cfg(format!("run.level must be at least 1, got {}", run.level));
        }
        if run.replicas == 0 {
            return cfg("run.replicas must be at least 1".into());
        }
        if run.box_radius < 0 {
            return cfg(format!("run.box_radius must be nonnegative, got {}", run.box_radius));
        }
        if run.checkpoints.windows(2).any(|w| w[0] >= w[1])
            || run.checkpoints.iter().any(|&t| !(t > 0.0 && t <= run.horizon))
        {
            return cfg(format!("run.checkpoints must increase strictly within (0, {}]", run.horizon));
        }
        if let Some(t) = run.exit_horizon {
            if !(t > 0.0 && t.is_finite()) {
                return cfg(format!("run.exit_horizon must be positive, got {t}"));
            }
        }
        if self.rng.stream_scheme != STREAM_SCHEME {
            return cfg(format!(
                "rng.stream_scheme `{}` is not supported (expected `{STREAM_SCHEME}`)",
                self.rng.stream_scheme
            ));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return cfg("sweep.values is empty".into());
            }
            for &v in &sweep.values {
                self.model.with_parameter(&sweep.parameter, v)?.validate()?;
            }
        }
        Ok(())
    }

    /// Replica plan for the configured model and run section.
    pub fn plan(&self) -> ReplicaPlan {
        ReplicaPlan {
            model: self.model.clone(),
            horizon: self.run.horizon,
            jump_cap: self.run.jump_cap,
            margin: self.run.margin,
            reach: self.run.reach,
            simulator: self.run.simulator,
        }
    }

    /// The plan with the exit-survey horizon.
    pub fn exit_plan(&self) -> ReplicaPlan {
        ReplicaPlan {
            horizon: self.run.exit_horizon.unwrap_or(self.run.horizon),
            ..self.plan()
        }
    }

    /// SHA-256 over the model, run, stream scheme and sweep sections (the
    /// seed and the output location are recorded separately).
    pub fn hash(&self) -> String {
        let fields = HashedFields {
            model: &self.model,
            run: &self.run,
            stream_scheme: &self.rng.stream_scheme,
            sweep: &self.sweep,
        };
        let bytes = serde_json::to_vec(&fields).expect("config serialises");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn wants(&self, format: OutputFormat) -> bool {
        self.output.formats.contains(&format)
    }
}

/// Names of the built-in presets.
pub const PRESETS: [&str; 5] = ["const-biased", "const-symmetric", "ssep-half", "ssep-biased", "chain-2state"];

const CONST_BIASED: &str = r#"
[model]
kind = "constant"
p = 2.0
q = 1.0

[run]
horizon = 200.0
level = 20
replicas = 2000
checkpoints = [25.0, 50.0, 100.0]
exit_horizon = 100.0

[sweep]
parameter = "p"
values = [0.25, 0.5, 2.0, 4.0]
"#;

const CONST_SYMMETRIC: &str = r#"
[model]
kind = "constant"
p = 1.0
q = 1.0

[run]
horizon = 4000.0
level = 1
replicas = 2000
checkpoints = [500.0, 1000.0, 2000.0]
exit_horizon = 200.0
"#;

const SSEP_HALF: &str = r#"
[model]
kind = "ssep"
alpha = 2.0
beta = 1.0
rho = 0.5
half_width = 800

[run]
horizon = 16000.0
level = 1
replicas = 2000
checkpoints = [2000.0, 4000.0, 8000.0]
margin = 50
simulator = "joint"
exit_horizon = 200.0
"#;

const SSEP_BIASED: &str = r#"
[model]
kind = "ssep"
alpha = 2.0
beta = 1.0
rho = 0.8
half_width = 400

[run]
horizon = 300.0
level = 20
replicas = 2000
checkpoints = [50.0, 100.0, 200.0]
simulator = "joint"
exit_horizon = 200.0
"#;

const CHAIN_2STATE: &str = r#"
[model]
kind = "iid_chain"
states = ["high", "low"]
generator = [[-1.0, 1.0], [2.0, -2.0]]
alpha_plus = [2.0, 1.0]
alpha_minus = [1.0, 2.0]

[run]
horizon = 400.0
level = 20
replicas = 2000
checkpoints = [50.0, 100.0, 200.0]
exit_horizon = 200.0
"#;

/// A catalogue configuration by name.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let text = match name {
        "const-biased" => CONST_BIASED,
        "const-symmetric" => CONST_SYMMETRIC,
        "ssep-half" => SSEP_HALF,
        "ssep-biased" => SSEP_BIASED,
        "chain-2state" => CHAIN_2STATE,
        _ => {
            return Err(Error::Config(format!(
                "unknown preset `{name}` (available: {})",
                PRESETS.join(", ")
            )))
        }
    };
    ExperimentConfig::from_toml_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[model]\nkind = \"constant\"\np = 2.0\nq = 1.0\n\n[run]\nhorizon = 10.0\n";

    #[test]
    fn every_preset_parses() {
        for name in PRESETS {
            let c = preset(name).unwrap();
            assert_eq!(c.rng.stream_scheme, STREAM_SCHEME);
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn defaults_fill_optional_sections() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.run.level, 20);
        assert_eq!(c.run.jump_cap, DEFAULT_JUMP_CAP);
        assert_eq!(c.output.directory, PathBuf::from("out"));
        assert!(c.sweep.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}typo = 3\n");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))));
        let text = format!("{MINIMAL}\n[extra]\na = 1\n");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn missing_model_section_is_named() {
        let err = ExperimentConfig::from_toml_str("[run]\nhorizon = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("model"), "{err}");
    }

    #[test]
    fn ssep_with_beta_not_below_alpha_is_rejected() {
        let text = "[model]\nkind = \"ssep\"\nalpha = 1.0\nbeta = 2.0\nrho = 0.5\nhalf_width = 10\n[run]\nhorizon = 1.0\n";
        let err = ExperimentConfig::from_toml_str(text).unwrap_err();
        assert!(err.to_string().contains("beta"), "{err}");
    }

    #[test]
    fn hash_ignores_seed_and_output() {
        let a = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let mut b = a.clone();
        b.rng.base_seed = 99;
        b.output.directory = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.run.horizon = 11.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn toml_round_trip() {
        let c = preset("chain-2state").unwrap();
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }
}
