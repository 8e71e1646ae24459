//! Shipped example configurations.

use crate::config::ExperimentConfig;
use crate::CliError;

pub struct Example {
    pub name: &'static str,
    pub text: &'static str,
}

macro_rules! example {
    ($name:literal) => {
        Example { name: $name, text: include_str!(concat!("../examples-config/", $name, ".toml")) }
    };
}

pub const EXAMPLES: &[Example] = &[
    example!("full-shift-pressure"),
    example!("golden-sft-pressure"),
    example!("weighted-full-shift-pressure"),
    example!("full-shift-certify"),
    example!("golden-beta-certify"),
    example!("parry-gibbs"),
    example!("bernoulli-entropy"),
    example!("roof-one-two-flow"),
    example!("bernoulli-ldp"),
    example!("golden-glue"),
    example!("golden-beta-decompose"),
];

impl Example {
    pub fn config(&self) -> Result<ExperimentConfig, CliError> {
        ExperimentConfig::from_str(self.text)
    }

    /// The config's description, or its command when there is none.
    pub fn provenance(&self) -> String {
        match self.config() {
            Ok(c) => c.description.clone().unwrap_or_else(|| c.command.map(|c| c.name().to_string()).unwrap_or_default()),
            Err(e) => format!("invalid: {e}"),
        }
    }
}

pub fn find(name: &str) -> Option<&'static Example> {
    EXAMPLES.iter().find(|e| e.name == name)
}
