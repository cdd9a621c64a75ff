//! JSON parameter checkpoints with an architecture header.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{Architecture, PolicyValueNet};
use crate::error::{Error, Result};

pub const FORMAT: &str = "interpmi-policy";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Agent the parameters were trained for.
    pub agent: String,
    pub architecture: Architecture,
    pub episodes: u64,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(agent: impl Into<String>, net: &PolicyValueNet, episodes: u64) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            agent: agent.into(),
            architecture: net.architecture().clone(),
            episodes,
            params: net.params.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported format {} v{}",
                path.display(),
                ck.format,
                ck.version
            )));
        }
        Ok(ck)
    }

    /// Rebuilds the network, refusing a different agent or shape.
    pub fn into_net(self, agent: &str, expected: &Architecture) -> Result<PolicyValueNet> {
        if self.agent != agent {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained for agent `{}`, not `{agent}`",
                self.agent
            )));
        }
        if &self.architecture != expected {
            return Err(Error::Checkpoint(format!(
                "architecture mismatch: checkpoint {:?}, expected {expected:?}",
                self.architecture
            )));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        PolicyValueNet::from_params(self.architecture, self.params)
    }
}
