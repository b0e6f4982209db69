//! Versioned JSON checkpoints of a physical or rescaled run.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::PhysicalRun;
use crate::rescaled::RescaledRun;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RunState {
    Physical(Box<PhysicalRun>),
    Rescaled(Box<RescaledRun>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub run_id: String,
    pub state: RunState,
}

impl Checkpoint {
    pub fn new(run_id: &str, state: RunState) -> Checkpoint {
        Checkpoint {
            format_version: FORMAT_VERSION,
            run_id: run_id.to_string(),
            state,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Checkpoint> {
        let raw: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::IncompatibleCheckpoint(format!("unreadable: {e}")))?;
        let version = raw.get("format_version").and_then(|v| v.as_u64());
        if version != Some(FORMAT_VERSION as u64) {
            return Err(Error::IncompatibleCheckpoint(format!(
                "format version {version:?}, expected {FORMAT_VERSION}"
            )));
        }
        serde_json::from_value(raw).map_err(|e| Error::IncompatibleCheckpoint(e.to_string()))
    }

    /// Write through a temporary file so a crash never leaves a torn checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_json()?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = fs::read_to_string(path)?;
        Checkpoint::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;

    #[test]
    fn fresh_state_round_trips() {
        let run = RescaledRun::new(&SimConfig::default()).unwrap();
        let c = Checkpoint::new("id", RunState::Rescaled(Box::new(run)));
        let back = Checkpoint::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn truncated_and_mismatched() {
        let run = RescaledRun::new(&SimConfig::default()).unwrap();
        let text = Checkpoint::new("id", RunState::Rescaled(Box::new(run)))
            .to_json()
            .unwrap();
        let cut = &text[..text.len() / 2];
        assert!(matches!(
            Checkpoint::from_json(cut),
            Err(Error::IncompatibleCheckpoint(_))
        ));
        let bumped = text.replacen("\"format_version\":1", "\"format_version\":7", 1);
        assert!(matches!(
            Checkpoint::from_json(&bumped),
            Err(Error::IncompatibleCheckpoint(_))
        ));
    }
}
