use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::topology::Tier;
use super::EnvError;
use crate::catalog::{ModelId, MODEL_COUNT};

/// Eight local model choices plus offload to edge and to cloud.
pub const ACTION_COUNT: usize = MODEL_COUNT + 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    Local,
    Edge,
    Cloud,
}

impl Target {
    pub fn tier(self) -> Tier {
        match self {
            Target::Local => Tier::End,
            Target::Edge => Tier::Edge,
            Target::Cloud => Tier::Cloud,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Target::Local => 'L',
            Target::Edge => 'E',
            Target::Cloud => 'C',
        }
    }
}

/// Where a request runs and which model serves it.
///
/// Indices `0..8` are local `d0..d7`; `8` is edge and `9` is cloud, both
/// pinned to `d0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrchestrationAction {
    pub target: Target,
    pub model: ModelId,
}

impl OrchestrationAction {
    pub fn local(model: ModelId) -> OrchestrationAction {
        OrchestrationAction { target: Target::Local, model }
    }

    pub const EDGE: OrchestrationAction = OrchestrationAction { target: Target::Edge, model: ModelId::D0 };
    pub const CLOUD: OrchestrationAction = OrchestrationAction { target: Target::Cloud, model: ModelId::D0 };

    pub fn new(target: Target, model: ModelId) -> Result<OrchestrationAction, EnvError> {
        if target != Target::Local && model != ModelId::D0 {
            return Err(EnvError::InvalidAction(format!("{target:?} only runs d0, got {model}")));
        }
        Ok(OrchestrationAction { target, model })
    }

    pub fn from_index(index: usize) -> Option<OrchestrationAction> {
        match index {
            i if i < MODEL_COUNT => ModelId::new(i).map(OrchestrationAction::local),
            i if i == MODEL_COUNT => Some(OrchestrationAction::EDGE),
            i if i == MODEL_COUNT + 1 => Some(OrchestrationAction::CLOUD),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self.target {
            Target::Local => self.model.index(),
            Target::Edge => MODEL_COUNT,
            Target::Cloud => MODEL_COUNT + 1,
        }
    }

    pub fn all() -> impl Iterator<Item = OrchestrationAction> {
        (0..ACTION_COUNT).filter_map(OrchestrationAction::from_index)
    }
}

/// Renders as `d4,L`.
impl fmt::Display for OrchestrationAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.model, self.target.letter())
    }
}

impl FromStr for OrchestrationAction {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EnvError::InvalidAction(s.to_string());
        let (model, target) = s.split_once(',').ok_or_else(bad)?;
        let model: ModelId = model.parse().map_err(|_| bad())?;
        let target = match target.trim() {
            "L" => Target::Local,
            "E" => Target::Edge,
            "C" => Target::Cloud,
            _ => return Err(bad()),
        };
        OrchestrationAction::new(target, model)
    }
}
