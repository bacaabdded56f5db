use std::path::Path;

use serde::{Deserialize, Serialize};

use super::topology::{LinkQuality, Scenario, Topology};
use super::EnvError;
use crate::catalog::AccuracyConstraint;

/// One experiment environment: links, constraint and seed.
///
/// File form (TOML):
///
/// ```toml
/// name = "B"
/// n_devices = 3
/// device_links = ["R", "W", "R"]
/// edge_link = "W"
/// constraint = "85%"
/// seed = 7
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub topology: Topology,
    pub constraint: AccuracyConstraint,
    pub seed: u64,
}

#[derive(Deserialize)]
struct ScenarioFile {
    #[serde(default)]
    name: Option<String>,
    n_devices: usize,
    device_links: Vec<String>,
    edge_link: String,
    constraint: String,
    #[serde(default)]
    seed: u64,
}

impl ScenarioSpec {
    pub fn standard(
        scenario: Scenario,
        n_devices: usize,
        constraint: AccuracyConstraint,
        seed: u64,
    ) -> Result<ScenarioSpec, EnvError> {
        Ok(ScenarioSpec {
            name: scenario.to_string(),
            topology: scenario.topology(n_devices)?,
            constraint,
            seed,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<ScenarioSpec, EnvError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| EnvError::Config(e.to_string()))?;
        if file.device_links.len() != file.n_devices {
            return Err(EnvError::Config(format!(
                "n_devices = {} but {} device links given",
                file.n_devices,
                file.device_links.len()
            )));
        }
        let links = file
            .device_links
            .iter()
            .map(|s| s.parse::<LinkQuality>())
            .collect::<Result<Vec<_>, _>>()?;
        let topology = Topology::new(links, file.edge_link.parse()?)?;
        let constraint = file
            .constraint
            .parse()
            .map_err(|e: crate::catalog::CatalogError| EnvError::Config(e.to_string()))?;
        Ok(ScenarioSpec {
            name: file.name.unwrap_or_else(|| "custom".into()),
            topology,
            constraint,
            seed: file.seed,
        })
    }

    pub fn from_file(path: &Path) -> Result<ScenarioSpec, EnvError> {
        let text = std::fs::read_to_string(path).map_err(|e| EnvError::Io(e.to_string()))?;
        ScenarioSpec::from_toml_str(&text)
    }

    pub fn n_devices(&self) -> usize {
        self.topology.n_devices()
    }
}
