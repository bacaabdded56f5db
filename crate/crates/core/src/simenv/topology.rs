use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EnvError;

/// Largest number of end devices a topology may carry.
pub const MAX_DEVICES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tier {
    End,
    Edge,
    Cloud,
}

/// Link signal strength. A weak link delays every packet sent over it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkQuality {
    #[serde(alias = "R", alias = "regular")]
    Regular,
    #[serde(alias = "W", alias = "weak")]
    Weak,
}

impl LinkQuality {
    pub fn is_weak(self) -> bool {
        self == LinkQuality::Weak
    }

    pub fn letter(self) -> char {
        match self {
            LinkQuality::Regular => 'R',
            LinkQuality::Weak => 'W',
        }
    }
}

impl FromStr for LinkQuality {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "R" | "r" | "Regular" | "regular" => Ok(LinkQuality::Regular),
            "W" | "w" | "Weak" | "weak" => Ok(LinkQuality::Weak),
            other => Err(EnvError::Config(format!("unknown link quality `{other}`"))),
        }
    }
}

/// Star topology: each device talks to the edge, the cloud sits behind the edge.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Topology {
    pub device_links: Vec<LinkQuality>,
    pub edge_link: LinkQuality,
}

impl Topology {
    pub fn new(device_links: Vec<LinkQuality>, edge_link: LinkQuality) -> Result<Topology, EnvError> {
        let t = Topology { device_links, edge_link };
        t.validate()?;
        Ok(t)
    }

    pub fn uniform(n_devices: usize, quality: LinkQuality) -> Result<Topology, EnvError> {
        Topology::new(vec![quality; n_devices], quality)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let n = self.device_links.len();
        if (1..=MAX_DEVICES).contains(&n) {
            Ok(())
        } else {
            Err(EnvError::Config(format!("n_devices must be in [1, {MAX_DEVICES}], got {n}")))
        }
    }

    pub fn n_devices(&self) -> usize {
        self.device_links.len()
    }

    /// Link qualities as a compact string, devices first then the edge: `RWR|W`.
    pub fn signature(&self) -> String {
        let devices: String = self.device_links.iter().map(|l| l.letter()).collect();
        format!("{devices}|{}", self.edge_link.letter())
    }
}

/// The four network-condition experiments (S1..S5, E).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    A,
    B,
    C,
    D,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::A, Scenario::B, Scenario::C, Scenario::D];

    fn row(self) -> [LinkQuality; MAX_DEVICES + 1] {
        use LinkQuality::{Regular as R, Weak as W};
        match self {
            Scenario::A => [R, R, R, R, R, R],
            Scenario::B => [R, W, R, W, R, W],
            Scenario::C => [W, W, W, R, R, R],
            Scenario::D => [W, W, W, W, W, W],
        }
    }

    /// The first `n_devices` device columns plus the edge column.
    pub fn topology(self, n_devices: usize) -> Result<Topology, EnvError> {
        if !(1..=MAX_DEVICES).contains(&n_devices) {
            return Err(EnvError::Config(format!(
                "n_devices must be in [1, {MAX_DEVICES}], got {n_devices}"
            )));
        }
        let row = self.row();
        Topology::new(row[..n_devices].to_vec(), row[MAX_DEVICES])
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Scenario {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Scenario::A),
            "B" => Ok(Scenario::B),
            "C" => Ok(Scenario::C),
            "D" => Ok(Scenario::D),
            other => Err(EnvError::Config(format!("unknown scenario `{other}`"))),
        }
    }
}
