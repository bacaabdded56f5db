//! Inference model zoo, accuracy arithmetic and accuracy constraint levels.
//!
//! Accuracies are stored as integer hundredths of a percent so that averages
//! and threshold comparisons over a handful of devices are exact.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of model variants every catalog must hold.
pub const MODEL_COUNT: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum CatalogError {
    #[error("empty selection")]
    EmptySelection,
    #[error("catalog must contain exactly {MODEL_COUNT} models with ids d0..d7, got {0}")]
    WrongCardinality(usize),
    #[error("model id `{0}` is not one of d0..d7")]
    BadModelId(String),
    #[error("duplicate model id d{0}")]
    DuplicateId(u8),
    #[error("accuracy {0} outside (0, 100]")]
    AccuracyOutOfRange(f64),
    #[error("unknown accuracy constraint `{0}`")]
    UnknownConstraint(String),
    #[error("catalog file: {0}")]
    Parse(String),
}

/// Identifier of one of the eight model variants, `d0`..`d7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModelId(u8);

impl ModelId {
    /// The highest-accuracy model; the only one edge and cloud nodes run.
    pub const D0: ModelId = ModelId(0);

    pub fn new(index: usize) -> Option<ModelId> {
        (index < MODEL_COUNT).then_some(ModelId(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = ModelId> {
        (0..MODEL_COUNT as u8).map(ModelId)
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}", self.0)
    }
}

impl FromStr for ModelId {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim()
            .strip_prefix('d')
            .and_then(|rest| rest.parse::<usize>().ok())
            .and_then(ModelId::new)
            .ok_or_else(|| CatalogError::BadModelId(s.to_string()))
    }
}

impl TryFrom<String> for ModelId {
    type Error = CatalogError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ModelId> for String {
    fn from(id: ModelId) -> String {
        id.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Precision {
    #[serde(alias = "fp32", alias = "FP32")]
    Fp32,
    #[serde(alias = "int8", alias = "INT8")]
    Int8,
}

impl Precision {
    /// Bytes-per-weight proxy used for the memory footprint.
    pub fn bytes_per_weight(self) -> u64 {
        match self {
            Precision::Fp32 => 4,
            Precision::Int8 => 1,
        }
    }
}

/// Accuracy in hundredths of a percent (`8990` is 89.90 %).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Accuracy(u32);

impl Accuracy {
    pub const fn from_hundredths(h: u32) -> Accuracy {
        Accuracy(h)
    }

    /// Rounds to the nearest hundredth.
    pub fn from_percent(p: f64) -> Accuracy {
        Accuracy((p * 100.0).round().max(0.0) as u32)
    }

    pub fn hundredths(self) -> u32 {
        self.0
    }

    pub fn percent(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Accuracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceModel {
    pub id: ModelId,
    /// Millions of multiply-accumulates per inference.
    pub macs: u32,
    pub precision: Precision,
    pub accuracy: Accuracy,
}

impl InferenceModel {
    /// Abstract memory units: MACs scaled by the bytes-per-weight proxy.
    pub fn mem_footprint(&self) -> u64 {
        self.macs as u64 * self.precision.bytes_per_weight()
    }
}

/// Minimum average-accuracy levels, in increasing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AccuracyConstraint {
    Min,
    P80,
    P85,
    P89,
    Max,
}

impl AccuracyConstraint {
    pub const ALL: [AccuracyConstraint; 5] = [
        AccuracyConstraint::Min,
        AccuracyConstraint::P80,
        AccuracyConstraint::P85,
        AccuracyConstraint::P89,
        AccuracyConstraint::Max,
    ];

    pub fn threshold(self) -> Accuracy {
        Accuracy::from_hundredths(match self {
            AccuracyConstraint::Min => 0,
            AccuracyConstraint::P80 => 8000,
            AccuracyConstraint::P85 => 8500,
            AccuracyConstraint::P89 => 8900,
            AccuracyConstraint::Max => 8990,
        })
    }

    /// Exact check of `sum / count >= threshold` on hundredths.
    pub fn admits_sum(self, accuracy_sum: u64, count: usize) -> bool {
        accuracy_sum >= self.threshold().hundredths() as u64 * count as u64
    }

    pub fn admits(self, average_percent: f64) -> bool {
        average_percent >= self.threshold().percent()
    }

    pub fn label(self) -> &'static str {
        match self {
            AccuracyConstraint::Min => "Min",
            AccuracyConstraint::P80 => "80%",
            AccuracyConstraint::P85 => "85%",
            AccuracyConstraint::P89 => "89%",
            AccuracyConstraint::Max => "Max",
        }
    }
}

impl fmt::Display for AccuracyConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AccuracyConstraint {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().trim_end_matches('%').to_ascii_lowercase().as_str() {
            "min" | "0" => Ok(AccuracyConstraint::Min),
            "80" | "p80" => Ok(AccuracyConstraint::P80),
            "85" | "p85" => Ok(AccuracyConstraint::P85),
            "89" | "p89" => Ok(AccuracyConstraint::P89),
            "max" => Ok(AccuracyConstraint::Max),
            _ => Err(CatalogError::UnknownConstraint(s.to_string())),
        }
    }
}

impl TryFrom<String> for AccuracyConstraint {
    type Error = CatalogError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<AccuracyConstraint> for String {
    fn from(c: AccuracyConstraint) -> String {
        c.label().to_string()
    }
}

/// The immutable model zoo, indexed by [`ModelId`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Catalog {
    models: Vec<InferenceModel>,
}

#[derive(Deserialize)]
struct CatalogFile {
    model: Vec<ModelRow>,
}

#[derive(Deserialize)]
struct ModelRow {
    id: ModelId,
    macs: u32,
    precision: Precision,
    accuracy: f64,
}

impl Default for Catalog {
    fn default() -> Self {
        load_default_catalog()
    }
}

/// The eight MobileNetV1-224 variants: four width multipliers in FP32, then
/// the same four quantized to Int8.
pub fn load_default_catalog() -> Catalog {
    use Precision::*;
    let rows: [(u32, Precision, u32); MODEL_COUNT] = [
        (569, Fp32, 8990),
        (317, Fp32, 8820),
        (150, Fp32, 8490),
        (41, Fp32, 7420),
        (569, Int8, 8890),
        (317, Int8, 8700),
        (150, Int8, 8320),
        (41, Int8, 7280),
    ];
    let models = rows
        .iter()
        .enumerate()
        .map(|(i, &(macs, precision, acc))| InferenceModel {
            id: ModelId(i as u8),
            macs,
            precision,
            accuracy: Accuracy::from_hundredths(acc),
        })
        .collect();
    Catalog { models }
}

impl Catalog {
    pub fn new(mut models: Vec<InferenceModel>) -> Result<Catalog, CatalogError> {
        if models.len() != MODEL_COUNT {
            return Err(CatalogError::WrongCardinality(models.len()));
        }
        models.sort_by_key(|m| m.id);
        for pair in models.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(CatalogError::DuplicateId(pair[0].id.0));
            }
        }
        for m in &models {
            let h = m.accuracy.hundredths();
            if h == 0 || h > 10_000 {
                return Err(CatalogError::AccuracyOutOfRange(m.accuracy.percent()));
            }
        }
        Ok(Catalog { models })
    }

    /// Parses a TOML catalog: one `[[model]]` table per row with
    /// `id`, `macs`, `precision` and `accuracy` (percent).
    pub fn from_toml_str(text: &str) -> Result<Catalog, CatalogError> {
        let file: CatalogFile =
            toml::from_str(text).map_err(|e| CatalogError::Parse(e.to_string()))?;
        let mut models = Vec::with_capacity(file.model.len());
        for row in file.model {
            if !(row.accuracy > 0.0 && row.accuracy <= 100.0) {
                return Err(CatalogError::AccuracyOutOfRange(row.accuracy));
            }
            models.push(InferenceModel {
                id: row.id,
                macs: row.macs,
                precision: row.precision,
                accuracy: Accuracy::from_percent(row.accuracy),
            });
        }
        Catalog::new(models)
    }

    pub fn from_file(path: &Path) -> Result<Catalog, CatalogError> {
        let text = std::fs::read_to_string(path).map_err(|e| CatalogError::Parse(e.to_string()))?;
        Catalog::from_toml_str(&text)
    }

    pub fn models(&self) -> &[InferenceModel] {
        &self.models
    }

    pub fn get(&self, id: ModelId) -> &InferenceModel {
        &self.models[id.index()]
    }

    pub fn max_accuracy(&self) -> Accuracy {
        self.models.iter().map(|m| m.accuracy).max().unwrap_or(Accuracy(0))
    }

    /// Models whose own accuracy reaches `threshold`, most accurate first.
    ///
    /// Only a pruning aid: the binding constraint is on the average across
    /// devices.
    pub fn feasible_models(&self, threshold: f64) -> Vec<&InferenceModel> {
        let bar = Accuracy::from_percent(threshold);
        let mut out: Vec<&InferenceModel> =
            self.models.iter().filter(|m| m.accuracy >= bar).collect();
        out.sort_by(|a, b| b.accuracy.cmp(&a.accuracy).then(a.id.cmp(&b.id)));
        out
    }
}

/// Sum of accuracies in hundredths.
pub fn accuracy_sum<'a>(selection: impl IntoIterator<Item = &'a InferenceModel>) -> (u64, usize) {
    selection
        .into_iter()
        .fold((0, 0), |(s, n), m| (s + m.accuracy.hundredths() as u64, n + 1))
}

/// Arithmetic mean of the selected models' accuracies, in percent.
pub fn average_accuracy<'a>(
    selection: impl IntoIterator<Item = &'a InferenceModel>,
) -> Result<f64, CatalogError> {
    let (sum, n) = accuracy_sum(selection);
    if n == 0 {
        return Err(CatalogError::EmptySelection);
    }
    Ok(sum as f64 / n as f64 / 100.0)
}
