//! Experiment configuration: JSON schema, defaults, overrides and validation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::extension::ReflectionKind;
use crate::error::{Error, Result};
use crate::harness::data::DataSpec;
use crate::periodic::{CoefficientSpec, Lattice, SymbolSpec, MIN_POINTS_PER_PERIOD};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    /// Defaults to the unit lattice of the domain dimension.
    #[serde(default)]
    pub lattice: Option<Lattice>,
    pub coefficient: CoefficientSpec,
    pub symbol: SymbolSpec,
    /// Cell grid per axis; defaults to 512 in 1D and 64 per axis in 2D.
    #[serde(default)]
    pub cell_resolution: Option<Vec<usize>>,
    pub domain: DomainSpec,
    /// Strictly decreasing, each in (0, 1].
    pub epsilons: Vec<f64>,
    pub times: Vec<f64>,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub grid: GridPolicy,
    #[serde(default)]
    pub extension: ExtensionSpec,
    #[serde(default)]
    pub evolution: EvolutionSpec,
    #[serde(default)]
    pub acceptance: AcceptanceSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    0x5eed
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    /// Interval (0, L) or rectangle (0, L₁) × (0, L₂).
    pub lengths: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridPolicy {
    pub points_per_period: usize,
    pub richardson: bool,
    pub richardson_factor: usize,
    /// Largest relative change of an error under h-refinement.
    pub richardson_tolerance: f64,
    /// Errors below this fraction of the data norm are not compared.
    pub richardson_floor: f64,
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy {
            points_per_period: 32,
            richardson: true,
            richardson_factor: 2,
            richardson_tolerance: 0.1,
            richardson_floor: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtensionSpec {
    pub kind: ReflectionKind,
    /// Box margin in units of ε times the largest cell extent.
    pub margin_periods: f64,
}

impl Default for ExtensionSpec {
    fn default() -> Self {
        ExtensionSpec {
            kind: ReflectionKind::C1,
            margin_periods: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvolutionMethod {
    /// Modal when under the size cap, leapfrog otherwise.
    Auto,
    Modal,
    Leapfrog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionSpec {
    pub method: EvolutionMethod,
    /// Time samples per unit for forcing and the discrepancy load.
    pub samples_per_unit: usize,
    /// Leapfrog step as a fraction of the stability limit.
    pub cfl_fraction: f64,
    pub discrepancy: bool,
}

impl Default for EvolutionSpec {
    fn default() -> Self {
        EvolutionSpec {
            method: EvolutionMethod::Auto,
            samples_per_unit: 256,
            cfl_fraction: 0.5,
            discrepancy: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcceptanceSpec {
    pub slope_window: [f64; 2],
    /// Times whose fitted slopes are checked; all positive times when empty.
    pub slope_times: Vec<f64>,
    /// Report slopes without asserting the window.
    pub exploratory: bool,
}

impl Default for AcceptanceSpec {
    fn default() -> Self {
        AcceptanceSpec {
            slope_window: [0.85, 1.3],
            slope_times: Vec::new(),
            exploratory: false,
        }
    }
}

impl ExperimentConfig {
    pub fn dim(&self) -> usize {
        self.domain.lengths.len()
    }

    pub fn lattice(&self) -> Result<Lattice> {
        match &self.lattice {
            Some(l) => Ok(l.clone()),
            None => Ok(Lattice::unit(self.dim())),
        }
    }

    pub fn cell_resolution(&self) -> Vec<usize> {
        match &self.cell_resolution {
            Some(r) => r.clone(),
            None if self.dim() == 1 => vec![512],
            None => vec![64; self.dim()],
        }
    }

    pub fn t_end(&self) -> f64 {
        self.times.iter().copied().fold(0.0, f64::max)
    }

    pub fn slope_times(&self) -> Vec<f64> {
        if self.acceptance.slope_times.is_empty() {
            self.times.iter().copied().filter(|t| *t > 0.0).collect()
        } else {
            self.acceptance.slope_times.clone()
        }
    }

    /// Every violation, one per line.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            v.push(format!("schema_version must be {SCHEMA_VERSION}, got {}", self.schema_version));
        }
        let d = self.dim();
        if !(1..=2).contains(&d) {
            v.push(format!("domain must be an interval or a rectangle, got {d} lengths"));
        }
        if self.domain.lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            v.push("domain lengths must be positive".into());
        }
        if let Some(l) = &self.lattice {
            if l.dim() != d {
                v.push(format!("lattice dimension {} differs from the domain dimension {d}", l.dim()));
            }
        }
        if let Some(r) = &self.cell_resolution {
            if r.len() != d || r.iter().any(|n| *n < 4) {
                v.push(format!("cell_resolution needs {d} entries of at least 4"));
            }
        }
        if self.epsilons.is_empty() {
            v.push("epsilons must not be empty".into());
        }
        for e in &self.epsilons {
            if !(*e > 0.0 && *e <= 1.0) {
                v.push(format!("ε must lie in (0,1], got {e}"));
            }
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            v.push("epsilons must be strictly decreasing".into());
        }
        if self.times.is_empty() {
            v.push("times must not be empty".into());
        }
        if self.times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            v.push("times must be finite and nonnegative".into());
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            v.push("times must be strictly increasing".into());
        }
        for t in self.slope_times() {
            if !self.times.iter().any(|s| (s - t).abs() <= 1e-12 * t.max(1.0)) {
                v.push(format!("slope time {t} is not among the configured times"));
            }
        }
        if self.grid.points_per_period < MIN_POINTS_PER_PERIOD {
            v.push(format!(
                "points_per_period must be at least {MIN_POINTS_PER_PERIOD}, got {}",
                self.grid.points_per_period
            ));
        }
        if self.grid.richardson_factor < 2 {
            v.push("richardson_factor must be at least 2".into());
        }
        if !(self.grid.richardson_tolerance > 0.0) {
            v.push("richardson_tolerance must be positive".into());
        }
        if !(self.extension.margin_periods > 0.5) {
            v.push("margin_periods must exceed 1/2 so the smoothing window fits in the box".into());
        }
        if self.evolution.samples_per_unit < crate::evolution::forcing::MIN_SAMPLES_PER_UNIT {
            v.push(format!(
                "samples_per_unit must be at least {}",
                crate::evolution::forcing::MIN_SAMPLES_PER_UNIT
            ));
        }
        if !(self.evolution.cfl_fraction > 0.0 && self.evolution.cfl_fraction <= 1.0) {
            v.push("cfl_fraction must lie in (0, 1]".into());
        }
        let [lo, hi] = self.acceptance.slope_window;
        if !(lo < hi) {
            v.push("slope_window must be an increasing pair".into());
        }
        v.extend(self.data.violations(d));
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("\n")))
        }
    }

    /// Parses, applies `key=value` overrides, resolves relative paths and validates.
    pub fn from_json_str(text: &str, overrides: &[String], base: Option<&Path>) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(base) = base {
            cfg.coefficient.resolve_paths(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text, overrides, path.parent())
    }

    /// The config with every default filled in.
    pub fn resolved(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut v {
            map.insert("lattice".into(), serde_json::to_value(self.lattice().ok()).expect("lattice serializes"));
            map.insert("cell_resolution".into(), serde_json::to_value(self.cell_resolution()).expect("serializes"));
        }
        v
    }
}

/// Sets a dotted `key=value` path; the value is parsed as JSON, falling back to a string.
pub fn apply_override(root: &mut Value, kv: &str) -> Result<()> {
    let (key, raw) = kv
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{kv}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override `{kv}` has an empty key")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::Config(format!("override `{key}`: `{part}` indexes an array")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("override `{key}`: index {idx} out of range ({len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Config(format!("override `{key}`: `{part}` is below a scalar"))),
        };
    }
    Ok(())
}
