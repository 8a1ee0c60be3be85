use std::path::{Path, PathBuf};

use bmera::models::ModelSpec;
use bmera::network::{MeraConfig, WARN_TOL};
use bmera::optimizer::OptimizeConfig;
use bmera::oracle::DEFAULT_BUDGET;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkSection,
    #[serde(default)]
    pub check: CheckSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    pub operator: Option<OperatorSpec>,
    #[serde(default)]
    pub profile: FitSection,
    #[serde(default)]
    pub correlator: CorrelatorSection,
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub energy: EnergySection,
    pub optimize: Option<OptimizeConfig>,
    #[serde(default)]
    pub checkpoint: CheckpointSection,
    #[serde(default)]
    pub exact: ExactSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub d: usize,
    pub m: usize,
    pub n: u32,
    pub seed: u64,
    #[serde(default = "yes")]
    pub mirror_boundary: bool,
    /// Load tensors from a saved container instead of generating them.
    pub tensors: Option<PathBuf>,
}

impl NetworkSection {
    pub fn mera(&self) -> MeraConfig {
        MeraConfig {
            d: self.d,
            m: self.m,
            n: self.n,
            seed: self.seed,
            mirror_boundary: self.mirror_boundary,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    #[serde(default = "warn_tol")]
    pub tolerance: f64,
}

impl Default for CheckSection {
    fn default() -> Self {
        Self { tolerance: WARN_TOL }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    /// The doubled map has dimension `d^12`; skip it for large runs.
    #[serde(default = "yes")]
    pub twopoint: bool,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { twopoint: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    /// Three-letter Pauli string such as `"ZIZ"` (d = 2).
    Pauli { string: String },
    /// Heisenberg eigenoperator of the averaged descending map, `index = 0`
    /// for the slowest decaying one.
    Scaling { index: usize },
    Identity,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default = "window")]
    pub window: (u32, u32),
    #[serde(default = "floor")]
    pub floor: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            window: window(),
            floor: floor(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Product,
    Split,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelatorSection {
    #[serde(default = "window")]
    pub window: (u32, u32),
    #[serde(default = "floor")]
    pub floor: f64,
    #[serde(default = "product")]
    pub mode: Mode,
}

impl Default for CorrelatorSection {
    fn default() -> Self {
        Self {
            window: window(),
            floor: floor(),
            mode: Mode::Product,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySection {
    #[serde(default = "tau")]
    pub tau: u32,
}

impl Default for EnergySection {
    fn default() -> Self {
        Self { tau: tau() }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointSection {
    /// Continue from a checkpoint written by an earlier `optimize` run.
    pub resume: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactSection {
    #[serde(default = "exact_tol")]
    pub tolerance: f64,
    #[serde(default = "budget")]
    pub budget: u64,
}

impl Default for ExactSection {
    fn default() -> Self {
        Self {
            tolerance: exact_tol(),
            budget: budget(),
        }
    }
}

fn yes() -> bool {
    true
}
fn warn_tol() -> f64 {
    WARN_TOL
}
fn window() -> (u32, u32) {
    (0, 10)
}
// Below ~1e-7 rounding in the bulk subtraction moves log2 values by ~1e-8.
fn floor() -> f64 {
    1e-6
}
fn product() -> Mode {
    Mode::Product
}
fn tau() -> u32 {
    8
}
fn exact_tol() -> f64 {
    1e-8
}
fn budget() -> u64 {
    DEFAULT_BUDGET as u64
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let c: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        c.network.mera().validate().map_err(|e| e.to_string())?;
        for (name, w) in [("profile", c.profile.window), ("correlator", c.correlator.window)] {
            if w.0 >= w.1 || w.1 > 60 {
                return Err(format!("{name}.window must satisfy lo < hi <= 60"));
            }
        }
        if c.energy.tau == 0 {
            return Err("energy.tau must be at least 1".into());
        }
        if let Some(o) = &c.optimize {
            o.validate().map_err(|e| e.to_string())?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text)
    }

    /// SHA-256 of the normalized config (defaults filled in).
    pub fn hash(&self) -> String {
        let canon = toml::to_string(self).expect("config serializes");
        Sha256::digest(canon.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = "[network]\nd = 2\nm = 1\nn = 2\nseed = 3\n";

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::parse(MIN).unwrap();
        assert_eq!(c.profile.window, (0, 10));
        assert_eq!(c.energy.tau, 8);
        assert!(c.spectrum.twopoint);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse(&format!("{MIN}extra = 1\n")).is_err());
        assert!(RunConfig::parse(&format!("{MIN}[energy]\ntau = 2\nfoo = 1\n")).is_err());
        assert!(RunConfig::parse(&format!("{MIN}[bogus]\n")).is_err());
        assert!(RunConfig::parse(&format!("{MIN}[optimize]\nsweeps = 2\nrate = 1\n")).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::parse("[network]\nd = 2\nm = 0\nn = 2\nseed = 3\n").is_err());
        assert!(RunConfig::parse(&format!("{MIN}[profile]\nwindow = [4, 2]\n")).is_err());
    }

    #[test]
    fn hash_ignores_layout_but_not_values() {
        let a = RunConfig::parse(MIN).unwrap();
        let b = RunConfig::parse(&format!("# comment\n{MIN}\n[energy]\ntau = 8\n")).unwrap();
        let c = RunConfig::parse(&MIN.replace("seed = 3", "seed = 4")).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}
