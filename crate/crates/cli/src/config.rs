use std::fs;
use std::path::{Path, PathBuf};

use densekit::asa::AsaConfig;
use densekit::gsa::{ExternalCommand, MorrisConfig, SobolConfig};
use densekit::metrics::FeatureConfig;
use densekit::wom::WomConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Density-family rates 1.0, 0.9, ..., 0.5.
pub const DEFAULT_RATES: [f64; 6] = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GsaSection {
    pub morris: MorrisConfig,
    pub sobol: SobolConfig,
    /// Neighbours used by the surrogate.
    pub knn_k: usize,
    pub external: Option<ExternalCommand>,
}

impl Default for GsaSection {
    fn default() -> Self {
        GsaSection {
            morris: MorrisConfig::default(),
            sobol: SobolConfig::default(),
            knn_k: 5,
            external: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleSection {
    pub rates: Vec<f64>,
    pub count: usize,
    pub rarity_bins: usize,
    pub rarity_control: bool,
}

impl Default for ResampleSection {
    fn default() -> Self {
        ResampleSection {
            rates: DEFAULT_RATES.to_vec(),
            count: 23,
            rarity_bins: 4,
            rarity_control: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

/// Everything a run can be configured with; command-line flags override it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolConfig {
    pub seed: Option<u64>,
    pub feature: FeatureConfig,
    pub wom: WomConfig,
    pub gsa: GsaSection,
    pub asa: AsaConfig,
    pub resample: ResampleSection,
    pub paths: Paths,
}

impl ToolConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let mut cfg: ToolConfig =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.paths.corpus, &mut cfg.paths.records, &mut cfg.paths.output_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Pushes one seed into every stochastic section.
    pub fn apply_seed(&mut self, flag: Option<u64>) {
        let seed = flag.or(self.seed).unwrap_or(0);
        self.seed = Some(seed);
        self.wom.seed = seed;
        self.gsa.morris.seed = seed;
        self.gsa.sobol.seed = seed;
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}
