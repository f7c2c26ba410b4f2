use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cadforge_core::evolve::EvolveConfig;
use cadforge_core::kernel::{Aabb, DEFAULT_HALF_EXTENT, DEFAULT_RESOLUTION};
use cadforge_core::metrics::MetricsConfig;
use cadforge_core::proposer::ProposerConfig;
use cadforge_core::qd::PenaltyConfig;
use cadforge_core::render::ViewMode;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub kernel: KernelConfig,
    pub penalty: PenaltyConfig,
    pub evolve: EvolveSettings,
    pub sample: SampleSettings,
    pub metrics: MetricsSettings,
    pub render: RenderSettings,
    pub proposer: ProposerConfig,
    pub seeds: Seeds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory of seed generators; the built-in seeds when unset.
    pub seeds: Option<PathBuf>,
    pub pool: PathBuf,
    pub corpus: PathBuf,
    pub donors: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            seeds: None,
            pool: "pool".into(),
            corpus: "corpus".into(),
            donors: None,
            output: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub resolution: usize,
    /// Half side of the cubic evaluation domain.
    pub half_extent: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            resolution: DEFAULT_RESOLUTION,
            half_extent: DEFAULT_HALF_EXTENT,
        }
    }
}

impl KernelConfig {
    pub fn domain(&self) -> Aabb {
        Aabb::cube(self.half_extent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveSettings {
    pub parents: usize,
    pub children: usize,
    pub neighbors: usize,
    pub repairs: usize,
    pub iterations: usize,
    /// Stop once this many children were accepted; iterations only when unset.
    pub accepted: Option<usize>,
    pub window: usize,
    pub floor: f64,
    pub render_resolution: usize,
}

impl Default for EvolveSettings {
    fn default() -> Self {
        let e = EvolveConfig::default();
        EvolveSettings {
            parents: e.parents,
            children: e.children,
            neighbors: e.neighbors,
            repairs: e.repairs,
            iterations: 50,
            accepted: None,
            window: e.window,
            floor: e.floor,
            render_resolution: e.render_resolution,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSettings {
    /// Accepted samples per generator.
    pub n: usize,
    /// Candidate evaluations per generator.
    pub budget: usize,
}

impl Default for SampleSettings {
    fn default() -> Self {
        SampleSettings {
            n: 15,
            budget: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSettings {
    pub n_points: usize,
    pub iou_resolution: usize,
}

impl Default for MetricsSettings {
    fn default() -> Self {
        let m = MetricsConfig::default();
        MetricsSettings {
            n_points: m.n_points,
            iou_resolution: m.iou_resolution,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSettings {
    pub views: usize,
    pub resolution: usize,
    pub near_bright: bool,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            views: 7,
            resolution: DEFAULT_RESOLUTION,
            near_bright: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub evolve: u64,
    pub proposer: u64,
    pub sample: u64,
    pub augment: u64,
    pub metrics: u64,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        PipelineConfig::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Rejects unknown keys, naming the offending path.
    pub fn parse(text: &str) -> Result<PipelineConfig> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("config key `{path}`: {}", e.into_inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if ViewMode::from_count(self.render.views).is_none() {
            bail!(
                "config key `render.views`: expected 7 or 8, got {}",
                self.render.views
            );
        }
        if !(16..=512).contains(&self.kernel.resolution) {
            bail!(
                "config key `kernel.resolution`: {} outside [16, 512]",
                self.kernel.resolution
            );
        }
        if !(self.kernel.half_extent.is_finite() && self.kernel.half_extent > 0.0) {
            bail!("config key `kernel.half_extent`: must be positive");
        }
        if !(1..=16).contains(&self.evolve.children) {
            bail!(
                "config key `evolve.children`: {} outside [1, 16]",
                self.evolve.children
            );
        }
        if self.evolve.parents == 0 {
            bail!("config key `evolve.parents`: must be at least 1");
        }
        Ok(())
    }

    pub fn override_seeds(&mut self, seed: u64) {
        self.seeds = Seeds {
            evolve: seed,
            proposer: seed,
            sample: seed,
            augment: seed,
            metrics: seed,
        };
    }

    pub fn evolve_config(&self) -> EvolveConfig {
        let e = &self.evolve;
        EvolveConfig {
            parents: e.parents,
            children: e.children,
            neighbors: e.neighbors,
            repairs: e.repairs,
            seed: self.seeds.evolve,
            window: e.window,
            floor: e.floor,
            render_resolution: e.render_resolution,
        }
    }

    pub fn metrics_config(&self) -> MetricsConfig {
        MetricsConfig {
            n_points: self.metrics.n_points,
            iou_resolution: self.metrics.iou_resolution,
            seed: self.seeds.metrics,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = PipelineConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(PipelineConfig::parse(&text).unwrap(), cfg);
        assert_eq!(PipelineConfig::parse("{}").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let e = PipelineConfig::parse(r#"{"evolve": {"childrn": 3}}"#)
            .unwrap_err()
            .to_string();
        assert!(e.contains("evolve.childrn"), "{e}");
        let e = PipelineConfig::parse(r#"{"penalty": {"epsilon": "x"}}"#)
            .unwrap_err()
            .to_string();
        assert!(e.contains("penalty.epsilon"), "{e}");
        let e = PipelineConfig::parse(r#"{"render": {"views": 6}}"#)
            .unwrap_err()
            .to_string();
        assert!(e.contains("render.views"), "{e}");
    }

    #[test]
    fn seed_override_reaches_every_consumer() {
        let mut cfg = PipelineConfig::default();
        cfg.override_seeds(42);
        assert_eq!(cfg.evolve_config().seed, 42);
        assert_eq!(cfg.metrics_config().seed, 42);
        assert_eq!(
            (cfg.seeds.sample, cfg.seeds.augment, cfg.seeds.proposer),
            (42, 42, 42)
        );
    }
}
