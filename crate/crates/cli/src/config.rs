//! Pipeline configuration: one JSON file drives every stage. Unknown keys
//! are rejected; the canonical serialization is hashed and stamped into all
//! artifacts so stages refuse to mix outputs from different configs.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ad_core::features::ExtractionConfig;
use ad_core::ingest::CompletenessConfig;
use ad_core::labeling::LabelingConfig;
use ad_core::synth::CohortConfig;
use ad_learn::ensemble::MetaKind;
use ad_learn::shap::boruta::BorutaParams;
use ad_learn::trees::{ForestParams, GbtParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregatorCfg {
    KVote { k: usize },
    Stacked { meta: MetaKind },
}

impl Default for AggregatorCfg {
    fn default() -> Self {
        AggregatorCfg::Stacked {
            meta: MetaKind::NearestCentroid,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleCfg {
    pub aggregator: AggregatorCfg,
    pub vote_threshold: f64,
    pub abstention_fill: f64,
    /// Learner ids to keep (e.g. "mod:HR", "dev:ECG-patch"); null = all 9.
    pub learner_subset: Option<Vec<String>>,
    pub oof_folds: usize,
}

impl Default for EnsembleCfg {
    fn default() -> Self {
        EnsembleCfg {
            aggregator: AggregatorCfg::default(),
            vote_threshold: 0.5,
            abstention_fill: 0.5,
            learner_subset: None,
            oof_folds: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionModeCfg {
    /// Leakage-safe: shadow-feature selection per LOSO fold (eval default).
    PerFold,
    /// Reuse the `select` stage's global selection in every fold.
    Global,
    /// No selection; every scope column feeds its learner.
    AllColumns,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalCfg {
    pub seeds: usize,
    pub selection_mode: SelectionModeCfg,
    /// Reduced-budget selection parameters used inside the LOSO loop.
    pub boruta: BorutaParams,
}

impl Default for EvalCfg {
    fn default() -> Self {
        EvalCfg {
            seeds: 10,
            selection_mode: SelectionModeCfg::PerFold,
            boruta: BorutaParams {
                max_iter: 30,
                row_cap: 500,
                gbt: GbtParams {
                    n_trees: 32,
                    max_depth: 3,
                    learning_rate: 0.2,
                    min_leaf: 5,
                    col_fraction: Some(0.5),
                    lambda: 1.0,
                    seed: 0,
                },
                ..BorutaParams::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowCfg {
    pub duration_s: f64,
    pub step_s: f64,
}

impl Default for WindowCfg {
    fn default() -> Self {
        WindowCfg {
            duration_s: 60.0,
            step_s: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepCfg {
    /// (duration_s, step_s) pairs; defaults to the six studied configs.
    pub specs: Vec<(f64, f64)>,
    pub seeds: usize,
    /// Learner subsets for the robustness table; null = full set plus all
    /// leave-one-out subsets.
    pub subsets: Option<Vec<Vec<String>>>,
}

impl Default for SweepCfg {
    fn default() -> Self {
        SweepCfg {
            specs: vec![
                (5.0, 5.0),
                (10.0, 5.0),
                (10.0, 10.0),
                (30.0, 10.0),
                (60.0, 5.0),
                (60.0, 10.0),
            ],
            seeds: 1,
            subsets: None,
        }
    }
}

/// The whole pipeline configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root seed; every stage derives its own stream from it.
    pub seed: u64,
    pub out_dir: String,
    /// Recording directory; defaults to `<out_dir>/data`.
    pub data_dir: Option<String>,
    pub window: WindowCfg,
    pub labeling: LabelingConfig,
    pub extraction: ExtractionConfig,
    pub completeness: CompletenessConfig,
    pub synth: CohortConfig,
    /// Full-budget selection used by the `select` stage.
    pub selection: BorutaParams,
    pub forest: ForestParams,
    pub ensemble: EnsembleCfg,
    pub eval: EvalCfg,
    pub sweep: SweepCfg,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            out_dir: "out".into(),
            data_dir: None,
            window: WindowCfg::default(),
            labeling: LabelingConfig::default(),
            extraction: ExtractionConfig::default(),
            completeness: CompletenessConfig::default(),
            synth: CohortConfig::default(),
            selection: BorutaParams::default(),
            forest: ForestParams::default(),
            ensemble: EnsembleCfg::default(),
            eval: EvalCfg::default(),
            sweep: SweepCfg::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &std::path::Path) -> anyhow::Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        ad_core::window::WindowSpec::new(self.window.duration_s, self.window.step_s)
            .map_err(|e| anyhow::anyhow!("window: {e}"))?;
        self.labeling
            .validate()
            .map_err(|e| anyhow::anyhow!("labeling: {e}"))?;
        if self.eval.seeds == 0 {
            anyhow::bail!("eval.seeds must be >= 1");
        }
        for (d, s) in &self.sweep.specs {
            ad_core::window::WindowSpec::new(*d, *s)
                .map_err(|e| anyhow::anyhow!("sweep spec ({d},{s}): {e}"))?;
        }
        Ok(())
    }

    /// Hash of the canonical serialization; stamped into every artifact.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(16);
        for b in digest.iter().take(8) {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }

    pub fn data_dir(&self) -> std::path::PathBuf {
        match &self.data_dir {
            Some(d) => d.into(),
            None => std::path::Path::new(&self.out_dir).join("data"),
        }
    }

    pub fn window_spec(&self) -> ad_core::window::WindowSpec {
        ad_core::window::WindowSpec::new(self.window.duration_s, self.window.step_s)
            .expect("validated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_and_hash_is_stable() {
        let cfg = PipelineConfig::default();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: PipelineConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = r#"{"seed": 1, "bogus_key": true}"#;
        assert!(serde_json::from_str::<PipelineConfig>(bad).is_err());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = PipelineConfig::default();
        let b = PipelineConfig {
            seed: 43,
            ..PipelineConfig::default()
        };
        assert_ne!(a.hash(), b.hash());
    }
}
