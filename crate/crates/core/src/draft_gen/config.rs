use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binder::BinderConfig;
use crate::executor::VoteMode;
use crate::kb_store::HopMode;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExemplarMode {
    #[default]
    Random,
    /// BM25 nearest training questions.
    Retrieved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Grailqa,
    Webqsp,
    Graphqa,
    Metaqa,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("`{field}` must be at least 1")]
pub struct ConfigError {
    pub field: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// N: exemplars per prompt.
    pub shots: usize,
    /// K: drafts per question.
    pub drafts: usize,
    /// n: entity candidates per slot.
    pub entity_top: usize,
    /// m: schema candidates per slot.
    pub relation_top: usize,
    pub exemplar_mode: ExemplarMode,
    pub seed: u64,
    /// Grounded candidates per draft.
    pub budget: usize,
    pub vote_mode: VoteMode,
    pub hop_mode: HopMode,
    pub temperature: f64,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig::preset(Preset::Grailqa)
    }
}

impl PipelineConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = PipelineConfig {
            shots: 40,
            drafts: 6,
            entity_top: 15,
            relation_top: 10,
            exemplar_mode: ExemplarMode::Random,
            seed: 0,
            budget: 2000,
            vote_mode: VoteMode::All,
            hop_mode: HopMode::Undirected,
            temperature: 0.7,
            workers: 4,
        };
        match preset {
            Preset::Grailqa => base,
            Preset::Webqsp | Preset::Graphqa => PipelineConfig { shots: 100, ..base },
            Preset::Metaqa => PipelineConfig {
                shots: 5,
                relation_top: 1,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, value) in [
            ("shots", self.shots),
            ("drafts", self.drafts),
            ("entity_top", self.entity_top),
            ("relation_top", self.relation_top),
            ("budget", self.budget),
            ("workers", self.workers),
        ] {
            if value < 1 {
                return Err(ConfigError { field });
            }
        }
        Ok(())
    }

    pub fn binder(&self) -> BinderConfig {
        BinderConfig {
            entity_top: self.entity_top,
            relation_top: self.relation_top,
            budget: self.budget,
            hop_mode: self.hop_mode,
        }
    }
}
