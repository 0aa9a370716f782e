//! Pipeline configuration. Every field has a default, so a partial JSON file
//! is valid and `PipelineConfig::default()` is the reference setup.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::align::AlignTrainConfig;
use crate::embed::ReferenceEmbedderConfig;
use crate::error::{Error, Result};
use crate::evalstats::TTestPolicy;
use crate::graphembed::GraphTrainConfig;
use crate::kg;
use crate::pairs::{RegionPartition, RegionQuota};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Directory holding the three source CSV files.
    pub input_dir: PathBuf,
    /// Directory receiving every artifact.
    pub out_dir: PathBuf,
    pub summary_sentences: usize,
    pub embedder: ReferenceEmbedderConfig,
    pub pairs: PairsConfig,
    pub kg: KgConfig,
    pub graph: GraphTrainConfig,
    pub align: AlignTrainConfig,
    pub eval: EvalConfig,
    pub explain: ExplainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairsConfig {
    /// Samples drawn per anchor across the top, bottom and middle bands.
    pub per_anchor_cap: usize,
    pub eval_fraction: f64,
    pub partition: RegionPartition,
    pub train_quota: RegionQuota,
    pub eval_quota: RegionQuota,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KgConfig {
    pub max_skills_per_job: usize,
    pub job_skill_threshold: f64,
    pub skill_skill_threshold: f64,
    pub job_share_threshold: f64,
}

/// Extra text models to score as baselines: each is an embedding CSV keyed
/// by job id, compared by raw cosine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextModel {
    pub name: String,
    pub embeddings: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub ttest: TTestPolicy,
    pub significance: f64,
    pub text_models: Vec<TextModel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub verdict_threshold: f64,
    pub hops: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            input_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("artifacts"),
            summary_sentences: crate::corpus::DEFAULT_SUMMARY_SENTENCES,
            embedder: ReferenceEmbedderConfig::default(),
            pairs: PairsConfig::default(),
            kg: KgConfig::default(),
            graph: GraphTrainConfig::default(),
            align: AlignTrainConfig::default(),
            eval: EvalConfig::default(),
            explain: ExplainConfig::default(),
        }
    }
}

impl Default for PairsConfig {
    fn default() -> Self {
        PairsConfig {
            per_anchor_cap: 30,
            eval_fraction: 0.2,
            partition: RegionPartition::default(),
            train_quota: RegionQuota::uniform(1500),
            eval_quota: RegionQuota::uniform(400),
        }
    }
}

impl Default for KgConfig {
    fn default() -> Self {
        KgConfig {
            max_skills_per_job: kg::MAX_SKILLS_PER_JOB,
            job_skill_threshold: kg::JOB_SKILL_THRESHOLD,
            skill_skill_threshold: kg::SKILL_SKILL_THRESHOLD,
            job_share_threshold: kg::JOB_SHARE_THRESHOLD,
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ttest: TTestPolicy::default(),
            significance: 0.05,
            text_models: Vec::new(),
        }
    }
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            verdict_threshold: 0.5,
            hops: 1,
        }
    }
}

fn unit(errs: &mut Vec<String>, name: &str, v: f64) {
    if !(0.0..=1.0).contains(&v) {
        errs.push(format!("{name} must lie in [0, 1] (got {v})"));
    }
}

impl PipelineConfig {
    /// Every problem in the configuration, one message per field.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.summary_sentences < 1 {
            errs.push("summary_sentences must be >= 1".into());
        }
        errs.extend(self.embedder.validate().into_iter().map(|e| format!("embedder: {e}")));
        let p = &self.pairs;
        if p.per_anchor_cap < 1 {
            errs.push("pairs.per_anchor_cap must be >= 1".into());
        }
        if !(p.eval_fraction > 0.0 && p.eval_fraction < 1.0) {
            errs.push(format!("pairs.eval_fraction must lie in (0, 1) (got {})", p.eval_fraction));
        }
        errs.extend(p.partition.validate().into_iter().map(|e| format!("pairs.partition: {e}")));
        for (name, q) in [("train_quota", &p.train_quota), ("eval_quota", &p.eval_quota)] {
            for (region, v) in [("low", q.low), ("medium", q.medium), ("high", q.high)] {
                if v < 1 {
                    errs.push(format!("pairs.{name}.{region} must be >= 1"));
                }
            }
        }
        if self.kg.max_skills_per_job < 1 {
            errs.push("kg.max_skills_per_job must be >= 1".into());
        }
        unit(&mut errs, "kg.job_skill_threshold", self.kg.job_skill_threshold);
        unit(&mut errs, "kg.skill_skill_threshold", self.kg.skill_skill_threshold);
        unit(&mut errs, "kg.job_share_threshold", self.kg.job_share_threshold);
        errs.extend(self.graph.validate());
        errs.extend(self.align.validate());
        if !(self.eval.significance > 0.0 && self.eval.significance < 1.0) {
            errs.push(format!("eval.significance must lie in (0, 1) (got {})", self.eval.significance));
        }
        for (i, m) in self.eval.text_models.iter().enumerate() {
            if m.name.trim().is_empty() {
                errs.push(format!("eval.text_models[{i}].name must be non-empty"));
            }
        }
        unit(&mut errs, "explain.verdict_threshold", self.explain.verdict_threshold);
        if !(1..=2).contains(&self.explain.hops) {
            errs.push(format!("explain.hops must be 1 or 2 (got {})", self.explain.hops));
        }
        errs
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)?;
        cfg.checked()
    }

    pub fn checked(self) -> Result<Self> {
        let errs = self.validate();
        if errs.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Seed of one stage, derived from the global seed and the stage name.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        crate::hash::derive_seed(self.seed, stage)
    }
}
