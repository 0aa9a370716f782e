//! Stage runners. Each stage reads source files or earlier artifacts, writes
//! its own artifacts into the output directory and records a manifest entry
//! holding the stage seed and the SHA-256 of every input and output.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::align::{self, AlignTrainReport, AlignmentModel};
use crate::config::PipelineConfig;
use crate::corpus::{self, JobRecord};
use crate::embed::{self, str_score, EmbeddingStore, ReferenceEmbedder};
use crate::error::{Error, Result};
use crate::evalstats::{self, EvalSummary, Prediction};
use crate::explain::{self, Explanation};
use crate::graphembed::{self, RelGraphModel};
use crate::kg::{self, job_node_id, KnowledgeGraph, SkillMatch};
use crate::pairs::{self, RegionCount, Role, StrPair};

pub const SUMMARIES: &str = "summaries.csv";
pub const JOB_EMBEDDINGS: &str = "job_embeddings.csv";
pub const TITLE_EMBEDDINGS: &str = "title_embeddings.csv";
pub const SKILL_EMBEDDINGS: &str = "skill_embeddings.csv";
pub const ALL_PAIRS: &str = "pairs_all.csv";
pub const TRAIN_PAIR_IDS: &str = "train_pair_ids.csv";
pub const EVAL_PAIR_IDS: &str = "eval_pair_ids.csv";
pub const SPLIT: &str = "split.json";
pub const MATCHES: &str = "job_skill_matches.csv";
pub const KG_FULL: &str = "kg_unpruned.json";
pub const KG: &str = "kg.json";
pub const SPECIFICITY: &str = "specificity.csv";
pub const GRAPH_EMBEDDINGS: &str = "graph_embeddings.csv";
pub const GRAPH_MODEL: &str = "graph_model.json";
pub const GRAPH_REPORT: &str = "graph_training.json";
pub const ALIGN_MODEL: &str = "alignment_model.json";
pub const ALIGN_REPORT: &str = "alignment_training.json";
pub const PREDICTIONS: &str = "predictions.csv";
pub const COMPARISON: &str = "model_comparison.json";
pub const EXPLANATIONS: &str = "explanations";
pub const MANIFEST: &str = "manifest.json";

/// Models scored by `predict`: the trained alignment, the same network at
/// its initial weights, and raw title-embedding cosine.
pub const ALIGNED: &str = "aligned";
pub const UNTRAINED: &str = "untrained";
pub const TITLE_COSINE: &str = "title-cosine";

pub const STAGES: [&str; 10] = [
    "summarize",
    "embed",
    "pairs",
    "split",
    "kg build",
    "kg embed",
    "align train",
    "predict",
    "eval",
    "explain",
];

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageRecord {
    pub seed: u64,
    /// SHA-256 of the configuration with directory paths cleared.
    pub config_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Split of job ids and the per-region counts of both pair datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train_jobs: Vec<String>,
    pub eval_jobs: Vec<String>,
    pub train_pairs_available: usize,
    pub eval_pairs_available: usize,
    pub cross_pairs_dropped: usize,
    pub train_counts: Vec<RegionCount>,
    pub eval_counts: Vec<RegionCount>,
}

/// Per-region comparison of the trained alignment against its untrained
/// initialisation on the evaluation pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGain {
    pub region: String,
    pub count: usize,
    pub aligned_rmse: Option<f64>,
    pub untrained_rmse: Option<f64>,
    /// `1 - aligned / untrained`.
    pub relative_reduction: Option<f64>,
    pub welch_t: Option<f64>,
    pub welch_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub global: RegionGain,
    pub regions: Vec<RegionGain>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Write a synthetic corpus into `dir`.
pub fn gen_corpus(dir: &Path, jobs: usize, skills: usize, seed: u64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    crate::synth::generate_corpus(jobs, skills, seed).write_dir(dir)?;
    Ok([corpus::JOBS_FILE, corpus::SKILLS_FILE, corpus::HIERARCHY_FILE]
        .iter()
        .map(|f| dir.join(f))
        .collect())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub struct Pipeline {
    pub config: PipelineConfig,
}

/// Inputs and outputs touched by one stage, as manifest keys and paths.
#[derive(Default)]
struct Touched {
    inputs: Vec<(String, PathBuf)>,
    outputs: Vec<(String, PathBuf)>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        Ok(Pipeline {
            config: config.checked()?,
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }

    fn source(&self, name: &str) -> Result<PathBuf> {
        let p = self.config.input_dir.join(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::MissingArtifact {
                path: p,
                stage: "gen-corpus".into(),
            })
        }
    }

    /// Path of an artifact that `stage` produces, or an error naming it.
    fn require(&self, name: &str, stage: &str) -> Result<PathBuf> {
        let p = self.artifact(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(Error::MissingArtifact {
                path: p,
                stage: stage.into(),
            })
        }
    }

    fn config_hash(&self) -> Result<String> {
        let mut cfg = self.config.clone();
        cfg.input_dir = PathBuf::new();
        cfg.out_dir = PathBuf::new();
        Ok(hex::encode(Sha256::digest(cfg.to_json()?.as_bytes())))
    }

    fn record(&self, stage: &str, seed: u64, touched: Touched) -> Result<StageRecord> {
        let hash_all = |items: &[(String, PathBuf)]| -> Result<BTreeMap<String, String>> {
            let mut out = BTreeMap::new();
            for (key, path) in items {
                if path.is_dir() {
                    let mut entries: Vec<PathBuf> = fs::read_dir(path)
                        .map_err(|e| Error::io(path, e))?
                        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(path, e)))
                        .collect::<Result<_>>()?;
                    entries.sort();
                    for p in entries {
                        let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
                        out.insert(format!("{key}/{name}"), sha256_file(&p)?);
                    }
                } else {
                    out.insert(key.clone(), sha256_file(path)?);
                }
            }
            Ok(out)
        };
        let rec = StageRecord {
            seed,
            config_sha256: self.config_hash()?,
            inputs: hash_all(&touched.inputs)?,
            outputs: hash_all(&touched.outputs)?,
        };
        let path = self.artifact(MANIFEST);
        let mut manifest = if path.exists() {
            Manifest::load(&path)?
        } else {
            Manifest::default()
        };
        manifest.stages.insert(stage.to_string(), rec.clone());
        write_json(&path, &manifest)?;
        log::info!("{stage}: wrote {} artifact(s)", rec.outputs.len());
        Ok(rec)
    }

    fn prepare(&self) -> Result<()> {
        fs::create_dir_all(&self.config.out_dir).map_err(|e| Error::io(&self.config.out_dir, e))
    }

    fn embedder(&self) -> ReferenceEmbedder {
        ReferenceEmbedder::new(self.config.embedder)
    }

    fn load_summaries(&self) -> Result<(Vec<JobRecord>, PathBuf)> {
        let p = self.require(SUMMARIES, "summarize")?;
        Ok((corpus::load_jobs(&p)?, p))
    }

    fn titles(jobs: &[JobRecord]) -> HashMap<String, String> {
        jobs.iter().map(|j| (j.id.clone(), j.title.clone())).collect()
    }

    pub fn summarize(&self) -> Result<StageRecord> {
        self.prepare()?;
        let src = self.source(corpus::JOBS_FILE)?;
        let mut jobs = corpus::load_jobs(&src)?;
        for j in &mut jobs {
            if j.summary.is_none() {
                j.summary = Some(corpus::summarize(j, self.config.summary_sentences));
            }
        }
        let out = self.artifact(SUMMARIES);
        corpus::write_jobs(&jobs, &out)?;
        self.record(
            "summarize",
            0,
            Touched {
                inputs: vec![(format!("input/{}", corpus::JOBS_FILE), src)],
                outputs: vec![(SUMMARIES.into(), out)],
            },
        )
    }

    pub fn embed(&self) -> Result<StageRecord> {
        self.prepare()?;
        let (jobs, summaries) = self.load_summaries()?;
        let skills_path = self.source(corpus::SKILLS_FILE)?;
        let skills = corpus::load_skills(&skills_path)?;
        let embedder = self.embedder();
        let summary_items: Vec<(String, String)> = jobs
            .iter()
            .map(|j| (j.id.clone(), j.summary.clone().unwrap_or_else(|| j.title.clone())))
            .collect();
        let title_items: Vec<(String, String)> =
            jobs.iter().map(|j| (j.id.clone(), j.title.clone())).collect();
        let skill_items: Vec<(String, String)> = skills
            .iter()
            .map(|s| (s.id.clone(), s.embedding_text().to_string()))
            .collect();
        let mut touched = Touched {
            inputs: vec![
                (SUMMARIES.into(), summaries),
                (format!("input/{}", corpus::SKILLS_FILE), skills_path),
            ],
            outputs: Vec::new(),
        };
        for (name, items) in [
            (JOB_EMBEDDINGS, &summary_items),
            (TITLE_EMBEDDINGS, &title_items),
            (SKILL_EMBEDDINGS, &skill_items),
        ] {
            let store = embed::embed_into_store(&embedder, items)?;
            let p = self.artifact(name);
            embed::save_store(&store, &p)?;
            touched.outputs.push((name.into(), p));
        }
        self.record("embed", 0, touched)
    }

    pub fn pairs(&self) -> Result<StageRecord> {
        self.prepare()?;
        let (jobs, _) = self.load_summaries()?;
        let store_path = self.require(JOB_EMBEDDINGS, "embed")?;
        let store = embed::load_store(&store_path)?;
        let ids: Vec<String> = jobs.iter().map(|j| j.id.clone()).collect();
        let mut cap = self.config.pairs.per_anchor_cap;
        if cap + 1 > ids.len() {
            cap = ids.len().saturating_sub(1);
            log::warn!("pairs: per-anchor cap lowered to {cap} for {} jobs", ids.len());
        }
        let seed = self.config.stage_seed("pairs");
        let pairs = pairs::build_pairs(&store, &ids, cap, seed)?;
        let out = self.artifact(ALL_PAIRS);
        pairs::write_pair_ids(&pairs, &out)?;
        self.record(
            "pairs",
            seed,
            Touched {
                inputs: vec![(JOB_EMBEDDINGS.into(), store_path)],
                outputs: vec![(ALL_PAIRS.into(), out)],
            },
        )
    }

    pub fn split(&self) -> Result<StageRecord> {
        self.prepare()?;
        let (jobs, summaries) = self.load_summaries()?;
        let all_path = self.require(ALL_PAIRS, "pairs")?;
        let all = pairs::read_pair_ids(&all_path)?;
        let cfg = &self.config.pairs;
        let seed = self.config.stage_seed("split");
        let (train_ids, eval_ids) = pairs::split_jobs_by_title(&jobs, cfg.eval_fraction, seed)?;
        let (train, eval) = pairs::partition_pairs(&all, &train_ids, &eval_ids);
        let (train_ds, train_counts) =
            pairs::stratify(&train, &cfg.partition, cfg.train_quota, Role::Train, seed ^ 1)?;
        let (eval_ds, eval_counts) =
            pairs::stratify(&eval, &cfg.partition, cfg.eval_quota, Role::Eval, seed ^ 2)?;
        let titles = Self::titles(&jobs);
        let mut touched = Touched {
            inputs: vec![(SUMMARIES.into(), summaries), (ALL_PAIRS.into(), all_path)],
            outputs: Vec::new(),
        };
        for (titled_name, id_name, ds) in [
            (pairs::TRAIN_PAIRS_FILE, TRAIN_PAIR_IDS, &train_ds),
            (pairs::EVAL_PAIRS_FILE, EVAL_PAIR_IDS, &eval_ds),
        ] {
            let tp = self.artifact(titled_name);
            pairs::write_pairs(&pairs::titled(&ds.pairs, &titles)?, &tp)?;
            let ip = self.artifact(id_name);
            pairs::write_pair_ids(&ds.pairs, &ip)?;
            touched.outputs.push((titled_name.into(), tp));
            touched.outputs.push((id_name.into(), ip));
        }
        let summary = SplitSummary {
            train_pairs_available: train.len(),
            eval_pairs_available: eval.len(),
            cross_pairs_dropped: all.len() - train.len() - eval.len(),
            train_jobs: train_ids,
            eval_jobs: eval_ids,
            train_counts,
            eval_counts,
        };
        let sp = self.artifact(SPLIT);
        write_json(&sp, &summary)?;
        touched.outputs.push((SPLIT.into(), sp));
        self.record("split", seed, touched)
    }

    pub fn kg_build(&self) -> Result<StageRecord> {
        self.prepare()?;
        let (jobs, summaries) = self.load_summaries()?;
        let skills_path = self.source(corpus::SKILLS_FILE)?;
        let hierarchy_path = self.source(corpus::HIERARCHY_FILE)?;
        let skills = corpus::load_skills(&skills_path)?;
        let hierarchy = corpus::load_hierarchy(&hierarchy_path, &skills)?;
        let job_path = self.require(JOB_EMBEDDINGS, "embed")?;
        let skill_path = self.require(SKILL_EMBEDDINGS, "embed")?;
        let job_store = embed::load_store(&job_path)?;
        let skill_store = embed::load_store(&skill_path)?;
        let cfg = self.config.kg;

        let matched: Vec<(String, Vec<SkillMatch>)> = jobs
            .par_iter()
            .map(|j| {
                let v = job_store.require(&j.id)?;
                let m = kg::match_job_skills(v, &skill_store, cfg.max_skills_per_job, cfg.job_skill_threshold)?;
                Ok((j.id.clone(), m))
            })
            .collect::<Result<_>>()?;
        let match_path = self.artifact(MATCHES);
        write_matches(&matched, &match_path)?;
        let matches: BTreeMap<String, Vec<SkillMatch>> = matched.into_iter().collect();

        let full = kg::build_graph(&jobs, &skills, &matches, &hierarchy, cfg.skill_skill_threshold, &skill_store)?;
        let pruned = kg::prune_generic(&full, cfg.job_share_threshold)?;
        let spec = kg::compute_specificity(&pruned)?;
        let full_path = self.artifact(KG_FULL);
        full.save(&full_path)?;
        let kg_path = self.artifact(KG);
        pruned.save(&kg_path)?;
        let spec_path = self.artifact(SPECIFICITY);
        kg::write_specificity(&pruned, &spec, &spec_path)?;
        self.record(
            "kg build",
            0,
            Touched {
                inputs: vec![
                    (SUMMARIES.into(), summaries),
                    (format!("input/{}", corpus::SKILLS_FILE), skills_path),
                    (format!("input/{}", corpus::HIERARCHY_FILE), hierarchy_path),
                    (JOB_EMBEDDINGS.into(), job_path),
                    (SKILL_EMBEDDINGS.into(), skill_path),
                ],
                outputs: vec![
                    (MATCHES.into(), match_path),
                    (KG_FULL.into(), full_path),
                    (KG.into(), kg_path),
                    (SPECIFICITY.into(), spec_path),
                ],
            },
        )
    }

    pub fn kg_embed(&self) -> Result<StageRecord> {
        self.prepare()?;
        let kg_path = self.require(KG, "kg build")?;
        let graph = KnowledgeGraph::load(&kg_path)?;
        let mut cfg = self.config.graph;
        cfg.seed = self.config.stage_seed("kg embed");
        let (model, table, report) = graphembed::train_graph(&graph, &cfg)?;
        log::info!(
            "kg embed: loss {:.4} -> {:.4} over {} epochs",
            report.initial_loss,
            report.final_loss,
            cfg.epochs
        );
        let emb = self.artifact(GRAPH_EMBEDDINGS);
        embed::save_store(&table, &emb)?;
        let mp = self.artifact(GRAPH_MODEL);
        model.save(&mp)?;
        let rp = self.artifact(GRAPH_REPORT);
        write_json(&rp, &report)?;
        self.record(
            "kg embed",
            cfg.seed,
            Touched {
                inputs: vec![(KG.into(), kg_path)],
                outputs: vec![(GRAPH_EMBEDDINGS.into(), emb), (GRAPH_MODEL.into(), mp), (GRAPH_REPORT.into(), rp)],
            },
        )
    }

    /// `(title embedding, graph embedding)` for every training-split job.
    pub fn alignment_pairs(&self) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let titles = embed::load_store(&self.require(TITLE_EMBEDDINGS, "embed")?)?;
        let graph = embed::load_store(&self.require(GRAPH_EMBEDDINGS, "kg embed")?)?;
        let split: SplitSummary = read_json(&self.require(SPLIT, "split")?)?;
        split
            .train_jobs
            .iter()
            .map(|id| Ok((titles.require(id)?.to_vec(), graph.require(&job_node_id(id))?.to_vec())))
            .collect()
    }

    pub fn align_train(&self) -> Result<StageRecord> {
        self.prepare()?;
        let data = self.alignment_pairs()?;
        let mut cfg = self.config.align;
        cfg.seed = self.config.stage_seed("align train");
        let (model, report) = align::train_alignment(&data, &cfg)?;
        log::info!(
            "align train: validation mse {:.6} -> {:.6} (best epoch {})",
            report.initial_validation_mse,
            report.best_validation_mse,
            report.best_epoch
        );
        let mp = self.artifact(ALIGN_MODEL);
        model.save(&mp)?;
        let rp = self.artifact(ALIGN_REPORT);
        write_json(&rp, &report)?;
        self.record(
            "align train",
            cfg.seed,
            Touched {
                inputs: vec![
                    (TITLE_EMBEDDINGS.into(), self.artifact(TITLE_EMBEDDINGS)),
                    (GRAPH_EMBEDDINGS.into(), self.artifact(GRAPH_EMBEDDINGS)),
                    (SPLIT.into(), self.artifact(SPLIT)),
                ],
                outputs: vec![(ALIGN_MODEL.into(), mp), (ALIGN_REPORT.into(), rp)],
            },
        )
    }

    pub fn load_alignment(&self) -> Result<AlignmentModel> {
        AlignmentModel::load(&self.require(ALIGN_MODEL, "align train")?)
    }

    /// Predicted STR for two free-text titles.
    pub fn predict_titles(&self, title_a: &str, title_b: &str) -> Result<f64> {
        let model = self.load_alignment()?;
        align::predict_str(title_a, title_b, &self.embedder(), &model)
    }

    /// Score every evaluation pair with each model.
    pub fn predictions(&self) -> Result<BTreeMap<String, Vec<Prediction>>> {
        let model = self.load_alignment()?;
        let untrained = AlignmentModel::init(model.input_dim(), model.hidden_dim(), model.output_dim(), model.seed);
        let titles = embed::load_store(&self.require(TITLE_EMBEDDINGS, "embed")?)?;
        let eval = pairs::read_pair_ids(&self.require(EVAL_PAIR_IDS, "split")?)?;
        let partition = self.config.pairs.partition;

        let map_all = |m: &AlignmentModel| -> Result<EmbeddingStore> {
            let mut out = EmbeddingStore::new(m.output_dim())?;
            for (id, v) in titles.iter() {
                out.insert(id, align::map_text_to_graph(v, m)?)?;
            }
            Ok(out)
        };
        let mut stores: Vec<(String, EmbeddingStore)> = vec![
            (ALIGNED.into(), map_all(&model)?),
            (UNTRAINED.into(), map_all(&untrained)?),
            (TITLE_COSINE.into(), titles.clone()),
        ];
        for m in &self.config.eval.text_models {
            stores.push((m.name.clone(), embed::load_store(&m.embeddings)?));
        }
        let score = |store: &EmbeddingStore, p: &StrPair| -> Result<Prediction> {
            let s = str_score(store.require(&p.anchor_id)?, store.require(&p.sample_id)?)?;
            Prediction::new(p, s, &partition)
        };
        let mut out = BTreeMap::new();
        for (name, store) in &stores {
            let preds = eval.iter().map(|p| score(store, p)).collect::<Result<Vec<_>>>()?;
            out.insert(name.clone(), preds);
        }
        Ok(out)
    }

    pub fn predict(&self) -> Result<StageRecord> {
        self.prepare()?;
        let preds = self.predictions()?;
        let out = self.artifact(PREDICTIONS);
        write_predictions(&preds, &out)?;
        let mut inputs = vec![
            (ALIGN_MODEL.into(), self.artifact(ALIGN_MODEL)),
            (TITLE_EMBEDDINGS.into(), self.artifact(TITLE_EMBEDDINGS)),
            (EVAL_PAIR_IDS.into(), self.artifact(EVAL_PAIR_IDS)),
        ];
        for m in &self.config.eval.text_models {
            inputs.push((format!("text_model/{}", m.name), m.embeddings.clone()));
        }
        self.record(
            "predict",
            0,
            Touched {
                inputs,
                outputs: vec![(PREDICTIONS.into(), out)],
            },
        )
    }

    pub fn evaluate(&self) -> Result<(EvalSummary, ModelComparison)> {
        let preds = self.predictions()?;
        let partition = self.config.pairs.partition;
        let policy = self.config.eval.ttest;
        let mut models = Vec::new();
        for (name, p) in &preds {
            models.push(evalstats::build_report(name, p, &partition, policy)?);
        }
        let summary = EvalSummary {
            partition,
            policy,
            significance: self.config.eval.significance,
            models,
        };
        let comparison = compare(&preds[ALIGNED], &preds[UNTRAINED], &partition)?;
        Ok((summary, comparison))
    }

    pub fn eval(&self) -> Result<StageRecord> {
        self.prepare()?;
        let (summary, comparison) = self.evaluate()?;
        let mut outputs: Vec<(String, PathBuf)> = evalstats::export_report(&summary, self.out_dir())?
            .into_iter()
            .map(|p| (p.file_name().unwrap_or_default().to_string_lossy().into_owned(), p))
            .collect();
        let cp = self.artifact(COMPARISON);
        write_json(&cp, &comparison)?;
        outputs.push((COMPARISON.into(), cp));
        self.record(
            "eval",
            0,
            Touched {
                inputs: vec![
                    (ALIGN_MODEL.into(), self.artifact(ALIGN_MODEL)),
                    (TITLE_EMBEDDINGS.into(), self.artifact(TITLE_EMBEDDINGS)),
                    (EVAL_PAIR_IDS.into(), self.artifact(EVAL_PAIR_IDS)),
                ],
                outputs,
            },
        )
    }

    pub fn load_graph(&self) -> Result<(KnowledgeGraph, kg::SpecificityTable)> {
        let graph = KnowledgeGraph::load(&self.require(KG, "kg build")?)?;
        let spec = kg::read_specificity(&self.require(SPECIFICITY, "kg build")?)?;
        Ok((graph, spec))
    }

    /// Explanation for two job ids, scored with the trained alignment.
    pub fn explain_jobs(&self, job_a: &str, job_b: &str, hops: Option<usize>) -> Result<Explanation> {
        let (graph, spec) = self.load_graph()?;
        let model = self.load_alignment()?;
        let titles = embed::load_store(&self.require(TITLE_EMBEDDINGS, "embed")?)?;
        let a = align::map_text_to_graph(titles.require(job_a)?, &model)?;
        let b = align::map_text_to_graph(titles.require(job_b)?, &model)?;
        let mut opts = self.config.explain;
        if let Some(h) = hops {
            opts.hops = h;
        }
        explain::explain_match(&graph, &spec, job_a, job_b, str_score(&a, &b)?, &opts)
    }

    /// Job id for a title, matched after whitespace and case normalisation.
    pub fn job_for_title(&self, title: &str) -> Result<String> {
        let (jobs, _) = self.load_summaries()?;
        let want = embed::normalize_text(title);
        jobs.iter()
            .find(|j| embed::normalize_text(&j.title) == want)
            .map(|j| j.id.clone())
            .ok_or_else(|| Error::UnknownId(format!("no job titled `{title}`")))
    }

    /// Write JSON and DOT explanations of the best- and worst-predicted
    /// evaluation pairs under the trained alignment.
    pub fn explain(&self) -> Result<StageRecord> {
        self.prepare()?;
        let preds = self.predictions()?;
        let aligned = &preds[ALIGNED];
        let by_error = |worst: bool| {
            aligned
                .iter()
                .min_by(|x, y| {
                    let (ex, ey) = if worst {
                        (y.abs_error(), x.abs_error())
                    } else {
                        (x.abs_error(), y.abs_error())
                    };
                    ex.total_cmp(&ey)
                        .then_with(|| (&x.anchor_id, &x.sample_id).cmp(&(&y.anchor_id, &y.sample_id)))
                })
                .ok_or_else(|| Error::Empty("evaluation pairs".into()))
        };
        let dir = self.artifact(EXPLANATIONS);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let (_, spec) = self.load_graph()?;
        for (name, p) in [("best", by_error(false)?), ("worst", by_error(true)?)] {
            let e = self.explain_jobs(&p.anchor_id, &p.sample_id, None)?;
            write_text(&dir.join(format!("{name}.json")), &explain::render_json(&e)?)?;
            write_text(&dir.join(format!("{name}.dot")), &explain::render_dot(&e, &spec))?;
        }
        self.record(
            "explain",
            0,
            Touched {
                inputs: vec![
                    (KG.into(), self.artifact(KG)),
                    (SPECIFICITY.into(), self.artifact(SPECIFICITY)),
                    (ALIGN_MODEL.into(), self.artifact(ALIGN_MODEL)),
                    (EVAL_PAIR_IDS.into(), self.artifact(EVAL_PAIR_IDS)),
                ],
                outputs: vec![(EXPLANATIONS.into(), dir)],
            },
        )
    }

    pub fn run_stage(&self, stage: &str) -> Result<StageRecord> {
        match stage {
            "summarize" => self.summarize(),
            "embed" => self.embed(),
            "pairs" => self.pairs(),
            "split" => self.split(),
            "kg build" => self.kg_build(),
            "kg embed" => self.kg_embed(),
            "align train" => self.align_train(),
            "predict" => self.predict(),
            "eval" => self.eval(),
            "explain" => self.explain(),
            other => Err(Error::UnknownId(format!("stage `{other}`"))),
        }
    }

    pub fn run_all(&self) -> Result<Vec<(String, StageRecord)>> {
        STAGES
            .iter()
            .map(|s| Ok((s.to_string(), self.run_stage(s)?)))
            .collect()
    }

    pub fn load_graph_model(&self) -> Result<RelGraphModel> {
        RelGraphModel::load(&self.require(GRAPH_MODEL, "kg embed")?)
    }

    pub fn load_align_report(&self) -> Result<AlignTrainReport> {
        read_json(&self.require(ALIGN_REPORT, "align train")?)
    }

    pub fn load_split(&self) -> Result<SplitSummary> {
        read_json(&self.require(SPLIT, "split")?)
    }
}

fn gain(region: &str, a: &[&Prediction], u: &[&Prediction]) -> RegionGain {
    let rmse = |ps: &[&Prediction]| {
        (!ps.is_empty()).then(|| (ps.iter().map(|p| p.error() * p.error()).sum::<f64>() / ps.len() as f64).sqrt())
    };
    let (ra, ru) = (rmse(a), rmse(u));
    let abs = |ps: &[&Prediction]| ps.iter().map(|p| p.abs_error()).collect::<Vec<_>>();
    let test = evalstats::welch_t(&abs(a), &abs(u)).ok();
    RegionGain {
        region: region.to_string(),
        count: a.len(),
        aligned_rmse: ra,
        untrained_rmse: ru,
        relative_reduction: match (ra, ru) {
            (Some(x), Some(y)) if y > 0.0 => Some(1.0 - x / y),
            _ => None,
        },
        welch_t: test.as_ref().map(|t| t.t_value),
        welch_p: test.as_ref().map(|t| t.p_value),
    }
}

/// Compare the trained alignment with its initialisation, overall and per
/// region of the actual score.
pub fn compare(
    aligned: &[Prediction],
    untrained: &[Prediction],
    partition: &pairs::RegionPartition,
) -> Result<ModelComparison> {
    let all_a: Vec<&Prediction> = aligned.iter().collect();
    let all_u: Vec<&Prediction> = untrained.iter().collect();
    let mut regions = Vec::new();
    for region in pairs::Region::ALL {
        let mut a = Vec::new();
        let mut u = Vec::new();
        for (x, y) in aligned.iter().zip(untrained) {
            if pairs::assign_region(x.actual, partition)? == region {
                a.push(x);
                u.push(y);
            }
        }
        regions.push(gain(region.as_str(), &a, &u));
    }
    Ok(ModelComparison {
        global: gain("global", &all_a, &all_u),
        regions,
    })
}

fn write_matches(matches: &[(String, Vec<SkillMatch>)], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    let err = |e: csv::Error| Error::csv(path, e);
    w.write_record(["job_id", "skill_id", "rank", "score"]).map_err(err)?;
    for (job, ms) in matches {
        for (rank, m) in ms.iter().enumerate() {
            w.write_record([job.as_str(), &m.skill_id, &(rank + 1).to_string(), &format!("{:.9}", m.score)])
                .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_predictions(preds: &BTreeMap<String, Vec<Prediction>>, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    let err = |e: csv::Error| Error::csv(path, e);
    w.write_record(["model", "anchor_id", "sample_id", "region", "actual", "predicted"])
        .map_err(err)?;
    for (model, ps) in preds {
        for p in ps {
            w.write_record([
                model.as_str(),
                &p.anchor_id,
                &p.sample_id,
                p.region.as_str(),
                &format!("{:.9}", p.actual),
                &format!("{:.9}", p.predicted),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(dir: &Path) -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.input_dir = dir.join("data");
        cfg.out_dir = dir.join("out");
        cfg.pairs.per_anchor_cap = 12;
        cfg.graph.epochs = 3;
        cfg.graph.hidden_dim = 16;
        cfg.graph.output_dim = 12;
        cfg.graph.base_dim = 8;
        cfg.align.epochs = 3;
        cfg.align.hidden_dim = 16;
        cfg
    }

    #[test]
    fn missing_inputs_name_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let p = Pipeline::new(small_config(dir.path())).unwrap();
        let err = p.summarize().unwrap_err();
        assert!(err.to_string().contains("gen-corpus"), "{err}");
        gen_corpus(&p.config.input_dir, 40, 60, 1).unwrap();
        assert!(p.embed().unwrap_err().to_string().contains("`summarize`"));
        p.summarize().unwrap();
        p.embed().unwrap();
        assert!(p.split().unwrap_err().to_string().contains("`pairs`"));
        assert!(p.kg_embed().unwrap_err().to_string().contains("`kg build`"));
        assert!(p.eval().unwrap_err().to_string().contains("`align train`"));
    }

    #[test]
    fn stages_chain_and_manifest_covers_them() {
        let dir = tempfile::tempdir().unwrap();
        let p = Pipeline::new(small_config(dir.path())).unwrap();
        gen_corpus(&p.config.input_dir, 40, 60, 1).unwrap();
        let recs = p.run_all().unwrap();
        assert_eq!(recs.len(), STAGES.len());
        let manifest = Manifest::load(&p.artifact(MANIFEST)).unwrap();
        assert_eq!(manifest.stages.len(), STAGES.len());
        for (stage, rec) in &recs {
            assert_eq!(&manifest.stages[stage], rec);
            for (name, hash) in &rec.outputs {
                assert_eq!(&sha256_file(&p.artifact(name)).unwrap(), hash, "{name}");
            }
        }
        assert!(p.artifact("explanations/best.dot").exists());
        let preds = p.predictions().unwrap();
        assert_eq!(preds.keys().collect::<Vec<_>>(), vec![ALIGNED, TITLE_COSINE, UNTRAINED]);
        let s = p.predict_titles("Registered Nurse", "registered  nurse").unwrap();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rerunning_a_stage_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let p = Pipeline::new(small_config(dir.path())).unwrap();
        gen_corpus(&p.config.input_dir, 30, 40, 2).unwrap();
        p.summarize().unwrap();
        p.embed().unwrap();
        let first = p.pairs().unwrap();
        let second = p.pairs().unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = PipelineConfig::default();
        cfg.graph.epochs = 0;
        assert!(matches!(Pipeline::new(cfg), Err(Error::InvalidConfig(_))));
    }
}
