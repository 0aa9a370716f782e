//! Job–skill knowledge graph: skill matching, construction, generic-skill
//! pruning and specificity.
//!
//! Node ids are namespaced (`job:<id>`, `skill:<id>`) so job and skill ids
//! may collide in the source files. Nodes and edges are kept sorted, which
//! makes the JSON export byte-reproducible.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{HierarchyEdge, JobRecord, SkillRecord};
use crate::embed::{str_score, EmbeddingStore};
use crate::error::{Error, Result};

pub const MAX_SKILLS_PER_JOB: usize = 10;
pub const JOB_SKILL_THRESHOLD: f64 = 0.5;
pub const SKILL_SKILL_THRESHOLD: f64 = 0.25;
pub const JOB_SHARE_THRESHOLD: f64 = 0.20;

pub fn job_node_id(job_id: &str) -> String {
    format!("job:{job_id}")
}

pub fn skill_node_id(skill_id: &str) -> String {
    format!("skill:{skill_id}")
}

/// Strip the `job:`/`skill:` namespace.
pub fn raw_id(node_id: &str) -> &str {
    node_id
        .split_once(':')
        .map(|(_, rest)| rest)
        .unwrap_or(node_id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Job,
    Skill,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "HAS_SKILL")]
    HasSkill,
    #[serde(rename = "SUBSKILL_OF")]
    SubskillOf,
}

impl Relation {
    pub const ALL: [Relation; 2] = [Relation::HasSkill, Relation::SubskillOf];

    pub fn index(self) -> usize {
        match self {
            Relation::HasSkill => 0,
            Relation::SubskillOf => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::HasSkill => "HAS_SKILL",
            Relation::SubskillOf => "SUBSKILL_OF",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgNode {
    pub id: String,
    pub kind: NodeKind,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgEdge {
    pub source: String,
    pub target: String,
    pub relation: Relation,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GraphFile {
    nodes: Vec<KgNode>,
    edges: Vec<KgEdge>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    nodes: Vec<KgNode>,
    edges: Vec<KgEdge>,
    index: HashMap<String, usize>,
}

impl KnowledgeGraph {
    /// Validate and assemble a graph. Nodes and edges are sorted by id and
    /// by `(source, target, relation)`.
    pub fn from_parts(mut nodes: Vec<KgNode>, mut edges: Vec<KgEdge>) -> Result<Self> {
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(Error::OutOfRange(format!("duplicate node `{}`", n.id)));
            }
        }
        edges.sort_by(|a, b| {
            (&a.source, &a.target, a.relation).cmp(&(&b.source, &b.target, b.relation))
        });
        for w in edges.windows(2) {
            if (&w[0].source, &w[0].target, w[0].relation)
                == (&w[1].source, &w[1].target, w[1].relation)
            {
                return Err(Error::OutOfRange(format!(
                    "duplicate edge {} -{}-> {}",
                    w[0].source,
                    w[0].relation.as_str(),
                    w[0].target
                )));
            }
        }
        for e in &edges {
            let kind = |id: &str| {
                index
                    .get(id)
                    .map(|&i| nodes[i].kind)
                    .ok_or_else(|| Error::DanglingReference {
                        id: id.to_string(),
                        context: format!("{} edge", e.relation.as_str()),
                    })
            };
            let (s, t) = (kind(&e.source)?, kind(&e.target)?);
            let ok = match e.relation {
                Relation::HasSkill => s == NodeKind::Job && t == NodeKind::Skill,
                Relation::SubskillOf => s == NodeKind::Skill && t == NodeKind::Skill,
            };
            if !ok {
                return Err(Error::OutOfRange(format!(
                    "{} edge {} -> {} connects {:?} to {:?}",
                    e.relation.as_str(),
                    e.source,
                    e.target,
                    s,
                    t
                )));
            }
            if e.source == e.target {
                return Err(Error::SelfLoop {
                    id: e.source.clone(),
                });
            }
            if !(0.0..=1.0).contains(&e.weight) {
                return Err(Error::OutOfRange(format!("edge weight {}", e.weight)));
            }
        }
        Ok(KnowledgeGraph {
            nodes,
            edges,
            index,
        })
    }

    pub fn nodes(&self) -> &[KgNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[KgEdge] {
        &self.edges
    }

    pub fn node(&self, id: &str) -> Option<&KgNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn jobs(&self) -> impl Iterator<Item = &KgNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Job)
    }

    pub fn skills(&self) -> impl Iterator<Item = &KgNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Skill)
    }

    pub fn job_count(&self) -> usize {
        self.jobs().count()
    }

    /// HAS_SKILL targets of `job`, with weights, sorted by skill id.
    pub fn skills_of(&self, job: &str) -> BTreeMap<&str, f64> {
        self.edges
            .iter()
            .filter(|e| e.relation == Relation::HasSkill && e.source == job)
            .map(|e| (e.target.as_str(), e.weight))
            .collect()
    }

    /// Number of HAS_SKILL edges per skill node (zero entries included).
    pub fn skill_degrees(&self) -> BTreeMap<&str, usize> {
        let mut deg: BTreeMap<&str, usize> = self.skills().map(|n| (n.id.as_str(), 0)).collect();
        for e in &self.edges {
            if e.relation == Relation::HasSkill {
                *deg.entry(e.target.as_str()).or_default() += 1;
            }
        }
        deg
    }

    /// Fraction of graph jobs linked to `skill` by HAS_SKILL.
    pub fn job_share(&self, skill: &str) -> Result<f64> {
        match self.node(skill) {
            Some(n) if n.kind == NodeKind::Skill => {}
            _ => return Err(Error::UnknownId(skill.to_string())),
        }
        let jobs = self.job_count();
        if jobs == 0 {
            return Ok(0.0);
        }
        let linked: BTreeSet<&str> = self
            .edges
            .iter()
            .filter(|e| e.relation == Relation::HasSkill && e.target == skill)
            .map(|e| e.source.as_str())
            .collect();
        Ok(linked.len() as f64 / jobs as f64)
    }

    /// Remove the given skill nodes with their edges, then any skill left
    /// without an incident edge. Jobs are never removed.
    fn without_skills(&self, removed: &BTreeSet<String>) -> KnowledgeGraph {
        let edges: Vec<KgEdge> = self
            .edges
            .iter()
            .filter(|e| !removed.contains(&e.source) && !removed.contains(&e.target))
            .cloned()
            .collect();
        let touched: BTreeSet<&str> = edges
            .iter()
            .flat_map(|e| [e.source.as_str(), e.target.as_str()])
            .collect();
        let nodes = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Job || touched.contains(n.id.as_str()))
            .cloned()
            .collect();
        KnowledgeGraph::from_parts(nodes, edges).expect("subgraph of a valid graph is valid")
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GraphFile {
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        KnowledgeGraph::from_parts(file.nodes, file.edges)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        KnowledgeGraph::from_json(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillMatch {
    pub skill_id: String,
    pub score: f64,
}

/// Skills scoring at least `threshold` against `job_emb`, best first (ties
/// by skill id), at most `k`.
pub fn match_job_skills(
    job_emb: &[f64],
    skill_store: &EmbeddingStore,
    k: usize,
    threshold: f64,
) -> Result<Vec<SkillMatch>> {
    if k == 0 {
        return Err(Error::OutOfRange("k must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::OutOfRange(format!("threshold {threshold} outside [0, 1]")));
    }
    if job_emb.len() != skill_store.dimension() {
        return Err(Error::DimensionMismatch {
            expected: skill_store.dimension(),
            found: job_emb.len(),
        });
    }
    let mut out = Vec::new();
    for (id, v) in skill_store.iter() {
        let score = str_score(job_emb, v)?;
        if score >= threshold {
            out.push(SkillMatch {
                skill_id: id.to_string(),
                score,
            });
        }
    }
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.skill_id.cmp(&b.skill_id))
    });
    out.truncate(k);
    Ok(out)
}

/// Assemble the graph: a node per job, a HAS_SKILL edge per match, and a
/// SUBSKILL_OF edge per hierarchy row whose endpoints' embeddings score at
/// least `skill_skill_threshold`. Skills left without edges are dropped.
pub fn build_graph(
    jobs: &[JobRecord],
    skills: &[SkillRecord],
    matches: &BTreeMap<String, Vec<SkillMatch>>,
    hierarchy: &[HierarchyEdge],
    skill_skill_threshold: f64,
    skill_store: &EmbeddingStore,
) -> Result<KnowledgeGraph> {
    let skill_by_id: HashMap<&str, &SkillRecord> =
        skills.iter().map(|s| (s.id.as_str(), s)).collect();
    let known_jobs: BTreeSet<&str> = jobs.iter().map(|j| j.id.as_str()).collect();
    let mut edges = Vec::new();
    for (job, ms) in matches {
        if !known_jobs.contains(job.as_str()) {
            return Err(Error::DanglingReference {
                id: job.clone(),
                context: "skill match job".into(),
            });
        }
        for m in ms {
            if !skill_by_id.contains_key(m.skill_id.as_str()) {
                return Err(Error::DanglingReference {
                    id: m.skill_id.clone(),
                    context: "skill match skill".into(),
                });
            }
            edges.push(KgEdge {
                source: job_node_id(job),
                target: skill_node_id(&m.skill_id),
                relation: Relation::HasSkill,
                weight: m.score,
            });
        }
    }
    for h in hierarchy {
        for id in [&h.child_skill_id, &h.parent_skill_id] {
            if !skill_by_id.contains_key(id.as_str()) {
                return Err(Error::DanglingReference {
                    id: id.clone(),
                    context: "hierarchy".into(),
                });
            }
        }
        let score = str_score(
            skill_store.require(&h.child_skill_id)?,
            skill_store.require(&h.parent_skill_id)?,
        )?;
        if score >= skill_skill_threshold {
            edges.push(KgEdge {
                source: skill_node_id(&h.child_skill_id),
                target: skill_node_id(&h.parent_skill_id),
                relation: Relation::SubskillOf,
                weight: 1.0,
            });
        }
    }
    let touched: BTreeSet<String> = edges
        .iter()
        .flat_map(|e| [e.source.clone(), e.target.clone()])
        .collect();
    let mut nodes: Vec<KgNode> = jobs
        .iter()
        .map(|j| KgNode {
            id: job_node_id(&j.id),
            kind: NodeKind::Job,
            label: j.title.clone(),
        })
        .collect();
    nodes.extend(
        skills
            .iter()
            .filter(|s| touched.contains(&skill_node_id(&s.id)))
            .map(|s| KgNode {
                id: skill_node_id(&s.id),
                kind: NodeKind::Skill,
                label: s.name.clone(),
            }),
    );
    KnowledgeGraph::from_parts(nodes, edges)
}

/// Remove every skill whose job share exceeds `share_threshold` (strictly),
/// with its edges.
pub fn prune_generic(kg: &KnowledgeGraph, share_threshold: f64) -> Result<KnowledgeGraph> {
    if !(share_threshold > 0.0 && share_threshold <= 1.0) {
        return Err(Error::OutOfRange(format!(
            "share threshold {share_threshold} outside (0, 1]"
        )));
    }
    let mut removed = BTreeSet::new();
    for s in kg.skills() {
        if kg.job_share(&s.id)? > share_threshold {
            removed.insert(s.id.clone());
        }
    }
    Ok(kg.without_skills(&removed))
}

/// Skill node id → specificity in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpecificityTable(pub BTreeMap<String, f64>);

impl SpecificityTable {
    pub fn get(&self, skill: &str) -> Option<f64> {
        self.0.get(skill).copied()
    }
}

/// Complement of the min–max normalized HAS_SKILL degree: the most
/// connected skill scores 0, the least connected 1. When every degree is
/// equal all skills score 1.
pub fn compute_specificity(kg: &KnowledgeGraph) -> Result<SpecificityTable> {
    let degrees = kg.skill_degrees();
    if degrees.is_empty() {
        return Err(Error::Empty("graph has no skills".into()));
    }
    let min = *degrees.values().min().unwrap();
    let max = *degrees.values().max().unwrap();
    let table = degrees
        .into_iter()
        .map(|(id, d)| {
            let s = if max == min {
                1.0
            } else {
                1.0 - (d - min) as f64 / (max - min) as f64
            };
            (id.to_string(), s)
        })
        .collect();
    Ok(SpecificityTable(table))
}

pub fn write_specificity(kg: &KnowledgeGraph, table: &SpecificityTable, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    w.write_record(["skill_id", "label", "degree", "job_share", "specificity"])
        .map_err(|e| Error::csv(path, e))?;
    let degrees = kg.skill_degrees();
    for (id, spec) in &table.0 {
        let label = kg.node(id).map(|n| n.label.as_str()).unwrap_or_default();
        w.write_record([
            id.as_str(),
            label,
            &degrees.get(id.as_str()).copied().unwrap_or(0).to_string(),
            &kg.job_share(id)?.to_string(),
            &spec.to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_specificity(path: &Path) -> Result<SpecificityTable> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut table = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let spec: f64 = rec
            .get(4)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::row(path, i + 1, "malformed specificity"))?;
        table.insert(rec[0].to_string(), spec);
    }
    Ok(SpecificityTable(table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn job(id: &str) -> JobRecord {
        JobRecord {
            id: id.into(),
            title: format!("Title {id}"),
            description: String::new(),
            summary: None,
        }
    }

    fn skill(id: &str) -> SkillRecord {
        SkillRecord {
            id: id.into(),
            name: format!("Skill {id}"),
            description: String::new(),
            is_category: false,
        }
    }

    /// Graph with `n_jobs` jobs and the given (job index, skill index) links.
    fn graph(n_jobs: usize, n_skills: usize, links: &[(usize, usize)]) -> KnowledgeGraph {
        let jobs: Vec<JobRecord> = (0..n_jobs).map(|i| job(&format!("j{i}"))).collect();
        let skills: Vec<SkillRecord> = (0..n_skills).map(|i| skill(&format!("s{i}"))).collect();
        let mut matches: BTreeMap<String, Vec<SkillMatch>> = BTreeMap::new();
        for &(j, s) in links {
            let entry = matches.entry(format!("j{j}")).or_default();
            if !entry.iter().any(|m| m.skill_id == format!("s{s}")) {
                entry.push(SkillMatch {
                    skill_id: format!("s{s}"),
                    score: 0.8,
                });
            }
        }
        let store = EmbeddingStore::new(2).unwrap();
        build_graph(&jobs, &skills, &matches, &[], 0.25, &store).unwrap()
    }

    fn unit_store(rows: &[(&str, [f64; 2])]) -> EmbeddingStore {
        let mut s = EmbeddingStore::new(2).unwrap();
        for (id, v) in rows {
            s.insert(*id, v.to_vec()).unwrap();
        }
        s
    }

    #[test]
    fn match_respects_cap_threshold_and_ties() {
        let mut store = EmbeddingStore::new(2).unwrap();
        for i in 0..12 {
            let a = 0.01 * i as f64;
            store.insert(format!("s{i:02}"), vec![a.cos(), a.sin()]).unwrap();
        }
        store.insert("far", vec![0.0, -1.0]).unwrap();
        let m = match_job_skills(&[1.0, 0.0], &store, MAX_SKILLS_PER_JOB, JOB_SKILL_THRESHOLD).unwrap();
        assert_eq!(m.len(), 10);
        assert!(m.windows(2).all(|w| w[0].score >= w[1].score));

        let m = match_job_skills(&[-1.0, 0.0], &store, 10, 0.5).unwrap();
        assert!(m.is_empty());

        let tied = unit_store(&[("b", [1.0, 0.0]), ("a", [1.0, 0.0])]);
        let m = match_job_skills(&[1.0, 0.0], &tied, 10, 0.5).unwrap();
        assert_eq!(m[0].skill_id, "a");
        assert_eq!(m[1].skill_id, "b");

        assert!(matches!(
            match_job_skills(&[1.0, 0.0, 0.0], &tied, 10, 0.5),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn build_graph_edges_and_isolates() {
        let g = graph(2, 7, &[(0, 0), (0, 1), (0, 2), (1, 2), (1, 3), (1, 4)]);
        let has: Vec<&KgEdge> = g.edges().iter().filter(|e| e.relation == Relation::HasSkill).collect();
        assert_eq!(has.len(), 6);
        for e in has {
            assert_eq!(g.node(&e.source).unwrap().kind, NodeKind::Job);
            assert_eq!(g.node(&e.target).unwrap().kind, NodeKind::Skill);
        }
        assert!(g.node("skill:s5").is_none());
        assert!(g.node("skill:s6").is_none());
        assert_eq!(g.job_count(), 2);
    }

    #[test]
    fn hierarchy_edges_follow_skill_threshold() {
        let jobs = vec![job("j0")];
        let skills = vec![skill("a"), skill("b"), skill("c")];
        // cos(a, b) = 0.1, cos(a, c) = 0.3
        let store = unit_store(&[
            ("a", [1.0, 0.0]),
            ("b", [0.1, (1.0f64 - 0.01).sqrt()]),
            ("c", [0.3, (1.0f64 - 0.09).sqrt()]),
        ]);
        let hier = vec![
            HierarchyEdge { child_skill_id: "a".into(), parent_skill_id: "b".into() },
            HierarchyEdge { child_skill_id: "a".into(), parent_skill_id: "c".into() },
        ];
        let g = build_graph(&jobs, &skills, &BTreeMap::new(), &hier, SKILL_SKILL_THRESHOLD, &store).unwrap();
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.edges()[0].target, "skill:c");
        assert!(g.node("skill:b").is_none());

        let bad = vec![HierarchyEdge { child_skill_id: "a".into(), parent_skill_id: "zz".into() }];
        assert!(build_graph(&jobs, &skills, &BTreeMap::new(), &bad, 0.25, &store).is_err());
    }

    #[test]
    fn job_share_arithmetic() {
        let g = graph(10, 2, &[(0, 0), (1, 0), (2, 0), (0, 1)]);
        assert!((g.job_share("skill:s0").unwrap() - 0.3).abs() < 1e-15);
        let all: Vec<(usize, usize)> = (0..10).map(|j| (j, 0)).collect();
        assert_eq!(graph(10, 1, &all).job_share("skill:s0").unwrap(), 1.0);
        let g = graph(200, 1, &[(5, 0)]);
        assert!((g.job_share("skill:s0").unwrap() - 0.005).abs() < 1e-15);
        assert!(g.job_share("skill:nope").is_err());
        assert!(g.job_share("job:j0").is_err());
    }

    #[test]
    fn prune_boundary_and_idempotence() {
        // s0 in 5/20 jobs (0.25), s1 in 4/20 jobs (0.20)
        let mut links: Vec<(usize, usize)> = (0..5).map(|j| (j, 0)).collect();
        links.extend((5..9).map(|j| (j, 1)));
        let g = graph(20, 2, &links);
        let p = prune_generic(&g, JOB_SHARE_THRESHOLD).unwrap();
        assert!(p.node("skill:s0").is_none());
        assert!(p.node("skill:s1").is_some());
        assert_eq!(p.job_count(), 20);
        assert_eq!(prune_generic(&p, JOB_SHARE_THRESHOLD).unwrap(), p);
        assert!(prune_generic(&g, 0.0).is_err());
    }

    #[test]
    fn specificity_min_max() {
        // degrees 1, 2, 4
        let g = graph(4, 3, &[(0, 0), (0, 1), (1, 1), (0, 2), (1, 2), (2, 2), (3, 2)]);
        let t = compute_specificity(&g).unwrap();
        assert!((t.get("skill:s0").unwrap() - 1.0).abs() < 1e-9);
        assert!((t.get("skill:s1").unwrap() - 2.0 / 3.0).abs() < 1e-9);
        assert!(t.get("skill:s2").unwrap().abs() < 1e-9);

        let g = graph(2, 2, &[(0, 0), (1, 1)]);
        let t = compute_specificity(&g).unwrap();
        assert!(t.0.values().all(|&v| v == 1.0));

        assert!(compute_specificity(&graph(2, 0, &[])).is_err());
    }

    #[test]
    fn json_round_trip_is_stable() {
        let g = graph(3, 3, &[(0, 0), (1, 1), (2, 2), (0, 2)]);
        let text = g.to_json().unwrap();
        let back = KnowledgeGraph::from_json(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json().unwrap(), text);
        assert!(text.find("\"nodes\"").unwrap() < text.find("\"edges\"").unwrap());
    }

    #[test]
    fn from_parts_rejects_non_bipartite_edges() {
        let nodes = vec![
            KgNode { id: "job:a".into(), kind: NodeKind::Job, label: "A".into() },
            KgNode { id: "job:b".into(), kind: NodeKind::Job, label: "B".into() },
        ];
        let edges = vec![KgEdge {
            source: "job:a".into(),
            target: "job:b".into(),
            relation: Relation::HasSkill,
            weight: 0.5,
        }];
        assert!(KnowledgeGraph::from_parts(nodes, edges).is_err());
    }

    proptest! {
        #[test]
        fn random_graph_properties(
            n_jobs in 1usize..25,
            n_skills in 1usize..15,
            raw_links in proptest::collection::vec((0usize..25, 0usize..15), 0..80),
            threshold in 0.05f64..1.0,
        ) {
            let links: Vec<(usize, usize)> = raw_links
                .into_iter()
                .map(|(j, s)| (j % n_jobs, s % n_skills))
                .collect();
            let g = graph(n_jobs, n_skills, &links);
            for e in g.edges() {
                if e.relation == Relation::HasSkill {
                    prop_assert_eq!(g.node(&e.source).unwrap().kind, NodeKind::Job);
                    prop_assert_eq!(g.node(&e.target).unwrap().kind, NodeKind::Skill);
                }
            }
            let p = prune_generic(&g, threshold).unwrap();
            let before: BTreeSet<&str> = g.skills().map(|n| n.id.as_str()).collect();
            for s in p.skills() {
                prop_assert!(before.contains(s.id.as_str()));
                prop_assert!(p.job_share(&s.id).unwrap() <= threshold);
            }
            prop_assert_eq!(&prune_generic(&p, threshold).unwrap(), &p);
            if let Ok(spec) = compute_specificity(&p) {
                let deg = p.skill_degrees();
                for (a, da) in &deg {
                    let sa = spec.get(a).unwrap();
                    prop_assert!((0.0..=1.0).contains(&sa));
                    for (b, db) in &deg {
                        if da < db {
                            prop_assert!(sa >= spec.get(b).unwrap());
                        }
                    }
                }
            }
        }
    }
}
