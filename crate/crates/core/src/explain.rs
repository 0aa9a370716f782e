//! Explanation subgraphs for a job pair: the skills both jobs link to,
//! annotated with specificity and edge weights, and a verdict on whether the
//! overlap is specific or generic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::ExplainConfig;
use crate::error::{Error, Result};
use crate::kg::{job_node_id, raw_id, KnowledgeGraph, NodeKind, Relation, SpecificityTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Specific,
    Generic,
    NoOverlap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRef {
    pub id: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedSkill {
    pub skill_id: String,
    pub label: String,
    pub specificity: f64,
    pub weight_a: f64,
    pub weight_b: f64,
}

/// A skill category reached from both jobs in two hops: each side holds the
/// category itself or one of its sub-skills.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryLink {
    pub category_id: String,
    pub label: String,
    pub via_a: Vec<String>,
    pub via_b: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub job_a: JobRef,
    pub job_b: JobRef,
    pub shared_skills: Vec<SharedSkill>,
    pub verdict: Verdict,
    /// Rounded to 6 decimals.
    pub predicted_str: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub category_links: Vec<CategoryLink>,
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn job_ref(kg: &KnowledgeGraph, job: &str) -> Result<JobRef> {
    match kg.node(&job_node_id(job)) {
        Some(n) if n.kind == NodeKind::Job => Ok(JobRef {
            id: job.to_string(),
            title: n.label.clone(),
        }),
        _ => Err(Error::UnknownId(job.to_string())),
    }
}

fn label(kg: &KnowledgeGraph, node: &str) -> String {
    kg.node(node).map(|n| n.label.clone()).unwrap_or_default()
}

/// Categories reachable from a job's skills by one SUBSKILL_OF edge, each
/// with the job's skills that lead there (including the category itself
/// when the job links to it directly).
fn categories_of<'a>(
    kg: &'a KnowledgeGraph,
    skills: &BTreeMap<&'a str, f64>,
) -> BTreeMap<&'a str, BTreeSet<&'a str>> {
    let mut out: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in kg.edges().iter().filter(|e| e.relation == Relation::SubskillOf) {
        let (child, parent) = (e.source.as_str(), e.target.as_str());
        if skills.contains_key(child) {
            out.entry(parent).or_default().insert(child);
        }
        if skills.contains_key(parent) {
            out.entry(parent).or_default().insert(parent);
        }
    }
    out
}

/// Specific when the most specific shared skill reaches `threshold`.
pub fn verdict(shared: &[SharedSkill], threshold: f64) -> Verdict {
    let max = shared.iter().map(|s| s.specificity).fold(None, |m: Option<f64>, x| {
        Some(m.map_or(x, |m| m.max(x)))
    });
    match max {
        None => Verdict::NoOverlap,
        Some(m) if m >= threshold => Verdict::Specific,
        Some(_) => Verdict::Generic,
    }
}

/// Build the explanation for jobs `job_a` and `job_b` (raw job ids).
pub fn explain_match(
    kg: &KnowledgeGraph,
    specificity: &SpecificityTable,
    job_a: &str,
    job_b: &str,
    predicted_str: f64,
    options: &ExplainConfig,
) -> Result<Explanation> {
    let (ref_a, ref_b) = (job_ref(kg, job_a)?, job_ref(kg, job_b)?);
    let skills_a = kg.skills_of(&job_node_id(job_a));
    let skills_b = kg.skills_of(&job_node_id(job_b));
    let mut shared = Vec::new();
    for (&skill, &wa) in &skills_a {
        if let Some(&wb) = skills_b.get(skill) {
            let spec = specificity.get(skill).ok_or_else(|| Error::UnknownId(skill.to_string()))?;
            shared.push(SharedSkill {
                skill_id: raw_id(skill).to_string(),
                label: label(kg, skill),
                specificity: spec,
                weight_a: wa,
                weight_b: wb,
            });
        }
    }
    shared.sort_by(|x, y| {
        y.specificity
            .total_cmp(&x.specificity)
            .then_with(|| x.skill_id.cmp(&y.skill_id))
    });
    let verdict = verdict(&shared, options.verdict_threshold);

    let mut category_links = Vec::new();
    if options.hops >= 2 {
        let (ca, cb) = (categories_of(kg, &skills_a), categories_of(kg, &skills_b));
        for (cat, via_a) in &ca {
            if skills_a.contains_key(cat) && skills_b.contains_key(cat) {
                continue;
            }
            if let Some(via_b) = cb.get(cat) {
                category_links.push(CategoryLink {
                    category_id: raw_id(cat).to_string(),
                    label: label(kg, cat),
                    via_a: via_a.iter().map(|s| raw_id(s).to_string()).collect(),
                    via_b: via_b.iter().map(|s| raw_id(s).to_string()).collect(),
                });
            }
        }
    }

    Ok(Explanation {
        job_a: ref_a,
        job_b: ref_b,
        shared_skills: shared,
        verdict,
        predicted_str: round6(predicted_str),
        category_links,
    })
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => {}
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Undirected DOT graph: both jobs as boxes, shared skills labelled
/// `name (specificity)`, edges labelled with their STR weights.
/// Two-hop category links, when present, appear as dashed paths.
pub fn render_dot(expl: &Explanation, specificity: &SpecificityTable) -> String {
    let ja = format!("job:{}", expl.job_a.id);
    let jb = format!("job:{}", expl.job_b.id);
    let mut out = String::from("graph explanation {\n");
    let _ = writeln!(
        out,
        "  label={};",
        quote(&format!("predicted STR {:.2} ({:?})", expl.predicted_str, expl.verdict))
    );
    out.push_str("  node [fontname=\"Helvetica\"];\n");

    let mut jobs = BTreeMap::new();
    jobs.insert(ja.clone(), &expl.job_a.title);
    jobs.insert(jb.clone(), &expl.job_b.title);
    for (id, title) in &jobs {
        let _ = writeln!(out, "  {} [shape=box, label={}];", quote(id), quote(title));
    }

    let mut skills: BTreeMap<String, String> = BTreeMap::new();
    for s in &expl.shared_skills {
        skills.insert(
            format!("skill:{}", s.skill_id),
            format!("{} ({:.2})", s.label, s.specificity),
        );
    }
    let mut categories: BTreeMap<String, String> = BTreeMap::new();
    for link in &expl.category_links {
        let cat = format!("skill:{}", link.category_id);
        let spec = specificity.get(&cat).unwrap_or(0.0);
        categories.insert(cat, format!("{} ({spec:.2})", link.label));
        for via in link.via_a.iter().chain(&link.via_b) {
            let node = format!("skill:{via}");
            if !skills.contains_key(&node) && via != &link.category_id {
                let spec = specificity.get(&node).unwrap_or(0.0);
                skills.insert(node, format!("{via} ({spec:.2})"));
            }
        }
    }
    for (id, text) in &skills {
        if !categories.contains_key(id) {
            let _ = writeln!(out, "  {} [shape=ellipse, label={}];", quote(id), quote(text));
        }
    }
    for (id, text) in &categories {
        let _ = writeln!(out, "  {} [shape=diamond, label={}];", quote(id), quote(text));
    }

    for s in &expl.shared_skills {
        let node = format!("skill:{}", s.skill_id);
        let _ = writeln!(out, "  {} -- {} [label=\"{:.2}\"];", quote(&ja), quote(&node), s.weight_a);
        let _ = writeln!(out, "  {} -- {} [label=\"{:.2}\"];", quote(&jb), quote(&node), s.weight_b);
    }
    for link in &expl.category_links {
        let cat = format!("skill:{}", link.category_id);
        for (job, via) in [(&ja, &link.via_a), (&jb, &link.via_b)] {
            for v in via {
                let node = format!("skill:{v}");
                if node == cat {
                    let _ = writeln!(out, "  {} -- {} [style=dashed];", quote(job), quote(&cat));
                } else {
                    let _ = writeln!(out, "  {} -- {} [style=dashed];", quote(job), quote(&node));
                    let _ = writeln!(out, "  {} -- {} [style=dashed];", quote(&node), quote(&cat));
                }
            }
        }
    }
    out.push_str("}\n");
    out
}

/// Pretty JSON with keys in sorted order.
pub fn render_json(expl: &Explanation) -> Result<String> {
    let value = serde_json::to_value(expl)?;
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

pub fn parse_json(text: &str) -> Result<Explanation> {
    Ok(serde_json::from_str(text)?)
}

/// Plain-text table of the shared skills.
pub fn render_table(expl: &Explanation) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} ({}) vs {} ({})",
        expl.job_a.title, expl.job_a.id, expl.job_b.title, expl.job_b.id
    );
    let _ = writeln!(out, "predicted STR: {:.6}", expl.predicted_str);
    let _ = writeln!(out, "verdict: {:?}", expl.verdict);
    if !expl.shared_skills.is_empty() {
        let width = expl
            .shared_skills
            .iter()
            .map(|s| s.label.chars().count())
            .max()
            .unwrap_or(0)
            .max(5);
        let _ = writeln!(out, "{:<width$}  specificity  weight_a  weight_b", "skill");
        for s in &expl.shared_skills {
            let _ = writeln!(
                out,
                "{:<width$}  {:>11.2}  {:>8.2}  {:>8.2}",
                s.label, s.specificity, s.weight_a, s.weight_b
            );
        }
    }
    for link in &expl.category_links {
        let _ = writeln!(
            out,
            "via category {}: {} | {}",
            link.label,
            link.via_a.join(", "),
            link.via_b.join(", ")
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{compute_specificity, skill_node_id, KgEdge, KgNode};
    use proptest::prelude::*;

    fn node(id: &str, kind: NodeKind, label: &str) -> KgNode {
        KgNode {
            id: id.into(),
            kind,
            label: label.into(),
        }
    }

    fn has(job: &str, skill: &str, w: f64) -> KgEdge {
        KgEdge {
            source: job_node_id(job),
            target: skill_node_id(skill),
            relation: Relation::HasSkill,
            weight: w,
        }
    }

    fn sub(child: &str, parent: &str) -> KgEdge {
        KgEdge {
            source: skill_node_id(child),
            target: skill_node_id(parent),
            relation: Relation::SubskillOf,
            weight: 1.0,
        }
    }

    /// Four jobs. `brand` is held by two jobs, `office` by all four and
    /// `rare` by one, so degrees 1, 2, 4 give specificities 1, 2/3, 0.
    fn graph() -> KnowledgeGraph {
        let mut nodes = vec![
            node("job:a", NodeKind::Job, "Brand Manager"),
            node("job:b", NodeKind::Job, "Marketing \"Lead\""),
            node("job:c", NodeKind::Job, "Office Manager"),
            node("job:d", NodeKind::Job, "Receptionist"),
        ];
        for (id, label) in [
            ("brand", "manage brand portfolios"),
            ("office", "coordinate office staff"),
            ("rare", "greet visitors"),
            ("cat", "Marketing"),
        ] {
            nodes.push(node(&skill_node_id(id), NodeKind::Skill, label));
        }
        let edges = vec![
            has("a", "brand", 0.81),
            has("b", "brand", 0.77),
            has("a", "office", 0.6),
            has("b", "office", 0.55),
            has("c", "office", 0.9),
            has("d", "office", 0.7),
            has("d", "rare", 0.66),
            has("c", "cat", 0.52),
            sub("brand", "cat"),
        ];
        KnowledgeGraph::from_parts(nodes, edges).unwrap()
    }

    fn opts() -> ExplainConfig {
        ExplainConfig::default()
    }

    #[test]
    fn specific_match_lists_specific_skill_first() {
        let kg = graph();
        let spec = compute_specificity(&kg).unwrap();
        assert!((spec.get("skill:brand").unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let e = explain_match(&kg, &spec, "a", "b", 0.8, &opts()).unwrap();
        assert_eq!(e.verdict, Verdict::Specific);
        assert_eq!(e.shared_skills[0].skill_id, "brand");
        assert_eq!(e.shared_skills[1].skill_id, "office");
        assert_eq!((e.shared_skills[0].weight_a, e.shared_skills[0].weight_b), (0.81, 0.77));
        let dot = render_dot(&e, &spec);
        assert!(dot.contains("manage brand portfolios (0.67)"), "{dot}");
        assert!(dot.contains("coordinate office staff (0.00)"), "{dot}");
    }

    #[test]
    fn generic_match() {
        let kg = graph();
        let spec = compute_specificity(&kg).unwrap();
        let e = explain_match(&kg, &spec, "c", "d", 0.4, &opts()).unwrap();
        assert_eq!(e.verdict, Verdict::Generic);
        assert_eq!(e.shared_skills.len(), 1);
        assert_eq!(e.shared_skills[0].specificity, 0.0);
    }

    #[test]
    fn no_overlap_and_unknown() {
        let mut nodes = graph().nodes().to_vec();
        nodes.push(node("job:e", NodeKind::Job, "Nobody"));
        let kg = KnowledgeGraph::from_parts(nodes, graph().edges().to_vec()).unwrap();
        let spec = compute_specificity(&kg).unwrap();
        let e = explain_match(&kg, &spec, "a", "e", 0.1, &opts()).unwrap();
        assert_eq!(e.verdict, Verdict::NoOverlap);
        assert!(e.shared_skills.is_empty());
        let dot = render_dot(&e, &spec);
        assert_eq!(dot.matches("shape=box").count(), 2);
        assert!(!dot.contains(" -- "));
        assert!(matches!(
            explain_match(&kg, &spec, "a", "zz", 0.1, &opts()),
            Err(Error::UnknownId(_))
        ));
        assert!(explain_match(&kg, &spec, "a", "brand", 0.1, &opts()).is_err());
    }

    #[test]
    fn symmetric() {
        let kg = graph();
        let spec = compute_specificity(&kg).unwrap();
        for (x, y) in [("a", "b"), ("a", "c"), ("c", "d"), ("b", "d")] {
            let e1 = explain_match(&kg, &spec, x, y, 0.5, &opts()).unwrap();
            let e2 = explain_match(&kg, &spec, y, x, 0.5, &opts()).unwrap();
            assert_eq!(e1.verdict, e2.verdict);
            assert_eq!(e1.shared_skills.len(), e2.shared_skills.len());
            for (s1, s2) in e1.shared_skills.iter().zip(&e2.shared_skills) {
                assert_eq!(s1.skill_id, s2.skill_id);
                assert_eq!((s1.weight_a, s1.weight_b), (s2.weight_b, s2.weight_a));
            }
        }
    }

    #[test]
    fn two_hop_category_links() {
        let kg = graph();
        let spec = compute_specificity(&kg).unwrap();
        let two = ExplainConfig {
            hops: 2,
            ..opts()
        };
        let e = explain_match(&kg, &spec, "a", "c", 0.5, &two).unwrap();
        assert_eq!(e.category_links.len(), 1);
        let link = &e.category_links[0];
        assert_eq!(link.category_id, "cat");
        assert_eq!(link.via_a, vec!["brand"]);
        assert_eq!(link.via_b, vec!["cat"]);
        let dot = render_dot(&e, &spec);
        assert!(dot.contains("style=dashed"));
        assert!(explain_match(&kg, &spec, "a", "c", 0.5, &opts()).unwrap().category_links.is_empty());
    }

    #[test]
    fn json_round_trip_sorted_keys_and_rounding() {
        let kg = graph();
        let spec = compute_specificity(&kg).unwrap();
        let e = explain_match(&kg, &spec, "a", "b", 0.123456789, &opts()).unwrap();
        assert_eq!(e.predicted_str, 0.123457);
        let text = render_json(&e).unwrap();
        assert!(text.contains("\"predicted_str\": 0.123457"));
        assert_eq!(parse_json(&text).unwrap(), e);
        let keys: Vec<usize> = ["job_a", "job_b", "predicted_str", "shared_skills", "verdict"]
            .iter()
            .map(|k| text.find(&format!("\"{k}\"")).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn dot_escapes_quotes() {
        let kg = graph();
        let spec = compute_specificity(&kg).unwrap();
        let e = explain_match(&kg, &spec, "a", "b", 0.5, &opts()).unwrap();
        assert!(render_dot(&e, &spec).contains(r#"label="Marketing \"Lead\"""#));
    }

    #[test]
    fn dot_parses_with_graphviz_grammar() {
        use graphviz_rust::dot_structures::{Graph, Stmt};
        let kg = graph();
        let spec = compute_specificity(&kg).unwrap();
        let two = ExplainConfig { hops: 2, ..opts() };
        for (x, y) in [("a", "b"), ("a", "c"), ("c", "d"), ("b", "d"), ("a", "a")] {
            let e = explain_match(&kg, &spec, x, y, 0.5, &two).unwrap();
            let dot = render_dot(&e, &spec);
            let parsed = graphviz_rust::parse(&dot).unwrap_or_else(|err| panic!("{err}\n{dot}"));
            let Graph::Graph { stmts, strict, .. } = parsed else {
                panic!("expected an undirected graph");
            };
            assert!(!strict);
            let edges = stmts.iter().filter(|s| matches!(s, Stmt::Edge(_))).count();
            assert_eq!(edges, dot.matches(" -- ").count());
        }
    }

    #[test]
    fn table_lists_skills() {
        let kg = graph();
        let spec = compute_specificity(&kg).unwrap();
        let t = render_table(&explain_match(&kg, &spec, "a", "b", 0.5, &opts()).unwrap());
        assert!(t.contains("verdict: Specific"));
        assert!(t.contains("manage brand portfolios"));
    }

    fn skill(spec: f64) -> SharedSkill {
        SharedSkill {
            skill_id: "x".into(),
            label: "x".into(),
            specificity: spec,
            weight_a: 1.0,
            weight_b: 1.0,
        }
    }

    proptest! {
        #[test]
        fn higher_shared_specificity_never_downgrades(
            specs in proptest::collection::vec(0.0f64..=1.0, 1..8),
            extra in 0.0f64..=1.0,
            threshold in 0.0f64..=1.0,
        ) {
            let mut skills: Vec<SharedSkill> = specs.iter().map(|&s| skill(s)).collect();
            let before = verdict(&skills, threshold);
            prop_assert_ne!(before, Verdict::NoOverlap);
            let top = specs.iter().cloned().fold(0.0, f64::max);
            skills.push(skill(top.max(extra)));
            let after = verdict(&skills, threshold);
            prop_assert!(before != Verdict::Specific || after == Verdict::Specific);
        }
    }
}
