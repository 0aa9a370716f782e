//! Raw input files: jobs, skills and the skill hierarchy.
//!
//! All three files share one CSV dialect: UTF-8, comma separated, `"`
//! quoting with doubled-quote escapes, `\n` or `\r\n` row endings. Required
//! columns are matched case-insensitively and unknown columns are ignored.
//! Row numbers in errors count data rows from 1 (the header is row 0).

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const JOBS_FILE: &str = "source_jobs.csv";
pub const SKILLS_FILE: &str = "source_skills.csv";
pub const HIERARCHY_FILE: &str = "source_skill_hierarchy.csv";

/// Sentences kept by the extractive summarizer when nothing else is set.
pub const DEFAULT_SUMMARY_SENTENCES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub title: String,
    pub description: String,
    pub summary: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillRecord {
    pub id: String,
    pub name: String,
    pub description: String,
    /// Broad skill category rather than a granular skill.
    pub is_category: bool,
}

impl SkillRecord {
    /// Text fed to the encoder: the description, or the name when the
    /// description is empty.
    pub fn embedding_text(&self) -> &str {
        if self.description.trim().is_empty() {
            &self.name
        } else {
            &self.description
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HierarchyEdge {
    pub child_skill_id: String,
    pub parent_skill_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub jobs: Vec<JobRecord>,
    pub skills: Vec<SkillRecord>,
    pub hierarchy: Vec<HierarchyEdge>,
}

impl Corpus {
    /// Load the three source files from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let jobs = load_jobs(&dir.join(JOBS_FILE))?;
        let skills = load_skills(&dir.join(SKILLS_FILE))?;
        let hierarchy = load_hierarchy(&dir.join(HIERARCHY_FILE), &skills)?;
        Ok(Corpus {
            jobs,
            skills,
            hierarchy,
        })
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        write_jobs(&self.jobs, &dir.join(JOBS_FILE))?;
        write_skills(&self.skills, &dir.join(SKILLS_FILE))?;
        write_hierarchy(&self.hierarchy, &dir.join(HIERARCHY_FILE))
    }
}

/// A parsed CSV table with case-insensitive column lookup.
struct Table {
    columns: HashMap<String, usize>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path, required: &[&str]) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(file);
        let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
        let columns: HashMap<String, usize> = header
            .iter()
            .enumerate()
            .map(|(i, name)| (name.trim().trim_start_matches('\u{feff}').to_lowercase(), i))
            .collect();
        for col in required {
            if !columns.contains_key(*col) {
                return Err(Error::MissingColumn {
                    path: path.to_path_buf(),
                    column: (*col).to_string(),
                });
            }
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            rows.push(rec.map_err(|e| Error::csv(path, e))?);
        }
        Ok(Table { columns, rows })
    }

    fn get<'a>(&self, row: &'a csv::StringRecord, column: &str) -> Option<&'a str> {
        self.columns
            .get(column)
            .and_then(|&i| row.get(i))
            .map(str::trim)
    }

    fn required<'a>(
        &self,
        path: &Path,
        row_no: usize,
        row: &'a csv::StringRecord,
        column: &str,
    ) -> Result<&'a str> {
        self.get(row, column)
            .ok_or_else(|| Error::row(path, row_no, format!("missing value for `{column}`")))
    }
}

fn check_unique_ids<'a>(path: &Path, ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (i, id) in ids.enumerate() {
        if let Some(first) = seen.insert(id, i + 1) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                id: id.to_string(),
                first_row: first,
                second_row: i + 1,
            });
        }
    }
    Ok(())
}

pub fn load_jobs(path: &Path) -> Result<Vec<JobRecord>> {
    let table = Table::read(path, &["id", "title", "description"])?;
    let mut jobs = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        let row_no = i + 1;
        let id = table.required(path, row_no, row, "id")?;
        if id.is_empty() {
            return Err(Error::row(path, row_no, "empty id"));
        }
        let title = table.required(path, row_no, row, "title")?;
        if title.is_empty() {
            return Err(Error::row(path, row_no, format!("empty title for job `{id}`")));
        }
        let description = table.get(row, "description").unwrap_or_default();
        let summary = table
            .get(row, "summary")
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        jobs.push(JobRecord {
            id: id.to_string(),
            title: title.to_string(),
            description: description.to_string(),
            summary,
        });
    }
    check_unique_ids(path, jobs.iter().map(|j| j.id.as_str()))?;
    Ok(jobs)
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "" | "0" | "false" | "no" | "n" => Some(false),
        "1" | "true" | "yes" | "y" => Some(true),
        _ => None,
    }
}

pub fn load_skills(path: &Path) -> Result<Vec<SkillRecord>> {
    let table = Table::read(path, &["id", "name"])?;
    let mut skills = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        let row_no = i + 1;
        let id = table.required(path, row_no, row, "id")?;
        if id.is_empty() {
            return Err(Error::row(path, row_no, "empty id"));
        }
        let name = table.required(path, row_no, row, "name")?;
        if name.is_empty() {
            return Err(Error::row(path, row_no, format!("empty name for skill `{id}`")));
        }
        let raw_flag = table.get(row, "is_category").unwrap_or_default();
        let is_category = parse_bool(raw_flag).ok_or_else(|| {
            Error::row(path, row_no, format!("invalid is_category value `{raw_flag}`"))
        })?;
        skills.push(SkillRecord {
            id: id.to_string(),
            name: name.to_string(),
            description: table.get(row, "description").unwrap_or_default().to_string(),
            is_category,
        });
    }
    check_unique_ids(path, skills.iter().map(|s| s.id.as_str()))?;
    Ok(skills)
}

/// Load hierarchy rows and enforce referential integrity against `skills`.
/// Repeated `(child, parent)` rows collapse to one edge.
pub fn load_hierarchy(path: &Path, skills: &[SkillRecord]) -> Result<Vec<HierarchyEdge>> {
    let table = Table::read(path, &["child_id", "parent_id"])?;
    let mut rows = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        let row_no = i + 1;
        rows.push(HierarchyEdge {
            child_skill_id: table.required(path, row_no, row, "child_id")?.to_string(),
            parent_skill_id: table.required(path, row_no, row, "parent_id")?.to_string(),
        });
    }
    validate_hierarchy(rows, skills)
}

pub fn validate_hierarchy(
    rows: Vec<HierarchyEdge>,
    skills: &[SkillRecord],
) -> Result<Vec<HierarchyEdge>> {
    let known: HashSet<&str> = skills.iter().map(|s| s.id.as_str()).collect();
    let mut seen = HashSet::new();
    let mut edges = Vec::with_capacity(rows.len());
    for edge in rows {
        for (id, role) in [
            (&edge.child_skill_id, "hierarchy child"),
            (&edge.parent_skill_id, "hierarchy parent"),
        ] {
            if !known.contains(id.as_str()) {
                return Err(Error::DanglingReference {
                    id: id.clone(),
                    context: role.to_string(),
                });
            }
        }
        if edge.child_skill_id == edge.parent_skill_id {
            return Err(Error::SelfLoop {
                id: edge.child_skill_id,
            });
        }
        if seen.insert(edge.clone()) {
            edges.push(edge);
        }
    }
    Ok(edges)
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn finish(path: &Path, mut w: csv::Writer<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_jobs(jobs: &[JobRecord], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let with_summary = jobs.iter().any(|j| j.summary.is_some());
    let mut header = vec!["id", "title", "description"];
    if with_summary {
        header.push("summary");
    }
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for j in jobs {
        let mut rec = vec![j.id.as_str(), j.title.as_str(), j.description.as_str()];
        if with_summary {
            rec.push(j.summary.as_deref().unwrap_or_default());
        }
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    finish(path, w)
}

pub fn write_skills(skills: &[SkillRecord], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["id", "name", "description", "is_category"])
        .map_err(|e| Error::csv(path, e))?;
    for s in skills {
        let flag = if s.is_category { "true" } else { "false" };
        w.write_record([s.id.as_str(), &s.name, &s.description, flag])
            .map_err(|e| Error::csv(path, e))?;
    }
    finish(path, w)
}

pub fn write_hierarchy(edges: &[HierarchyEdge], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["child_id", "parent_id"])
        .map_err(|e| Error::csv(path, e))?;
    for e in edges {
        w.write_record([e.child_skill_id.as_str(), &e.parent_skill_id])
            .map_err(|err| Error::csv(path, err))?;
    }
    finish(path, w)
}

fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let mut end = i + c.len_utf8();
            // "?!" and "..." close one sentence
            while let Some(&(j, d)) = chars.peek() {
                if matches!(d, '.' | '!' | '?') {
                    end = j + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Extractive summary: the first `max_sentences` sentences of the
/// description, or the title when the description is empty.
pub fn summarize(job: &JobRecord, max_sentences: usize) -> String {
    let sentences = split_sentences(&job.description);
    if sentences.is_empty() {
        return job.title.trim().to_string();
    }
    let n = max_sentences.max(1).min(sentences.len());
    sentences[..n].join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn job(desc: &str) -> JobRecord {
        JobRecord {
            id: "j".into(),
            title: "CEO".into(),
            description: desc.into(),
            summary: None,
        }
    }

    fn write_file(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn loads_jobs_in_file_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            dir.path(),
            "jobs.csv",
            "id,title,description\nj1,\"Data Scientist\",\"builds models\"\nj2,\"CEO\",\"leads\"\n",
        );
        let jobs = load_jobs(&p).unwrap();
        assert_eq!(jobs.len(), 2);
        assert_eq!(jobs[0].id, "j1");
        assert_eq!(jobs[0].title, "Data Scientist");
        assert_eq!(jobs[1].description, "leads");
    }

    #[test]
    fn duplicate_job_id_names_both_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            dir.path(),
            "jobs.csv",
            "id,title,description\nj1,A,x\nj2,B,y\nj1,C,z\n",
        );
        match load_jobs(&p).unwrap_err() {
            Error::DuplicateId {
                id,
                first_row,
                second_row,
                ..
            } => {
                assert_eq!(id, "j1");
                assert_eq!((first_row, second_row), (1, 3));
            }
            other => panic!("unexpected {other}"),
        }
    }

    // Expected value checked with Python's csv module on the same bytes.
    #[test]
    fn quoted_comma_stays_in_one_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            dir.path(),
            "jobs.csv",
            "id,title,description\r\nj1,\"Director, Sales\",\"says \"\"hi\"\"\"\r\n",
        );
        let jobs = load_jobs(&p).unwrap();
        assert_eq!(jobs[0].title, "Director, Sales");
        assert_eq!(jobs[0].description, "says \"hi\"");
    }

    #[test]
    fn empty_title_and_missing_column_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(dir.path(), "a.csv", "id,title,description\nj1,  ,x\n");
        assert!(matches!(
            load_jobs(&p),
            Err(Error::InvalidRow { row: 1, .. })
        ));
        let p = write_file(dir.path(), "b.csv", "id,description\nj1,x\n");
        assert!(matches!(load_jobs(&p), Err(Error::MissingColumn { .. })));
        assert!(matches!(
            load_jobs(&dir.path().join("nope.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn columns_are_case_insensitive_and_extras_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            dir.path(),
            "jobs.csv",
            "Salary,ID,Title,DESCRIPTION\n100,j1,Nurse,cares\n",
        );
        let jobs = load_jobs(&p).unwrap();
        assert_eq!(jobs[0].id, "j1");
        assert_eq!(jobs[0].title, "Nurse");
    }

    #[test]
    fn hierarchy_integrity() {
        let dir = tempfile::tempdir().unwrap();
        let skills = load_skills(&write_file(
            dir.path(),
            "s.csv",
            "id,name,description,is_category\ns1,Marketing,,false\ns2,Sales & Marketing,,true\n",
        ))
        .unwrap();
        assert!(skills[1].is_category);

        let h = load_hierarchy(
            &write_file(dir.path(), "h1.csv", "child_id,parent_id\ns1,s2\n"),
            &skills,
        )
        .unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h[0].child_skill_id, "s1");

        let err = load_hierarchy(
            &write_file(dir.path(), "h2.csv", "child_id,parent_id\ns1,s9\n"),
            &skills,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DanglingReference { ref id, .. } if id == "s9"));

        let err = load_hierarchy(
            &write_file(dir.path(), "h3.csv", "child_id,parent_id\ns1,s1\n"),
            &skills,
        )
        .unwrap_err();
        assert!(matches!(err, Error::SelfLoop { .. }));
    }

    #[test]
    fn summarize_rules() {
        assert_eq!(summarize(&job("A. B. C."), 2), "A. B.");
        assert_eq!(summarize(&job(""), 3), "CEO");
        assert_eq!(summarize(&job("   "), 3), "CEO");
        assert_eq!(
            summarize(&job("no terminal punctuation here"), 1),
            "no terminal punctuation here"
        );
        assert_eq!(summarize(&job("Really?! Yes... ok"), 2), "Really?! Yes...");
    }
}
