//! Self-supervised STR pair mining, region labels, the disjoint-title split
//! and region-stratified sampling.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::JobRecord;
use crate::embed::{normalize_text, str_score, EmbeddingStore};
use crate::error::{Error, Result};
use crate::hash::keyed_rng;

pub const TRAIN_PAIRS_FILE: &str = "train_job_title_pairs.csv";
pub const EVAL_PAIRS_FILE: &str = "eval_job_title_pairs.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrPair {
    pub anchor_id: String,
    pub sample_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    Low,
    Medium,
    High,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Low, Region::Medium, Region::High];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Low => "low",
            Region::Medium => "medium",
            Region::High => "high",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::Low => "Low",
            Region::Medium => "Medium",
            Region::High => "High",
        })
    }
}

/// Region bounds. Intervals are half-open, `[0, low_upper)`,
/// `[low_upper, medium_upper)`, and the top region is closed at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionPartition {
    pub low_upper: f64,
    pub medium_upper: f64,
}

impl Default for RegionPartition {
    fn default() -> Self {
        RegionPartition {
            low_upper: 0.50,
            medium_upper: 0.75,
        }
    }
}

impl RegionPartition {
    pub fn validate(&self) -> Vec<String> {
        if 0.0 < self.low_upper && self.low_upper < self.medium_upper && self.medium_upper < 1.0 {
            Vec::new()
        } else {
            vec![format!(
                "regions: need 0 < low_upper < medium_upper < 1 (got {}, {})",
                self.low_upper, self.medium_upper
            )]
        }
    }
}

pub fn assign_region(score: f64, partition: &RegionPartition) -> Result<Region> {
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::OutOfRange(format!("STR score {score} outside [0, 1]")));
    }
    Ok(if score < partition.low_upper {
        Region::Low
    } else if score < partition.medium_upper {
        Region::Medium
    } else {
        Region::High
    })
}

/// Number of (top, bottom, middle) samples kept per anchor for `cap`.
fn band_sizes(cap: usize) -> (usize, usize, usize) {
    let top = cap.div_ceil(3);
    let bottom = (cap - top).div_ceil(2);
    (top, bottom, cap - top - bottom)
}

/// Score every anchor against all other jobs and keep, per anchor, the
/// highest-scoring third of `cap`, the lowest-scoring third and a seeded
/// uniform draw from the ranks in between.
pub fn build_pairs(
    store: &EmbeddingStore,
    job_ids: &[String],
    cap: usize,
    seed: u64,
) -> Result<Vec<StrPair>> {
    if cap == 0 {
        return Err(Error::OutOfRange("per-anchor cap must be >= 1".into()));
    }
    if cap + 1 > job_ids.len() {
        return Err(Error::OutOfRange(format!(
            "per-anchor cap {cap} exceeds population - 1 ({})",
            job_ids.len().saturating_sub(1)
        )));
    }
    let vectors: Vec<&[f64]> = job_ids
        .iter()
        .map(|id| store.require(id))
        .collect::<Result<_>>()?;
    let (n_top, n_bottom, n_middle) = band_sizes(cap);

    let per_anchor: Vec<Vec<StrPair>> = job_ids
        .par_iter()
        .enumerate()
        .map(|(a, anchor)| {
            let mut ranked: Vec<(usize, f64)> = Vec::with_capacity(job_ids.len() - 1);
            for (s, v) in vectors.iter().enumerate() {
                if s != a {
                    ranked.push((s, str_score(vectors[a], v)?));
                }
            }
            ranked.sort_by(|x, y| {
                y.1.total_cmp(&x.1)
                    .then_with(|| job_ids[x.0].cmp(&job_ids[y.0]))
            });
            let mut keep: Vec<usize> = (0..n_top).collect();
            keep.extend(ranked.len() - n_bottom..ranked.len());
            let middle_len = ranked.len() - n_top - n_bottom;
            let mut rng = keyed_rng(seed, anchor);
            keep.extend(
                index::sample(&mut rng, middle_len, n_middle.min(middle_len))
                    .into_iter()
                    .map(|i| n_top + i),
            );
            keep.sort_unstable();
            Ok(keep
                .into_iter()
                .map(|r| StrPair {
                    anchor_id: anchor.clone(),
                    sample_id: job_ids[ranked[r].0].clone(),
                    score: ranked[r].1,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_anchor.into_iter().flatten().collect())
}

/// Seeded shuffle then cut. Both sides keep the input order.
pub fn split_disjoint(
    keys: &[String],
    eval_fraction: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    if !(eval_fraction > 0.0 && eval_fraction < 1.0) {
        return Err(Error::OutOfRange(format!(
            "eval fraction {eval_fraction} must lie in (0, 1)"
        )));
    }
    if keys.len() < 2 {
        return Err(Error::OutOfRange("need at least 2 items to split".into()));
    }
    let n_eval = (keys.len() as f64 * eval_fraction).round() as usize;
    if n_eval == 0 || n_eval == keys.len() {
        return Err(Error::OutOfRange(format!(
            "eval fraction {eval_fraction} of {} items leaves one side empty",
            keys.len()
        )));
    }
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.shuffle(&mut keyed_rng(seed, "split"));
    let mut is_eval = vec![false; keys.len()];
    for &i in &order[..n_eval] {
        is_eval[i] = true;
    }
    let (mut train, mut eval) = (Vec::new(), Vec::new());
    for (k, e) in keys.iter().zip(is_eval) {
        if e {
            eval.push(k.clone());
        } else {
            train.push(k.clone());
        }
    }
    Ok((train, eval))
}

/// Split job ids so that no normalized title lands on both sides: unique
/// titles are split with [`split_disjoint`] and every job follows its title.
pub fn split_jobs_by_title(
    jobs: &[JobRecord],
    eval_fraction: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    let mut titles = Vec::new();
    let mut seen = HashSet::new();
    for j in jobs {
        let t = normalize_text(&j.title);
        if seen.insert(t.clone()) {
            titles.push(t);
        }
    }
    let (_, eval_titles) = split_disjoint(&titles, eval_fraction, seed)?;
    let eval_titles: HashSet<String> = eval_titles.into_iter().collect();
    let (mut train, mut eval) = (Vec::new(), Vec::new());
    for j in jobs {
        if eval_titles.contains(&normalize_text(&j.title)) {
            eval.push(j.id.clone());
        } else {
            train.push(j.id.clone());
        }
    }
    Ok((train, eval))
}

/// Keep pairs whose endpoints lie on the same side; cross pairs are dropped.
pub fn partition_pairs(
    pairs: &[StrPair],
    train_ids: &[String],
    eval_ids: &[String],
) -> (Vec<StrPair>, Vec<StrPair>) {
    let train: HashSet<&str> = train_ids.iter().map(String::as_str).collect();
    let eval: HashSet<&str> = eval_ids.iter().map(String::as_str).collect();
    let mut out = (Vec::new(), Vec::new());
    for p in pairs {
        let (a, s) = (p.anchor_id.as_str(), p.sample_id.as_str());
        if train.contains(a) && train.contains(s) {
            out.0.push(p.clone());
        } else if eval.contains(a) && eval.contains(s) {
            out.1.push(p.clone());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionQuota {
    pub low: usize,
    pub medium: usize,
    pub high: usize,
}

impl RegionQuota {
    pub fn uniform(n: usize) -> Self {
        RegionQuota {
            low: n,
            medium: n,
            high: n,
        }
    }

    pub fn get(&self, region: Region) -> usize {
        match region {
            Region::Low => self.low,
            Region::Medium => self.medium,
            Region::High => self.high,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDataset {
    pub role: Role,
    pub pairs: Vec<StrPair>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionCount {
    pub region: Region,
    pub available: usize,
    pub selected: usize,
}

/// Subsample each region uniformly (seeded) down to its quota. The output
/// keeps the input's relative order.
pub fn stratify(
    pairs: &[StrPair],
    partition: &RegionPartition,
    quota: RegionQuota,
    role: Role,
    seed: u64,
) -> Result<(PairDataset, Vec<RegionCount>)> {
    if quota.low == 0 || quota.medium == 0 || quota.high == 0 {
        return Err(Error::OutOfRange("region quotas must be >= 1".into()));
    }
    let mut by_region: BTreeMap<Region, Vec<usize>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        by_region
            .entry(assign_region(p.score, partition)?)
            .or_default()
            .push(i);
    }
    let mut keep = vec![false; pairs.len()];
    let mut counts = Vec::new();
    for region in Region::ALL {
        let members = by_region.remove(&region).unwrap_or_default();
        let q = quota.get(region);
        let chosen: Vec<usize> = if members.len() > q {
            let mut rng = keyed_rng(seed, region.as_str());
            index::sample(&mut rng, members.len(), q)
                .into_iter()
                .map(|i| members[i])
                .collect()
        } else {
            members.clone()
        };
        if members.is_empty() {
            log::warn!("stratify: region {region} has no pairs");
        }
        for &i in &chosen {
            keep[i] = true;
        }
        counts.push(RegionCount {
            region,
            available: members.len(),
            selected: chosen.len(),
        });
    }
    let pairs = pairs
        .iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then(|| p.clone()))
        .collect();
    Ok((PairDataset { role, pairs }, counts))
}

/// Row of a title-keyed pair file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TitlePair {
    pub anchor: String,
    pub sample: String,
    pub score: f64,
}

pub fn titled(pairs: &[StrPair], titles: &HashMap<String, String>) -> Result<Vec<TitlePair>> {
    pairs
        .iter()
        .map(|p| {
            let t = |id: &str| {
                titles
                    .get(id)
                    .cloned()
                    .ok_or_else(|| Error::UnknownId(id.to_string()))
            };
            Ok(TitlePair {
                anchor: t(&p.anchor_id)?,
                sample: t(&p.sample_id)?,
                score: p.score,
            })
        })
        .collect()
}

fn pair_writer(path: &Path, header: [&str; 3]) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    Ok(w)
}

fn format_score(s: f64) -> String {
    format!("{s:.9}")
}

/// Write the title-keyed pair file (`anchor,sample,score`).
pub fn write_pairs(pairs: &[TitlePair], path: &Path) -> Result<()> {
    let mut w = pair_writer(path, ["anchor", "sample", "score"])?;
    for p in pairs {
        w.write_record([p.anchor.as_str(), &p.sample, &format_score(p.score)])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write the id-keyed sidecar (`anchor_id,sample_id,score`).
pub fn write_pair_ids(pairs: &[StrPair], path: &Path) -> Result<()> {
    let mut w = pair_writer(path, ["anchor_id", "sample_id", "score"])?;
    for p in pairs {
        w.write_record([p.anchor_id.as_str(), &p.sample_id, &format_score(p.score)])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_triples(path: &Path, header: [&str; 3]) -> Result<Vec<(String, String, f64)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let got = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let got: Vec<String> = got.iter().map(|h| h.trim().to_lowercase()).collect();
    if got != header {
        return Err(Error::row(
            path,
            0,
            format!("expected header `{}`", header.join(",")),
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        if rec.len() != 3 {
            return Err(Error::row(path, row, format!("expected 3 fields, found {}", rec.len())));
        }
        let score: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| Error::row(path, row, format!("malformed score `{}`", &rec[2])))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::row(path, row, format!("score {score} outside [0, 1]")));
        }
        out.push((rec[0].to_string(), rec[1].to_string(), score));
    }
    Ok(out)
}

pub fn read_pairs(path: &Path) -> Result<Vec<TitlePair>> {
    Ok(read_triples(path, ["anchor", "sample", "score"])?
        .into_iter()
        .map(|(anchor, sample, score)| TitlePair {
            anchor,
            sample,
            score,
        })
        .collect())
}

pub fn read_pair_ids(path: &Path) -> Result<Vec<StrPair>> {
    Ok(read_triples(path, ["anchor_id", "sample_id", "score"])?
        .into_iter()
        .map(|(anchor_id, sample_id, score)| StrPair {
            anchor_id,
            sample_id,
            score,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{reference_embed, ReferenceEmbedderConfig};

    fn store_2d(points: &[(&str, [f64; 2])]) -> (EmbeddingStore, Vec<String>) {
        let mut s = EmbeddingStore::new(2).unwrap();
        for (id, v) in points {
            s.insert(*id, v.to_vec()).unwrap();
        }
        (s, points.iter().map(|(id, _)| id.to_string()).collect())
    }

    #[test]
    fn band_sizes_cover_cap() {
        assert_eq!(band_sizes(1), (1, 0, 0));
        assert_eq!(band_sizes(2), (1, 1, 0));
        assert_eq!(band_sizes(9), (3, 3, 3));
        assert_eq!(band_sizes(10), (4, 3, 3));
    }

    #[test]
    fn three_jobs_cap_two_keeps_best_and_worst() {
        let (s, ids) = store_2d(&[("a", [1.0, 0.0]), ("b", [1.0, 0.2]), ("c", [0.1, 1.0])]);
        let pairs = build_pairs(&s, &ids, 2, 1).unwrap();
        assert_eq!(pairs.len(), 6);
        let a: Vec<&str> = pairs
            .iter()
            .filter(|p| p.anchor_id == "a")
            .map(|p| p.sample_id.as_str())
            .collect();
        assert_eq!(a, ["b", "c"]);
        assert!(pairs.iter().all(|p| p.anchor_id != p.sample_id));
        assert!(build_pairs(&s, &ids, 3, 1).is_err());
        assert!(build_pairs(&s, &["zz".to_string(), "a".into()], 1, 1).is_err());
    }

    #[test]
    fn build_pairs_is_deterministic() {
        let cfg = ReferenceEmbedderConfig::default();
        let mut s = EmbeddingStore::new(cfg.dimension).unwrap();
        let ids: Vec<String> = (0..50).map(|i| format!("j{i}")).collect();
        for (i, id) in ids.iter().enumerate() {
            let text = format!("role {} family {}", i * 7 % 13, i % 5);
            s.insert(id.clone(), reference_embed(&text, &cfg).unwrap()).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        write_pair_ids(&build_pairs(&s, &ids, 9, 42).unwrap(), &p1).unwrap();
        write_pair_ids(&build_pairs(&s, &ids, 9, 42).unwrap(), &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(read_pair_ids(&p1).unwrap().len(), 50 * 9);
    }

    #[test]
    fn region_examples() {
        let p = RegionPartition::default();
        assert_eq!(assign_region(0.30, &p).unwrap(), Region::Low);
        assert_eq!(assign_region(0.60, &p).unwrap(), Region::Medium);
        assert_eq!(assign_region(0.50, &p).unwrap(), Region::Medium);
        assert_eq!(assign_region(0.75, &p).unwrap(), Region::High);
        assert_eq!(assign_region(1.0, &p).unwrap(), Region::High);
        assert!(assign_region(1.01, &p).is_err());
        assert!(assign_region(-0.01, &p).is_err());
        assert!(assign_region(f64::NAN, &p).is_err());
    }

    #[test]
    fn split_examples() {
        let ids: Vec<String> = (0..10).map(|i| format!("id{i}")).collect();
        let (train, eval) = split_disjoint(&ids, 0.2, 3).unwrap();
        assert_eq!((train.len(), eval.len()), (8, 2));
        assert!(train.iter().all(|t| !eval.contains(t)));
        assert_eq!(split_disjoint(&ids, 0.2, 3).unwrap(), (train.clone(), eval.clone()));
        assert!(split_disjoint(&ids, 0.01, 3).is_err());
        assert!(split_disjoint(&ids, 1.0, 3).is_err());
        assert!(split_disjoint(&ids[..1], 0.5, 3).is_err());

        let pairs = vec![
            StrPair { anchor_id: train[0].clone(), sample_id: eval[0].clone(), score: 0.5 },
            StrPair { anchor_id: train[0].clone(), sample_id: train[1].clone(), score: 0.5 },
            StrPair { anchor_id: eval[1].clone(), sample_id: eval[0].clone(), score: 0.5 },
        ];
        let (tp, ep) = partition_pairs(&pairs, &train, &eval);
        assert_eq!(tp, vec![pairs[1].clone()]);
        assert_eq!(ep, vec![pairs[2].clone()]);
    }

    #[test]
    fn duplicate_titles_stay_on_one_side() {
        let jobs: Vec<JobRecord> = (0..20)
            .map(|i| JobRecord {
                id: format!("j{i}"),
                title: format!("Title {}", i % 7),
                description: String::new(),
                summary: None,
            })
            .collect();
        let (train, eval) = split_jobs_by_title(&jobs, 0.3, 9).unwrap();
        let title_of = |id: &String| jobs.iter().find(|j| &j.id == id).unwrap().title.clone();
        let tt: HashSet<String> = train.iter().map(title_of).collect();
        let et: HashSet<String> = eval.iter().map(title_of).collect();
        assert!(tt.is_disjoint(&et));
        assert_eq!(train.len() + eval.len(), 20);
    }

    fn pairs_with_scores(scores: &[f64]) -> Vec<StrPair> {
        scores
            .iter()
            .enumerate()
            .map(|(i, &s)| StrPair {
                anchor_id: format!("a{i}"),
                sample_id: format!("b{i}"),
                score: s,
            })
            .collect()
    }

    #[test]
    fn stratify_min_rule() {
        let mut scores = vec![0.1; 20];
        scores.extend([0.6; 3]);
        scores.extend([0.9; 40]);
        let pairs = pairs_with_scores(&scores);
        let part = RegionPartition::default();
        let (ds, counts) = stratify(&pairs, &part, RegionQuota::uniform(5), Role::Train, 1).unwrap();
        let sel: Vec<usize> = counts.iter().map(|c| c.selected).collect();
        assert_eq!(sel, [5, 3, 5]);
        assert_eq!(ds.pairs.len(), 13);
        assert!(ds.pairs.iter().all(|p| pairs.contains(p)));

        let (all, _) = stratify(&pairs, &part, RegionQuota::uniform(1000), Role::Eval, 1).unwrap();
        assert_eq!(all.pairs, pairs);
        assert!(stratify(&pairs, &part, RegionQuota::uniform(0), Role::Eval, 1).is_err());
    }

    #[test]
    fn pair_file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pairs.csv");
        let rows = vec![
            TitlePair { anchor: "Director, Sales".into(), sample: "CEO".into(), score: 0.123_456_789 },
            TitlePair { anchor: "Nurse".into(), sample: "Chef".into(), score: 1.0 },
        ];
        write_pairs(&rows, &p).unwrap();
        let back = read_pairs(&p).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.anchor, b.anchor);
            assert!((a.score - b.score).abs() < 1e-6);
        }
        write_pairs(&[], &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "anchor,sample,score\n");
        std::fs::write(&p, "anchor,sample,score\na,b,0.5\nc,d,1.2\n").unwrap();
        assert!(matches!(read_pairs(&p), Err(Error::InvalidRow { row: 2, .. })));
        std::fs::write(&p, "anchor,sample,score\na,b\n").unwrap();
        assert!(matches!(read_pairs(&p), Err(Error::InvalidRow { row: 1, .. })));
    }
}
