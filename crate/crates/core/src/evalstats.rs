//! Region-stratified evaluation: RMSE overall and per region, t-tests on
//! absolute errors between regions, five-number summaries and the CSV/JSON
//! exports built from them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::pairs::{assign_region, Region, RegionPartition, StrPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub anchor_id: String,
    pub sample_id: String,
    pub predicted: f64,
    pub actual: f64,
    pub region: Region,
}

impl Prediction {
    pub fn new(pair: &StrPair, predicted: f64, partition: &RegionPartition) -> Result<Self> {
        if !(0.0..=1.0).contains(&predicted) {
            return Err(Error::OutOfRange(format!("predicted score {predicted} outside [0, 1]")));
        }
        Ok(Prediction {
            anchor_id: pair.anchor_id.clone(),
            sample_id: pair.sample_id.clone(),
            predicted,
            actual: pair.score,
            region: assign_region(pair.score, partition)?,
        })
    }

    /// Signed error, predicted minus actual.
    pub fn error(&self) -> f64 {
        self.predicted - self.actual
    }

    pub fn abs_error(&self) -> f64 {
        self.error().abs()
    }
}

fn sum_sq(preds: &[&Prediction]) -> f64 {
    preds.iter().map(|p| p.error() * p.error()).sum()
}

pub fn rmse(preds: &[Prediction]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Empty("predictions".into()));
    }
    let refs: Vec<&Prediction> = preds.iter().collect();
    Ok((sum_sq(&refs) / preds.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRmse {
    pub region: Region,
    pub count: usize,
    /// Absent when the region is empty.
    pub rmse: Option<f64>,
}

/// RMSE per region of the actual score, in Low, Medium, High order.
pub fn rmse_by_region(preds: &[Prediction], partition: &RegionPartition) -> Result<Vec<RegionRmse>> {
    let mut out = Vec::with_capacity(3);
    for region in Region::ALL {
        let mut members = Vec::new();
        for p in preds {
            if assign_region(p.actual, partition)? == region {
                members.push(p);
            }
        }
        out.push(RegionRmse {
            region,
            count: members.len(),
            rmse: (!members.is_empty()).then(|| (sum_sq(&members) / members.len() as f64).sqrt()),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TTestKind {
    Paired,
    Welch,
}

/// Which test compares two regions. `Paired` falls back to Welch when the
/// samples differ in length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TTestPolicy {
    #[default]
    Welch,
    Paired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub kind: TTestKind,
    pub t_value: f64,
    pub p_value: f64,
    pub dof: f64,
    pub n_a: usize,
    pub n_b: usize,
}

pub fn student_t_cdf(t: f64, dof: f64) -> Result<f64> {
    let dist = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::OutOfRange(format!("degrees of freedom {dof}: {e}")))?;
    Ok(dist.cdf(t))
}

fn two_sided(t: f64, dof: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(1.0);
    }
    Ok((2.0 * student_t_cdf(-t.abs(), dof)?).min(1.0))
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Empty(format!(
            "welch t-test needs >= 2 samples per side (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        if ma == mb {
            return Err(Error::DegenerateVariance("both samples constant and equal".into()));
        }
        return Err(Error::DegenerateVariance("both samples constant".into()));
    }
    let t = (ma - mb) / se2.sqrt();
    let dof = se2 * se2
        / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    Ok(TTestResult {
        kind: TTestKind::Welch,
        t_value: t,
        p_value: two_sided(t, dof)?,
        dof,
        n_a: a.len(),
        n_b: b.len(),
    })
}

pub fn paired_t(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::Empty(format!("paired t-test needs >= 2 pairs (got {})", a.len())));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (md, vd) = mean_var(&d);
    if vd == 0.0 {
        return Err(Error::DegenerateVariance("paired differences have zero variance".into()));
    }
    let n = d.len() as f64;
    let t = md / (vd / n).sqrt();
    let dof = n - 1.0;
    Ok(TTestResult {
        kind: TTestKind::Paired,
        t_value: t,
        p_value: two_sided(t, dof)?,
        dof,
        n_a: a.len(),
        n_b: b.len(),
    })
}

pub fn ttest(a: &[f64], b: &[f64], policy: TTestPolicy) -> Result<TTestResult> {
    match policy {
        TTestPolicy::Paired if a.len() == b.len() => paired_t(a, b),
        _ => welch_t(a, b),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn five_number(values: &[f64]) -> Result<FiveNumber> {
    if values.is_empty() {
        return Err(Error::Empty("five-number summary input".into()));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(FiveNumber {
        min: s[0],
        q1: quantile(&s, 0.25),
        median: quantile(&s, 0.5),
        q3: quantile(&s, 0.75),
        max: s[s.len() - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub region: Region,
    pub count: usize,
    pub rmse: Option<f64>,
    /// Five-number summary of absolute errors.
    pub abs_error: Option<FiveNumber>,
    /// Five-number summary of signed errors, as drawn in box plots.
    pub signed_error: Option<FiveNumber>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionComparison {
    pub a: Region,
    pub b: Region,
    /// Absent when either side is too small or degenerate; `note` says why.
    pub result: Option<TTestResult>,
    pub note: Option<String>,
}

impl RegionComparison {
    pub fn label(&self) -> String {
        format!("{} vs {}", self.a, self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub total: usize,
    pub global_rmse: f64,
    pub regions: Vec<RegionSummary>,
    pub comparisons: Vec<RegionComparison>,
}

pub const REGION_COMPARISONS: [(Region, Region); 3] = [
    (Region::Low, Region::Medium),
    (Region::Low, Region::High),
    (Region::Medium, Region::High),
];

/// Absolute errors of the predictions falling in `region`.
pub fn region_abs_errors(preds: &[Prediction], region: Region) -> Vec<f64> {
    preds
        .iter()
        .filter(|p| p.region == region)
        .map(Prediction::abs_error)
        .collect()
}

pub fn build_report(
    model: &str,
    preds: &[Prediction],
    partition: &RegionPartition,
    policy: TTestPolicy,
) -> Result<EvalReport> {
    let global_rmse = rmse(preds)?;
    for p in preds {
        if p.region != assign_region(p.actual, partition)? {
            return Err(Error::OutOfRange(format!(
                "prediction {}/{} labelled {} but actual {} falls elsewhere",
                p.anchor_id, p.sample_id, p.region, p.actual
            )));
        }
    }
    let mut regions = Vec::new();
    for r in rmse_by_region(preds, partition)? {
        let abs = region_abs_errors(preds, r.region);
        let signed: Vec<f64> = preds
            .iter()
            .filter(|p| p.region == r.region)
            .map(Prediction::error)
            .collect();
        regions.push(RegionSummary {
            region: r.region,
            count: r.count,
            rmse: r.rmse,
            abs_error: five_number(&abs).ok(),
            signed_error: five_number(&signed).ok(),
        });
    }
    let comparisons = REGION_COMPARISONS
        .iter()
        .map(|&(a, b)| {
            let (ea, eb) = (region_abs_errors(preds, a), region_abs_errors(preds, b));
            match ttest(&ea, &eb, policy) {
                Ok(res) => RegionComparison {
                    a,
                    b,
                    result: Some(res),
                    note: None,
                },
                Err(e) => RegionComparison {
                    a,
                    b,
                    result: None,
                    note: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(EvalReport {
        model: model.to_string(),
        total: preds.len(),
        global_rmse,
        regions,
        comparisons,
    })
}

/// Welch test on absolute errors of two models over the same pairs,
/// optionally restricted to one region.
pub fn compare_models(a: &[Prediction], b: &[Prediction], region: Option<Region>) -> Result<TTestResult> {
    let pick = |ps: &[Prediction]| -> Vec<f64> {
        ps.iter()
            .filter(|p| region.map_or(true, |r| p.region == r))
            .map(Prediction::abs_error)
            .collect()
    };
    welch_t(&pick(a), &pick(b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub partition: RegionPartition,
    pub policy: TTestPolicy,
    pub significance: f64,
    pub models: Vec<EvalReport>,
}

impl EvalSummary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// `model,global,low,medium,high`, one row per model.
pub fn rmse_table_csv(summary: &EvalSummary) -> String {
    let mut out = String::from("model,global,low,medium,high\n");
    for m in &summary.models {
        let _ = write!(out, "{},{:.6}", m.model, m.global_rmse);
        for r in &m.regions {
            let _ = write!(out, ",{}", opt(r.rmse));
        }
        out.push('\n');
    }
    out
}

/// `model,comparison,t,p` with t and p at two decimals.
pub fn ttests_csv(summary: &EvalSummary) -> String {
    let mut out = String::from("model,comparison,t,p\n");
    for m in &summary.models {
        for c in &m.comparisons {
            let (t, p) = match &c.result {
                Some(r) => (format!("{:.2}", r.t_value), format!("{:.2}", r.p_value)),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(out, "{},{},{t},{p}", m.model, c.label());
        }
    }
    out
}

/// Per-region five-number summary of signed errors for one model.
pub fn boxplot_csv(report: &EvalReport) -> String {
    let mut out = String::from("region,count,min,q1,median,q3,max\n");
    for r in &report.regions {
        match &r.signed_error {
            Some(f) => {
                let _ = writeln!(
                    out,
                    "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    r.region.as_str(),
                    r.count,
                    f.min,
                    f.q1,
                    f.median,
                    f.q3,
                    f.max
                );
            }
            None => {
                let _ = writeln!(out, "{},0,,,,,", r.region.as_str());
            }
        }
    }
    out
}

/// Model × comparison matrix of t-values with a significance flag.
pub fn heatmap_csv(summary: &EvalSummary) -> String {
    let mut out = String::from("model,comparison,t,p,significant\n");
    for m in &summary.models {
        for c in &m.comparisons {
            match &c.result {
                Some(r) => {
                    let _ = writeln!(
                        out,
                        "{},{},{:.6},{:.6},{}",
                        m.model,
                        c.label(),
                        r.t_value,
                        r.p_value,
                        r.p_value < summary.significance
                    );
                }
                None => {
                    let _ = writeln!(out, "{},{},,,false", m.model, c.label());
                }
            }
        }
    }
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write `eval_report.json`, `rmse_by_region.csv`, `ttests.csv`,
/// `heatmap.csv` and one `boxplot_<model>.csv` per model into `dir`.
/// Returns the written paths in a fixed order.
pub fn export_report(summary: &EvalSummary, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<()> {
        let p = dir.join(name);
        write(&p, &text)?;
        written.push(p);
        Ok(())
    };
    put("eval_report.json".into(), summary.to_json()?)?;
    put("rmse_by_region.csv".into(), rmse_table_csv(summary))?;
    put("ttests.csv".into(), ttests_csv(summary))?;
    put("heatmap.csv".into(), heatmap_csv(summary))?;
    for m in &summary.models {
        put(format!("boxplot_{}.csv", m.model), boxplot_csv(m))?;
    }
    Ok(written)
}
