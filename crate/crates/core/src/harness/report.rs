//! Self-contained evaluation reports.
//!
//! A report carries the per-item payload its summary was computed from, and
//! [`Summarize::summarize`] is the only code path that produces summaries, so
//! recomputing one from a loaded report reproduces it bit for bit.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::backend::BackendConfig;
use crate::metrics::{min_max_scale, v_measure, CorrelationReport, VMeasureReport, SCALED_RANGE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Csts,
    Clustering,
    TemplateSearch,
    ConditionSearch,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csts => "csts",
            Self::Clustering => "clustering",
            Self::TemplateSearch => "template-search",
            Self::ConditionSearch => "condition-search",
        })
    }
}

/// Settings that shaped a run, recorded verbatim in its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub backend: BackendConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalize: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_init: Option<usize>,
}

impl ConfigSnapshot {
    pub fn backend_only(backend: &BackendConfig) -> Self {
        Self {
            backend: backend.clone(),
            k: None,
            seeds: Vec::new(),
            normalize: None,
            n_init: None,
        }
    }
}

/// Computes a summary from per-item payloads.
pub trait Summarize {
    type Summary;
    fn summarize(&self) -> Result<Self::Summary, HarnessError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<I, S> {
    pub task: Task,
    pub dataset: String,
    /// Template id, or `"all"` for template search.
    pub template: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    pub model_id: String,
    pub config: ConfigSnapshot,
    pub started_at: String,
    pub finished_at: String,
    pub summary: S,
    pub items: I,
}

pub fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl<I, S> EvalReport<I, S>
where
    I: Summarize<Summary = S> + Serialize + DeserializeOwned,
    S: Serialize + DeserializeOwned + PartialEq,
{
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports contain only serializable data") + "\n"
    }

    pub fn from_json(s: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(s).map_err(|e| HarnessError::Report(e.to_string()))
    }

    pub fn recompute_summary(&self) -> Result<S, HarnessError> {
        self.items.summarize()
    }

    /// `true` when the stored summary equals one recomputed from the items.
    pub fn is_consistent(&self) -> Result<bool, HarnessError> {
        Ok(self.recompute_summary()? == self.summary)
    }

    /// `{task}-{dataset}-{template}-{timestamp}.json`.
    pub fn file_name(&self) -> String {
        let stamp = DateTime::parse_from_rfc3339(&self.started_at)
            .map(|t| t.with_timezone(&Utc).format("%Y%m%dT%H%M%S%3fZ").to_string())
            .unwrap_or_else(|_| sanitize(&self.started_at));
        format!(
            "{}-{}-{}-{}.json",
            self.task,
            sanitize(&self.dataset),
            sanitize(&self.template),
            stamp
        )
    }

    /// Writes the report into `dir` under [`Self::file_name`].
    pub fn write_to_dir(&self, dir: &Path) -> Result<PathBuf, HarnessError> {
        fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = dir.join(self.file_name());
        fs::write(&path, self.to_json()).map_err(|source| HarnessError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}

fn sanitize(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
        .collect();
    if cleaned.is_empty() {
        "unnamed".to_owned()
    } else {
        cleaned
    }
}

fn tsv_field(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

fn opt_word(w: &Option<String>) -> String {
    w.as_deref().map(tsv_field).unwrap_or_default()
}

/// Flat tab-separated view of a report's items.
pub trait ToTsv {
    fn to_tsv(&self) -> String;
}

// ---- C-STS ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CstsItem {
    pub text1: String,
    pub text2: String,
    pub condition: String,
    pub gold: f64,
    /// Cosine similarity of the two conditional embeddings.
    pub prediction: f64,
    pub word1: Option<String>,
    pub word2: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CstsItems(pub Vec<CstsItem>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CstsSummary {
    pub spearman_rho: f64,
    pub pearson_r: f64,
    pub n: usize,
    /// Predictions min-max scaled to the gold display range, in item order.
    pub scaled_predictions: Vec<f64>,
}

fn correlation_of(items: &[CstsItem]) -> Result<CorrelationReport, HarnessError> {
    let pred: Vec<f64> = items.iter().map(|i| i.prediction).collect();
    let gold: Vec<f64> = items.iter().map(|i| i.gold).collect();
    Ok(CorrelationReport::compute(&pred, &gold)?)
}

impl Summarize for CstsItems {
    type Summary = CstsSummary;

    fn summarize(&self) -> Result<CstsSummary, HarnessError> {
        let c = correlation_of(&self.0)?;
        let pred: Vec<f64> = self.0.iter().map(|i| i.prediction).collect();
        Ok(CstsSummary {
            spearman_rho: c.spearman_rho,
            pearson_r: c.pearson_r,
            n: c.n,
            scaled_predictions: min_max_scale(&pred, SCALED_RANGE.0, SCALED_RANGE.1)?,
        })
    }
}

pub type CstsReport = EvalReport<CstsItems, CstsSummary>;

impl ToTsv for CstsReport {
    fn to_tsv(&self) -> String {
        let mut out = String::from("text1\ttext2\tcondition\tgold\tprediction\tscaled\tword1\tword2\n");
        for (item, scaled) in self.items.0.iter().zip(&self.summary.scaled_predictions) {
            out += &format!(
                "{}\t{}\t{}\t{}\t{}\t{:.4}\t{}\t{}\n",
                tsv_field(&item.text1),
                tsv_field(&item.text2),
                tsv_field(&item.condition),
                item.gold,
                item.prediction,
                scaled,
                opt_word(&item.word1),
                opt_word(&item.word2)
            );
        }
        out
    }
}

// ---- clustering ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterItem {
    pub text: String,
    pub label: String,
    pub generated_word: Option<String>,
    /// Cluster id under each seed, in the order of [`ClusterItems::seeds`].
    pub assignments: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterItems {
    pub seeds: Vec<u64>,
    pub points: Vec<ClusterItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub seed: u64,
    #[serde(flatten)]
    pub scores: VMeasureReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub k: usize,
    /// Component-wise mean over seeds.
    pub mean: VMeasureReport,
    pub per_seed: Vec<SeedScore>,
}

impl Summarize for ClusterItems {
    type Summary = ClusterSummary;

    fn summarize(&self) -> Result<ClusterSummary, HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Report("clustering report lists no seeds".into()));
        }
        let gold: Vec<&str> = self.points.iter().map(|p| p.label.as_str()).collect();
        let mut per_seed = Vec::with_capacity(self.seeds.len());
        let mut k = 0;
        for (s, &seed) in self.seeds.iter().enumerate() {
            let pred = self
                .points
                .iter()
                .map(|p| {
                    p.assignments
                        .get(s)
                        .copied()
                        .ok_or_else(|| HarnessError::Report(format!("item lacks an assignment for seed {seed}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            k = k.max(pred.iter().max().map_or(0, |m| m + 1));
            per_seed.push(SeedScore {
                seed,
                scores: v_measure(&gold, &pred)?,
            });
        }
        let n = per_seed.len() as f64;
        let avg = |f: fn(&VMeasureReport) -> f64| per_seed.iter().map(|s| f(&s.scores)).sum::<f64>() / n;
        Ok(ClusterSummary {
            k,
            mean: VMeasureReport {
                homogeneity: avg(|s| s.homogeneity),
                completeness: avg(|s| s.completeness),
                v_measure: avg(|s| s.v_measure),
            },
            per_seed,
        })
    }
}

pub type ClusterReport = EvalReport<ClusterItems, ClusterSummary>;

impl ToTsv for ClusterReport {
    fn to_tsv(&self) -> String {
        let mut out = String::from("text\tlabel\tgenerated_word");
        for seed in &self.items.seeds {
            out += &format!("\tseed_{seed}");
        }
        out.push('\n');
        for p in &self.items.points {
            out += &format!("{}\t{}\t{}", tsv_field(&p.text), tsv_field(&p.label), opt_word(&p.generated_word));
            for a in &p.assignments {
                out += &format!("\t{a}");
            }
            out.push('\n');
        }
        out
    }
}

// ---- searches ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateEntry {
    pub template_id: String,
    pub pattern: String,
    pub items: Vec<CstsItem>,
}

/// Per-template payloads in evaluation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSearchItems(pub Vec<TemplateEntry>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateRank {
    pub template_id: String,
    pub spearman_rho: f64,
    pub pearson_r: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSearchSummary {
    pub selected: String,
    /// Sorted by Spearman descending; ties keep evaluation order.
    pub ranking: Vec<TemplateRank>,
}

/// Indices of `scores` sorted descending, stable on ties.
fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

impl Summarize for TemplateSearchItems {
    type Summary = TemplateSearchSummary;

    fn summarize(&self) -> Result<TemplateSearchSummary, HarnessError> {
        let scores = self
            .0
            .iter()
            .map(|e| correlation_of(&e.items))
            .collect::<Result<Vec<_>, _>>()?;
        let order = rank_desc(&scores.iter().map(|c| c.spearman_rho).collect::<Vec<_>>());
        let ranking: Vec<TemplateRank> = order
            .iter()
            .enumerate()
            .map(|(pos, &i)| TemplateRank {
                template_id: self.0[i].template_id.clone(),
                spearman_rho: scores[i].spearman_rho,
                pearson_r: scores[i].pearson_r,
                selected: pos == 0,
            })
            .collect();
        let selected = ranking
            .first()
            .map(|r| r.template_id.clone())
            .ok_or(HarnessError::NothingToSearch("templates"))?;
        Ok(TemplateSearchSummary { selected, ranking })
    }
}

pub type TemplateSearchReport = EvalReport<TemplateSearchItems, TemplateSearchSummary>;

impl ToTsv for TemplateSearchReport {
    fn to_tsv(&self) -> String {
        let mut out = String::from("template\tspearman\tpearson\tselected\n");
        for r in &self.summary.ranking {
            out += &format!("{}\t{}\t{}\t{}\n", r.template_id, r.spearman_rho, r.pearson_r, r.selected);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub condition: String,
    pub items: ClusterItems,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionSearchItems(pub Vec<ConditionEntry>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRank {
    pub condition: String,
    #[serde(flatten)]
    pub mean: VMeasureReport,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSearchSummary {
    pub selected: String,
    /// Sorted by mean V-measure descending; ties keep input order.
    pub ranking: Vec<ConditionRank>,
}

impl Summarize for ConditionSearchItems {
    type Summary = ConditionSearchSummary;

    fn summarize(&self) -> Result<ConditionSearchSummary, HarnessError> {
        let means = self
            .0
            .iter()
            .map(|e| e.items.summarize().map(|s| s.mean))
            .collect::<Result<Vec<_>, _>>()?;
        let order = rank_desc(&means.iter().map(|m| m.v_measure).collect::<Vec<_>>());
        let ranking: Vec<ConditionRank> = order
            .iter()
            .enumerate()
            .map(|(pos, &i)| ConditionRank {
                condition: self.0[i].condition.clone(),
                mean: means[i],
                selected: pos == 0,
            })
            .collect();
        let selected = ranking
            .first()
            .map(|r| r.condition.clone())
            .ok_or(HarnessError::NothingToSearch("conditions"))?;
        Ok(ConditionSearchSummary { selected, ranking })
    }
}

pub type ConditionSearchReport = EvalReport<ConditionSearchItems, ConditionSearchSummary>;

impl ToTsv for ConditionSearchReport {
    fn to_tsv(&self) -> String {
        let mut out = String::from("condition\thomogeneity\tcompleteness\tv_measure\tselected\n");
        for r in &self.summary.ranking {
            out += &format!(
                "{}\t{}\t{}\t{}\t{}\n",
                tsv_field(&r.condition),
                r.mean.homogeneity,
                r.mean.completeness,
                r.mean.v_measure,
                r.selected
            );
        }
        out
    }
}
