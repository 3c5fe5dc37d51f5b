//! C-STS evaluation, clustering evaluation and the two selection searches.

use chrono::Utc;

use super::data::{label_set, ClusterRecord, CstsRecord};
use super::report::{
    timestamp, ClusterItem, ClusterItems, ClusterReport, ConditionEntry, ConditionSearchItems,
    ConditionSearchReport, ConfigSnapshot, CstsItem, CstsItems, CstsReport, EvalReport, Summarize, TemplateEntry,
    TemplateSearchItems, TemplateSearchReport, Task,
};
use super::HarnessError;
use crate::backend::{Cache, EmbedResult, Embedder};
use crate::clustering::{multi_seed_cluster, KMeansConfig, DEFAULT_SEEDS};
use crate::metrics::cosine;
use crate::prompting::{ConditionalPrompt, PromptTemplate};

/// Where embeddings come from and which dataset name goes into reports.
#[derive(Debug, Clone, Copy)]
pub struct Session<'a> {
    pub embedder: &'a Embedder,
    pub cache: Option<&'a Cache>,
    pub dataset: &'a str,
}

impl<'a> Session<'a> {
    pub fn new(embedder: &'a Embedder, cache: Option<&'a Cache>, dataset: &'a str) -> Self {
        Self {
            embedder,
            cache,
            dataset,
        }
    }

    fn embed(&self, prompts: &[ConditionalPrompt]) -> Result<Vec<EmbedResult>, HarnessError> {
        Ok(self.embedder.embed_batch(prompts, self.cache)?)
    }

    fn report<I: Summarize<Summary = S>, S>(
        &self,
        task: Task,
        template: &str,
        condition: Option<&str>,
        config: ConfigSnapshot,
        started: String,
        items: I,
    ) -> Result<EvalReport<I, S>, HarnessError> {
        let summary = items.summarize()?;
        Ok(EvalReport {
            task,
            dataset: self.dataset.to_owned(),
            template: template.to_owned(),
            condition: condition.map(str::to_owned),
            model_id: self.embedder.model_id().to_owned(),
            config,
            started_at: started,
            finished_at: timestamp(Utc::now()),
            summary,
            items,
        })
    }
}

/// Clustering knobs shared by [`cluster_eval`] and [`condition_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSettings {
    /// Defaults to the number of distinct gold labels.
    pub k: Option<usize>,
    pub seeds: Vec<u64>,
    pub normalize: bool,
    pub n_init: usize,
}

impl Default for ClusterSettings {
    fn default() -> Self {
        let base = KMeansConfig::new(1);
        Self {
            k: None,
            seeds: DEFAULT_SEEDS.to_vec(),
            normalize: base.normalize,
            n_init: base.n_init,
        }
    }
}

fn condition_for<'c>(template: &PromptTemplate, condition: &'c str) -> &'c str {
    if template.requires_condition() {
        condition
    } else {
        ""
    }
}

fn check_gold(records: &[CstsRecord]) -> Result<(), HarnessError> {
    if records.len() < 2 {
        return Err(HarnessError::TooFewRecords(records.len()));
    }
    let first = records[0].gold;
    if records.iter().all(|r| r.gold == first) {
        return Err(HarnessError::ZeroVariance(
            "every gold score is identical, so correlation is undefined; evaluate a split with varied scores".into(),
        ));
    }
    Ok(())
}

fn csts_items(session: &Session, records: &[CstsRecord], template: &PromptTemplate) -> Result<Vec<CstsItem>, HarnessError> {
    let mut prompts = Vec::with_capacity(records.len() * 2);
    for (row, r) in records.iter().enumerate() {
        let condition = condition_for(template, &r.condition);
        for text in [&r.text1, &r.text2] {
            prompts.push(template.render(text, condition).map_err(|source| HarnessError::Record { row, source })?);
        }
    }
    let embedded = session.embed(&prompts)?;
    let items: Vec<CstsItem> = records
        .iter()
        .zip(embedded.chunks_exact(2))
        .map(|(r, pair)| {
            Ok(CstsItem {
                text1: r.text1.clone(),
                text2: r.text2.clone(),
                condition: r.condition.clone(),
                gold: r.gold,
                prediction: cosine(pair[0].embedding.as_slice(), pair[1].embedding.as_slice())?,
                word1: pair[0].generated_word.clone(),
                word2: pair[1].generated_word.clone(),
            })
        })
        .collect::<Result<_, HarnessError>>()?;
    let first = items[0].prediction;
    if items.iter().all(|i| i.prediction == first) {
        return Err(HarnessError::ZeroVariance(format!(
            "template {} gives the same similarity for every pair, so correlation is undefined",
            template.id()
        )));
    }
    Ok(items)
}

/// Scores each pair by the cosine of its two conditional embeddings and
/// correlates the scores with gold.
///
/// Both texts of a pair share the record's condition. An unconditional
/// template ignores the condition and yields the unconditioned baseline.
pub fn csts_eval(session: &Session, records: &[CstsRecord], template: &PromptTemplate) -> Result<CstsReport, HarnessError> {
    let started = timestamp(Utc::now());
    check_gold(records)?;
    let items = CstsItems(csts_items(session, records, template)?);
    session.report(
        Task::Csts,
        template.id(),
        None,
        ConfigSnapshot::backend_only(session.embedder.config()),
        started,
        items,
    )
}

fn resolve_k(records: &[ClusterRecord], settings: &ClusterSettings) -> usize {
    settings.k.unwrap_or_else(|| label_set(records).len())
}

fn cluster_snapshot(session: &Session, k: usize, settings: &ClusterSettings) -> ConfigSnapshot {
    ConfigSnapshot {
        backend: session.embedder.config().clone(),
        k: Some(k),
        seeds: settings.seeds.clone(),
        normalize: Some(settings.normalize),
        n_init: Some(settings.n_init),
    }
}

fn cluster_items(
    session: &Session,
    records: &[ClusterRecord],
    template: &PromptTemplate,
    condition: &str,
    k: usize,
    settings: &ClusterSettings,
) -> Result<ClusterItems, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::TooFewRecords(0));
    }
    let prompts = records
        .iter()
        .enumerate()
        .map(|(row, r)| template.render(&r.text, condition).map_err(|source| HarnessError::Record { row, source }))
        .collect::<Result<Vec<_>, _>>()?;
    let embedded = session.embed(&prompts)?;
    let points: Vec<&[f32]> = embedded.iter().map(|e| e.embedding.as_slice()).collect();
    let gold: Vec<&str> = records.iter().map(|r| r.label.as_str()).collect();
    let base = KMeansConfig::new(k).with_normalize(settings.normalize).with_n_init(settings.n_init);
    let report = multi_seed_cluster(&points, &gold, &base, &settings.seeds)?;
    let points = records
        .iter()
        .zip(&embedded)
        .enumerate()
        .map(|(i, (r, e))| ClusterItem {
            text: r.text.clone(),
            label: r.label.clone(),
            generated_word: e.generated_word.clone(),
            assignments: report.runs.iter().map(|run| run.assignments[i]).collect(),
        })
        .collect();
    Ok(ClusterItems {
        seeds: settings.seeds.clone(),
        points,
    })
}

/// Embeds every text under one shared condition and runs the multi-seed
/// K-means protocol against the gold labels.
pub fn cluster_eval(
    session: &Session,
    records: &[ClusterRecord],
    template: &PromptTemplate,
    condition: &str,
    settings: &ClusterSettings,
) -> Result<ClusterReport, HarnessError> {
    let started = timestamp(Utc::now());
    let k = resolve_k(records, settings);
    let items = cluster_items(session, records, template, condition, k, settings)?;
    session.report(
        Task::Clustering,
        template.id(),
        Some(condition),
        cluster_snapshot(session, k, settings),
        started,
        items,
    )
}

/// Runs [`csts_eval`] once per template and ranks templates by Spearman.
pub fn template_search(
    session: &Session,
    records: &[CstsRecord],
    templates: &[PromptTemplate],
) -> Result<TemplateSearchReport, HarnessError> {
    let started = timestamp(Utc::now());
    if templates.is_empty() {
        return Err(HarnessError::NothingToSearch("templates"));
    }
    check_gold(records)?;
    let entries = templates
        .iter()
        .map(|t| {
            Ok(TemplateEntry {
                template_id: t.id().to_owned(),
                pattern: t.pattern().to_owned(),
                items: csts_items(session, records, t)?,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    session.report(
        Task::TemplateSearch,
        "all",
        None,
        ConfigSnapshot::backend_only(session.embedder.config()),
        started,
        TemplateSearchItems(entries),
    )
}

/// Runs [`cluster_eval`] once per condition and ranks conditions by mean
/// V-measure.
pub fn condition_search(
    session: &Session,
    records: &[ClusterRecord],
    template: &PromptTemplate,
    conditions: &[String],
    settings: &ClusterSettings,
) -> Result<ConditionSearchReport, HarnessError> {
    let started = timestamp(Utc::now());
    if conditions.is_empty() {
        return Err(HarnessError::NothingToSearch("conditions"));
    }
    let k = resolve_k(records, settings);
    let entries = conditions
        .iter()
        .map(|c| {
            Ok(ConditionEntry {
                condition: c.clone(),
                items: cluster_items(session, records, template, c, k, settings)?,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    session.report(
        Task::ConditionSearch,
        template.id(),
        None,
        cluster_snapshot(session, k, settings),
        started,
        ConditionSearchItems(entries),
    )
}
