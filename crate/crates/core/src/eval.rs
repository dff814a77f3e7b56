//! Conditional and open-world document evaluation.
//!
//! The open-world pool is the whole candidate pool. The conditional pool keeps
//! only candidates linking at least one top-k entity of an entity run, and
//! recall denominators shrink to the relevant documents left in it. Scoring
//! follows trec_eval conventions: unjudged documents are non-relevant, P@k
//! divides by k, and a submitted ranking is re-sorted by score descending
//! with ties broken by document id descending.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::corpus::{CorpusIndex, QueryIndex};
use crate::error::{Error, Result};
use crate::run::{sort_canonical, DocRun, EntityRun, Run, Scored};
use crate::trec::{Cell, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Conditional { k_entities: usize },
    OpenWorld,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Conditional { .. } => "conditional",
            EvalMode::OpenWorld => "open-world",
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// nDCG gain as a function of the grade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Gain {
    /// gain = grade
    #[default]
    Linear,
    /// gain = 2^grade - 1
    Exponential,
}

impl Gain {
    pub fn of(self, grade: u32) -> f64 {
        match self {
            Gain::Linear => grade as f64,
            Gain::Exponential => 2f64.powi(grade as i32) - 1.0,
        }
    }
}

impl FromStr for Gain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Gain::Linear),
            "exponential" | "exp" => Ok(Gain::Exponential),
            _ => Err(Error::invalid(format!("unknown gain `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub ndcg_cutoff: usize,
    pub precision_cutoff: usize,
    pub recall_cutoff: usize,
    pub gain: Gain,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            ndcg_cutoff: 20,
            precision_cutoff: 20,
            recall_cutoff: 1000,
            gain: Gain::Linear,
        }
    }
}

fn selected_entities<'a>(entity_run: &'a EntityRun, query_id: &str, k: usize) -> HashSet<&'a str> {
    entity_run.top_k(query_id, k).iter().map(|s| s.id.as_str()).collect()
}

fn pool_of<'a>(
    index: &CorpusIndex,
    q: &'a QueryIndex,
    entity_run: Option<&EntityRun>,
    mode: EvalMode,
) -> Result<HashSet<&'a str>> {
    match mode {
        EvalMode::OpenWorld => Ok(q.docs.iter().map(|d| d.doc_id.as_str()).collect()),
        EvalMode::Conditional { k_entities } => {
            let run = entity_run
                .ok_or_else(|| Error::invalid("conditional evaluation needs an entity run"))?;
            let selected = selected_entities(run, &q.query_id, k_entities);
            Ok(q.docs
                .iter()
                .filter(|d| index.contains_any(&d.doc_id, &selected))
                .map(|d| d.doc_id.as_str())
                .collect())
        }
    }
}

/// Documents of the evaluation pool of one query.
pub fn build_eval_pool(
    index: &CorpusIndex,
    entity_run: Option<&EntityRun>,
    query_id: &str,
    mode: EvalMode,
) -> Result<HashSet<String>> {
    let q = index.query(query_id)?;
    Ok(pool_of(index, q, entity_run, mode)?
        .into_iter()
        .map(str::to_string)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryMetrics {
    pub ap: f64,
    pub ndcg: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Scores a ranking given the grade of each ranked document (`None` for
/// unjudged), the number of relevant documents in the pool and the grades of
/// all judged pool documents (for the ideal DCG).
pub fn score_ranking(ranked: &[Option<u32>], num_rel: usize, pool_grades: &[u32], opts: &EvalOptions) -> QueryMetrics {
    let mut hits = 0usize;
    let mut ap_sum = 0.0;
    let mut dcg = 0.0;
    let (mut p_hits, mut r_hits) = (0usize, 0usize);
    for (i, g) in ranked.iter().enumerate() {
        let rank = i + 1;
        let grade = g.unwrap_or(0);
        if crate::corpus::is_relevant(grade) {
            hits += 1;
            ap_sum += hits as f64 / rank as f64;
            if rank <= opts.precision_cutoff {
                p_hits += 1;
            }
            if rank <= opts.recall_cutoff {
                r_hits += 1;
            }
        }
        if rank <= opts.ndcg_cutoff {
            dcg += opts.gain.of(grade) / (rank as f64 + 1.0).log2();
        }
    }
    let mut ideal: Vec<u32> = pool_grades.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(opts.ndcg_cutoff)
        .enumerate()
        .map(|(i, &g)| opts.gain.of(g) / (i as f64 + 2.0).log2())
        .sum();
    QueryMetrics {
        ap: ap_sum / num_rel as f64,
        ndcg: if idcg > 0.0 { dcg / idcg } else { 0.0 },
        precision: p_hits as f64 / opts.precision_cutoff as f64,
        recall: r_hits as f64 / num_rel as f64,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocEvalRow {
    pub query_id: String,
    pub pool_size: usize,
    /// Relevant documents in the evaluation pool.
    pub num_rel: usize,
    /// Relevant candidates removed by conditioning.
    pub rel_excluded: usize,
    /// Submitted documents outside the evaluation pool.
    pub dropped: usize,
    /// `None` for degenerate queries.
    pub metrics: Option<QueryMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocEvalReport {
    pub mode: EvalMode,
    pub options: EvalOptions,
    pub rows: Vec<DocEvalRow>,
    /// Queries with an empty pool, no judged document or no relevant
    /// document in the pool.
    pub degenerate: Vec<String>,
}

impl DocEvalReport {
    pub fn row(&self, query_id: &str) -> Option<&DocEvalRow> {
        self.rows.iter().find(|r| r.query_id == query_id)
    }

    /// Metric means over non-degenerate queries.
    pub fn mean(&self) -> Option<QueryMetrics> {
        let ms: Vec<&QueryMetrics> = self.rows.iter().filter_map(|r| r.metrics.as_ref()).collect();
        if ms.is_empty() {
            return None;
        }
        let n = ms.len() as f64;
        Some(QueryMetrics {
            ap: ms.iter().map(|m| m.ap).sum::<f64>() / n,
            ndcg: ms.iter().map(|m| m.ndcg).sum::<f64>() / n,
            precision: ms.iter().map(|m| m.precision).sum::<f64>() / n,
            recall: ms.iter().map(|m| m.recall).sum::<f64>() / n,
        })
    }

    pub fn map(&self) -> Option<f64> {
        self.mean().map(|m| m.ap)
    }
}

fn evaluate_query(
    index: &CorpusIndex,
    q: &QueryIndex,
    doc_run: &DocRun,
    entity_run: Option<&EntityRun>,
    mode: EvalMode,
    opts: &EvalOptions,
) -> Result<DocEvalRow> {
    let pool = pool_of(index, q, entity_run, mode)?;
    let mut ranking: Vec<&Scored> = Vec::new();
    let mut dropped = 0;
    for s in doc_run.get(&q.query_id) {
        if pool.contains(s.id.as_str()) {
            ranking.push(s);
        } else {
            dropped += 1;
        }
    }
    ranking.sort_by(|a, b| crate::run::canonical_cmp(a, b));

    let in_pool = q.docs.iter().filter(|d| pool.contains(d.doc_id.as_str()));
    let (mut num_rel, mut num_judged) = (0usize, 0usize);
    let mut pool_grades = Vec::new();
    for d in in_pool {
        if d.judgment.is_judged() {
            num_judged += 1;
            pool_grades.push(d.judgment.gain());
        }
        if d.judgment.is_relevant() {
            num_rel += 1;
        }
    }

    let metrics = (num_judged > 0 && num_rel > 0).then(|| {
        let grades: Vec<Option<u32>> = ranking
            .iter()
            .map(|s| q.doc(&s.id).and_then(|d| d.judgment.is_judged().then(|| d.judgment.gain())))
            .collect();
        score_ranking(&grades, num_rel, &pool_grades, opts)
    });

    Ok(DocEvalRow {
        query_id: q.query_id.clone(),
        pool_size: pool.len(),
        num_rel,
        rel_excluded: q.num_rel - num_rel,
        dropped,
        metrics,
    })
}

/// Evaluates a document run over every indexed query.
pub fn evaluate_run(
    doc_run: &DocRun,
    index: &CorpusIndex,
    mode: EvalMode,
    entity_run: Option<&EntityRun>,
    opts: &EvalOptions,
) -> Result<DocEvalReport> {
    if matches!(mode, EvalMode::Conditional { .. }) && entity_run.is_none() {
        return Err(Error::invalid("conditional evaluation needs an entity run"));
    }
    let queries: Vec<&QueryIndex> = index.queries().collect();
    let rows: Vec<DocEvalRow> = queries
        .par_iter()
        .map(|q| evaluate_query(index, q, doc_run, entity_run, mode, opts))
        .collect::<Result<_>>()?;
    let degenerate = rows
        .iter()
        .filter(|r| r.metrics.is_none())
        .map(|r| r.query_id.clone())
        .collect();
    Ok(DocEvalReport {
        mode,
        options: *opts,
        rows,
        degenerate,
    })
}

impl Report for DocEvalReport {
    fn columns(&self) -> Vec<String> {
        let o = &self.options;
        vec![
            "qid".into(),
            "mode".into(),
            "pool_size".into(),
            "num_rel".into(),
            "rel_excluded".into(),
            "dropped".into(),
            "map".into(),
            format!("ndcg_{}", o.ndcg_cutoff),
            format!("p_{}", o.precision_cutoff),
            format!("recall_{}", o.recall_cutoff),
        ]
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        let mode = self.mode.name();
        let metric_cells = |m: Option<&QueryMetrics>| match m {
            Some(m) => vec![
                Cell::Real(m.ap),
                Cell::Real(m.ndcg),
                Cell::Real(m.precision),
                Cell::Real(m.recall),
            ],
            None => vec![Cell::Null; 4],
        };
        let mut out: Vec<Vec<Cell>> = self
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![
                    Cell::text(&r.query_id),
                    Cell::text(mode),
                    Cell::Int(r.pool_size as i64),
                    Cell::Int(r.num_rel as i64),
                    Cell::Int(r.rel_excluded as i64),
                    Cell::Int(r.dropped as i64),
                ];
                row.extend(metric_cells(r.metrics.as_ref()));
                row
            })
            .collect();
        let sum = |f: fn(&DocEvalRow) -> usize| Cell::Int(self.rows.iter().map(f).sum::<usize>() as i64);
        let mut all = vec![
            Cell::text("all"),
            Cell::text(mode),
            sum(|r| r.pool_size),
            sum(|r| r.num_rel),
            sum(|r| r.rel_excluded),
            sum(|r| r.dropped),
        ];
        all.extend(metric_cells(self.mean().as_ref()));
        out.push(all);
        out
    }
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Interpolates normalized document scores with normalized entity evidence:
/// `(1 - lambda) * doc + lambda * entity`, where a document's entity evidence
/// is the sum of the min-max normalized scores of the top-`k` entities it
/// links. Both components are min-max normalized per query; a constant
/// component normalizes to 0.5.
pub fn interpolate_rerank(
    index: &CorpusIndex,
    doc_run: &DocRun,
    entity_run: &EntityRun,
    query_id: &str,
    lambda: f64,
    k_entities: usize,
) -> Result<Vec<Scored>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda {lambda} outside [0, 1]")));
    }
    let docs = doc_run.get(query_id);
    let top = entity_run.top_k(query_id, k_entities);
    let top_norm = min_max(&top.iter().map(|s| s.score).collect::<Vec<_>>());
    let weight: std::collections::HashMap<&str, f64> = top
        .iter()
        .zip(top_norm)
        .map(|(s, w)| (s.id.as_str(), w))
        .collect();

    let doc_norm = min_max(&docs.iter().map(|s| s.score).collect::<Vec<_>>());
    let entity_raw: Vec<f64> = docs
        .iter()
        .map(|s| {
            index
                .doc_entities(&s.id)
                .iter()
                .filter_map(|l| weight.get(l.entity_id.as_str()))
                .sum()
        })
        .collect();
    let entity_norm = min_max(&entity_raw);

    let mut out: Vec<Scored> = docs
        .iter()
        .zip(doc_norm.iter().zip(&entity_norm))
        .map(|(s, (d, e))| Scored::new(s.id.clone(), (1.0 - lambda) * d + lambda * e))
        .collect();
    sort_canonical(&mut out);
    Ok(out)
}

pub fn interpolate_rerank_run(
    index: &CorpusIndex,
    doc_run: &DocRun,
    entity_run: &EntityRun,
    lambda: f64,
    k_entities: usize,
) -> Result<Run> {
    let ids: Vec<&str> = doc_run.queries().collect();
    let lists: Vec<(String, Vec<Scored>)> = ids
        .par_iter()
        .map(|q| {
            interpolate_rerank(index, doc_run, entity_run, q, lambda, k_entities).map(|l| (q.to_string(), l))
        })
        .collect::<Result<_>>()?;
    Ok(lists.into_iter().collect())
}

/// The candidate pool itself as a document run.
pub fn pool_run(index: &CorpusIndex) -> Run {
    index
        .queries()
        .map(|q| {
            let items = q.docs.iter().map(|d| Scored::new(d.doc_id.clone(), d.score)).collect();
            (q.query_id.clone(), items)
        })
        .collect()
}
