//! Reachability and selectivity of an entity run over the candidate pool.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;

use crate::corpus::{CorpusIndex, Judgment, QueryIndex};
use crate::error::Result;
use crate::oer::{OerTable, SignalMode};
use crate::run::EntityRun;
use crate::trec::{Cell, Report};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_KS: [usize; 3] = [10, 20, 50];

/// Which documents form the NonRelCov denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NonRelDenominator {
    /// Judged non-relevant candidates only.
    #[default]
    Judged,
    /// Every candidate that is not relevant, judged or not.
    PoolComplement,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageOptions {
    pub epsilon: f64,
    pub nonrel: NonRelDenominator,
}

impl Default for CoverageOptions {
    fn default() -> Self {
        CoverageOptions {
            epsilon: DEFAULT_EPSILON,
            nonrel: NonRelDenominator::Judged,
        }
    }
}

fn top_k_set<'a>(run: &'a EntityRun, query_id: &str, k: usize) -> HashSet<&'a str> {
    run.top_k(query_id, k).iter().map(|s| s.id.as_str()).collect()
}

fn fraction_reached<'a>(
    index: &CorpusIndex,
    docs: impl Iterator<Item = &'a crate::corpus::PoolDoc>,
    selected: &HashSet<&str>,
) -> Option<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for d in docs {
        total += 1;
        if index.contains_any(&d.doc_id, selected) {
            hit += 1;
        }
    }
    (total > 0).then(|| hit as f64 / total as f64)
}

fn nonrel_docs(q: &QueryIndex, denom: NonRelDenominator) -> impl Iterator<Item = &crate::corpus::PoolDoc> {
    q.docs.iter().filter(move |d| match denom {
        NonRelDenominator::Judged => d.judgment == Judgment::NonRelevant,
        NonRelDenominator::PoolComplement => !d.judgment.is_relevant(),
    })
}

/// Fraction of relevant candidates containing a top-`k` entity. `None` when
/// the query has no relevant candidate (the query is skipped).
pub fn rel_cov(index: &CorpusIndex, run: &EntityRun, query_id: &str, k: usize) -> Result<Option<f64>> {
    let q = index.query(query_id)?;
    Ok(fraction_reached(index, q.relevant_docs(), &top_k_set(run, query_id, k)))
}

/// Fraction of non-relevant candidates containing a top-`k` entity. `None`
/// when the denominator is empty.
pub fn nonrel_cov(
    index: &CorpusIndex,
    run: &EntityRun,
    query_id: &str,
    k: usize,
    denom: NonRelDenominator,
) -> Result<Option<f64>> {
    let q = index.query(query_id)?;
    Ok(fraction_reached(index, nonrel_docs(q, denom), &top_k_set(run, query_id, k)))
}

pub fn disc_ratio(relcov: f64, nonrelcov: f64, epsilon: f64) -> f64 {
    relcov / (nonrelcov + epsilon)
}

/// Mean number of top-`k` entities in each relevant candidate that the
/// prefix reaches. `None` when no relevant candidate is reached.
pub fn mean_overlap(index: &CorpusIndex, run: &EntityRun, query_id: &str, k: usize) -> Result<Option<f64>> {
    let q = index.query(query_id)?;
    Ok(overlap_of(index, q, &top_k_set(run, query_id, k)))
}

fn overlap_of(index: &CorpusIndex, q: &QueryIndex, selected: &HashSet<&str>) -> Option<f64> {
    let overlaps: Vec<usize> = q
        .relevant_docs()
        .map(|d| index.overlap(&d.doc_id, selected))
        .filter(|&o| o > 0)
        .collect();
    (!overlaps.is_empty()).then(|| overlaps.iter().sum::<usize>() as f64 / overlaps.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCover {
    /// Entities in the order the greedy process picked them.
    pub entities: Vec<String>,
    pub coverage: f64,
}

/// Greedy minimum cover of the relevant candidates, entities as sets.
///
/// Each step takes the entity reaching the most still-uncovered relevant
/// documents (ties to the smallest entity id) and stops when no entity adds
/// coverage. Relevant documents without linked entities stay uncovered.
pub fn oracle_cover(index: &CorpusIndex, query_id: &str) -> Result<Option<OracleCover>> {
    let q = index.query(query_id)?;
    let rel: Vec<&str> = q.relevant_docs().map(|d| d.doc_id.as_str()).collect();
    if rel.is_empty() {
        return Ok(None);
    }
    let mut postings: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, d) in rel.iter().enumerate() {
        for l in index.doc_entities(d) {
            postings.entry(l.entity_id.as_str()).or_default().push(i);
        }
    }
    let mut covered = vec![false; rel.len()];
    let mut picked = Vec::new();
    let mut num_covered = 0;
    loop {
        let mut best: Option<(&str, usize)> = None;
        for (&e, docs) in &postings {
            let gain = docs.iter().filter(|&&i| !covered[i]).count();
            // strict `>` keeps the smallest id among equal gains
            if gain > 0 && best.map_or(true, |(_, g)| gain > g) {
                best = Some((e, gain));
            }
        }
        let Some((e, gain)) = best else { break };
        for &i in &postings[e] {
            covered[i] = true;
        }
        num_covered += gain;
        picked.push(e.to_string());
        postings.remove(e);
    }
    Ok(Some(OracleCover {
        entities: picked,
        coverage: num_covered as f64 / rel.len() as f64,
    }))
}

/// RelCov through core-signal entities only. With a run prefix the core
/// entities are further restricted to the top-`k` of that run.
pub fn observable_cov(
    index: &CorpusIndex,
    oer: &OerTable,
    query_id: &str,
    prefix: Option<(&EntityRun, usize)>,
) -> Result<Option<f64>> {
    let q = index.query(query_id)?;
    let mut core: HashSet<&str> = oer
        .query(query_id)
        .map(|entries| {
            entries
                .iter()
                .filter(|(_, e)| e.mode == SignalMode::Core)
                .map(|(id, _)| id.as_str())
                .collect()
        })
        .unwrap_or_default();
    if let Some((run, k)) = prefix {
        let top = top_k_set(run, query_id, k);
        core.retain(|e| top.contains(e));
    }
    Ok(fraction_reached(index, q.relevant_docs(), &core))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub query_id: String,
    pub k: usize,
    pub relcov: f64,
    pub nonrelcov: Option<f64>,
    pub discratio: Option<f64>,
    pub overlap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
    /// One row per k with query id `all`. RelCov is the coverage ceiling;
    /// NonRelCov and overlap are means over queries where they are defined;
    /// DiscRatio is computed from the two means.
    pub aggregates: Vec<CoverageRow>,
    /// Queries without a relevant candidate.
    pub skipped: Vec<String>,
}

impl CoverageReport {
    pub fn aggregate(&self, k: usize) -> Option<&CoverageRow> {
        self.aggregates.iter().find(|r| r.k == k)
    }

    pub fn ceiling(&self, k: usize) -> Option<f64> {
        self.aggregate(k).map(|r| r.relcov)
    }

    pub fn row(&self, query_id: &str, k: usize) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| r.query_id == query_id && r.k == k)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn coverage_report(
    index: &CorpusIndex,
    run: &EntityRun,
    ks: &[usize],
    opts: &CoverageOptions,
) -> CoverageReport {
    let queries: Vec<&QueryIndex> = index.queries().collect();
    let per_query: Vec<(String, Option<Vec<CoverageRow>>)> = queries
        .par_iter()
        .map(|q| {
            let qid = q.query_id.clone();
            if q.num_rel == 0 {
                return (qid, None);
            }
            let rows = ks
                .iter()
                .map(|&k| {
                    let selected = top_k_set(run, &q.query_id, k);
                    let relcov = fraction_reached(index, q.relevant_docs(), &selected)
                        .expect("query has relevant candidates");
                    let nonrelcov = fraction_reached(index, nonrel_docs(q, opts.nonrel), &selected);
                    CoverageRow {
                        query_id: qid.clone(),
                        k,
                        relcov,
                        nonrelcov,
                        discratio: nonrelcov.map(|n| disc_ratio(relcov, n, opts.epsilon)),
                        overlap: overlap_of(index, q, &selected),
                    }
                })
                .collect();
            (qid, Some(rows))
        })
        .collect();

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (qid, r) in per_query {
        match r {
            Some(r) => rows.extend(r),
            None => skipped.push(qid),
        }
    }
    if !skipped.is_empty() {
        log::warn!("{} queries without relevant candidates skipped", skipped.len());
    }

    let aggregates = ks
        .iter()
        .filter_map(|&k| {
            let at_k: Vec<&CoverageRow> = rows.iter().filter(|r| r.k == k).collect();
            let relcov = mean(at_k.iter().map(|r| r.relcov))?;
            let nonrelcov = mean(at_k.iter().filter_map(|r| r.nonrelcov));
            Some(CoverageRow {
                query_id: "all".to_string(),
                k,
                relcov,
                nonrelcov,
                discratio: nonrelcov.map(|n| disc_ratio(relcov, n, opts.epsilon)),
                overlap: mean(at_k.iter().filter_map(|r| r.overlap)),
            })
        })
        .collect();

    CoverageReport {
        rows,
        aggregates,
        skipped,
    }
}

impl Report for CoverageReport {
    fn columns(&self) -> Vec<String> {
        ["qid", "k", "relcov", "nonrelcov", "discratio", "overlap"]
            .map(String::from)
            .to_vec()
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.rows
            .iter()
            .chain(&self.aggregates)
            .map(|r| {
                vec![
                    Cell::text(&r.query_id),
                    Cell::Int(r.k as i64),
                    Cell::Real(r.relcov),
                    Cell::opt(r.nonrelcov),
                    Cell::opt(r.discratio),
                    Cell::opt(r.overlap),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub rows: Vec<(String, OracleCover)>,
    pub skipped: Vec<String>,
}

pub fn oracle_report(index: &CorpusIndex) -> OracleReport {
    let results: Vec<(String, Option<OracleCover>)> = index
        .queries()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|q| {
            let cover = oracle_cover(index, &q.query_id).expect("query comes from the index");
            (q.query_id.clone(), cover)
        })
        .collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (q, c) in results {
        match c {
            Some(c) => rows.push((q, c)),
            None => skipped.push(q),
        }
    }
    OracleReport { rows, skipped }
}

impl Report for OracleReport {
    fn columns(&self) -> Vec<String> {
        ["qid", "oracle_cov", "num_entities", "entities"]
            .map(String::from)
            .to_vec()
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        let mut out: Vec<Vec<Cell>> = self
            .rows
            .iter()
            .map(|(q, c)| {
                vec![
                    Cell::text(q),
                    Cell::Real(c.coverage),
                    Cell::Int(c.entities.len() as i64),
                    Cell::text(c.entities.join(",")),
                ]
            })
            .collect();
        if let Some(m) = mean(self.rows.iter().map(|(_, c)| c.coverage)) {
            let size = mean(self.rows.iter().map(|(_, c)| c.entities.len() as f64));
            out.push(vec![
                Cell::text("all"),
                Cell::Real(m),
                Cell::opt(size),
                Cell::text(""),
            ]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservableReport {
    /// `k` is `None` when coverage uses every core-signal entity.
    pub k: Option<usize>,
    pub rows: Vec<(String, f64)>,
    pub skipped: Vec<String>,
}

pub fn observable_report(
    index: &CorpusIndex,
    oer: &OerTable,
    prefix: Option<(&EntityRun, usize)>,
) -> ObservableReport {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for q in index.queries() {
        match observable_cov(index, oer, &q.query_id, prefix).expect("query comes from the index") {
            Some(v) => rows.push((q.query_id.clone(), v)),
            None => skipped.push(q.query_id.clone()),
        }
    }
    ObservableReport {
        k: prefix.map(|(_, k)| k),
        rows,
        skipped,
    }
}

impl Report for ObservableReport {
    fn columns(&self) -> Vec<String> {
        ["qid", "k", "obscov"].map(String::from).to_vec()
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        let k = || self.k.map_or(Cell::text("all"), |k| Cell::Int(k as i64));
        let mut out: Vec<Vec<Cell>> = self
            .rows
            .iter()
            .map(|(q, v)| vec![Cell::text(q), k(), Cell::Real(*v)])
            .collect();
        if let Some(m) = mean(self.rows.iter().map(|(_, v)| *v)) {
            out.push(vec![Cell::text("all"), k(), Cell::Real(m)]);
        }
        out
    }
}
