//! Binary entity labels derived from document judgments.
//!
//! For each query an entity seen only in relevant candidates is a positive,
//! one seen only in judged non-relevant candidates is a negative, and one
//! seen in both is "common" and dropped from the emitted labels. Entities
//! found only in unjudged candidates belong to no partition.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::corpus::{CorpusIndex, Qrels};
use crate::oer::OerTable;
use crate::trec::{Cell, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Partition {
    Positive,
    Negative,
    Common,
}

impl Partition {
    pub fn of(df_rel: u32, df_nonrel: u32) -> Option<Partition> {
        match (df_rel > 0, df_nonrel > 0) {
            (true, false) => Some(Partition::Positive),
            (false, true) => Some(Partition::Negative),
            (true, true) => Some(Partition::Common),
            (false, false) => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Positive => "positive",
            Partition::Negative => "negative",
            Partition::Common => "common",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub entity_id: String,
    pub df_rel: u32,
    pub df_nonrel: u32,
    pub df_cand: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryPartition {
    pub positives: Vec<Member>,
    pub negatives: Vec<Member>,
    pub common: Vec<Member>,
}

impl QueryPartition {
    pub fn members(&self, p: Partition) -> &[Member] {
        match p {
            Partition::Positive => &self.positives,
            Partition::Negative => &self.negatives,
            Partition::Common => &self.common,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntityPartition {
    pub queries: BTreeMap<String, QueryPartition>,
}

impl EntityPartition {
    pub fn count(&self, p: Partition) -> usize {
        self.queries.values().map(|q| q.members(p).len()).sum()
    }

    /// `|E-| / |E+|`, `None` without positives.
    pub fn imbalance(&self) -> Option<f64> {
        let pos = self.count(Partition::Positive);
        (pos > 0).then(|| self.count(Partition::Negative) as f64 / pos as f64)
    }

    pub fn iter(&self, p: Partition) -> impl Iterator<Item = (&str, &Member)> {
        self.queries
            .iter()
            .flat_map(move |(q, qp)| qp.members(p).iter().map(move |m| (q.as_str(), m)))
    }
}

/// Partitions every query's entities and emits entity qrels (positives 1,
/// negatives 0).
pub fn derive_binary_qrels(index: &CorpusIndex) -> (EntityPartition, Qrels) {
    let mut partition = EntityPartition::default();
    let mut qrels = Qrels::new();
    for q in index.queries() {
        let mut qp = QueryPartition::default();
        for (e, s) in &q.entities {
            let Some(p) = Partition::of(s.df_rel, s.df_nonrel) else {
                continue;
            };
            let m = Member {
                entity_id: e.clone(),
                df_rel: s.df_rel,
                df_nonrel: s.df_nonrel,
                df_cand: s.df_cand,
            };
            match p {
                Partition::Positive => {
                    let _ = qrels.insert(q.query_id.clone(), e.clone(), 1);
                    qp.positives.push(m);
                }
                Partition::Negative => {
                    let _ = qrels.insert(q.query_id.clone(), e.clone(), 0);
                    qp.negatives.push(m);
                }
                Partition::Common => qp.common.push(m),
            }
        }
        partition.queries.insert(q.query_id.clone(), qp);
    }
    (partition, qrels)
}

/// IDF over the union of all candidate pools: `ln(N / df)`, with `N` the
/// number of distinct pooled documents. This stands in for collection IDF
/// when only pooled documents are available, so its scale differs.
pub fn pool_collection_idf(index: &CorpusIndex) -> HashMap<String, f64> {
    let docs: HashSet<&str> = index
        .queries()
        .flat_map(|q| q.docs.iter().map(|d| d.doc_id.as_str()))
        .collect();
    let mut df: HashMap<String, u32> = HashMap::new();
    for d in &docs {
        for l in index.doc_entities(d) {
            *df.entry(l.entity_id.clone()).or_default() += 1;
        }
    }
    let n = docs.len() as f64;
    df.into_iter()
        .map(|(e, c)| (e, (n / c as f64).ln()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSummary {
    pub partition: Partition,
    pub count: usize,
    pub mean_df_cand: Option<f64>,
    pub median_df_cand: Option<f64>,
    pub mean_pool_idf: Option<f64>,
    /// Common partition only.
    pub positive_fraction: Option<f64>,
    pub mean_log_odds: Option<f64>,
    pub median_log_odds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionStats {
    pub summaries: Vec<PartitionSummary>,
    pub imbalance: Option<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

/// Summary statistics of log-odds differences: (fraction > 0, mean, median).
pub fn log_odds_summary(values: &[f64]) -> (Option<f64>, Option<f64>, Option<f64>) {
    let positive = (!values.is_empty())
        .then(|| values.iter().filter(|&&v| v > 0.0).count() as f64 / values.len() as f64);
    (positive, mean(values), median(values))
}

/// Per-partition counts and frequency summaries; for common entities also the
/// share with a positive log-odds difference. `idf` is optional.
pub fn partition_stats(
    partition: &EntityPartition,
    oer: &OerTable,
    idf: Option<&HashMap<String, f64>>,
) -> PartitionStats {
    let summaries = [Partition::Positive, Partition::Negative, Partition::Common]
        .into_iter()
        .map(|p| {
            let members: Vec<(&str, &Member)> = partition.iter(p).collect();
            let df: Vec<f64> = members.iter().map(|(_, m)| m.df_cand as f64).collect();
            let idfs: Vec<f64> = idf
                .map(|t| members.iter().filter_map(|(_, m)| t.get(&m.entity_id).copied()).collect())
                .unwrap_or_default();
            let (positive_fraction, mean_log_odds, median_log_odds) = if p == Partition::Common {
                let lo: Vec<f64> = members
                    .iter()
                    .filter_map(|(q, m)| oer.get(q, &m.entity_id))
                    .map(|e| e.score.log_odds_diff)
                    .collect();
                log_odds_summary(&lo)
            } else {
                (None, None, None)
            };
            PartitionSummary {
                partition: p,
                count: members.len(),
                mean_df_cand: mean(&df),
                median_df_cand: median(&df),
                mean_pool_idf: mean(&idfs),
                positive_fraction,
                mean_log_odds,
                median_log_odds,
            }
        })
        .collect();
    PartitionStats {
        summaries,
        imbalance: partition.imbalance(),
    }
}

impl Report for PartitionStats {
    fn columns(&self) -> Vec<String> {
        [
            "partition",
            "count",
            "mean_df_cand",
            "median_df_cand",
            "mean_pool_idf",
            "positive_fraction",
            "mean_log_odds",
            "median_log_odds",
            "imbalance",
        ]
        .map(String::from)
        .to_vec()
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.summaries
            .iter()
            .map(|s| {
                vec![
                    Cell::text(s.partition.as_str()),
                    Cell::Int(s.count as i64),
                    Cell::opt(s.mean_df_cand),
                    Cell::opt(s.median_df_cand),
                    Cell::opt(s.mean_pool_idf),
                    Cell::opt(s.positive_fraction),
                    Cell::opt(s.mean_log_odds),
                    Cell::opt(s.median_log_odds),
                    Cell::opt(self.imbalance),
                ]
            })
            .collect()
    }
}
