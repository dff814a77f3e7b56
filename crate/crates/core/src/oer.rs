//! Observable entity relevance.
//!
//! OER asks whether an entity's *linked presence* in the candidate pool
//! separates relevant from non-relevant documents:
//!
//! ```text
//! p_rel    = (df_rel    + alpha) / (|R|  + 2 alpha)
//! p_nonrel = (df_nonrel + alpha) / (|NR| + 2 alpha)
//! w        = 1 - exp(-df_cand / tau_support)
//! oer      = w * (logit(p_rel) - logit(p_nonrel))
//! ```
//!
//! `|R|` counts relevant candidates and `|NR|` judged non-relevant ones;
//! unjudged candidates only enter `df_cand`. All logarithms are natural.
//! OER is a diagnostic: it is computed from the same judgments used for
//! evaluation and is not meant as a training target.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::corpus::{CorpusIndex, EntityStats};
use crate::error::{Error, Result};
use crate::run::{sort_canonical, EntityRun, Run, Scored};
use crate::trec::{Cell, Report};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OerConfig {
    /// Laplace smoothing constant.
    pub alpha: f64,
    /// Decay of the support weight in `df_cand`.
    pub tau_support: f64,
    pub core_oer_min: f64,
    pub core_df_rel_min: u32,
    pub bait_df_cand_min: u32,
    pub sparse_df_cand_max: u32,
}

impl Default for OerConfig {
    fn default() -> Self {
        OerConfig {
            alpha: 1.0,
            tau_support: 3.0,
            core_oer_min: 0.5,
            core_df_rel_min: 2,
            bait_df_cand_min: 50,
            sparse_df_cand_max: 2,
        }
    }
}

impl OerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.tau_support > 0.0 && self.core_oer_min > 0.0) {
            return Err(Error::invalid(
                "alpha, tau_support and core_oer_min must be strictly positive",
            ));
        }
        if self.core_df_rel_min == 0 || self.bait_df_cand_min == 0 || self.sparse_df_cand_max == 0 {
            return Err(Error::invalid("taxonomy count thresholds must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OerScore {
    pub p_rel: f64,
    pub p_nonrel: f64,
    pub log_odds_diff: f64,
    pub support: f64,
    pub oer: f64,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn support_weight(df_cand: u32, tau_support: f64) -> f64 {
    1.0 - (-(df_cand as f64) / tau_support).exp()
}

/// OER of one `(query, entity)` statistic. `None` when either class of the
/// pool is empty.
pub fn oer_score(stats: &EntityStats, num_rel: usize, num_nonrel: usize, cfg: &OerConfig) -> Option<OerScore> {
    if num_rel == 0 || num_nonrel == 0 {
        return None;
    }
    let a = cfg.alpha;
    let p_rel = (stats.df_rel as f64 + a) / (num_rel as f64 + 2.0 * a);
    let p_nonrel = (stats.df_nonrel as f64 + a) / (num_nonrel as f64 + 2.0 * a);
    let log_odds_diff = logit(p_rel) - logit(p_nonrel);
    let support = support_weight(stats.df_cand, cfg.tau_support);
    Some(OerScore {
        p_rel,
        p_nonrel,
        log_odds_diff,
        support,
        oer: support * log_odds_diff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SignalMode {
    Core,
    Conditional,
    Bait,
    Anti,
    Sparse,
}

impl SignalMode {
    pub const ALL: [SignalMode; 5] = [
        SignalMode::Core,
        SignalMode::Conditional,
        SignalMode::Bait,
        SignalMode::Anti,
        SignalMode::Sparse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SignalMode::Core => "core",
            SignalMode::Conditional => "conditional",
            SignalMode::Bait => "bait",
            SignalMode::Anti => "anti",
            SignalMode::Sparse => "sparse",
        }
    }

    pub fn is_signal(self) -> bool {
        matches!(self, SignalMode::Core | SignalMode::Conditional)
    }

    /// Generic bait or anti-signal.
    pub fn is_bait(self) -> bool {
        matches!(self, SignalMode::Bait | SignalMode::Anti)
    }
}

impl fmt::Display for SignalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SignalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SignalMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown signal mode `{s}`")))
    }
}

/// Assigns exactly one mode. Rules are tried in order: sparse, core, bait,
/// anti, then conditional for any remaining positive OER. A non-positive OER
/// matching none of the rules is anti when `df_nonrel >= df_rel` and
/// conditional otherwise.
pub fn classify_mode(stats: &EntityStats, oer: f64, cfg: &OerConfig) -> SignalMode {
    if stats.df_cand <= cfg.sparse_df_cand_max {
        SignalMode::Sparse
    } else if stats.df_rel >= cfg.core_df_rel_min && stats.df_rel > stats.df_nonrel && oer >= cfg.core_oer_min {
        SignalMode::Core
    } else if oer <= 0.0 && stats.df_cand >= cfg.bait_df_cand_min {
        SignalMode::Bait
    } else if oer < 0.0 && stats.df_nonrel > stats.df_rel {
        SignalMode::Anti
    } else if oer > 0.0 {
        SignalMode::Conditional
    } else if stats.df_nonrel >= stats.df_rel {
        SignalMode::Anti
    } else {
        SignalMode::Conditional
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OerEntry {
    pub df_rel: u32,
    pub df_nonrel: u32,
    pub df_cand: u32,
    pub score: OerScore,
    pub mode: SignalMode,
}

impl OerEntry {
    pub fn oer(&self) -> f64 {
        self.score.oer
    }
}

/// OER and mode for every `(query, entity)` pair of the index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OerTable {
    entries: BTreeMap<String, BTreeMap<String, OerEntry>>,
    /// Queries with no relevant or no judged non-relevant candidate.
    pub skipped: Vec<String>,
}

impl OerTable {
    pub fn get(&self, query_id: &str, entity_id: &str) -> Option<&OerEntry> {
        self.entries.get(query_id)?.get(entity_id)
    }

    pub fn query(&self, query_id: &str) -> Option<&BTreeMap<String, OerEntry>> {
        self.entries.get(query_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &OerEntry)> {
        self.entries.iter().flat_map(|(q, es)| {
            es.iter().map(move |(e, entry)| (q.as_str(), e.as_str(), entry))
        })
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mode of a pair; pairs without statistics have no support and are sparse.
    pub fn mode(&self, query_id: &str, entity_id: &str) -> SignalMode {
        self.get(query_id, entity_id)
            .map_or(SignalMode::Sparse, |e| e.mode)
    }
}

pub fn build_oer_table(index: &CorpusIndex, cfg: &OerConfig) -> OerTable {
    let queries: Vec<_> = index.queries().collect();
    let per_query: Vec<(String, Option<BTreeMap<String, OerEntry>>)> = queries
        .par_iter()
        .map(|q| {
            if q.num_rel == 0 || q.num_nonrel == 0 {
                return (q.query_id.clone(), None);
            }
            let entries = q
                .entities
                .iter()
                .map(|(e, s)| {
                    let score = oer_score(s, q.num_rel, q.num_nonrel, cfg).expect("both classes non-empty");
                    let entry = OerEntry {
                        df_rel: s.df_rel,
                        df_nonrel: s.df_nonrel,
                        df_cand: s.df_cand,
                        mode: classify_mode(s, score.oer, cfg),
                        score,
                    };
                    (e.clone(), entry)
                })
                .collect();
            (q.query_id.clone(), Some(entries))
        })
        .collect();

    let mut table = OerTable::default();
    for (q, entries) in per_query {
        match entries {
            Some(e) => {
                table.entries.insert(q, e);
            }
            None => table.skipped.push(q),
        }
    }
    table
}

impl Report for OerTable {
    fn columns(&self) -> Vec<String> {
        ["qid", "entity", "df_rel", "df_nonrel", "df_cand", "oer", "mode"]
            .map(String::from)
            .to_vec()
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.iter()
            .map(|(q, e, entry)| {
                vec![
                    Cell::text(q),
                    Cell::text(e),
                    Cell::Int(entry.df_rel.into()),
                    Cell::Int(entry.df_nonrel.into()),
                    Cell::Int(entry.df_cand.into()),
                    Cell::Real(entry.score.oer),
                    Cell::text(entry.mode.as_str()),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRates {
    pub k: usize,
    pub slots: usize,
    pub bait_rate: f64,
    pub signal_rate: f64,
    pub sparse_rate: f64,
    pub top1_bait_rate: f64,
}

/// Bait, signal and sparse shares over all top-`k` slots of a run, and the
/// share of queries whose first entity is bait or anti-signal.
pub fn run_rates(run: &EntityRun, table: &OerTable, k: usize) -> Result<RunRates> {
    let (mut bait, mut signal, mut sparse, mut slots) = (0usize, 0usize, 0usize, 0usize);
    let (mut top1_bait, mut queries) = (0usize, 0usize);
    for (q, items) in run.iter() {
        let prefix = &items[..k.min(items.len())];
        if prefix.is_empty() {
            continue;
        }
        queries += 1;
        for (i, s) in prefix.iter().enumerate() {
            let mode = table.mode(q, &s.id);
            slots += 1;
            if mode.is_bait() {
                bait += 1;
                if i == 0 {
                    top1_bait += 1;
                }
            } else if mode.is_signal() {
                signal += 1;
            } else {
                sparse += 1;
            }
        }
    }
    if slots == 0 {
        return Err(Error::invalid("entity run has no top-k entities"));
    }
    let n = slots as f64;
    Ok(RunRates {
        k,
        slots,
        bait_rate: bait as f64 / n,
        signal_rate: signal as f64 / n,
        sparse_rate: sparse as f64 / n,
        top1_bait_rate: top1_bait as f64 / queries as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatesReport {
    pub run_name: String,
    pub rates: Vec<RunRates>,
}

impl Report for RatesReport {
    fn columns(&self) -> Vec<String> {
        ["run", "k", "slots", "bait_rate", "signal_rate", "sparse_rate", "top1_bait_rate"]
            .map(String::from)
            .to_vec()
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.rates
            .iter()
            .map(|r| {
                vec![
                    Cell::text(&self.run_name),
                    Cell::Int(r.k as i64),
                    Cell::Int(r.slots as i64),
                    Cell::Real(r.bait_rate),
                    Cell::Real(r.signal_rate),
                    Cell::Real(r.sparse_rate),
                    Cell::Real(r.top1_bait_rate),
                ]
            })
            .collect()
    }
}

/// `ln((n + 1) / (df + 1)) + 1`
pub fn local_idf(pool_size: usize, df_cand: u32) -> f64 {
    ((pool_size as f64 + 1.0) / (df_cand as f64 + 1.0)).ln() + 1.0
}

/// Rescales one query's entity scores by their in-pool IDF. Entities absent
/// from the pool score zero. The list is re-sorted canonically.
pub fn local_idf_rescale(run: &EntityRun, index: &CorpusIndex, query_id: &str) -> Result<Vec<Scored>> {
    let q = index.query(query_id)?;
    let n = q.pool_size();
    let mut out: Vec<Scored> = run
        .get(query_id)
        .iter()
        .map(|s| {
            let score = match q.stats(&s.id) {
                Some(st) if st.df_cand > 0 => s.score * local_idf(n, st.df_cand),
                _ => 0.0,
            };
            Scored::new(s.id.clone(), score)
        })
        .collect();
    sort_canonical(&mut out);
    Ok(out)
}

/// Rescales every query of the run that the index knows about.
pub fn local_idf_rescale_run(run: &EntityRun, index: &CorpusIndex) -> Run {
    run.queries()
        .filter(|q| index.query(q).is_ok())
        .map(|q| {
            let items = local_idf_rescale(run, index, q).expect("query checked above");
            (q.to_string(), items)
        })
        .collect()
}

/// Keeps entities with `oer >= threshold` in their original order. Entities
/// without an OER entry are dropped. Returns the filtered run and the
/// queries left with no entities.
pub fn oer_filter(run: &EntityRun, table: &OerTable, threshold: f64) -> (Run, Vec<String>) {
    let mut emptied = Vec::new();
    let filtered = run
        .iter()
        .map(|(q, items)| {
            let kept: Vec<Scored> = items
                .iter()
                .filter(|s| table.get(q, &s.id).is_some_and(|e| e.score.oer >= threshold))
                .cloned()
                .collect();
            if kept.is_empty() && !items.is_empty() {
                emptied.push(q.to_string());
            }
            (q.to_string(), kept)
        })
        .collect();
    (filtered, emptied)
}
