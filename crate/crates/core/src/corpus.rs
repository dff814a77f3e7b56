//! In-memory join of candidate pools, relevance judgments and entity links.
//!
//! Everything downstream reads a [`CorpusIndex`]. It is built once and never
//! mutated, so it can be shared across threads freely.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::run::RunRecord;

/// Graded document judgments, `(query, doc) -> grade`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    entries: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Qrels::default()
    }

    /// Inserts a judgment. Re-inserting the same grade is a no-op; a
    /// conflicting grade is rejected and the existing grade is returned.
    pub fn insert(
        &mut self,
        query_id: impl Into<String>,
        doc_id: impl Into<String>,
        grade: u32,
    ) -> std::result::Result<(), u32> {
        let slot = self
            .entries
            .entry(query_id.into())
            .or_default()
            .entry(doc_id.into());
        match slot {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(grade);
                Ok(())
            }
            std::collections::btree_map::Entry::Occupied(o) if *o.get() == grade => Ok(()),
            std::collections::btree_map::Entry::Occupied(o) => Err(*o.get()),
        }
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> Option<u32> {
        self.entries.get(query_id)?.get(doc_id).copied()
    }

    pub fn contains_query(&self, query_id: &str) -> bool {
        self.entries.contains_key(query_id)
    }

    pub fn query(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.entries.get(query_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.entries.iter().flat_map(|(q, docs)| {
            docs.iter()
                .map(move |(d, g)| (q.as_str(), d.as_str(), *g))
        })
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Grades 1 and above are relevant.
pub fn is_relevant(grade: u32) -> bool {
    grade >= 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub entity_id: String,
    pub rho: f64,
    pub mentions: u32,
}

/// Entity links per document. Each document holds at most one [`Link`] per
/// entity, sorted by entity id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntityLinks {
    docs: HashMap<String, Vec<Link>>,
}

impl EntityLinks {
    pub fn new() -> Self {
        EntityLinks::default()
    }

    /// Adds a document's links, aggregating repeated entities (rho by max,
    /// mentions by sum). Fails on a rho outside `[0, 1]`. Returns `false` if
    /// the document was already present (its links are left untouched).
    pub fn insert_doc(&mut self, doc_id: impl Into<String>, links: Vec<Link>) -> Result<bool> {
        let doc_id = doc_id.into();
        if self.docs.contains_key(&doc_id) {
            return Ok(false);
        }
        let mut merged: BTreeMap<String, Link> = BTreeMap::new();
        for link in links {
            if !(0.0..=1.0).contains(&link.rho) {
                return Err(Error::RhoOutOfRange {
                    doc: doc_id,
                    entity: link.entity_id,
                    rho: link.rho,
                });
            }
            match merged.get_mut(&link.entity_id) {
                Some(existing) => {
                    existing.rho = existing.rho.max(link.rho);
                    existing.mentions += link.mentions;
                }
                None => {
                    merged.insert(link.entity_id.clone(), link);
                }
            }
        }
        self.docs.insert(doc_id, merged.into_values().collect());
        Ok(true)
    }

    pub fn get(&self, doc_id: &str) -> Option<&[Link]> {
        self.docs.get(doc_id).map(Vec::as_slice)
    }

    pub fn contains_doc(&self, doc_id: &str) -> bool {
        self.docs.contains_key(doc_id)
    }

    /// Documents sorted by id.
    pub fn iter_sorted(&self) -> Vec<(&str, &[Link])> {
        let mut v: Vec<_> = self
            .docs
            .iter()
            .map(|(d, l)| (d.as_str(), l.as_slice()))
            .collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    /// A copy keeping only links with `rho >= min_rho`.
    pub fn filtered_by_rho(&self, min_rho: f64) -> EntityLinks {
        let docs = self
            .docs
            .iter()
            .map(|(d, links)| {
                let kept = links.iter().filter(|l| l.rho >= min_rho).cloned().collect();
                (d.clone(), kept)
            })
            .collect();
        EntityLinks { docs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub doc_id: String,
    pub rank: u32,
    pub score: f64,
}

/// First-stage candidates per query, in rank order with ranks `1..=n`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidatePool {
    pools: BTreeMap<String, Vec<PoolEntry>>,
}

impl CandidatePool {
    pub fn new() -> Self {
        CandidatePool::default()
    }

    /// Sets the pool of a query from documents in rank order. Ranks are
    /// reassigned as `1..=n`.
    pub fn insert(&mut self, query_id: impl Into<String>, docs: Vec<(String, f64)>) -> Result<()> {
        let query_id = query_id.into();
        let mut seen = HashSet::with_capacity(docs.len());
        let mut entries = Vec::with_capacity(docs.len());
        let mut prev = f64::INFINITY;
        for (i, (doc_id, score)) in docs.into_iter().enumerate() {
            let rank = i as u32 + 1;
            if !seen.insert(doc_id.clone()) {
                return Err(Error::DuplicatePoolDoc {
                    query: query_id,
                    doc: doc_id,
                });
            }
            if score > prev {
                return Err(Error::PoolOrder {
                    query: query_id,
                    rank,
                });
            }
            prev = score;
            entries.push(PoolEntry {
                doc_id,
                rank,
                score,
            });
        }
        self.pools.insert(query_id, entries);
        Ok(())
    }

    /// Builds pools from run records, ordering each query by stated rank.
    pub fn from_records(records: &[RunRecord]) -> Result<Self> {
        let mut grouped: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
        for r in records {
            grouped.entry(r.query_id.as_str()).or_default().push(r);
        }
        let mut pool = CandidatePool::new();
        for (q, mut recs) in grouped {
            recs.sort_by_key(|r| r.rank);
            pool.insert(
                q,
                recs.into_iter()
                    .map(|r| (r.item_id.clone(), r.score))
                    .collect(),
            )?;
        }
        Ok(pool)
    }

    pub fn get(&self, query_id: &str) -> Option<&[PoolEntry]> {
        self.pools.get(query_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[PoolEntry])> {
        self.pools.iter().map(|(q, v)| (q.as_str(), v.as_slice()))
    }

    pub fn num_queries(&self) -> usize {
        self.pools.len()
    }
}

/// Judgment status of a candidate document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Judgment {
    Relevant(u32),
    NonRelevant,
    Unjudged,
}

impl Judgment {
    fn from_grade(grade: Option<u32>) -> Self {
        match grade {
            Some(g) if is_relevant(g) => Judgment::Relevant(g),
            Some(_) => Judgment::NonRelevant,
            None => Judgment::Unjudged,
        }
    }

    pub fn is_relevant(self) -> bool {
        matches!(self, Judgment::Relevant(_))
    }

    pub fn is_judged(self) -> bool {
        !matches!(self, Judgment::Unjudged)
    }

    /// Graded gain; unjudged and non-relevant documents gain nothing.
    pub fn gain(self) -> u32 {
        match self {
            Judgment::Relevant(g) => g,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolDoc {
    pub doc_id: String,
    pub rank: u32,
    pub score: f64,
    pub judgment: Judgment,
}

/// Candidate-pool statistics of one entity for one query.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntityStats {
    pub df_rel: u32,
    pub df_nonrel: u32,
    pub df_cand: u32,
    /// Candidate ranks of the documents containing the entity, ascending.
    pub ranks: Vec<u32>,
    /// Link confidence in each of those documents, aligned with `ranks`.
    pub rhos: Vec<f64>,
}

impl EntityStats {
    pub fn df_unjudged(&self) -> u32 {
        self.df_cand - self.df_rel - self.df_nonrel
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryIndex {
    pub query_id: String,
    pub docs: Vec<PoolDoc>,
    pub entities: BTreeMap<String, EntityStats>,
    pub num_rel: usize,
    pub num_nonrel: usize,
    positions: HashMap<String, usize>,
}

impl QueryIndex {
    pub fn pool_size(&self) -> usize {
        self.docs.len()
    }

    pub fn num_unjudged(&self) -> usize {
        self.docs.len() - self.num_rel - self.num_nonrel
    }

    pub fn doc(&self, doc_id: &str) -> Option<&PoolDoc> {
        self.positions.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn contains_doc(&self, doc_id: &str) -> bool {
        self.positions.contains_key(doc_id)
    }

    pub fn relevant_docs(&self) -> impl Iterator<Item = &PoolDoc> {
        self.docs.iter().filter(|d| d.judgment.is_relevant())
    }

    pub fn nonrelevant_docs(&self) -> impl Iterator<Item = &PoolDoc> {
        self.docs
            .iter()
            .filter(|d| d.judgment == Judgment::NonRelevant)
    }

    pub fn stats(&self, entity_id: &str) -> Option<&EntityStats> {
        self.entities.get(entity_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WarningKind {
    /// Query had an empty candidate pool and was dropped.
    EmptyPool,
    /// Query has no judgments at all; every candidate is unjudged.
    NoQrels,
    /// Query has no relevant candidate; it is excluded from coverage and OER aggregates.
    NoRelevantInPool,
    /// A pooled document had no link record and was treated as entity-free.
    MissingLinks(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexWarning {
    pub query_id: String,
    pub kind: WarningKind,
}

#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    /// Treat pooled documents without a link record as entity-free instead of failing.
    pub lenient_links: bool,
    /// Drop links with a confidence below this value before indexing.
    pub min_rho: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CorpusIndex {
    pub qrels: Qrels,
    pub pools: CandidatePool,
    pub links: EntityLinks,
    pub warnings: Vec<IndexWarning>,
    queries: BTreeMap<String, QueryIndex>,
}

pub fn build_index(qrels: Qrels, pools: CandidatePool, links: EntityLinks) -> Result<CorpusIndex> {
    build_index_with(qrels, pools, links, &BuildOptions::default())
}

pub fn build_index_with(
    qrels: Qrels,
    pools: CandidatePool,
    links: EntityLinks,
    opts: &BuildOptions,
) -> Result<CorpusIndex> {
    let links = match opts.min_rho {
        Some(t) => links.filtered_by_rho(t),
        None => links,
    };
    let mut warnings = Vec::new();
    let mut queries = BTreeMap::new();

    for (qid, entries) in pools.iter() {
        if entries.is_empty() {
            log::warn!("query {qid}: empty candidate pool, dropped");
            warnings.push(IndexWarning {
                query_id: qid.to_string(),
                kind: WarningKind::EmptyPool,
            });
            continue;
        }
        if !qrels.contains_query(qid) {
            log::warn!("query {qid}: no relevance judgments; all candidates unjudged");
            warnings.push(IndexWarning {
                query_id: qid.to_string(),
                kind: WarningKind::NoQrels,
            });
        }

        let mut docs = Vec::with_capacity(entries.len());
        let mut positions = HashMap::with_capacity(entries.len());
        let mut entities: BTreeMap<String, EntityStats> = BTreeMap::new();
        let (mut num_rel, mut num_nonrel) = (0, 0);

        for (i, e) in entries.iter().enumerate() {
            let judgment = Judgment::from_grade(qrels.grade(qid, &e.doc_id));
            match judgment {
                Judgment::Relevant(_) => num_rel += 1,
                Judgment::NonRelevant => num_nonrel += 1,
                Judgment::Unjudged => {}
            }
            let doc_links = match links.get(&e.doc_id) {
                Some(l) => l,
                None if opts.lenient_links => {
                    warnings.push(IndexWarning {
                        query_id: qid.to_string(),
                        kind: WarningKind::MissingLinks(e.doc_id.clone()),
                    });
                    &[]
                }
                None => return Err(Error::MissingLinks(e.doc_id.clone())),
            };
            for link in doc_links {
                let s = entities.entry(link.entity_id.clone()).or_default();
                s.df_cand += 1;
                match judgment {
                    Judgment::Relevant(_) => s.df_rel += 1,
                    Judgment::NonRelevant => s.df_nonrel += 1,
                    Judgment::Unjudged => {}
                }
                s.ranks.push(e.rank);
                s.rhos.push(link.rho);
            }
            positions.insert(e.doc_id.clone(), i);
            docs.push(PoolDoc {
                doc_id: e.doc_id.clone(),
                rank: e.rank,
                score: e.score,
                judgment,
            });
        }

        if num_rel == 0 {
            warnings.push(IndexWarning {
                query_id: qid.to_string(),
                kind: WarningKind::NoRelevantInPool,
            });
        }

        queries.insert(
            qid.to_string(),
            QueryIndex {
                query_id: qid.to_string(),
                docs,
                entities,
                num_rel,
                num_nonrel,
                positions,
            },
        );
    }

    Ok(CorpusIndex {
        qrels,
        pools,
        links,
        warnings,
        queries,
    })
}

impl CorpusIndex {
    pub fn query(&self, query_id: &str) -> Result<&QueryIndex> {
        self.queries
            .get(query_id)
            .ok_or_else(|| Error::UnknownQuery(query_id.to_string()))
    }

    pub fn queries(&self) -> impl Iterator<Item = &QueryIndex> {
        self.queries.values()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.queries.keys().map(String::as_str)
    }

    pub fn num_queries(&self) -> usize {
        self.queries.len()
    }

    /// Linked entities of a document; documents without a record have none.
    pub fn doc_entities(&self, doc_id: &str) -> &[Link] {
        self.links.get(doc_id).unwrap_or(&[])
    }

    /// Whether the document's linked entities intersect `entity_set`.
    pub fn entity_presence<S>(
        &self,
        query_id: &str,
        doc_id: &str,
        entity_set: &HashSet<S>,
    ) -> Result<bool>
    where
        S: std::hash::Hash + Eq + std::borrow::Borrow<str>,
    {
        let q = self.query(query_id)?;
        if !q.contains_doc(doc_id) {
            return Err(Error::UnknownDoc {
                query: query_id.to_string(),
                doc: doc_id.to_string(),
            });
        }
        Ok(self.contains_any(doc_id, entity_set))
    }

    /// Presence test without the pool-membership check.
    pub fn contains_any<S>(&self, doc_id: &str, entity_set: &HashSet<S>) -> bool
    where
        S: std::hash::Hash + Eq + std::borrow::Borrow<str>,
    {
        !entity_set.is_empty()
            && self
                .doc_entities(doc_id)
                .iter()
                .any(|l| entity_set.contains(l.entity_id.as_str()))
    }

    /// Number of the document's entities that are in `entity_set`.
    pub fn overlap<S>(&self, doc_id: &str, entity_set: &HashSet<S>) -> usize
    where
        S: std::hash::Hash + Eq + std::borrow::Borrow<str>,
    {
        self.doc_entities(doc_id)
            .iter()
            .filter(|l| entity_set.contains(l.entity_id.as_str()))
            .count()
    }

    /// Recounts every per-(query, entity) statistic from the raw pools,
    /// judgments and links, and compares with the stored table.
    pub fn verify_stats(&self) -> bool {
        self.queries.values().all(|q| {
            let mut recount: BTreeMap<String, EntityStats> = BTreeMap::new();
            for d in &q.docs {
                for l in self.doc_entities(&d.doc_id) {
                    let s = recount.entry(l.entity_id.clone()).or_default();
                    s.df_cand += 1;
                    match Judgment::from_grade(self.qrels.grade(&q.query_id, &d.doc_id)) {
                        Judgment::Relevant(_) => s.df_rel += 1,
                        Judgment::NonRelevant => s.df_nonrel += 1,
                        Judgment::Unjudged => {}
                    }
                    s.ranks.push(d.rank);
                    s.rhos.push(l.rho);
                }
            }
            recount == q.entities
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(e: &str, rho: f64) -> Link {
        Link {
            entity_id: e.to_string(),
            rho,
            mentions: 1,
        }
    }

    fn pool(q: &str, docs: &[&str]) -> CandidatePool {
        let mut p = CandidatePool::new();
        let n = docs.len();
        p.insert(
            q,
            docs.iter()
                .enumerate()
                .map(|(i, d)| (d.to_string(), (n - i) as f64))
                .collect(),
        )
        .unwrap();
        p
    }

    #[test]
    fn df_counts_separate_judged_and_unjudged() {
        let mut qrels = Qrels::new();
        qrels.insert("q", "d1", 1).unwrap();
        qrels.insert("q", "d2", 0).unwrap();
        let mut links = EntityLinks::new();
        for d in ["d1", "d2", "d3"] {
            links.insert_doc(d, vec![link("e", 0.5)]).unwrap();
        }
        let idx = build_index(qrels, pool("q", &["d1", "d2", "d3"]), links).unwrap();
        let s = idx.query("q").unwrap().stats("e").unwrap();
        assert_eq!((s.df_rel, s.df_nonrel, s.df_cand), (1, 1, 3));
        assert_eq!(s.df_unjudged(), 1);
        assert_eq!(s.ranks, vec![1, 2, 3]);
        assert!(idx.verify_stats());
    }

    #[test]
    fn empty_links_give_empty_stats() {
        let mut qrels = Qrels::new();
        qrels.insert("q", "d1", 1).unwrap();
        let mut links = EntityLinks::new();
        links.insert_doc("d1", vec![]).unwrap();
        links.insert_doc("d2", vec![]).unwrap();
        let idx = build_index(qrels, pool("q", &["d1", "d2"]), links).unwrap();
        assert!(idx.query("q").unwrap().entities.is_empty());
        assert!(idx.verify_stats());
    }

    #[test]
    fn grade_two_is_relevant() {
        let mut qrels = Qrels::new();
        qrels.insert("q", "d1", 2).unwrap();
        let mut links = EntityLinks::new();
        links.insert_doc("d1", vec![]).unwrap();
        let idx = build_index(qrels, pool("q", &["d1"]), links).unwrap();
        let q = idx.query("q").unwrap();
        assert_eq!(q.num_rel, 1);
        assert_eq!(q.doc("d1").unwrap().judgment, Judgment::Relevant(2));
    }

    #[test]
    fn missing_links_is_an_error_unless_lenient() {
        let qrels = Qrels::new();
        let links = EntityLinks::new();
        let err = build_index(qrels.clone(), pool("q", &["d1"]), links.clone()).unwrap_err();
        assert!(matches!(err, Error::MissingLinks(_)));
        let opts = BuildOptions {
            lenient_links: true,
            ..Default::default()
        };
        let idx = build_index_with(qrels, pool("q", &["d1"]), links, &opts).unwrap();
        assert!(idx
            .warnings
            .iter()
            .any(|w| w.kind == WarningKind::MissingLinks("d1".into())));
        assert!(idx.warnings.iter().any(|w| w.kind == WarningKind::NoQrels));
    }

    #[test]
    fn duplicate_pool_doc_rejected() {
        let mut p = CandidatePool::new();
        let err = p
            .insert("q", vec![("d1".into(), 2.0), ("d1".into(), 1.0)])
            .unwrap_err();
        assert!(matches!(err, Error::DuplicatePoolDoc { .. }));
    }

    #[test]
    fn increasing_scores_rejected() {
        let mut p = CandidatePool::new();
        let err = p
            .insert("q", vec![("d1".into(), 1.0), ("d2".into(), 2.0)])
            .unwrap_err();
        assert!(matches!(err, Error::PoolOrder { rank: 2, .. }));
    }

    #[test]
    fn rho_out_of_range_rejected() {
        let mut links = EntityLinks::new();
        let err = links.insert_doc("d", vec![link("e", 1.2)]).unwrap_err();
        assert!(matches!(err, Error::RhoOutOfRange { .. }));
    }

    #[test]
    fn repeated_entity_is_aggregated() {
        let mut links = EntityLinks::new();
        links
            .insert_doc("d", vec![link("e", 0.4), link("e", 0.7)])
            .unwrap();
        let l = links.get("d").unwrap();
        assert_eq!(l.len(), 1);
        assert_eq!(l[0].rho, 0.7);
        assert_eq!(l[0].mentions, 2);
    }

    #[test]
    fn empty_pool_dropped_with_warning() {
        let mut p = CandidatePool::new();
        p.insert("q", vec![]).unwrap();
        let idx = build_index(Qrels::new(), p, EntityLinks::new()).unwrap();
        assert_eq!(idx.num_queries(), 0);
        assert_eq!(idx.warnings[0].kind, WarningKind::EmptyPool);
    }

    #[test]
    fn rho_threshold_filters_links() {
        let mut qrels = Qrels::new();
        qrels.insert("q", "d1", 1).unwrap();
        let mut links = EntityLinks::new();
        links
            .insert_doc("d1", vec![link("a", 0.2), link("b", 0.9)])
            .unwrap();
        let opts = BuildOptions {
            min_rho: Some(0.5),
            ..Default::default()
        };
        let idx = build_index_with(qrels, pool("q", &["d1"]), links, &opts).unwrap();
        let q = idx.query("q").unwrap();
        assert!(q.stats("a").is_none());
        assert!(q.stats("b").is_some());
    }

    #[test]
    fn conflicting_grade_rejected() {
        let mut qrels = Qrels::new();
        qrels.insert("q", "d", 1).unwrap();
        assert!(qrels.insert("q", "d", 1).is_ok());
        assert_eq!(qrels.insert("q", "d", 0), Err(1));
    }

    #[test]
    fn presence() {
        let mut qrels = Qrels::new();
        qrels.insert("q", "d1", 1).unwrap();
        let mut links = EntityLinks::new();
        links
            .insert_doc("d1", vec![link("a", 0.5), link("b", 0.5)])
            .unwrap();
        links.insert_doc("d2", vec![]).unwrap();
        let idx = build_index(qrels, pool("q", &["d1", "d2"]), links).unwrap();
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<HashSet<String>>();
        assert!(idx.entity_presence("q", "d1", &set(&["b", "c"])).unwrap());
        assert!(!idx.entity_presence("q", "d2", &set(&["a"])).unwrap());
        assert!(!idx.entity_presence("q", "d1", &set(&[])).unwrap());
        assert!(matches!(
            idx.entity_presence("q", "d9", &set(&["a"])),
            Err(Error::UnknownDoc { .. })
        ));
    }
}
