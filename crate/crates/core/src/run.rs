//! Ranked lists keyed by query. The same structure carries document runs and
//! entity runs; only the meaning of the item ids differs.

use std::cmp::Ordering;
use std::collections::BTreeMap;

/// One line of a TREC run file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub query_id: String,
    pub item_id: String,
    pub rank: u32,
    pub score: f64,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub id: String,
    pub score: f64,
}

impl Scored {
    pub fn new(id: impl Into<String>, score: f64) -> Self {
        Scored {
            id: id.into(),
            score,
        }
    }
}

/// Canonical ordering used everywhere a list is (re)ranked: score descending,
/// then id descending.
pub fn canonical_cmp(a: &Scored, b: &Scored) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| b.id.cmp(&a.id))
}

pub fn sort_canonical(items: &mut [Scored]) {
    items.sort_by(canonical_cmp);
}

/// Per-query ranked lists. Position `i` in a list has rank `i + 1`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    lists: BTreeMap<String, Vec<Scored>>,
}

pub type EntityRun = Run;
pub type DocRun = Run;

impl Run {
    pub fn new() -> Self {
        Run::default()
    }

    /// Builds a run from records, ordering each query by its stated rank.
    pub fn from_records(records: &[RunRecord]) -> Self {
        let mut grouped: BTreeMap<String, Vec<&RunRecord>> = BTreeMap::new();
        for r in records {
            grouped.entry(r.query_id.clone()).or_default().push(r);
        }
        let lists = grouped
            .into_iter()
            .map(|(q, mut recs)| {
                recs.sort_by_key(|r| r.rank);
                let items = recs
                    .into_iter()
                    .map(|r| Scored::new(r.item_id.clone(), r.score))
                    .collect();
                (q, items)
            })
            .collect();
        Run { lists }
    }

    pub fn to_records(&self, tag: &str) -> Vec<RunRecord> {
        self.lists
            .iter()
            .flat_map(|(q, items)| {
                items.iter().enumerate().map(move |(i, s)| RunRecord {
                    query_id: q.clone(),
                    item_id: s.id.clone(),
                    rank: i as u32 + 1,
                    score: s.score,
                    tag: tag.to_string(),
                })
            })
            .collect()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, items: Vec<Scored>) {
        self.lists.insert(query_id.into(), items);
    }

    pub fn get(&self, query_id: &str) -> &[Scored] {
        self.lists.get(query_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains_query(&self, query_id: &str) -> bool {
        self.lists.contains_key(query_id)
    }

    /// The top-`k` prefix, or the whole list when it is shorter than `k`.
    pub fn top_k(&self, query_id: &str, k: usize) -> &[Scored] {
        let items = self.get(query_id);
        &items[..k.min(items.len())]
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.lists.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Scored])> {
        self.lists.iter().map(|(q, v)| (q.as_str(), v.as_slice()))
    }

    pub fn num_queries(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.values().all(Vec::is_empty)
    }

    pub fn len(&self) -> usize {
        self.lists.values().map(Vec::len).sum()
    }
}

impl FromIterator<(String, Vec<Scored>)> for Run {
    fn from_iter<T: IntoIterator<Item = (String, Vec<Scored>)>>(iter: T) -> Self {
        Run {
            lists: iter.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_breaks_ties_by_id_descending() {
        let mut items = vec![
            Scored::new("a", 1.0),
            Scored::new("c", 2.0),
            Scored::new("b", 1.0),
        ];
        sort_canonical(&mut items);
        let ids: Vec<_> = items.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["c", "b", "a"]);
    }

    #[test]
    fn top_k_saturates() {
        let mut run = Run::new();
        run.insert("q", vec![Scored::new("e1", 2.0), Scored::new("e2", 1.0)]);
        assert_eq!(run.top_k("q", 1).len(), 1);
        assert_eq!(run.top_k("q", 50).len(), 2);
        assert!(run.top_k("missing", 5).is_empty());
    }

    #[test]
    fn records_round_trip_through_run() {
        let mut run = Run::new();
        run.insert("301", vec![Scored::new("d2", 3.5), Scored::new("d1", 1.0)]);
        let recs = run.to_records("t");
        assert_eq!(recs[1].rank, 2);
        assert_eq!(Run::from_records(&recs), run);
    }
}
