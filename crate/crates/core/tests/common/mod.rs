//! Small random instances and brute-force metric oracles shared by the
//! integration tests. The oracles work on the raw instance data and never
//! call into the library's metric code.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use entchan::corpus::{build_index, CandidatePool, CorpusIndex, EntityLinks, Link, Qrels};
use entchan::run::{Run, Scored};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Instance {
    /// `(qid, doc, grade)`; missing pairs are unjudged.
    pub judgments: Vec<(String, String, u32)>,
    /// Per query, docs in pool order with non-increasing scores.
    pub pools: Vec<(String, Vec<(String, f64)>)>,
    pub links: BTreeMap<String, Vec<(String, f64, u32)>>,
    /// Per query, entities in rank order.
    pub entity_run: Vec<(String, Vec<(String, f64)>)>,
    /// Per query, documents in arbitrary order with possibly tied scores.
    pub doc_run: Vec<(String, Vec<(String, f64)>)>,
}

impl Instance {
    /// At most 20 documents and 10 distinct entities per query.
    pub fn random(seed: u64) -> Instance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nq = rng.gen_range(1..=3);
        let mut inst = Instance {
            judgments: Vec::new(),
            pools: Vec::new(),
            links: BTreeMap::new(),
            entity_run: Vec::new(),
            doc_run: Vec::new(),
        };
        let vocab: Vec<String> = (0..10).map(|i| format!("x{i}")).collect();
        for qi in 0..nq {
            let q = format!("q{qi}");
            let n = rng.gen_range(1..=20);
            let link_p = rng.gen_range(0.05..0.6);
            let mut score = 100.0;
            let mut pool = Vec::new();
            for j in 0..n {
                let d = format!("{q}d{j:02}");
                if rng.gen_bool(0.7) {
                    score -= rng.gen_range(1..4) as f64;
                }
                pool.push((d.clone(), score));
                match rng.gen_range(0..10) {
                    0..=2 => inst.judgments.push((q.clone(), d.clone(), rng.gen_range(1..=2))),
                    3..=7 => inst.judgments.push((q.clone(), d.clone(), 0)),
                    _ => {}
                }
                let mut ls: Vec<(String, f64, u32)> = Vec::new();
                for e in &vocab {
                    if rng.gen_bool(link_p) {
                        ls.push((e.clone(), rng.gen_range(0..=100) as f64 / 100.0, rng.gen_range(1..=3)));
                    }
                }
                inst.links.insert(d, ls);
            }
            let mut ents = vocab.clone();
            ents.shuffle(&mut rng);
            ents.truncate(rng.gen_range(0..=10));
            let erun: Vec<(String, f64)> = ents
                .into_iter()
                .enumerate()
                .map(|(i, e)| (e, 10.0 - i as f64))
                .collect();
            inst.entity_run.push((q.clone(), erun));

            let mut docs: Vec<(String, f64)> = Vec::new();
            for (d, _) in &pool {
                if rng.gen_bool(0.85) {
                    docs.push((d.clone(), rng.gen_range(0..6) as f64));
                }
            }
            if rng.gen_bool(0.3) {
                docs.push((format!("{q}stray"), 3.0));
            }
            docs.shuffle(&mut rng);
            inst.doc_run.push((q.clone(), docs));
            inst.pools.push((q, pool));
        }
        inst
    }

    pub fn index(&self) -> CorpusIndex {
        let mut qrels = Qrels::new();
        for (q, d, g) in &self.judgments {
            qrels.insert(q.clone(), d.clone(), *g).unwrap();
        }
        let mut pools = CandidatePool::new();
        for (q, docs) in &self.pools {
            pools.insert(q.clone(), docs.clone()).unwrap();
        }
        let mut links = EntityLinks::new();
        for (d, ls) in &self.links {
            let ls = ls
                .iter()
                .map(|(e, rho, m)| Link {
                    entity_id: e.clone(),
                    rho: *rho,
                    mentions: *m,
                })
                .collect();
            links.insert_doc(d.clone(), ls).unwrap();
        }
        build_index(qrels, pools, links).unwrap()
    }

    pub fn entity_run(&self) -> Run {
        to_run(&self.entity_run)
    }

    /// The document run in canonical order, as a ranked run would arrive.
    pub fn doc_run(&self) -> Run {
        let sorted: Vec<(String, Vec<(String, f64)>)> = self
            .doc_run
            .iter()
            .map(|(q, docs)| {
                let mut docs = docs.clone();
                docs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| b.0.cmp(&a.0)));
                (q.clone(), docs)
            })
            .collect();
        to_run(&sorted)
    }

    pub fn queries(&self) -> Vec<String> {
        self.pools.iter().map(|(q, _)| q.clone()).collect()
    }

    pub fn grade(&self, q: &str, d: &str) -> Option<u32> {
        self.judgments
            .iter()
            .find(|(jq, jd, _)| jq == q && jd == d)
            .map(|(_, _, g)| *g)
    }

    pub fn pool(&self, q: &str) -> Vec<String> {
        self.pools
            .iter()
            .find(|(pq, _)| pq == q)
            .map(|(_, docs)| docs.iter().map(|(d, _)| d.clone()).collect())
            .unwrap_or_default()
    }

    pub fn doc_entities(&self, d: &str) -> BTreeSet<String> {
        self.links
            .get(d)
            .map(|ls| ls.iter().map(|(e, _, _)| e.clone()).collect())
            .unwrap_or_default()
    }

    pub fn top_k(&self, q: &str, k: usize) -> BTreeSet<String> {
        self.entity_run
            .iter()
            .find(|(rq, _)| rq == q)
            .map(|(_, es)| es.iter().take(k).map(|(e, _)| e.clone()).collect())
            .unwrap_or_default()
    }
}

pub fn to_run(lists: &[(String, Vec<(String, f64)>)]) -> Run {
    lists
        .iter()
        .map(|(q, items)| {
            (
                q.clone(),
                items.iter().map(|(id, s)| Scored::new(id.clone(), *s)).collect(),
            )
        })
        .collect()
}

fn reaches(inst: &Instance, d: &str, top: &BTreeSet<String>) -> bool {
    inst.doc_entities(d).intersection(top).next().is_some()
}

pub fn oracle_relcov(inst: &Instance, q: &str, k: usize) -> Option<f64> {
    let top = inst.top_k(q, k);
    let rel: Vec<String> = inst
        .pool(q)
        .into_iter()
        .filter(|d| inst.grade(q, d).is_some_and(|g| g >= 1))
        .collect();
    if rel.is_empty() {
        return None;
    }
    Some(rel.iter().filter(|d| reaches(inst, d, &top)).count() as f64 / rel.len() as f64)
}

pub fn oracle_nonrelcov(inst: &Instance, q: &str, k: usize) -> Option<f64> {
    let top = inst.top_k(q, k);
    let nonrel: Vec<String> = inst
        .pool(q)
        .into_iter()
        .filter(|d| inst.grade(q, d) == Some(0))
        .collect();
    if nonrel.is_empty() {
        return None;
    }
    Some(nonrel.iter().filter(|d| reaches(inst, d, &top)).count() as f64 / nonrel.len() as f64)
}

pub fn oracle_overlap(inst: &Instance, q: &str, k: usize) -> Option<f64> {
    let top = inst.top_k(q, k);
    let counts: Vec<usize> = inst
        .pool(q)
        .iter()
        .filter(|d| inst.grade(q, d).is_some_and(|g| g >= 1))
        .map(|d| inst.doc_entities(d).intersection(&top).count())
        .filter(|&c| c > 0)
        .collect();
    if counts.is_empty() {
        return None;
    }
    Some(counts.iter().sum::<usize>() as f64 / counts.len() as f64)
}

#[derive(Debug, Clone, Copy)]
pub struct OracleMetrics {
    pub ap: f64,
    pub ndcg20: f64,
    pub p20: f64,
}

/// trec_eval-style metrics over the evaluation pool; `conditional_k`
/// restricts the pool to documents linking a top-k entity.
pub fn oracle_metrics(inst: &Instance, q: &str, conditional_k: Option<usize>) -> Option<OracleMetrics> {
    let pool: Vec<String> = match conditional_k {
        None => inst.pool(q),
        Some(k) => {
            let top = inst.top_k(q, k);
            inst.pool(q).into_iter().filter(|d| reaches(inst, d, &top)).collect()
        }
    };
    let judged: Vec<u32> = pool.iter().filter_map(|d| inst.grade(q, d)).collect();
    let num_rel = judged.iter().filter(|&&g| g >= 1).count();
    if judged.is_empty() || num_rel == 0 {
        return None;
    }
    let mut ranking: Vec<(String, f64)> = inst
        .doc_run
        .iter()
        .find(|(rq, _)| rq == q)
        .map(|(_, docs)| docs.iter().filter(|(d, _)| pool.contains(d)).cloned().collect())
        .unwrap_or_default();
    // score descending, then document id descending
    for i in 0..ranking.len() {
        for j in 0..ranking.len() - 1 - i {
            let (a, b) = (&ranking[j], &ranking[j + 1]);
            if a.1 < b.1 || (a.1 == b.1 && a.0 < b.0) {
                ranking.swap(j, j + 1);
            }
        }
    }
    let grades: Vec<u32> = ranking.iter().map(|(d, _)| inst.grade(q, d).unwrap_or(0)).collect();

    let mut ap = 0.0;
    for (i, g) in grades.iter().enumerate() {
        if *g >= 1 {
            let rel_so_far = grades[..=i].iter().filter(|&&x| x >= 1).count();
            ap += rel_so_far as f64 / (i + 1) as f64;
        }
    }
    ap /= num_rel as f64;

    let dcg = |gs: &[u32]| -> f64 {
        gs.iter()
            .take(20)
            .enumerate()
            .map(|(i, g)| *g as f64 / ((i + 2) as f64).log2())
            .sum()
    };
    let mut ideal = judged.clone();
    ideal.sort_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal);
    let ndcg20 = if idcg > 0.0 { dcg(&grades) / idcg } else { 0.0 };
    let p20 = grades.iter().take(20).filter(|&&g| g >= 1).count() as f64 / 20.0;
    Some(OracleMetrics { ap, ndcg20, p20 })
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}

pub fn close_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => close(x, y),
        (None, None) => true,
        _ => false,
    }
}

/// O(n^2) non-dominated set: high first coordinate, low second.
pub fn brute_frontier(points: &[(f64, f64)]) -> Vec<bool> {
    points
        .iter()
        .map(|&(r, n)| {
            !points
                .iter()
                .any(|&(r2, n2)| r2 >= r && n2 <= n && (r2 > r || n2 < n))
        })
        .collect()
}
