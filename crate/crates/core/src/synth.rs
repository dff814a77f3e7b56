//! Seeded synthetic environments: candidate pools, graded judgments and
//! entity links with planted per-query signal entities and shared generic
//! entities.
//!
//! Vocabulary layout: `E000000..` are the generic entities, the remaining ids
//! are drawn per query as signals or background noise. Each query gets its
//! own ChaCha stream so generation parallelizes without changing output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CandidatePool, EntityLinks, Link, Qrels};
use crate::error::{Error, Result};
use crate::run::{Run, Scored};
use crate::trec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_queries: usize,
    pub pool_size: usize,
    pub num_rel_per_query: usize,
    pub entity_vocab_size: usize,
    pub signal_entities_per_query: usize,
    /// Probability that a relevant document links a given signal entity.
    pub signal_linking_recall: f64,
    /// Probability that any document links a given generic entity.
    pub generic_entity_rate: f64,
    pub seed: u64,
    /// Size of the shared generic vocabulary.
    pub generic_entities: usize,
    /// Random non-signal, non-generic entities linked by every document.
    pub background_entities_per_doc: usize,
    /// Probability that a non-relevant document links a given signal entity.
    pub signal_leak_rate: f64,
    /// Probability that a non-relevant document is left unjudged.
    pub unjudged_rate: f64,
    /// Share of relevant documents graded 2 instead of 1.
    pub highly_relevant_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_queries: 50,
            pool_size: 100,
            num_rel_per_query: 10,
            entity_vocab_size: 5000,
            signal_entities_per_query: 3,
            signal_linking_recall: 0.5,
            generic_entity_rate: 0.1,
            seed: 7,
            generic_entities: 10,
            background_entities_per_doc: 3,
            signal_leak_rate: 0.0,
            unjudged_rate: 0.0,
            highly_relevant_rate: 0.3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("signal_linking_recall", self.signal_linking_recall),
            ("generic_entity_rate", self.generic_entity_rate),
            ("signal_leak_rate", self.signal_leak_rate),
            ("unjudged_rate", self.unjudged_rate),
            ("highly_relevant_rate", self.highly_relevant_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        for (name, n) in [
            ("num_queries", self.num_queries),
            ("pool_size", self.pool_size),
            ("num_rel_per_query", self.num_rel_per_query),
            ("entity_vocab_size", self.entity_vocab_size),
            ("signal_entities_per_query", self.signal_entities_per_query),
        ] {
            if n == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.num_rel_per_query > self.pool_size {
            return Err(Error::invalid(format!(
                "num_rel_per_query ({}) exceeds pool_size ({})",
                self.num_rel_per_query, self.pool_size
            )));
        }
        let needed = self.generic_entities + self.signal_entities_per_query + self.background_entities_per_doc;
        if needed > self.entity_vocab_size {
            return Err(Error::invalid(format!(
                "entity_vocab_size {} is too small: {} generic + {} signal + {} background entities requested",
                self.entity_vocab_size,
                self.generic_entities,
                self.signal_entities_per_query,
                self.background_entities_per_doc
            )));
        }
        Ok(())
    }
}

/// What was planted, for oracle checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub signals: BTreeMap<String, Vec<String>>,
    pub generics: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SynthEnv {
    pub qrels: Qrels,
    pub pool: CandidatePool,
    pub links: EntityLinks,
    pub truth: GroundTruth,
}

pub fn query_id(i: usize) -> String {
    format!("{}", 301 + i)
}

pub fn entity_id(i: usize) -> String {
    format!("E{i:06}")
}

struct QueryData {
    qid: String,
    docs: Vec<(String, f64)>,
    grades: Vec<(String, u32)>,
    links: Vec<(String, Vec<Link>)>,
    signals: Vec<String>,
}

fn random_link<R: Rng>(rng: &mut R, entity_id: String) -> Link {
    Link {
        entity_id,
        rho: rng.gen_range(200..=1000) as f64 / 1000.0,
        mentions: rng.gen_range(1..=3),
    }
}

fn generate_query(cfg: &SynthConfig, i: usize) -> QueryData {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(i as u64);
    let qid = query_id(i);

    let open = cfg.entity_vocab_size - cfg.generic_entities;
    let signal_idx: Vec<usize> = sample(&mut rng, open, cfg.signal_entities_per_query)
        .into_iter()
        .map(|j| cfg.generic_entities + j)
        .collect();
    let mut background: Vec<usize> = (cfg.generic_entities..cfg.entity_vocab_size)
        .filter(|j| !signal_idx.contains(j))
        .collect();
    background.shrink_to_fit();

    let mut relevant = vec![false; cfg.pool_size];
    for p in sample(&mut rng, cfg.pool_size, cfg.num_rel_per_query) {
        relevant[p] = true;
    }

    let mut docs = Vec::with_capacity(cfg.pool_size);
    let mut grades = Vec::new();
    let mut links = Vec::with_capacity(cfg.pool_size);
    for (pos, &rel) in relevant.iter().enumerate() {
        let doc = format!("D{qid}-{pos:04}");
        docs.push((doc.clone(), (cfg.pool_size - pos) as f64 / 100.0));
        if rel {
            let g = if rng.gen_bool(cfg.highly_relevant_rate) { 2 } else { 1 };
            grades.push((doc.clone(), g));
        } else if !rng.gen_bool(cfg.unjudged_rate) {
            grades.push((doc.clone(), 0));
        }

        let mut dl = Vec::new();
        let p_signal = if rel { cfg.signal_linking_recall } else { cfg.signal_leak_rate };
        for &s in &signal_idx {
            if rng.gen_bool(p_signal) {
                dl.push(random_link(&mut rng, entity_id(s)));
            }
        }
        for g in 0..cfg.generic_entities {
            if rng.gen_bool(cfg.generic_entity_rate) {
                dl.push(random_link(&mut rng, entity_id(g)));
            }
        }
        for j in sample(&mut rng, background.len(), cfg.background_entities_per_doc) {
            dl.push(random_link(&mut rng, entity_id(background[j])));
        }
        links.push((doc, dl));
    }
    QueryData {
        qid,
        docs,
        grades,
        links,
        signals: signal_idx.into_iter().map(entity_id).collect(),
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthEnv> {
    cfg.validate()?;
    let per_query: Vec<QueryData> = (0..cfg.num_queries)
        .into_par_iter()
        .map(|i| generate_query(cfg, i))
        .collect();

    let mut env = SynthEnv {
        qrels: Qrels::new(),
        pool: CandidatePool::new(),
        links: EntityLinks::new(),
        truth: GroundTruth {
            signals: BTreeMap::new(),
            generics: (0..cfg.generic_entities).map(entity_id).collect(),
        },
    };
    for q in per_query {
        for (doc, g) in q.grades {
            env.qrels
                .insert(q.qid.clone(), doc, g)
                .map_err(|_| Error::invalid("generator produced a conflicting judgment"))?;
        }
        for (doc, l) in q.links {
            env.links.insert_doc(doc, l)?;
        }
        env.pool.insert(q.qid.clone(), q.docs)?;
        env.truth.signals.insert(q.qid, q.signals);
    }
    Ok(env)
}

/// Entity run listing each query's planted signals (scores 2, 1.9, ...),
/// followed by the generic entities when `with_generics` is set.
pub fn planted_run(truth: &GroundTruth, with_generics: bool) -> Run {
    truth
        .signals
        .iter()
        .map(|(q, signals)| {
            let mut items: Vec<Scored> = signals
                .iter()
                .enumerate()
                .map(|(i, e)| Scored::new(e.clone(), 2.0 - i as f64 / 10.0))
                .collect();
            if with_generics {
                items.extend(
                    truth
                        .generics
                        .iter()
                        .enumerate()
                        .map(|(i, e)| Scored::new(e.clone(), 1.0 - i as f64 / 1000.0)),
                );
            }
            (q.clone(), items)
        })
        .collect()
}

/// Output paths written by [`write_env`].
#[derive(Debug, Clone)]
pub struct EnvFiles {
    pub qrels: PathBuf,
    pub pool: PathBuf,
    pub links: PathBuf,
    pub truth: PathBuf,
}

impl EnvFiles {
    pub fn in_dir(dir: &Path) -> Self {
        EnvFiles {
            qrels: dir.join("qrels.txt"),
            pool: dir.join("pool.run"),
            links: dir.join("links.jsonl"),
            truth: dir.join("truth.json"),
        }
    }
}

pub fn write_env(env: &SynthEnv, dir: &Path) -> Result<EnvFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = EnvFiles::in_dir(dir);
    trec::write_qrels(&env.qrels, &files.qrels)?;
    let records: Vec<_> = env
        .pool
        .iter()
        .flat_map(|(q, entries)| {
            entries.iter().map(move |e| crate::run::RunRecord {
                query_id: q.to_string(),
                item_id: e.doc_id.clone(),
                rank: e.rank,
                score: e.score,
                tag: "synth".into(),
            })
        })
        .collect();
    trec::write_run(&records, &files.pool)?;
    trec::write_entity_links(&env.links, &files.links)?;
    let json = serde_json::to_string_pretty(&env.truth).expect("ground truth serializes");
    trec::write_string(&files.truth, &(json + "\n"))?;
    Ok(files)
}

pub fn read_truth(path: &Path) -> Result<GroundTruth> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.line(), e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_index;
    use crate::coverage::{nonrel_cov, rel_cov, NonRelDenominator};

    fn small() -> SynthConfig {
        SynthConfig {
            num_queries: 4,
            pool_size: 40,
            num_rel_per_query: 8,
            entity_vocab_size: 200,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(trec::render_qrels(&a.qrels), trec::render_qrels(&b.qrels));
        assert_eq!(trec::render_entity_links(&a.links), trec::render_entity_links(&b.links));
        assert_eq!(a.truth, b.truth);
        let c = generate(&SynthConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(trec::render_entity_links(&a.links), trec::render_entity_links(&c.links));
    }

    #[test]
    fn vocab_too_small() {
        let cfg = SynthConfig {
            entity_vocab_size: 12,
            ..small()
        };
        assert!(generate(&cfg).is_err());
        assert!(generate(&SynthConfig { generic_entity_rate: 1.5, ..small() }).is_err());
    }

    #[test]
    fn perfect_linking_limit() {
        let cfg = SynthConfig {
            signal_linking_recall: 1.0,
            generic_entity_rate: 0.0,
            ..small()
        };
        let env = generate(&cfg).unwrap();
        let run = planted_run(&env.truth, false);
        let index = build_index(env.qrels, env.pool, env.links).unwrap();
        for q in index.query_ids() {
            assert_eq!(rel_cov(&index, &run, q, 20).unwrap(), Some(1.0));
            assert_eq!(nonrel_cov(&index, &run, q, 20, NonRelDenominator::Judged).unwrap(), Some(0.0));
        }
    }

    #[test]
    fn pool_shape() {
        let env = generate(&small()).unwrap();
        assert_eq!(env.pool.num_queries(), 4);
        let (q, entries) = env.pool.iter().next().unwrap();
        assert_eq!(q, "301");
        assert_eq!(entries.len(), 40);
        assert_eq!(env.qrels.query(q).unwrap().values().filter(|&&g| g >= 1).count(), 8);
        for s in &env.truth.signals[q] {
            assert!(!env.truth.generics.contains(s));
        }
    }
}
