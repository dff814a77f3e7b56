//! Unsupervised consensus entity ranker.
//!
//! Scores entities from the candidate pool alone:
//! `soft_support(e) * (ln((K + 1) / (df_cand(e) + 1)) + 1)`, where `K` is the
//! pool size and soft support sums a per-document weight over the candidates
//! linking `e`. Entities in fewer than `gate_min_df` candidates are removed
//! first, since isolated links are mostly linker noise.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::corpus::{CorpusIndex, EntityStats};
use crate::error::{Error, Result};
use crate::oer::local_idf;
use crate::run::{sort_canonical, Run, Scored};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// Link confidence (per-document max rho).
    Rho,
    /// `1 / log2(rank + 1)` of the document.
    Rank,
    /// Product of both.
    #[default]
    RhoRank,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Rho => "rho",
            Variant::Rank => "rank",
            Variant::RhoRank => "rho_rank",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rho" => Ok(Variant::Rho),
            "rank" => Ok(Variant::Rank),
            "rho_rank" | "rho+rank" | "rho-rank" => Ok(Variant::RhoRank),
            _ => Err(Error::invalid(format!("unknown consensus variant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConsensusConfig {
    pub variant: Variant,
    pub gate_min_df: u32,
    pub k_out: usize,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            variant: Variant::RhoRank,
            gate_min_df: 2,
            k_out: 20,
        }
    }
}

pub fn rank_weight(rank: u32) -> f64 {
    1.0 / (rank as f64 + 1.0).log2()
}

pub fn soft_support(stats: &EntityStats, variant: Variant) -> f64 {
    stats
        .ranks
        .iter()
        .zip(&stats.rhos)
        .map(|(&rank, &rho)| match variant {
            Variant::Rho => rho,
            Variant::Rank => rank_weight(rank),
            Variant::RhoRank => rho * rank_weight(rank),
        })
        .sum()
}

/// Ranked entities for one query, truncated to `k_out`. Empty when every
/// entity is gated out.
pub fn consensus_rank(index: &CorpusIndex, query_id: &str, cfg: &ConsensusConfig) -> Result<Vec<Scored>> {
    if cfg.gate_min_df == 0 {
        return Err(Error::invalid("gate_min_df must be at least 1"));
    }
    let q = index.query(query_id)?;
    let k = q.pool_size();
    let mut scored: Vec<Scored> = q
        .entities
        .iter()
        .filter(|(_, s)| s.df_cand >= cfg.gate_min_df)
        .map(|(e, s)| Scored::new(e.clone(), soft_support(s, cfg.variant) * local_idf(k, s.df_cand)))
        .collect();
    sort_canonical(&mut scored);
    scored.truncate(cfg.k_out);
    Ok(scored)
}

/// Consensus run over every indexed query, plus the queries whose entities
/// were all gated out.
pub fn consensus_run(index: &CorpusIndex, cfg: &ConsensusConfig) -> Result<(Run, Vec<String>)> {
    let ids: Vec<&str> = index.query_ids().collect();
    let lists: Vec<(String, Vec<Scored>)> = ids
        .par_iter()
        .map(|q| consensus_rank(index, q, cfg).map(|l| (q.to_string(), l)))
        .collect::<Result<_>>()?;
    let empty = lists
        .iter()
        .filter(|(_, l)| l.is_empty())
        .map(|(q, _)| q.clone())
        .collect();
    Ok((lists.into_iter().collect(), empty))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_index, CandidatePool, EntityLinks, Link, Qrels};

    /// Ten-document pool. `e` sits at ranks 1 and 3 with rho 0.8 and 0.5;
    /// `solo` appears once.
    fn index() -> CorpusIndex {
        let mut links = EntityLinks::new();
        let mut docs = Vec::new();
        for i in 1..=10 {
            let d = format!("d{i:02}");
            let mut l = Vec::new();
            match i {
                1 => l.push(Link { entity_id: "e".into(), rho: 0.8, mentions: 1 }),
                3 => l.push(Link { entity_id: "e".into(), rho: 0.5, mentions: 2 }),
                5 => l.push(Link { entity_id: "solo".into(), rho: 1.0, mentions: 1 }),
                _ => {}
            }
            links.insert_doc(d.clone(), l).unwrap();
            docs.push((d, (11 - i) as f64));
        }
        let mut pool = CandidatePool::new();
        pool.insert("q", docs).unwrap();
        build_index(Qrels::new(), pool, links).unwrap()
    }

    fn score_of(list: &[Scored], id: &str) -> Option<f64> {
        list.iter().find(|s| s.id == id).map(|s| s.score)
    }

    #[test]
    fn rho_variant() {
        let cfg = ConsensusConfig { variant: Variant::Rho, ..Default::default() };
        let out = consensus_rank(&index(), "q", &cfg).unwrap();
        assert!((score_of(&out, "e").unwrap() - 2.9891).abs() < 5e-5);
    }

    #[test]
    fn rank_variant() {
        let cfg = ConsensusConfig { variant: Variant::Rank, ..Default::default() };
        let out = consensus_rank(&index(), "q", &cfg).unwrap();
        assert!((score_of(&out, "e").unwrap() - 3.4489).abs() < 5e-5);
    }

    #[test]
    fn gate_removes_singletons() {
        let out = consensus_rank(&index(), "q", &ConsensusConfig::default()).unwrap();
        assert!(score_of(&out, "solo").is_none());
        let open = ConsensusConfig { gate_min_df: 1, ..Default::default() };
        assert!(score_of(&consensus_rank(&index(), "q", &open).unwrap(), "solo").is_some());
    }

    #[test]
    fn all_gated_gives_empty_run() {
        let cfg = ConsensusConfig { gate_min_df: 5, ..Default::default() };
        let (run, empty) = consensus_run(&index(), &cfg).unwrap();
        assert!(run.get("q").is_empty());
        assert_eq!(empty, ["q"]);
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("rho+rank".parse::<Variant>().unwrap(), Variant::RhoRank);
        assert!("idf".parse::<Variant>().is_err());
    }
}
