//! Readers and writers for qrels, TREC runs, JSONL entity links and
//! tabular reports.
//!
//! All formats are UTF-8 with LF line endings. Blank lines are ignored on
//! input. Writers emit a canonical form: reading a canonical file and
//! writing it back is byte-identical.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{EntityLinks, Link, Qrels};
use crate::error::{Error, Result};
use crate::run::RunRecord;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn source_name(path: &Path) -> String {
    path.display().to_string()
}

/// Iterates non-blank lines with 1-based line numbers.
fn numbered_lines<'a, R: BufRead + 'a>(
    reader: R,
    source: &'a str,
) -> impl Iterator<Item = Result<(usize, String)>> + 'a {
    reader
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(Ok((i + 1, l))),
            Err(e) => Some(Err(Error::parse(source, i + 1, e.to_string()))),
        })
}

// ---------------------------------------------------------------------------
// qrels

pub fn parse_qrels<R: BufRead>(reader: R, source: &str) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    let mut first_seen: HashMap<(String, String), usize> = HashMap::new();
    for item in numbered_lines(reader, source) {
        let (n, line) = item?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                source,
                n,
                format!("expected `qid 0 docid grade`, found {} fields", fields.len()),
            ));
        }
        let grade: i64 = fields[3]
            .parse()
            .map_err(|_| Error::parse(source, n, format!("non-integer grade `{}`", fields[3])))?;
        let grade = u32::try_from(grade)
            .map_err(|_| Error::parse(source, n, format!("grade {grade} out of range")))?;
        let (qid, doc) = (fields[0].to_string(), fields[2].to_string());
        if let Err(previous) = qrels.insert(qid.clone(), doc.clone(), grade) {
            let other = first_seen[&(qid.clone(), doc.clone())];
            return Err(Error::parse(
                source,
                n,
                format!(
                    "({qid}, {doc}) judged {grade} here but {previous} on line {other}"
                ),
            ));
        }
        first_seen.entry((qid, doc)).or_insert(n);
    }
    Ok(qrels)
}

pub fn read_qrels(path: impl AsRef<Path>) -> Result<Qrels> {
    let path = path.as_ref();
    parse_qrels(open(path)?, &source_name(path))
}

/// Qrels lines sorted by query then document.
pub fn render_qrels(qrels: &Qrels) -> String {
    let mut out = String::new();
    for (q, d, g) in qrels.iter() {
        let _ = writeln!(out, "{q} 0 {d} {g}");
    }
    out
}

pub fn write_qrels(qrels: &Qrels, path: impl AsRef<Path>) -> Result<()> {
    write_string(path.as_ref(), &render_qrels(qrels))
}

// ---------------------------------------------------------------------------
// runs

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Doc,
    Entity,
}

impl RunKind {
    fn item(self) -> &'static str {
        match self {
            RunKind::Doc => "document",
            RunKind::Entity => "entity",
        }
    }
}

/// Parses a TREC run. Records come back sorted by query id, then rank.
///
/// In strict mode each query's ranks must be distinct and scores must not
/// increase with rank. With `lenient` set, each query is instead re-sorted by
/// score descending (ties by id descending) and ranks are reassigned `1..=n`.
/// A repeated id within a query is an error in both modes.
pub fn parse_run<R: BufRead>(
    reader: R,
    source: &str,
    kind: RunKind,
    lenient: bool,
) -> Result<Vec<RunRecord>> {
    // (line, record) per query
    let mut by_query: BTreeMap<String, Vec<(usize, RunRecord)>> = BTreeMap::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    for item in numbered_lines(reader, source) {
        let (n, line) = item?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(Error::parse(
                source,
                n,
                format!("expected `qid Q0 id rank score tag`, found {} fields", f.len()),
            ));
        }
        let rank: u32 = f[3]
            .parse()
            .map_err(|_| Error::parse(source, n, format!("invalid rank `{}`", f[3])))?;
        let score: f64 = f[4]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| Error::parse(source, n, format!("invalid score `{}`", f[4])))?;
        let key = (f[0].to_string(), f[2].to_string());
        if let Some(prev) = seen.insert(key, n) {
            return Err(Error::parse(
                source,
                n,
                format!(
                    "{} `{}` repeated for query {} (first on line {prev})",
                    kind.item(),
                    f[2],
                    f[0]
                ),
            ));
        }
        by_query.entry(f[0].to_string()).or_default().push((
            n,
            RunRecord {
                query_id: f[0].to_string(),
                item_id: f[2].to_string(),
                rank,
                score,
                tag: f[5].to_string(),
            },
        ));
    }
    if by_query.is_empty() {
        log::warn!("{source}: empty run");
    }

    let mut out = Vec::new();
    for (_, mut recs) in by_query {
        if lenient {
            recs.sort_by(|a, b| {
                b.1.score
                    .total_cmp(&a.1.score)
                    .then_with(|| b.1.item_id.cmp(&a.1.item_id))
            });
            for (i, (_, r)) in recs.iter_mut().enumerate() {
                r.rank = i as u32 + 1;
            }
        } else {
            recs.sort_by_key(|(_, r)| r.rank);
            for pair in recs.windows(2) {
                let ((_, a), (n, b)) = (&pair[0], &pair[1]);
                if a.rank == b.rank {
                    return Err(Error::parse(
                        source,
                        *n,
                        format!("rank {} repeated for query {}", b.rank, b.query_id),
                    ));
                }
                if b.score > a.score {
                    return Err(Error::parse(
                        source,
                        *n,
                        format!(
                            "score {} at rank {} exceeds score {} at rank {} for query {}",
                            b.score, b.rank, a.score, a.rank, b.query_id
                        ),
                    ));
                }
            }
        }
        out.extend(recs.into_iter().map(|(_, r)| r));
    }
    Ok(out)
}

pub fn read_run(path: impl AsRef<Path>, kind: RunKind, lenient: bool) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    parse_run(open(path)?, &source_name(path), kind, lenient)
}

/// Run lines sorted by query id, then rank. Scores use the shortest decimal
/// that round-trips.
pub fn render_run(records: &[RunRecord]) -> String {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.query_id.cmp(&b.query_id).then(a.rank.cmp(&b.rank)));
    let mut out = String::new();
    for r in sorted {
        let _ = writeln!(
            out,
            "{} Q0 {} {} {} {}",
            r.query_id, r.item_id, r.rank, r.score, r.tag
        );
    }
    out
}

pub fn write_run(records: &[RunRecord], path: impl AsRef<Path>) -> Result<()> {
    write_string(path.as_ref(), &render_run(records))
}

/// Convenience for writing a [`crate::run::Run`] with a single tag.
pub fn write_ranked(run: &crate::run::Run, tag: &str, path: impl AsRef<Path>) -> Result<()> {
    write_run(&run.to_records(tag), path)
}

// ---------------------------------------------------------------------------
// entity links

#[derive(Debug, Serialize, Deserialize)]
struct LinkLine {
    doc_id: String,
    entities: Vec<LinkItem>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LinkItem {
    entity_id: String,
    rho: f64,
    #[serde(default = "one")]
    mentions: u32,
}

fn one() -> u32 {
    1
}

pub fn parse_entity_links<R: BufRead>(reader: R, source: &str) -> Result<EntityLinks> {
    let mut links = EntityLinks::new();
    let mut lines_of: HashMap<String, usize> = HashMap::new();
    for item in numbered_lines(reader, source) {
        let (n, line) = item?;
        let parsed: LinkLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(source, n, format!("invalid link record: {e}")))?;
        if let Some(prev) = lines_of.get(&parsed.doc_id) {
            return Err(Error::parse(
                source,
                n,
                format!("document {} already listed on line {prev}", parsed.doc_id),
            ));
        }
        let mut doc_links = Vec::with_capacity(parsed.entities.len());
        for e in parsed.entities {
            if !(0.0..=1.0).contains(&e.rho) {
                return Err(Error::parse(
                    source,
                    n,
                    format!("entity {} has rho {} outside [0, 1]", e.entity_id, e.rho),
                ));
            }
            if e.mentions == 0 {
                return Err(Error::parse(
                    source,
                    n,
                    format!("entity {} has zero mentions", e.entity_id),
                ));
            }
            doc_links.push(Link {
                entity_id: e.entity_id,
                rho: e.rho,
                mentions: e.mentions,
            });
        }
        links.insert_doc(parsed.doc_id.clone(), doc_links)?;
        lines_of.insert(parsed.doc_id, n);
    }
    Ok(links)
}

pub fn read_entity_links(path: impl AsRef<Path>) -> Result<EntityLinks> {
    let path = path.as_ref();
    parse_entity_links(open(path)?, &source_name(path))
}

/// One JSON object per document, documents sorted by id.
pub fn render_entity_links(links: &EntityLinks) -> String {
    let mut out = String::new();
    for (doc, ls) in links.iter_sorted() {
        let line = LinkLine {
            doc_id: doc.to_string(),
            entities: ls
                .iter()
                .map(|l| LinkItem {
                    entity_id: l.entity_id.clone(),
                    rho: l.rho,
                    mentions: l.mentions,
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&line).expect("link records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_entity_links(links: &EntityLinks, path: impl AsRef<Path>) -> Result<()> {
    write_string(path.as_ref(), &render_entity_links(links))
}

// ---------------------------------------------------------------------------
// reports

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(i64),
    Real(f64),
    Bool(bool),
    Null,
}

impl Cell {
    pub fn opt(v: Option<f64>) -> Cell {
        v.map_or(Cell::Null, Cell::Real)
    }

    pub fn text(s: impl Into<String>) -> Cell {
        Cell::Text(s.into())
    }

    fn tsv(&self, decimals: usize) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Real(x) if x.is_finite() => format!("{x:.decimals$}"),
            Cell::Real(x) => x.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Null => "NA".to_string(),
        }
    }

    fn json(&self, decimals: usize) -> String {
        match self {
            Cell::Text(s) => serde_json::to_string(s).expect("strings serialize"),
            Cell::Int(i) => i.to_string(),
            Cell::Real(x) if x.is_finite() => format!("{x:.decimals$}"),
            Cell::Real(_) | Cell::Null => "null".to_string(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

/// A table with a fixed column order. Implementors return rows already in
/// output order (per-query rows by query id, then any `all` rows).
pub trait Report {
    fn columns(&self) -> Vec<String>;
    fn rows(&self) -> Vec<Vec<Cell>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Tsv,
    Json,
}

pub const DEFAULT_DECIMALS: usize = 4;

pub fn render_report<R: Report + ?Sized>(report: &R, format: ReportFormat, decimals: usize) -> String {
    let columns = report.columns();
    let rows = report.rows();
    let mut out = String::new();
    match format {
        ReportFormat::Tsv => {
            out.push_str(&columns.join("\t"));
            out.push('\n');
            for row in rows {
                let cells: Vec<String> = row.iter().map(|c| c.tsv(decimals)).collect();
                out.push_str(&cells.join("\t"));
                out.push('\n');
            }
        }
        ReportFormat::Json => {
            out.push('[');
            for (i, row) in rows.iter().enumerate() {
                out.push_str(if i == 0 { "\n" } else { ",\n" });
                out.push('{');
                for (j, (col, cell)) in columns.iter().zip(row).enumerate() {
                    if j > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(&serde_json::to_string(col).expect("strings serialize"));
                    out.push_str(": ");
                    out.push_str(&cell.json(decimals));
                }
                out.push('}');
            }
            out.push_str("\n]\n");
        }
    }
    out
}

pub fn write_report<R: Report + ?Sized>(
    report: &R,
    format: ReportFormat,
    decimals: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_string(path.as_ref(), &render_report(report, format, decimals))
}

/// Reads a TSV report (header row first) into string cells.
pub fn read_table(path: impl AsRef<Path>) -> Result<Table> {
    let path = path.as_ref();
    let source = source_name(path);
    let mut lines = numbered_lines(open(path)?, &source);
    let header = match lines.next() {
        Some(item) => item?.1,
        None => return Err(Error::parse(&source, 1, "missing header row")),
    };
    let columns: Vec<String> = header.split('\t').map(str::to_string).collect();
    let mut rows = Vec::new();
    for item in lines {
        let (n, line) = item?;
        let cells: Vec<String> = line.split('\t').map(str::to_string).collect();
        if cells.len() != columns.len() {
            return Err(Error::parse(
                &source,
                n,
                format!("expected {} columns, found {}", columns.len(), cells.len()),
            ));
        }
        rows.push((n, cells));
    }
    Ok(Table {
        source,
        columns,
        rows,
    })
}

#[derive(Debug, Clone)]
pub struct Table {
    pub source: String,
    pub columns: Vec<String>,
    /// `(line number, cells)`
    pub rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::parse(&self.source, 1, format!("no column `{name}`")))
    }

    /// Per-query values of a numeric column. Rows whose `filter` column does
    /// not match, aggregate rows (`qid` = `all`) and `NA` cells are skipped.
    pub fn per_query(
        &self,
        value_col: &str,
        filter: Option<(&str, &str)>,
    ) -> Result<BTreeMap<String, f64>> {
        let qcol = self.column("qid")?;
        let vcol = self.column(value_col)?;
        let fcol = match filter {
            Some((name, want)) if self.columns.iter().any(|c| c == name) => {
                Some((self.column(name)?, want))
            }
            _ => None,
        };
        let mut out = BTreeMap::new();
        for (n, cells) in &self.rows {
            if cells[qcol] == "all" {
                continue;
            }
            if let Some((i, want)) = fcol {
                if cells[i] != want {
                    continue;
                }
            }
            if cells[vcol] == "NA" {
                continue;
            }
            let v: f64 = cells[vcol].parse().map_err(|_| {
                Error::parse(&self.source, *n, format!("non-numeric value `{}`", cells[vcol]))
            })?;
            if out.insert(cells[qcol].clone(), v).is_some() {
                return Err(Error::parse(
                    &self.source,
                    *n,
                    format!("query {} repeated", cells[qcol]),
                ));
            }
        }
        Ok(out)
    }
}

pub fn write_string(path: &Path, contents: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(s: &str, lenient: bool) -> Result<Vec<RunRecord>> {
        parse_run(s.as_bytes(), "t.run", RunKind::Doc, lenient)
    }

    #[test]
    fn qrels_line() {
        let q = parse_qrels("301 0 FBIS3-1 1\n301 0 FBIS3-2 2\n".as_bytes(), "q").unwrap();
        assert_eq!(q.grade("301", "FBIS3-1"), Some(1));
        assert_eq!(q.grade("301", "FBIS3-2"), Some(2));
        assert!(crate::corpus::is_relevant(2));
    }

    #[test]
    fn qrels_conflicting_duplicate_names_both_lines() {
        let err = parse_qrels("301 0 d 1\n301 0 e 0\n301 0 d 0\n".as_bytes(), "q").unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("q:3:"), "{msg}");
        assert!(msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn qrels_non_integer_grade() {
        let err = parse_qrels("301 0 d 1\n301 0 e x\n".as_bytes(), "q").unwrap_err();
        assert!(err.to_string().starts_with("q:2:"));
        let err = parse_qrels("301 0 d 0.5\n".as_bytes(), "q").unwrap_err();
        assert!(err.to_string().contains("non-integer"));
    }

    #[test]
    fn qrels_malformed_line() {
        let err = parse_qrels("301 0 d\n".as_bytes(), "q").unwrap_err();
        assert!(err.to_string().starts_with("q:1:"));
    }

    #[test]
    fn run_record_parses() {
        let recs = run("301 Q0 d5 1 14.2 bm25\n", false).unwrap();
        assert_eq!(
            recs,
            vec![RunRecord {
                query_id: "301".into(),
                item_id: "d5".into(),
                rank: 1,
                score: 14.2,
                tag: "bm25".into()
            }]
        );
    }

    #[test]
    fn lenient_ties_break_by_id_descending() {
        let recs = run("1 Q0 a 1 5 t\n1 Q0 b 2 5 t\n1 Q0 c 3 9 t\n", true).unwrap();
        let order: Vec<_> = recs.iter().map(|r| (r.item_id.as_str(), r.rank)).collect();
        assert_eq!(order, [("c", 1), ("b", 2), ("a", 3)]);
    }

    #[test]
    fn strict_rejects_score_inversion_and_lenient_repairs() {
        let text = "1 Q0 a 1 1.0 t\n1 Q0 b 2 3.0 t\n";
        let err = run(text, false).unwrap_err();
        assert!(err.to_string().starts_with("t.run:2:"));
        let recs = run(text, true).unwrap();
        assert_eq!(recs[0].item_id, "b");
    }

    #[test]
    fn duplicate_id_rejected_in_both_modes() {
        let text = "1 Q0 a 1 2 t\n1 Q0 a 2 1 t\n";
        assert!(run(text, false).is_err());
        assert!(run(text, true).is_err());
        // the same id under another query is fine
        assert!(run("1 Q0 a 1 2 t\n2 Q0 a 1 1 t\n", false).is_ok());
    }

    #[test]
    fn empty_run_is_valid() {
        assert!(run("", false).unwrap().is_empty());
    }

    #[test]
    fn run_round_trip_is_byte_identical() {
        let text = "301 Q0 d5 1 14.2 bm25\n301 Q0 d1 2 3 bm25\n302 Q0 x 1 -0.5 bm25\n";
        assert_eq!(render_run(&run(text, false).unwrap()), text);
    }

    #[test]
    fn links_aggregate_repeats() {
        let line = r#"{"doc_id": "d", "entities": [{"entity_id": "e", "rho": 0.4, "mentions": 1}, {"entity_id": "e", "rho": 0.7, "mentions": 2}]}"#;
        let links = parse_entity_links(line.as_bytes(), "l").unwrap();
        let l = links.get("d").unwrap();
        assert_eq!(l.len(), 1);
        assert_eq!((l[0].rho, l[0].mentions), (0.7, 3));
    }

    #[test]
    fn links_empty_entity_list() {
        let links = parse_entity_links(r#"{"doc_id": "d", "entities": []}"#.as_bytes(), "l").unwrap();
        assert_eq!(links.get("d").unwrap().len(), 0);
    }

    #[test]
    fn links_rho_out_of_range() {
        let line = r#"{"doc_id": "d", "entities": [{"entity_id": "e", "rho": 1.2, "mentions": 1}]}"#;
        let err = parse_entity_links(line.as_bytes(), "l").unwrap_err();
        assert!(err.to_string().starts_with("l:1:"));
    }

    #[test]
    fn links_duplicate_doc() {
        let text = "{\"doc_id\": \"d\", \"entities\": []}\n{\"doc_id\": \"d\", \"entities\": []}\n";
        let err = parse_entity_links(text.as_bytes(), "l").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn links_round_trip_is_byte_identical() {
        let text = concat!(
            r#"{"doc_id":"a","entities":[{"entity_id":"x","rho":0.25,"mentions":1},{"entity_id":"y","rho":1.0,"mentions":3}]}"#,
            "\n",
            r#"{"doc_id":"b","entities":[]}"#,
            "\n"
        );
        let links = parse_entity_links(text.as_bytes(), "l").unwrap();
        assert_eq!(render_entity_links(&links), text);
    }

    struct Tiny;
    impl Report for Tiny {
        fn columns(&self) -> Vec<String> {
            vec!["qid".into(), "k".into(), "relcov".into()]
        }
        fn rows(&self) -> Vec<Vec<Cell>> {
            vec![
                vec![Cell::text("301"), Cell::Int(10), Cell::Real(0.75)],
                vec![Cell::text("all"), Cell::Int(10), Cell::Null],
            ]
        }
    }

    #[test]
    fn report_tsv_and_json() {
        assert_eq!(
            render_report(&Tiny, ReportFormat::Tsv, 4),
            "qid\tk\trelcov\n301\t10\t0.7500\nall\t10\tNA\n"
        );
        let json = render_report(&Tiny, ReportFormat::Json, 4);
        assert_eq!(
            json,
            "[\n{\"qid\": \"301\", \"k\": 10, \"relcov\": 0.7500},\n{\"qid\": \"all\", \"k\": 10, \"relcov\": null}\n]\n"
        );
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.as_array().unwrap().len(), 2);
    }
}
