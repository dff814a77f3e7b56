//! Command-line front end. Every pipeline stage is a subcommand; inputs and
//! outputs are plain TREC/JSONL/TSV files so stages compose through disk.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{self, Column, CorrelationMethod, FrontierReport, StrataReport};
use crate::consensus::{self, ConsensusConfig};
use crate::corpus::{build_index_with, BuildOptions, CandidatePool, CorpusIndex};
use crate::coverage::{self, CoverageOptions, NonRelDenominator};
use crate::error::Error;
use crate::eval::{self, EvalMode, EvalOptions, Gain};
use crate::oer::{self, OerConfig, RatesReport};
use crate::run::Run;
use crate::supervision;
use crate::synth::{self, SynthConfig};
use crate::trec::{self, Cell, Report, ReportFormat, RunKind};

pub const ENV_PREFIX: &str = "ENTCHAN_";

#[derive(Debug, Parser, Serialize)]
#[command(name = "entchan", version, about = "Entity-channel diagnostics for entity-oriented retrieval runs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalConfig,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalConfig {
    /// Document qrels (`qid 0 doc grade`).
    #[arg(long, global = true, env = "ENTCHAN_QRELS")]
    pub qrels: Option<PathBuf>,
    /// Candidate pool as a TREC run.
    #[arg(long, global = true, env = "ENTCHAN_POOL")]
    pub pool: Option<PathBuf>,
    /// Entity links, one JSON object per document.
    #[arg(long, global = true, env = "ENTCHAN_LINKS")]
    pub links: Option<PathBuf>,
    /// Entity run (TREC format).
    #[arg(long, global = true, env = "ENTCHAN_ENTITY_RUN")]
    pub entity_run: Option<PathBuf>,
    /// Document run (TREC format); defaults to the candidate pool where allowed.
    #[arg(long, global = true, env = "ENTCHAN_DOC_RUN")]
    pub doc_run: Option<PathBuf>,
    /// Entity prefix sizes.
    #[arg(long, global = true, value_delimiter = ',', default_value = "10,20,50", env = "ENTCHAN_K")]
    pub k: Vec<usize>,
    #[arg(long, global = true, default_value_t = 1.0, env = "ENTCHAN_ALPHA")]
    pub alpha: f64,
    #[arg(long, global = true, default_value_t = 3.0, env = "ENTCHAN_TAU_SUPPORT")]
    pub tau_support: f64,
    /// Smoothing added to NonRelCov in DiscRatio.
    #[arg(long, global = true, default_value_t = coverage::DEFAULT_EPSILON, env = "ENTCHAN_EPSILON")]
    pub epsilon: f64,
    /// Denominator for NonRelCov.
    #[arg(long, global = true, value_enum, default_value_t = NonRelArg::Judged, env = "ENTCHAN_NONREL")]
    pub nonrel: NonRelArg,
    #[arg(long, global = true, value_enum, default_value_t = EvalModeArg::OpenWorld, env = "ENTCHAN_MODE")]
    pub mode: EvalModeArg,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Tsv, env = "ENTCHAN_FORMAT")]
    pub format: FormatArg,
    #[arg(long, global = true, default_value_t = trec::DEFAULT_DECIMALS, env = "ENTCHAN_DECIMALS")]
    pub decimals: usize,
    /// Output file; stdout when omitted.
    #[arg(short, long, global = true, env = "ENTCHAN_OUTPUT")]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 7, env = "ENTCHAN_SEED")]
    pub seed: u64,
    /// Re-sort run files by score instead of rejecting rank/score disorder.
    #[arg(long, global = true, env = "ENTCHAN_LENIENT")]
    pub lenient: bool,
    /// Treat pooled documents without a link record as entity-free.
    #[arg(long, global = true, env = "ENTCHAN_LENIENT_LINKS")]
    pub lenient_links: bool,
    /// Drop entity links below this confidence.
    #[arg(long, global = true, env = "ENTCHAN_MIN_RHO")]
    pub min_rho: Option<f64>,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub show_config: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonRelArg {
    Judged,
    Pool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalModeArg {
    Conditional,
    OpenWorld,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatArg {
    Tsv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureArg {
    Relcov,
    Oracle,
    Observable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    Rho,
    Rank,
    RhoRank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainArg {
    Linear,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Pearson,
    Spearman,
}

/// `PATH:COLUMN` reference into a TSV report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ColumnRef {
    pub path: PathBuf,
    pub column: String,
}

impl FromStr for ColumnRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.rsplit_once(':') {
            Some((p, c)) if !p.is_empty() && !c.is_empty() => Ok(ColumnRef {
                path: PathBuf::from(p),
                column: c.to_string(),
            }),
            _ => Err(format!("expected PATH:COLUMN, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MetricInputs {
    /// Response column, e.g. `entity_eval.tsv:map`.
    #[arg(long, env = "ENTCHAN_Y")]
    pub y: ColumnRef,
    /// Subtracted from the response, giving a per-query delta.
    #[arg(long, env = "ENTCHAN_Y_MINUS")]
    pub y_minus: Option<ColumnRef>,
    #[arg(long, env = "ENTCHAN_COVERAGE")]
    pub coverage: ColumnRef,
    /// Control covariate; repeatable.
    #[arg(long = "control", env = "ENTCHAN_CONTROL", value_delimiter = ',')]
    pub controls: Vec<ColumnRef>,
    /// Keep only rows with this `k` in tables that have a `k` column.
    #[arg(long, default_value_t = 20, env = "ENTCHAN_AT_K")]
    pub at_k: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, env = "ENTCHAN_OUT_DIR")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 50, env = "ENTCHAN_NUM_QUERIES")]
    pub num_queries: usize,
    #[arg(long, default_value_t = 100, env = "ENTCHAN_POOL_SIZE")]
    pub pool_size: usize,
    #[arg(long, default_value_t = 10, env = "ENTCHAN_NUM_REL")]
    pub num_rel: usize,
    #[arg(long, default_value_t = 5000, env = "ENTCHAN_VOCAB")]
    pub vocab: usize,
    #[arg(long, default_value_t = 3, env = "ENTCHAN_SIGNALS")]
    pub signals: usize,
    #[arg(long, default_value_t = 0.5, env = "ENTCHAN_SIGNAL_RECALL")]
    pub signal_recall: f64,
    #[arg(long, default_value_t = 0.1, env = "ENTCHAN_GENERIC_RATE")]
    pub generic_rate: f64,
    #[arg(long, default_value_t = 10, env = "ENTCHAN_GENERICS")]
    pub generics: usize,
    #[arg(long, default_value_t = 3, env = "ENTCHAN_BACKGROUND")]
    pub background: usize,
    #[arg(long, default_value_t = 0.0, env = "ENTCHAN_SIGNAL_LEAK")]
    pub signal_leak: f64,
    #[arg(long, default_value_t = 0.0, env = "ENTCHAN_UNJUDGED_RATE")]
    pub unjudged_rate: f64,
    #[arg(long, default_value_t = 0.3, env = "ENTCHAN_HIGHLY_RELEVANT_RATE")]
    pub highly_relevant_rate: f64,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Validate inputs and print per-query pool statistics.
    IndexCheck,
    /// Coverage of an entity run, the greedy oracle, or core-signal coverage.
    Coverage {
        #[arg(long, value_enum, default_value_t = MeasureArg::Relcov, env = "ENTCHAN_MEASURE")]
        measure: MeasureArg,
    },
    /// Observable entity relevance and signal mode of every (query, entity) pair.
    Oer,
    /// Bait, signal and sparse shares of an entity run's top-k slots.
    Rates,
    /// Entity qrels from the exclusive-presence rule.
    DeriveQrels,
    /// Summary statistics of the derived entity partitions.
    PartitionStats,
    /// Unsupervised consensus entity run from the candidate pool.
    Consensus {
        #[arg(long, value_enum, default_value_t = VariantArg::RhoRank, env = "ENTCHAN_VARIANT")]
        variant: VariantArg,
        #[arg(long, default_value_t = 2, env = "ENTCHAN_GATE_MIN_DF")]
        gate_min_df: u32,
        #[arg(long, default_value_t = 20, env = "ENTCHAN_K_OUT")]
        k_out: usize,
    },
    /// Multiply entity scores by pool-local IDF.
    IdfRescale,
    /// Drop entities whose OER falls below a threshold.
    OerFilter {
        #[arg(long, default_value_t = 0.0, env = "ENTCHAN_THRESHOLD")]
        threshold: f64,
    },
    /// Document metrics under conditional or open-world pools.
    Eval {
        /// Entity prefix defining the conditional pool.
        #[arg(long, default_value_t = 20, env = "ENTCHAN_K_ENTITIES")]
        k_entities: usize,
        #[arg(long, value_enum, default_value_t = GainArg::Linear, env = "ENTCHAN_GAIN")]
        gain: GainArg,
    },
    /// Interpolate document scores with entity evidence.
    Rerank {
        #[arg(long, default_value_t = 0.5, env = "ENTCHAN_LAMBDA")]
        lambda: f64,
        #[arg(long, default_value_t = 20, env = "ENTCHAN_K_ENTITIES")]
        k_entities: usize,
    },
    /// Pareto frontier over coverage reports of several runs.
    Frontier {
        /// Coverage reports; the run name is the file stem.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, default_value_t = 20, env = "ENTCHAN_AT_K")]
        at_k: usize,
    },
    /// Correlation of two per-query columns, or of RelCov and NonRelCov across coverage reports.
    Correlate {
        #[arg(long, env = "ENTCHAN_X")]
        x: Option<ColumnRef>,
        #[arg(long, env = "ENTCHAN_Y")]
        y: Option<ColumnRef>,
        /// Coverage reports to correlate across runs.
        reports: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = MethodArg::Pearson, env = "ENTCHAN_METHOD")]
        method: MethodArg,
        #[arg(long, default_value_t = 20, env = "ENTCHAN_AT_K")]
        at_k: usize,
    },
    /// Equal-size query strata by a per-query value.
    Stratify {
        #[arg(long, env = "ENTCHAN_VALUES")]
        values: ColumnRef,
        #[arg(long, default_value_t = 3, env = "ENTCHAN_BUCKETS")]
        buckets: usize,
        #[arg(long, default_value_t = 20, env = "ENTCHAN_AT_K")]
        at_k: usize,
    },
    /// OLS of a per-query response on coverage plus controls.
    Regress {
        #[command(flatten)]
        inputs: MetricInputs,
    },
    /// Two-segment step fit of the (control-residualized) response on coverage.
    Breakpoint {
        #[command(flatten)]
        inputs: MetricInputs,
        /// Candidate thresholds; defaults to every observed coverage value.
        #[arg(long, value_delimiter = ',', env = "ENTCHAN_TAUS")]
        taus: Vec<f64>,
        #[arg(long, default_value_t = 5, env = "ENTCHAN_MIN_SIDE")]
        min_side: usize,
    },
    /// Generate a synthetic environment.
    Synth(SynthArgs),
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parses `args` (program name first) and runs the subcommand. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if cli.global.show_config {
        println!("{}", serde_json::to_string_pretty(&cli).expect("config serializes"));
        return 0;
    }
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    p.as_deref()
        .ok_or_else(|| CliError::Usage(format!("this subcommand needs --{flag}")))
}

fn emit(output: Option<&Path>, text: &str) -> CliResult {
    match output {
        Some(p) => trec::write_string(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    return Err(Error::io("<stdout>", e).into())
                }
                _ => {}
            }
        }
    }
    Ok(())
}

impl GlobalConfig {
    fn report_format(&self) -> ReportFormat {
        match self.format {
            FormatArg::Tsv => ReportFormat::Tsv,
            FormatArg::Json => ReportFormat::Json,
        }
    }

    fn emit_report<R: Report + ?Sized>(&self, report: &R) -> CliResult {
        emit(
            self.output.as_deref(),
            &trec::render_report(report, self.report_format(), self.decimals),
        )
    }

    fn emit_run(&self, run: &Run, tag: &str) -> CliResult {
        emit(self.output.as_deref(), &trec::render_run(&run.to_records(tag)))
    }

    fn oer_config(&self) -> CliResult<OerConfig> {
        let cfg = OerConfig {
            alpha: self.alpha,
            tau_support: self.tau_support,
            ..Default::default()
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    fn coverage_options(&self) -> CoverageOptions {
        CoverageOptions {
            epsilon: self.epsilon,
            nonrel: match self.nonrel {
                NonRelArg::Judged => NonRelDenominator::Judged,
                NonRelArg::Pool => NonRelDenominator::PoolComplement,
            },
        }
    }

    fn load_index(&self) -> CliResult<CorpusIndex> {
        let qrels = require(&self.qrels, "qrels")?;
        let pool = require(&self.pool, "pool")?;
        let links = require(&self.links, "links")?;
        let qrels = trec::read_qrels(qrels)?;
        let pool = CandidatePool::from_records(&trec::read_run(pool, RunKind::Doc, self.lenient)?)?;
        let links = trec::read_entity_links(links)?;
        let opts = BuildOptions {
            lenient_links: self.lenient_links,
            min_rho: self.min_rho,
        };
        let index = build_index_with(qrels, pool, links, &opts)?;
        for w in &index.warnings {
            log::warn!("query {}: {:?}", w.query_id, w.kind);
        }
        Ok(index)
    }

    fn load_entity_run(&self) -> CliResult<Run> {
        let path = require(&self.entity_run, "entity-run")?;
        Ok(Run::from_records(&trec::read_run(path, RunKind::Entity, self.lenient)?))
    }

    fn load_doc_run(&self, index: &CorpusIndex) -> CliResult<Run> {
        match &self.doc_run {
            Some(p) => Ok(Run::from_records(&trec::read_run(p, RunKind::Doc, self.lenient)?)),
            None => Ok(eval::pool_run(index)),
        }
    }

    fn ks(&self) -> CliResult<Vec<usize>> {
        if self.k.is_empty() || self.k.contains(&0) {
            return Err(CliError::Usage("--k values must be positive".into()));
        }
        Ok(self.k.clone())
    }
}

fn run_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Rows of several reports sharing one header.
struct Concat {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Report for Concat {
    fn columns(&self) -> Vec<String> {
        self.columns.clone()
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.rows.clone()
    }
}

struct IndexSummary<'a>(&'a CorpusIndex);

impl Report for IndexSummary<'_> {
    fn columns(&self) -> Vec<String> {
        ["qid", "pool_size", "num_rel", "num_nonrel", "num_unjudged", "num_entities", "warnings"]
            .map(String::from)
            .to_vec()
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        let mut warnings: BTreeMap<&str, usize> = BTreeMap::new();
        for w in &self.0.warnings {
            *warnings.entry(w.query_id.as_str()).or_default() += 1;
        }
        self.0
            .queries()
            .map(|q| {
                vec![
                    Cell::text(&q.query_id),
                    Cell::Int(q.pool_size() as i64),
                    Cell::Int(q.num_rel as i64),
                    Cell::Int(q.num_nonrel as i64),
                    Cell::Int(q.num_unjudged() as i64),
                    Cell::Int(q.entities.len() as i64),
                    Cell::Int(warnings.get(q.query_id.as_str()).copied().unwrap_or(0) as i64),
                ]
            })
            .collect()
    }
}

/// The aggregate (`qid` = `all`) RelCov and NonRelCov at `k` of a coverage report.
fn aggregate_coverage(path: &Path, k: usize) -> CliResult<(f64, f64)> {
    let table = trec::read_table(path)?;
    let (qc, kc) = (table.column("qid")?, table.column("k")?);
    let (rc, nc) = (table.column("relcov")?, table.column("nonrelcov")?);
    let want = k.to_string();
    let (line, cells) = table
        .rows
        .iter()
        .find(|(_, c)| c[qc] == "all" && c[kc] == want)
        .ok_or_else(|| Error::parse(&table.source, 1, format!("no aggregate row for k={k}")))?;
    let num = |i: usize| -> CliResult<f64> {
        cells[i].parse().map_err(|_| {
            CliError::Data(Error::parse(&table.source, *line, format!("non-numeric value `{}`", cells[i])))
        })
    };
    Ok((num(rc)?, num(nc)?))
}

fn read_column(r: &ColumnRef, at_k: usize) -> CliResult<BTreeMap<String, f64>> {
    let table = trec::read_table(&r.path)?;
    let k = at_k.to_string();
    Ok(table.per_query(&r.column, Some(("k", &k)))?)
}

struct Series {
    qids: Vec<String>,
    y: Vec<f64>,
    coverage: Vec<f64>,
    controls: Vec<Column>,
}

/// Joins response, coverage and controls on query id, keeping queries
/// present in all of them.
fn load_series(inputs: &MetricInputs) -> CliResult<Series> {
    let mut y = read_column(&inputs.y, inputs.at_k)?;
    if let Some(minus) = &inputs.y_minus {
        let base = read_column(minus, inputs.at_k)?;
        y = y
            .into_iter()
            .filter_map(|(q, v)| base.get(&q).map(|b| (q, v - b)))
            .collect();
    }
    let cov = read_column(&inputs.coverage, inputs.at_k)?;
    let controls: Vec<(String, BTreeMap<String, f64>)> = inputs
        .controls
        .iter()
        .map(|c| read_column(c, inputs.at_k).map(|m| (c.column.clone(), m)))
        .collect::<CliResult<_>>()?;
    let qids: Vec<String> = y
        .keys()
        .filter(|q| cov.contains_key(*q) && controls.iter().all(|(_, m)| m.contains_key(*q)))
        .cloned()
        .collect();
    let dropped = y.len() - qids.len();
    if dropped > 0 {
        log::warn!("{dropped} queries lack a value in some input and were dropped");
    }
    let mut names = BTreeSet::new();
    let controls = controls
        .into_iter()
        .map(|(name, m)| {
            let mut name = name;
            while !names.insert(name.clone()) {
                name.push('\'');
            }
            Column::new(name, qids.iter().map(|q| m[q]).collect())
        })
        .collect();
    Ok(Series {
        y: qids.iter().map(|q| y[q]).collect(),
        coverage: qids.iter().map(|q| cov[q]).collect(),
        qids,
        controls,
    })
}

fn dispatch(cli: &Cli) -> CliResult {
    let g = &cli.global;
    match &cli.command {
        Command::IndexCheck => {
            let index = g.load_index()?;
            if !index.verify_stats() {
                return Err(Error::invalid("entity statistics do not match a recount").into());
            }
            g.emit_report(&IndexSummary(&index))
        }
        Command::Coverage { measure } => {
            let index = g.load_index()?;
            match measure {
                MeasureArg::Relcov => {
                    let run = g.load_entity_run()?;
                    let report = coverage::coverage_report(&index, &run, &g.ks()?, &g.coverage_options());
                    g.emit_report(&report)
                }
                MeasureArg::Oracle => g.emit_report(&coverage::oracle_report(&index)),
                MeasureArg::Observable => {
                    let table = oer::build_oer_table(&index, &g.oer_config()?);
                    match &g.entity_run {
                        None => g.emit_report(&coverage::observable_report(&index, &table, None)),
                        Some(_) => {
                            let run = g.load_entity_run()?;
                            let mut all = Concat {
                                columns: Vec::new(),
                                rows: Vec::new(),
                            };
                            for k in g.ks()? {
                                let r = coverage::observable_report(&index, &table, Some((&run, k)));
                                all.columns = r.columns();
                                all.rows.extend(r.rows());
                            }
                            g.emit_report(&all)
                        }
                    }
                }
            }
        }
        Command::Oer => {
            let index = g.load_index()?;
            let table = oer::build_oer_table(&index, &g.oer_config()?);
            for q in &table.skipped {
                log::warn!("query {q}: no relevant or no judged non-relevant candidates, OER skipped");
            }
            g.emit_report(&table)
        }
        Command::Rates => {
            let index = g.load_index()?;
            let table = oer::build_oer_table(&index, &g.oer_config()?);
            let run = g.load_entity_run()?;
            let rates = g
                .ks()?
                .into_iter()
                .map(|k| oer::run_rates(&run, &table, k))
                .collect::<crate::Result<_>>()?;
            let name = run_name(require(&g.entity_run, "entity-run")?);
            g.emit_report(&RatesReport { run_name: name, rates })
        }
        Command::DeriveQrels => {
            let index = g.load_index()?;
            let (_, qrels) = supervision::derive_binary_qrels(&index);
            emit(g.output.as_deref(), &trec::render_qrels(&qrels))
        }
        Command::PartitionStats => {
            let index = g.load_index()?;
            let (partition, _) = supervision::derive_binary_qrels(&index);
            let table = oer::build_oer_table(&index, &g.oer_config()?);
            let idf = supervision::pool_collection_idf(&index);
            g.emit_report(&supervision::partition_stats(&partition, &table, Some(&idf)))
        }
        Command::Consensus {
            variant,
            gate_min_df,
            k_out,
        } => {
            let index = g.load_index()?;
            let variant = match variant {
                VariantArg::Rho => consensus::Variant::Rho,
                VariantArg::Rank => consensus::Variant::Rank,
                VariantArg::RhoRank => consensus::Variant::RhoRank,
            };
            let cfg = ConsensusConfig {
                variant,
                gate_min_df: *gate_min_df,
                k_out: *k_out,
            };
            let (run, empty) = consensus::consensus_run(&index, &cfg)?;
            if !empty.is_empty() {
                log::warn!("{} queries have no entity left after the gate", empty.len());
            }
            g.emit_run(&run, &format!("consensus-{variant}"))
        }
        Command::IdfRescale => {
            let index = g.load_index()?;
            let run = g.load_entity_run()?;
            g.emit_run(&oer::local_idf_rescale_run(&run, &index), "idf-rescale")
        }
        Command::OerFilter { threshold } => {
            let index = g.load_index()?;
            let table = oer::build_oer_table(&index, &g.oer_config()?);
            let run = g.load_entity_run()?;
            let (filtered, emptied) = oer::oer_filter(&run, &table, *threshold);
            if !emptied.is_empty() {
                log::warn!("{} queries lost every entity to the filter", emptied.len());
            }
            g.emit_run(&filtered, &format!("oer-filter-{threshold}"))
        }
        Command::Eval { k_entities, gain } => {
            let index = g.load_index()?;
            let doc_run = g.load_doc_run(&index)?;
            let opts = EvalOptions {
                gain: match gain {
                    GainArg::Linear => Gain::Linear,
                    GainArg::Exponential => Gain::Exponential,
                },
                ..Default::default()
            };
            let (mode, entity_run) = match g.mode {
                EvalModeArg::OpenWorld => (EvalMode::OpenWorld, None),
                EvalModeArg::Conditional => (
                    EvalMode::Conditional {
                        k_entities: *k_entities,
                    },
                    Some(g.load_entity_run()?),
                ),
            };
            let report = eval::evaluate_run(&doc_run, &index, mode, entity_run.as_ref(), &opts)?;
            g.emit_report(&report)
        }
        Command::Rerank { lambda, k_entities } => {
            if !(0.0..=1.0).contains(lambda) {
                return Err(CliError::Usage(format!("--lambda {lambda} outside [0, 1]")));
            }
            let index = g.load_index()?;
            let doc_run = g.load_doc_run(&index)?;
            let entity_run = g.load_entity_run()?;
            let run = eval::interpolate_rerank_run(&index, &doc_run, &entity_run, *lambda, *k_entities)?;
            g.emit_run(&run, &format!("interp-{lambda}"))
        }
        Command::Frontier { reports, at_k } => {
            let points = reports
                .iter()
                .map(|p| aggregate_coverage(p, *at_k).map(|(r, n)| (run_name(p), r, n)))
                .collect::<CliResult<Vec<_>>>()?;
            let points = analysis::pareto_frontier(&points)?;
            g.emit_report(&FrontierReport { points })
        }
        Command::Correlate {
            x,
            y,
            reports,
            method,
            at_k,
        } => {
            let method = match method {
                MethodArg::Pearson => CorrelationMethod::Pearson,
                MethodArg::Spearman => CorrelationMethod::Spearman,
            };
            let (xs, ys): (Vec<f64>, Vec<f64>) = match (x, y) {
                (Some(x), Some(y)) if reports.is_empty() => {
                    let xm = read_column(x, *at_k)?;
                    let ym = read_column(y, *at_k)?;
                    xm.iter()
                        .filter_map(|(q, a)| ym.get(q).map(|b| (*a, *b)))
                        .unzip()
                }
                (None, None) if !reports.is_empty() => reports
                    .iter()
                    .map(|p| aggregate_coverage(p, *at_k))
                    .collect::<CliResult<Vec<_>>>()?
                    .into_iter()
                    .unzip(),
                _ => {
                    return Err(CliError::Usage(
                        "give either --x and --y, or a list of coverage reports".into(),
                    ))
                }
            };
            let c = analysis::correlate(&xs, &ys, method)?;
            if c.is_degenerate() {
                log::warn!("an input has zero variance; correlation undefined");
            }
            g.emit_report(&c)
        }
        Command::Stratify {
            values,
            buckets,
            at_k,
        } => {
            let values = read_column(values, *at_k)?;
            let b = analysis::stratify(&values, *buckets)?;
            g.emit_report(&StrataReport { values, buckets: b })
        }
        Command::Regress { inputs } => {
            let s = load_series(inputs)?;
            let fit = analysis::ols_regress(&s.y, &s.coverage, &s.controls)?;
            log::info!("regressed {} queries", s.qids.len());
            g.emit_report(&fit)
        }
        Command::Breakpoint {
            inputs,
            taus,
            min_side,
        } => {
            let s = load_series(inputs)?;
            let resid = analysis::residualize(&s.y, &s.controls)?;
            let taus = if taus.is_empty() { s.coverage.clone() } else { taus.clone() };
            let bp = analysis::breakpoint_sweep(&resid, &s.coverage, &taus, *min_side)?;
            g.emit_report(&bp)
        }
        Command::Synth(a) => {
            let cfg = SynthConfig {
                num_queries: a.num_queries,
                pool_size: a.pool_size,
                num_rel_per_query: a.num_rel,
                entity_vocab_size: a.vocab,
                signal_entities_per_query: a.signals,
                signal_linking_recall: a.signal_recall,
                generic_entity_rate: a.generic_rate,
                seed: g.seed,
                generic_entities: a.generics,
                background_entities_per_doc: a.background,
                signal_leak_rate: a.signal_leak,
                unjudged_rate: a.unjudged_rate,
                highly_relevant_rate: a.highly_relevant_rate,
            };
            cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let env = synth::generate(&cfg)?;
            synth::write_env(&env, &a.out_dir)?;
            let planted = synth::planted_run(&env.truth, false);
            trec::write_string(
                &a.out_dir.join("planted.run"),
                &trec::render_run(&planted.to_records("planted")),
            )?;
            let mixed = synth::planted_run(&env.truth, true);
            trec::write_string(
                &a.out_dir.join("mixed.run"),
                &trec::render_run(&mixed.to_records("mixed")),
            )?;
            Ok(())
        }
    }
}
