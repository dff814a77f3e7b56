//! Cross-run statistics: coverage frontier, correlation, stratification,
//! OLS with controls and a two-segment breakpoint sweep.
//!
//! p-values use Student-t approximations throughout.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::trec::{Cell, Report};

// ---------------------------------------------------------------------------
// frontier

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierPoint {
    pub run_id: String,
    pub relcov: f64,
    pub nonrelcov: f64,
    pub on_frontier: bool,
}

/// `a` dominates `b` when it reaches at least as many relevant documents with
/// no more non-relevant ones, strictly better in one of the two.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    let ((ra, na), (rb, nb)) = (a, b);
    na <= nb && ra >= rb && (na < nb || ra > rb)
}

/// Marks the non-dominated points (high RelCov, low NonRelCov). Output keeps
/// input order. Runs in `O(n log n)`.
pub fn pareto_frontier(points: &[(String, f64, f64)]) -> Result<Vec<FrontierPoint>> {
    if let Some((id, _, _)) = points.iter().find(|(_, r, n)| !r.is_finite() || !n.is_finite()) {
        return Err(Error::invalid(format!("run {id}: non-finite coverage")));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    // nonrelcov ascending, relcov descending
    order.sort_by(|&i, &j| {
        points[i]
            .2
            .total_cmp(&points[j].2)
            .then(points[j].1.total_cmp(&points[i].1))
    });
    let mut on = vec![false; points.len()];
    let mut best_before = f64::NEG_INFINITY; // best relcov at strictly smaller nonrelcov
    let mut g = 0;
    while g < order.len() {
        let nonrel = points[order[g]].2;
        let mut end = g;
        while end < order.len() && points[order[end]].2 == nonrel {
            end += 1;
        }
        let group_best = points[order[g]].1;
        for &i in &order[g..end] {
            on[i] = points[i].1 == group_best && group_best > best_before;
        }
        best_before = best_before.max(group_best);
        g = end;
    }
    Ok(points
        .iter()
        .zip(on)
        .map(|((id, r, n), on_frontier)| FrontierPoint {
            run_id: id.clone(),
            relcov: *r,
            nonrelcov: *n,
            on_frontier,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierReport {
    pub points: Vec<FrontierPoint>,
}

impl Report for FrontierReport {
    fn columns(&self) -> Vec<String> {
        ["run_id", "relcov", "nonrelcov", "on_frontier"].map(String::from).to_vec()
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.points
            .iter()
            .map(|p| {
                vec![
                    Cell::text(&p.run_id),
                    Cell::Real(p.relcov),
                    Cell::Real(p.nonrelcov),
                    Cell::Bool(p.on_frontier),
                ]
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// correlation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrelationMethod {
    #[default]
    Pearson,
    Spearman,
}

impl CorrelationMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CorrelationMethod::Pearson => "pearson",
            CorrelationMethod::Spearman => "spearman",
        }
    }
}

impl fmt::Display for CorrelationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorrelationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pearson" => Ok(CorrelationMethod::Pearson),
            "spearman" => Ok(CorrelationMethod::Spearman),
            _ => Err(Error::invalid(format!("unknown correlation method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub method: CorrelationMethod,
    pub n: usize,
    /// `None` when either input has zero variance.
    pub r: Option<f64>,
    pub p_value: Option<f64>,
}

impl Correlation {
    pub fn is_degenerate(&self) -> bool {
        self.r.is_none()
    }
}

fn pearson_r(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided p-value of a Student-t statistic.
pub fn t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    if t.is_nan() {
        return 1.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

pub fn correlate(xs: &[f64], ys: &[f64], method: CorrelationMethod) -> Result<Correlation> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!(
            "correlation inputs differ in length ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 3 {
        return Err(Error::invalid("correlation needs at least 3 pairs"));
    }
    let r = match method {
        CorrelationMethod::Pearson => pearson_r(xs, ys),
        CorrelationMethod::Spearman => pearson_r(&average_ranks(xs), &average_ranks(ys)),
    };
    let n = xs.len();
    let p_value = r.map(|r| {
        let df = (n - 2) as f64;
        if r.abs() >= 1.0 {
            0.0
        } else {
            t_two_sided(r * (df / (1.0 - r * r)).sqrt(), df)
        }
    });
    Ok(Correlation { method, n, r, p_value })
}

impl Report for Correlation {
    fn columns(&self) -> Vec<String> {
        ["method", "n", "r", "p_value"].map(String::from).to_vec()
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        vec![vec![
            Cell::text(self.method.as_str()),
            Cell::Int(self.n as i64),
            Cell::opt(self.r),
            Cell::opt(self.p_value),
        ]]
    }
}

// ---------------------------------------------------------------------------
// stratification

/// Splits queries into `buckets` groups of equal size after sorting by value
/// (ties by query id). Leading buckets absorb the remainder. Bucket numbers
/// start at 0 for the lowest values.
pub fn stratify(values: &BTreeMap<String, f64>, buckets: usize) -> Result<BTreeMap<String, usize>> {
    if buckets == 0 {
        return Err(Error::invalid("bucket count must be positive"));
    }
    if values.len() < buckets {
        return Err(Error::invalid(format!(
            "{} queries cannot fill {buckets} buckets",
            values.len()
        )));
    }
    let mut sorted: Vec<(&String, f64)> = values.iter().map(|(q, v)| (q, *v)).collect();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    let base = sorted.len() / buckets;
    let extra = sorted.len() % buckets;
    let mut out = BTreeMap::new();
    let mut it = sorted.into_iter();
    for b in 0..buckets {
        let size = base + usize::from(b < extra);
        for (q, _) in it.by_ref().take(size) {
            out.insert(q.clone(), b);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrataReport {
    pub values: BTreeMap<String, f64>,
    pub buckets: BTreeMap<String, usize>,
}

impl Report for StrataReport {
    fn columns(&self) -> Vec<String> {
        ["qid", "value", "bucket"].map(String::from).to_vec()
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.buckets
            .iter()
            .map(|(q, b)| vec![Cell::text(q), Cell::Real(self.values[q]), Cell::Int(*b as i64)])
            .collect()
    }
}

// ---------------------------------------------------------------------------
// regression

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

impl Column {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Column {
            name: name.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub n: usize,
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
}

impl OlsFit {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

/// Least squares with an intercept, solved by modified Gram-Schmidt QR.
/// A column whose component orthogonal to the earlier columns vanishes is
/// reported as collinear.
pub fn ols_fit(y: &[f64], predictors: &[Column]) -> Result<OlsFit> {
    let n = y.len();
    let p = predictors.len() + 1;
    if let Some(c) = predictors.iter().find(|c| c.values.len() != n) {
        return Err(Error::invalid(format!(
            "column `{}` has {} values, response has {n}",
            c.name,
            c.values.len()
        )));
    }
    if n <= p {
        return Err(Error::invalid(format!(
            "{n} observations are too few for {} predictors plus an intercept",
            p - 1
        )));
    }
    let mut names = vec!["intercept".to_string()];
    names.extend(predictors.iter().map(|c| c.name.clone()));
    let mut q: Vec<Vec<f64>> = std::iter::once(vec![1.0; n])
        .chain(predictors.iter().map(|c| c.values.clone()))
        .collect();
    let mut r = vec![vec![0.0; p]; p];
    for j in 0..p {
        let norm0 = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        for i in 0..j {
            let dot: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
            r[i][j] = dot;
            let qi = q[i].clone();
            for (v, u) in q[j].iter_mut().zip(&qi) {
                *v -= dot * u;
            }
        }
        let norm = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-10 * norm0.max(1.0) {
            return Err(Error::RankDeficient {
                column: names[j].clone(),
                others: names[..j].to_vec(),
            });
        }
        r[j][j] = norm;
        for v in q[j].iter_mut() {
            *v /= norm;
        }
    }

    // beta = R^-1 Q^T y
    let qty: Vec<f64> = q.iter().map(|col| col.iter().zip(y).map(|(a, b)| a * b).sum()).collect();
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|k| r[i][k] * beta[k]).sum();
        beta[i] = (qty[i] - s) / r[i][i];
    }

    let design = |row: usize, j: usize| if j == 0 { 1.0 } else { predictors[j - 1].values[row] };
    let fitted: Vec<f64> = (0..n).map(|i| (0..p).map(|j| design(i, j) * beta[j]).sum()).collect();
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    // a constant response is fully explained by the intercept alone
    let r_squared = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else { 0.0 };

    // (X^T X)^-1 = R^-1 R^-T; only the diagonal is needed
    let mut rinv = vec![vec![0.0; p]; p];
    for c in 0..p {
        for i in (0..=c).rev() {
            let rhs = if i == c { 1.0 } else { 0.0 };
            let s: f64 = (i + 1..=c).map(|k| r[i][k] * rinv[k][c]).sum();
            rinv[i][c] = (rhs - s) / r[i][i];
        }
    }
    let df = (n - p) as f64;
    let sigma2 = ssr / df;
    let coefficients = (0..p)
        .map(|j| {
            let var: f64 = (j..p).map(|c| rinv[j][c] * rinv[j][c]).sum::<f64>() * sigma2;
            let se = var.sqrt();
            let (t, pv) = if se > 0.0 {
                let t = beta[j] / se;
                (t, t_two_sided(t, df))
            } else if beta[j] == 0.0 {
                (0.0, 1.0)
            } else {
                (beta[j].signum() * f64::INFINITY, 0.0)
            };
            Coefficient {
                name: names[j].clone(),
                estimate: beta[j],
                std_error: se,
                t_stat: t,
                p_value: pv,
            }
        })
        .collect();
    Ok(OlsFit {
        coefficients,
        r_squared,
        n,
        residuals,
        fitted,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Breakpoint {
    pub tau: f64,
    pub below_n: usize,
    pub above_n: usize,
    pub below_mean: f64,
    pub above_mean: f64,
    pub rss: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub fit: OlsFit,
    pub breakpoint: Option<Breakpoint>,
}

impl RegressionResult {
    pub fn coverage_beta(&self) -> f64 {
        self.fit.coefficient("coverage").map_or(f64::NAN, |c| c.estimate)
    }

    pub fn r_squared(&self) -> f64 {
        self.fit.r_squared
    }
}

/// Regresses per-query ΔAP on coverage plus control columns (e.g. baseline
/// AP and number of relevant documents).
pub fn ols_regress(delta_ap: &[f64], coverage: &[f64], controls: &[Column]) -> Result<RegressionResult> {
    let mut cols = vec![Column::new("coverage", coverage.to_vec())];
    cols.extend(controls.iter().cloned());
    Ok(RegressionResult {
        fit: ols_fit(delta_ap, &cols)?,
        breakpoint: None,
    })
}

/// Residuals of `y` after regressing out the controls (with intercept).
pub fn residualize(y: &[f64], controls: &[Column]) -> Result<Vec<f64>> {
    if controls.is_empty() {
        return Ok(y.to_vec());
    }
    Ok(ols_fit(y, controls)?.residuals)
}

impl Report for RegressionResult {
    fn columns(&self) -> Vec<String> {
        ["term", "estimate", "std_error", "t_stat", "p_value", "r_squared", "n"]
            .map(String::from)
            .to_vec()
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.fit
            .coefficients
            .iter()
            .map(|c| {
                vec![
                    Cell::text(&c.name),
                    Cell::Real(c.estimate),
                    Cell::Real(c.std_error),
                    Cell::Real(c.t_stat),
                    Cell::Real(c.p_value),
                    Cell::Real(self.fit.r_squared),
                    Cell::Int(self.fit.n as i64),
                ]
            })
            .collect()
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum())
}

/// Two-segment step fit: for each candidate `tau`, queries with coverage
/// below `tau` form one segment and the rest the other. The `tau` with the
/// smallest pooled residual sum of squares wins (ties to the smallest
/// `tau`); its p-value is a pooled-variance two-sample t-test on the two
/// segment means. Candidates leaving fewer than `min_side` queries on either
/// side are skipped.
pub fn breakpoint_sweep(delta_ap: &[f64], coverage: &[f64], candidate_taus: &[f64], min_side: usize) -> Result<Breakpoint> {
    if delta_ap.len() != coverage.len() {
        return Err(Error::invalid("response and coverage differ in length"));
    }
    let mut taus = candidate_taus.to_vec();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let mut best: Option<Breakpoint> = None;
    for tau in taus {
        let (below, above): (Vec<(f64, f64)>, Vec<(f64, f64)>) =
            coverage.iter().copied().zip(delta_ap.iter().copied()).partition(|(c, _)| *c < tau);
        if below.len() < min_side.max(1) || above.len() < min_side.max(1) {
            continue;
        }
        let b: Vec<f64> = below.iter().map(|p| p.1).collect();
        let a: Vec<f64> = above.iter().map(|p| p.1).collect();
        let (mb, ssb) = mean_var(&b);
        let (ma, ssa) = mean_var(&a);
        let rss = ssb + ssa;
        if best.as_ref().map_or(true, |bp| rss < bp.rss) {
            let df = (b.len() + a.len() - 2) as f64;
            let se = (rss / df * (1.0 / b.len() as f64 + 1.0 / a.len() as f64)).sqrt();
            let p_value = if se > 0.0 {
                t_two_sided((ma - mb) / se, df)
            } else if ma == mb {
                1.0
            } else {
                0.0
            };
            best = Some(Breakpoint {
                tau,
                below_n: b.len(),
                above_n: a.len(),
                below_mean: mb,
                above_mean: ma,
                rss,
                p_value,
            });
        }
    }
    best.ok_or_else(|| {
        Error::invalid(format!(
            "no candidate threshold leaves at least {min_side} queries on each side"
        ))
    })
}

impl Report for Breakpoint {
    fn columns(&self) -> Vec<String> {
        ["tau", "below_n", "above_n", "below_mean", "above_mean", "rss", "p_value"]
            .map(String::from)
            .to_vec()
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        vec![vec![
            Cell::Real(self.tau),
            Cell::Int(self.below_n as i64),
            Cell::Int(self.above_n as i64),
            Cell::Real(self.below_mean),
            Cell::Real(self.above_mean),
            Cell::Real(self.rss),
            Cell::Real(self.p_value),
        ]]
    }
}
