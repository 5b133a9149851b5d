//! Directed-network measures built on the estimators: total hub
//! communicability `e_i^T sinh◇(A) 1`, resolvent communicability
//! `[h◇(A)]_ij` with `h(t) = alpha t / (1 - (alpha t)^2)`, side-by-side
//! approach comparisons, Matrix Market I/O and synthetic graphs.
//!
//! Node ids are 0-based throughout the library.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::block::{block_gk_estimate, block_pair_estimate, PairOptions};
use crate::dense::norm2;
use crate::error::{GmfError, Result};
use crate::functions::ScalarFunction;
use crate::gk::{step_limit, gk_extend, gk_run, DEFAULT_BREAKDOWN_TOL};
use crate::oracle::{compact_svd, CompactSvd, DEFAULT_RANK_TOL};
use crate::quadrature::{action_coefficients, bilinear_estimate_with, estimate_sigma_max, EstimateOptions, Approach, QuadratureResult, Tracker};
use crate::sparse::{CsrMatrix, DenseMatrix, DenseVector};

pub const DEFAULT_CENTRALITY_TOL: f64 = 1e-6;
pub const DEFAULT_COMMUNICABILITY_TOL: f64 = 1e-4;
pub const DEFAULT_ORACLE_LIMIT: usize = 2000;

#[derive(Debug, Clone)]
pub struct Digraph {
    pub adjacency: CsrMatrix,
    pub node_labels: Option<Vec<String>>,
}

impl Digraph {
    pub fn new(adjacency: CsrMatrix) -> Result<Self> {
        if adjacency.nrows() != adjacency.ncols() {
            return Err(GmfError::Construction(format!(
                "adjacency matrix must be square, got {}x{}",
                adjacency.nrows(),
                adjacency.ncols()
            )));
        }
        Ok(Self {
            adjacency,
            node_labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(GmfError::Construction(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.n()
            )));
        }
        self.node_labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    fn check_node(&self, i: usize) -> Result<()> {
        if i < self.n() {
            Ok(())
        } else {
            Err(GmfError::InvalidParameter(format!("node {i} out of range for {} nodes", self.n())))
        }
    }
}

/// Reads a Matrix Market coordinate file.
pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<Digraph> {
    let file = std::fs::File::open(path)?;
    parse_matrix_market(file)
}

/// Parses Matrix Market `coordinate` data with `real`, `integer` or
/// `pattern` entries and `general` or `symmetric` storage. Pattern entries
/// become `1.0`; symmetric storage is expanded.
pub fn parse_matrix_market(reader: impl Read) -> Result<Digraph> {
    let reader = BufReader::new(reader);
    let mut lines = reader.lines().enumerate();
    let parse_err = |line: usize, message: String| GmfError::Parse { line: line + 1, message };

    let (hline, header) = match lines.next() {
        Some((i, l)) => (i, l?),
        None => return Err(parse_err(0, "empty input".into())),
    };
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" || tokens[2] != "coordinate" {
        return Err(parse_err(hline, format!("unsupported header `{header}`")));
    }
    let pattern = match tokens[3].as_str() {
        "real" | "integer" => false,
        "pattern" => true,
        other => return Err(parse_err(hline, format!("unsupported field `{other}`"))),
    };
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(hline, format!("unsupported symmetry `{other}`"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triples = Vec::new();
    for (i, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(parse_err(i, format!("expected `rows cols entries`, got `{t}`")));
                }
                let nums: std::result::Result<Vec<usize>, _> = fields.iter().map(|f| f.parse::<usize>()).collect();
                let nums = nums.map_err(|e| parse_err(i, e.to_string()))?;
                size = Some((nums[0], nums[1], nums[2]));
                triples.reserve(nums[2]);
            }
            Some((m, n, _)) => {
                let want = if pattern { 2 } else { 3 };
                if fields.len() < want {
                    return Err(parse_err(i, format!("expected {want} fields, got `{t}`")));
                }
                let r: usize = fields[0].parse().map_err(|_| parse_err(i, format!("bad row index `{}`", fields[0])))?;
                let c: usize = fields[1].parse().map_err(|_| parse_err(i, format!("bad column index `{}`", fields[1])))?;
                if r == 0 || c == 0 || r > m || c > n {
                    return Err(parse_err(i, format!("index ({r}, {c}) outside {m}x{n}")));
                }
                let v = if pattern {
                    1.0
                } else {
                    fields[2].parse::<f64>().map_err(|_| parse_err(i, format!("bad value `{}`", fields[2])))?
                };
                triples.push((r - 1, c - 1, v));
                if symmetric && r != c {
                    triples.push((c - 1, r - 1, v));
                }
            }
        }
    }
    let (m, n, _) = size.ok_or_else(|| parse_err(hline, "missing size line".into()))?;
    let adjacency = CsrMatrix::from_coordinates(&triples, m, n)?;
    Digraph::new(adjacency)
}

/// Writes the adjacency as a general real coordinate Matrix Market file.
pub fn write_matrix_market(g: &Digraph, mut out: impl Write) -> Result<()> {
    let a = &g.adjacency;
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for (r, c, v) in a.triplets() {
        writeln!(out, "{} {} {}", r + 1, c + 1, v)?;
    }
    Ok(())
}

/// One estimated quantity in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// Node id, or `i:j` for a pair (0-based).
    pub ids: String,
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub iterations: usize,
    pub residual: Option<f64>,
    pub converged: bool,
    pub approach: String,
    pub function: String,
    pub param: Option<f64>,
}

impl ReportRow {
    fn from_result(ids: String, r: &QuadratureResult, approach: Approach, f: &ScalarFunction, param: Option<f64>) -> Self {
        Self {
            ids,
            value: r.value,
            lower: r.lower,
            upper: r.upper,
            iterations: r.steps,
            residual: r.residual,
            converged: r.converged,
            approach: approach.name().to_string(),
            function: f.name().to_string(),
            param,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub quantity: String,
    pub tol: f64,
    pub max_steps: usize,
    pub notes: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }
}

pub type CentralityReport = Report;

/// Step at which each row of `A` first enters the left Krylov space started
/// at `w`: rows hit by `A w` have level 1, rows hit by `A A^T A w` level 2,
/// and so on. Rows never reached give `None`, and `e_i^T f◇(A) w` is then
/// exactly zero.
pub fn row_levels(a: &CsrMatrix, w: &DenseVector) -> Vec<Option<usize>> {
    let at = a.transpose();
    let mut row_level = vec![None; a.nrows()];
    let mut col_seen = vec![false; a.ncols()];
    let mut cols: Vec<usize> = (0..a.ncols()).filter(|&j| w[j] != 0.0).collect();
    for &j in &cols {
        col_seen[j] = true;
    }
    let mut level = 0;
    while !cols.is_empty() {
        level += 1;
        let mut rows = Vec::new();
        for &j in &cols {
            for (i, v) in at.row(j) {
                if v != 0.0 && row_level[i].is_none() {
                    row_level[i] = Some(level);
                    rows.push(i);
                }
            }
        }
        cols.clear();
        for &i in &rows {
            for (j, v) in a.row(i) {
                if v != 0.0 && !col_seen[j] {
                    col_seen[j] = true;
                    cols.push(j);
                }
            }
        }
    }
    row_level
}

fn structural_zero() -> QuadratureResult {
    QuadratureResult {
        value: 0.0,
        lower: None,
        upper: None,
        steps: 0,
        residual: None,
        converged: true,
        breakdown_exact: false,
        history: Vec::new(),
    }
}

/// `e_i^T f◇(A) w` by one of the polarization approaches. The early iterates
/// are zero until the Krylov space reaches row `i`, so no stopping test runs
/// before then.
#[allow(clippy::too_many_arguments)]
fn unit_bilinear(
    a: &CsrMatrix,
    f: &ScalarFunction,
    i: usize,
    w: &DenseVector,
    level: Option<usize>,
    approach: Approach,
    tol: f64,
    max_steps: usize,
) -> Result<QuadratureResult> {
    let Some(level) = level else {
        return Ok(structural_zero());
    };
    let mut opts = EstimateOptions::new(approach, tol, max_steps);
    opts.min_steps = level + 1;
    bilinear_estimate_with(&unit(a.nrows(), i), a, f, w, &opts)
}

/// Estimates `e_i^T f◇(A) w` for every `i` in `targets` from a single
/// factorization started at `w`, each target stopping at its own first step
/// that meets the relative-change rule. Targets the Krylov space can never
/// reach are exact zeros and take no steps.
pub fn action_targets(
    a: &CsrMatrix,
    f: &ScalarFunction,
    w: &DenseVector,
    targets: &[usize],
    tol: f64,
    max_steps: usize,
) -> Result<Vec<QuadratureResult>> {
    let wn = w.norm();
    if wn == 0.0 {
        return Err(GmfError::ZeroStartVector);
    }
    let levels = row_levels(a, w);
    let mut done: Vec<bool> = targets.iter().map(|&i| levels[i].is_none()).collect();
    let mut trackers: Vec<Tracker> = targets
        .iter()
        .map(|&i| Tracker::with_min_steps(tol, levels[i].map_or(0, |l| l + 1)))
        .collect();
    let limit = step_limit(a);
    let max_steps = max_steps.min(limit).max(1);
    let mut exact = false;
    if !done.iter().all(|&d| d) {
        let mut fact = gk_run(a, &(w / wn), 0, DEFAULT_BREAKDOWN_TOL)?;
        for _ in 0..max_steps {
            fact = gk_extend(fact, a, 1)?;
            exact = fact.breakdown || fact.steps >= limit;
            let coeffs = action_coefficients(&fact, f)?;
            let p = fact.effective_p();
            for (t, &i) in targets.iter().enumerate() {
                if done[t] {
                    continue;
                }
                let x = wn * p.row(i).transpose().dot(&coeffs);
                if trackers[t].push(x) || exact {
                    done[t] = true;
                }
            }
            if done.iter().all(|&d| d) {
                break;
            }
        }
    }
    Ok(trackers
        .into_iter()
        .zip(targets)
        .map(|(t, &i)| {
            if levels[i].is_none() {
                return structural_zero();
            }
            let finished_exact = exact && !t.converged;
            QuadratureResult {
                value: t.last(),
                lower: None,
                upper: None,
                steps: t.history.len(),
                residual: t.residual,
                converged: t.converged || finished_exact,
                breakdown_exact: exact && finished_exact,
                history: t.history,
            }
        })
        .collect())
}

/// Total hub communicability `C_h(i) = e_i^T sinh◇(A) 1`.
///
/// The start vector is `1 / sqrt n` and results are rescaled by `sqrt n`. The
/// action approach serves all nodes from one factorization.
pub fn hub_communicability(
    g: &Digraph,
    nodes: &[usize],
    approach: Approach,
    tol: f64,
    max_steps: usize,
) -> Result<CentralityReport> {
    total_communicability(g, &ScalarFunction::sinh(), nodes, approach, tol, max_steps)
}

/// `e_i^T f◇(A) 1` for each node, computed like [`hub_communicability`].
pub fn total_communicability(
    g: &Digraph,
    f: &ScalarFunction,
    nodes: &[usize],
    approach: Approach,
    tol: f64,
    max_steps: usize,
) -> Result<CentralityReport> {
    for &i in nodes {
        g.check_node(i)?;
    }
    let n = g.n();
    let ones = DenseVector::from_element(n, 1.0);
    let results = if n == 0 {
        Vec::new()
    } else if approach == Approach::Action {
        action_targets(&g.adjacency, f, &ones, nodes, tol, max_steps)?
    } else {
        let levels = row_levels(&g.adjacency, &ones);
        nodes
            .iter()
            .map(|&i| unit_bilinear(&g.adjacency, f, i, &ones, levels[i], approach, tol, max_steps))
            .collect::<Result<Vec<_>>>()?
    };
    let param = f.params().first().copied();
    Ok(Report {
        quantity: if f.name() == "sinh" { "hub_communicability" } else { "total_communicability" }.into(),
        tol,
        max_steps,
        notes: vec!["start vector 1/sqrt(n), result rescaled by sqrt(n)".into()],
        rows: nodes
            .iter()
            .zip(&results)
            .map(|(&i, r)| ReportRow::from_result(i.to_string(), r, approach, f, param))
            .collect(),
    })
}

/// Resolvent communicability `[h◇(A)]_ij` with `alpha = alpha_rel / sigma_1`.
pub fn resolvent_communicability(
    g: &Digraph,
    pairs: &[(usize, usize)],
    alpha_rel: f64,
    approach: Approach,
    tol: f64,
    max_steps: usize,
) -> Result<Report> {
    if !(alpha_rel > 0.0 && alpha_rel < 1.0) {
        return Err(GmfError::InvalidParameter(format!(
            "alpha_rel = {alpha_rel} must lie in (0, 1); otherwise the pole enters the spectrum"
        )));
    }
    for &(i, j) in pairs {
        g.check_node(i)?;
        g.check_node(j)?;
    }
    let a = &g.adjacency;
    let sigma = estimate_sigma_max(a, 1e-10, 100_000)?;
    let alpha = alpha_rel / sigma.value;
    let f = ScalarFunction::resolvent(alpha)?;
    let n = g.n();

    let mut results: Vec<Option<QuadratureResult>> = vec![None; pairs.len()];
    if approach == Approach::Action {
        // pairs sharing a column share a factorization
        let mut by_col: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, &(_, j)) in pairs.iter().enumerate() {
            by_col.entry(j).or_default().push(k);
        }
        for (j, ks) in by_col {
            let rows: Vec<usize> = ks.iter().map(|&k| pairs[k].0).collect();
            let rs = action_targets(a, &f, &unit(n, j), &rows, tol, max_steps)?;
            for (k, r) in ks.into_iter().zip(rs) {
                results[k] = Some(r);
            }
        }
    } else {
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let w = unit(n, j);
            let level = row_levels(a, &w)[i];
            results[k] = Some(unit_bilinear(a, &f, i, &w, level, approach, tol, max_steps)?);
        }
    }
    Ok(Report {
        quantity: "resolvent_communicability".into(),
        tol,
        max_steps,
        notes: vec![format!(
            "alpha = alpha_rel / sigma_1 with sigma_1 ~= {:.17e}{}",
            sigma.value,
            if sigma.converged { "" } else { " (power iteration did not converge)" }
        )],
        rows: pairs
            .iter()
            .zip(results)
            .map(|(&(i, j), r)| {
                ReportRow::from_result(format!("{i}:{j}"), &r.expect("filled"), approach, &f, Some(alpha_rel))
            })
            .collect(),
    })
}

fn unit(n: usize, i: usize) -> DenseVector {
    let mut v = DenseVector::zeros(n);
    v[i] = 1.0;
    v
}

/// What [`compare_approaches`] should estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum Quantity {
    Hub { nodes: Vec<usize> },
    Resolvent { pairs: Vec<(usize, usize)>, alpha_rel: f64 },
    /// `Z^T h◇(A) Z` for `Z = [e_i ...]`, with `h = sinh` when `alpha_rel` is
    /// absent and the resolvent otherwise. `ell` is the block Gauss level.
    Block { nodes: Vec<usize>, alpha_rel: Option<f64>, ell: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub approach: String,
    pub ids: String,
    pub iterations: usize,
    pub estimate: f64,
    pub relative_error: Option<f64>,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub quantity: String,
    pub tol: f64,
    pub oracle_used: bool,
    pub rows: Vec<ComparisonRow>,
}

/// Runs every applicable approach on the same inputs, with relative errors
/// against a dense oracle when the graph has at most `oracle_limit` nodes.
pub fn compare_approaches(
    g: &Digraph,
    quantity: &Quantity,
    tol: f64,
    max_steps: usize,
    oracle_limit: usize,
) -> Result<Comparison> {
    let n = g.n();
    let oracle = if n <= oracle_limit && n > 0 {
        Some(compact_svd(&g.adjacency.to_dense(), DEFAULT_RANK_TOL)?)
    } else {
        None
    };
    let rel = |est: f64, exact: Option<f64>| {
        exact.map(|e| if e == 0.0 { (est - e).abs() } else { ((est - e) / e).abs() })
    };
    let mut rows = Vec::new();
    let name;
    match quantity {
        Quantity::Hub { nodes } => {
            name = "hub_communicability".to_string();
            let f = ScalarFunction::sinh();
            let ones = DenseVector::from_element(n, 1.0);
            let exact: Vec<Option<f64>> = nodes
                .iter()
                .map(|&i| oracle.as_ref().map(|o| svd_bilinear(o, &unit(n, i), &f, &ones)).transpose())
                .collect::<Result<_>>()?;
            for approach in Approach::ALL {
                let report = hub_communicability(g, nodes, approach, tol, max_steps)?;
                for (row, e) in report.rows.iter().zip(&exact) {
                    rows.push(comparison_row(approach.name(), row, rel(row.value, *e)));
                }
            }
        }
        Quantity::Resolvent { pairs, alpha_rel } => {
            name = "resolvent_communicability".to_string();
            let sigma = estimate_sigma_max(&g.adjacency, 1e-10, 100_000)?;
            let f = ScalarFunction::resolvent(alpha_rel / sigma.value)?;
            let exact: Vec<Option<f64>> = pairs
                .iter()
                .map(|&(i, j)| oracle.as_ref().map(|o| svd_bilinear(o, &unit(n, i), &f, &unit(n, j))).transpose())
                .collect::<Result<_>>()?;
            for approach in Approach::ALL {
                let report = resolvent_communicability(g, pairs, *alpha_rel, approach, tol, max_steps)?;
                for (row, e) in report.rows.iter().zip(&exact) {
                    rows.push(comparison_row(approach.name(), row, rel(row.value, *e)));
                }
            }
        }
        Quantity::Block { nodes, alpha_rel, ell } => {
            name = "block_communicability".to_string();
            for &i in nodes {
                g.check_node(i)?;
            }
            let a = &g.adjacency;
            let f = match alpha_rel {
                Some(ar) => ScalarFunction::resolvent(ar / estimate_sigma_max(a, 1e-10, 100_000)?.value)?,
                None => ScalarFunction::sinh(),
            };
            let mut z = DenseMatrix::zeros(n, nodes.len());
            for (c, &i) in nodes.iter().enumerate() {
                z[(i, c)] = 1.0;
            }
            let exact = oracle.as_ref().map(|o| svd_block_bilinear(o, &z, &f, &z)).transpose()?;
            let block_err = |m: &DenseMatrix| exact.as_ref().map(|e| norm2(&(m - e)) / norm2(e));
            let ids = nodes.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",");

            let pair = block_pair_estimate(a, &z, &z, &f, *ell, &PairOptions::default())?;
            rows.push(ComparisonRow {
                approach: "block_gauss_anti_gauss".into(),
                ids: ids.clone(),
                iterations: pair.levels,
                estimate: norm2(&pair.f),
                relative_error: block_err(&pair.f),
                history: vec![pair.distance],
            });
            let gk = block_gk_estimate(a, &z, &z, &f, tol, max_steps)?;
            rows.push(ComparisonRow {
                approach: "block_golub_kahan".into(),
                ids,
                iterations: gk.steps,
                estimate: norm2(&gk.f),
                relative_error: block_err(&gk.f),
                history: gk.history,
            });
        }
    }
    Ok(Comparison {
        quantity: name,
        tol,
        oracle_used: oracle.is_some(),
        rows,
    })
}

fn comparison_row(approach: &str, row: &ReportRow, relative_error: Option<f64>) -> ComparisonRow {
    ComparisonRow {
        approach: approach.to_string(),
        ids: row.ids.clone(),
        iterations: row.iterations,
        estimate: row.value,
        relative_error,
        history: Vec::new(),
    }
}

/// `z^T f◇(A) w` from a precomputed compact SVD.
pub fn svd_bilinear(svd: &CompactSvd, z: &DenseVector, f: &ScalarFunction, w: &DenseVector) -> Result<f64> {
    let zu = svd.u.tr_mul(z);
    let vw = svd.v.tr_mul(w);
    let mut total = 0.0;
    for (i, &s) in svd.sigma.iter().enumerate() {
        total += f.try_eval_f(s)? * zu[i] * vw[i];
    }
    Ok(total)
}

/// `Z^T f◇(A) W` from a precomputed compact SVD.
pub fn svd_block_bilinear(svd: &CompactSvd, z: &DenseMatrix, f: &ScalarFunction, w: &DenseMatrix) -> Result<DenseMatrix> {
    let mut zu = z.tr_mul(&svd.u);
    for (i, &s) in svd.sigma.iter().enumerate() {
        let fs = f.try_eval_f(s)?;
        zu.column_mut(i).scale_mut(fs);
    }
    Ok(zu * svd.v.tr_mul(w))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthKind {
    ErdosRenyi { p: f64 },
    Path,
    /// Node 0 points at every other node.
    Star,
}

/// Deterministic synthetic digraphs for a fixed seed.
pub fn synth_graph(kind: SynthKind, n: usize, seed: u64) -> Result<Digraph> {
    let mut triples = Vec::new();
    match kind {
        SynthKind::ErdosRenyi { p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(GmfError::InvalidParameter(format!("edge probability {p} outside [0, 1]")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..n {
                for j in 0..n {
                    if i != j && rng.gen_bool(p) {
                        triples.push((i, j, 1.0));
                    }
                }
            }
        }
        SynthKind::Path => triples.extend((1..n).map(|i| (i - 1, i, 1.0))),
        SynthKind::Star => triples.extend((1..n).map(|i| (0, i, 1.0))),
    }
    Digraph::new(CsrMatrix::from_coordinates(&triples, n, n)?)
}
