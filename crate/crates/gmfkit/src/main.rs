use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gmf_core::network::{
    compare_approaches, load_matrix_market, resolvent_communicability, synth_graph, total_communicability,
    write_matrix_market, Quantity, Report, SynthKind, DEFAULT_CENTRALITY_TOL, DEFAULT_COMMUNICABILITY_TOL,
    DEFAULT_ORACLE_LIMIT,
};
use gmf_core::quadrature::Approach;
use gmf_core::make_function;
use gmfkit::report::{write_comparison_csv, write_csv, write_json};
use gmfkit::{one_based, parse_nodes, parse_pairs};

/// Network centrality and communicability through generalized matrix functions.
///
/// Node ids on the command line and in reports are 1-based, as in Matrix
/// Market files.
#[derive(Parser)]
#[command(name = "gmfkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Total communicability e_i^T f◇(A) 1 (hub communicability for sinh).
    Centrality {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value = "sinh")]
        function: String,
        /// Function parameters (alpha, exponent or shift), comma separated.
        #[arg(long, value_delimiter = ',')]
        param: Vec<f64>,
        #[arg(long, default_value = "action")]
        approach: Approach,
        #[arg(long, default_value_t = DEFAULT_CENTRALITY_TOL)]
        tol: f64,
        #[arg(long)]
        max_steps: Option<usize>,
        /// Comma-separated node ids, or `all`.
        #[arg(long, default_value = "all")]
        nodes: String,
        /// Output file; `.json` selects JSON, anything else CSV. Stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Resolvent communicability [h◇(A)]_ij with alpha = alpha_rel / sigma_1.
    Communicability {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        alpha_rel: f64,
        /// Comma-separated `i:j` pairs.
        #[arg(long)]
        pairs: String,
        #[arg(long, default_value = "action")]
        approach: Approach,
        #[arg(long, default_value_t = DEFAULT_COMMUNICABILITY_TOL)]
        tol: f64,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs every approach on the same query, with errors against a dense oracle.
    Compare {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum, default_value_t = QuantityKind::Hub)]
        quantity: QuantityKind,
        #[arg(long)]
        nodes: Option<String>,
        #[arg(long)]
        pairs: Option<String>,
        /// Resolvent parameter; for `block` its absence selects sinh.
        #[arg(long)]
        alpha_rel: Option<f64>,
        /// Block Gauss level for `block`.
        #[arg(long, default_value_t = 3)]
        ell: usize,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_ORACLE_LIMIT)]
        oracle_limit: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes a synthetic digraph as a Matrix Market file.
    Synth {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.01)]
        p: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum QuantityKind {
    Hub,
    Resolvent,
    Block,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    ErdosRenyi,
    Path,
    Star,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn is_json(out: &Option<PathBuf>) -> bool {
    out.as_deref().and_then(Path::extension).is_some_and(|e| e == "json")
}

fn emit(mut report: Report, out: &Option<PathBuf>) -> Result<bool> {
    for row in &mut report.rows {
        row.ids = one_based(&row.ids);
    }
    report.notes.push("node ids are 1-based".into());
    let mut w = sink(out)?;
    if is_json(out) {
        write_json(&report, &mut w)?;
    } else {
        write_csv(&report, &mut w)?;
    }
    w.flush()?;
    let unconverged: Vec<&str> = report.rows.iter().filter(|r| !r.converged).map(|r| r.ids.as_str()).collect();
    if !unconverged.is_empty() {
        eprintln!("warning: max_steps reached before tol for {}", unconverged.join(", "));
    }
    Ok(unconverged.is_empty())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Centrality { graph, function, param, approach, tol, max_steps, nodes, out } => {
            let g = load_matrix_market(&graph).with_context(|| format!("reading {}", graph.display()))?;
            let f = make_function(&function, &param)?;
            let nodes = parse_nodes(&nodes, g.n())?;
            let report = total_communicability(&g, &f, &nodes, approach, tol, max_steps.unwrap_or(g.n()))?;
            emit(report, &out)
        }
        Command::Communicability { graph, alpha_rel, pairs, approach, tol, max_steps, out } => {
            let g = load_matrix_market(&graph).with_context(|| format!("reading {}", graph.display()))?;
            let pairs = parse_pairs(&pairs, g.n())?;
            let report = resolvent_communicability(&g, &pairs, alpha_rel, approach, tol, max_steps.unwrap_or(g.n()))?;
            emit(report, &out)
        }
        Command::Compare { graph, quantity, nodes, pairs, alpha_rel, ell, tol, max_steps, oracle_limit, out } => {
            let g = load_matrix_market(&graph).with_context(|| format!("reading {}", graph.display()))?;
            let n = g.n();
            let nodes = || -> Result<Vec<usize>> {
                parse_nodes(nodes.as_deref().context("--nodes is required for this quantity")?, n)
            };
            let (q, default_tol) = match quantity {
                QuantityKind::Hub => (Quantity::Hub { nodes: nodes()? }, DEFAULT_CENTRALITY_TOL),
                QuantityKind::Resolvent => {
                    let Some(alpha_rel) = alpha_rel else { bail!("--alpha-rel is required for resolvent") };
                    let pairs = parse_pairs(pairs.as_deref().context("--pairs is required for resolvent")?, n)?;
                    (Quantity::Resolvent { pairs, alpha_rel }, DEFAULT_COMMUNICABILITY_TOL)
                }
                QuantityKind::Block => (Quantity::Block { nodes: nodes()?, alpha_rel, ell }, 1e-5),
            };
            let mut c = compare_approaches(&g, &q, tol.unwrap_or(default_tol), max_steps.unwrap_or(n), oracle_limit)?;
            for row in &mut c.rows {
                row.ids = row.ids.split(',').map(one_based).collect::<Vec<_>>().join(",");
            }
            let mut w = sink(&out)?;
            if is_json(&out) {
                serde_json::to_writer_pretty(&mut w, &c)?;
            } else {
                write_comparison_csv(&c, &mut w)?;
            }
            w.flush()?;
            Ok(true)
        }
        Command::Synth { kind, n, p, seed, out } => {
            let kind = match kind {
                Kind::ErdosRenyi => SynthKind::ErdosRenyi { p },
                Kind::Path => SynthKind::Path,
                Kind::Star => SynthKind::Star,
            };
            let g = synth_graph(kind, n, seed)?;
            let mut w = sink(&out)?;
            write_matrix_market(&g, &mut w)?;
            w.flush()?;
            Ok(true)
        }
    }
}
