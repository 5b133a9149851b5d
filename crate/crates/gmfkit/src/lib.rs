//! Support code for the `gmfkit` command-line tool.

pub mod report;

use anyhow::{bail, Context, Result};

/// Parses `1,5,9` (1-based) into 0-based node ids; `all` selects every node.
pub fn parse_nodes(spec: &str, n: usize) -> Result<Vec<usize>> {
    if spec.trim() == "all" {
        return Ok((0..n).collect());
    }
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_node(s, n))
        .collect()
}

/// Parses `3:17,4:2` (1-based) into 0-based pairs.
pub fn parse_pairs(spec: &str, n: usize) -> Result<Vec<(usize, usize)>> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|p| {
            let (i, j) = p.split_once(':').with_context(|| format!("pair `{p}` is not of the form i:j"))?;
            Ok((parse_node(i, n)?, parse_node(j, n)?))
        })
        .collect()
}

fn parse_node(s: &str, n: usize) -> Result<usize> {
    let id: usize = s.trim().parse().with_context(|| format!("bad node id `{s}`"))?;
    if id == 0 || id > n {
        bail!("node {id} outside 1..={n}");
    }
    Ok(id - 1)
}

/// Rewrites 0-based ids (`i` or `i:j`) in report rows to 1-based.
pub fn one_based(ids: &str) -> String {
    ids.split(':')
        .map(|p| p.parse::<usize>().map(|i| (i + 1).to_string()).unwrap_or_else(|_| p.to_string()))
        .collect::<Vec<_>>()
        .join(":")
}
