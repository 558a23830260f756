//! Plain-text matrix formats for kernels, policies, costs and codebooks.
//!
//! ```text
//! relaxctl-kernel v1
//! state finite 2
//! action box 4 -1 1
//! 0.9 0.1
//! ...
//! ```
//!
//! A header line names the object, then one grid line per space
//! (`finite <n>` or `box <cells> <lo> <hi> [<lo> <hi> ...]`), then the rows in
//! row-major order: kernel rows by `(x, u)` with `x` slowest, policy rows by
//! `x`, cost rows by `x` with one value per action. Blank lines and text after
//! `#` are ignored. Numbers are written in shortest round-trip form, so export
//! followed by import is exact.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernel::{CostFunction, StationaryPolicy, TransitionKernel};
use crate::measure::{Grid, GridKind};
use crate::quantize::Quantizer;

pub const KERNEL_HEADER: &str = "relaxctl-kernel v1";
pub const POLICY_HEADER: &str = "relaxctl-policy v1";
pub const COST_HEADER: &str = "relaxctl-cost v1";
pub const CODEBOOK_HEADER: &str = "relaxctl-codebook v1";

fn grid_line(role: &str, grid: &Grid) -> String {
    match grid.kind() {
        GridKind::Finite => format!("{role} finite {}", grid.len()),
        GridKind::Box => {
            let mut s = format!("{role} box {}", grid.cells_per_axis());
            for (lo, hi) in grid.bounds() {
                write!(s, " {lo} {hi}").unwrap();
            }
            s
        }
    }
}

fn write_rows(out: &mut String, values: &[f64], width: usize) {
    for row in values.chunks_exact(width) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

pub fn export_kernel(kernel: &TransitionKernel) -> String {
    let mut s = format!(
        "{KERNEL_HEADER}\n{}\n{}\n",
        grid_line("state", kernel.state_grid()),
        grid_line("action", kernel.action_grid())
    );
    write_rows(&mut s, kernel.rows(), kernel.n_states());
    s
}

pub fn export_policy(gamma: &StationaryPolicy) -> String {
    let mut s = format!(
        "{POLICY_HEADER}\n{}\n{}\n",
        grid_line("state", gamma.state_grid()),
        grid_line("action", gamma.action_grid())
    );
    write_rows(&mut s, gamma.rows(), gamma.n_actions());
    s
}

pub fn export_cost(cost: &CostFunction) -> String {
    let mut s = format!(
        "{COST_HEADER}\n{}\n{}\n",
        grid_line("state", cost.state_grid()),
        grid_line("action", cost.action_grid())
    );
    write_rows(&mut s, cost.values(), cost.action_grid().len());
    s
}

/// Codepoints one per line, coordinates separated by spaces.
pub fn export_codebook(q: &Quantizer) -> String {
    let mut s = format!("{CODEBOOK_HEADER}\nresolution {}\n", q.resolution());
    for z in q.codebook() {
        let line: Vec<String> = z.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines { inner: text.lines().enumerate(), last: 0 }
    }

    /// Next non-empty line with comments stripped, and its 1-based number.
    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        for (i, raw) in self.inner.by_ref() {
            self.last = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if !line.is_empty() {
                return Some((i + 1, line));
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let last = self.last;
        self.next_content().ok_or_else(|| Error::Parse { line: last + 1, message: format!("missing {what}") })
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_num<T: std::str::FromStr>(line: usize, tok: Option<&str>, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| parse_err(line, format!("cannot read {what} from {tok:?}")))
}

fn parse_grid(lines: &mut Lines, role: &str) -> Result<Arc<Grid>> {
    let (n, line) = lines.expect(&format!("{role} grid line"))?;
    let mut toks = line.split_whitespace();
    if toks.next() != Some(role) {
        return Err(parse_err(n, format!("expected a {role} grid line")));
    }
    let grid = match toks.next() {
        Some("finite") => Grid::finite(parse_num(n, toks.next(), "cell count")?),
        Some("box") => {
            let cells: usize = parse_num(n, toks.next(), "cells per axis")?;
            let rest: Vec<f64> = toks.map(|t| parse_num(n, Some(t), "bound")).collect::<Result<_>>()?;
            if rest.is_empty() || rest.len() % 2 != 0 {
                return Err(parse_err(n, "box bounds must come in lo/hi pairs"));
            }
            let bounds: Vec<(f64, f64)> = rest.chunks(2).map(|p| (p[0], p[1])).collect();
            Grid::new(&bounds, cells)
        }
        other => return Err(parse_err(n, format!("unknown grid kind {other:?}"))),
    };
    grid.map(Arc::new).map_err(|e| parse_err(n, e.to_string()))
}

fn parse_body(lines: &mut Lines, rows: usize, width: usize) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(rows * width);
    for r in 0..rows {
        let (n, line) = lines.expect(&format!("row {r}"))?;
        let row: Vec<f64> = line.split_whitespace().map(|t| parse_num(n, Some(t), "entry")).collect::<Result<_>>()?;
        if row.len() != width {
            return Err(parse_err(n, format!("expected {width} entries, found {}", row.len())));
        }
        values.extend(row);
    }
    if let Some((n, _)) = lines.next_content() {
        return Err(parse_err(n, "unexpected trailing row"));
    }
    Ok(values)
}

fn parse_header<'a>(text: &'a str, header: &str) -> Result<Lines<'a>> {
    let mut lines = Lines::new(text);
    let (n, line) = lines.expect("header")?;
    if line != header {
        return Err(parse_err(n, format!("expected header {header:?}")));
    }
    Ok(lines)
}

pub fn import_kernel(text: &str) -> Result<TransitionKernel> {
    let mut lines = parse_header(text, KERNEL_HEADER)?;
    let sg = parse_grid(&mut lines, "state")?;
    let ag = parse_grid(&mut lines, "action")?;
    let rows = parse_body(&mut lines, sg.len() * ag.len(), sg.len())?;
    TransitionKernel::new(sg, ag, rows)
}

pub fn import_policy(text: &str) -> Result<StationaryPolicy> {
    let mut lines = parse_header(text, POLICY_HEADER)?;
    let sg = parse_grid(&mut lines, "state")?;
    let ag = parse_grid(&mut lines, "action")?;
    let rows = parse_body(&mut lines, sg.len(), ag.len())?;
    StationaryPolicy::new(sg, ag, rows)
}

pub fn import_cost(text: &str) -> Result<CostFunction> {
    let mut lines = parse_header(text, COST_HEADER)?;
    let sg = parse_grid(&mut lines, "state")?;
    let ag = parse_grid(&mut lines, "action")?;
    let values = parse_body(&mut lines, sg.len(), ag.len())?;
    CostFunction::new(sg, ag, values)
}
