//! Plain-text formats.
//!
//! * Stack: header `n d group`, then `n*d` lines of `d` floats.
//! * Observation: header `n d sigma seed` (`sigma` may be `custom`), an
//!   optional stack holding the truth, then `n*d` lines of `n*d` floats.
//! * Dense matrix (custom noise): rows of floats, no header.
//! * Trace: CSV `iter,f,grad_norm,stepsize,dist_f_ref,dist_inf_ref` with
//!   empty cells for unknown values.
//!
//! Floats are written in shortest round-trip scientific notation, so a
//! write/read cycle is bit-exact.

use std::fmt::Write as _;

use crate::error::{Result, SyncError};
use crate::estimators::SolveTrace;
use crate::linalg::Mat;
use crate::manifold::{Group, RotationStack};
use crate::problem::{NoiseLevel, Observation};

fn write_rows(out: &mut String, m: &Mat) {
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:e}", m[(r, c)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

pub fn write_stack(g: &RotationStack) -> String {
    let mut out = format!("{} {} {}\n", g.n(), g.d(), g.group().tag());
    write_rows(&mut out, g.as_mat());
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    peeked: Option<(usize, &'a str)>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines { inner: text.lines().enumerate(), peeked: None }
    }

    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        if let Some(p) = self.peeked.take() {
            return Some(p);
        }
        for (i, line) in self.inner.by_ref() {
            let t = line.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Some((i + 1, t));
            }
        }
        None
    }

    fn peek(&mut self) -> Option<(usize, &'a str)> {
        if self.peeked.is_none() {
            self.peeked = self.next_content();
        }
        self.peeked
    }

    fn require(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.next_content().ok_or(SyncError::Parse { line: 0, msg: format!("unexpected end of input, expected {what}") })
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> SyncError {
    SyncError::Parse { line, msg: msg.into() }
}

fn parse_usize(tok: &str, line: usize, what: &str) -> Result<usize> {
    tok.parse().map_err(|_| parse_err(line, format!("bad {what} '{tok}'")))
}

fn parse_row(text: &str, line: usize, width: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| parse_err(line, format!("bad float '{t}'"))))
        .collect::<Result<_>>()?;
    if vals.len() != width {
        return Err(parse_err(line, format!("expected {width} values, found {}", vals.len())));
    }
    Ok(vals)
}

fn read_matrix(lines: &mut Lines, rows: usize, cols: usize) -> Result<Mat> {
    let mut m = Mat::zeros(rows, cols);
    for r in 0..rows {
        let (ln, text) = lines.require("matrix row")?;
        for (c, v) in parse_row(text, ln, cols)?.into_iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    Ok(m)
}

fn stack_header(text: &str) -> Option<(usize, usize, Group)> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    if toks.len() != 3 {
        return None;
    }
    Some((toks[0].parse().ok()?, toks[1].parse().ok()?, Group::parse(toks[2])?))
}

fn read_stack_from(lines: &mut Lines) -> Result<RotationStack> {
    let (ln, header) = lines.require("stack header")?;
    let (n, d, group) = stack_header(header).ok_or_else(|| parse_err(ln, "expected 'n d group'"))?;
    if d == 0 {
        return Err(parse_err(ln, "d must be positive"));
    }
    let mat = read_matrix(lines, n * d, d)?;
    RotationStack::new(mat, d, group)
}

pub fn read_stack(text: &str) -> Result<RotationStack> {
    let mut lines = Lines::new(text);
    let g = read_stack_from(&mut lines)?;
    if let Some((ln, _)) = lines.next_content() {
        return Err(parse_err(ln, "trailing content after stack"));
    }
    Ok(g)
}

pub fn write_observation(obs: &Observation) -> String {
    let sigma = match obs.level {
        NoiseLevel::Gaussian(s) => format!("{s:e}"),
        NoiseLevel::Custom => "custom".into(),
    };
    let mut out = format!("{} {} {} {}\n", obs.n, obs.d, sigma, obs.seed);
    if let Some(t) = &obs.truth {
        out.push_str(&write_stack(t));
    }
    write_rows(&mut out, &obs.c);
    out
}

pub fn read_observation(text: &str) -> Result<Observation> {
    let mut lines = Lines::new(text);
    let (ln, header) = lines.require("observation header")?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 4 {
        return Err(parse_err(ln, "expected 'n d sigma seed'"));
    }
    let n = parse_usize(toks[0], ln, "n")?;
    let d = parse_usize(toks[1], ln, "d")?;
    if d == 0 {
        return Err(parse_err(ln, "d must be positive"));
    }
    let level = if toks[2] == "custom" {
        NoiseLevel::Custom
    } else {
        NoiseLevel::Gaussian(toks[2].parse().map_err(|_| parse_err(ln, format!("bad sigma '{}'", toks[2])))?)
    };
    let seed: u64 = toks[3].parse().map_err(|_| parse_err(ln, format!("bad seed '{}'", toks[3])))?;
    let truth = match lines.peek() {
        Some((_, text)) if stack_header(text).is_some() => {
            let t = read_stack_from(&mut lines)?;
            if t.n() != n || t.d() != d {
                return Err(parse_err(ln, "truth shape differs from header"));
            }
            Some(t)
        }
        _ => None,
    };
    let c = read_matrix(&mut lines, n * d, n * d)?;
    if let Some((ln, _)) = lines.next_content() {
        return Err(parse_err(ln, "trailing content after observation"));
    }
    match truth {
        Some(t) => Observation::with_truth(c, t, level, seed),
        None => Observation::without_truth(c, d, level, seed),
    }
}

/// Headerless dense matrix: one row per line, all rows the same width.
pub fn read_dense(text: &str) -> Result<Mat> {
    let mut lines = Lines::new(text);
    let mut rows = Vec::new();
    let mut width = None;
    while let Some((ln, t)) = lines.next_content() {
        let w = *width.get_or_insert_with(|| t.split_whitespace().count());
        rows.push(parse_row(t, ln, w)?);
    }
    let width = width.ok_or_else(|| parse_err(0, "empty matrix"))?;
    Ok(Mat::from_fn(rows.len(), width, |r, c| rows[r][c]))
}

pub const TRACE_HEADER: &str = "iter,f,grad_norm,stepsize,dist_f_ref,dist_inf_ref";

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn write_trace_csv(trace: &SolveTrace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{},{},{}",
            r.iter,
            r.f,
            r.grad_norm,
            cell(r.stepsize),
            cell(r.dist_f_ref),
            cell(r.dist_inf_ref)
        );
    }
    out
}
