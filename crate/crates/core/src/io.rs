//! Text formats. All indices are 0-based.
//!
//! Matrix: `# n1 n2`, then `n1` lines of `n2` floats.
//!
//! Factorization: `# n1 n2 r`, the `n1 × r` block `U`, a blank line, the `r`
//! singular values on one line, a blank line, the `n2 × r` block `V`.
//!
//! Observations: `# n1 n2 m model seed`, then one line per distinct cell
//! `a b multiplicity [value]`.
//!
//! Floats are written in shortest round-trip form.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::LowRankFactorization;
use crate::sampling::{ObservationSet, ObservedCell, SamplingModel};

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("line {line}: {msg}"))
}

fn header<'a>(text: &'a str, fields: usize) -> Result<(Vec<&'a str>, std::iter::Enumerate<std::str::Lines<'a>>)> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let rest = first
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| parse_err(1, "header must start with '#'"))?;
    let parts: Vec<&str> = rest.split_whitespace().collect();
    if parts.len() != fields {
        return Err(parse_err(1, format!("expected {fields} header fields, got {}", parts.len())));
    }
    Ok((parts, lines))
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid {what} '{tok}'")))
}

fn parse_row(line: &str, lineno: usize, width: usize) -> Result<Vec<f64>> {
    let row: Vec<f64> = line
        .split_whitespace()
        .map(|t| parse_num::<f64>(t, lineno, "float"))
        .collect::<Result<_>>()?;
    if row.len() != width {
        return Err(parse_err(lineno, format!("expected {width} values, got {}", row.len())));
    }
    if let Some(v) = row.iter().find(|v| !v.is_finite()) {
        return Err(parse_err(lineno, format!("non-finite value {v}")));
    }
    Ok(row)
}

fn write_block(out: &mut String, m: &Matrix) {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

pub fn format_matrix(m: &Matrix) -> String {
    let mut out = format!("# {} {}\n", m.nrows(), m.ncols());
    write_block(&mut out, m);
    out
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let (h, lines) = header(text, 2)?;
    let n1: usize = parse_num(h[0], 1, "n1")?;
    let n2: usize = parse_num(h[1], 1, "n2")?;
    let mut data = Vec::with_capacity(n1 * n2);
    let mut rows = 0;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if rows == n1 {
            return Err(parse_err(i + 1, "more rows than declared"));
        }
        data.extend(parse_row(line, i + 1, n2)?);
        rows += 1;
    }
    if rows != n1 {
        return Err(Error::Parse(format!("expected {n1} rows, got {rows}")));
    }
    Ok(Matrix::from_row_slice(n1, n2, &data))
}

pub fn format_factorization(f: &LowRankFactorization) -> String {
    let mut out = format!("# {} {} {}\n", f.n1(), f.n2(), f.rank());
    write_block(&mut out, f.u());
    out.push('\n');
    let s: Vec<String> = f.singular_values().iter().map(|x| format!("{x:?}")).collect();
    let _ = writeln!(out, "{}", s.join(" "));
    out.push('\n');
    write_block(&mut out, f.v());
    out
}

pub fn parse_factorization(text: &str) -> Result<LowRankFactorization> {
    let (h, lines) = header(text, 3)?;
    let n1: usize = parse_num(h[0], 1, "n1")?;
    let n2: usize = parse_num(h[1], 1, "n2")?;
    let r: usize = parse_num(h[2], 1, "r")?;
    let mut blocks: Vec<Vec<(usize, &str)>> = vec![Vec::new()];
    for (i, line) in lines {
        if line.trim().is_empty() {
            if !blocks.last().expect("nonempty").is_empty() {
                blocks.push(Vec::new());
            }
        } else {
            blocks.last_mut().expect("nonempty").push((i + 1, line));
        }
    }
    blocks.retain(|b| !b.is_empty());
    if blocks.len() != 3 {
        return Err(Error::Parse(format!(
            "expected U, S and V blocks separated by blank lines, got {} blocks",
            blocks.len()
        )));
    }
    let read = |block: &[(usize, &str)], rows: usize, what: &str| -> Result<Matrix> {
        if block.len() != rows {
            return Err(Error::Parse(format!("{what} block: expected {rows} rows, got {}", block.len())));
        }
        let mut data = Vec::with_capacity(rows * r);
        for &(lineno, line) in block {
            data.extend(parse_row(line, lineno, r)?);
        }
        Ok(Matrix::from_row_slice(rows, r, &data))
    };
    let u = read(&blocks[0], n1, "U")?;
    let s = read(&blocks[1], 1, "S")?;
    let v = read(&blocks[2], n2, "V")?;
    LowRankFactorization::new(u, s.iter().copied().collect(), v)
}

pub fn format_observations(obs: &ObservationSet) -> String {
    let mut out = format!(
        "# {} {} {} {} {}\n",
        obs.n1(),
        obs.n2(),
        obs.m(),
        obs.model(),
        obs.seed()
    );
    for c in obs.cells() {
        let _ = match c.value {
            Some(v) => writeln!(out, "{} {} {} {v:?}", c.row, c.col, c.multiplicity),
            None => writeln!(out, "{} {} {}", c.row, c.col, c.multiplicity),
        };
    }
    out
}

pub fn parse_observations(text: &str) -> Result<ObservationSet> {
    let (h, lines) = header(text, 5)?;
    let n1: usize = parse_num(h[0], 1, "n1")?;
    let n2: usize = parse_num(h[1], 1, "n2")?;
    let m: usize = parse_num(h[2], 1, "m")?;
    let model: SamplingModel = h[3].parse().map_err(|e| parse_err(1, e))?;
    let seed: u64 = parse_num(h[4], 1, "seed")?;
    let mut cells = Vec::new();
    let mut with_values = None;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let has_value = match toks.len() {
            3 => false,
            4 => true,
            k => return Err(parse_err(lineno, format!("expected 3 or 4 fields, got {k}"))),
        };
        if *with_values.get_or_insert(has_value) != has_value {
            return Err(parse_err(lineno, "value column present on some lines only"));
        }
        let value = if has_value {
            let v: f64 = parse_num(toks[3], lineno, "value")?;
            if !v.is_finite() {
                return Err(parse_err(lineno, "non-finite value"));
            }
            Some(v)
        } else {
            None
        };
        cells.push(ObservedCell {
            row: parse_num(toks[0], lineno, "row")?,
            col: parse_num(toks[1], lineno, "column")?,
            multiplicity: parse_num(toks[2], lineno, "multiplicity")?,
            value,
        });
    }
    let obs = ObservationSet::from_cells(n1, n2, model, seed, cells)?;
    if obs.m() != m {
        return Err(Error::Parse(format!(
            "header declares m = {m}, multiplicities sum to {}",
            obs.m()
        )));
    }
    Ok(obs)
}

pub fn read_to_string(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

pub fn write_string(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(std::fs::write(path, text)?)
}
