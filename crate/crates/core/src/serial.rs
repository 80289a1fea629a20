//! Text triplet format for transition matrices and augmented chains.
//!
//! ```text
//! n,3
//! lag_days,5.0000000000000000e0
//! label,W
//! counts,10,0,4
//! i,j,value
//! 0,0,6.9999999999999996e-1
//! ```
//!
//! Augmented chains add a `targets,M` header line and a trailing `[roles]`
//! section with `leaky,i`, `sticky,i,ell`, `debris,i,m` and `source,i`
//! records. State indices are 0-based. Values are written with 17
//! significant digits, which round-trips every `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::absorb::{AbsorbError, AugmentedChain};
use crate::grid::{GridError, StateRoles};
use crate::sparse::{MatrixError, SparseMatrix};
use crate::ulam::{MatrixLabel, TransitionMatrix, UlamError};

#[derive(Debug, Error)]
pub enum SerialError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Ulam(#[from] UlamError),
    #[error(transparent)]
    Absorb(#[from] AbsorbError),
    #[error(transparent)]
    Roles(#[from] GridError),
}

/// 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_triplets(out: &mut String, m: &SparseMatrix) {
    out.push_str("i,j,value\n");
    for (i, j, v) in m.triplets() {
        let _ = writeln!(out, "{i},{j},{}", fmt_f64(v));
    }
}

pub fn matrix_to_string(p: &TransitionMatrix) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "n,{}", p.n_states());
    let _ = writeln!(out, "lag_days,{}", fmt_f64(p.lag_days()));
    let _ = writeln!(out, "label,{}", p.label());
    match p.row_counts() {
        Some(c) => {
            out.push_str("counts");
            for v in c {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        None => out.push_str("counts,none\n"),
    }
    write_triplets(&mut out, p.matrix());
    out
}

pub fn chain_to_string(a: &AugmentedChain) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "n,{}", a.n_domain());
    let _ = writeln!(out, "targets,{}", a.n_targets());
    let _ = writeln!(out, "lag_days,{}", fmt_f64(a.lag_days()));
    let _ = writeln!(out, "label,{}", a.label());
    write_triplets(&mut out, a.matrix());
    out.push_str("[roles]\n");
    let roles = a.roles();
    for s in roles.leaky() {
        let _ = writeln!(out, "leaky,{s}");
    }
    for (s, ell) in roles.sticky() {
        let _ = writeln!(out, "sticky,{s},{}", fmt_f64(*ell));
    }
    for (s, m) in roles.debris() {
        let _ = writeln!(out, "debris,{s},{m}");
    }
    for s in roles.sources() {
        let _ = writeln!(out, "source,{s}");
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            line: 0,
        }
    }

    fn next_fields(&mut self) -> Option<Vec<&'a str>> {
        for (k, raw) in self.inner.by_ref() {
            let t = raw.trim();
            if t.is_empty() {
                continue;
            }
            self.line = k + 1;
            return Some(t.split(',').map(str::trim).collect());
        }
        None
    }

    fn err(&self, message: impl Into<String>) -> SerialError {
        SerialError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn header(&mut self, key: &str) -> Result<Vec<&'a str>, SerialError> {
        let f = self
            .next_fields()
            .ok_or_else(|| self.err(format!("missing `{key}` header")))?;
        if f[0] != key || f.len() < 2 {
            return Err(self.err(format!("expected `{key},...`, found `{}`", f.join(","))));
        }
        Ok(f[1..].to_vec())
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T, SerialError> {
        s.parse().map_err(|_| self.err(format!("cannot parse `{s}`")))
    }
}

/// Reads triplets until end of input or a `[roles]` line. Returns rows in
/// column order and whether a roles section follows.
fn read_triplets(
    lines: &mut Lines<'_>,
    n: usize,
) -> Result<(Vec<Vec<(usize, f64)>>, bool), SerialError> {
    match lines.next_fields() {
        Some(f) if f == ["i", "j", "value"] => {}
        _ => return Err(lines.err("expected `i,j,value` column header")),
    }
    let mut triplets = Vec::new();
    let mut roles = false;
    while let Some(f) = lines.next_fields() {
        if f == ["[roles]"] {
            roles = true;
            break;
        }
        if f.len() != 3 {
            return Err(lines.err("expected `i,j,value`"));
        }
        let i: usize = lines.parse(f[0])?;
        let j: usize = lines.parse(f[1])?;
        let v: f64 = lines.parse(f[2])?;
        if i >= n || j >= n {
            return Err(lines.err(format!("index ({i},{j}) outside {n} states")));
        }
        triplets.push((i, j, v));
    }
    let m = SparseMatrix::from_triplets(n, n, triplets)?;
    let rows = (0..n).map(|i| m.row(i).collect()).collect();
    Ok((rows, roles))
}

pub fn matrix_from_str(text: &str) -> Result<TransitionMatrix, SerialError> {
    let mut lines = Lines::new(text);
    let n: usize = {
        let f = lines.header("n")?;
        lines.parse(f[0])?
    };
    let lag: f64 = {
        let f = lines.header("lag_days")?;
        lines.parse(f[0])?
    };
    let label: MatrixLabel = {
        let f = lines.header("label")?;
        f[0].parse()?
    };
    let counts = {
        let f = lines.header("counts")?;
        if f == ["none"] {
            None
        } else if n == 0 && f == [""] {
            Some(Vec::new())
        } else {
            Some(
                f.iter()
                    .map(|s| lines.parse::<u64>(s))
                    .collect::<Result<Vec<_>, _>>()?,
            )
        }
    };
    let (rows, trailing) = read_triplets(&mut lines, n)?;
    if trailing {
        return Err(lines.err("unexpected `[roles]` section in a transition matrix"));
    }
    Ok(TransitionMatrix::new(
        SparseMatrix::from_sorted_rows(n, rows),
        lag,
        label,
        counts,
    )?)
}

pub fn chain_from_str(text: &str) -> Result<AugmentedChain, SerialError> {
    let mut lines = Lines::new(text);
    let n: usize = {
        let f = lines.header("n")?;
        lines.parse(f[0])?
    };
    let m: usize = {
        let f = lines.header("targets")?;
        lines.parse(f[0])?
    };
    let lag: f64 = {
        let f = lines.header("lag_days")?;
        lines.parse(f[0])?
    };
    let label: MatrixLabel = {
        let f = lines.header("label")?;
        f[0].parse()?
    };
    let total = n + 1 + m;
    let (rows, has_roles) = read_triplets(&mut lines, total)?;
    let (mut leaky, mut sticky, mut debris, mut sources) = (vec![], vec![], vec![], vec![]);
    if has_roles {
        while let Some(f) = lines.next_fields() {
            match (f[0], f.len()) {
                ("leaky", 2) => leaky.push(lines.parse(f[1])?),
                ("sticky", 3) => sticky.push((lines.parse(f[1])?, lines.parse(f[2])?)),
                ("debris", 3) => debris.push((lines.parse(f[1])?, lines.parse(f[2])?)),
                ("source", 2) => sources.push(lines.parse(f[1])?),
                _ => return Err(lines.err(format!("unknown role record `{}`", f.join(",")))),
            }
        }
    }
    let roles = StateRoles::new(n, leaky, sticky, debris, sources)?;
    if roles.n_targets() != m {
        return Err(lines.err(format!(
            "header declares {m} targets, roles define {}",
            roles.n_targets()
        )));
    }
    Ok(AugmentedChain::from_parts(
        SparseMatrix::from_sorted_rows(total, rows),
        n,
        roles,
        lag,
        label,
    )?)
}

pub fn write_matrix(path: &Path, p: &TransitionMatrix) -> Result<(), SerialError> {
    Ok(fs::write(path, matrix_to_string(p))?)
}

pub fn read_matrix(path: &Path) -> Result<TransitionMatrix, SerialError> {
    matrix_from_str(&fs::read_to_string(path)?)
}

pub fn write_chain(path: &Path, a: &AugmentedChain) -> Result<(), SerialError> {
    Ok(fs::write(path, chain_to_string(a))?)
}

pub fn read_chain(path: &Path) -> Result<AugmentedChain, SerialError> {
    chain_from_str(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::absorb::augment;
    use crate::ingest::Season;

    fn sample() -> TransitionMatrix {
        let m = SparseMatrix::from_dense(&[
            vec![0.1, 0.2, 0.7 - 1e-9],
            vec![1.0 / 3.0, 0.0, 1.0 / 7.0],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        TransitionMatrix::new(m, 5.0, MatrixLabel::Season(Season::SpringFall), Some(vec![10, 21, 0]))
            .unwrap()
    }

    #[test]
    fn matrix_round_trip_is_bit_exact() {
        let p = sample();
        let text = matrix_to_string(&p);
        let q = matrix_from_str(&text).unwrap();
        assert_eq!(p, q);
        assert_eq!(text, matrix_to_string(&q));
    }

    #[test]
    fn counts_none_round_trip() {
        let p = TransitionMatrix::identity(2, 360.0, MatrixLabel::Annual);
        let q = matrix_from_str(&matrix_to_string(&p)).unwrap();
        assert_eq!(p, q);
        assert_eq!(q.row_counts(), None);
    }

    #[test]
    fn chain_round_trip() {
        let roles = StateRoles::new(3, [2], [(0, 0.3), (1, 0.25)], [(0, 2), (1, 1)], [2, 0]).unwrap();
        let a = augment(&sample(), &roles).unwrap();
        let b = chain_from_str(&chain_to_string(&a)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn malformed_input_reports_line() {
        let bad = "n,2\nlag_days,5\nlabel,W\ncounts,none\ni,j,value\n0,x,0.5\n";
        match matrix_from_str(bad) {
            Err(SerialError::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matrix_from_str("n,2\nlabel,W\n").is_err());
    }
}
