//! Plain-text tensor format:
//!
//! ```text
//! # comment lines start with '#'
//! n 2
//! N 2
//! <n*n*N*N entries, lexicographic (alpha, beta, i, j) order, whitespace separated>
//! ```

use std::fmt::Write;

use super::SymTensor4;
use crate::error::{Error, Result};

pub(super) fn write(t: &SymTensor4) -> String {
    let mut s = String::new();
    let n = t.dim();
    let _ = writeln!(s, "n {}", n);
    let _ = writeln!(s, "N {}", t.components());
    for row in t.entries().chunks(n * n) {
        let line: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

pub(super) fn parse(src: &str) -> Result<SymTensor4> {
    let mut tokens = src
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);

    let mut header = |key: &str| -> Result<usize> {
        match (tokens.next(), tokens.next()) {
            (Some(k), Some(v)) if k == key => v
                .parse()
                .map_err(|_| Error::Parse(format!("bad value for {key}: {v}"))),
            (k, _) => Err(Error::Parse(format!("expected '{key}', found {k:?}"))),
        }
    };
    let n = header("n")?;
    let nc = header("N")?;
    let entries = tokens
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad tensor entry '{tok}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    SymTensor4::new(n, nc, entries)
}
