//! Reader/writer for the standard alist sparse GF(2) matrix format:
//! dimensions, max column/row degrees, per-column and per-row degree lists,
//! then 1-based index lists (zero-padded to the max degree).
//!
//! The alist convention stores an n_cols x n_rows parity-check matrix as
//! columns-first; here the matrix is returned with `rows` = number of checks.

use super::matrix::BinaryMatrix;
use crate::error::{Error, Result};

fn parse_ints(line: &str) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::AlistParse(format!("bad integer {t:?}")))
        })
        .collect()
}

pub fn parse_alist(text: &str) -> Result<BinaryMatrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let mut next = |what: &str| -> Result<Vec<usize>> {
        parse_ints(
            lines
                .next()
                .ok_or_else(|| Error::AlistParse(format!("missing {what}")))?,
        )
    };
    let dims = next("dimensions")?;
    if dims.len() != 2 {
        return Err(Error::AlistParse("header must be `n_cols n_rows`".into()));
    }
    let (n_cols, n_rows) = (dims[0], dims[1]);
    let max_degs = next("max degrees")?;
    if max_degs.len() != 2 {
        return Err(Error::AlistParse(
            "expected `max_col_deg max_row_deg`".into(),
        ));
    }
    let (max_col_deg, max_row_deg) = (max_degs[0], max_degs[1]);
    let col_degs = next("column degrees")?;
    if col_degs.len() != n_cols {
        return Err(Error::AlistParse(format!(
            "expected {n_cols} column degrees, got {}",
            col_degs.len()
        )));
    }
    let row_degs = next("row degrees")?;
    if row_degs.len() != n_rows {
        return Err(Error::AlistParse(format!(
            "expected {n_rows} row degrees, got {}",
            row_degs.len()
        )));
    }
    if col_degs.iter().any(|&d| d > max_col_deg) {
        return Err(Error::AlistParse(
            "column degree exceeds declared maximum".into(),
        ));
    }
    if row_degs.iter().any(|&d| d > max_row_deg) {
        return Err(Error::AlistParse(
            "row degree exceeds declared maximum".into(),
        ));
    }

    let mut m = BinaryMatrix::zeros(n_rows, n_cols);
    // per-column 1-based row indices
    for (c, &deg) in col_degs.iter().enumerate() {
        let idx = next("column index list")?;
        let nonzero: Vec<usize> = idx.iter().copied().filter(|&i| i != 0).collect();
        if nonzero.len() != deg {
            return Err(Error::AlistParse(format!(
                "column {c}: declared degree {deg}, {} indices",
                nonzero.len()
            )));
        }
        for i in nonzero {
            if i > n_rows {
                return Err(Error::AlistParse(format!(
                    "column {c}: row index {i} out of range"
                )));
            }
            m.set(i - 1, c, true);
        }
    }
    // per-row 1-based column indices; cross-checked against the column lists
    for (r, &deg) in row_degs.iter().enumerate() {
        let idx = next("row index list")?;
        let nonzero: Vec<usize> = idx.iter().copied().filter(|&i| i != 0).collect();
        if nonzero.len() != deg {
            return Err(Error::AlistParse(format!(
                "row {r}: declared degree {deg}, {} indices",
                nonzero.len()
            )));
        }
        for i in nonzero {
            if i > n_cols {
                return Err(Error::AlistParse(format!(
                    "row {r}: column index {i} out of range"
                )));
            }
            if !m.get(r, i - 1) {
                return Err(Error::AlistParse(format!(
                    "row {r}: entry ({r},{}) missing from column lists",
                    i - 1
                )));
            }
        }
        if m.row(r).weight() != deg {
            return Err(Error::AlistParse(format!(
                "row {r}: column lists imply degree {}, declared {deg}",
                m.row(r).weight()
            )));
        }
    }
    Ok(m)
}

pub fn write_alist(m: &BinaryMatrix) -> String {
    let n_rows = m.rows();
    let n_cols = m.cols();
    let col_supports: Vec<Vec<usize>> = (0..n_cols)
        .map(|c| (0..n_rows).filter(|&r| m.get(r, c)).collect())
        .collect();
    let row_supports: Vec<Vec<usize>> = (0..n_rows).map(|r| m.row_support(r)).collect();
    let max_col = col_supports.iter().map(Vec::len).max().unwrap_or(0);
    let max_row = row_supports.iter().map(Vec::len).max().unwrap_or(0);

    let mut out = String::new();
    out.push_str(&format!("{n_cols} {n_rows}\n{max_col} {max_row}\n"));
    let degs = |s: &[Vec<usize>]| {
        s.iter()
            .map(|v| v.len().to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    out.push_str(&format!(
        "{}\n{}\n",
        degs(&col_supports),
        degs(&row_supports)
    ));
    let pad_list = |support: &[usize], max: usize| {
        let mut items: Vec<String> = support.iter().map(|&i| (i + 1).to_string()).collect();
        items.resize(max, "0".into());
        items.join(" ")
    };
    for s in &col_supports {
        out.push_str(&pad_list(s, max_col));
        out.push('\n');
    }
    for s in &row_supports {
        out.push_str(&pad_list(s, max_row));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_2x3() {
        let m = BinaryMatrix::from_rows(&[vec![1, 1, 0], vec![0, 1, 1]]);
        let text = write_alist(&m);
        assert_eq!(parse_alist(&text).unwrap(), m);
    }

    #[test]
    fn declared_max_degree_too_small() {
        let m = BinaryMatrix::from_rows(&[vec![1, 1, 1]]);
        let text = write_alist(&m).replace("1 3\n", "1 2\n");
        assert!(parse_alist(&text).is_err());
    }

    #[test]
    fn malformed_header() {
        assert!(parse_alist("3\n").is_err());
        assert!(parse_alist("").is_err());
    }

    #[test]
    fn out_of_range_index() {
        // column 0 claims membership in row 3 of a 2-row matrix
        let text = "2 2\n1 1\n1 1\n1 1\n3\n2\n1\n2\n";
        assert!(parse_alist(text).is_err());
    }
}
