//! Matrix Market reading and writing.
//!
//! Sparse matrices use the `coordinate real {general|symmetric}` layout;
//! symmetric files are expanded to full storage on read. Dense vectors use
//! the `array real general` layout with a single column.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    General,
    Symmetric,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Content lines (skipping comments and blanks), with 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('%'))
}

fn parse_header(text: &str, want_layout: &str) -> Result<Symmetry> {
    let first = text
        .lines()
        .next()
        .ok_or_else(|| parse_err(1, "empty file"))?;
    let tokens: Vec<String> = first
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(
            1,
            "expected '%%MatrixMarket matrix <layout> real <symmetry>'",
        ));
    }
    if tokens[2] != want_layout {
        return Err(parse_err(
            1,
            format!("expected {want_layout} layout, found {}", tokens[2]),
        ));
    }
    if tokens[3] != "real" && tokens[3] != "integer" {
        return Err(parse_err(
            1,
            format!("unsupported field type {}", tokens[3]),
        ));
    }
    match tokens[4].as_str() {
        "general" => Ok(Symmetry::General),
        "symmetric" => Ok(Symmetry::Symmetric),
        other => Err(parse_err(1, format!("unsupported symmetry {other}"))),
    }
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?
        .parse::<T>()
        .map_err(|_| parse_err(line, format!("cannot parse {what}")))
}

/// Parses a coordinate-format matrix from text.
pub fn parse_matrix(text: &str) -> Result<SparseMatrix> {
    let symmetry = parse_header(text, "coordinate")?;
    let mut lines = data_lines(text);
    let (ln, size) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing size line"))?;
    let mut tok = size.split_whitespace();
    let m: usize = parse_num(tok.next(), ln, "row count")?;
    let n: usize = parse_num(tok.next(), ln, "column count")?;
    let nnz: usize = parse_num(tok.next(), ln, "entry count")?;
    if symmetry == Symmetry::Symmetric && m != n {
        return Err(parse_err(ln, "symmetric matrix must be square"));
    }

    let mut triplets = Vec::with_capacity(if symmetry == Symmetry::Symmetric {
        2 * nnz
    } else {
        nnz
    });
    let mut read = 0;
    for (ln, line) in lines {
        let mut tok = line.split_whitespace();
        let i: usize = parse_num(tok.next(), ln, "row index")?;
        let j: usize = parse_num(tok.next(), ln, "column index")?;
        let v: f64 = parse_num(tok.next(), ln, "value")?;
        if i == 0 || j == 0 || i > m || j > n {
            return Err(parse_err(ln, format!("index ({i}, {j}) out of range")));
        }
        if symmetry == Symmetry::Symmetric && j > i {
            return Err(parse_err(
                ln,
                "symmetric storage must hold the lower triangle",
            ));
        }
        triplets.push((i - 1, j - 1, v));
        if symmetry == Symmetry::Symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
        read += 1;
    }
    if read != nnz {
        return Err(parse_err(
            0,
            format!("expected {nnz} entries, found {read}"),
        ));
    }
    SparseMatrix::from_triplets(m, n, &triplets)
}

/// Parses a single-column `array` vector.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    parse_header(text, "array")?;
    let mut lines = data_lines(text);
    let (ln, size) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing size line"))?;
    let mut tok = size.split_whitespace();
    let m: usize = parse_num(tok.next(), ln, "row count")?;
    let n: usize = parse_num(tok.next(), ln, "column count")?;
    if n != 1 {
        return Err(parse_err(ln, "vectors must have exactly one column"));
    }
    let v = lines
        .map(|(ln, l)| parse_num::<f64>(l.split_whitespace().next(), ln, "value"))
        .collect::<Result<Vec<_>>>()?;
    if v.len() != m {
        return Err(parse_err(
            0,
            format!("expected {m} values, found {}", v.len()),
        ));
    }
    Ok(v)
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_string(&mut s))
        .map_err(|e| Error::io(path, e))?;
    Ok(s)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    let path = path.as_ref();
    parse_matrix(&read_to_string(path)?)
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    parse_vector(&read_to_string(path)?)
}

/// Writes `m` in coordinate form. With [`Symmetry::Symmetric`] only the
/// lower triangle is stored; the caller is responsible for `m` being symmetric.
pub fn write_matrix_to<W: Write>(
    out: W,
    m: &SparseMatrix,
    symmetry: Symmetry,
) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    let sym = match symmetry {
        Symmetry::General => "general",
        Symmetry::Symmetric => "symmetric",
    };
    writeln!(w, "%%MatrixMarket matrix coordinate real {sym}")?;
    let keep = |i: usize, j: usize| symmetry == Symmetry::General || j <= i;
    let count = m.iter().filter(|&(i, j, _)| keep(i, j)).count();
    writeln!(w, "{} {} {}", m.n_rows(), m.n_cols(), count)?;
    for (i, j, v) in m.iter().filter(|&(i, j, _)| keep(i, j)) {
        // {:e} on f64 prints the shortest representation that round-trips.
        writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    w.flush()
}

pub fn write_vector_to<W: Write>(out: W, v: &[f64]) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} 1", v.len())?;
    for x in v {
        writeln!(w, "{x:e}")?;
    }
    w.flush()
}

pub fn write_matrix(path: impl AsRef<Path>, m: &SparseMatrix, symmetry: Symmetry) -> Result<()> {
    let path = path.as_ref();
    File::create(path)
        .and_then(|f| write_matrix_to(f, m, symmetry))
        .map_err(|e| Error::io(path, e))
}

pub fn write_vector(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    let path = path.as_ref();
    File::create(path)
        .and_then(|f| write_vector_to(f, v))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_general_coordinate() {
        let text = "%%MatrixMarket matrix coordinate real general\n% comment\n2 3 3\n1 1 1.5\n2 3 -2\n1 2 4e-1\n";
        let m = parse_matrix(text).unwrap();
        assert_eq!((m.n_rows(), m.n_cols(), m.nnz()), (2, 3, 3));
        assert_eq!(m.get(0, 1), 0.4);
        assert_eq!(m.get(1, 2), -2.0);
    }

    #[test]
    fn symmetric_input_is_expanded() {
        let text =
            "%%MatrixMarket matrix coordinate real symmetric\n3 3 4\n1 1 2\n2 1 -1\n2 2 2\n3 3 1\n";
        let m = parse_matrix(text).unwrap();
        assert_eq!(m.nnz(), 5);
        assert_eq!(m.get(0, 1), -1.0);
        assert_eq!(m.get(1, 0), -1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_matrix("%%MatrixMarket matrix coordinate complex general\n1 1 0\n").is_err());
        assert!(
            parse_matrix("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n")
                .is_err()
        );
        assert!(
            parse_matrix("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n")
                .is_err()
        );
        assert!(
            parse_matrix("%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 1.0\n")
                .is_err()
        );
        assert!(parse_matrix("hello\n").is_err());
    }

    #[test]
    fn symmetric_write_then_read() {
        let m = SparseMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 4.0),
                (0, 2, 0.1),
                (2, 0, 0.1),
                (1, 1, 1.0 / 3.0),
                (2, 2, 7.0),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_matrix_to(&mut buf, &m, Symmetry::Symmetric).unwrap();
        let back = parse_matrix(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn vector_round_trip() {
        let v = vec![1.0, -2.5e-300, std::f64::consts::PI];
        let mut buf = Vec::new();
        write_vector_to(&mut buf, &v).unwrap();
        assert_eq!(parse_vector(std::str::from_utf8(&buf).unwrap()).unwrap(), v);
    }
}
