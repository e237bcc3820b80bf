//! MatrixMarket coordinate files and plain-text vectors.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{CsrMatrix, LinalgError};

/// Writes `a` as `%%MatrixMarket matrix coordinate real general`, 1-based.
pub fn write_matrix_market(path: impl AsRef<Path>, a: &CsrMatrix) -> Result<(), LinalgError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for i in 0..a.nrows() {
        let (cs, vs) = a.row(i);
        for (&j, &v) in cs.iter().zip(vs) {
            writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a real coordinate MatrixMarket file (`general` or `symmetric`).
pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<CsrMatrix, LinalgError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or(LinalgError::Parse { line: 1, msg: "empty file".into() })?;
    let header = header?.to_lowercase();
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() < 5 || toks[0] != "%%matrixmarket" || toks[1] != "matrix" || toks[2] != "coordinate" {
        return Err(LinalgError::Parse { line: 1, msg: format!("unsupported header '{header}'") });
    }
    if toks[3] != "real" && toks[3] != "integer" {
        return Err(LinalgError::Parse { line: 1, msg: format!("unsupported field '{}'", toks[3]) });
    }
    let symmetric = match toks[4] {
        "general" => false,
        "symmetric" => true,
        other => return Err(LinalgError::Parse { line: 1, msg: format!("unsupported symmetry '{other}'") }),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut trip = Vec::new();
    for (ln, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parse_err = |msg: String| LinalgError::Parse { line: ln + 1, msg };
        let f: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if f.len() != 3 {
                    return Err(parse_err("expected 'rows cols nnz'".into()));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|e| parse_err(e.to_string()));
                size = Some((p(f[0])?, p(f[1])?, p(f[2])?));
            }
            Some((m, n, _)) => {
                if f.len() != 3 {
                    return Err(parse_err("expected 'i j value'".into()));
                }
                let i: usize = f[0].parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?;
                let j: usize = f[1].parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?;
                let v: f64 = f[2].parse().map_err(|e: std::num::ParseFloatError| parse_err(e.to_string()))?;
                if i == 0 || j == 0 || i > m || j > n {
                    return Err(parse_err(format!("index ({i},{j}) out of range")));
                }
                trip.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    trip.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (m, n, nnz) = size.ok_or(LinalgError::Parse { line: 0, msg: "missing size line".into() })?;
    let stored = if symmetric { trip.iter().filter(|t| t.0 >= t.1).count() } else { trip.len() };
    if stored != nnz {
        return Err(LinalgError::Parse { line: 0, msg: format!("declared {nnz} entries, found {stored}") });
    }
    Ok(CsrMatrix::from_triplets(m, n, &trip))
}

/// One entry per line.
pub fn write_vector(path: impl AsRef<Path>, v: &[f64]) -> Result<(), LinalgError> {
    let mut w = BufWriter::new(File::create(path)?);
    for x in v {
        writeln!(w, "{x:.17e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>, LinalgError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        out.push(t.parse().map_err(|e: std::num::ParseFloatError| LinalgError::Parse {
            line: ln + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let dir = std::env::temp_dir().join(format!("mm-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let a = CsrMatrix::from_triplets(3, 4, &[(0, 3, 1.0 / 3.0), (2, 0, -2.5e-17), (1, 1, 7.0)]);
        let p = dir.join("a.mtx");
        write_matrix_market(&p, &a).unwrap();
        assert_eq!(read_matrix_market(&p).unwrap(), a);

        let v = vec![0.1, -1.0 / 7.0, 1e300];
        let pv = dir.join("v.txt");
        write_vector(&pv, &v).unwrap();
        assert_eq!(read_vector(&pv).unwrap(), v);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn symmetric_files_are_expanded() {
        let dir = std::env::temp_dir().join(format!("mm-sym-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("s.mtx");
        std::fs::write(
            &p,
            "%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 2\n1 1 4.0\n2 1 -1.0\n",
        )
        .unwrap();
        let a = read_matrix_market(&p).unwrap();
        assert_eq!(a.get(0, 1), -1.0);
        assert_eq!(a.get(1, 0), -1.0);
        std::fs::remove_dir_all(&dir).ok();
    }
}
