//! Matrix file IO: MatrixMarket (coordinate and array) and the STSV1 raw
//! binary format (magic "STSV1", u64 rows, u64 cols, row-major f64, all
//! little-endian).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::DenseMatrix;
use crate::error::{Error, Result};

/// On-disk matrix encodings understood by the readers and writers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    MatrixMarket,
    Binary,
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mm" => Ok(Self::MatrixMarket),
            "bin" => Ok(Self::Binary),
            other => Err(Error::Parse(format!("unknown format '{other}', expected mm or bin"))),
        }
    }
}

pub fn read_matrix(path: &Path, format: MatrixFormat) -> Result<DenseMatrix> {
    match format {
        MatrixFormat::MatrixMarket => read_matrix_market(path),
        MatrixFormat::Binary => read_stsv(path),
    }
}

pub fn write_matrix(path: &Path, a: &DenseMatrix, format: MatrixFormat) -> Result<()> {
    match format {
        MatrixFormat::MatrixMarket => write_matrix_market(path, a),
        MatrixFormat::Binary => write_stsv(path, a),
    }
}

pub fn read_matrix_market(path: &Path) -> Result<DenseMatrix> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty MatrixMarket file".into()))??;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::Parse(format!("bad MatrixMarket header: {header}")));
    }
    let coordinate = match tokens[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(Error::Parse(format!("unsupported layout '{other}'"))),
    };
    match tokens[3].as_str() {
        "real" | "integer" => {}
        other => return Err(Error::Parse(format!("unsupported field '{other}'"))),
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(Error::Parse(format!("unsupported symmetry '{other}'"))),
    };

    let mut data_lines = lines.filter_map(|l| match l {
        Ok(line) => {
            let t = line.trim().to_string();
            if t.is_empty() || t.starts_with('%') {
                None
            } else {
                Some(Ok(t))
            }
        }
        Err(e) => Some(Err(e)),
    });

    let size_line = data_lines
        .next()
        .ok_or_else(|| Error::Parse("missing size line".into()))??;
    let dims: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("size line: {e}"))))
        .collect::<Result<_>>()?;

    if coordinate {
        let [rows, cols, nnz] = dims[..] else {
            return Err(Error::Parse(format!("coordinate size line needs 3 fields: {size_line}")));
        };
        let mut a = DenseMatrix::zeros(rows, cols);
        let mut seen = 0usize;
        for line in data_lines {
            let line = line?;
            let mut it = line.split_whitespace();
            let (i, j, v) = match (it.next(), it.next(), it.next()) {
                (Some(i), Some(j), Some(v)) => (
                    i.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?,
                    j.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?,
                    v.parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?,
                ),
                _ => return Err(Error::Parse(format!("bad coordinate entry: {line}"))),
            };
            if i == 0 || j == 0 || i > rows || j > cols {
                return Err(Error::Parse(format!("entry ({i},{j}) outside {rows}x{cols}")));
            }
            if !v.is_finite() {
                return Err(Error::Parse(format!("non-finite entry at ({i},{j})")));
            }
            a.set(i - 1, j - 1, v);
            if symmetric {
                a.set(j - 1, i - 1, v);
            }
            seen += 1;
        }
        if seen != nnz {
            return Err(Error::Parse(format!("expected {nnz} entries, found {seen}")));
        }
        Ok(a)
    } else {
        let [rows, cols] = dims[..] else {
            return Err(Error::Parse(format!("array size line needs 2 fields: {size_line}")));
        };
        let mut values = Vec::with_capacity(rows * cols);
        for line in data_lines {
            for tok in line?.split_whitespace() {
                values.push(tok.parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?);
            }
        }
        let mut a = DenseMatrix::zeros(rows, cols);
        let mut it = values.into_iter();
        // Array payloads are column-major; symmetric variants list only the
        // lower triangle of each column.
        for j in 0..cols {
            let start = if symmetric { j } else { 0 };
            for i in start..rows {
                let v = it
                    .next()
                    .ok_or_else(|| Error::Parse("array payload too short".into()))?;
                if !v.is_finite() {
                    return Err(Error::Parse(format!("non-finite entry at ({i},{j})")));
                }
                a.set(i, j, v);
                if symmetric {
                    a.set(j, i, v);
                }
            }
        }
        if it.next().is_some() {
            return Err(Error::Parse("array payload too long".into()));
        }
        Ok(a)
    }
}

pub fn write_matrix_market(path: &Path, a: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", a.rows(), a.cols())?;
    for j in 0..a.cols() {
        for i in 0..a.rows() {
            // 17 significant digits round-trip f64 exactly.
            writeln!(w, "{:.16e}", a.get(i, j))?;
        }
    }
    w.flush()?;
    Ok(())
}

const STSV_MAGIC: &[u8; 5] = b"STSV1";

pub fn read_stsv(path: &Path) -> Result<DenseMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != STSV_MAGIC {
        return Err(Error::Parse("bad magic, not an STSV1 file".into()));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let rows = u64::from_le_bytes(u64buf) as usize;
    r.read_exact(&mut u64buf)?;
    let cols = u64::from_le_bytes(u64buf) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Parse("dimension overflow".into()))?;
    let mut data = Vec::with_capacity(count);
    let mut f64buf = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut f64buf)?;
        data.push(f64::from_le_bytes(f64buf));
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Parse("trailing bytes after matrix payload".into()));
    }
    DenseMatrix::new(rows, cols, data)
}

pub fn write_stsv(path: &Path, a: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(STSV_MAGIC)?;
    w.write_all(&(a.rows() as u64).to_le_bytes())?;
    w.write_all(&(a.cols() as u64).to_le_bytes())?;
    for v in a.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpfile(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("stsv_io_tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn sample() -> DenseMatrix {
        DenseMatrix::from_rows(&[vec![1.5, -2.25, 0.0], vec![1e-7, 3.0, -1e30]]).unwrap()
    }

    #[test]
    fn stsv_round_trip_is_exact() {
        let path = tmpfile("rt.stsv");
        let a = sample();
        write_stsv(&path, &a).unwrap();
        let b = read_stsv(&path).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stsv_rejects_bad_magic_and_truncation() {
        let path = tmpfile("bad.stsv");
        std::fs::write(&path, b"NOPE!").unwrap();
        assert!(read_stsv(&path).is_err());
        let trunc = tmpfile("trunc.stsv");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(STSV_MAGIC);
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&1.0f64.to_le_bytes()); // only 1 of 4 payload entries
        std::fs::write(&trunc, bytes).unwrap();
        assert!(read_stsv(&trunc).is_err());
    }

    #[test]
    fn matrix_market_array_round_trip_is_exact() {
        let path = tmpfile("rt.mtx");
        let a = sample();
        write_matrix_market(&path, &a).unwrap();
        let b = read_matrix_market(&path).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn matrix_market_coordinate_general_and_symmetric() {
        let path = tmpfile("coord.mtx");
        std::fs::write(
            &path,
            "%%MatrixMarket matrix coordinate real general\n\
             % comment line\n\
             2 3 2\n\
             1 2 4.5\n\
             2 3 -1\n",
        )
        .unwrap();
        let a = read_matrix_market(&path).unwrap();
        assert_eq!(a.get(0, 1), 4.5);
        assert_eq!(a.get(1, 2), -1.0);
        assert_eq!(a.get(0, 0), 0.0);

        let sym = tmpfile("sym.mtx");
        std::fs::write(
            &sym,
            "%%MatrixMarket matrix coordinate real symmetric\n3 3 2\n2 1 7\n3 3 2\n",
        )
        .unwrap();
        let s = read_matrix_market(&sym).unwrap();
        assert_eq!(s.get(1, 0), 7.0);
        assert_eq!(s.get(0, 1), 7.0);
        assert_eq!(s.get(2, 2), 2.0);
    }

    #[test]
    fn matrix_market_rejects_malformed_input() {
        let p = tmpfile("bad.mtx");
        std::fs::write(&p, "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 0 0\n")
            .unwrap();
        assert!(read_matrix_market(&p).is_err());
        std::fs::write(&p, "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 5.0\n")
            .unwrap();
        assert!(read_matrix_market(&p).is_err()); // out-of-range index
        std::fs::write(&p, "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 5.0\n")
            .unwrap();
        assert!(read_matrix_market(&p).is_err()); // nnz mismatch
    }

    #[test]
    fn format_parsing() {
        assert_eq!("mm".parse::<MatrixFormat>().unwrap(), MatrixFormat::MatrixMarket);
        assert_eq!("bin".parse::<MatrixFormat>().unwrap(), MatrixFormat::Binary);
        assert!("csv".parse::<MatrixFormat>().is_err());
    }
}
