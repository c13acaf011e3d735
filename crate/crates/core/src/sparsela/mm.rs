//! MatrixMarket coordinate format (`real general` on write; `general` and
//! `symmetric` on read).

use std::io::{BufRead, Write};

use super::{CsrMatrix, LinalgError};

pub fn write<W: Write>(a: &CsrMatrix, mut w: W) -> std::io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for i in 0..a.nrows() {
        let (cols, vals) = a.row(i);
        for (c, v) in cols.iter().zip(vals) {
            writeln!(w, "{} {} {:.17e}", i + 1, c + 1, v)?;
        }
    }
    Ok(())
}

pub fn read<R: BufRead>(r: R) -> Result<CsrMatrix, LinalgError> {
    let bad = |m: &str| LinalgError::MatrixMarket(m.to_string());
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| bad("empty input"))?
        .map_err(|e| bad(&e.to_string()))?;
    let h = header.to_ascii_lowercase();
    if !h.starts_with("%%matrixmarket matrix coordinate") {
        return Err(bad("expected a coordinate matrix header"));
    }
    if h.contains("complex") || h.contains("pattern") {
        return Err(bad("only real matrices are supported"));
    }
    let symmetric = h.contains("symmetric");
    let mut size: Option<(usize, usize)> = None;
    let mut triplets = Vec::new();
    for line in lines {
        let line = line.map_err(|e| bad(&e.to_string()))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if f.len() != 3 {
                    return Err(bad("malformed size line"));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|_| bad("malformed size line"));
                size = Some((p(f[0])?, p(f[1])?));
            }
            Some(_) => {
                if f.len() != 3 {
                    return Err(bad(&format!("malformed entry `{t}`")));
                }
                let i: usize = f[0].parse().map_err(|_| bad("bad row index"))?;
                let j: usize = f[1].parse().map_err(|_| bad("bad column index"))?;
                let v: f64 = f[2].parse().map_err(|_| bad("bad value"))?;
                if i == 0 || j == 0 {
                    return Err(bad("indices are 1-based"));
                }
                triplets.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (n, m) = size.ok_or_else(|| bad("missing size line"))?;
    CsrMatrix::from_triplets(n, m, &triplets)
}
