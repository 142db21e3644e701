//! Matrix Market coordinate files with a vertex-coordinate CSV.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, SgfError};
use crate::grid::CartesianGrid;
use crate::sparse::CsrMatrix;

use super::ProblemInstance;

fn parse_mtx(text: &str) -> Result<CsrMatrix> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| SgfError::Parse("empty matrix file".into()))?;
    let h: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if h.len() < 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" || h[2] != "coordinate" {
        return Err(SgfError::Parse(format!("unsupported header '{header}'")));
    }
    if h[3] != "real" && h[3] != "integer" {
        return Err(SgfError::Parse(format!("unsupported field '{}'", h[3])));
    }
    let symmetric = match h[4].as_str() {
        "symmetric" => true,
        "general" => false,
        other => return Err(SgfError::Parse(format!("unsupported symmetry '{other}'"))),
    };
    let mut body = lines.map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('%'));
    let size = body.next().ok_or_else(|| SgfError::Parse("missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| SgfError::Parse(format!("bad size line '{size}'"))))
        .collect::<Result<_>>()?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(SgfError::Parse(format!("bad size line '{size}'")));
    };
    if rows != cols {
        return Err(SgfError::DimensionMismatch(format!("matrix is {rows}x{cols}")));
    }
    let mut t = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
    let mut count = 0;
    for line in body {
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 3 {
            return Err(SgfError::Parse(format!("bad entry line '{line}'")));
        }
        let bad = || SgfError::Parse(format!("bad entry line '{line}'"));
        let i: usize = tok[0].parse().map_err(|_| bad())?;
        let j: usize = tok[1].parse().map_err(|_| bad())?;
        let v: f64 = tok[2].parse().map_err(|_| bad())?;
        if i == 0 || j == 0 || i > rows || j > rows || !v.is_finite() {
            return Err(bad());
        }
        t.push((i - 1, j - 1, v));
        if symmetric && i != j {
            t.push((j - 1, i - 1, v));
        }
        count += 1;
    }
    if count != nnz {
        return Err(SgfError::CountMismatch { expected: nnz, found: count });
    }
    let a = CsrMatrix::from_triplets(rows, t)?;
    if let Some((r, c)) = a.pattern_asymmetry() {
        return Err(SgfError::NotSymmetric(format!("entry ({r}, {c}) has no mirror")));
    }
    let asym = a.relative_asymmetry();
    if asym > 1e-12 {
        return Err(SgfError::NotSymmetric(format!("relative asymmetry {asym:e}")));
    }
    Ok(a)
}

fn parse_coords(path: &Path) -> Result<Vec<[f64; 3]>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut points = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.is_empty() || rec.get(0).is_some_and(|s| s.starts_with('#')) {
            continue;
        }
        if rec.len() != 4 {
            return Err(SgfError::Parse(format!("coordinate row needs 4 fields, got {}", rec.len())));
        }
        let Ok(id) = rec[0].parse::<usize>() else {
            if points.is_empty() {
                continue; // header row
            }
            return Err(SgfError::Parse(format!("bad vertex id '{}'", &rec[0])));
        };
        let mut p = [0.0; 3];
        for a in 0..3 {
            p[a] = rec[a + 1].parse().map_err(|_| SgfError::Parse(format!("bad coordinate '{}'", &rec[a + 1])))?;
        }
        if points.insert(id, p).is_some() {
            return Err(SgfError::Parse(format!("duplicate vertex id {id}")));
        }
    }
    let n = points.len();
    if points.keys().copied().ne(0..n) {
        return Err(SgfError::Parse("vertex ids must be 0..n-1".into()));
    }
    Ok(points.into_values().collect())
}

/// Axis-aligned lattice underlying `coords`: sorted distinct values per axis, deduplicated to a relative tolerance.
fn lattice_axes(coords: &[[f64; 3]]) -> [Vec<f64>; 3] {
    std::array::from_fn(|a| {
        let mut v: Vec<f64> = coords.iter().map(|p| p[a]).collect();
        v.sort_by(f64::total_cmp);
        let span = v.last().unwrap_or(&0.0) - v.first().unwrap_or(&0.0);
        let tol = 1e-9 * span.max(1.0);
        v.dedup_by(|x, y| (*x - *y).abs() <= tol);
        v
    })
}

/// Reads a symmetric matrix and vertex coordinates and reorders unknowns onto the
/// cartesian lattice spanned by the coordinates (x-fastest, component-major).
pub fn read_mtx(matrix_path: impl AsRef<Path>, coords_path: impl AsRef<Path>) -> Result<ProblemInstance> {
    let a = parse_mtx(&std::fs::read_to_string(matrix_path.as_ref())?)?;
    let coords = parse_coords(coords_path.as_ref())?;
    let nv = coords.len();
    if nv == 0 || a.dim() % nv != 0 {
        return Err(SgfError::DimensionMismatch(format!("{} unknowns for {nv} vertices", a.dim())));
    }
    let components = a.dim() / nv;
    if components != 1 && components != 3 {
        return Err(SgfError::DimensionMismatch(format!("{components} unknowns per vertex")));
    }
    let axes = lattice_axes(&coords);
    let dims = [axes[0].len(), axes[1].len(), axes[2].len()];
    if dims.iter().product::<usize>() != nv {
        return Err(SgfError::DimensionMismatch(format!("coordinates do not form a full {dims:?} lattice")));
    }
    let spacing: [f64; 3] = std::array::from_fn(|a| {
        if axes[a].len() > 1 {
            (axes[a][axes[a].len() - 1] - axes[a][0]) / (axes[a].len() - 1) as f64
        } else {
            1.0
        }
    });
    let grid = CartesianGrid::new(dims, spacing, components)?;
    let mut old_of_new = vec![usize::MAX; nv];
    for (old, p) in coords.iter().enumerate() {
        let idx: [usize; 3] = std::array::from_fn(|a| {
            axes[a].partition_point(|&x| x < p[a] - 1e-9 * (spacing[a].abs().max(1.0))).min(dims[a] - 1)
        });
        let new = grid.vertex_id(idx[0], idx[1], idx[2]);
        if old_of_new[new] != usize::MAX {
            return Err(SgfError::DimensionMismatch(format!(
                "vertices {} and {old} share a lattice point",
                old_of_new[new]
            )));
        }
        old_of_new[new] = old;
    }
    let perm: Vec<usize> = (0..components).flat_map(|c| old_of_new.iter().map(move |&o| c * nv + o)).collect();
    let matrix = a.permute(&perm)?;
    let new_coords = old_of_new.iter().map(|&o| coords[o]).collect();
    let n = matrix.dim();
    Ok(ProblemInstance {
        matrix,
        coords: new_coords,
        grid,
        components,
        rhs: vec![1.0; n],
        label: format!("mtx-{}", matrix_path.as_ref().display()),
    })
}

/// Writes the lower triangle in symmetric coordinate format.
pub fn write_mtx(path: impl AsRef<Path>, a: &CsrMatrix) -> Result<()> {
    let lower: Vec<(usize, usize, f64)> = a.iter().filter(|&(i, j, _)| j <= i).collect();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(f, "{} {} {}", a.dim(), a.dim(), lower.len())?;
    for (i, j, v) in lower {
        writeln!(f, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    f.flush()?;
    Ok(())
}

pub fn write_coords(path: impl AsRef<Path>, coords: &[[f64; 3]]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "x", "y", "z"])?;
    for (i, p) in coords.iter().enumerate() {
        w.write_record(&[i.to_string(), format!("{:e}", p[0]), format!("{:e}", p[1]), format!("{:e}", p[2])])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::poisson7;

    #[test]
    fn identity_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("a.mtx");
        let c = dir.path().join("c.csv");
        std::fs::write(&m, "%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 2\n1 1 1.0\n2 2 1.0\n")
            .unwrap();
        std::fs::write(&c, "id,x,y,z\n0,0,0,0\n1,1,0,0\n").unwrap();
        let p = read_mtx(&m, &c).unwrap();
        assert_eq!(p.matrix, CsrMatrix::identity(2));
        assert_eq!(p.grid.dims, [2, 1, 1]);
    }

    #[test]
    fn asymmetric_pattern_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("a.mtx");
        let c = dir.path().join("c.csv");
        std::fs::write(&m, "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1.0\n2 2 1.0\n2 1 0.5\n")
            .unwrap();
        std::fs::write(&c, "0,0,0,0\n1,1,0,0\n").unwrap();
        assert!(matches!(read_mtx(&m, &c), Err(SgfError::NotSymmetric(_))));
    }

    #[test]
    fn writer_roundtrip_with_shuffled_vertices() {
        let p = poisson7(3, 2, 2, [0.5, 1.0, 2.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("p.mtx");
        let c = dir.path().join("p.csv");
        write_mtx(&m, &p.matrix).unwrap();
        write_coords(&c, &p.coords).unwrap();
        let q = read_mtx(&m, &c).unwrap();
        assert_eq!(q.matrix, p.matrix);
        assert_eq!(q.grid.dims, p.grid.dims);

        // reversed vertex numbering comes back in lattice order
        let nv = p.dim();
        let rev: Vec<usize> = (0..nv).rev().collect();
        write_mtx(&m, &p.matrix.permute(&rev).unwrap()).unwrap();
        let rc: Vec<[f64; 3]> = rev.iter().map(|&o| p.coords[o]).collect();
        write_coords(&c, &rc).unwrap();
        let q = read_mtx(&m, &c).unwrap();
        assert_eq!(q.matrix, p.matrix);
        assert_eq!(q.coords, p.coords);
    }
}
