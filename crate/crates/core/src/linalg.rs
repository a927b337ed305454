//! Small dense helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

pub fn eye(n: usize) -> Mat {
    Mat::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> Mat {
    Mat::zeros(r, c)
}

/// Upper Jordan block with eigenvalue zero (ones on the superdiagonal).
pub fn jordan_nilpotent(n: usize) -> Mat {
    let mut j = zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        j[(i, i + 1)] = 1.0;
    }
    j
}

/// Standard unit vector `e_k` (0-based) as an `n × 1` column.
pub fn unit(n: usize, k: usize) -> Mat {
    let mut e = zeros(n, 1);
    e[(k, 0)] = 1.0;
    e
}

pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Assemble a block matrix from a grid of blocks with consistent row/column sizes.
pub fn block(grid: &[Vec<&Mat>]) -> Mat {
    let rows: usize = grid.iter().map(|row| row[0].nrows()).sum();
    let cols: usize = grid[0].iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let mut r = 0;
    for row in grid {
        let h = row[0].nrows();
        let mut c = 0;
        for b in row {
            debug_assert_eq!(b.nrows(), h, "ragged block row");
            out.view_mut((r, c), (h, b.ncols())).copy_from(*b);
            c += b.ncols();
        }
        r += h;
    }
    out
}

pub fn vstack(parts: &[&Mat]) -> Mat {
    let grid: Vec<Vec<&Mat>> = parts.iter().map(|p| vec![*p]).collect();
    block(&grid)
}

pub fn hstack(parts: &[&Mat]) -> Mat {
    block(&[parts.to_vec()])
}

pub fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Extreme eigenvalues `(min, max)` of the symmetric part of `m`.
/// An empty matrix reports `(+inf, -inf)`.
pub fn eig_extremes(m: &Mat) -> (f64, f64) {
    if m.nrows() == 0 {
        return (f64::INFINITY, f64::NEG_INFINITY);
    }
    let eig = sym(m).symmetric_eigenvalues();
    (eig.min(), eig.max())
}

pub fn spectral_radius(m: &Mat) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

pub fn from_rows(rows: &[Vec<f64>]) -> Mat {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    Mat::from_fn(r, c, |i, j| rows[i][j])
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jordan_block_shifts_up() {
        let j = jordan_nilpotent(3);
        let x = Mat::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert_eq!((&j * x).as_slice(), &[2.0, 3.0, 0.0]);
        assert_eq!(jordan_nilpotent(3).pow(3), zeros(3, 3));
    }

    #[test]
    fn block_assembly() {
        let a = eye(2);
        let b = zeros(2, 1);
        let c = zeros(1, 2);
        let d = Mat::from_element(1, 1, 5.0);
        let m = block(&[vec![&a, &b], vec![&c, &d]]);
        assert_eq!(m, block_diag(&[&a, &d]));
        assert_eq!(m[(2, 2)], 5.0);
    }

    #[test]
    fn extremes_of_diagonal() {
        let m = Mat::from_diagonal(&Vector::from_vec(vec![3.0, -1.0, 2.0]));
        assert_eq!(eig_extremes(&m), (-1.0, 3.0));
        assert_eq!(eig_extremes(&zeros(0, 0)).0, f64::INFINITY);
    }
}
