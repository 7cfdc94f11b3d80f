//! One-sided (Hestenes) Jacobi SVD for dense grids.
//!
//! Columns of the working matrix are rotated pairwise until mutually
//! orthogonal; their norms are then the singular values and the normalized
//! columns the left singular vectors. The rank-k reconstruction is the
//! projection `U_k U_kᵀ A`, which equals `U_k Σ_k V_kᵀ` without accumulating V.

use crate::raster::Grid;

const MAX_SWEEPS: usize = 60;
/// Pairs whose normalized inner product is below this are treated as orthogonal.
const ORTHO_TOL: f64 = 1e-13;

/// Singular values (nonincreasing) and matching unit left singular vectors of
/// the working matrix.
#[derive(Debug, Clone)]
pub struct JacobiSvd {
    /// Length of each column of the working matrix.
    pub rows: usize,
    pub singular_values: Vec<f64>,
    /// Column-major, `singular_values.len()` columns of length `rows`.
    pub left: Vec<f64>,
    pub sweeps: usize,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Decomposes a column-major `rows x cols` matrix.
pub fn jacobi_svd(mut a: Vec<f64>, rows: usize, cols: usize) -> JacobiSvd {
    assert_eq!(a.len(), rows * cols);
    let total: f64 = a.iter().map(|v| v * v).sum();
    let negligible = total * 1e-30;
    let mut norms: Vec<f64> = a.chunks_exact(rows.max(1)).map(|c| dot(c, c)).collect();
    let mut sweeps = 0;

    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut rotated = false;
        for i in 0..cols {
            for j in i + 1..cols {
                let alpha = norms[i];
                let beta = norms[j];
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let (head, tail) = a.split_at_mut(j * rows);
                let ci = &mut head[i * rows..(i + 1) * rows];
                let cj = &mut tail[..rows];
                let gamma = dot(ci, cj);
                if gamma.abs() <= ORTHO_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
                    let (xi, yj) = (*x, *y);
                    *x = c * xi - s * yj;
                    *y = s * xi + c * yj;
                }
                norms[i] = alpha - t * gamma;
                norms[j] = beta + t * gamma;
            }
        }
        // refresh cached norms so rounding drift cannot accumulate
        for (n, col) in norms.iter_mut().zip(a.chunks_exact(rows.max(1))) {
            *n = dot(col, col);
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));
    let mut singular_values = Vec::with_capacity(cols);
    let mut left = Vec::with_capacity(rows * cols);
    for &idx in &order {
        let sigma = norms[idx].max(0.0).sqrt();
        singular_values.push(sigma);
        let col = &a[idx * rows..(idx + 1) * rows];
        if sigma > 0.0 {
            left.extend(col.iter().map(|v| v / sigma));
        } else {
            left.extend(std::iter::repeat_n(0.0, rows));
        }
    }
    JacobiSvd {
        rows,
        singular_values,
        left,
        sweeps,
    }
}

/// Lays a grid out as a column-major matrix with `min(width, height)`
/// columns. Returns the matrix, column length, column count and whether
/// the layout is the transpose of the image.
fn working_matrix(grid: &Grid) -> (Vec<f64>, usize, usize, bool) {
    let (w, h) = (grid.width(), grid.height());
    if w <= h {
        // columns of the image: length h, w of them
        let mut m = Vec::with_capacity(w * h);
        for c in 0..w {
            m.extend((0..h).map(|r| grid.get(r, c) as f64));
        }
        (m, h, w, false)
    } else {
        // rows of the image as columns of the transpose
        let m = grid.data().iter().map(|&v| v as f64).collect();
        (m, w, h, true)
    }
}

/// Singular values of the grid, nonincreasing.
pub fn singular_values(grid: &Grid) -> Vec<f64> {
    let (m, rows, cols, _) = working_matrix(grid);
    jacobi_svd(m, rows, cols).singular_values
}

/// Best rank-`k` approximation in the Frobenius norm. `k` is clamped to
/// `1..=min(width, height)`.
pub fn truncated_svd(grid: &Grid, k: usize) -> Grid {
    let (original, rows, cols, transposed) = working_matrix(grid);
    let svd = jacobi_svd(original.clone(), rows, cols);
    let k = k.clamp(1, cols);

    // projection coefficients: coeff[i][col] = u_iᵀ a_col
    // directions of negligible singular values are numerically arbitrary and
    // may not be orthogonal to the rest; they carry no energy anyway
    let floor = svd.singular_values.first().copied().unwrap_or(0.0) * 1e-10;
    let mut approx = vec![0.0f64; rows * cols];
    for i in 0..k {
        if svd.singular_values[i] <= floor {
            break;
        }
        let u = &svd.left[i * rows..(i + 1) * rows];
        for (col, out) in original.chunks_exact(rows).zip(approx.chunks_exact_mut(rows)) {
            let coeff = dot(u, col);
            for (o, &ui) in out.iter_mut().zip(u) {
                *o += coeff * ui;
            }
        }
    }

    let (w, h) = (grid.width(), grid.height());
    let data: Vec<f32> = if transposed {
        // approx columns are image rows already in row-major order
        approx.iter().map(|&v| v as f32).collect()
    } else {
        let mut d = vec![0.0f32; w * h];
        for c in 0..w {
            for r in 0..h {
                d[r * w + c] = approx[c * h + r] as f32;
            }
        }
        d
    };
    Grid::new(w, h, data).expect("finite reconstruction")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frob(a: &Grid, b: &Grid) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| ((x - y) as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn norm(a: &Grid) -> f64 {
        a.data().iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn rank_one_recovered_exactly() {
        let g = Grid::from_fn(17, 9, |r, c| (r as f32 + 1.0) * (c as f32 * 0.5 - 3.0));
        let approx = truncated_svd(&g, 1);
        assert!(frob(&g, &approx) <= 1e-4 * norm(&g));
    }

    #[test]
    fn full_rank_recovers_input() {
        let g = Grid::from_fn(12, 12, |r, c| ((r * 31 + c * 17) % 23) as f32 - 11.0);
        let approx = truncated_svd(&g, 12);
        assert!(frob(&g, &approx) <= 1e-4 * norm(&g));
        // k beyond the smaller edge is clamped
        let approx = truncated_svd(&g, 70);
        assert!(frob(&g, &approx) <= 1e-4 * norm(&g));
    }

    #[test]
    fn known_singular_values() {
        // diag(3, 2) padded: singular values 3, 2
        let g = Grid::new(2, 3, vec![3.0, 0.0, 0.0, 2.0, 0.0, 0.0]).unwrap();
        let s = singular_values(&g);
        assert!((s[0] - 3.0).abs() < 1e-12 && (s[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_grid() {
        let g = Grid::zeros(5, 4);
        assert_eq!(truncated_svd(&g, 2), g);
    }

    #[test]
    fn wide_and_tall_agree() {
        let g = Grid::from_fn(20, 7, |r, c| ((r * 7 + c * 3) % 5) as f32 + (r as f32) * 0.1);
        let gt = Grid::from_fn(7, 20, |r, c| g.get(c, r));
        let a = truncated_svd(&g, 3);
        let b = truncated_svd(&gt, 3);
        for r in 0..7 {
            for c in 0..20 {
                assert!((a.get(r, c) - b.get(c, r)).abs() < 1e-4);
            }
        }
    }
}
