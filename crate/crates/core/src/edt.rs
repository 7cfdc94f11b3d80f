//! Exact Euclidean distance transform by the separable lower-envelope method
//! (Felzenszwalb & Huttenlocher): a 1-D squared-distance transform over
//! columns, then over rows.

use crate::raster::{BinaryMask, Grid};

/// Stand-in for infinity in the squared-distance domain; larger than any
/// in-image squared distance but small enough to keep envelope arithmetic exact.
fn far(width: usize, height: usize) -> f64 {
    let n = (width + height + 1) as f64;
    n * n * 4.0
}

/// 1-D squared-distance transform of sampled function `f` into `out`.
/// `v` and `z` are scratch buffers of length `n` and `n + 1`.
fn transform_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let fq = f[q] + (q * q) as f64;
        // z[0] is -inf and every s is finite, so k never underflows
        let mut s;
        loop {
            let p = v[k];
            s = (fq - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64);
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared Euclidean distance (in pixels²) to the nearest true pixel.
/// Returns `None` for an empty mask.
pub fn squared_distance_transform(mask: &BinaryMask) -> Option<Vec<f64>> {
    if mask.is_all_false() {
        return None;
    }
    let (w, h) = (mask.width(), mask.height());
    let inf = far(w, h);
    let mut d: Vec<f64> = mask.data().iter().map(|&m| if m { 0.0 } else { inf }).collect();

    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for c in 0..w {
        for r in 0..h {
            f[r] = d[r * w + c];
        }
        transform_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for r in 0..h {
            d[r * w + c] = out[r];
        }
    }
    for r in 0..h {
        let row = &mut d[r * w..(r + 1) * w];
        f[..w].copy_from_slice(row);
        transform_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        row.copy_from_slice(&out[..w]);
    }
    Some(d)
}

/// Distance in pixels from each pixel to the nearest true pixel; 0 on true
/// pixels. An empty mask yields `width + height` everywhere.
pub fn euclidean_distance_transform(mask: &BinaryMask) -> Grid {
    let (w, h) = (mask.width(), mask.height());
    match squared_distance_transform(mask) {
        Some(sq) => Grid::new(w, h, sq.into_iter().map(|s| s.sqrt() as f32).collect()).expect("finite distances"),
        None => Grid::filled(w, h, (w + h) as f32),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_four_five() {
        let mut m = BinaryMask::empty(8, 8);
        m.set(0, 0, true);
        let d = euclidean_distance_transform(&m);
        assert_eq!(d.get(3, 4), 5.0);
        assert_eq!(d.get(4, 3), 5.0);
        assert_eq!(d.get(0, 0), 0.0);
        assert_eq!(d.get(0, 7), 7.0);
    }

    #[test]
    fn empty_mask_sentinel() {
        let d = euclidean_distance_transform(&BinaryMask::empty(5, 3));
        assert!(d.data().iter().all(|&v| v == 8.0));
    }

    #[test]
    fn full_mask_is_zero() {
        let d = euclidean_distance_transform(&BinaryMask::full(4, 6));
        assert!(d.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_row_and_column() {
        let m = BinaryMask::new(5, 1, vec![false, false, true, false, false]).unwrap();
        assert_eq!(euclidean_distance_transform(&m).data(), &[2.0, 1.0, 0.0, 1.0, 2.0]);
        let m = BinaryMask::new(1, 4, vec![true, false, false, true]).unwrap();
        assert_eq!(euclidean_distance_transform(&m).data(), &[0.0, 1.0, 1.0, 0.0]);
    }
}
