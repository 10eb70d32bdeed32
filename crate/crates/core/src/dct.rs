//! Orthonormal 2-D DCT-II and its inverse, computed as separable row/column
//! passes over a precomputed cosine basis.

/// `n`×`n` basis with rows `s(u) cos((2i + 1) u π / 2n)`, where
/// `s(0) = √(1/n)` and `s(u) = √(2/n)` otherwise.
fn basis(n: usize) -> Vec<f64> {
    let mut b = vec![0.0; n * n];
    let nf = n as f64;
    for u in 0..n {
        let scale = if u == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        for i in 0..n {
            let angle = (2 * i + 1) as f64 * u as f64 * std::f64::consts::PI / (2.0 * nf);
            b[u * n + i] = scale * angle.cos();
        }
    }
    b
}

/// `out[r][c] = Σ_k m[r][k] x[k][c]` with `m` either as stored or transposed.
fn left_mul(m: &[f64], transpose: bool, x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for k in 0..rows {
            let coef = if transpose { m[k * rows + r] } else { m[r * rows + k] };
            let src = &x[k * cols..(k + 1) * cols];
            for (o, &v) in out[r * cols..(r + 1) * cols].iter_mut().zip(src) {
                *o += coef * v;
            }
        }
    }
    out
}

/// `out[r][c] = Σ_k x[r][k] m[c][k]` (or `m[k][c]` when `transpose` is false).
fn right_mul(x: &[f64], m: &[f64], transpose: bool, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        for c in 0..cols {
            out[r * cols + c] = row
                .iter()
                .enumerate()
                .map(|(k, &v)| v * if transpose { m[c * cols + k] } else { m[k * cols + c] })
                .sum();
        }
    }
    out
}

/// Forward transform of an `h`×`w` row-major plane.
pub fn dct2(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    assert_eq!(plane.len(), h * w, "plane size");
    let bh = basis(h);
    let bw = basis(w);
    // F = Bh · X · Bwᵀ
    let t = left_mul(&bh, false, plane, h, w);
    right_mul(&t, &bw, true, h, w)
}

/// Inverse transform: `X = Bhᵀ · F · Bw`.
pub fn idct2(coeffs: &[f64], h: usize, w: usize) -> Vec<f64> {
    assert_eq!(coeffs.len(), h * w, "coefficient size");
    let bh = basis(h);
    let bw = basis(w);
    let t = left_mul(&bh, true, coeffs, h, w);
    right_mul(&t, &bw, false, h, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_concentrate_in_dc() {
        let f = dct2(&[1.0; 16], 4, 4);
        assert!((f[0] - 4.0).abs() < 1e-12);
        assert!(f[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn single_sample_is_identity() {
        assert_eq!(dct2(&[0.37], 1, 1), vec![0.37]);
        assert_eq!(idct2(&[0.37], 1, 1), vec![0.37]);
    }

    #[test]
    fn dc_delta_inverts_to_ones() {
        let (h, w) = (3, 5);
        let mut f = vec![0.0; h * w];
        f[0] = ((h * w) as f64).sqrt();
        assert!(idct2(&f, h, w).iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rectangular_round_trip() {
        let x: Vec<f64> = (0..6 * 9).map(|i| ((i * 37) % 17) as f64 / 17.0).collect();
        let back = idct2(&dct2(&x, 6, 9), 6, 9);
        assert!(x.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
