#![allow(dead_code)]

use e3b_core::rng::SplitMix64;

/// `λI + Σ φφᵀ`, accumulated in the order given.
pub fn regularized_cov(history: &[Vec<f64>], dim: usize, ridge: f64) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; dim]; dim];
    for (i, row) in c.iter_mut().enumerate() {
        row[i] = ridge;
    }
    for phi in history {
        for i in 0..dim {
            for j in 0..dim {
                c[i][j] += phi[i] * phi[j];
            }
        }
    }
    c
}

/// Gauss-Jordan inversion with partial pivoting on an augmented matrix.
pub fn gauss_jordan(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        assert!(p.abs() > 1e-300, "singular matrix in oracle");
        for v in m[col].iter_mut() {
            *v /= p;
        }
        let pivot_row = m[col].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != col {
                let f = row[col];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn quad_form(m: &[Vec<f64>], x: &[f64]) -> f64 {
    m.iter()
        .zip(x)
        .map(|(row, xi)| xi * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

pub fn gaussian_vec(rng: &mut SplitMix64, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.normal() * scale).collect()
}

/// Random orthogonal matrix from Gram-Schmidt on Gaussian columns.
pub fn random_orthogonal(rng: &mut SplitMix64, n: usize) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < n {
        let mut v = gaussian_vec(rng, n, 1.0);
        for c in &cols {
            let d: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(c) {
                *x -= d * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    // row i, column j = cols[j][i]
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

pub fn mat_vec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Central difference `(f(θ+h) − f(θ−h)) / 2h` for parameter `k`.
pub fn central_difference<P>(
    params: &mut P,
    k: usize,
    h: f64,
    get: impl Fn(&mut P, usize) -> &mut f64,
    loss: impl Fn(&P) -> f64,
) -> f64 {
    let orig = *get(params, k);
    *get(params, k) = orig + h;
    let up = loss(params);
    *get(params, k) = orig - h;
    let down = loss(params);
    *get(params, k) = orig;
    (up - down) / (2.0 * h)
}

/// Relative error with a floor on the denominator so that two tiny numbers
/// are not reported as far apart.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub mod gradcheck;
