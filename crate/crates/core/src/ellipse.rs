//! Episodic elliptical bonus.
//!
//! [`EllipticalTracker`] keeps the inverse of `C = Σ φφᵀ + λI` over the
//! feature vectors absorbed so far and answers `b(φ) = φᵀC⁻¹φ`. The inverse is
//! maintained with Sherman-Morrison rank-1 downdates, so each step costs
//! `O(n²)`. [`oracle_inverse`] and [`eigen_bonus`] recompute the same
//! quantities from scratch and exist for tests and benchmarks.

use std::ops::Deref;

use crate::error::{invalid, Error, Result};

/// Dense feature vector `φ(s)` with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("feature entry {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for FeatureVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Regularized inverse covariance of the features seen in the current episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticalTracker {
    dim: usize,
    ridge: f64,
    inv_cov: Vec<f64>,
    count: u64,
    scratch: Vec<f64>,
}

impl EllipticalTracker {
    /// Fresh tracker with `C⁻¹ = I/λ`.
    pub fn new(dim: usize, ridge: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("tracker dimension must be at least 1"));
        }
        if !(ridge > 0.0) || !ridge.is_finite() {
            return Err(invalid(format!("ridge must be positive and finite, got {ridge}")));
        }
        let mut t = Self {
            dim,
            ridge,
            inv_cov: vec![0.0; dim * dim],
            count: 0,
            scratch: vec![0.0; dim],
        };
        t.reset();
        Ok(t)
    }

    /// Back to `C⁻¹ = I/λ` with an empty history.
    pub fn reset(&mut self) {
        self.inv_cov.iter_mut().for_each(|v| *v = 0.0);
        let d = 1.0 / self.ridge;
        for i in 0..self.dim {
            self.inv_cov[i * self.dim + i] = d;
        }
        self.count = 0;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Number of vectors absorbed since the last reset.
    pub fn count(&self) -> u64 {
        self.count
    }

    /// Row-major `C⁻¹`.
    pub fn inv_cov(&self) -> &[f64] {
        &self.inv_cov
    }

    fn check(&self, phi: &[f64]) -> Result<()> {
        if phi.len() != self.dim {
            return Err(invalid(format!(
                "feature has dimension {}, tracker expects {}",
                phi.len(),
                self.dim
            )));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("feature vector has non-finite entries".into()));
        }
        Ok(())
    }

    fn mul_into(&self, phi: &[f64], out: &mut [f64]) {
        let n = self.dim;
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.inv_cov[i * n..(i + 1) * n];
            *o = row.iter().zip(phi).map(|(a, b)| a * b).sum();
        }
    }

    /// `φᵀC⁻¹φ`, clamped at zero. Read-only.
    pub fn bonus(&self, phi: &[f64]) -> Result<f64> {
        self.check(phi)?;
        let n = self.dim;
        let mut b = 0.0;
        for i in 0..n {
            let row = &self.inv_cov[i * n..(i + 1) * n];
            let ui: f64 = row.iter().zip(phi).map(|(a, b)| a * b).sum();
            b += phi[i] * ui;
        }
        Ok(b.max(0.0))
    }

    /// Absorbs `φ` and returns the bonus it had *before* the update.
    ///
    /// `u = C⁻¹φ` and `b = φᵀu` are computed once and used for both the
    /// returned bonus and the downdate `C⁻¹ ← C⁻¹ − uuᵀ/(1 + b)`, applied as
    /// `C⁻¹ ← C⁻¹ − vvᵀ` with `v = u/√(1 + b)`. Row updates stay contiguous,
    /// and since `vᵢvⱼ = vⱼvᵢ` exactly the matrix stays exactly symmetric.
    pub fn update(&mut self, phi: &[f64]) -> Result<f64> {
        self.check(phi)?;
        let n = self.dim;
        let mut u = std::mem::take(&mut self.scratch);
        self.mul_into(phi, &mut u);
        let b = u.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>().max(0.0);
        let r = 1.0 / (1.0 + b).sqrt();
        u.iter_mut().for_each(|x| *x *= r);
        for (i, row) in self.inv_cov.chunks_exact_mut(n).enumerate() {
            let vi = u[i];
            for (a, vj) in row.iter_mut().zip(&u) {
                *a -= vi * vj;
            }
        }
        self.scratch = u;
        self.count += 1;
        Ok(b)
    }

    /// Flat little-endian float64 dump of `C⁻¹` (row-major).
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.inv_cov.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    /// Restores a tracker from [`Self::to_le_bytes`] output.
    pub fn from_le_bytes(dim: usize, ridge: f64, count: u64, bytes: &[u8]) -> Result<Self> {
        let mut t = Self::new(dim, ridge)?;
        if bytes.len() != dim * dim * 8 {
            return Err(invalid(format!(
                "expected {} bytes for a {dim}x{dim} block, got {}",
                dim * dim * 8,
                bytes.len()
            )));
        }
        for (dst, chunk) in t.inv_cov.iter_mut().zip(bytes.chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        t.count = count;
        Ok(t)
    }
}

/// `Σ φφᵀ + λI` as a row-major matrix.
pub fn covariance<V: AsRef<[f64]>>(history: &[V], dim: usize, ridge: f64) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    if !(ridge > 0.0) {
        return Err(invalid(format!("ridge must be positive, got {ridge}")));
    }
    let mut c = vec![0.0; dim * dim];
    for i in 0..dim {
        c[i * dim + i] = ridge;
    }
    for (k, phi) in history.iter().enumerate() {
        let phi = phi.as_ref();
        if phi.len() != dim {
            return Err(invalid(format!(
                "history entry {k} has dimension {}, expected {dim}",
                phi.len()
            )));
        }
        add_outer(&mut c, phi);
    }
    Ok(c)
}

/// `c += φφᵀ`.
pub fn add_outer(c: &mut [f64], phi: &[f64]) {
    let n = phi.len();
    for i in 0..n {
        let pi = phi[i];
        if pi == 0.0 {
            continue;
        }
        let row = &mut c[i * n..(i + 1) * n];
        for (r, pj) in row.iter_mut().zip(phi) {
            *r += pi * pj;
        }
    }
}

/// Inverse of a dense square matrix by Gauss-Jordan elimination with partial
/// pivoting. `a` is row-major and is consumed as workspace.
pub fn invert_dense(mut a: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    if a.len() != n * n {
        return Err(invalid("matrix buffer does not match dimension"));
    }
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
            .unwrap();
        let p = a[pivot * n + col];
        if p == 0.0 || !p.is_finite() {
            return Err(Error::Numeric(format!("singular matrix at column {col}")));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
                inv.swap(pivot * n + k, col * n + k);
            }
        }
        let scale = 1.0 / p;
        a[col * n..(col + 1) * n].iter_mut().for_each(|v| *v *= scale);
        inv[col * n..(col + 1) * n].iter_mut().for_each(|v| *v *= scale);

        let pivot_a = a[col * n..(col + 1) * n].to_vec();
        let pivot_inv = inv[col * n..(col + 1) * n].to_vec();
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r * n + col];
            if f == 0.0 {
                continue;
            }
            for (x, p) in a[r * n..(r + 1) * n].iter_mut().zip(&pivot_a) {
                *x -= f * p;
            }
            for (x, p) in inv[r * n..(r + 1) * n].iter_mut().zip(&pivot_inv) {
                *x -= f * p;
            }
        }
    }
    Ok(inv)
}

/// Exact `(Σ φφᵀ + λI)⁻¹` by dense elimination. Test and benchmark oracle.
pub fn oracle_inverse<V: AsRef<[f64]>>(history: &[V], dim: usize, ridge: f64) -> Result<Vec<f64>> {
    let c = covariance(history, dim, ridge)?;
    invert_dense(c, dim)
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` where eigenvector `k` is column `k`
/// of the row-major `n×n` matrix.
pub fn symmetric_eigen(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    const MAX_SWEEPS: usize = 100;
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-15 * total.max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= tol {
            let vals = (0..n).map(|i| a[i * n + i]).collect();
            return Ok((vals, v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::Numeric(format!(
        "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
    )))
}

/// Elliptical bonus through the eigenbasis of `C`: `Σ z_i² / λ_i` with
/// `z` the coordinates of `φ` in the eigenvectors of `C`.
pub fn eigen_bonus<V: AsRef<[f64]>>(history: &[V], dim: usize, ridge: f64, phi: &[f64]) -> Result<f64> {
    if phi.len() != dim {
        return Err(invalid(format!("feature has dimension {}, expected {dim}", phi.len())));
    }
    let c = covariance(history, dim, ridge)?;
    let (vals, vecs) = symmetric_eigen(&c, dim)?;
    let mut b = 0.0;
    for (k, lam) in vals.iter().enumerate() {
        let z: f64 = (0..dim).map(|i| vecs[i * dim + k] * phi[i]).sum();
        b += z * z / lam;
    }
    Ok(b)
}
