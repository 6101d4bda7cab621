//! Global PCA decorrelation of four equally sized channels.

use crate::error::{ensure, Result};
use crate::imagecore::Plane;
use crate::scalar::Scalar;

/// Orthonormal 4×4 transform whose rows are principal axes of the
/// inter-channel covariance, ordered by descending variance.
///
/// Forward: `P = A · (I − mean)`; inverse: `I = Aᵀ · P + mean`.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaTransform {
    matrix: [[f64; 4]; 4],
    mean: [f64; 4],
    eigenvalues: [f64; 4],
}

impl PcaTransform {
    /// Builds a transform from explicit parts. Rows must be orthonormal.
    pub fn from_parts(matrix: [[f64; 4]; 4], mean: [f64; 4]) -> Result<Self> {
        let t = PcaTransform {
            matrix,
            mean,
            eigenvalues: [0.0; 4],
        };
        ensure!(
            t.orthonormality_error() <= 1e-9,
            "transform rows are not orthonormal"
        );
        Ok(t)
    }

    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        PcaTransform {
            matrix: m,
            mean: [0.0; 4],
            eigenvalues: [0.0; 4],
        }
    }

    pub fn matrix(&self) -> &[[f64; 4]; 4] {
        &self.matrix
    }

    pub fn mean(&self) -> &[f64; 4] {
        &self.mean
    }

    /// Component variances (covariance eigenvalues), descending.
    pub fn eigenvalues(&self) -> &[f64; 4] {
        &self.eigenvalues
    }

    /// `‖AᵀA − I‖∞` (max-abs entry).
    pub fn orthonormality_error(&self) -> f64 {
        let a = &self.matrix;
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = (0..4).map(|k| a[k][i] * a[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    pub fn forward<T: Scalar>(&self, channels: [&Plane<T>; 4]) -> Result<[Plane<T>; 4]> {
        same_dims(&channels)?;
        let (w, h) = channels[0].dims();
        let mut out: [Vec<T>; 4] = std::array::from_fn(|_| Vec::with_capacity(w * h));
        for i in 0..w * h {
            let v: [f64; 4] = std::array::from_fn(|j| channels[j].samples()[i].as_f64() - self.mean[j]);
            for (c, row) in self.matrix.iter().enumerate() {
                let p = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
                out[c].push(T::lit(p));
            }
        }
        Ok(out.map(|s| Plane::from_vec(w, h, s)))
    }

    pub fn inverse<T: Scalar>(&self, components: [&Plane<T>; 4]) -> Result<[Plane<T>; 4]> {
        same_dims(&components)?;
        let (w, h) = components[0].dims();
        let a = &self.matrix;
        let mut out: [Vec<T>; 4] = std::array::from_fn(|_| Vec::with_capacity(w * h));
        for i in 0..w * h {
            let p: [f64; 4] = std::array::from_fn(|c| components[c].samples()[i].as_f64());
            for (j, o) in out.iter_mut().enumerate() {
                let v = a[0][j] * p[0] + a[1][j] * p[1] + a[2][j] * p[2] + a[3][j] * p[3];
                o.push(T::lit(v + self.mean[j]));
            }
        }
        Ok(out.map(|s| Plane::from_vec(w, h, s)))
    }

    /// Noise standard deviations of the components for independent channel
    /// noise: `σ²_i = Σ_j A²_ij σ²_j`.
    pub fn propagate_noise(&self, sigmas: [f64; 4]) -> Result<[f64; 4]> {
        ensure!(
            sigmas.iter().all(|s| s.is_finite() && *s >= 0.0),
            "noise levels must be finite and non-negative: {sigmas:?}"
        );
        Ok(std::array::from_fn(|i| {
            (0..4)
                .map(|j| self.matrix[i][j] * self.matrix[i][j] * sigmas[j] * sigmas[j])
                .sum::<f64>()
                .sqrt()
        }))
    }
}

fn same_dims<T: Scalar>(planes: &[&Plane<T>; 4]) -> Result<()> {
    let d = planes[0].dims();
    ensure!(
        planes.iter().all(|p| p.dims() == d),
        "the four channels must share dimensions"
    );
    Ok(())
}

/// Principal axes of the mean-subtracted covariance of four channels.
///
/// Eigenvalues that coincide (to 1e-9 relative) form a degenerate
/// eigenspace; its basis is fixed deterministically by projecting the
/// canonical basis vectors onto it in order and orthonormalizing. Each row's
/// first nonzero entry is made positive.
pub fn compute_pca_transform<T: Scalar>(channels: [&Plane<T>; 4]) -> Result<PcaTransform> {
    same_dims(&channels)?;
    let n = channels[0].len();
    ensure!(n > 0, "channels are empty");

    // Summing offsets from the first sample keeps constant channels exact.
    let mut mean = [0.0f64; 4];
    for (m, c) in mean.iter_mut().zip(channels.iter()) {
        let x0 = c.samples()[0].as_f64();
        *m = x0 + c.samples().iter().map(|v| v.as_f64() - x0).sum::<f64>() / n as f64;
    }
    let mut cov = [[0.0f64; 4]; 4];
    for i in 0..n {
        let v: [f64; 4] = std::array::from_fn(|j| channels[j].samples()[i].as_f64() - mean[j]);
        for a in 0..4 {
            for b in a..4 {
                cov[a][b] += v[a] * v[b];
            }
        }
    }
    for a in 0..4 {
        for b in a..4 {
            cov[a][b] /= n as f64;
            cov[b][a] = cov[a][b];
        }
    }

    let (values, vectors) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let eigenvalues: [f64; 4] = std::array::from_fn(|k| values[order[k]]);
    let mut rows: [[f64; 4]; 4] = std::array::from_fn(|k| column(&vectors, order[k]));

    let scale = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = (1e-9 * scale).max(1e-30);
    let mut start = 0;
    while start < 4 {
        let mut end = start + 1;
        while end < 4 && (eigenvalues[start] - eigenvalues[end]).abs() <= tol {
            end += 1;
        }
        if end - start > 1 {
            canonical_basis(&mut rows[start..end]);
        }
        start = end;
    }

    for row in rows.iter_mut() {
        if let Some(first) = row.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }

    Ok(PcaTransform {
        matrix: rows,
        mean,
        eigenvalues,
    })
}

fn column(m: &[[f64; 4]; 4], c: usize) -> [f64; 4] {
    std::array::from_fn(|r| m[r][c])
}

fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Replaces an orthonormal basis of a subspace by the Gram–Schmidt
/// orthonormalization of the canonical vectors projected onto it.
fn canonical_basis(basis: &mut [[f64; 4]]) {
    let span: Vec<[f64; 4]> = basis.to_vec();
    let mut chosen: Vec<[f64; 4]> = Vec::with_capacity(span.len());
    for k in 0..4 {
        if chosen.len() == span.len() {
            break;
        }
        let mut p = [0.0f64; 4];
        for v in &span {
            let c = v[k];
            for i in 0..4 {
                p[i] += c * v[i];
            }
        }
        // Two Gram-Schmidt passes for accuracy.
        for _ in 0..2 {
            for q in &chosen {
                let c = dot(&p, q);
                for i in 0..4 {
                    p[i] -= c * q[i];
                }
            }
        }
        let norm = dot(&p, &p).sqrt();
        if norm > 1e-3 {
            chosen.push(p.map(|v| v / norm));
        }
    }
    debug_assert_eq!(chosen.len(), span.len());
    basis.copy_from_slice(&chosen);
}

/// Cyclic Jacobi eigen-decomposition of a symmetric 4×4 matrix. Returns
/// eigenvalues and eigenvectors as columns.
fn jacobi_eigen(mut a: [[f64; 4]; 4]) -> ([f64; 4], [[f64; 4]; 4]) {
    let mut v = [[0.0f64; 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..64 {
        let off: f64 = (0..4)
            .flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..4).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-32 * diag || off == 0.0 {
            break;
        }
        for p in 0..3 {
            for q in p + 1..4 {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..4 {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..4 {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2], a[3][3]], v)
}
