//! Dense helpers for small matrices: exponentials, principal logarithms of
//! orthogonal matrices, polar re-orthonormalization and principal angles.
//!
//! Everything here operates on `K×K` matrices with `K` the ambient
//! dimension of the target embedding, so dense `nalgebra` types are fine.

use nalgebra::DMatrix;

use crate::error::{Result, YmhError};

/// Frobenius inner product `tr(AᵀB)`.
pub fn frobenius_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Row-major copy of a square matrix (node blocks store rows contiguously;
/// `nalgebra` is column-major).
pub fn to_row_major(a: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = a.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(a[(i, j)]);
        }
    }
    out
}

/// Rebuild a square matrix from a row-major block.
pub fn from_row_major(block: &[f64], k: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(k, k, block)
}

/// Frobenius norm.
pub fn frobenius_norm(a: &DMatrix<f64>) -> f64 {
    frobenius_dot(a, a).sqrt()
}

/// Max-abs entry of `A + Aᵀ`; zero for exactly skew matrices.
pub fn skewness_defect(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((a[(i, j)] + a[(j, i)]).abs());
        }
    }
    worst
}

/// Max-abs entry of `AᵀA − I`.
pub fn orthogonality_drift(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let gram = a.transpose() * a;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Matrix exponential by scaling-and-squaring with a truncated series.
///
/// The argument is scaled until its 1-norm is below 1/4, the series is
/// summed until increments fall under 1e-18 relative, and the result is
/// squared back. For skew input the result is orthogonal to ~1e-15.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.iter().map(|x| x.abs()).fold(0.0f64, f64::max) * n as f64;
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings as i32);

    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = DMatrix::<f64>::identity(n, n);
    for k in 1..60 {
        term = (&term * &scaled) / k as f64;
        sum += &term;
        if frobenius_norm(&term) < 1e-18 * frobenius_norm(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Principal logarithm of a special-orthogonal matrix, returned as a skew
/// matrix whose rotation phases lie in `(-π, π]`.
///
/// Invariant planes are recovered from the symmetric part `(W + Wᵀ)/2`.
/// On a plane where `W` acts as rotation by exactly π the branch is
/// ambiguous; a canonical pairing is chosen and `tie` is set.
pub struct OrthogonalLog {
    pub skew: DMatrix<f64>,
    /// Branch tie: some rotation phase equals π within tolerance.
    pub tie: bool,
}

pub fn logm_orthogonal(w: &DMatrix<f64>) -> Result<OrthogonalLog> {
    let n = w.nrows();
    if orthogonality_drift(w) > 1e-8 {
        return Err(YmhError::InvalidArgument(format!(
            "logm argument is not orthogonal (drift {:.3e})",
            orthogonality_drift(w)
        )));
    }
    let sym = (w + w.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    // Group eigenvalues of the symmetric part; each group spans an
    // invariant subspace on which W rotates by acos(eigenvalue).
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());

    let mut log = DMatrix::<f64>::zeros(n, n);
    let mut tie = false;
    let group_tol = 1e-7;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        let c0 = eig.eigenvalues[order[start]];
        while end < n && (eig.eigenvalues[order[end]] - c0).abs() <= group_tol {
            end += 1;
        }
        let cols: Vec<usize> = order[start..end].to_vec();
        let dim = cols.len();
        let mut basis = DMatrix::<f64>::zeros(n, dim);
        for (k, &c) in cols.iter().enumerate() {
            basis.set_column(k, &eig.eigenvectors.column(c));
        }
        let c = c0.clamp(-1.0, 1.0);
        if c >= 1.0 - 1e-12 {
            // identity plane: zero log block
        } else if c <= -1.0 + 1e-12 {
            // rotation by π: canonical pairing, branch tie
            if dim % 2 != 0 {
                return Err(YmhError::InvalidArgument(
                    "matrix has det -1 component; no skew logarithm".into(),
                ));
            }
            tie = true;
            let mut block = DMatrix::<f64>::zeros(dim, dim);
            for p in 0..dim / 2 {
                block[(2 * p, 2 * p + 1)] = -std::f64::consts::PI;
                block[(2 * p + 1, 2 * p)] = std::f64::consts::PI;
            }
            log += &basis * block * basis.transpose();
        } else {
            let phi = c.acos();
            let w_block = basis.transpose() * w * &basis;
            let k_block = (&w_block - w_block.transpose()) / (2.0 * phi.sin());
            log += &basis * (k_block * phi) * basis.transpose();
        }
        start = end;
    }
    // Kill roundoff asymmetry exactly.
    let skew = (&log - log.transpose()) * 0.5;
    Ok(OrthogonalLog { skew, tie })
}

/// Nearest orthogonal matrix (polar factor via SVD).
pub fn re_orthonormalize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    u * vt
}

/// Eigenvalue phases of an orthogonal matrix, sorted ascending in `(-π, π]`.
pub fn orthogonal_eigenphases(w: &DMatrix<f64>) -> Vec<f64> {
    let eig = w.clone().complex_eigenvalues();
    let mut phases: Vec<f64> = eig
        .iter()
        .map(|z| {
            let phi = z.im.atan2(z.re);
            // Fold -π to +π so the representative is unique.
            if phi <= -std::f64::consts::PI + 1e-14 {
                std::f64::consts::PI
            } else {
                phi
            }
        })
        .collect();
    phases.sort_by(|a, b| a.partial_cmp(b).unwrap());
    phases
}

/// Orthonormalize the columns of `a` (thin QR, rank assumed full).
pub fn orthonormal_columns(a: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = a.clone().qr();
    let q = qr.q();
    q.columns(0, a.ncols()).into_owned()
}

/// Modified Gram-Schmidt with column pivoting; columns whose residual
/// norm falls below `drop_tol` are removed. Returns an orthonormal basis
/// of the column span.
pub fn mgs_orthonormal_basis(a: &DMatrix<f64>, drop_tol: f64) -> DMatrix<f64> {
    let mut cols: Vec<nalgebra::DVector<f64>> =
        (0..a.ncols()).map(|c| a.column(c).into_owned()).collect();
    let mut accepted: Vec<nalgebra::DVector<f64>> = Vec::new();
    while !cols.is_empty() {
        let (best, norm) = cols
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.norm()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if norm < drop_tol {
            break;
        }
        let mut q = cols.swap_remove(best);
        // re-orthogonalize twice against the accepted set
        for _ in 0..2 {
            for b in &accepted {
                let c = b.dot(&q);
                q -= b * c;
            }
        }
        let n = q.norm();
        if n < drop_tol {
            continue;
        }
        q /= n;
        for c in cols.iter_mut() {
            let d = q.dot(c);
            *c -= &q * d;
        }
        accepted.push(q);
    }
    let mut out = DMatrix::<f64>::zeros(a.nrows(), accepted.len());
    for (i, q) in accepted.iter().enumerate() {
        out.set_column(i, q);
    }
    out
}

/// Largest singular value of `a`, computed through the Gram matrix so it
/// stays accurate for thin residual matrices.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let gram = a.transpose() * a;
    let eig = gram.symmetric_eigen();
    eig.eigenvalues
        .iter()
        .copied()
        .fold(0.0f64, f64::max)
        .max(0.0)
        .sqrt()
}

/// `sin` of the largest principal angle from `span(v)` to `span(w)`.
///
/// Zero means containment `span(v) ⊆ span(w)`; both inputs are
/// orthonormalized internally. An empty `v` is trivially contained.
pub fn containment_residual(v: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    if v.ncols() == 0 {
        return 0.0;
    }
    if w.ncols() == 0 {
        return 1.0;
    }
    let vq = mgs_orthonormal_basis(v, 1e-12);
    let wq = mgs_orthonormal_basis(w, 1e-12);
    let residual = &vq - &wq * (wq.transpose() * &vq);
    spectral_norm(&residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rotation_generator() -> DMatrix<f64> {
        // rotation about e3 in R^3
        DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    }

    #[test]
    fn expm_matches_planar_rotation() {
        let j = rotation_generator();
        let phi = 0.7;
        let r = expm(&(j.clone() * phi));
        assert!((r[(0, 0)] - phi.cos()).abs() < 1e-14);
        assert!((r[(1, 0)] - phi.sin()).abs() < 1e-14);
        assert!((r[(2, 2)] - 1.0).abs() < 1e-15);
        assert!(orthogonality_drift(&r) < 1e-14);
    }

    #[test]
    fn log_exp_roundtrip() {
        let j = rotation_generator();
        for &phi in &[0.3, 1.2, 2.9, -2.5] {
            let r = expm(&(j.clone() * phi));
            let log = logm_orthogonal(&r).unwrap();
            assert!(
                frobenius_norm(&(&log.skew - &(j.clone() * phi))) < 1e-12,
                "phi = {phi}"
            );
            assert!(!log.tie);
        }
    }

    #[test]
    fn log_at_pi_sets_tie_flag() {
        let j = rotation_generator();
        let r = expm(&(j * PI));
        let log = logm_orthogonal(&r).unwrap();
        assert!(log.tie);
        // phases of exp(log) must match the original rotation by π
        let back = expm(&log.skew);
        assert!(frobenius_norm(&(&back - &r)) < 1e-10);
    }

    #[test]
    fn polar_projection_is_orthogonal() {
        let j = rotation_generator();
        let mut r = expm(&(j * 0.4));
        r[(0, 1)] += 3e-8; // drifted
        let fixed = re_orthonormalize(&r);
        assert!(orthogonality_drift(&fixed) < 1e-14);
        assert!(frobenius_norm(&(&fixed - &r)) < 1e-7);
    }

    #[test]
    fn eigenphases_of_rotation() {
        let j = rotation_generator();
        let r = expm(&(j * 0.6));
        let phases = orthogonal_eigenphases(&r);
        assert!((phases[0] + 0.6).abs() < 1e-12);
        assert!(phases[1].abs() < 1e-12);
        assert!((phases[2] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn containment_of_subspaces() {
        let e1 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let e12 = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(containment_residual(&e1, &e12) < 1e-14);
        assert!(containment_residual(&e12, &e1) > 0.9);
    }
}
