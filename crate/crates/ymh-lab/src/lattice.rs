//! Cylinder grids and lattice fields.
//!
//! The cylinder `[-T, T] × S¹` is sampled on `n_t` rows (both boundary
//! rows included) and `n_theta` periodic columns. Connection components
//! are algebra-valued per node, sections are points of `S^{K-1} ⊂ R^K` per
//! node. Derivatives are central in the interior, one-sided second-order
//! at the `t`-boundaries, periodic in `θ`. Quadrature is trapezoid in `t`
//! and rectangle in `θ`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, YmhError};
use crate::exec;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderGrid {
    pub t_half: f64,
    pub n_t: usize,
    pub n_theta: usize,
}

impl CylinderGrid {
    pub fn new(t_half: f64, n_t: usize, n_theta: usize) -> Result<Self> {
        if !(t_half > 0.0) {
            return Err(YmhError::InvalidArgument("t_half must be positive".into()));
        }
        if n_t < 8 || n_theta < 8 {
            return Err(YmhError::InvalidArgument(
                "need n_t >= 8 and n_theta >= 8".into(),
            ));
        }
        Ok(Self {
            t_half,
            n_t,
            n_theta,
        })
    }

    pub fn h_t(&self) -> f64 {
        2.0 * self.t_half / (self.n_t - 1) as f64
    }

    pub fn h_theta(&self) -> f64 {
        TWO_PI / self.n_theta as f64
    }

    pub fn t(&self, i_t: usize) -> f64 {
        -self.t_half + i_t as f64 * self.h_t()
    }

    pub fn theta(&self, i_th: usize) -> f64 {
        i_th as f64 * self.h_theta()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_t * self.n_theta
    }

    pub fn node(&self, i_t: usize, i_th: usize) -> usize {
        i_t * self.n_theta + i_th
    }

    /// Trapezoid weight of row `i_t` (boundary rows count half).
    pub fn row_weight(&self, i_t: usize) -> f64 {
        if i_t == 0 || i_t + 1 == self.n_t {
            0.5 * self.h_t()
        } else {
            self.h_t()
        }
    }

    /// Quadrature weight of a node.
    pub fn node_weight(&self, i_t: usize) -> f64 {
        self.row_weight(i_t) * self.h_theta()
    }

    /// Row index of `t = 0`; requires an odd number of rows.
    pub fn middle_row(&self) -> Result<usize> {
        if self.n_t % 2 == 0 {
            return Err(YmhError::InvalidArgument(
                "middle circle needs an odd n_t".into(),
            ));
        }
        Ok(self.n_t / 2)
    }
}

/// `∂_t` of a node field with `stride` values per node.
pub fn dt(grid: &CylinderGrid, data: &[f64], stride: usize) -> Vec<f64> {
    let (n_t, n_th) = (grid.n_t, grid.n_theta);
    let h = grid.h_t();
    let mut out = vec![0.0; data.len()];
    exec::for_each_row_chunk(n_t, &mut out, |i, row| {
        let at = |it: usize, j: usize, c: usize| data[(it * n_th + j) * stride + c];
        for j in 0..n_th {
            for c in 0..stride {
                row[j * stride + c] = if i == 0 {
                    (-3.0 * at(0, j, c) + 4.0 * at(1, j, c) - at(2, j, c)) / (2.0 * h)
                } else if i + 1 == n_t {
                    (3.0 * at(n_t - 1, j, c) - 4.0 * at(n_t - 2, j, c) + at(n_t - 3, j, c))
                        / (2.0 * h)
                } else {
                    (at(i + 1, j, c) - at(i - 1, j, c)) / (2.0 * h)
                };
            }
        }
    });
    out
}

/// Transpose of the [`dt`] stencil matrix applied to a node field
/// (scatter form; used by discrete-gradient assembly).
pub fn dt_adjoint(grid: &CylinderGrid, data: &[f64], stride: usize) -> Vec<f64> {
    let (n_t, n_th) = (grid.n_t, grid.n_theta);
    let h2 = 2.0 * grid.h_t();
    let mut out = vec![0.0; data.len()];
    let idx = |it: usize, j: usize, c: usize| (it * n_th + j) * stride + c;
    for j in 0..n_th {
        for c in 0..stride {
            // boundary rows use the one-sided second-order stencils
            let g0 = data[idx(0, j, c)];
            out[idx(0, j, c)] += -3.0 * g0 / h2;
            out[idx(1, j, c)] += 4.0 * g0 / h2;
            out[idx(2, j, c)] += -g0 / h2;
            let gn = data[idx(n_t - 1, j, c)];
            out[idx(n_t - 1, j, c)] += 3.0 * gn / h2;
            out[idx(n_t - 2, j, c)] += -4.0 * gn / h2;
            out[idx(n_t - 3, j, c)] += gn / h2;
            for i in 1..n_t - 1 {
                let g = data[idx(i, j, c)];
                out[idx(i + 1, j, c)] += g / h2;
                out[idx(i - 1, j, c)] += -g / h2;
            }
        }
    }
    out
}

/// Transpose of the [`dtheta`] stencil: the periodic central difference
/// is exactly skew-adjoint.
pub fn dtheta_adjoint(grid: &CylinderGrid, data: &[f64], stride: usize) -> Vec<f64> {
    let mut out = dtheta(grid, data, stride);
    for v in out.iter_mut() {
        *v = -*v;
    }
    out
}

/// `∂_θ` of a node field with `stride` values per node (periodic).
pub fn dtheta(grid: &CylinderGrid, data: &[f64], stride: usize) -> Vec<f64> {
    let (n_t, n_th) = (grid.n_t, grid.n_theta);
    let h = grid.h_theta();
    let mut out = vec![0.0; data.len()];
    exec::for_each_row_chunk(n_t, &mut out, |i, row| {
        for j in 0..n_th {
            let jp = (j + 1) % n_th;
            let jm = (j + n_th - 1) % n_th;
            for c in 0..stride {
                let p = data[(i * n_th + jp) * stride + c];
                let m = data[(i * n_th + jm) * stride + c];
                row[j * stride + c] = (p - m) / (2.0 * h);
            }
        }
    });
    out
}

/// Section field: one point of `S^{K-1} ⊂ R^K` per node.
#[derive(Debug, Clone)]
pub struct SectionField {
    pub grid: CylinderGrid,
    pub k: usize,
    pub data: Vec<f64>,
}

impl SectionField {
    pub fn from_fn(grid: CylinderGrid, k: usize, f: impl Fn(f64, f64) -> Vec<f64>) -> Self {
        let mut data = vec![0.0; grid.n_nodes() * k];
        for i in 0..grid.n_t {
            for j in 0..grid.n_theta {
                let v = f(grid.t(i), grid.theta(j));
                data[(grid.node(i, j)) * k..][..k].copy_from_slice(&v);
            }
        }
        let mut field = Self { grid, k, data };
        field.normalize();
        field
    }

    pub fn node(&self, i_t: usize, i_th: usize) -> &[f64] {
        &self.data[self.grid.node(i_t, i_th) * self.k..][..self.k]
    }

    /// Sphere retraction: renormalize every node.
    pub fn normalize(&mut self) {
        let k = self.k;
        for chunk in self.data.chunks_mut(k) {
            let n: f64 = chunk.iter().map(|a| a * a).sum::<f64>().sqrt();
            if n > 0.0 {
                for a in chunk.iter_mut() {
                    *a /= n;
                }
            }
        }
    }

    /// Largest deviation of `|u|` from 1 over the grid.
    pub fn manifold_defect(&self) -> f64 {
        self.data
            .chunks(self.k)
            .map(|c| (c.iter().map(|a| a * a).sum::<f64>().sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn assert_on_manifold(&self) -> Result<()> {
        let d = self.manifold_defect();
        if d > 1e-6 {
            return Err(YmhError::OffManifold { deviation: d });
        }
        Ok(())
    }
}

/// Connection field `A = a_t dt + a_θ dθ` with skew `K×K` values per node,
/// stored as row-major `K²` blocks.
#[derive(Debug, Clone)]
pub struct ConnectionField {
    pub grid: CylinderGrid,
    pub k: usize,
    pub a_t: Vec<f64>,
    pub a_theta: Vec<f64>,
}

impl ConnectionField {
    pub fn zero(grid: CylinderGrid, k: usize) -> Self {
        Self {
            grid,
            k,
            a_t: vec![0.0; grid.n_nodes() * k * k],
            a_theta: vec![0.0; grid.n_nodes() * k * k],
        }
    }

    pub fn from_fn(
        grid: CylinderGrid,
        k: usize,
        f: impl Fn(f64, f64) -> (Vec<f64>, Vec<f64>),
    ) -> Self {
        let kk = k * k;
        let mut a_t = vec![0.0; grid.n_nodes() * kk];
        let mut a_theta = vec![0.0; grid.n_nodes() * kk];
        for i in 0..grid.n_t {
            for j in 0..grid.n_theta {
                let (vt, vth) = f(grid.t(i), grid.theta(j));
                a_t[grid.node(i, j) * kk..][..kk].copy_from_slice(&vt);
                a_theta[grid.node(i, j) * kk..][..kk].copy_from_slice(&vth);
            }
        }
        Self {
            grid,
            k,
            a_t,
            a_theta,
        }
    }

    pub fn at_block(&self, i_t: usize, i_th: usize) -> &[f64] {
        let kk = self.k * self.k;
        &self.a_t[self.grid.node(i_t, i_th) * kk..][..kk]
    }

    pub fn atheta_block(&self, i_t: usize, i_th: usize) -> &[f64] {
        let kk = self.k * self.k;
        &self.a_theta[self.grid.node(i_t, i_th) * kk..][..kk]
    }

    pub fn max_abs_a_t(&self) -> f64 {
        self.a_t.iter().map(|a| a.abs()).fold(0.0, f64::max)
    }
}

/// `y ← y + M x` for a `k×k` row-major block.
#[inline]
pub fn matvec_acc(m: &[f64], x: &[f64], y: &mut [f64], k: usize) {
    for i in 0..k {
        let row = &m[i * k..(i + 1) * k];
        let mut acc = 0.0;
        for j in 0..k {
            acc += row[j] * x[j];
        }
        y[i] += acc;
    }
}

/// Commutator `[a, b] = ab − ba` of `k×k` row-major blocks.
#[inline]
pub fn bracket(a: &[f64], b: &[f64], out: &mut [f64], k: usize) {
    for i in 0..k {
        for j in 0..k {
            let mut acc = 0.0;
            for l in 0..k {
                acc += a[i * k + l] * b[l * k + j] - b[i * k + l] * a[l * k + j];
            }
            out[i * k + j] = acc;
        }
    }
}

/// Covariant derivative `(D_t u, D_θ u)` with `D_i u = ∂_i u + a_i·u`.
pub fn covariant_derivative(a: &ConnectionField, u: &SectionField) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.grid != u.grid {
        return Err(YmhError::GridMismatch(
            "connection and section grids differ".into(),
        ));
    }
    if a.k != u.k {
        return Err(YmhError::DimensionMismatch(
            "connection and section ambient dims differ".into(),
        ));
    }
    let grid = &u.grid;
    let k = u.k;
    let kk = k * k;
    let n_th = grid.n_theta;
    let mut d_t = dt(grid, &u.data, k);
    let mut d_th = dtheta(grid, &u.data, k);
    let (a_t, a_th, u_data) = (&a.a_t, &a.a_theta, &u.data);
    exec::for_each_row_chunk(grid.n_t, &mut d_t, |i, row| {
        for j in 0..n_th {
            let n = i * n_th + j;
            matvec_acc(&a_t[n * kk..][..kk], &u_data[n * k..][..k], &mut row[j * k..][..k], k);
        }
    });
    exec::for_each_row_chunk(grid.n_t, &mut d_th, |i, row| {
        for j in 0..n_th {
            let n = i * n_th + j;
            matvec_acc(&a_th[n * kk..][..kk], &u_data[n * k..][..k], &mut row[j * k..][..k], k);
        }
    });
    Ok((d_t, d_th))
}

/// Curvature coefficient of `dt ∧ dθ`:
/// `F = ∂_t a_θ − ∂_θ a_t + [a_t, a_θ]` per node.
pub fn curvature(a: &ConnectionField) -> Vec<f64> {
    let grid = &a.grid;
    let k = a.k;
    let kk = k * k;
    let n_th = grid.n_theta;
    let dt_ath = dt(grid, &a.a_theta, kk);
    let dth_at = dtheta(grid, &a.a_t, kk);
    let (a_t, a_th) = (&a.a_t, &a.a_theta);
    let mut out = vec![0.0; a.a_t.len()];
    exec::for_each_row_chunk(grid.n_t, &mut out, |i, row| {
        let mut br = vec![0.0; kk];
        for j in 0..n_th {
            let n = i * n_th + j;
            bracket(&a_t[n * kk..][..kk], &a_th[n * kk..][..kk], &mut br, k);
            for c in 0..kk {
                row[j * kk + c] = dt_ath[n * kk + c] - dth_at[n * kk + c] + br[c];
            }
        }
    });
    out
}

/// Quadrature of `|field|² · weight` over the cylinder; `stride` values
/// per node, optional positive per-node weight.
pub fn l2_norm_squared(
    grid: &CylinderGrid,
    field: &[f64],
    stride: usize,
    weight: Option<&[f64]>,
) -> Result<f64> {
    if let Some(w) = weight {
        if w.len() != grid.n_nodes() {
            return Err(YmhError::DimensionMismatch("weight length".into()));
        }
        if w.iter().any(|&x| x < 0.0) {
            return Err(YmhError::InvalidArgument("negative weight".into()));
        }
    }
    let n_th = grid.n_theta;
    let total = exec::sum_rows(grid.n_t, |i| {
        let mut row_sum = 0.0;
        for j in 0..n_th {
            let n = i * n_th + j;
            let mut sq = 0.0;
            for c in 0..stride {
                let v = field[n * stride + c];
                sq += v * v;
            }
            row_sum += sq * weight.map_or(1.0, |w| w[n]);
        }
        row_sum * grid.node_weight(i)
    });
    Ok(total)
}

/// Max pointwise norm of a strided node field.
pub fn sup_norm(field: &[f64], stride: usize) -> f64 {
    field
        .chunks(stride)
        .map(|c| c.iter().map(|a| a * a).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}
