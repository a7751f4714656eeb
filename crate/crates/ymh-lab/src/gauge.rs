//! Gauge transformations, the balanced temporal gauge, holonomy and
//! flatness profiles.
//!
//! The balanced temporal gauge is built in two steps: column ODEs
//! `ṡ + a_t s = 0` kill `a_t`, then a middle-circle transform makes
//! `a_θ(0, ·)` the constant `α` with `exp(2πα)` the middle holonomy and
//! `|α|` minimal (eigenphases in `(-π, π]`). The transformed `a_θ` is
//! produced by conjugating parallel-transport links and taking the
//! principal log, so every circle's holonomy is preserved exactly rather
//! than to stencil accuracy.

use nalgebra::DMatrix;

use crate::error::{Result, YmhError};
use crate::exec;
use crate::fitting::{fit_log_linear, ExpFit};
use crate::lattice::{dt, dtheta, ConnectionField, CylinderGrid, SectionField};
use crate::lie_action::{AlgebraElement, GroupElement};
use crate::linalg;

/// Per-node orthogonal matrices, `K²` row-major blocks, θ-periodic by
/// storage.
#[derive(Debug, Clone)]
pub struct GaugeTransform {
    pub grid: CylinderGrid,
    pub k: usize,
    pub s: Vec<f64>,
}

impl GaugeTransform {
    pub fn identity(grid: CylinderGrid, k: usize) -> Self {
        let mut s = vec![0.0; grid.n_nodes() * k * k];
        for n in 0..grid.n_nodes() {
            for c in 0..k {
                s[n * k * k + c * k + c] = 1.0;
            }
        }
        Self { grid, k, s }
    }

    pub fn from_fn(grid: CylinderGrid, k: usize, f: impl Fn(f64, f64) -> DMatrix<f64>) -> Self {
        let kk = k * k;
        let mut s = vec![0.0; grid.n_nodes() * kk];
        for i in 0..grid.n_t {
            for j in 0..grid.n_theta {
                let m = f(grid.t(i), grid.theta(j));
                s[grid.node(i, j) * kk..][..kk].copy_from_slice(&linalg::to_row_major(&m));
            }
        }
        Self { grid, k, s }
    }

    pub fn block(&self, i_t: usize, i_th: usize) -> DMatrix<f64> {
        let kk = self.k * self.k;
        linalg::from_row_major(&self.s[self.grid.node(i_t, i_th) * kk..][..kk], self.k)
    }

    fn set_block(&mut self, i_t: usize, i_th: usize, m: &DMatrix<f64>) {
        let kk = self.k * self.k;
        self.s[self.grid.node(i_t, i_th) * kk..][..kk]
            .copy_from_slice(&linalg::to_row_major(m));
    }

    /// Pointwise product `self · other` (apply `self` first).
    pub fn compose(&self, other: &GaugeTransform) -> Result<GaugeTransform> {
        if self.grid != other.grid || self.k != other.k {
            return Err(YmhError::GridMismatch("gauge transform grids differ".into()));
        }
        let mut out = GaugeTransform::identity(self.grid, self.k);
        for i in 0..self.grid.n_t {
            for j in 0..self.grid.n_theta {
                out.set_block(i, j, &(self.block(i, j) * other.block(i, j)));
            }
        }
        Ok(out)
    }
}

/// Act on a pair: `A ↦ s⁻¹ds + s⁻¹As`, `u ↦ s⁻¹u`, with `ds` by the grid
/// difference stencils. The derivative term is projected back to skew to
/// keep connection blocks exactly algebra-valued (an `O(h²)` adjustment,
/// the same order as the stencil itself).
pub fn apply_gauge(
    s: &GaugeTransform,
    a: &ConnectionField,
    u: &SectionField,
) -> Result<(ConnectionField, SectionField)> {
    if s.grid != a.grid || s.grid != u.grid {
        return Err(YmhError::GridMismatch("gauge/field grids differ".into()));
    }
    let grid = s.grid;
    let k = s.k;
    let kk = k * k;
    let ds_t = dt(&grid, &s.s, kk);
    let ds_th = dtheta(&grid, &s.s, kk);

    let mut out_a = ConnectionField::zero(grid, k);
    let mut out_u = SectionField {
        grid,
        k,
        data: vec![0.0; u.data.len()],
    };
    for i in 0..grid.n_t {
        for j in 0..grid.n_theta {
            let n = grid.node(i, j);
            let sb = s.block(i, j);
            let sinv = sb.transpose();
            let a_t = linalg::from_row_major(&a.a_t[n * kk..][..kk], k);
            let a_th = linalg::from_row_major(&a.a_theta[n * kk..][..kk], k);
            let dst = linalg::from_row_major(&ds_t[n * kk..][..kk], k);
            let dsth = linalg::from_row_major(&ds_th[n * kk..][..kk], k);

            let new_t = &sinv * (&dst + &a_t * &sb);
            let new_th = &sinv * (&dsth + &a_th * &sb);
            let skew_t = (&new_t - new_t.transpose()) * 0.5;
            let skew_th = (&new_th - new_th.transpose()) * 0.5;
            out_a.a_t[n * kk..][..kk].copy_from_slice(&linalg::to_row_major(&skew_t));
            out_a.a_theta[n * kk..][..kk].copy_from_slice(&linalg::to_row_major(&skew_th));

            let un = &u.data[n * k..][..k];
            let mut acc = vec![0.0; k];
            for r in 0..k {
                let mut v = 0.0;
                for c in 0..k {
                    v += sinv[(r, c)] * un[c];
                }
                acc[r] = v;
            }
            out_u.data[n * k..][..k].copy_from_slice(&acc);
        }
    }
    Ok((out_a, out_u))
}

/// Result of the balanced temporal gauge construction.
pub struct BalancedGauge {
    pub transform: GaugeTransform,
    pub connection: ConnectionField,
    pub alpha: AlgebraElement,
    /// Some middle-holonomy eigenphase sat at the branch cut π.
    pub branch_tie: bool,
}

/// Parallel-transport link `exp(h · a_θ)` from node `j` to `j+1` on row `i`.
fn theta_link(a: &ConnectionField, i: usize, j: usize, h: f64) -> DMatrix<f64> {
    let kk = a.k * a.k;
    let n = a.grid.node(i, j);
    let block = linalg::from_row_major(&a.a_theta[n * kk..][..kk], a.k);
    linalg::expm(&(block * h))
}

/// Build the balanced temporal gauge: output has `a_t = 0` identically
/// and `a_θ(0, θ) = α` for all `θ`.
pub fn balanced_temporal_gauge(a: &ConnectionField) -> Result<BalancedGauge> {
    let grid = a.grid;
    let k = a.k;
    let kk = k * k;
    let mid = grid.middle_row()?;
    let h_t = grid.h_t();
    let h_th = grid.h_theta();

    // Step 1: kill a_t along each θ-column, integrating ṡ = −a_t s from
    // the middle row outward (RK4, re-orthonormalized per step).
    let mut s1 = GaugeTransform::identity(grid, k);
    let columns: Vec<Vec<DMatrix<f64>>> = exec::map_indexed(grid.n_theta, |j| {
        let at = |i: usize| linalg::from_row_major(&a.a_t[grid.node(i, j) * kk..][..kk], k);
        let mut col: Vec<DMatrix<f64>> = vec![DMatrix::identity(k, k); grid.n_t];
        // upward sweep
        for i in mid..grid.n_t - 1 {
            let s = col[i].clone();
            let next = rk4_linear_step(&s, &at(i), &at(i + 1), h_t);
            col[i + 1] = linalg::re_orthonormalize(&next);
        }
        // downward sweep
        for i in (1..=mid).rev() {
            let s = col[i].clone();
            let next = rk4_linear_step(&s, &at(i), &at(i - 1), -h_t);
            col[i - 1] = linalg::re_orthonormalize(&next);
        }
        col
    });
    for (j, col) in columns.iter().enumerate() {
        for (i, m) in col.iter().enumerate() {
            if m.iter().any(|x| !x.is_finite()) {
                return Err(YmhError::OdeFailure(format!(
                    "non-finite gauge at row {i}, column {j}"
                )));
            }
            s1.set_block(i, j, m);
        }
    }

    // Middle-row links are untouched by step 1 (s1 = id there); take the
    // principal log of the middle holonomy as α.
    let mut hol_mid = DMatrix::<f64>::identity(k, k);
    for j in 0..grid.n_theta {
        hol_mid = theta_link(a, mid, j, h_th) * hol_mid;
    }
    let log = linalg::logm_orthogonal(&hol_mid)?;
    let alpha_mat = log.skew / (2.0 * std::f64::consts::PI);
    let alpha = AlgebraElement::from_matrix(&alpha_mat)?;

    // Step 2: t-independent circle transform flattening the middle row:
    // s2_{j+1} = V_j s2_j exp(−h α) telescopes to s2_n = s2_0 by the
    // choice of α.
    let exp_neg = linalg::expm(&(alpha.matrix() * (-h_th)));
    let mut s2: Vec<DMatrix<f64>> = Vec::with_capacity(grid.n_theta);
    s2.push(DMatrix::identity(k, k));
    for j in 0..grid.n_theta - 1 {
        let v = theta_link(a, mid, j, h_th);
        let next = v * &s2[j] * &exp_neg;
        s2.push(linalg::re_orthonormalize(&next));
    }

    // Total transform s = s1 · s2 (s2 independent of t).
    let mut total = GaugeTransform::identity(grid, k);
    for i in 0..grid.n_t {
        for j in 0..grid.n_theta {
            total.set_block(i, j, &(s1.block(i, j) * &s2[j]));
        }
    }

    // Transformed connection: a_t = 0 by construction; a_θ from link
    // conjugation, which preserves each circle's holonomy class exactly.
    let mut out = ConnectionField::zero(grid, k);
    let blocks: Vec<Vec<f64>> = exec::map_indexed(grid.n_t, |i| {
        let mut row = vec![0.0; grid.n_theta * kk];
        for j in 0..grid.n_theta {
            let jp = (j + 1) % grid.n_theta;
            let v = theta_link(a, i, j, h_th);
            let tilde = total.block(i, jp).transpose() * v * total.block(i, j);
            let log = linalg::logm_orthogonal(&tilde)
                .expect("near-identity link has a principal log");
            row[j * kk..][..kk].copy_from_slice(&linalg::to_row_major(&(log.skew / h_th)));
        }
        row
    });
    for (i, row) in blocks.iter().enumerate() {
        out.a_theta[i * grid.n_theta * kk..][..row.len()].copy_from_slice(row);
    }

    Ok(BalancedGauge {
        transform: total,
        connection: out,
        alpha,
        branch_tie: log.tie,
    })
}

/// One RK4 step of `ṡ = −a(t) s` with endpoint samples of `a`
/// (midpoint by averaging).
fn rk4_linear_step(
    s: &DMatrix<f64>,
    a0: &DMatrix<f64>,
    a1: &DMatrix<f64>,
    h: f64,
) -> DMatrix<f64> {
    let amid = (a0 + a1) * 0.5;
    let k1 = -a0 * s;
    let k2 = -(&amid) * (s + &k1 * (h / 2.0));
    let k3 = -(&amid) * (s + &k2 * (h / 2.0));
    let k4 = -a1 * (s + &k3 * h);
    s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Holonomy of one circle row: path-ordered product of the links
/// `exp(h a_θ)`, with sorted eigenvalue phases as conjugacy invariant.
#[derive(Debug, Clone)]
pub struct HolonomyInvariant {
    pub element: GroupElement,
    pub phases: Vec<f64>,
}

pub fn holonomy(a: &ConnectionField, t_index: usize) -> Result<HolonomyInvariant> {
    if t_index >= a.grid.n_t {
        return Err(YmhError::InvalidArgument(format!(
            "row index {t_index} out of range"
        )));
    }
    let h = a.grid.h_theta();
    let mut prod = DMatrix::<f64>::identity(a.k, a.k);
    for j in 0..a.grid.n_theta {
        prod = theta_link(a, t_index, j, h) * prod;
    }
    let phases = linalg::orthogonal_eigenphases(&prod);
    Ok(HolonomyInvariant {
        element: GroupElement::new(prod),
        phases,
    })
}

/// Holonomy of a standalone circle connection (`K²` blocks per node).
pub fn circle_holonomy(k: usize, a_blocks: &[f64]) -> HolonomyInvariant {
    let kk = k * k;
    let n_theta = a_blocks.len() / kk;
    let h = crate::lattice::TWO_PI / n_theta as f64;
    let mut prod = DMatrix::<f64>::identity(k, k);
    for j in 0..n_theta {
        let block = linalg::from_row_major(&a_blocks[j * kk..][..kk], k);
        prod = linalg::expm(&(block * h)) * prod;
    }
    let phases = linalg::orthogonal_eigenphases(&prod);
    HolonomyInvariant {
        element: GroupElement::new(prod),
        phases,
    }
}

/// Holonomy invariants along a shrinking-radius family plus Cauchy
/// defects between successive radii.
#[derive(Debug, Clone)]
pub struct HolonomyProbe {
    pub radii: Vec<f64>,
    pub phases: Vec<Vec<f64>>,
    pub cauchy_defects: Vec<f64>,
    pub converged: bool,
}

/// Probe the holonomy limit of a circle-connection family given at
/// strictly decreasing radii.
pub fn holonomy_limit_probe(
    k: usize,
    circles: &[Vec<f64>],
    r_list: &[f64],
    tol: f64,
) -> Result<HolonomyProbe> {
    if r_list.is_empty() || circles.is_empty() {
        return Err(YmhError::InvalidArgument("empty radius list".into()));
    }
    if circles.len() != r_list.len() {
        return Err(YmhError::DimensionMismatch(
            "circle count differs from radius count".into(),
        ));
    }
    if !r_list.windows(2).all(|w| w[0] > w[1] && w[1] > 0.0) {
        return Err(YmhError::InvalidArgument(
            "radii must be strictly decreasing and positive".into(),
        ));
    }
    let phases: Vec<Vec<f64>> = circles
        .iter()
        .map(|c| circle_holonomy(k, c).phases)
        .collect();
    let cauchy_defects: Vec<f64> = phases
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max)
        })
        .collect();
    let monotone = cauchy_defects
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-14);
    let converged = monotone && cauchy_defects.last().map_or(true, |&d| d < tol);
    Ok(HolonomyProbe {
        radii: r_list.to_vec(),
        phases,
        cauchy_defects,
        converged,
    })
}

/// Flatness profile of a temporal-gauge connection: per-row
/// `w(t) = sup_θ (|a_θ − α| + |∂_t a_θ| + |∂_θ a_θ|)` in Frobenius norms.
pub fn flatness_profile(a: &ConnectionField, alpha: &AlgebraElement) -> Result<Vec<f64>> {
    if a.max_abs_a_t() > 1e-12 {
        return Err(YmhError::GaugeViolation(format!(
            "a_t is not zero (max {:.3e})",
            a.max_abs_a_t()
        )));
    }
    let grid = a.grid;
    let k = a.k;
    let kk = k * k;
    let alpha_block = linalg::to_row_major(alpha.matrix());
    let d_t = dt(&grid, &a.a_theta, kk);
    let d_th = dtheta(&grid, &a.a_theta, kk);
    Ok(exec::map_rows(grid.n_t, |i| {
        let mut worst = 0.0f64;
        for j in 0..grid.n_theta {
            let n = grid.node(i, j);
            let mut dev = 0.0;
            let mut dtn = 0.0;
            let mut dthn = 0.0;
            for c in 0..kk {
                let d = a.a_theta[n * kk + c] - alpha_block[c];
                dev += d * d;
                dtn += d_t[n * kk + c] * d_t[n * kk + c];
                dthn += d_th[n * kk + c] * d_th[n * kk + c];
            }
            worst = worst.max(dev.sqrt() + dtn.sqrt() + dthn.sqrt());
        }
        worst
    }))
}

/// Fit `log w(t)` against `|t| − T`; positive rate = exponential
/// flattening toward the middle.
pub fn flatness_fit(grid: &CylinderGrid, profile: &[f64]) -> Result<ExpFit> {
    let xs: Vec<f64> = (0..grid.n_t)
        .map(|i| grid.t(i).abs() - grid.t_half)
        .collect();
    fit_log_linear(&xs, profile, 1e-14)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{covariant_derivative, l2_norm_squared, sup_norm};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn jz() -> AlgebraElement {
        AlgebraElement::rotation_z()
    }

    fn grid(n_t: usize, n_th: usize) -> CylinderGrid {
        CylinderGrid::new(1.0, n_t, n_th).unwrap()
    }

    #[test]
    fn identity_gauge_fixes_fields() {
        let g = grid(17, 16);
        let a = ConnectionField::from_fn(g, 3, |t, th| {
            (
                linalg::to_row_major(&(jz().matrix() * (0.1 * t))),
                linalg::to_row_major(&(jz().matrix() * (0.3 + 0.05 * th.sin()))),
            )
        });
        let u = SectionField::from_fn(g, 3, |t, _| vec![(0.2 * t).sin(), 0.0, (0.2 * t).cos()]);
        let s = GaugeTransform::identity(g, 3);
        let (a2, u2) = apply_gauge(&s, &a, &u).unwrap();
        for (x, y) in a.a_theta.iter().zip(&a2.a_theta) {
            assert!((x - y).abs() < 1e-14);
        }
        for (x, y) in u.data.iter().zip(&u2.data) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_gauge_conjugates_exactly() {
        let g = grid(17, 16);
        let a = ConnectionField::from_fn(g, 3, |_, _| {
            (vec![0.0; 9], linalg::to_row_major(&(jz().matrix() * 0.4)))
        });
        let u = SectionField::from_fn(g, 3, |_, _| vec![1.0, 0.0, 0.0]);
        let rot = crate::lie_action::ActionSpec::so3_on_s2().generators[1].exp(0.7);
        let s = GaugeTransform::from_fn(g, 3, |_, _| rot.matrix().clone());
        let (a2, u2) = apply_gauge(&s, &a, &u).unwrap();
        let want_a = rot.matrix().transpose() * (jz().matrix() * 0.4) * rot.matrix();
        let want_u = rot.matrix().transpose() * nalgebra::DVector::from_column_slice(&[1.0, 0.0, 0.0]);
        let got_a = linalg::from_row_major(&a2.a_theta[..9], 3);
        assert!(linalg::frobenius_norm(&(&got_a - &want_a)) < 1e-12);
        for c in 0..3 {
            assert!((u2.data[c] - want_u[c]).abs() < 1e-13);
        }
    }

    #[test]
    fn theta_rotation_produces_maurer_cartan_term() {
        // s(θ) = exp(θ J_z) on A = 0 gives a_θ = J_z up to O(h²)
        let mut errs = Vec::new();
        for n_th in [32usize, 64] {
            let g = CylinderGrid::new(1.0, 9, n_th).unwrap();
            let a = ConnectionField::zero(g, 3);
            let u = SectionField::from_fn(g, 3, |_, _| vec![0.0, 0.0, 1.0]);
            let s = GaugeTransform::from_fn(g, 3, |_, th| jz().exp(th).matrix().clone());
            let (a2, _) = apply_gauge(&s, &a, &u).unwrap();
            let mut worst = 0.0f64;
            let want = linalg::to_row_major(jz().matrix());
            for n in 0..g.n_nodes() {
                for c in 0..9 {
                    worst = worst.max((a2.a_theta[n * 9 + c] - want[c]).abs());
                }
            }
            errs.push(worst);
        }
        assert!(errs[0] < 0.02);
        let ratio = errs[0] / errs[1];
        assert!((3.3..=4.8).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn ymh_invariance_defect_refines_at_second_order() {
        // |E(s(A), s(u)) − E(A, u)| falls by ~4 per grid halving for
        // circle-valued gauges (the instance's gauge group)
        let jz = jz();
        let phi = |t: f64, th: f64| 0.4 * (t * 0.9).sin() * th.cos() + 0.2 * (2.0 * th).sin();
        let mut defects = Vec::new();
        for lvl in 0..3 {
            let n = 17 * (1 << lvl);
            let g = CylinderGrid::new(1.0, n + 1, n).unwrap();
            let a = ConnectionField::from_fn(g, 3, |t, th| {
                (
                    linalg::to_row_major(&(jz.matrix() * (0.1 * (t + th.sin())))),
                    linalg::to_row_major(&(jz.matrix() * (0.3 + 0.1 * t * th.cos()))),
                )
            });
            let u = SectionField::from_fn(g, 3, |t, th| {
                let p = 0.5 * (0.8 * t).sin() + 0.1 * th.sin();
                vec![p.sin(), 0.0, p.cos()]
            });
            let s = GaugeTransform::from_fn(g, 3, |t, th| jz.exp(phi(t, th)).matrix().clone());
            let (a2, u2) = apply_gauge(&s, &a, &u).unwrap();

            let e = |a: &ConnectionField, u: &SectionField| {
                let (d_t, d_th) = covariant_derivative(a, u).unwrap();
                l2_norm_squared(&g, &d_t, 3, None).unwrap()
                    + l2_norm_squared(&g, &d_th, 3, None).unwrap()
                    + l2_norm_squared(&g, &crate::lattice::curvature(a), 9, None).unwrap()
            };
            defects.push((e(&a, &u) - e(&a2, &u2)).abs());
        }
        for w in defects.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.3..=4.8).contains(&ratio), "defects {defects:?}");
        }
    }

    #[test]
    fn balanced_gauge_fixes_constant_connection() {
        // already balanced input is a fixed point
        let g = grid(17, 16);
        let alpha = jz().scale(0.3);
        let a = ConnectionField::from_fn(g, 3, |_, _| {
            (vec![0.0; 9], linalg::to_row_major(alpha.matrix()))
        });
        let bal = balanced_temporal_gauge(&a).unwrap();
        assert!(bal.alpha.sub(&alpha).unwrap().norm() < 1e-12);
        assert_eq!(bal.connection.max_abs_a_t(), 0.0);
        for n in 0..g.n_nodes() {
            let got = linalg::from_row_major(&bal.connection.a_theta[n * 9..][..9], 3);
            assert!(linalg::frobenius_norm(&(&got - alpha.matrix())) < 1e-12);
        }
        assert!(!bal.branch_tie);
    }

    #[test]
    fn balanced_gauge_solves_constant_a_t() {
        // a_t = c J_z, a_θ = 0: s(t, ·) = exp(−c t J_z), output flat zero
        let c = 0.35;
        let g = CylinderGrid::new(1.0, 33, 16).unwrap();
        let a = ConnectionField::from_fn(g, 3, |_, _| {
            (linalg::to_row_major(&(jz().matrix() * c)), vec![0.0; 9])
        });
        let bal = balanced_temporal_gauge(&a).unwrap();
        assert!(bal.alpha.norm() < 1e-12);
        assert!(sup_norm(&bal.connection.a_theta, 9) < 1e-9);
        for i in 0..g.n_t {
            let want = jz().exp(-c * g.t(i));
            let got = bal.transform.block(i, 5);
            assert!(
                linalg::frobenius_norm(&(&got - want.matrix())) < 1e-8,
                "row {i}"
            );
        }
    }

    #[test]
    fn balanced_gauge_preserves_holonomy_per_circle() {
        let g = CylinderGrid::new(1.0, 17, 24).unwrap();
        let a = ConnectionField::from_fn(g, 3, |t, _| {
            (
                vec![0.0; 9],
                linalg::to_row_major(&(jz().matrix() * (0.3 + 0.1 * t.tanh()))),
            )
        });
        let bal = balanced_temporal_gauge(&a).unwrap();
        // middle circle constant in θ
        let mid = g.middle_row().unwrap();
        for j in 0..g.n_theta {
            let got = linalg::from_row_major(
                &bal.connection.a_theta[g.node(mid, j) * 9..][..9],
                3,
            );
            assert!(linalg::frobenius_norm(&(&got - bal.alpha.matrix())) < 1e-10);
        }
        for i in 0..g.n_t {
            let before = holonomy(&a, i).unwrap();
            let after = holonomy(&bal.connection, i).unwrap();
            for (p, q) in before.phases.iter().zip(&after.phases) {
                assert!((p - q).abs() < 1e-8, "row {i}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn holonomy_closed_forms() {
        let g = grid(17, 32);
        let alpha = 0.3;
        let a = ConnectionField::from_fn(g, 3, |_, _| {
            (vec![0.0; 9], linalg::to_row_major(&(jz().matrix() * alpha)))
        });
        let hol = holonomy(&a, 8).unwrap();
        // rotation by 2πα about e₃
        assert!((hol.phases[0] + 2.0 * PI * alpha).abs() < 1e-10);
        assert!(hol.phases[1].abs() < 1e-10);
        assert!((hol.phases[2] - 2.0 * PI * alpha).abs() < 1e-10);

        let zero = ConnectionField::zero(g, 3);
        let hol0 = holonomy(&zero, 3).unwrap();
        assert!(hol0.phases.iter().all(|p| p.abs() < 1e-12));
    }

    #[test]
    fn holonomy_phases_gauge_invariant_for_circle_gauges() {
        let g = grid(17, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = ConnectionField::from_fn(g, 3, |t, th| {
            (
                linalg::to_row_major(&(jz().matrix() * (0.1 * th.sin()))),
                linalg::to_row_major(&(jz().matrix() * (0.4 + 0.2 * t))),
            )
        });
        let u = SectionField::from_fn(g, 3, |_, _| vec![0.0, 0.0, 1.0]);
        for _ in 0..5 {
            let c0: f64 = rng.gen_range(-1.0..1.0);
            let c1: f64 = rng.gen_range(-0.5..0.5);
            let c2: f64 = rng.gen_range(-0.5..0.5);
            let s = GaugeTransform::from_fn(g, 3, |t, th| {
                jz().exp(c0 + c1 * (th.sin() + t) + c2 * (2.0 * th).cos())
                    .matrix()
                    .clone()
            });
            let (a2, _) = apply_gauge(&s, &a, &u).unwrap();
            for i in [0, 8, 16] {
                let p = holonomy(&a, i).unwrap().phases;
                let q = holonomy(&a2, i).unwrap().phases;
                for (x, y) in p.iter().zip(&q) {
                    assert!((x - y).abs() < 1e-8, "row {i}");
                }
            }
        }
    }

    #[test]
    fn holonomy_probe_flags() {
        let jz = jz();
        let k = 3;
        let n_th = 32;
        let block = |scale: f64| -> Vec<f64> {
            let b = linalg::to_row_major(&(jz.matrix() * scale));
            (0..n_th).flat_map(|_| b.clone()).collect()
        };
        let radii: Vec<f64> = (1..=6).map(|i| 1.0 / i as f64).collect();

        // constant family
        let circles: Vec<Vec<f64>> = radii.iter().map(|_| block(0.3)).collect();
        let probe = holonomy_limit_probe(k, &circles, &radii, 1e-6).unwrap();
        assert!(probe.converged);
        assert!(probe.cauchy_defects.iter().all(|&d| d < 1e-12));

        // linear-in-r family: defects shrink with r, converged
        let circles: Vec<Vec<f64>> = radii.iter().map(|&r| block(0.3 + 0.1 * r)).collect();
        let probe = holonomy_limit_probe(k, &circles, &radii, 1e-1).unwrap();
        assert!(probe.converged);

        // oscillating non-commuting family: no convergence flag
        let jx = crate::lie_action::ActionSpec::so3_on_s2().generators[1].clone();
        let circles: Vec<Vec<f64>> = radii
            .iter()
            .map(|&r| {
                let m = jz.matrix() * 0.3 + jx.matrix() * (1.0 / r).sin();
                let b = linalg::to_row_major(&m);
                (0..n_th).flat_map(|_| b.clone()).collect()
            })
            .collect();
        let probe = holonomy_limit_probe(k, &circles, &radii, 1e-6).unwrap();
        assert!(!probe.converged);

        assert!(holonomy_limit_probe(k, &[], &[], 1e-6).is_err());
    }

    #[test]
    fn flatness_profile_closed_forms() {
        let g = CylinderGrid::new(3.0, 61, 16).unwrap();
        let alpha = jz().scale(0.3);

        // exact α: profile identically zero
        let a = ConnectionField::from_fn(g, 3, |_, _| {
            (vec![0.0; 9], linalg::to_row_major(alpha.matrix()))
        });
        let w = flatness_profile(&a, &alpha).unwrap();
        assert!(w.iter().all(|&x| x < 1e-13));

        // manufactured exponential deviation
        let delta = 1e-3;
        let beta = jz();
        let a = ConnectionField::from_fn(g, 3, |t, _| {
            let dev = delta * (t.abs() - 3.0).exp();
            (
                vec![0.0; 9],
                linalg::to_row_major(&(alpha.matrix() + beta.matrix() * dev)),
            )
        });
        let w = flatness_profile(&a, &alpha).unwrap();
        let fit = flatness_fit(&g, &w).unwrap();
        assert!((fit.rate - 1.0).abs() < 0.05, "rate {}", fit.rate);
        let amp_ref = delta * beta.norm();
        assert!(
            fit.amplitude > amp_ref && fit.amplitude < 3.0 * amp_ref,
            "amplitude {} vs δ|β| = {amp_ref}",
            fit.amplitude
        );

        // temporal-gauge precondition
        let bad = ConnectionField::from_fn(g, 3, |_, _| {
            (linalg::to_row_major(&(jz().matrix() * 0.1)), vec![0.0; 9])
        });
        assert!(flatness_profile(&bad, &alpha).is_err());
    }
}
