//! YMH energy, Euler-Lagrange residuals and the projected-descent solver.
//!
//! One conformal convention is used everywhere: the metric is
//! `g = λ²(dt² + dθ²)` and all integrals are taken against its area
//! element, so the three terms carry weights
//!
//! * twisted energy `∫ |Du|²` — weight-free (conformally invariant),
//! * Yang-Mills `∫ λ⁻² |F|²`,
//! * Higgs `∫ λ² |μ(u) − c|²`,
//!
//! and the rescaled critical-point equations read
//! `D*Du = −λ² ∇H(u)`, `∂*(λ⁻²F) = −u*Du`.
//!
//! Residuals are the exact gradients of the discrete quadrature energy in
//! the `L²` inner product (adjoint stencils, not a re-discretized
//! continuum formula), so pairing them against perturbations reproduces
//! finite differences of the energy to line-search precision. Rows with
//! `λ = 0` switch the Yang-Mills weight to 1 and the potential off; this
//! is the "no potential" configuration used by pure twisted-harmonic
//! runs.

use serde::Serialize;

use crate::collar::CollarMetric;
use crate::error::{Result, YmhError};
use crate::exec;
use crate::lattice::{
    bracket, covariant_derivative, curvature, dt_adjoint, dtheta, dtheta_adjoint, matvec_acc,
    sup_norm, ConnectionField, CylinderGrid, SectionField,
};
use crate::lie_action::ActionSpec;
use crate::linalg;

/// Per-row conformal factor `λ(t)` with its exponential-bound data.
#[derive(Debug, Clone)]
pub struct WeightProfile {
    pub lambda: Vec<f64>,
    pub delta: f64,
    pub t_half: f64,
    pub bound_constant: f64,
}

impl WeightProfile {
    pub fn uniform(grid: &CylinderGrid, value: f64) -> Result<Self> {
        if value < 0.0 {
            return Err(YmhError::InvalidArgument("negative weight".into()));
        }
        let lambda = vec![value; grid.n_t];
        let (c, _) = crate::collar::exponential_bound_check(&lambda, 1.0, grid.t_half);
        Ok(Self {
            lambda,
            delta: 1.0,
            t_half: grid.t_half,
            bound_constant: c,
        })
    }

    /// Disable both conformal weights and the potential.
    pub fn none(grid: &CylinderGrid) -> Self {
        Self {
            lambda: vec![0.0; grid.n_t],
            delta: 1.0,
            t_half: grid.t_half,
            bound_constant: 0.0,
        }
    }

    pub fn from_collar(metric: &CollarMetric, grid: &CylinderGrid) -> Result<Self> {
        if metric.lambda.len() != grid.n_t {
            return Err(YmhError::GridMismatch(format!(
                "collar sampled on {} rows, grid has {}",
                metric.lambda.len(),
                grid.n_t
            )));
        }
        if (metric.t_half - grid.t_half).abs() > 1e-12 {
            return Err(YmhError::GridMismatch(
                "collar and grid half-lengths differ".into(),
            ));
        }
        Ok(Self {
            lambda: metric.lambda.clone(),
            delta: metric.delta,
            t_half: metric.t_half,
            bound_constant: metric.bound_constant,
        })
    }

    fn validate(&self, grid: &CylinderGrid) -> Result<()> {
        if self.lambda.len() != grid.n_t {
            return Err(YmhError::GridMismatch("weight row count".into()));
        }
        if self.lambda.iter().any(|&l| l < 0.0 || !l.is_finite()) {
            return Err(YmhError::InvalidArgument(
                "weight must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Higgs weight `λ²`.
    #[inline]
    fn higgs_weight(&self, row: usize) -> f64 {
        self.lambda[row] * self.lambda[row]
    }

    /// Yang-Mills weight `λ⁻²`, or 1 on rows with `λ = 0`.
    #[inline]
    fn ym_weight(&self, row: usize) -> f64 {
        let l = self.lambda[row];
        if l > 0.0 {
            1.0 / (l * l)
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub energy_term: f64,
    pub yang_mills_term: f64,
    pub higgs_term: f64,
}

/// Evaluate the conformally weighted YMH energy.
pub fn ymh_energy(
    a: &ConnectionField,
    u: &SectionField,
    w: &WeightProfile,
    spec: &ActionSpec,
) -> Result<EnergyBreakdown> {
    w.validate(&u.grid)?;
    let grid = u.grid;
    let k = u.k;
    let (d_t, d_th) = covariant_derivative(a, u)?;
    let f = curvature(a);
    let kk = k * k;
    let n_th = grid.n_theta;

    let per_row: Vec<(f64, f64, f64)> = exec::map_rows(grid.n_t, |i| {
        let wq = grid.node_weight(i);
        let mut e = 0.0;
        let mut ym = 0.0;
        let mut hg = 0.0;
        for j in 0..n_th {
            let n = i * n_th + j;
            for c in 0..k {
                e += d_t[n * k + c] * d_t[n * k + c] + d_th[n * k + c] * d_th[n * k + c];
            }
            for c in 0..kk {
                ym += f[n * kk + c] * f[n * kk + c];
            }
            if w.higgs_weight(i) > 0.0 {
                hg += spec
                    .higgs_density(&u.data[n * k..][..k])
                    .unwrap_or(0.0);
            }
        }
        (
            e * wq,
            ym * wq * w.ym_weight(i),
            hg * wq * w.higgs_weight(i),
        )
    });
    let energy_term: f64 = per_row.iter().map(|r| r.0).sum();
    let yang_mills_term: f64 = per_row.iter().map(|r| r.1).sum();
    let higgs_term: f64 = per_row.iter().map(|r| r.2).sum();
    Ok(EnergyBreakdown {
        total: energy_term + yang_mills_term + higgs_term,
        energy_term,
        yang_mills_term,
        higgs_term,
    })
}

/// Exact discrete `L²` gradients of the energy.
#[derive(Debug, Clone)]
pub struct Residuals {
    /// Tangent vector per node (section part).
    pub section: Vec<f64>,
    /// Skew block per node, `dt` component.
    pub conn_t: Vec<f64>,
    /// Skew block per node, `dθ` component.
    pub conn_theta: Vec<f64>,
}

impl Residuals {
    pub fn section_sup(&self, k: usize) -> f64 {
        sup_norm(&self.section, k)
    }
    pub fn connection_sup(&self, k: usize) -> f64 {
        sup_norm(&self.conn_t, k * k).max(sup_norm(&self.conn_theta, k * k))
    }
}

/// Assemble the Euler-Lagrange residual pair at `(A, u)`.
///
/// `section` is the tangential projection of the ambient energy gradient
/// per unit quadrature weight; `conn_*` are the skew, algebra-projected
/// gradients with respect to `a_t`, `a_θ`. Both vanish at discrete
/// critical points.
pub fn el_residual(
    a: &ConnectionField,
    u: &SectionField,
    w: &WeightProfile,
    spec: &ActionSpec,
) -> Result<Residuals> {
    w.validate(&u.grid)?;
    u.assert_on_manifold()?;
    let grid = u.grid;
    let k = u.k;
    let kk = k * k;
    let n_th = grid.n_theta;
    let n_nodes = grid.n_nodes();

    let (d_t, d_th) = covariant_derivative(a, u)?;
    let f = curvature(a);

    // weighted derivative fields
    let mut g_t = vec![0.0; n_nodes * k];
    let mut g_th = vec![0.0; n_nodes * k];
    let mut g_f = vec![0.0; n_nodes * kk];
    for i in 0..grid.n_t {
        let wq = grid.node_weight(i);
        let wf = wq * w.ym_weight(i);
        for j in 0..n_th {
            let n = i * n_th + j;
            for c in 0..k {
                g_t[n * k + c] = wq * d_t[n * k + c];
                g_th[n * k + c] = wq * d_th[n * k + c];
            }
            for c in 0..kk {
                g_f[n * kk + c] = wf * f[n * kk + c];
            }
        }
    }

    // --- section gradient ------------------------------------------------
    let mut grad_u = dt_adjoint(&grid, &g_t, k);
    let gth_adj = dtheta_adjoint(&grid, &g_th, k);
    for (o, v) in grad_u.iter_mut().zip(&gth_adj) {
        *o += v;
    }
    // pointwise terms aᵀ(w·Du) = −a(w·Du), plus the Higgs gradient
    let mut section = vec![0.0; n_nodes * k];
    exec::for_each_row_chunk(grid.n_t, &mut section, |i, row| {
        let wq = grid.node_weight(i);
        let hw = w.higgs_weight(i);
        for j in 0..n_th {
            let n = i * n_th + j;
            let mut acc = vec![0.0; k];
            // −a_t (w D_t u) − a_θ (w D_θ u)
            let mut tmp = vec![0.0; k];
            matvec_acc(&a.a_t[n * kk..][..kk], &g_t[n * k..][..k], &mut tmp, k);
            matvec_acc(&a.a_theta[n * kk..][..kk], &g_th[n * k..][..k], &mut tmp, k);
            for c in 0..k {
                acc[c] = grad_u[n * k + c] - tmp[c];
            }
            if hw > 0.0 {
                if let Ok(hg) = spec.higgs_gradient(&u.data[n * k..][..k]) {
                    for c in 0..k {
                        acc[c] += wq * hw * hg[c];
                    }
                }
            }
            // per-unit-weight, then tangential projection
            let y = &u.data[n * k..][..k];
            let dot: f64 = acc.iter().zip(y).map(|(a, b)| a * b).sum();
            for c in 0..k {
                row[j * k + c] = 2.0 * (acc[c] - dot * y[c]) / wq;
            }
        }
    });

    // --- connection gradients ---------------------------------------------
    // from the YM term: F = S_t a_θ − S_θ a_t + [a_t, a_θ]
    let mut grad_ath = dt_adjoint(&grid, &g_f, kk);
    let grad_at_stencil = dtheta_adjoint(&grid, &g_f, kk);

    let basis = spec.algebra_basis();
    let mut conn_t = vec![0.0; n_nodes * kk];
    let mut conn_theta = vec![0.0; n_nodes * kk];
    {
        let grad_ath = &mut grad_ath;
        let mut br = vec![0.0; kk];
        for i in 0..grid.n_t {
            let wq = grid.node_weight(i);
            for j in 0..n_th {
                let n = i * n_th + j;
                // bracket adjoints: ∂⟨G,[a_t,a_θ]⟩/∂a_θ = −[a_t, G],
                //                   ∂⟨G,[a_t,a_θ]⟩/∂a_t = +[a_θ, G]
                bracket(&a.a_t[n * kk..][..kk], &g_f[n * kk..][..kk], &mut br, k);
                for c in 0..kk {
                    grad_ath[n * kk + c] -= br[c];
                }
                let mut gat = vec![0.0; kk];
                bracket(&a.a_theta[n * kk..][..kk], &g_f[n * kk..][..kk], &mut gat, k);
                for c in 0..kk {
                    gat[c] = -grad_at_stencil[n * kk + c] + gat[c];
                }
                // energy-term couplings (w D_i u) ⊗ u
                let du_t = &g_t[n * k..][..k];
                let du_th = &g_th[n * k..][..k];
                let y = &u.data[n * k..][..k];
                let mut outer_t = vec![0.0; kk];
                let mut outer_th = vec![0.0; kk];
                for r in 0..k {
                    for c in 0..k {
                        outer_t[r * k + c] = du_t[r] * y[c];
                        outer_th[r * k + c] = du_th[r] * y[c];
                    }
                }
                // skew projection and algebra-span projection, per unit weight
                let mut m_t = nalgebra::DMatrix::<f64>::zeros(k, k);
                let mut m_th = nalgebra::DMatrix::<f64>::zeros(k, k);
                for r in 0..k {
                    for c in 0..k {
                        m_t[(r, c)] = gat[r * k + c] + outer_t[r * k + c];
                        m_th[(r, c)] =
                            grad_ath[n * kk + r * k + c] + outer_th[r * k + c];
                    }
                }
                let skew_t = (&m_t - m_t.transpose()) * (1.0 / wq);
                let skew_th = (&m_th - m_th.transpose()) * (1.0 / wq);
                let mut proj_t = nalgebra::DMatrix::<f64>::zeros(k, k);
                let mut proj_th = nalgebra::DMatrix::<f64>::zeros(k, k);
                for b in &basis {
                    proj_t += b * linalg::frobenius_dot(&skew_t, b);
                    proj_th += b * linalg::frobenius_dot(&skew_th, b);
                }
                conn_t[n * kk..][..kk].copy_from_slice(&linalg::to_row_major(&proj_t));
                conn_theta[n * kk..][..kk].copy_from_slice(&linalg::to_row_major(&proj_th));
            }
        }
    }

    Ok(Residuals {
        section,
        conn_t,
        conn_theta,
    })
}

/// `L²` pairing of a residual with a perturbation (the directional
/// derivative of the energy).
pub fn residual_pairing(
    grid: &CylinderGrid,
    res: &Residuals,
    du: &[f64],
    da_t: &[f64],
    da_theta: &[f64],
    k: usize,
) -> f64 {
    let kk = k * k;
    let n_th = grid.n_theta;
    let mut acc = 0.0;
    for i in 0..grid.n_t {
        let wq = grid.node_weight(i);
        let mut row = 0.0;
        for j in 0..n_th {
            let n = i * n_th + j;
            for c in 0..k {
                row += res.section[n * k + c] * du[n * k + c];
            }
            // halve the double-counting of the off-diagonal skew pairs:
            // perturbation blocks are skew, so the Frobenius pairing over
            // all entries counts each independent component twice; the
            // gradient was assembled for independent components
            for c in 0..kk {
                row += 0.5
                    * (res.conn_t[n * kk + c] * da_t[n * kk + c]
                        + res.conn_theta[n * kk + c] * da_theta[n * kk + c]);
            }
        }
        acc += wq * row;
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Free,
    Fixed,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolveOptions {
    pub step: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub boundary: BoundaryKind,
    /// Keep the connection frozen (flat-background solves).
    pub fix_connection: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            step: 1e-2,
            max_iters: 200_000,
            tol: 1e-8,
            boundary: BoundaryKind::Fixed,
            fix_connection: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub energy: f64,
    pub e_term: f64,
    pub ym_term: f64,
    pub higgs_term: f64,
    pub res_u: f64,
    pub res_a: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveOutcome {
    pub iterations: usize,
    pub converged: bool,
    pub final_energy: EnergyBreakdown,
    pub res_u: f64,
    pub res_a: f64,
    pub trace: Vec<TraceRow>,
}

const ARMIJO_C: f64 = 1e-4;
const STEP_FLOOR: f64 = 1e-14;

/// Projected gradient descent on the discrete YMH energy: section update
/// with sphere retraction, then connection update in the algebra, each
/// with a backtracking (halving) line search seeded by a Barzilai-Borwein
/// trial step. The energy trace is non-increasing.
pub fn gradient_flow_solve(
    a0: &ConnectionField,
    u0: &SectionField,
    w: &WeightProfile,
    spec: &ActionSpec,
    opts: &SolveOptions,
) -> Result<(ConnectionField, SectionField, SolveOutcome)> {
    let grid = u0.grid;
    let k = u0.k;
    let kk = k * k;
    let n_th = grid.n_theta;
    let mut a = a0.clone();
    let mut u = u0.clone();
    u.assert_on_manifold()?;

    let mask_row = |i: usize| -> f64 {
        if opts.boundary == BoundaryKind::Fixed && (i == 0 || i + 1 == grid.n_t) {
            0.0
        } else {
            1.0
        }
    };

    let l2 = |x: &[f64], y: &[f64], stride: usize| -> f64 {
        let mut acc = 0.0;
        for i in 0..grid.n_t {
            let wq = grid.node_weight(i);
            let mut row = 0.0;
            for j in 0..n_th {
                let n = i * n_th + j;
                for c in 0..stride {
                    row += x[n * stride + c] * y[n * stride + c];
                }
            }
            acc += wq * row;
        }
        acc
    };

    let mut energy = ymh_energy(&a, &u, w, spec)?;
    let mut trace: Vec<TraceRow> = Vec::new();
    let mut step_u = opts.step;
    let mut step_a = opts.step;
    let mut prev_u: Option<(Vec<f64>, Vec<f64>)> = None; // (u, grad)
    let mut converged = false;
    let mut res_u_sup = f64::INFINITY;
    let mut res_a_sup = f64::INFINITY;
    let mut iter = 0;

    while iter < opts.max_iters {
        let mut res = el_residual(&a, &u, w, spec)?;
        for i in 0..grid.n_t {
            let m = mask_row(i);
            if m == 0.0 {
                for j in 0..n_th {
                    let n = i * n_th + j;
                    res.section[n * k..][..k].iter_mut().for_each(|x| *x = 0.0);
                    res.conn_t[n * kk..][..kk].iter_mut().for_each(|x| *x = 0.0);
                    res.conn_theta[n * kk..][..kk]
                        .iter_mut()
                        .for_each(|x| *x = 0.0);
                }
            }
        }
        res_u_sup = res.section_sup(k);
        res_a_sup = if opts.fix_connection {
            res.connection_sup(k) // reported, not driven
        } else {
            res.connection_sup(k)
        };

        let done = if opts.fix_connection {
            res_u_sup < opts.tol
        } else {
            res_u_sup < opts.tol && res_a_sup < opts.tol
        };
        trace.push(TraceRow {
            iter,
            energy: energy.total,
            e_term: energy.energy_term,
            ym_term: energy.yang_mills_term,
            higgs_term: energy.higgs_term,
            res_u: res_u_sup,
            res_a: res_a_sup,
            step: step_u,
        });
        if done {
            converged = true;
            break;
        }

        // ---- section update ------------------------------------------------
        let grad_sq = l2(&res.section, &res.section, k);
        if grad_sq > 0.0 {
            // BB1 trial step from the previous (Δu, Δgrad) pair
            if let Some((pu, pg)) = &prev_u {
                let mut su = vec![0.0; u.data.len()];
                let mut yg = vec![0.0; u.data.len()];
                for n in 0..u.data.len() {
                    su[n] = u.data[n] - pu[n];
                    yg[n] = res.section[n] - pg[n];
                }
                let sy = l2(&su, &yg, k);
                let ss = l2(&su, &su, k);
                if sy > 1e-30 && ss > 0.0 {
                    step_u = (ss / sy).clamp(1e-7, 1e4);
                }
            }
            prev_u = Some((u.data.clone(), res.section.clone()));
            let mut tau = step_u;
            let mut accepted = false;
            while tau >= STEP_FLOOR {
                let mut cand = u.clone();
                for n in 0..cand.data.len() {
                    cand.data[n] -= tau * res.section[n];
                }
                cand.normalize();
                let e_new = ymh_energy(&a, &cand, w, spec)?;
                if e_new.total <= energy.total - ARMIJO_C * tau * grad_sq {
                    u = cand;
                    energy = e_new;
                    accepted = true;
                    break;
                }
                tau *= 0.5;
            }
            if !accepted {
                // residual is at the discretization floor for this grid
                if res_u_sup < 1e3 * opts.tol {
                    converged = true;
                    break;
                }
                return Err(YmhError::StepCollapse(STEP_FLOOR));
            }
            step_u = tau;
        }

        // ---- connection update ----------------------------------------------
        if !opts.fix_connection {
            let grad_sq_a =
                l2(&res.conn_t, &res.conn_t, kk) + l2(&res.conn_theta, &res.conn_theta, kk);
            if grad_sq_a > 0.0 {
                let mut tau = step_a;
                let mut accepted = false;
                while tau >= STEP_FLOOR {
                    let mut cand = a.clone();
                    for n in 0..cand.a_t.len() {
                        cand.a_t[n] -= 0.5 * tau * res.conn_t[n];
                        cand.a_theta[n] -= 0.5 * tau * res.conn_theta[n];
                    }
                    let e_new = ymh_energy(&cand, &u, w, spec)?;
                    if e_new.total <= energy.total - ARMIJO_C * tau * 0.5 * grad_sq_a {
                        a = cand;
                        energy = e_new;
                        accepted = true;
                        break;
                    }
                    tau *= 0.5;
                }
                if accepted {
                    step_a = (tau * 2.0).min(1e3);
                } else if res_a_sup >= 1e3 * opts.tol {
                    return Err(YmhError::StepCollapse(STEP_FLOOR));
                }
            }
        }

        if let Some(last) = trace.last() {
            if energy.total > last.energy + 1e-12 * (1.0 + last.energy.abs()) {
                return Err(YmhError::Divergence {
                    from: last.energy,
                    to: energy.total,
                });
            }
        }
        iter += 1;
    }

    let outcome = SolveOutcome {
        iterations: iter,
        converged,
        final_energy: energy,
        res_u: res_u_sup,
        res_a: res_a_sup,
        trace,
    };
    Ok((a, u, outcome))
}

/// Twisted-holomorphic defect `∂_t u + J_u(D_θ u)` (temporal gauge).
pub fn vortex_residual(
    a: &ConnectionField,
    u: &SectionField,
    spec: &ActionSpec,
) -> Result<Vec<f64>> {
    if spec.complex_structure.is_none() {
        return Err(YmhError::MissingComplexStructure);
    }
    if a.max_abs_a_t() > 1e-12 {
        return Err(YmhError::GaugeViolation(
            "vortex residual needs temporal gauge (a_t = 0)".into(),
        ));
    }
    let (d_t, d_th) = covariant_derivative(a, u)?;
    let grid = u.grid;
    let k = u.k;
    let mut out = vec![0.0; u.data.len()];
    for n in 0..grid.n_nodes() {
        let y = &u.data[n * k..][..k];
        let j_dth = spec.complex_structure_apply(y, &d_th[n * k..][..k])?;
        for c in 0..k {
            out[n * k + c] = d_t[n * k + c] + j_dth[c];
        }
    }
    Ok(out)
}
