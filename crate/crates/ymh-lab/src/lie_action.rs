//! Target manifold, group action and moment map.
//!
//! The target is a round sphere `S^{K-1} ⊂ R^K` and the acting group is
//! represented orthogonally, so Lie-algebra elements are skew `K×K`
//! matrices `𝕏` acting by `y ↦ 𝕏y`. Skewness is exact by construction:
//! an [`AlgebraElement`] stores its strict upper triangle and the dense
//! matrix is materialized from it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, YmhError};
use crate::linalg;

/// Skew `K×K` matrix, the represented image of a Lie-algebra element.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraElement {
    k: usize,
    upper: Vec<f64>,
    matrix: DMatrix<f64>,
}

impl AlgebraElement {
    /// Build from the strict upper triangle, row-major:
    /// `(0,1), (0,2), ..., (0,K-1), (1,2), ...`.
    pub fn from_upper(k: usize, upper: Vec<f64>) -> Result<Self> {
        let expected = k * (k - 1) / 2;
        if upper.len() != expected {
            return Err(YmhError::DimensionMismatch(format!(
                "strict upper triangle for K={k} needs {expected} entries, got {}",
                upper.len()
            )));
        }
        let mut m = DMatrix::<f64>::zeros(k, k);
        let mut idx = 0;
        for i in 0..k {
            for j in (i + 1)..k {
                m[(i, j)] = upper[idx];
                m[(j, i)] = -upper[idx];
                idx += 1;
            }
        }
        Ok(Self { k, upper, matrix: m })
    }

    /// Build from a matrix; rejects inputs with skewness defect above 1e-10.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(YmhError::DimensionMismatch("matrix not square".into()));
        }
        if linalg::skewness_defect(m) > 1e-10 {
            return Err(YmhError::InvalidArgument(format!(
                "matrix is not skew (defect {:.3e})",
                linalg::skewness_defect(m)
            )));
        }
        let k = m.nrows();
        let mut upper = Vec::with_capacity(k * (k - 1) / 2);
        for i in 0..k {
            for j in (i + 1)..k {
                upper.push((m[(i, j)] - m[(j, i)]) * 0.5);
            }
        }
        Self::from_upper(k, upper)
    }

    pub fn zero(k: usize) -> Self {
        Self::from_upper(k, vec![0.0; k * (k - 1) / 2]).expect("zero element")
    }

    /// Generator of rotations in the `(e1, e2)` plane of `R^3`
    /// (`J e1 = e2`, `J e3 = 0`).
    pub fn rotation_z() -> Self {
        Self::from_upper(3, vec![-1.0, 0.0, 0.0]).expect("rotation generator")
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Frobenius norm; the metric on the algebra is the Frobenius inner
    /// product of represented matrices.
    pub fn norm(&self) -> f64 {
        linalg::frobenius_norm(&self.matrix)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_upper(self.k, self.upper.iter().map(|x| x * s).collect()).unwrap()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.k != other.k {
            return Err(YmhError::DimensionMismatch("algebra dims differ".into()));
        }
        Self::from_upper(
            self.k,
            self.upper
                .iter()
                .zip(&other.upper)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    /// Group element `exp(s 𝕏)`.
    pub fn exp(&self, s: f64) -> GroupElement {
        GroupElement::new(linalg::expm(&(self.matrix.clone() * s)))
    }
}

/// Orthogonal `K×K` matrix. Re-orthonormalized on construction whenever
/// the drift `‖gᵀg − I‖_∞` exceeds 1e-12.
#[derive(Debug, Clone)]
pub struct GroupElement {
    matrix: DMatrix<f64>,
}

impl GroupElement {
    pub fn new(m: DMatrix<f64>) -> Self {
        let m = if linalg::orthogonality_drift(&m) > 1e-12 {
            linalg::re_orthonormalize(&m)
        } else {
            m
        };
        Self { matrix: m }
    }

    pub fn identity(k: usize) -> Self {
        Self {
            matrix: DMatrix::identity(k, k),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> Self {
        Self {
            matrix: self.matrix.transpose(),
        }
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        let v = &self.matrix * DVector::from_column_slice(y);
        v.as_slice().to_vec()
    }

    /// Conjugate a skew matrix: `g⁻¹ X g`.
    pub fn conjugate(&self, x: &AlgebraElement) -> AlgebraElement {
        let m = self.matrix.transpose() * x.matrix() * &self.matrix;
        // Conjugation by an orthogonal matrix preserves skewness up to
        // roundoff; symmetrize it away.
        let skew = (&m - m.transpose()) * 0.5;
        AlgebraElement::from_matrix(&skew).expect("conjugated skew")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    UnitSphere,
}

/// Registered moment maps, by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMapKind {
    /// `S¹` on `S²` with the area form: `μ(y) = y₃` on the single
    /// rotation generator.
    SphereHeight,
}

/// Registered invariant complex structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexStructureKind {
    /// `J_y v = v × y` on `S² ⊂ R³`.
    SphereCross,
}

/// The embedded target together with its represented action.
#[derive(Debug, Clone)]
pub struct ActionSpec {
    pub k: usize,
    pub manifold_kind: ManifoldKind,
    pub generators: Vec<AlgebraElement>,
    pub moment_map: Option<MomentMapKind>,
    /// Central element, in the same generator coordinates as `μ`.
    pub center_c: Vec<f64>,
    pub complex_structure: Option<ComplexStructureKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalClass {
    Critical,
    NonCritical,
}

impl ActionSpec {
    /// The shipped instance: `S¹` rotating `S² ⊂ R³` about `e₃`,
    /// height moment map, cross-product complex structure.
    pub fn s1_on_s2(center_c: f64) -> Self {
        Self {
            k: 3,
            manifold_kind: ManifoldKind::UnitSphere,
            generators: vec![AlgebraElement::rotation_z()],
            moment_map: Some(MomentMapKind::SphereHeight),
            center_c: vec![center_c],
            complex_structure: Some(ComplexStructureKind::SphereCross),
        }
    }

    /// Full `so(3)` acting on `S²`; no moment map registered.
    pub fn so3_on_s2() -> Self {
        let jx = AlgebraElement::from_upper(3, vec![0.0, 0.0, -1.0]).unwrap();
        let jy = AlgebraElement::from_upper(3, vec![0.0, 1.0, 0.0]).unwrap();
        Self {
            k: 3,
            manifold_kind: ManifoldKind::UnitSphere,
            generators: vec![AlgebraElement::rotation_z(), jx, jy],
            moment_map: None,
            center_c: vec![0.0; 3],
            complex_structure: Some(ComplexStructureKind::SphereCross),
        }
    }

    /// Frobenius-orthonormalized basis of the represented algebra span.
    pub fn algebra_basis(&self) -> Vec<DMatrix<f64>> {
        let mut basis: Vec<DMatrix<f64>> = Vec::new();
        for g in &self.generators {
            let mut v = g.matrix().clone();
            for b in &basis {
                let c = linalg::frobenius_dot(&v, b);
                v -= b * c;
            }
            let n = linalg::frobenius_norm(&v);
            if n > 1e-12 {
                basis.push(v / n);
            }
        }
        basis
    }

    /// Moment map in generator coordinates.
    pub fn moment_value(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(y)?;
        match self.moment_map {
            Some(MomentMapKind::SphereHeight) => Ok(vec![y[2]]),
            None => Err(YmhError::MissingMomentMap(format!(
                "{:?}",
                self.manifold_kind
            ))),
        }
    }

    /// Ambient gradients `∇μ_i` of the moment coordinates at `y`.
    pub fn moment_gradients(&self, y: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_dim(y)?;
        match self.moment_map {
            Some(MomentMapKind::SphereHeight) => Ok(vec![vec![0.0, 0.0, 1.0]]),
            None => Err(YmhError::MissingMomentMap(format!(
                "{:?}",
                self.manifold_kind
            ))),
        }
    }

    /// Higgs density `|μ(y) − c|²`.
    pub fn higgs_density(&self, y: &[f64]) -> Result<f64> {
        let mu = self.moment_value(y)?;
        Ok(mu
            .iter()
            .zip(&self.center_c)
            .map(|(m, c)| (m - c) * (m - c))
            .sum())
    }

    /// Ambient gradient of the Higgs density `2 Σ (μ_i − c_i) ∇μ_i`.
    pub fn higgs_gradient(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mu = self.moment_value(y)?;
        let grads = self.moment_gradients(y)?;
        let mut out = vec![0.0; self.k];
        for (i, g) in grads.iter().enumerate() {
            let w = 2.0 * (mu[i] - self.center_c[i]);
            for (o, gi) in out.iter_mut().zip(g) {
                *o += w * gi;
            }
        }
        Ok(out)
    }

    /// `J_y v` for the registered complex structure.
    pub fn complex_structure_apply(&self, y: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        match self.complex_structure {
            Some(ComplexStructureKind::SphereCross) => {
                if self.k != 3 {
                    return Err(YmhError::DimensionMismatch(
                        "cross-product structure needs K=3".into(),
                    ));
                }
                Ok(vec![
                    v[1] * y[2] - v[2] * y[1],
                    v[2] * y[0] - v[0] * y[2],
                    v[0] * y[1] - v[1] * y[0],
                ])
            }
            None => Err(YmhError::MissingComplexStructure),
        }
    }

    fn check_dim(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.k {
            return Err(YmhError::DimensionMismatch(format!(
                "point has dim {}, spec has K={}",
                y.len(),
                self.k
            )));
        }
        Ok(())
    }
}

/// Infinitesimal action `𝕏 · y`; tangent to the sphere whenever `y` lies
/// on it.
pub fn infinitesimal_action(x: &AlgebraElement, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != x.dim() {
        return Err(YmhError::DimensionMismatch(format!(
            "algebra dim {} vs point dim {}",
            x.dim(),
            y.len()
        )));
    }
    let v = x.matrix() * DVector::from_column_slice(y);
    Ok(v.as_slice().to_vec())
}

/// Projection of `v` onto the tangent space at `y ∈ S^{K-1}`:
/// `v − ⟨v, y⟩ y`.
pub fn tangent_project(y: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let norm: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(YmhError::OffManifold {
            deviation: (norm - 1.0).abs(),
        });
    }
    let dot: f64 = y.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok(v.iter().zip(y).map(|(vi, yi)| vi - dot * yi).collect())
}

/// Second fundamental form of the unit sphere: `Γ_y(v, w) = ⟨v, w⟩ y`,
/// with the sign making `u'' + Γ(u)(u', u') = 0` on great circles.
pub fn second_fundamental_form(y: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
    let dot: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
    y.iter().map(|yi| dot * yi).collect()
}

/// Decide whether the fixed set of `exp(2π𝕏)` equals the fixed set of the
/// whole represented group, compared as linear subspaces via principal
/// angles at threshold `tol`.
pub fn classify_element(spec: &ActionSpec, x: &AlgebraElement, tol: f64) -> CriticalClass {
    let k = spec.k;
    let holonomy = x.exp(2.0 * std::f64::consts::PI);
    let fixed_exp = null_space(&(holonomy.matrix() - DMatrix::<f64>::identity(k, k)), tol);

    // Fixed set of the connected group: common kernel of all generators.
    let rows: usize = spec.generators.len() * k;
    let mut stacked = DMatrix::<f64>::zeros(rows, k);
    for (gi, g) in spec.generators.iter().enumerate() {
        stacked.rows_mut(gi * k, k).copy_from(g.matrix());
    }
    let fixed_group = null_space(&stacked, tol);

    let same_dim = fixed_exp.ncols() == fixed_group.ncols();
    let contained = linalg::containment_residual(&fixed_exp, &fixed_group) <= tol.max(1e-8);
    if same_dim && contained {
        CriticalClass::NonCritical
    } else {
        CriticalClass::Critical
    }
}

/// Orthonormal basis of the (right) null space of `m`, found through the
/// small Gram matrix `mᵀm`.
fn null_space(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let k = m.ncols();
    let gram = m.transpose() * m;
    let eig = gram.symmetric_eigen();
    let gram_norm = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    // floor the cutoff at the Gram roundoff level so exact null
    // directions are never missed
    let cutoff = (tol * tol).max(gram_norm * k as f64 * 64.0 * f64::EPSILON);
    let mut cols: Vec<usize> = Vec::new();
    for i in 0..k {
        if eig.eigenvalues[i] <= cutoff {
            cols.push(i);
        }
    }
    let mut out = DMatrix::<f64>::zeros(k, cols.len());
    for (j, &i) in cols.iter().enumerate() {
        out.set_column(j, &eig.eigenvectors.column(i));
    }
    out
}

// --- serialization -------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ActionSpecDto {
    #[serde(rename = "K")]
    k: usize,
    manifold_kind: ManifoldKind,
    /// Strict upper triangles, row-major, one per generator.
    generators: Vec<Vec<f64>>,
    center_c: Vec<f64>,
    moment_map: Option<MomentMapKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    complex_structure: Option<ComplexStructureKind>,
}

impl Serialize for ActionSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ActionSpecDto {
            k: self.k,
            manifold_kind: self.manifold_kind,
            generators: self.generators.iter().map(|g| g.upper().to_vec()).collect(),
            center_c: self.center_c.clone(),
            moment_map: self.moment_map,
            complex_structure: self.complex_structure,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ActionSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let dto = ActionSpecDto::deserialize(deserializer)?;
        let generators = dto
            .generators
            .into_iter()
            .map(|u| AlgebraElement::from_upper(dto.k, u))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        Ok(ActionSpec {
            k: dto.k,
            manifold_kind: dto.manifold_kind,
            generators,
            moment_map: dto.moment_map,
            center_c: dto.center_c,
            complex_structure: dto.complex_structure,
        })
    }
}
