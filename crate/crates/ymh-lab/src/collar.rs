//! Canonical degenerating collar metrics.
//!
//! A collar with gluing parameter `δ ∈ (0, 1)` is the cylinder
//! `[-T, T] × S¹` with `T = -ln δ` and metric `λ²(t)(dt² + dθ²)`. The
//! conformal factor comes from `λ² = e^{-2t} δ⁴ χ_δ(e^{-t} δ²)`:
//!
//! * `flat_one` takes `χ ≡ 1`, giving the closed form `λ(t) = δ² e^{-t}`
//!   (exponentially bounded with constant exactly 1);
//! * `smooth_bump` blends `λ(t) = δ² e^{m(t)}` with `m` an even C²
//!   smoothing of `|t|` on a fixed unit window, making the profile
//!   symmetric while keeping `χ = 1` on the required outer region and a
//!   family-uniform bound constant `e^{3/8}`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, YmhError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiKind {
    FlatOne,
    SmoothBump,
}

/// Sampled conformal factor of one collar metric.
#[derive(Debug, Clone, Serialize)]
pub struct CollarMetric {
    pub delta: f64,
    pub t_half: f64,
    pub chi_kind: ChiKind,
    /// `λ(t)` on `n_t` uniformly spaced rows, boundary rows included.
    pub lambda: Vec<f64>,
    /// Smallest `C` with `λ(t) ≤ C δ e^{|t|−T}` over the sampled rows.
    pub bound_constant: f64,
}

/// Even C² smoothing of `|t|`: identity for `|t| ≥ 1`, quartic blend
/// inside (`m(0) = 3/8`).
fn smooth_abs(t: f64) -> f64 {
    let a = t.abs();
    if a >= 1.0 {
        a
    } else {
        0.375 + 0.75 * a * a - 0.125 * a * a * a * a
    }
}

fn lambda_at(delta: f64, chi: ChiKind, t: f64) -> f64 {
    match chi {
        ChiKind::FlatOne => delta * delta * (-t).exp(),
        ChiKind::SmoothBump => delta * delta * smooth_abs(t).exp(),
    }
}

/// Sample the collar profile for `T = −ln δ` on `n_t` rows.
pub fn collar_profile(delta: f64, n_t: usize, chi_kind: ChiKind) -> Result<CollarMetric> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(YmhError::InvalidArgument(format!(
            "delta = {delta} out of range (0, 1)"
        )));
    }
    let t_half = -delta.ln();
    if t_half < 0.5 {
        return Err(YmhError::InvalidArgument(format!(
            "degenerate collar length T = {t_half:.3} (delta too close to 1)"
        )));
    }
    if chi_kind == ChiKind::SmoothBump && t_half < 2.0 {
        return Err(YmhError::InvalidArgument(
            "smooth_bump needs T >= 2 so the blend window stays inside the collar".into(),
        ));
    }
    if n_t < 8 {
        return Err(YmhError::InvalidArgument("n_t >= 8 required".into()));
    }
    let h = 2.0 * t_half / (n_t - 1) as f64;
    let lambda: Vec<f64> = (0..n_t)
        .map(|i| lambda_at(delta, chi_kind, -t_half + i as f64 * h))
        .collect();
    let (c_min, pass) = exponential_bound_check(&lambda, delta, t_half);
    debug_assert!(pass);
    Ok(CollarMetric {
        delta,
        t_half,
        chi_kind,
        lambda,
        bound_constant: c_min,
    })
}

/// Smallest constant in `|f(t)| ≤ C δ e^{|t|−T}` over uniformly sampled
/// rows, and whether it is finite.
pub fn exponential_bound_check(profile: &[f64], delta: f64, t_half: f64) -> (f64, bool) {
    let n = profile.len();
    let h = 2.0 * t_half / (n - 1) as f64;
    let mut c_min = 0.0f64;
    for (i, &f) in profile.iter().enumerate() {
        let t = -t_half + i as f64 * h;
        let c = f.abs() * (t_half - t.abs()).exp() / delta;
        c_min = c_min.max(c);
    }
    (c_min, c_min.is_finite())
}

/// A decreasing family of collar metrics with one shared bound constant.
#[derive(Debug, Clone, Serialize)]
pub struct CollarFamily {
    pub members: Vec<CollarMetric>,
    /// Single constant valid for every member.
    pub shared_bound_constant: f64,
}

/// Build the family for strictly decreasing `delta_list`.
pub fn family(delta_list: &[f64], n_t: usize, chi_kind: ChiKind) -> Result<CollarFamily> {
    if delta_list.is_empty() {
        return Err(YmhError::InvalidArgument("empty delta list".into()));
    }
    if !delta_list.windows(2).all(|w| w[0] > w[1]) {
        return Err(YmhError::InvalidArgument(
            "delta list must be strictly decreasing".into(),
        ));
    }
    let members: Vec<CollarMetric> = delta_list
        .iter()
        .map(|&d| collar_profile(d, n_t, chi_kind))
        .collect::<Result<_>>()?;
    certify_family(&members)
}

/// Certify an existing family: uniform χ kind, decreasing δ, shared C.
pub fn certify_family(members: &[CollarMetric]) -> Result<CollarFamily> {
    if members.is_empty() {
        return Err(YmhError::InvalidArgument("empty family".into()));
    }
    let kind = members[0].chi_kind;
    if members.iter().any(|m| m.chi_kind != kind) {
        return Err(YmhError::InvalidArgument(
            "mixed chi kinds in one family".into(),
        ));
    }
    if !members.windows(2).all(|w| w[0].delta > w[1].delta) {
        return Err(YmhError::InvalidArgument(
            "family deltas must be strictly decreasing".into(),
        ));
    }
    let shared = members
        .iter()
        .map(|m| m.bound_constant)
        .fold(0.0f64, f64::max);
    Ok(CollarFamily {
        members: members.to_vec(),
        shared_bound_constant: shared,
    })
}
