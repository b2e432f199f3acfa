//! Second-order spherical-harmonics Lambertian shading.
//!
//! Shading at a pixel with normal `n` under per-channel coefficients `L₁…L₉` is
//! the quadratic form `[n;1]ᵀ K [n;1]`, where `K` is the symmetric 4×4 matrix
//! built from the coefficients and the constants [`C1`]…[`C5`]. Because shading is
//! linear in `L`, it can equivalently be evaluated as the dot product of `L` with
//! the basis vector returned by [`sh_basis`]. The basis form is the one used
//! everywhere; [`shade_forward_quadratic`] keeps the matrix form as an independent
//! cross-check.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{norm3, MatteMask, NormalField, PixelField, UNIT_TOLERANCE};

pub const C1: f64 = 0.429043;
pub const C2: f64 = 0.511664;
pub const C3: f64 = 0.743125;
pub const C4: f64 = 0.886227;
pub const C5: f64 = 0.247708;

/// Coefficients per channel.
pub const SH_BANDS: usize = 9;
/// Total coefficient count across RGB.
pub const SH_LEN: usize = 27;

/// Condition number above which light estimation reports rank deficiency.
pub const MAX_CONDITION: f64 = 1e8;
/// Below this condition number the normal equations are accurate enough.
const NORMAL_EQUATIONS_CONDITION: f64 = 1e4;

/// RGB lighting: `[R₁…R₉, G₁…G₉, B₁…B₉]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShCoeffs([f64; SH_LEN]);

impl ShCoeffs {
    pub fn new(coeffs: [f64; SH_LEN]) -> Result<Self> {
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sh coefficients"));
        }
        Ok(Self(coeffs))
    }

    pub fn from_slice(coeffs: &[f64]) -> Result<Self> {
        let arr: [f64; SH_LEN] = coeffs.try_into().map_err(|_| {
            Error::format(
                "light coefficients",
                format!("expected {SH_LEN} coefficients, got {}", coeffs.len()),
            )
        })?;
        Self::new(arr)
    }

    pub fn zeros() -> Self {
        Self([0.0; SH_LEN])
    }

    /// Same nine coefficients on every channel.
    pub fn gray(bands: [f64; SH_BANDS]) -> Self {
        let mut c = [0.0; SH_LEN];
        for ch in 0..3 {
            c[ch * SH_BANDS..(ch + 1) * SH_BANDS].copy_from_slice(&bands);
        }
        Self(c)
    }

    /// Ambient-only light with `L₁ = value` on every channel.
    pub fn ambient(value: f64) -> Self {
        let mut bands = [0.0; SH_BANDS];
        bands[0] = value;
        Self::gray(bands)
    }

    pub fn as_array(&self) -> &[f64; SH_LEN] {
        &self.0
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.0[c * SH_BANDS..(c + 1) * SH_BANDS]
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|v| v * s))
    }

    /// Multiplies each channel's nine coefficients by its own factor.
    pub fn scale_channels(&self, factors: [f64; 3]) -> Self {
        let mut out = self.0;
        for (i, v) in out.iter_mut().enumerate() {
            *v *= factors[i / SH_BANDS];
        }
        Self(out)
    }

    pub fn add(&self, other: &ShCoeffs) -> Self {
        let mut out = self.0;
        for (a, b) in out.iter_mut().zip(other.0.iter()) {
            *a += b;
        }
        Self(out)
    }

    pub fn sub(&self, other: &ShCoeffs) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Relative L2 distance `‖self − reference‖ / ‖reference‖`.
    pub fn relative_error(&self, reference: &ShCoeffs) -> f64 {
        self.sub(reference).norm() / reference.norm()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("finite coefficients serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

const ORDER_TAG: &str = "R1..R9,G1..G9,B1..B9";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShCoeffsJson {
    order: String,
    coeffs: Vec<f64>,
}

impl Serialize for ShCoeffs {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ShCoeffsJson {
            order: ORDER_TAG.to_string(),
            coeffs: self.0.to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ShCoeffs {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = ShCoeffsJson::deserialize(d)?;
        if raw.order != ORDER_TAG {
            return Err(serde::de::Error::custom(format!(
                "unsupported coefficient order `{}` (expected `{ORDER_TAG}`)",
                raw.order
            )));
        }
        ShCoeffs::from_slice(&raw.coeffs).map_err(serde::de::Error::custom)
    }
}

/// Basis vector without the unit-length check.
#[inline]
pub(crate) fn basis(n: &[f64; 3]) -> [f64; SH_BANDS] {
    let [x, y, z] = *n;
    [
        C4,
        2.0 * C2 * y,
        2.0 * C2 * z,
        2.0 * C2 * x,
        2.0 * C1 * x * y,
        2.0 * C1 * y * z,
        C3 * z * z - C5,
        2.0 * C1 * x * z,
        C1 * (x * x - y * y),
    ]
}

/// Partial derivatives of shading with respect to `(n_x, n_y, n_z)` for one channel.
#[inline]
pub(crate) fn normal_partials(n: &[f64; 3], l: &[f64]) -> [f64; 3] {
    let [x, y, z] = *n;
    [
        2.0 * (C1 * l[8] * x + C1 * l[4] * y + C1 * l[7] * z + C2 * l[3]),
        2.0 * (C1 * l[4] * x - C1 * l[8] * y + C1 * l[5] * z + C2 * l[1]),
        2.0 * (C1 * l[7] * x + C1 * l[5] * y + C3 * l[6] * z + C2 * l[2]),
    ]
}

#[inline]
fn dot9(a: &[f64; SH_BANDS], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// The nine SH basis values (∂S/∂L₁…∂S/∂L₉) at a unit normal.
pub fn sh_basis(n: [f64; 3]) -> Result<[f64; SH_BANDS]> {
    let norm = norm3(&n);
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::NonUnitNormal { index: 0, norm });
    }
    Ok(basis(&n))
}

/// The 4×4 matrix `K` for one channel's coefficients.
pub fn k_matrix(l: &[f64]) -> [[f64; 4]; 4] {
    [
        [C1 * l[8], C1 * l[4], C1 * l[7], C2 * l[3]],
        [C1 * l[4], -C1 * l[8], C1 * l[5], C2 * l[1]],
        [C1 * l[7], C1 * l[5], C3 * l[6], C2 * l[2]],
        [C2 * l[3], C2 * l[1], C2 * l[2], C4 * l[0] - C5 * l[6]],
    ]
}

fn check_mask(normals: &NormalField, mask: Option<&MatteMask>) -> Result<()> {
    if let Some(m) = mask {
        m.check_extent(normals.width(), normals.height(), "shading mask")?;
    }
    Ok(())
}

/// Shades raw (not necessarily unit) vectors; used by the solver and network paths.
pub(crate) fn shade_vectors(normals: &[[f64; 3]], light: &ShCoeffs) -> Vec<f64> {
    let mut out = Vec::with_capacity(normals.len() * 3);
    for n in normals {
        let b = basis(n);
        for c in 0..3 {
            out.push(dot9(&b, light.channel(c)));
        }
    }
    out
}

/// Renders three-channel shading `S = b(n)·L` per pixel and channel.
///
/// Pixels where the mask has zero alpha are set to 0. Negative shading is kept.
pub fn shade_forward(
    normals: &NormalField,
    light: &ShCoeffs,
    mask: Option<&MatteMask>,
) -> Result<PixelField> {
    check_mask(normals, mask)?;
    let mut data = shade_vectors(normals.vectors(), light);
    if let Some(m) = mask {
        for (i, &a) in m.alpha().iter().enumerate() {
            if a == 0.0 {
                data[i * 3..i * 3 + 3].fill(0.0);
            }
        }
    }
    Ok(PixelField::from_raw(normals.width(), normals.height(), 3, data))
}

/// Renders shading by evaluating `[n;1]ᵀ K [n;1]` directly.
pub fn shade_forward_quadratic(normals: &NormalField, light: &ShCoeffs) -> PixelField {
    let ks: Vec<[[f64; 4]; 4]> = (0..3).map(|c| k_matrix(light.channel(c))).collect();
    let mut data = Vec::with_capacity(normals.vectors().len() * 3);
    for n in normals.vectors() {
        let h = [n[0], n[1], n[2], 1.0];
        for k in &ks {
            let mut s = 0.0;
            for (i, row) in k.iter().enumerate() {
                for (j, kij) in row.iter().enumerate() {
                    s += h[i] * kij * h[j];
                }
            }
            data.push(s);
        }
    }
    PixelField::from_raw(normals.width(), normals.height(), 3, data)
}

/// Gradients of a scalar objective through the shading layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ShadeGradients {
    /// Per-pixel gradient with respect to the three normal components.
    pub d_normals: Vec<[f64; 3]>,
    pub d_light: [f64; SH_LEN],
}

pub(crate) fn shade_backward_vectors(
    normals: &[[f64; 3]],
    light: &ShCoeffs,
    upstream: &[f64],
) -> ShadeGradients {
    debug_assert_eq!(upstream.len(), normals.len() * 3);
    let mut d_normals = Vec::with_capacity(normals.len());
    let mut d_light = [0.0; SH_LEN];
    for (n, g) in normals.iter().zip(upstream.chunks_exact(3)) {
        let b = basis(n);
        let mut dn = [0.0; 3];
        for c in 0..3 {
            if g[c] == 0.0 {
                continue;
            }
            let p = normal_partials(n, light.channel(c));
            for k in 0..3 {
                dn[k] += g[c] * p[k];
            }
            for j in 0..SH_BANDS {
                d_light[c * SH_BANDS + j] += g[c] * b[j];
            }
        }
        d_normals.push(dn);
    }
    ShadeGradients { d_normals, d_light }
}

/// Backward pass of [`shade_forward`] for an upstream gradient on the shading.
///
/// With a mask, upstream values at zero-alpha pixels are ignored, mirroring the
/// zeroing in the forward pass.
pub fn shade_backward(
    normals: &NormalField,
    light: &ShCoeffs,
    upstream: &PixelField,
    mask: Option<&MatteMask>,
) -> Result<ShadeGradients> {
    check_mask(normals, mask)?;
    upstream.check_extent(normals.width(), normals.height(), "shade_backward upstream")?;
    if upstream.channels() != 3 {
        return Err(Error::shape("shade_backward upstream channels", 3, upstream.channels()));
    }
    let mut up = upstream.data().to_vec();
    if let Some(m) = mask {
        for (i, &a) in m.alpha().iter().enumerate() {
            if a == 0.0 {
                up[i * 3..i * 3 + 3].fill(0.0);
            }
        }
    }
    Ok(shade_backward_vectors(normals.vectors(), light, &up))
}

/// How a light estimate was solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LightSolveMethod {
    NormalEquations,
    Qr,
}

/// Diagnostics of a least-squares light fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LightFit {
    pub light: ShCoeffs,
    pub condition: f64,
    pub method: LightSolveMethod,
    pub pixels: usize,
}

/// Least-squares SH light under a constant unit albedo.
///
/// Per channel, minimizes `Σ αᵢ (b(nᵢ)·L − Iᵢ)²` over pixels with nonzero alpha.
pub fn estimate_light(image: &PixelField, normals: &NormalField, mask: &MatteMask) -> Result<ShCoeffs> {
    estimate_light_with_fit(image, normals, mask).map(|f| f.light)
}

pub fn estimate_light_with_fit(
    image: &PixelField,
    normals: &NormalField,
    mask: &MatteMask,
) -> Result<LightFit> {
    image.check_extent(normals.width(), normals.height(), "estimate_light image")?;
    mask.check_extent(normals.width(), normals.height(), "estimate_light mask")?;
    let ch = image.channels();
    if ch != 1 && ch != 3 {
        return Err(Error::shape("estimate_light image channels", "1 or 3", ch));
    }
    let rows: Vec<usize> = mask
        .alpha()
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0.0)
        .map(|(i, _)| i)
        .collect();
    if rows.len() < SH_BANDS {
        return Err(Error::TooFewPixels { count: rows.len() });
    }
    let n = rows.len();
    let sqrt_w: Vec<f64> = rows.iter().map(|&i| mask.alpha()[i].sqrt()).collect();
    let design = DMatrix::from_fn(n, SH_BANDS, |r, j| {
        sqrt_w[r] * basis(&normals.vectors()[rows[r]])[j]
    });
    let targets = DMatrix::from_fn(n, 3, |r, c| {
        let k = if ch == 1 { 0 } else { c };
        sqrt_w[r] * image.data()[rows[r] * ch + k]
    });

    let qr = design.clone().qr();
    let r = qr.r();
    let sv = r.clone().singular_values();
    let (smax, smin) = sv
        .iter()
        .fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }

    let mut method = LightSolveMethod::Qr;
    let mut solution: Option<DMatrix<f64>> = None;
    if condition <= NORMAL_EQUATIONS_CONDITION {
        let gram = design.transpose() * &design;
        let rhs = design.transpose() * &targets;
        if let Some(chol) = gram.cholesky() {
            solution = Some(chol.solve(&rhs));
            method = LightSolveMethod::NormalEquations;
        }
    }
    let solution = match solution {
        Some(s) => s,
        None => {
            let qtb = qr.q().transpose() * &targets;
            r.solve_upper_triangular(&qtb)
                .ok_or(Error::RankDeficient { condition })?
        }
    };
    let mut coeffs = [0.0; SH_LEN];
    for c in 0..3 {
        let col: DVector<f64> = solution.column(c).into_owned();
        for j in 0..SH_BANDS {
            coeffs[c * SH_BANDS + j] = col[j];
        }
    }
    Ok(LightFit {
        light: ShCoeffs::new(coeffs)?,
        condition,
        method,
        pixels: n,
    })
}
