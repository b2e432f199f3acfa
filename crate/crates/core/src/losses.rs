//! Training objectives as value-plus-gradient functionals.
//!
//! Map losses are normalized by the masked pixel mass so that weights do not
//! depend on resolution; the unnormalized sums are reported alongside.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{spatial_gradient, spatial_gradient_adjoint, MatteMask, PixelField};
use crate::shading::{ShCoeffs, SH_LEN};

/// Weights of the full objective plus the scalar hyper-parameters of its terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub w_recon: f64,
    pub w_adv: f64,
    pub w_normal: f64,
    pub w_light: f64,
    pub w_albedo_smooth: f64,
    pub w_shading_smooth: f64,
    pub w_bws: f64,
    pub w_mask: f64,
    pub w_uv: f64,
    pub w_ni: f64,
    /// Target batch mean shading per channel.
    pub bws_target: f64,
    pub charbonnier_delta: f64,
    pub adv_margin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_recon: 1.0,
            w_adv: 0.01,
            w_normal: 0.5,
            w_light: 0.1,
            w_albedo_smooth: 0.02,
            w_shading_smooth: 0.02,
            w_bws: 1.0,
            w_mask: 0.5,
            w_uv: 0.5,
            w_ni: 0.5,
            bws_target: 0.75,
            charbonnier_delta: 1e-3,
            adv_margin: 0.1,
        }
    }
}

impl LossWeights {
    /// All weights zero except the reconstruction term.
    pub fn recon_only() -> Self {
        Self {
            w_recon: 1.0,
            ..Self::zeroed()
        }
    }

    /// All term weights zero; hyper-parameters at their defaults.
    pub fn zeroed() -> Self {
        Self {
            w_recon: 0.0,
            w_adv: 0.0,
            w_normal: 0.0,
            w_light: 0.0,
            w_albedo_smooth: 0.0,
            w_shading_smooth: 0.0,
            w_bws: 0.0,
            w_mask: 0.0,
            w_uv: 0.0,
            w_ni: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("w_recon", self.w_recon),
            ("w_adv", self.w_adv),
            ("w_normal", self.w_normal),
            ("w_light", self.w_light),
            ("w_albedo_smooth", self.w_albedo_smooth),
            ("w_shading_smooth", self.w_shading_smooth),
            ("w_bws", self.w_bws),
            ("w_mask", self.w_mask),
            ("w_uv", self.w_uv),
            ("w_ni", self.w_ni),
        ];
        for (name, w) in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and nonnegative, got {w}")));
            }
        }
        if !self.bws_target.is_finite() {
            return Err(Error::Config("bws_target must be finite".into()));
        }
        if !(self.charbonnier_delta > 0.0 && self.charbonnier_delta.is_finite()) {
            return Err(Error::Config("charbonnier_delta must be positive".into()));
        }
        if !(self.adv_margin > 0.0 && self.adv_margin.is_finite()) {
            return Err(Error::Config("adv_margin must be positive".into()));
        }
        Ok(())
    }

    /// Multiplies every term weight by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            w_recon: self.w_recon * s,
            w_adv: self.w_adv * s,
            w_normal: self.w_normal * s,
            w_light: self.w_light * s,
            w_albedo_smooth: self.w_albedo_smooth * s,
            w_shading_smooth: self.w_shading_smooth * s,
            w_bws: self.w_bws * s,
            w_mask: self.w_mask * s,
            w_uv: self.w_uv * s,
            w_ni: self.w_ni * s,
            ..self.clone()
        }
    }

    pub fn weight(&self, term: Term) -> f64 {
        match term {
            Term::Recon => self.w_recon,
            Term::Adversarial => self.w_adv,
            Term::Normal => self.w_normal,
            Term::Light => self.w_light,
            Term::AlbedoSmooth => self.w_albedo_smooth,
            Term::ShadingSmooth => self.w_shading_smooth,
            Term::Bws => self.w_bws,
            Term::Mask => self.w_mask,
            Term::Uv => self.w_uv,
            Term::ImplicitNormal => self.w_ni,
        }
    }
}

/// Named objective terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Recon,
    Adversarial,
    Normal,
    Light,
    AlbedoSmooth,
    ShadingSmooth,
    Bws,
    Mask,
    Uv,
    ImplicitNormal,
}

impl Term {
    pub const ALL: [Term; 10] = [
        Term::Recon,
        Term::Adversarial,
        Term::Normal,
        Term::Light,
        Term::AlbedoSmooth,
        Term::ShadingSmooth,
        Term::Bws,
        Term::Mask,
        Term::Uv,
        Term::ImplicitNormal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Term::Recon => "recon",
            Term::Adversarial => "adv",
            Term::Normal => "normal",
            Term::Light => "light",
            Term::AlbedoSmooth => "albedo_smooth",
            Term::ShadingSmooth => "shading_smooth",
            Term::Bws => "bws",
            Term::Mask => "mask",
            Term::Uv => "uv",
            Term::ImplicitNormal => "ni",
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A loss value with its gradient on a field.
#[derive(Clone, Debug)]
pub struct MapLoss {
    /// Mask-normalized value.
    pub value: f64,
    /// Unnormalized sum.
    pub raw_sum: f64,
    pub gradient: PixelField,
}

/// Pixel weights and their total mass; `None` mask means all ones.
fn mask_weights(mask: Option<&MatteMask>, w: usize, h: usize, context: &'static str) -> Result<(Vec<f64>, f64)> {
    let alpha = match mask {
        Some(m) => {
            m.check_extent(w, h, context)?;
            m.alpha().to_vec()
        }
        None => vec![1.0; w * h],
    };
    let mass: f64 = alpha.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::EmptyMask(context));
    }
    Ok((alpha, mass))
}

/// Masked mean squared error; returns `(value, raw_sum, gradient)` on raw buffers.
pub(crate) fn l2_raw(pred: &[f64], target: &[f64], channels: usize, alpha: &[f64], mass: f64) -> (f64, f64, Vec<f64>) {
    let mut raw = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (i, (&p, &t)) in pred.iter().zip(target).enumerate() {
        let a = alpha[i / channels];
        let d = p - t;
        raw += a * d * d;
        grad.push(2.0 * a * d / mass);
    }
    (raw / mass, raw, grad)
}

/// `Σ_masked ‖pred − target‖² / masked mass`, summing over channels.
pub fn l2_map_loss(pred: &PixelField, target: &PixelField, mask: Option<&MatteMask>) -> Result<MapLoss> {
    pred.check_same_shape(target, "l2_map_loss")?;
    let (alpha, mass) = mask_weights(mask, pred.width(), pred.height(), "l2_map_loss mask")?;
    let (value, raw_sum, grad) = l2_raw(pred.data(), target.data(), pred.channels(), &alpha, mass);
    Ok(MapLoss {
        value,
        raw_sum,
        gradient: PixelField::from_raw(pred.width(), pred.height(), pred.channels(), grad),
    })
}

/// Squared L2 distance over the 27 coefficients and its gradient `2(pred − target)`.
pub fn light_loss(pred: &ShCoeffs, target: &ShCoeffs) -> (f64, [f64; SH_LEN]) {
    let mut value = 0.0;
    let mut grad = [0.0; SH_LEN];
    for (i, (p, t)) in pred.as_array().iter().zip(target.as_array()).enumerate() {
        let d = p - t;
        value += d * d;
        grad[i] = 2.0 * d;
    }
    (value, grad)
}

/// Weights on the forward differences at each pixel: both endpoints must be masked.
fn difference_weights(alpha: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut wx = vec![0.0; w * h];
    let mut wy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                wx[i] = alpha[i].min(alpha[i + 1]);
            }
            if y + 1 < h {
                wy[i] = alpha[i].min(alpha[i + w]);
            }
        }
    }
    (wx, wy)
}

/// Shared driver for gradient-magnitude penalties `Σ w·φ(∂)` normalized by mask mass.
fn gradient_penalty(
    field: &PixelField,
    mask: Option<&MatteMask>,
    context: &'static str,
    phi: impl Fn(f64) -> (f64, f64),
) -> Result<MapLoss> {
    let (dx, dy) = spatial_gradient(field)?;
    let (w, h, c) = field.shape();
    let (alpha, mass) = mask_weights(mask, w, h, context)?;
    let (wx, wy) = difference_weights(&alpha, w, h);
    let mut raw = 0.0;
    let mut gx = vec![0.0; dx.data().len()];
    let mut gy = vec![0.0; dy.data().len()];
    for i in 0..dx.data().len() {
        let p = i / c;
        if wx[p] > 0.0 {
            let (v, d) = phi(dx.data()[i]);
            raw += wx[p] * v;
            gx[i] = wx[p] * d / mass;
        }
        if wy[p] > 0.0 {
            let (v, d) = phi(dy.data()[i]);
            raw += wy[p] * v;
            gy[i] = wy[p] * d / mass;
        }
    }
    let gradient = spatial_gradient_adjoint(
        &PixelField::from_raw(w, h, c, gx),
        &PixelField::from_raw(w, h, c, gy),
    )?;
    Ok(MapLoss {
        value: raw / mass,
        raw_sum: raw,
        gradient,
    })
}

/// Charbonnier-smoothed L1 penalty on albedo forward differences:
/// `Σ √(d² + δ²) − δ` over both directions and all channels, per masked pixel.
pub fn albedo_smoothness(albedo: &PixelField, mask: Option<&MatteMask>, delta: f64) -> Result<MapLoss> {
    if !(delta > 0.0) {
        return Err(Error::Config("charbonnier delta must be positive".into()));
    }
    gradient_penalty(albedo, mask, "albedo_smoothness mask", |d| {
        let r = (d * d + delta * delta).sqrt();
        (r - delta, d / r)
    })
}

/// Mean squared forward-difference magnitude of shading over the mask.
pub fn shading_smoothness(shading: &PixelField, mask: Option<&MatteMask>) -> Result<MapLoss> {
    gradient_penalty(shading, mask, "shading_smoothness mask", |d| (d * d, 2.0 * d))
}

/// Batch-wise white shading penalty.
#[derive(Clone, Debug)]
pub struct BwsLoss {
    /// `Σ_channel (mean − c)²`.
    pub value: f64,
    /// Per-channel batch means over the masks.
    pub means: [f64; 3],
    /// One gradient field per batch element.
    pub gradients: Vec<PixelField>,
}

/// Penalizes the deviation of each channel's masked batch mean shading from `target`.
///
/// The mean runs over all masked pixels of all images jointly.
pub fn bws_penalty(shadings: &[&PixelField], masks: &[&MatteMask], target: f64) -> Result<BwsLoss> {
    if shadings.is_empty() {
        return Err(Error::EmptySet("bws_penalty batch"));
    }
    if masks.len() != shadings.len() {
        return Err(Error::shape("bws_penalty masks", shadings.len(), masks.len()));
    }
    for (s, m) in shadings.iter().zip(masks) {
        if s.channels() != 3 {
            return Err(Error::shape("bws_penalty channels", 3, s.channels()));
        }
        m.check_extent(s.width(), s.height(), "bws_penalty mask")?;
    }
    let (means, mass) = bws_means(shadings.iter().map(|s| s.data()), masks.iter().map(|m| m.alpha()));
    if !(mass > 0.0) {
        return Err(Error::EmptyMask("bws_penalty"));
    }
    let value: f64 = means.iter().map(|m| (m - target).powi(2)).sum();
    let gradients = shadings
        .iter()
        .zip(masks)
        .map(|(s, m)| {
            let g = bws_gradient(m.alpha(), &means, mass, target);
            PixelField::from_raw(s.width(), s.height(), 3, g)
        })
        .collect();
    Ok(BwsLoss { value, means, gradients })
}

pub(crate) fn bws_means<'a>(
    shadings: impl Iterator<Item = &'a [f64]>,
    alphas: impl Iterator<Item = &'a [f64]>,
) -> ([f64; 3], f64) {
    let mut sums = [0.0; 3];
    let mut mass = 0.0;
    for (s, a) in shadings.zip(alphas) {
        for (px, &w) in s.chunks_exact(3).zip(a) {
            for c in 0..3 {
                sums[c] += w * px[c];
            }
            mass += w;
        }
    }
    (sums.map(|v| v / mass), mass)
}

pub(crate) fn bws_gradient(alpha: &[f64], means: &[f64; 3], mass: f64, target: f64) -> Vec<f64> {
    let coef = means.map(|m| 2.0 * (m - target) / mass);
    alpha.iter().flat_map(|&w| coef.map(|k| k * w)).collect()
}

/// Energy-based adversarial terms with an autoencoder discriminator.
#[derive(Clone, Debug)]
pub struct EbganLosses {
    /// `D(real)`, the discriminator's reconstruction error on the real image.
    pub d_real: f64,
    /// `D(fake)`.
    pub d_fake: f64,
    /// `D(real) + max(0, margin − D(fake))`.
    pub d_loss: f64,
    /// `D(fake)`.
    pub g_loss: f64,
    pub hinge_active: bool,
    /// Gradients of `d_loss` with respect to the discriminator's reconstruction of
    /// the real image and to the real image itself.
    pub d_wrt_recon_real: PixelField,
    pub d_wrt_real: PixelField,
    /// Gradients of `d_loss` through the hinge (zero when inactive).
    pub d_wrt_recon_fake: PixelField,
    pub d_wrt_fake: PixelField,
    /// Gradients of `g_loss`.
    pub g_wrt_recon_fake: PixelField,
    pub g_wrt_fake: PixelField,
}

/// Mean squared reconstruction error `D(x)` and its gradients `(∂/∂recon, ∂/∂x)`.
pub(crate) fn recon_energy(recon: &[f64], x: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let n = x.len() as f64;
    let mut e = 0.0;
    let mut g_recon = Vec::with_capacity(x.len());
    for (&r, &v) in recon.iter().zip(x) {
        let d = r - v;
        e += d * d;
        g_recon.push(2.0 * d / n);
    }
    let g_x = g_recon.iter().map(|g| -g).collect();
    (e / n, g_recon, g_x)
}

pub fn ebgan_losses(
    disc_recon_real: &PixelField,
    real: &PixelField,
    disc_recon_fake: &PixelField,
    fake: &PixelField,
    margin: f64,
) -> Result<EbganLosses> {
    disc_recon_real.check_same_shape(real, "ebgan real")?;
    disc_recon_fake.check_same_shape(fake, "ebgan fake")?;
    let (w, h, c) = real.shape();
    let (fw, fh, fc) = fake.shape();
    let field = |(w, h, c), v: Vec<f64>| PixelField::from_raw(w, h, c, v);
    let (d_real, gr_recon, gr_x) = recon_energy(disc_recon_real.data(), real.data());
    let (d_fake, gf_recon, gf_x) = recon_energy(disc_recon_fake.data(), fake.data());
    let hinge_active = margin - d_fake > 0.0;
    let hinge = if hinge_active { margin - d_fake } else { 0.0 };
    let through_hinge = |g: &Vec<f64>| -> Vec<f64> {
        if hinge_active {
            g.iter().map(|v| -v).collect()
        } else {
            vec![0.0; g.len()]
        }
    };
    Ok(EbganLosses {
        d_real,
        d_fake,
        d_loss: d_real + hinge,
        g_loss: d_fake,
        hinge_active,
        d_wrt_recon_fake: field((fw, fh, fc), through_hinge(&gf_recon)),
        d_wrt_fake: field((fw, fh, fc), through_hinge(&gf_x)),
        d_wrt_recon_real: field((w, h, c), gr_recon),
        d_wrt_real: field((w, h, c), gr_x),
        g_wrt_recon_fake: field((fw, fh, fc), gf_recon),
        g_wrt_fake: field((fw, fh, fc), gf_x),
    })
}

/// One evaluated term of the objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossPart {
    pub term: Term,
    pub value: f64,
    pub raw_sum: Option<f64>,
}

impl LossPart {
    pub fn new(term: Term, value: f64) -> Self {
        Self {
            term,
            value,
            raw_sum: None,
        }
    }

    pub fn with_raw(term: Term, value: f64, raw_sum: f64) -> Self {
        Self {
            term,
            value,
            raw_sum: Some(raw_sum),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermEntry {
    pub value: f64,
    pub weighted: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub raw_sum: Option<f64>,
}

/// Itemized weighted objective.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub terms: BTreeMap<String, TermEntry>,
    pub total: f64,
}

impl LossReport {
    pub fn get(&self, term: Term) -> Option<&TermEntry> {
        self.terms.get(term.name())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Weights and sums the parts; repeated terms accumulate.
pub fn total_objective(parts: &[LossPart], weights: &LossWeights) -> Result<LossReport> {
    let mut report = LossReport::default();
    for part in parts {
        if !part.value.is_finite() {
            return Err(Error::NanTerm {
                term: part.term.name().to_string(),
            });
        }
        let weighted = weights.weight(part.term) * part.value;
        let entry = report
            .terms
            .entry(part.term.name().to_string())
            .or_insert(TermEntry {
                value: 0.0,
                weighted: 0.0,
                raw_sum: None,
            });
        entry.value += part.value;
        entry.weighted += weighted;
        if let Some(r) = part.raw_sum {
            *entry.raw_sum.get_or_insert(0.0) += r;
        }
    }
    report.total = report.terms.values().map(|e| e.weighted).sum();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l2_examples() {
        let a = PixelField::from_fn(3, 2, 3, |x, y, c| (x + y + c) as f64 * 0.1);
        let z = l2_map_loss(&a, &a, None).unwrap();
        assert_eq!(z.value, 0.0);
        assert!(z.gradient.data().iter().all(|&g| g == 0.0));
        let b = a.map(|v| v - 0.1);
        let l = l2_map_loss(&a, &b, None).unwrap();
        assert!((l.value - 0.03).abs() < 1e-14);
        let empty = MatteMask::new(3, 2, vec![0.0; 6]).unwrap();
        assert!(matches!(l2_map_loss(&a, &b, Some(&empty)), Err(Error::EmptyMask(_))));
        assert!(l2_map_loss(&a, &PixelField::zeros(3, 2, 1), None).is_err());
    }

    #[test]
    fn light_loss_examples() {
        let t = ShCoeffs::ambient(0.7);
        assert_eq!(light_loss(&t, &t).0, 0.0);
        let mut e1 = *t.as_array();
        e1[0] += 1.0;
        let (v, g) = light_loss(&ShCoeffs::new(e1).unwrap(), &t);
        assert!((v - 1.0).abs() < 1e-15);
        assert_eq!(g[0], 2.0);
        assert!(g[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn smoothness_of_constants_is_zero() {
        let f = PixelField::filled(5, 4, 3, 0.3);
        assert_eq!(albedo_smoothness(&f, None, 1e-3).unwrap().value, 0.0);
        assert_eq!(shading_smoothness(&f, None).unwrap().value, 0.0);
    }

    #[test]
    fn charbonnier_step_edge() {
        let h = 0.5;
        let (w, hgt) = (6, 4);
        let f = PixelField::from_fn(w, hgt, 1, |x, _, _| if x < 3 { 0.0 } else { h });
        let l = albedo_smoothness(&f, None, 1e-3).unwrap();
        // one edge pixel per row contributes sqrt(h² + δ²) − δ ≈ h
        let per_edge = l.raw_sum / hgt as f64;
        assert!((per_edge - h).abs() < 1e-3, "{per_edge}");
    }

    #[test]
    fn shading_ramp_closed_form() {
        let s = 0.05;
        let w = 8;
        let f = PixelField::from_fn(w, 5, 1, |x, _, _| x as f64 * s);
        let l = shading_smoothness(&f, None).unwrap();
        let expected = s * s * (w - 1) as f64 / w as f64;
        assert!((l.value - expected).abs() < 1e-15);
    }

    #[test]
    fn bws_examples() {
        let s = PixelField::filled(4, 4, 3, 0.75);
        let m = MatteMask::full(4, 4);
        assert_eq!(bws_penalty(&[&s], &[&m], 0.75).unwrap().value, 0.0);
        let one = PixelField::filled(4, 4, 3, 1.0);
        let l = bws_penalty(&[&one], &[&m], 0.75).unwrap();
        assert!((l.value - 0.1875).abs() < 1e-15);
        assert!(bws_penalty(&[], &[], 0.75).is_err());
        let empty = MatteMask::new(4, 4, vec![0.0; 16]).unwrap();
        assert!(bws_penalty(&[&one], &[&empty], 0.75).is_err());
    }

    #[test]
    fn ebgan_examples() {
        let x = PixelField::filled(2, 2, 3, 0.4);
        let far = PixelField::filled(2, 2, 3, 0.9);
        // D(real) = 0, D(fake) = 0.25 ≥ 0.1
        let l = ebgan_losses(&x, &x, &far, &x, 0.1).unwrap();
        assert_eq!(l.d_loss, 0.0);
        assert!(!l.hinge_active);
        assert!(l.d_wrt_fake.data().iter().all(|&g| g == 0.0));
        let l = ebgan_losses(&far, &x, &x, &x, 0.1).unwrap();
        assert_eq!(l.g_loss, 0.0);
        // D(fake) = 0.04 → hinge 0.06
        let near = PixelField::filled(2, 2, 3, 0.6);
        let l = ebgan_losses(&x, &x, &near, &x, 0.1).unwrap();
        assert!((l.d_fake - 0.04).abs() < 1e-15);
        assert!((l.d_loss - 0.06).abs() < 1e-15);
        assert!(l.hinge_active);
        assert!(l.d_wrt_recon_fake.data().iter().all(|&g| g < 0.0));
    }

    #[test]
    fn total_objective_examples() {
        let parts = [
            LossPart::new(Term::Recon, 0.3),
            LossPart::new(Term::Normal, 0.2),
            LossPart::new(Term::Light, 1.5),
        ];
        let r = total_objective(&parts, &LossWeights::recon_only()).unwrap();
        assert_eq!(r.total, 0.3);
        let w = LossWeights::default();
        let r1 = total_objective(&parts, &w).unwrap();
        let r2 = total_objective(&parts, &w.scaled(2.0)).unwrap();
        assert!((r2.total - 2.0 * r1.total).abs() < 1e-15);
        let resum: f64 = r1.terms.values().map(|e| e.weighted).sum();
        assert!((resum - r1.total).abs() <= 1e-12);
        let bad = total_objective(&[LossPart::new(Term::Bws, f64::NAN)], &w).unwrap_err();
        assert!(bad.to_string().contains("bws"));
    }

    #[test]
    fn weights_json_defaults_and_unknown_keys() {
        let w: LossWeights = serde_json::from_str(r#"{"w_recon": 2.0}"#).unwrap();
        assert_eq!(w.w_recon, 2.0);
        assert_eq!(w.bws_target, 0.75);
        assert!(serde_json::from_str::<LossWeights>(r#"{"w_bogus": 1}"#).is_err());
        let back: LossWeights = serde_json::from_str(&serde_json::to_string(&w).unwrap()).unwrap();
        assert_eq!(back, w);
        assert!(LossWeights { w_bws: -1.0, ..w }.validate().is_err());
    }
}
