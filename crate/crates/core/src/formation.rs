//! Image formation (`albedo ⊙ shading`) and matte compositing, with adjoints.

use crate::error::{Error, Result};
use crate::imaging::{MatteMask, PixelField};

/// Per-element product of albedo and shading.
pub fn form_image(albedo: &PixelField, shading: &PixelField) -> Result<PixelField> {
    albedo.check_same_shape(shading, "form_image")?;
    albedo.zip_map(shading, |a, s| a * s)
}

/// Returns `(d_albedo, d_shading) = (upstream ⊙ shading, upstream ⊙ albedo)`.
pub fn form_image_backward(
    albedo: &PixelField,
    shading: &PixelField,
    upstream: &PixelField,
) -> Result<(PixelField, PixelField)> {
    albedo.check_same_shape(shading, "form_image_backward")?;
    albedo.check_same_shape(upstream, "form_image_backward upstream")?;
    Ok((
        upstream.zip_map(shading, |g, s| g * s)?,
        upstream.zip_map(albedo, |g, a| g * a)?,
    ))
}

fn check_composite(fg: &PixelField, bg: &PixelField, matte: &MatteMask) -> Result<()> {
    fg.check_same_shape(bg, "composite")?;
    matte.check_extent(fg.width(), fg.height(), "composite matte")
}

/// `matte ⊙ fg + (1 − matte) ⊙ bg`, with the one-channel matte broadcast over channels.
pub fn composite(fg: &PixelField, bg: &PixelField, matte: &MatteMask) -> Result<PixelField> {
    check_composite(fg, bg, matte)?;
    let c = fg.channels();
    let data = fg
        .data()
        .iter()
        .zip(bg.data())
        .enumerate()
        .map(|(i, (&f, &b))| {
            let m = matte.alpha()[i / c];
            m * f + (1.0 - m) * b
        })
        .collect();
    Ok(PixelField::from_raw(fg.width(), fg.height(), c, data))
}

/// Gradients of [`composite`].
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeGradients {
    pub d_fg: PixelField,
    pub d_bg: PixelField,
    /// One channel; summed over the image channels.
    pub d_matte: PixelField,
}

pub fn composite_backward(
    fg: &PixelField,
    bg: &PixelField,
    matte: &MatteMask,
    upstream: &PixelField,
) -> Result<CompositeGradients> {
    check_composite(fg, bg, matte)?;
    fg.check_same_shape(upstream, "composite_backward upstream")?;
    Ok(composite_backward_raw(fg.data(), bg.data(), matte.alpha(), upstream.data(), fg.channels())
        .into_fields(fg.width(), fg.height(), fg.channels()))
}

pub(crate) struct RawCompositeGradients {
    pub d_fg: Vec<f64>,
    pub d_bg: Vec<f64>,
    pub d_matte: Vec<f64>,
}

impl RawCompositeGradients {
    fn into_fields(self, w: usize, h: usize, c: usize) -> CompositeGradients {
        CompositeGradients {
            d_fg: PixelField::from_raw(w, h, c, self.d_fg),
            d_bg: PixelField::from_raw(w, h, c, self.d_bg),
            d_matte: PixelField::from_raw(w, h, 1, self.d_matte),
        }
    }
}

/// Composite adjoint on raw buffers; the matte may be any real values here.
pub(crate) fn composite_backward_raw(
    fg: &[f64],
    bg: &[f64],
    matte: &[f64],
    upstream: &[f64],
    channels: usize,
) -> RawCompositeGradients {
    let mut d_fg = Vec::with_capacity(fg.len());
    let mut d_bg = Vec::with_capacity(fg.len());
    let mut d_matte = vec![0.0; matte.len()];
    for i in 0..fg.len() {
        let m = matte[i / channels];
        let g = upstream[i];
        d_fg.push(g * m);
        d_bg.push(g * (1.0 - m));
        d_matte[i / channels] += g * (fg[i] - bg[i]);
    }
    RawCompositeGradients { d_fg, d_bg, d_matte }
}

pub(crate) fn composite_raw(fg: &[f64], bg: &[f64], matte: &[f64], channels: usize) -> Vec<f64> {
    fg.iter()
        .zip(bg)
        .enumerate()
        .map(|(i, (&f, &b))| {
            let m = matte[i / channels];
            m * f + (1.0 - m) * b
        })
        .collect()
}

/// The layered quantities of one rendered image.
#[derive(Clone, Debug)]
pub struct RenderBundle {
    pub albedo: PixelField,
    pub shading: PixelField,
    pub foreground: PixelField,
    pub background: PixelField,
    pub matte: MatteMask,
    pub composite: PixelField,
    /// Set when `composite` was produced from the other members.
    pub consistent: bool,
}

impl RenderBundle {
    /// Runs formation and compositing, producing a consistent bundle.
    pub fn render(
        albedo: PixelField,
        shading: PixelField,
        background: PixelField,
        matte: MatteMask,
    ) -> Result<Self> {
        let foreground = form_image(&albedo, &shading)?;
        let composite = composite(&foreground, &background, &matte)?;
        Ok(Self {
            albedo,
            shading,
            foreground,
            background,
            matte,
            composite,
            consistent: true,
        })
    }

    /// Maximum deviation of the stored composite from recompositing its layers.
    pub fn consistency_error(&self) -> Result<f64> {
        let again = composite(&self.foreground, &self.background, &self.matte)?;
        if !again.same_shape(&self.composite) {
            return Err(Error::shape("render bundle", "matching composite", "mismatch"));
        }
        Ok(again.max_abs_diff(&self.composite))
    }
}
