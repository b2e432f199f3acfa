//! Image-grid containers and the differentiable grid operators shared by every
//! other module.
//!
//! All fields are stored row-major with channels interleaved, in 64-bit floats.
//! Images and mattes are range-checked to `[0, 1]` when ingested; fields that
//! carry gradients, normals or signed shading are created unbounded.

mod gradient;
mod io;
mod resample;

pub use gradient::{spatial_gradient, spatial_gradient_adjoint};
pub use io::{
    decode_pfm, encode_pfm, load_float_map, load_image, load_mask, save_float_map, save_mask,
    save_png, FloatMap,
};
pub use resample::{uv_resample, uv_resample_backward};

use crate::error::{Error, Result};

/// Tolerance on the unit-length invariant of [`NormalField`].
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// An `H×W×C` grid of real values.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelField {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
    bounded: bool,
}

impl PixelField {
    /// Creates an unbounded field; values must be finite.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_len(width, height, channels, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pixel field"));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
            bounded: false,
        })
    }

    /// Creates a field whose values are constrained to `[0, 1]`.
    pub fn bounded(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let mut field = Self::new(width, height, channels, data)?;
        if let Some(&v) = field.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange {
                context: "bounded pixel field",
                value: v,
            });
        }
        field.bounded = true;
        Ok(field)
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(value.is_finite());
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
            bounded: false,
        }
    }

    /// Builds a field by evaluating `f(x, y, c)` at every sample.
    ///
    /// Panics if `f` produces a non-finite value.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    let v = f(x, y, c);
                    assert!(v.is_finite(), "from_fn produced non-finite value at ({x}, {y}, {c})");
                    data.push(v);
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
            bounded: false,
        }
    }

    /// Internal constructor for data produced by arithmetic on finite inputs.
    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            data,
            bounded: false,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn is_bounded(&self) -> bool {
        self.bounded
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Mutable access; clears the bounded flag since the range is no longer guaranteed.
    pub fn data_mut(&mut self) -> &mut [f64] {
        self.bounded = false;
        &mut self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        assert!(value.is_finite());
        let i = self.index(x, y, c);
        self.data_mut()[i] = value;
    }

    /// `(width, height, channels)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn same_shape(&self, other: &PixelField) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn check_same_shape(&self, other: &PixelField, context: &'static str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(context, fmt_shape(self.shape()), fmt_shape(other.shape())))
        }
    }

    pub(crate) fn check_extent(&self, width: usize, height: usize, context: &'static str) -> Result<()> {
        if self.width == width && self.height == height {
            Ok(())
        } else {
            Err(Error::shape(
                context,
                format!("{width}x{height}"),
                format!("{}x{}", self.width, self.height),
            ))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> PixelField {
        Self::from_raw(self.width, self.height, self.channels, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Element-wise combination of two fields of identical shape.
    pub fn zip_map(&self, other: &PixelField, f: impl Fn(f64, f64) -> f64) -> Result<PixelField> {
        self.check_same_shape(other, "zip_map")?;
        Ok(Self::from_raw(
            self.width,
            self.height,
            self.channels,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn scale(&self, s: f64) -> PixelField {
        self.map(|v| v * s)
    }

    /// Extracts a single channel as a one-channel field.
    pub fn channel(&self, c: usize) -> PixelField {
        assert!(c < self.channels);
        Self::from_raw(
            self.width,
            self.height,
            1,
            self.data.iter().skip(c).step_by(self.channels).copied().collect(),
        )
    }

    /// Keeps the first `n` channels.
    pub fn truncate_channels(&self, n: usize) -> PixelField {
        assert!(n >= 1 && n <= self.channels);
        let data = self
            .data
            .chunks_exact(self.channels)
            .flat_map(|px| px[..n].iter().copied())
            .collect();
        Self::from_raw(self.width, self.height, n, data)
    }

    /// Clamps every value into `[0, 1]` and marks the result bounded.
    pub fn clamped_unit(&self) -> PixelField {
        let mut out = self.map(|v| v.clamp(0.0, 1.0));
        out.bounded = true;
        out
    }

    /// Sum of squared values.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &PixelField) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Maximum absolute element-wise difference.
    pub fn max_abs_diff(&self, other: &PixelField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn fmt_shape((w, h, c): (usize, usize, usize)) -> String {
    format!("{w}x{h}x{c}")
}

fn check_len(width: usize, height: usize, channels: usize, len: usize) -> Result<()> {
    if channels == 0 {
        return Err(Error::shape("pixel field", "channels >= 1", 0));
    }
    if width * height * channels != len {
        return Err(Error::shape("pixel field data length", width * height * channels, len));
    }
    Ok(())
}

/// Per-pixel unit surface normals.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalField {
    width: usize,
    height: usize,
    vectors: Vec<[f64; 3]>,
}

impl NormalField {
    /// Validates that every vector is unit length within [`UNIT_TOLERANCE`].
    pub fn new(width: usize, height: usize, vectors: Vec<[f64; 3]>) -> Result<Self> {
        if vectors.len() != width * height {
            return Err(Error::shape("normal field", width * height, vectors.len()));
        }
        for (index, v) in vectors.iter().enumerate() {
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite("normal field"));
            }
            let norm = norm3(v);
            if (norm - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::NonUnitNormal { index, norm });
            }
        }
        Ok(Self {
            width,
            height,
            vectors,
        })
    }

    /// Normalizes arbitrary nonzero vectors.
    pub fn from_raw_vectors(width: usize, height: usize, raw: &[[f64; 3]]) -> Result<Self> {
        if raw.len() != width * height {
            return Err(Error::shape("normal field", width * height, raw.len()));
        }
        let mut vectors = Vec::with_capacity(raw.len());
        for v in raw {
            let n = norm3(v);
            if !(n > 1e-12) || !n.is_finite() {
                return Err(Error::ZeroVector(n));
            }
            vectors.push([v[0] / n, v[1] / n, v[2] / n]);
        }
        Ok(Self {
            width,
            height,
            vectors,
        })
    }

    /// Every pixel facing the viewer, `(0, 0, 1)`.
    pub fn frontal(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            vectors: vec![[0.0, 0.0, 1.0]; width * height],
        }
    }

    /// Reads a three-channel field, validating unit length.
    pub fn from_field(field: &PixelField) -> Result<Self> {
        if field.channels() < 3 {
            return Err(Error::shape("normal field channels", 3, field.channels()));
        }
        let vectors = field
            .data()
            .chunks_exact(field.channels())
            .map(|p| [p[0], p[1], p[2]])
            .collect();
        Self::new(field.width(), field.height(), vectors)
    }

    /// Like [`NormalField::from_field`] but renormalizes, for data that went through
    /// 32-bit storage or external tools.
    pub fn from_field_renormalized(field: &PixelField) -> Result<Self> {
        if field.channels() < 3 {
            return Err(Error::shape("normal field channels", 3, field.channels()));
        }
        let raw: Vec<[f64; 3]> = field
            .data()
            .chunks_exact(field.channels())
            .map(|p| [p[0], p[1], p[2]])
            .collect();
        Self::from_raw_vectors(field.width(), field.height(), &raw)
    }

    pub fn to_field(&self) -> PixelField {
        PixelField::from_raw(
            self.width,
            self.height,
            3,
            self.vectors.iter().flat_map(|v| v.iter().copied()).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn vectors(&self) -> &[[f64; 3]] {
        &self.vectors
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.vectors[y * self.width + x]
    }

    pub(crate) fn from_unit_unchecked(width: usize, height: usize, vectors: Vec<[f64; 3]>) -> Self {
        debug_assert_eq!(vectors.len(), width * height);
        Self {
            width,
            height,
            vectors,
        }
    }
}

/// Per-pixel alpha in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatteMask {
    width: usize,
    height: usize,
    alpha: Vec<f64>,
}

impl MatteMask {
    pub fn new(width: usize, height: usize, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != width * height {
            return Err(Error::shape("matte mask", width * height, alpha.len()));
        }
        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matte mask"));
        }
        if let Some(&v) = alpha.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange {
                context: "matte mask",
                value: v,
            });
        }
        Ok(Self { width, height, alpha })
    }

    /// Alpha 1 everywhere.
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            alpha: vec![1.0; width * height],
        }
    }

    /// Reads the first channel of a field.
    pub fn from_field(field: &PixelField) -> Result<Self> {
        Self::new(
            field.width(),
            field.height(),
            field.data().iter().step_by(field.channels()).copied().collect(),
        )
    }

    pub fn to_field(&self) -> PixelField {
        PixelField::from_raw(self.width, self.height, 1, self.alpha.clone())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.alpha[y * self.width + x]
    }

    /// Total alpha mass, the effective masked-pixel count.
    pub fn mass(&self) -> f64 {
        self.alpha.iter().sum()
    }

    /// Number of pixels with nonzero alpha.
    pub fn support(&self) -> usize {
        self.alpha.iter().filter(|&&a| a > 0.0).count()
    }

    pub(crate) fn check_extent(&self, width: usize, height: usize, context: &'static str) -> Result<()> {
        if self.width == width && self.height == height {
            Ok(())
        } else {
            Err(Error::shape(
                context,
                format!("{width}x{height}"),
                format!("{}x{}", self.width, self.height),
            ))
        }
    }
}

#[inline]
pub(crate) fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}
