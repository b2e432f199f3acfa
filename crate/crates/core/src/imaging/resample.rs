//! Bilinear UV resampling from a face-space grid into image space.
//!
//! `uv` holds per-output-pixel coordinates in `[0, 1]²`; `u` spans the source
//! columns and `v` the source rows, so `(0, 0)` is the top-left sample centre and
//! `(1, 1)` the bottom-right one. Coordinates outside the unit square are clamped
//! to the border and their derivative is zero.

use super::PixelField;
use crate::error::{Error, Result};

struct Tap {
    x0: usize,
    x1: usize,
    fx: f64,
    /// d(px)/du, zero when clamped
    dpx: f64,
}

#[inline]
fn tap(coord: f64, extent: usize) -> Tap {
    if extent == 1 {
        return Tap {
            x0: 0,
            x1: 0,
            fx: 0.0,
            dpx: 0.0,
        };
    }
    let span = (extent - 1) as f64;
    let raw = coord * span;
    let (p, dpx) = if raw <= 0.0 {
        (0.0, if raw == 0.0 { span } else { 0.0 })
    } else if raw >= span {
        (span, if raw == span { span } else { 0.0 })
    } else {
        (raw, span)
    };
    let x0 = (p.floor() as usize).min(extent - 2);
    Tap {
        x0,
        x1: x0 + 1,
        fx: p - x0 as f64,
        dpx,
    }
}

fn check_uv(source: &PixelField, uv: &PixelField) -> Result<()> {
    if uv.channels() != 2 {
        return Err(Error::shape("uv_resample uv channels", 2, uv.channels()));
    }
    if source.pixel_count() == 0 {
        return Err(Error::Degenerate {
            width: source.width(),
            height: source.height(),
            reason: "empty resampling source",
        });
    }
    Ok(())
}

/// Samples `source` at the coordinates in `uv`; the output has `uv`'s extent and
/// `source`'s channel count.
pub fn uv_resample(source: &PixelField, uv: &PixelField) -> Result<PixelField> {
    check_uv(source, uv)?;
    let c = source.channels();
    let mut out = Vec::with_capacity(uv.pixel_count() * c);
    for p in uv.data().chunks_exact(2) {
        let tx = tap(p[0], source.width());
        let ty = tap(p[1], source.height());
        for k in 0..c {
            let s00 = source.get(tx.x0, ty.x0, k);
            let s10 = source.get(tx.x1, ty.x0, k);
            let s01 = source.get(tx.x0, ty.x1, k);
            let s11 = source.get(tx.x1, ty.x1, k);
            let top = s00 + tx.fx * (s10 - s00);
            let bottom = s01 + tx.fx * (s11 - s01);
            out.push(top + ty.fx * (bottom - top));
        }
    }
    Ok(PixelField::from_raw(uv.width(), uv.height(), c, out))
}

/// Adjoint of [`uv_resample`]: returns `(d_source, d_uv)` for the given upstream
/// gradient on the output.
pub fn uv_resample_backward(
    source: &PixelField,
    uv: &PixelField,
    upstream: &PixelField,
) -> Result<(PixelField, PixelField)> {
    check_uv(source, uv)?;
    upstream.check_extent(uv.width(), uv.height(), "uv_resample_backward upstream")?;
    if upstream.channels() != source.channels() {
        return Err(Error::shape(
            "uv_resample_backward upstream channels",
            source.channels(),
            upstream.channels(),
        ));
    }
    let c = source.channels();
    let mut d_source = PixelField::zeros(source.width(), source.height(), c);
    let mut d_uv = Vec::with_capacity(uv.pixel_count() * 2);
    let ds = d_source.data_mut();
    let sw = source.width();
    for (i, p) in uv.data().chunks_exact(2).enumerate() {
        let tx = tap(p[0], sw);
        let ty = tap(p[1], source.height());
        let (mut du, mut dv) = (0.0, 0.0);
        for k in 0..c {
            let g = upstream.data()[i * c + k];
            let s00 = source.get(tx.x0, ty.x0, k);
            let s10 = source.get(tx.x1, ty.x0, k);
            let s01 = source.get(tx.x0, ty.x1, k);
            let s11 = source.get(tx.x1, ty.x1, k);
            let w00 = (1.0 - tx.fx) * (1.0 - ty.fx);
            let w10 = tx.fx * (1.0 - ty.fx);
            let w01 = (1.0 - tx.fx) * ty.fx;
            let w11 = tx.fx * ty.fx;
            ds[(ty.x0 * sw + tx.x0) * c + k] += g * w00;
            ds[(ty.x0 * sw + tx.x1) * c + k] += g * w10;
            ds[(ty.x1 * sw + tx.x0) * c + k] += g * w01;
            ds[(ty.x1 * sw + tx.x1) * c + k] += g * w11;
            let d_fx = (1.0 - ty.fx) * (s10 - s00) + ty.fx * (s11 - s01);
            let d_fy = (1.0 - tx.fx) * (s01 - s00) + tx.fx * (s11 - s10);
            du += g * d_fx * tx.dpx;
            dv += g * d_fy * ty.dpx;
        }
        d_uv.push(du);
        d_uv.push(dv);
    }
    Ok((d_source, PixelField::from_raw(uv.width(), uv.height(), 2, d_uv)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_uv(w: usize, h: usize) -> PixelField {
        PixelField::from_fn(w, h, 2, |x, y, c| {
            if c == 0 {
                x as f64 / (w - 1) as f64
            } else {
                y as f64 / (h - 1) as f64
            }
        })
    }

    #[test]
    fn identity_grid_reproduces_source() {
        let src = PixelField::from_fn(5, 4, 3, |x, y, c| (x * 7 + y * 3 + c) as f64 * 0.01);
        let out = uv_resample(&src, &identity_uv(5, 4)).unwrap();
        assert!(out.max_abs_diff(&src) < 1e-15);
    }

    #[test]
    fn constant_source_stays_constant() {
        let src = PixelField::filled(4, 4, 1, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let uv = PixelField::from_fn(6, 3, 2, |_, _, _| rng.random_range(-0.5..1.5));
        let out = uv_resample(&src, &uv).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn midpoint_of_two_pixels() {
        let src = PixelField::new(2, 1, 1, vec![0.0, 1.0]).unwrap();
        let uv = PixelField::new(1, 1, 2, vec![0.5, 0.0]).unwrap();
        assert_eq!(uv_resample(&src, &uv).unwrap().data(), &[0.5]);
    }

    #[test]
    fn out_of_range_clamps_with_zero_gradient() {
        let src = PixelField::new(2, 1, 1, vec![0.2, 0.8]).unwrap();
        let uv = PixelField::new(2, 1, 2, vec![-0.3, 0.0, 1.7, 0.0]).unwrap();
        let out = uv_resample(&src, &uv).unwrap();
        assert_eq!(out.data(), &[0.2, 0.8]);
        let up = PixelField::filled(2, 1, 1, 1.0);
        let (_, duv) = uv_resample_backward(&src, &uv, &up).unwrap();
        assert!(duv.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_mismatch_rejected() {
        let src = PixelField::zeros(2, 2, 1);
        let uv = PixelField::zeros(2, 2, 3);
        assert!(uv_resample(&src, &uv).is_err());
    }
}
