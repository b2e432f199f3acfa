use super::PixelField;
use crate::error::{Error, Result};

fn check_extent(field: &PixelField) -> Result<()> {
    if field.width() < 2 || field.height() < 2 {
        return Err(Error::Degenerate {
            width: field.width(),
            height: field.height(),
            reason: "spatial gradient needs width and height >= 2",
        });
    }
    Ok(())
}

/// Forward differences per channel; the last column of `dx` and the last row of
/// `dy` are zero.
pub fn spatial_gradient(field: &PixelField) -> Result<(PixelField, PixelField)> {
    check_extent(field)?;
    let (w, h, c) = field.shape();
    let src = field.data();
    let mut dx = vec![0.0; src.len()];
    let mut dy = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let i = field.index(x, y, 0);
            for k in 0..c {
                if x + 1 < w {
                    dx[i + k] = src[i + c + k] - src[i + k];
                }
                if y + 1 < h {
                    dy[i + k] = src[i + w * c + k] - src[i + k];
                }
            }
        }
    }
    Ok((
        PixelField::from_raw(w, h, c, dx),
        PixelField::from_raw(w, h, c, dy),
    ))
}

/// Transpose of [`spatial_gradient`]: maps `(gx, gy)` to `∇ᵀ(gx, gy)`, the
/// negative divergence with matching boundary handling.
pub fn spatial_gradient_adjoint(gx: &PixelField, gy: &PixelField) -> Result<PixelField> {
    gx.check_same_shape(gy, "spatial_gradient_adjoint")?;
    check_extent(gx)?;
    let (w, h, c) = gx.shape();
    let (ax, ay) = (gx.data(), gy.data());
    let mut out = vec![0.0; ax.len()];
    for y in 0..h {
        for x in 0..w {
            let i = gx.index(x, y, 0);
            for k in 0..c {
                let mut v = 0.0;
                if x + 1 < w {
                    v -= ax[i + k];
                }
                if x >= 1 {
                    v += ax[i - c + k];
                }
                if y + 1 < h {
                    v -= ay[i + k];
                }
                if y >= 1 {
                    v += ay[i - w * c + k];
                }
                out[i + k] = v;
            }
        }
    }
    Ok(PixelField::from_raw(w, h, c, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_has_zero_gradient() {
        let f = PixelField::filled(4, 3, 2, 0.7);
        let (dx, dy) = spatial_gradient(&f).unwrap();
        assert!(dx.data().iter().chain(dy.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn horizontal_ramp() {
        let f = PixelField::from_fn(5, 3, 1, |x, _, _| x as f64 * 0.1);
        let (dx, dy) = spatial_gradient(&f).unwrap();
        for y in 0..3 {
            for x in 0..5 {
                let expected = if x < 4 { 0.1 } else { 0.0 };
                assert!((dx.get(x, y, 0) - expected).abs() < 1e-15);
                assert_eq!(dy.get(x, y, 0), 0.0);
            }
        }
    }

    #[test]
    fn one_pixel_extent_rejected() {
        assert!(spatial_gradient(&PixelField::zeros(1, 5, 1)).is_err());
        assert!(spatial_gradient(&PixelField::zeros(5, 1, 1)).is_err());
    }
}
