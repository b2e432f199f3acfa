use nfed::imaging::{MatteMask, NormalField};
use nfed::shading::{
    estimate_light, sh_basis, shade_forward, shade_forward_quadratic, ShCoeffs, C4, SH_BANDS, SH_LEN,
};
use proptest::prelude::*;

fn normals(count: usize) -> impl Strategy<Value = NormalField> {
    prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), count).prop_filter_map("degenerate", move |vs| {
        let unit: Option<Vec<[f64; 3]>> = vs
            .into_iter()
            .map(|v| {
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                (n > 1e-2).then(|| v.map(|x| x / n))
            })
            .collect();
        NormalField::new(count, 1, unit?).ok()
    })
}

fn light() -> impl Strategy<Value = ShCoeffs> {
    prop::array::uniform27(-1.0f64..1.0).prop_map(|c| ShCoeffs::new(c).unwrap())
}

proptest! {
    #[test]
    fn shading_is_linear_in_light(n in normals(12), l1 in light(), l2 in light(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mix = l1.scale(a).add(&l2.scale(b));
        let lhs = shade_forward(&n, &mix, None).unwrap();
        let s1 = shade_forward(&n, &l1, None).unwrap();
        let s2 = shade_forward(&n, &l2, None).unwrap();
        let rhs = s1.zip_map(&s2, |p, q| a * p + b * q).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12);
    }

    #[test]
    fn ambient_light_gives_constant_shading(n in normals(12), amb in prop::array::uniform3(-2.0f64..2.0)) {
        let mut c = [0.0; SH_LEN];
        for k in 0..3 {
            c[k * SH_BANDS] = amb[k];
        }
        let s = shade_forward(&n, &ShCoeffs::new(c).unwrap(), None).unwrap();
        for (i, v) in s.data().iter().enumerate() {
            prop_assert!((v - C4 * amb[i % 3]).abs() <= 1e-15);
        }
    }

    #[test]
    fn quadratic_form_matches_basis_sum(n in normals(12), l in light()) {
        let quad = shade_forward_quadratic(&n, &l);
        for (p, v) in n.vectors().iter().enumerate() {
            let b = sh_basis(*v).unwrap();
            for c in 0..3 {
                let direct: f64 = b.iter().zip(l.channel(c)).map(|(x, y)| x * y).sum();
                prop_assert!((quad.data()[p * 3 + c] - direct).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn estimate_inverts_shading(n in normals(40), l in light()) {
        let mask = MatteMask::full(40, 1);
        let s = shade_forward(&n, &l, None).unwrap();
        match estimate_light(&s, &n, &mask) {
            Ok(est) => prop_assert!(est.relative_error(&l) <= 1e-8, "rel err {}", est.relative_error(&l)),
            // Random normals can be nearly degenerate for the nine-term basis.
            Err(nfed::Error::RankDeficient { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}

#[test]
fn known_basis_values() {
    let b = sh_basis([0.0, 0.0, 1.0]).unwrap();
    assert!(b[2] > 0.0 && b[1] == 0.0 && b[3] == 0.0);
    assert!(sh_basis([0.0, 0.0, 2.0]).is_err());
}

#[test]
fn rejects_wrong_coefficient_count() {
    assert!(ShCoeffs::from_slice(&[0.0; 26]).is_err());
    assert!(ShCoeffs::from_slice(&[0.0; 27]).is_ok());
}

#[test]
fn masked_out_pixels_are_zero() {
    let n = NormalField::frontal(3, 1);
    let mask = MatteMask::new(3, 1, vec![1.0, 0.0, 0.5]).unwrap();
    let s = shade_forward(&n, &ShCoeffs::ambient(1.0), Some(&mask)).unwrap();
    assert!(s.data()[3..6].iter().all(|v| *v == 0.0));
    assert!(s.data()[0] > 0.0 && s.data()[6] > 0.0);
}
