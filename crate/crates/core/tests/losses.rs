use nfed::imaging::{MatteMask, PixelField};
use nfed::losses::{
    albedo_smoothness, bws_penalty, ebgan_losses, l2_map_loss, shading_smoothness, total_objective, LossPart,
    LossWeights, Term,
};
use proptest::prelude::*;

const W: usize = 4;
const H: usize = 4;

fn field() -> impl Strategy<Value = PixelField> {
    prop::collection::vec(-1.0f64..1.0, W * H * 3).prop_map(|d| PixelField::new(W, H, 3, d).unwrap())
}

fn matte() -> impl Strategy<Value = MatteMask> {
    prop::collection::vec(prop_oneof![Just(1.0), 0.1f64..=1.0], W * H).prop_map(|a| MatteMask::new(W, H, a).unwrap())
}

fn central(f: impl Fn(&PixelField) -> f64, x: &PixelField, i: usize) -> f64 {
    let h = 1e-6;
    let (mut up, mut down) = (x.clone(), x.clone());
    up.data_mut()[i] += h;
    down.data_mut()[i] -= h;
    (f(&up) - f(&down)) / (2.0 * h)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1e-2)
}

proptest! {
    #[test]
    fn map_losses_vanish_at_minimizer(x in field(), m in matte(), c in -1.0f64..1.0) {
        prop_assert_eq!(l2_map_loss(&x, &x, Some(&m)).unwrap().value, 0.0);
        let flat = PixelField::filled(W, H, 3, c);
        prop_assert_eq!(albedo_smoothness(&flat, Some(&m), 1e-3).unwrap().value, 0.0);
        prop_assert_eq!(shading_smoothness(&flat, Some(&m)).unwrap().value, 0.0);
        let white = PixelField::filled(W, H, 3, 0.75);
        prop_assert!(bws_penalty(&[&white], &[&m], 0.75).unwrap().value <= 1e-30);
    }

    #[test]
    fn map_losses_are_nonnegative_with_matching_gradients(x in field(), t in field(), m in matte(), i in 0usize..W * H * 3) {
        let l2 = |p: &PixelField| l2_map_loss(p, &t, Some(&m)).unwrap().value;
        let loss = l2_map_loss(&x, &t, Some(&m)).unwrap();
        prop_assert!(loss.value >= 0.0);
        prop_assert!(close(loss.gradient.data()[i], central(l2, &x, i)));

        let ss = |p: &PixelField| shading_smoothness(p, Some(&m)).unwrap().value;
        let loss = shading_smoothness(&x, Some(&m)).unwrap();
        prop_assert!(loss.value >= 0.0);
        prop_assert!(close(loss.gradient.data()[i], central(ss, &x, i)));

        // A wide Charbonnier scale keeps the check away from the kink.
        let asm = |p: &PixelField| albedo_smoothness(p, Some(&m), 0.5).unwrap().value;
        let loss = albedo_smoothness(&x, Some(&m), 0.5).unwrap();
        prop_assert!(loss.value >= 0.0);
        prop_assert!(close(loss.gradient.data()[i], central(asm, &x, i)));
    }

    #[test]
    fn bws_ignores_batch_and_pixel_order(a in field(), b in field(), ma in matte(), mb in matte(), shift in 0usize..W * H) {
        let one = bws_penalty(&[&a, &b], &[&ma, &mb], 0.75).unwrap();
        let two = bws_penalty(&[&b, &a], &[&mb, &ma], 0.75).unwrap();
        prop_assert!((one.value - two.value).abs() <= 1e-12);

        let n = W * H;
        let rolled = PixelField::new(W, H, 3, (0..n * 3).map(|k| a.data()[((k / 3 + shift) % n) * 3 + k % 3]).collect()).unwrap();
        let rolled_mask = MatteMask::new(W, H, (0..n).map(|p| ma.alpha()[(p + shift) % n]).collect()).unwrap();
        let three = bws_penalty(&[&rolled, &b], &[&rolled_mask, &mb], 0.75).unwrap();
        prop_assert!((one.value - three.value).abs() <= 1e-12);
    }

    #[test]
    fn total_is_linear_in_weights(values in prop::collection::vec(0.0f64..5.0, Term::ALL.len()), s in 0.0f64..4.0) {
        let parts: Vec<LossPart> = Term::ALL.iter().zip(&values).map(|(t, v)| LossPart::new(*t, *v)).collect();
        let w = LossWeights::default();
        let base = total_objective(&parts, &w).unwrap().total;
        let scaled = total_objective(&parts, &w.scaled(s)).unwrap().total;
        prop_assert!((scaled - s * base).abs() <= 1e-12 * (1.0 + base.abs()));
        let direct: f64 = Term::ALL.iter().zip(&values).map(|(t, v)| w.weight(*t) * v).sum();
        prop_assert!((base - direct).abs() <= 1e-12 * (1.0 + base.abs()));
    }
}

#[test]
fn ebgan_at_perfect_discriminator() {
    let x = PixelField::filled(2, 2, 3, 0.3);
    let out = ebgan_losses(&x, &x, &x, &x, 0.1).unwrap();
    assert_eq!(out.g_loss, 0.0);
    assert_eq!(out.d_real, 0.0);
    // The hinge is active when D(fake) is below the margin.
    assert!(out.hinge_active);
    assert!((out.d_loss - 0.1).abs() < 1e-15);
}

#[test]
fn weights_reject_negative_values() {
    let w = LossWeights { w_mask: -1.0, ..LossWeights::default() };
    assert!(w.validate().is_err());
    let w = LossWeights { charbonnier_delta: 0.0, ..LossWeights::default() };
    assert!(w.validate().is_err());
}
