use hdrfuse::image::Image;
use hdrfuse::radiometry::{
    gamma_map, make_blur_target, mu_law_tonemap, normalize_hdr, percentile, HdrImage, LdrImage,
};
use proptest::prelude::*;

fn img(h: usize, w: usize, vals: &[f64]) -> Image<f64> {
    Image::from_fn(h, w, 3, |c, y, x| vals[(c * h * w + y * w + x) % vals.len()])
}

proptest! {
    #[test]
    fn gamma_map_scales_inversely_with_time(v in 0.0f64..=1.0, t in 0.01f64..100.0, g in 1.1f64..4.0) {
        let x = LdrImage::new(Image::filled(1, 1, 1, v), t).unwrap();
        let h = gamma_map(&x, g).unwrap().0.get(0, 0, 0);
        prop_assert!((h * t - v.powf(g)).abs() <= 1e-12 * v.powf(g).max(1e-300) + 1e-300);
        prop_assert!(h >= 0.0);
    }

    #[test]
    fn gamma_map_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, t in 0.01f64..10.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let m = |v| gamma_map(&LdrImage::new(Image::filled(1, 1, 1, v), t).unwrap(), 2.2).unwrap().0.get(0, 0, 0);
        prop_assert!(m(lo) <= m(hi));
    }

    #[test]
    fn mu_law_maps_unit_interval_monotonically(a in 0.0f64..=1.0, b in 0.0f64..=1.0, mu in 1.0f64..1e4) {
        let t = |v| mu_law_tonemap(&HdrImage(Image::filled(1, 1, 1, v)), mu).unwrap().0.get(0, 0, 0);
        let (ta, tb) = (t(a), t(b));
        prop_assert!((0.0..=1.0 + 1e-15).contains(&ta));
        if a <= b {
            prop_assert!(ta <= tb);
        }
    }

    #[test]
    fn blur_commutes_with_flips(vals in prop::collection::vec(0.0f64..4.0, 1..64), h in 5usize..12, w in 5usize..12) {
        let y = HdrImage(img(h, w, &vals));
        let flip_v = |i: &Image<f64>| Image::from_fn(h, w, 3, |c, yy, x| i.get(c, h - 1 - yy, x));
        let b = make_blur_target(&y, 1.0).unwrap().0;
        let bh = make_blur_target(&HdrImage(y.0.flip_horizontal()), 1.0).unwrap().0;
        prop_assert_eq!(bh, b.flip_horizontal());
        let bv = make_blur_target(&HdrImage(flip_v(&y.0)), 1.0).unwrap().0;
        prop_assert_eq!(bv, flip_v(&b));
    }

    #[test]
    fn blur_stays_within_input_range(vals in prop::collection::vec(0.0f64..4.0, 1..64)) {
        let y = HdrImage(img(7, 9, &vals));
        let b = make_blur_target(&y, 1.3).unwrap().0;
        prop_assert!(b.min_value() >= y.0.min_value() - 1e-12);
        prop_assert!(b.max_value() <= y.0.max_value() + 1e-12);
    }

    #[test]
    fn normalized_hdr_lies_in_unit_range(vals in prop::collection::vec(0.0f64..1e4, 1..200)) {
        let raw = img(6, 7, &vals);
        let n = normalize_hdr(&raw).unwrap();
        prop_assert!(n.image.0.data().iter().all(|v| (0.0..=1.0).contains(v)));
        for (r, o) in raw.data().iter().zip(n.image.0.data()) {
            prop_assert!((o - (r * n.scale).min(1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn percentile_matches_sorted_interpolation(mut vals in prop::collection::vec(-1e3f64..1e3, 1..100), q in 0.0f64..=1.0) {
        let got = percentile(&vals, q).unwrap();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pos = q * (vals.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(vals.len() - 1);
        let want = vals[lo] + (vals[hi] - vals[lo]) * (pos - lo as f64);
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
    }
}

#[test]
fn blur_of_an_impulse_is_the_separable_kernel() {
    let mut y = Image::<f64>::zeros(9, 9, 1);
    y.set(0, 4, 4, 1.0);
    let b = make_blur_target(&HdrImage(y), 1.0).unwrap().0;
    let k: Vec<f64> = (-2..=2).map(|d: i32| (-(d * d) as f64 / 2.0).exp()).collect();
    let s: f64 = k.iter().sum();
    for dy in 0..5 {
        for dx in 0..5 {
            let want = k[dy] * k[dx] / (s * s);
            assert!((b.get(0, 2 + dy, 2 + dx) - want).abs() < 1e-15);
        }
    }
    assert!((b.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn normalize_hits_the_percentile() {
    let raw = Image::<f64>::from_fn(10, 100, 1, |_, y, x| (y * 100 + x) as f64);
    let n = normalize_hdr(&raw).unwrap();
    let p = percentile(raw.data(), 0.999).unwrap();
    assert!((n.scale - 1.0 / p).abs() < 1e-15);
    assert_eq!(n.image.0.max_value(), 1.0);
    assert!(normalize_hdr(&Image::filled(2, 2, 1, -1.0)).is_err());
}

#[test]
fn f32_and_f64_agree() {
    let v = 0.37;
    let a = gamma_map(&LdrImage::new(Image::<f32>::filled(1, 1, 1, v as f32), 0.5).unwrap(), 2.2).unwrap();
    let b = gamma_map(&LdrImage::new(Image::<f64>::filled(1, 1, 1, v), 0.5).unwrap(), 2.2).unwrap();
    assert!((a.0.get(0, 0, 0) as f64 - b.0.get(0, 0, 0)).abs() < 1e-6);
}
