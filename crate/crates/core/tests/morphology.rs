use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segbias_core::mask::{
    boundary_band, dilate, erode, harmonic_deform, open, signed_distance, BinaryMask, StructuringElement,
};

fn brute_erode(m: &BinaryMask, r: usize) -> BinaryMask {
    let se = StructuringElement::disk(r);
    let (w, h) = m.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        se.offsets().iter().all(|&(dx, dy)| {
            let (xx, yy) = (x as isize + dx, y as isize + dy);
            xx >= 0 && yy >= 0 && xx < w as isize && yy < h as isize && m.get(xx as usize, yy as usize)
        })
    })
}

fn brute_dilate(m: &BinaryMask, r: usize) -> BinaryMask {
    let se = StructuringElement::disk(r);
    let (w, h) = m.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        se.offsets().iter().any(|&(dx, dy)| {
            let (xx, yy) = (x as isize + dx, y as isize + dy);
            xx >= 0 && yy >= 0 && xx < w as isize && yy < h as isize && m.get(xx as usize, yy as usize)
        })
    })
}

fn brute_signed_distance(m: &BinaryMask) -> Vec<f64> {
    let (w, h) = m.dims();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let fg = m.get(x, y);
            let mut best = usize::MAX;
            for yy in 0..h {
                for xx in 0..w {
                    if m.get(xx, yy) != fg {
                        let d = x.abs_diff(xx).pow(2) + y.abs_diff(yy).pow(2);
                        best = best.min(d);
                    }
                }
            }
            let d = (best as f64).sqrt();
            out.push(if fg { d } else { -d });
        }
    }
    out
}

fn random_mask(rng: &mut ChaCha8Rng, max: usize) -> BinaryMask {
    let w = rng.random_range(1..=max);
    let h = rng.random_range(1..=max);
    let density = rng.random_range(0.05..0.95);
    BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density))
}

fn disk_mask(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r)
}

#[test]
fn morphology_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let m = random_mask(&mut rng, 32);
        for r in 0..=3 {
            assert_eq!(erode(&m, r), brute_erode(&m, r));
            assert_eq!(dilate(&m, r), brute_dilate(&m, r));
            if r >= 1 {
                let (d, e) = (brute_dilate(&m, r), brute_erode(&m, r));
                let band = BinaryMask::from_fn(m.width(), m.height(), |x, y| d.get(x, y) && !e.get(x, y));
                assert_eq!(boundary_band(&m, r), band);
            }
        }
        if !m.is_degenerate() {
            let phi = signed_distance(&m).unwrap();
            assert_eq!(phi.values(), brute_signed_distance(&m).as_slice());
        }
    }
}

#[test]
fn documented_examples() {
    let block = BinaryMask::from_fn(5, 5, |x, y| (1..4).contains(&x) && (1..4).contains(&y));
    assert_eq!(erode(&block, 1).count(), 1);
    assert!(erode(&block, 1).get(2, 2));

    let dot = BinaryMask::from_fn(5, 5, |x, y| x == 2 && y == 2);
    let plus = dilate(&dot, 1);
    assert_eq!(plus.count(), 5);
    for (x, y) in [(2, 1), (1, 2), (2, 2), (3, 2), (2, 3)] {
        assert!(plus.get(x, y));
    }

    assert_eq!(boundary_band(&BinaryMask::zeros(7, 7), 2).count(), 0);

    let center = BinaryMask::from_fn(3, 3, |x, y| x == 1 && y == 1);
    let phi = signed_distance(&center).unwrap();
    assert_eq!(phi.get(1, 1), 1.0);
    assert_eq!(phi.get(0, 0), -(2.0f64.sqrt()));

    let checker = BinaryMask::from_fn(2, 2, |x, y| (x + y) % 2 == 0);
    let phi = signed_distance(&checker).unwrap();
    for y in 0..2 {
        for x in 0..2 {
            assert_eq!(phi.get(x, y).abs(), 1.0);
            assert_eq!(phi.get(x, y) > 0.0, checker.get(x, y));
        }
    }

    let disk = disk_mask(10, 10, 4.5, 4.5, 3.5);
    let phi = signed_distance(&disk).unwrap();
    for (a, b) in phi.values().iter().zip(brute_signed_distance(&disk)) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn harmonic_deformation_stays_near_boundary() {
    let disk = disk_mask(32, 32, 15.5, 15.5, 9.0);
    let out = harmonic_deform(&disk, 2.0, 3, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let again = harmonic_deform(&disk, 2.0, 3, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    assert_eq!(out, again);
    assert_ne!(out, disk);

    // boundary pixels: foreground with a background 4-neighbor (or vice versa)
    let boundary = |m: &BinaryMask| {
        let mut pts = Vec::new();
        for y in 0..32usize {
            for x in 0..32usize {
                let v = m.get(x, y);
                let nb = [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)];
                if nb.iter().any(|&(a, b)| a < 32 && b < 32 && m.get(a, b) != v) {
                    pts.push((x as f64, y as f64));
                }
            }
        }
        pts
    };
    let before = boundary(&disk);
    for (x, y) in boundary(&out) {
        let d = before
            .iter()
            .map(|(a, b)| ((a - x).powi(2) + (b - y).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(d <= 3.0, "boundary pixel ({x}, {y}) is {d} from the input boundary");
    }

    assert_eq!(
        harmonic_deform(&disk, 0.0, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap(),
        disk
    );
    assert!(harmonic_deform(&BinaryMask::ones(8, 8), 1.0, 3, &mut ChaCha8Rng::seed_from_u64(9)).is_err());
}

fn mask_strategy() -> impl Strategy<Value = BinaryMask> {
    (1usize..20, 1usize..20)
        .prop_flat_map(|(w, h)| (Just(w), Just(h), prop::collection::vec(0u8..2, w * h)))
        .prop_map(|(w, h, data)| BinaryMask::from_vec(w, h, data).unwrap())
}

proptest! {
    #[test]
    fn erosion_and_dilation_bracket_the_mask(m in mask_strategy(), r in 0usize..4) {
        let e = erode(&m, r);
        let d = dilate(&m, r);
        prop_assert!(e.is_subset_of(&m));
        prop_assert!(m.is_subset_of(&d));
    }

    // Out-of-frame pixels count as background for both operators, so duality
    // holds when the outer ring of width r is background.
    #[test]
    fn duality_away_from_the_frame(m in mask_strategy(), r in 0usize..4) {
        let (w, h) = m.dims();
        let framed = BinaryMask::from_fn(w, h, |x, y| {
            x >= r && y >= r && x + r < w && y + r < h && m.get(x, y)
        });
        prop_assert_eq!(erode(&framed, r), dilate(&framed.complement(), r).complement());
    }

    #[test]
    fn opening_is_idempotent(m in mask_strategy(), r in 0usize..4) {
        let o = open(&m, r);
        prop_assert_eq!(open(&o, r), o);
    }

    #[test]
    fn band_is_dilation_minus_erosion(m in mask_strategy(), w in 1usize..4) {
        let expected = dilate(&m, w).difference(&erode(&m, w));
        prop_assert_eq!(boundary_band(&m, w), expected);
    }
}
