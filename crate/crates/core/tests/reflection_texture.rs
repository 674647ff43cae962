use proptest::prelude::*;
use stillwater::raster::{gaussian_blur, ImageBuffer, Rect, WaterMask};
use stillwater::reflect::{
    blur_sigma, build_reflection_texture, inpaint, stitch_patches, turbulence_score, FlipBlurPredictor,
    MirrorBlurPredictor, ReflectionPredictor, ReflectionTexture, TextureConfig,
};

/// Sum of squared differences between horizontal and vertical neighbours.
fn gradient_energy(img: &ImageBuffer<f64>) -> f64 {
    let (w, h) = img.dims();
    let mut e = 0.0;
    for y in 0..h {
        for x in 0..w {
            let p = img.pixel(x, y);
            if x + 1 < w {
                let q = img.pixel(x + 1, y);
                e += (0..3).map(|c| (p[c] - q[c]).powi(2)).sum::<f64>();
            }
            if y + 1 < h {
                let q = img.pixel(x, y + 1);
                e += (0..3).map(|c| (p[c] - q[c]).powi(2)).sum::<f64>();
            }
        }
    }
    e
}

fn hash01(x: usize, y: usize, seed: u64) -> f64 {
    let mut z = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F) ^ seed;
    z ^= z >> 31;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 29;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

#[test]
fn constant_patch_flips_to_itself() {
    let patch = ImageBuffer::<f64>::filled(224, 224, [0.2, 0.4, 0.6]);
    let mask = WaterMask::filled(224, 224, 1.0);
    assert_eq!(turbulence_score(&patch, &mask), 0.0);
    assert_eq!(FlipBlurPredictor.predict(&patch, &mask), patch);
}

#[test]
fn half_white_patch_is_flipped() {
    let patch = ImageBuffer::<f64>::from_fn(224, 224, |_, y| if y < 112 { [1.0; 3] } else { [0.0; 3] });
    let mask = WaterMask::filled(224, 224, 1.0);
    let out = FlipBlurPredictor.predict(&patch, &mask);
    let sigma = blur_sigma(turbulence_score(&patch, &mask));
    assert!(sigma < 1.0, "calm patch got sigma {sigma}");
    for x in [0, 100, 223] {
        assert!(out.pixel(x, 10)[0] < 0.01);
        assert!(out.pixel(x, 213)[0] > 0.99);
    }
}

#[test]
fn noisy_patch_loses_high_frequencies() {
    let patch = ImageBuffer::<f64>::from_fn(224, 224, |x, y| [hash01(x, y, 1), hash01(x, y, 2), hash01(x, y, 3)]);
    let mask = WaterMask::filled(224, 224, 1.0);
    assert!(blur_sigma(turbulence_score(&patch, &mask)) > 1.0);
    for pred in [&FlipBlurPredictor as &dyn ReflectionPredictor<f64>, &MirrorBlurPredictor] {
        let out = pred.predict(&patch, &mask);
        assert!(gradient_energy(&out) < gradient_energy(&patch));
    }
}

#[test]
fn stitch_of_constants_is_constant() {
    let rects = [Rect::new(0, 0, 60, 40), Rect::new(30, 0, 90, 40), Rect::new(0, 20, 90, 50)];
    let patches: Vec<_> = rects
        .iter()
        .map(|&r| (r, ImageBuffer::<f64>::filled(r.width(), r.height(), [0.3, 0.5, 0.9])))
        .collect();
    let out = stitch_patches(&patches, 90, 50).unwrap();
    for v in out.data().chunks(3) {
        assert!((v[0] - 0.3).abs() < 1e-12 && (v[1] - 0.5).abs() < 1e-12 && (v[2] - 0.9).abs() < 1e-12);
    }
}

#[test]
fn two_patch_blend_crosses_half_at_the_midline() {
    // Patches [0, 64) and [32, 96); equal weights where they are equidistant from their centres, x = 48.
    let a = (Rect::new(0, 0, 64, 8), ImageBuffer::<f64>::filled(64, 8, [0.0; 3]));
    let b = (Rect::new(32, 0, 96, 8), ImageBuffer::<f64>::filled(64, 8, [1.0; 3]));
    let out = stitch_patches(&[a, b], 96, 8).unwrap();
    let row: Vec<f64> = (0..96).map(|x| out.pixel(x, 4)[0]).collect();
    assert!(row[47] < 0.5 && row[48] > 0.5, "{} {}", row[47], row[48]);
    assert!((row[47] + row[48] - 1.0).abs() < 1e-12);
    assert!(row.windows(2).all(|w| w[0] <= w[1] + 1e-15));
}

#[test]
fn single_full_patch_is_returned_unchanged() {
    let img = ImageBuffer::<f64>::from_fn(30, 20, |x, y| [hash01(x, y, 4), 0.5, hash01(x, y, 5)]);
    let out = stitch_patches(&[(Rect::new(0, 0, 30, 20), img.clone())], 30, 20).unwrap();
    for (a, b) in out.data().iter().zip(img.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn all_water_inpaint_is_identity() {
    let img = ImageBuffer::<f64>::from_fn(20, 20, |x, y| [hash01(x, y, 6); 3]);
    let tex = ReflectionTexture::from_image(img.clone());
    assert_eq!(inpaint(&tex, 5).unwrap().image, img);
}

#[test]
fn constant_water_fills_hole_exactly() {
    let (w, h) = (40, 30);
    let img = ImageBuffer::<f64>::from_fn(w, h, |x, y| {
        if (10..25).contains(&x) && (5..20).contains(&y) {
            [0.0; 3]
        } else {
            [0.25, 0.5, 0.75]
        }
    });
    let valid = (0..w * h).map(|i| !((10..25).contains(&(i % w)) && (5..20).contains(&(i / w)))).collect();
    let out = inpaint(&ReflectionTexture { image: img, valid }, 5).unwrap();
    for v in out.image.data().chunks(3) {
        assert_eq!(v, [0.25, 0.5, 0.75]);
    }
}

#[test]
fn gradient_fill_stays_bounded_and_monotone() {
    // Known top half holds a horizontal ramp; the bottom half is unknown.
    let (w, h) = (64, 48);
    let ramp = |x: usize| 0.2 + 0.6 * x as f64 / (w - 1) as f64;
    let img = ImageBuffer::<f64>::from_fn(w, h, |x, y| if y < 24 { [ramp(x); 3] } else { [0.0; 3] });
    let valid = (0..w * h).map(|i| i / w < 24).collect();
    let out = inpaint(&ReflectionTexture { image: img, valid }, 5).unwrap();
    let (lo, hi) = (ramp(0), ramp(w - 1));
    let tol = 0.05 * (hi - lo);
    for y in 24..h {
        let row: Vec<f64> = (0..w).map(|x| out.image.pixel(x, y)[0]).collect();
        assert!(row.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
        assert!(row.windows(2).all(|p| p[1] >= p[0] - tol), "row {y} not monotone");
    }
    // Along the march (downwards) each column moves in one direction only.
    for x in 0..w {
        let col: Vec<f64> = (24..h).map(|y| out.image.pixel(x, y)[0]).collect();
        let up = col.windows(2).all(|p| p[1] >= p[0] - tol);
        let down = col.windows(2).all(|p| p[1] <= p[0] + tol);
        assert!(up || down, "column {x} oscillates");
    }
}

#[test]
fn calm_mirror_scene_reproduces_flipped_content() {
    let (w, h, horizon) = (256, 256, 128);
    let above = |x: usize, y: usize| {
        let (u, v) = (x as f64 / w as f64, y as f64 / horizon as f64);
        [0.3 + 0.4 * u, 0.2 + 0.5 * v, 0.6 - 0.3 * u * v]
    };
    let img = ImageBuffer::<f64>::from_fn(w, h, |x, y| if y < horizon { above(x, y) } else { above(x, 2 * horizon - 1 - y) });
    let mask = WaterMask::from_fn(w, h, |_, y| if y >= horizon { 1.0 } else { 0.0 });
    let tex = build_reflection_texture(&img, &mask, &MirrorBlurPredictor, &TextureConfig::default()).unwrap();
    let mut worst = 0.0f64;
    // Stay clear of the horizon, where the masked-out sky darkens the blur.
    for y in horizon + 16..h {
        for x in 0..w {
            let want = above(x, 2 * horizon - 1 - y);
            let got = tex.image.pixel(x, y);
            for c in 0..3 {
                worst = worst.max((got[c] - want[c]).abs());
            }
        }
    }
    assert!(worst < 0.02, "max deviation {worst}");
}

#[test]
fn all_water_constant_image_gives_constant_texture() {
    let img = ImageBuffer::<f64>::filled(300, 200, [0.1, 0.4, 0.5]);
    let tex = build_reflection_texture(&img, &WaterMask::filled(300, 200, 1.0), &FlipBlurPredictor, &TextureConfig::default()).unwrap();
    for v in tex.image.data().chunks(3) {
        assert!((v[0] - 0.1).abs() < 1e-9 && (v[1] - 0.4).abs() < 1e-9 && (v[2] - 0.5).abs() < 1e-9);
    }
}

#[test]
fn partial_water_is_filled_smoothly() {
    let (w, h) = (240, 240);
    let water_from = h - 72; // 30% of the rows
    let img = ImageBuffer::<f64>::from_fn(w, h, |x, y| {
        if y >= water_from {
            let s = 0.3 + 0.2 * (x as f64 / 40.0).sin() * (y as f64 / 30.0).cos();
            [s * 0.5, s, s * 1.2]
        } else {
            [hash01(x, y, 7), hash01(x, y, 8), hash01(x, y, 9)]
        }
    });
    let mask = WaterMask::from_fn(w, h, |_, y| if y >= water_from { 1.0 } else { 0.0 });
    let tex = build_reflection_texture(&img, &mask, &FlipBlurPredictor, &TextureConfig::default()).unwrap();
    for y in 1..water_from - 1 {
        for x in 1..w - 1 {
            let p = tex.image.pixel(x, y);
            let n = [tex.image.pixel(x - 1, y), tex.image.pixel(x + 1, y), tex.image.pixel(x, y - 1), tex.image.pixel(x, y + 1)];
            for c in 0..3 {
                let mean = n.iter().map(|q| q[c]).sum::<f64>() / 4.0;
                assert!((p[c] - mean).abs() <= 0.2, "({x},{y})");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn texture_in_range_and_water_kept_by_inpaint(seed in 0u64..1000, water_rows in 10usize..60) {
        let (w, h) = (80, 64);
        let img = ImageBuffer::<f64>::from_fn(w, h, |x, y| [hash01(x, y, seed), hash01(x, y, seed + 1), hash01(x, y, seed + 2)]);
        let mask = WaterMask::from_fn(w, h, |_, y| if y >= h - water_rows { 1.0 } else { 0.0 });
        let cfg = TextureConfig { patch: 32, ..TextureConfig::default() };
        let tex = build_reflection_texture(&img, &mask, &FlipBlurPredictor, &cfg).unwrap();
        prop_assert_eq!(tex.dims(), (w, h));
        prop_assert!(tex.image.data().iter().all(|v| (0.0..=1.0).contains(v)));

        let valid: Vec<bool> = (0..w * h).map(|i| i / w >= h - water_rows).collect();
        let before = ReflectionTexture { image: img.clone(), valid: valid.clone() };
        let after = inpaint(&before, 5).unwrap();
        for (i, &v) in valid.iter().enumerate() {
            if v {
                prop_assert_eq!(after.image.pixel(i % w, i / w), img.pixel(i % w, i / w));
            }
        }
    }

    #[test]
    fn stitch_is_a_convex_combination(a in 0.0f64..1.0, b in 0.0f64..1.0, off in 1usize..40) {
        let p = (Rect::new(0, 0, 40, 10), ImageBuffer::<f64>::filled(40, 10, [a; 3]));
        let q = (Rect::new(off, 0, off + 40, 10), ImageBuffer::<f64>::filled(40, 10, [b; 3]));
        let out = stitch_patches(&[p, q], off + 40, 10).unwrap();
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(out.data().iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }
}

#[test]
fn blur_is_applied_with_the_mapped_sigma() {
    let patch = ImageBuffer::<f64>::from_fn(64, 64, |x, y| [hash01(x, y, 10); 3]);
    let mask = WaterMask::filled(64, 64, 1.0);
    let sigma = blur_sigma(turbulence_score(&patch, &mask));
    let expected = gaussian_blur(&patch.flip_vertical(), sigma);
    assert_eq!(FlipBlurPredictor.predict(&patch, &mask), expected);
}
