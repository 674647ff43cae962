use proptest::prelude::*;
use stillwater::raster::{
    hsv_to_rgb, load_image, load_mask, resize_bilinear, rgb_to_hsv, save_image, save_mask, water_bbox, ImageBuffer,
    ImageError, Rect, WaterMask,
};

fn write_rgb_png(path: &std::path::Path, w: u32, h: u32, px: &[u8]) {
    image::save_buffer_with_format(path, px, w, h, image::ColorType::Rgb8, image::ImageFormat::Png).unwrap();
}

#[test]
fn load_maps_bytes_linearly() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("red.png");
    write_rgb_png(&p, 1, 1, &[255, 0, 0]);
    let img: ImageBuffer<f64> = load_image(&p).unwrap();
    assert_eq!(img.pixel(0, 0), [1.0, 0.0, 0.0]);

    let p = dir.path().join("black.png");
    write_rgb_png(&p, 1, 1, &[0, 0, 0]);
    assert_eq!(load_image::<f64>(&p).unwrap().pixel(0, 0), [0.0; 3]);

    let p = dir.path().join("grey.png");
    let mut px = vec![0u8; 12];
    px[..3].copy_from_slice(&[128, 128, 128]);
    write_rgb_png(&p, 2, 2, &px);
    let img: ImageBuffer<f64> = load_image(&p).unwrap();
    assert!((img.pixel(0, 0)[0] - 0.50196).abs() < 1e-5);
}

#[test]
fn load_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_image::<f64>(dir.path().join("nope.png")), Err(ImageError::Io { .. })));
    let bogus = dir.path().join("bogus.png");
    std::fs::write(&bogus, b"not an image").unwrap();
    assert!(load_image::<f64>(&bogus).is_err());
    let bmp = dir.path().join("x.bmp");
    let mut header = b"BM".to_vec();
    header.resize(64, 0);
    std::fs::write(&bmp, header).unwrap();
    assert!(matches!(load_image::<f64>(&bmp), Err(ImageError::UnsupportedFormat { .. })));
}

#[test]
fn zero_dimension_rejected() {
    assert!(matches!(
        ImageBuffer::<f64>::from_raw(0, 3, vec![]),
        Err(ImageError::ZeroDimension { .. })
    ));
}

#[test]
fn resize_examples() {
    let c = ImageBuffer::<f64>::filled(7, 5, [0.3; 3]);
    for (w, h) in [(1, 1), (13, 2), (64, 64)] {
        assert!(resize_bilinear(&c, w, h).data().iter().all(|&v| (v - 0.3).abs() < 1e-15));
    }
    let img = ImageBuffer::<f64>::from_fn(9, 4, |x, y| [x as f64 / 9.0, y as f64 / 4.0, 0.5]);
    assert_eq!(resize_bilinear(&img, 9, 4), img);

    let two = ImageBuffer::<f64>::from_raw(2, 1, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
    let up = resize_bilinear(&two, 4, 1);
    let row: Vec<f64> = (0..4).map(|x| up.pixel(x, 0)[0]).collect();
    // Pixel-center mapping: source coordinate (x + 0.5)/2 - 0.5, clamped.
    let direct: Vec<f64> = (0..4)
        .map(|x| ((x as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, 1.0))
        .collect();
    for (a, b) in row.iter().zip(&direct) {
        assert!((a - b).abs() < 1e-12, "{row:?} vs {direct:?}");
    }
    assert!(row.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn hsv_examples() {
    assert_eq!(rgb_to_hsv([1.0f64, 0.0, 0.0]), (0.0, 1.0, 1.0));
    for g in [0.0, 0.25, 0.7, 1.0f64] {
        assert_eq!(rgb_to_hsv([g, g, g]), (0.0, 0.0, g));
    }
    let (h, s, v) = rgb_to_hsv([0.5f64, 0.25, 0.25]);
    assert!(h.abs() < 1e-12 && (s - 0.5).abs() < 1e-12 && (v - 0.5).abs() < 1e-12);
}

#[test]
fn bbox_examples() {
    let full = WaterMask::<f64>::filled(6, 4, 1.0);
    assert_eq!(water_bbox(&full, 0.5).unwrap(), Rect::new(0, 0, 6, 4));
    let mut one = WaterMask::<f64>::filled(8, 8, 0.0);
    one.set(3, 5, 1.0);
    assert_eq!(water_bbox(&one, 0.5).unwrap(), Rect::new(3, 5, 4, 6));
    let mut two = WaterMask::<f64>::filled(8, 8, 0.0);
    two.set(1, 1, 1.0);
    two.set(6, 2, 1.0);
    assert_eq!(water_bbox(&two, 0.5).unwrap(), Rect::new(1, 1, 7, 3));
    assert!(matches!(
        water_bbox(&WaterMask::<f64>::filled(4, 4, 0.0), 0.5),
        Err(ImageError::NoWaterRegion { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constant_survives_resize_round_trip(c in 0.0f64..=1.0, w in 1usize..40, h in 1usize..40, w2 in 1usize..40, h2 in 1usize..40) {
        let img = ImageBuffer::<f64>::filled(w, h, [c; 3]);
        let back = resize_bilinear(&resize_bilinear(&img, w2, h2), w, h);
        prop_assert!(back.data().iter().all(|&v| (v - c).abs() < 1e-14));
    }

    #[test]
    fn hsv_round_trip(r in 0.0f64..=1.0, g in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (h, s, v) = rgb_to_hsv([r, g, b]);
        prop_assert!((0.0..360.0).contains(&h));
        prop_assume!(s > 0.0);
        let back = hsv_to_rgb(h, s, v);
        for (x, y) in back.iter().zip([r, g, b]) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn resized_values_stay_in_unit_range(seed in 0u64..1000, w in 1usize..20, h in 1usize..20) {
        let img = ImageBuffer::<f64>::from_fn(7, 6, |x, y| {
            let v = ((x * 31 + y * 17 + seed as usize) % 11) as f64 / 10.0;
            [v, 1.0 - v, 0.5]
        });
        prop_assert!(resize_bilinear(&img, w, h).data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn png_round_trip_is_bit_identical(bytes in proptest::collection::vec(any::<u8>(), 5 * 3 * 3)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        write_rgb_png(&p, 5, 3, &bytes);
        let img: ImageBuffer<f64> = load_image(&p).unwrap();
        let q = dir.path().join("b.png");
        save_image(&img, &q).unwrap();
        let again = image::open(&q).unwrap().into_rgb8().into_raw();
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn mask_round_trip_is_bit_identical(bytes in proptest::collection::vec(any::<u8>(), 4 * 4)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        image::save_buffer_with_format(&p, &bytes, 4, 4, image::ColorType::L8, image::ImageFormat::Png).unwrap();
        let m: WaterMask<f64> = load_mask(&p).unwrap();
        let q = dir.path().join("n.png");
        save_mask(&m, &q).unwrap();
        prop_assert_eq!(image::open(&q).unwrap().into_luma8().into_raw(), bytes);
    }
}
