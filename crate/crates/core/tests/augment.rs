use std::path::Path;

use cervifuse_core::augment::{
    affine, canny, clahe, clahe_gray, generate_offline, AffineParams, AugPipeline, CANNY_HIGH, CANNY_LOW,
};
use cervifuse_core::dataset::{ClassScheme, ImageSample, Manifest, Origin, Split};
use cervifuse_core::rng::rng_for;
use image::{GrayImage, Luma, Rgb, RgbImage};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn quarter_turn_matches_index_permutation() {
    let n = 4u32;
    let img = RgbImage::from_fn(n, n, |x, y| Rgb([(y * n + x) as u8 * 10, x as u8, y as u8]));
    let out = affine(&img, &AffineParams::rotation(90.0)).unwrap();
    // counterclockwise: out[r][c] = in[c][n-1-r]
    for r in 0..n {
        for c in 0..n {
            assert_eq!(out.get_pixel(c, r), img.get_pixel(n - 1 - r, c), "row {r} col {c}");
        }
    }
}

#[test]
fn rotation_round_trip_is_close_away_from_borders() {
    let img = RgbImage::from_fn(64, 64, |x, y| {
        let fx = x as f64 / 63.0;
        let fy = y as f64 / 63.0;
        Rgb([
            (40.0 + 180.0 * fx) as u8,
            (128.0 + 100.0 * (fx * 3.0 + fy * 2.0).sin()) as u8,
            (30.0 + 200.0 * fx * fy) as u8,
        ])
    });
    for theta in [7.0, 19.0, 33.0] {
        let back = affine(&affine(&img, &AffineParams::rotation(theta)).unwrap(), &AffineParams::rotation(-theta)).unwrap();
        for y in 16..48 {
            for x in 16..48 {
                for c in 0..3 {
                    let d = (back.get_pixel(x, y)[c] as i32 - img.get_pixel(x, y)[c] as i32).abs();
                    assert!(d <= 2, "θ={theta} ({x},{y}) channel {c}: {d}");
                }
            }
        }
    }
}

/// Textbook global equalization: h(v) = round((cdf(v) − cdf_min) / (N − cdf_min) · 255).
fn global_he(img: &GrayImage) -> GrayImage {
    let mut hist = [0u64; 256];
    for p in img.pixels() {
        hist[p[0] as usize] += 1;
    }
    let mut cdf = [0u64; 256];
    let mut acc = 0;
    for v in 0..256 {
        acc += hist[v];
        cdf[v] = acc;
    }
    let n = acc;
    let cdf_min = *cdf.iter().find(|&&c| c > 0).unwrap();
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let v = img.get_pixel(x, y)[0] as usize;
        if n == cdf_min {
            return Luma([v as u8]);
        }
        Luma([((cdf[v] - cdf_min) as f64 / (n - cdf_min) as f64 * 255.0).round() as u8])
    })
}

fn test_gray_images() -> Vec<GrayImage> {
    (0..10u64)
        .map(|k| {
            let mut rng = rng_for(k, &[0xC1A4E]);
            let (w, h) = (rng.random_range(8..70), rng.random_range(8..70));
            let (lo, hi) = (rng.random_range(0..100u32), rng.random_range(120..256u32));
            GrayImage::from_fn(w, h, |x, y| {
                let base = match k % 3 {
                    0 => rng.random_range(lo..hi),
                    1 => lo + (x * (hi - lo)) / w,
                    _ => if (x / 4 + y / 4) % 2 == 0 { lo } else { lo + (hi - lo) / 3 + rng.random_range(0..5) },
                };
                Luma([base.min(255) as u8])
            })
        })
        .collect()
}

#[test]
fn single_tile_unclipped_clahe_is_global_equalization() {
    for (k, img) in test_gray_images().iter().enumerate() {
        let got = clahe_gray(img, (1, 1), 1e9).unwrap();
        let want = global_he(img);
        for (a, b) in got.pixels().zip(want.pixels()) {
            assert!((a[0] as i32 - b[0] as i32).abs() <= 1, "image {k}");
        }
    }
}

#[test]
fn luminance_clahe_on_gray_rgb_matches_single_channel() {
    let g = &test_gray_images()[1];
    let rgb = RgbImage::from_fn(g.width(), g.height(), |x, y| Rgb([g.get_pixel(x, y)[0]; 3]));
    let out = clahe(&rgb, (1, 1), 1e9).unwrap();
    let want = global_he(g);
    for (a, b) in out.pixels().zip(want.pixels()) {
        for c in 0..3 {
            assert!((a[c] as i32 - b[0] as i32).abs() <= 1);
        }
    }
}

#[test]
fn canny_traces_a_square() {
    let (n, lo, hi) = (40u32, 12u32, 28u32);
    let img = RgbImage::from_fn(n, n, |x, y| {
        Rgb([if (lo..hi).contains(&x) && (lo..hi).contains(&y) { 255 } else { 0 }; 3])
    });
    let edges = canny(&img, CANNY_LOW, CANNY_HIGH).unwrap();
    // Boundary band: pixels within one step of the square's outline.
    let in_band = |x: u32, y: u32| {
        let near = |v: u32, a: u32| v + 1 >= a && v <= a;
        let inside_x = x + 1 >= lo && x <= hi;
        let inside_y = y + 1 >= lo && y <= hi;
        (inside_y && (near(x, lo) || near(x, hi))) || (inside_x && (near(y, lo) || near(y, hi)))
    };
    let mut on = 0;
    for (x, y, p) in edges.enumerate_pixels() {
        if p[0] == 255 {
            on += 1;
            assert!(in_band(x, y), "edge pixel ({x},{y}) off the outline");
        }
    }
    // every cross-section of each side hits the contour
    for t in lo..hi {
        let hit = |pts: [(u32, u32); 2]| pts.iter().any(|&(x, y)| edges.get_pixel(x, y)[0] == 255);
        assert!(hit([(lo - 1, t), (lo, t)]), "left side at {t}");
        assert!(hit([(hi - 1, t), (hi, t)]), "right side at {t}");
        assert!(hit([(t, lo - 1), (t, lo)]), "top side at {t}");
        assert!(hit([(t, hi - 1), (t, hi)]), "bottom side at {t}");
    }
    assert!(on >= 4 * (hi - lo - 1));
}

fn blobs(seed: u64) -> RgbImage {
    let mut rng = rng_for(seed, &[]);
    let centers: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| (rng.random_range(0.0..32.0), rng.random_range(0.0..32.0), rng.random_range(30.0..255.0)))
        .collect();
    RgbImage::from_fn(32, 32, |x, y| {
        let v = centers
            .iter()
            .map(|&(cx, cy, a)| a * (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / 20.0).exp())
            .sum::<f64>();
        Rgb([v.min(255.0) as u8; 3])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn raising_low_threshold_never_adds_edges(seed in 0u64..1000, low in 0.0f64..100.0, bump in 0.0f64..50.0) {
        let img = blobs(seed);
        let high = 120.0;
        let a = canny(&img, low.min(high - 1.0), high).unwrap();
        let b = canny(&img, (low + bump).min(high - 1e-3), high).unwrap();
        for (pa, pb) in a.pixels().zip(b.pixels()) {
            prop_assert!(pb[0] <= pa[0]);
        }
    }

    #[test]
    fn augmented_copies_keep_dimensions(seed in 0u64..500, w in 8u32..40, h in 8u32..40) {
        let img = RgbImage::from_fn(w, h, |x, y| Rgb([(x * 7) as u8, (y * 5) as u8, ((x ^ y) * 3) as u8]));
        let p = AugPipeline::standard(2, seed);
        prop_assert_eq!(p.augment(&img, 0, 1).unwrap().dimensions(), (w, h));
    }
}

fn write_dataset(root: &Path, train: usize, val: usize, test: usize) -> Manifest {
    let scheme = ClassScheme::identity("toy", &["a", "b"]).unwrap();
    let mut m = Manifest::empty(scheme, 0);
    let splits = std::iter::repeat_n(Split::Train, train)
        .chain(std::iter::repeat_n(Split::Val, val))
        .chain(std::iter::repeat_n(Split::Test, test));
    for (i, split) in splits.enumerate() {
        let class = i % 2;
        let dir = root.join(["a", "b"][class]);
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("img{i:04}.bmp"));
        RgbImage::from_fn(12, 12, |x, y| Rgb([(x * 20 + i as u32) as u8, (y * 20) as u8, class as u8 * 200]))
            .save(&path)
            .unwrap();
        m.rows.push(ImageSample {
            path: path.to_string_lossy().into_owned(),
            raw_label: ["a", "b"][class].into(),
            mapped_label: class,
            split,
            origin: Origin::Original,
            source_index: i,
        });
    }
    m
}

#[test]
fn offline_expansion_counts_and_leakage() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_dataset(&dir.path().join("src"), 100, 10, 10);
    let out = generate_offline(&m, &AugPipeline::standard(6, 3), &dir.path().join("aug")).unwrap();
    assert_eq!(out.count(Split::Train), 700);
    assert_eq!(out.count(Split::Val), 10);
    assert_eq!(out.count(Split::Test), 10);
    assert_eq!(out.class_counts(Split::Train), vec![350, 350]);
    for r in out.rows.iter().filter(|r| r.origin == Origin::Augmented) {
        assert_eq!(r.split, Split::Train);
        assert_eq!(m.rows[r.source_index].mapped_label, r.mapped_label);
        assert!(r.path.ends_with(".png") && r.path.contains("__aug"));
        assert!(Path::new(&r.path).exists());
    }
    let unchanged = generate_offline(&m, &AugPipeline::standard(0, 3), &dir.path().join("none")).unwrap();
    assert_eq!(unchanged, m);
}

#[test]
fn offline_regeneration_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_dataset(&dir.path().join("src"), 6, 2, 2);
    let a = generate_offline(&m, &AugPipeline::standard(3, 11), &dir.path().join("a")).unwrap();
    let b = generate_offline(&m, &AugPipeline::standard(3, 11), &dir.path().join("b")).unwrap();
    let aug = |m: &Manifest| m.rows.iter().filter(|r| r.origin == Origin::Augmented).map(|r| r.path.clone()).collect::<Vec<_>>();
    for (pa, pb) in aug(&a).iter().zip(aug(&b)) {
        assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
    }
    assert_eq!(aug(&a).len(), 18);
}
