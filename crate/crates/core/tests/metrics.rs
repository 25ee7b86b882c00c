mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchscene::data::{extract_edges, toy, EdgeStyle, GaborBank, Split};
use sketchscene::eval::{fid, fid_local, shape_similarity, ssim, ClassifierConfig, FeatureExtractor, ImageClassifier, PixelPca, ScenePair};
use sketchscene::imaging::{BBox, ColorImage};

fn random_image(h: usize, w: usize, rng: &mut ChaCha8Rng) -> ColorImage {
    ColorImage::from_fn(h, w, |_, _| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
}

#[test]
fn fid_of_a_set_with_itself_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let feats: Vec<Vec<f32>> = (0..40).map(|_| (0..6).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    assert!(fid(&feats, &feats).unwrap().abs() < 1e-6);
}

#[test]
fn fid_matches_diagonal_gaussian_closed_form() {
    let cases = [
        ([0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0], [1.0, 0.0, -2.0, 0.5], [1.0, 1.0, 1.0, 1.0]),
        ([0.5, -1.0, 2.0, 0.0], [0.3, 2.0, 1.0, 0.7], [0.0, 0.0, 0.0, 0.0], [1.5, 0.4, 1.0, 3.0]),
        ([3.0, 3.0, 3.0, 3.0], [0.1, 0.2, 0.3, 0.4], [3.0, 3.0, 3.0, 3.0], [0.4, 0.3, 0.2, 0.1]),
    ];
    for (ma, sa, mb, sb) in cases {
        let fa = common::diagonal_features(&ma, &sa);
        let fb = common::diagonal_features(&mb, &sb);
        let var = |s: &[f64; 4]| s.map(|v| v * v * 16.0 / 15.0);
        let expected = common::diagonal_frechet(&ma, &var(&sa), &mb, &var(&sb));
        let got = fid(&fa, &fb).unwrap();
        assert!((got - expected).abs() < 1e-4, "fid {got} vs closed form {expected}");
    }
}

#[test]
fn ssim_of_an_image_with_itself_is_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let x = random_image(24, 30, &mut rng);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn ssim_agrees_with_dense_reference_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..20 {
        let a = random_image(16 + i % 5, 18 + i % 3, &mut rng);
        // correlated partner so scores spread over a useful range
        let noise = random_image(a.height(), a.width(), &mut rng);
        let t = i as f32 / 20.0;
        let b = ColorImage::from_fn(a.height(), a.width(), |x, y| {
            let (p, q) = (a.get(x, y), noise.get(x, y));
            [0, 1, 2].map(|c| (1.0 - t) * p[c] + t * q[c])
        });
        let (got, want) = (ssim(&a, &b).unwrap(), common::reference_ssim(&a, &b));
        assert!((got - want).abs() < 1e-6, "pair {i}: {got} vs {want}");
    }
}

#[test]
fn shape_similarity_is_zero_when_edges_match() {
    let bank = GaborBank::default();
    for kind in 0..2 {
        let mut rng = ChaCha8Rng::seed_from_u64(kind);
        let img = toy::ToyObject::sample(toy::ShapeKind::from_index(kind as usize), &mut rng).render(64);
        let sketch = extract_edges(&img, EdgeStyle::Standard);
        assert_eq!(shape_similarity(&sketch, &img, &bank).unwrap(), 0.0);
    }
}

#[test]
fn shape_similarity_separates_categories() {
    let pool = toy::sketch_pool(20, 64, 32, 3).unwrap();
    let store = toy::object_store(25, 64, Split::Test, &pool, 4).unwrap();
    let bank = GaborBank::default();
    let (mut same, mut other) = (0.0, 0.0);
    // items alternate circle, triangle
    for pair in store.items.chunks(2) {
        let (a, b) = (&pair[0], &pair[1]);
        same += shape_similarity(&a.sketch, &a.image, &bank).unwrap();
        other += shape_similarity(&a.sketch, &b.image, &bank).unwrap();
        same += shape_similarity(&b.sketch, &b.image, &bank).unwrap();
        other += shape_similarity(&b.sketch, &a.image, &bank).unwrap();
    }
    assert!(other > same, "cross-category {other} vs same-category {same}");
}

#[test]
fn toy_classifier_fits_its_training_images() {
    let pool = toy::sketch_pool(10, 64, 32, 5).unwrap();
    let store = toy::object_store(100, 64, Split::Train, &pool, 6).unwrap();
    let images: Vec<_> = store.items.iter().map(|t| t.image.clone()).collect();
    let labels: Vec<_> = store.items.iter().map(|t| t.category).collect();
    let clf = ImageClassifier::train(&images, &labels, store.categories.clone(), ClassifierConfig::default()).unwrap();
    let pred = clf.predict(&images).unwrap();
    let acc = pred.iter().zip(&labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64;
    assert!(acc >= 0.95, "accuracy {acc}");
}

#[test]
fn fid_local_is_zero_on_identical_scenes_and_reduces_to_crop_fid() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let scenes: Vec<ColorImage> = (0..6).map(|_| random_image(48, 48, &mut rng)).collect();
    let fakes: Vec<ColorImage> = (0..6).map(|_| random_image(48, 48, &mut rng)).collect();
    let extractor = FeatureExtractor::PixelPca(PixelPca::fit(&scenes, 8, 4).unwrap());
    let bbox = BBox::new(4, 8, 28, 40).unwrap();
    let same: Vec<ScenePair> = scenes
        .iter()
        .map(|s| ScenePair { generated: s.clone(), ground_truth: s.clone(), boxes: vec![bbox] })
        .collect();
    assert!(fid_local(&same, &extractor, 16).unwrap().abs() < 1e-6);

    let pairs: Vec<ScenePair> = scenes
        .iter()
        .zip(&fakes)
        .map(|(s, f)| ScenePair { generated: f.clone(), ground_truth: s.clone(), boxes: vec![bbox] })
        .collect();
    let crop = |v: &[ColorImage]| -> Vec<ColorImage> { v.iter().map(|i| i.crop(&bbox).unwrap().resize(16, 16)).collect() };
    let direct = fid(
        &extractor.extract(&crop(&scenes)).unwrap(),
        &extractor.extract(&crop(&fakes)).unwrap(),
    )
    .unwrap();
    assert!((fid_local(&pairs, &extractor, 16).unwrap() - direct).abs() < 1e-9);
}
