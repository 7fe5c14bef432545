//! Property-based invariants for the numerical kernels and text plumbing.

use proptest::prelude::*;

use glyphnet::augment::{char_flip, hflip_image, shift_image, AugmentConfig};
use glyphnet::datasets::{split_dataset, LabeledText};
use glyphnet::dialog::levenshtein;
use glyphnet::nn::{conv2d_forward, conv2d_forward_im2col, softmax, ConvParams, Padding};
use glyphnet::raster::font::GlyphFont;
use glyphnet::raster::pgm;
use glyphnet::raster::{render_text, LayoutConfig, PageImage};
use glyphnet::tensor::{Matrix, Tensor};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_conv_case(
    seed: u64,
    n: usize,
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
) -> (Tensor<f32>, ConvParams<f32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = Tensor::from_fn([n, cin, h, w], |_| rng.gen_range(-1.0f32..1.0));
    let weights = Tensor::from_fn([cout, cin, k, k], |_| rng.gen_range(-1.0f32..1.0));
    let bias: Vec<f32> = (0..cout).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let params =
        ConvParams::new(weights, bias, stride, Padding::same(h, w, k, k, stride)).unwrap();
    (input, params)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    /// Same padding must give ceil(in / stride) spatial dims, end to end
    /// through the real forward pass, not just the shape formula.
    #[test]
    fn same_padding_output_is_ceil_of_input_over_stride(
        h in 1usize..24, w in 1usize..24, k in 1usize..6, stride in 1usize..4, seed in any::<u64>()
    ) {
        let (input, params) = random_conv_case(seed, 1, 1, 2, h, w, k, stride);
        let out = conv2d_forward(&input, &params).unwrap();
        prop_assert_eq!(out.height(), h.div_ceil(stride));
        prop_assert_eq!(out.width(), w.div_ceil(stride));
    }

    /// The two convolution routes are the same function.
    #[test]
    fn direct_and_im2col_agree(
        n in 1usize..3, cin in 1usize..3, cout in 1usize..4,
        h in 3usize..11, w in 3usize..11, k in 1usize..5, stride in 1usize..3,
        seed in any::<u64>()
    ) {
        let (input, params) = random_conv_case(seed, n, cin, cout, h, w, k, stride);
        let direct = conv2d_forward(&input, &params).unwrap();
        let gemm = conv2d_forward_im2col(&input, &params).unwrap();
        prop_assert_eq!(direct.shape(), gemm.shape());
        let max_diff = direct
            .data()
            .iter()
            .zip(gemm.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        prop_assert!(max_diff <= 1e-5, "max diff {max_diff}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    /// Softmax rows are probability simplices and shift-invariant per row.
    #[test]
    fn softmax_rows_are_simplices_and_shift_invariant(
        rows in 1usize..5, cols in 1usize..6, seed in any::<u64>(), shift in -10.0f64..10.0
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let logits = Matrix::new(rows, cols, data.clone()).unwrap();
        let probs = softmax(&logits);
        for r in 0..rows {
            let row = probs.row(r);
            let sum: f64 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
        let shifted =
            Matrix::new(rows, cols, data.iter().map(|v| v + shift).collect()).unwrap();
        let probs2 = softmax(&shifted);
        for (a, b) in probs.data().iter().zip(probs2.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    /// Digit flipping never changes length and never touches non-digits.
    #[test]
    fn char_flip_preserves_structure(text in "[a-z0-9 ]{0,40}", seed in any::<u64>(), p in 0.0f64..=1.0) {
        let cfg = AugmentConfig { charflip_prob: p, ..AugmentConfig::disabled() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flipped = char_flip(&text, &cfg, &mut rng).unwrap();
        prop_assert_eq!(flipped.chars().count(), text.chars().count());
        for (orig, new) in text.chars().zip(flipped.chars()) {
            if orig.is_ascii_digit() {
                prop_assert!(new.is_ascii_digit());
            } else {
                prop_assert_eq!(orig, new);
            }
        }
    }

    /// Splitting partitions the dataset: every sample lands in exactly one part.
    #[test]
    fn split_is_a_partition(
        n in 4usize..120, classes in 1usize..5, seed in any::<u64>(),
        a in 1u32..8, b in 0u32..4, c in 0u32..4
    ) {
        let total = (a + b + c) as f64;
        let fractions = (a as f64 / total, b as f64 / total, c as f64 / total);
        let data: Vec<LabeledText> = (0..n)
            .map(|i| LabeledText { label: i % classes, text: format!("sample {i}") })
            .collect();
        let (train, val, test) = split_dataset(&data, fractions, seed).unwrap();
        prop_assert_eq!(train.len() + val.len() + test.len(), n);
        let mut seen: Vec<&LabeledText> =
            train.iter().chain(&val).chain(&test).collect();
        seen.sort_by_key(|s| s.text.clone());
        let mut orig: Vec<&LabeledText> = data.iter().collect();
        orig.sort_by_key(|s| s.text.clone());
        prop_assert_eq!(seen, orig);
    }

    /// PGM encode/decode is lossless for binary pages.
    #[test]
    fn pgm_round_trips_binary_images(
        w in 1usize..40, h in 1usize..40, seed in any::<u64>()
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = PageImage::filled(w, h, 0.0);
        for y in 0..h {
            for x in 0..w {
                if rng.gen_bool(0.5) {
                    img.set(x, y, 1.0);
                }
            }
        }
        let decoded = pgm::decode(&pgm::encode(&img)).unwrap();
        prop_assert_eq!(decoded.width, img.width);
        prop_assert_eq!(decoded.height, img.height);
        for y in 0..h {
            for x in 0..w {
                prop_assert_eq!(decoded.at(x, y), img.at(x, y));
            }
        }
    }

    /// Edit distance axioms on short ASCII strings.
    #[test]
    fn levenshtein_axioms(a in "[a-z ]{0,12}", b in "[a-z ]{0,12}") {
        prop_assert_eq!(levenshtein(&a, &a), 0);
        prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
        let bound = a.chars().count().max(b.chars().count());
        prop_assert!(levenshtein(&a, &b) <= bound);
        if a != b {
            prop_assert!(levenshtein(&a, &b) >= 1);
        }
    }

    /// Rendering any printable text yields a strictly binary page of the
    /// configured size.
    #[test]
    fn rendered_pages_are_binary_and_sized(text in "[ -~]{0,120}") {
        let font = GlyphFont::default_ascii();
        let layout = LayoutConfig::default();
        let page = render_text(&text, &font, &layout).unwrap();
        prop_assert_eq!(page.width, layout.image_width);
        prop_assert_eq!(page.height, layout.image_height);
        prop_assert!(page.is_binary());
    }

    /// A zero shift is the identity; a double horizontal flip is the identity.
    #[test]
    fn geometric_identities(w in 2usize..30, h in 2usize..30, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = PageImage::filled(w, h, 0.0);
        for y in 0..h {
            for x in 0..w {
                if rng.gen_bool(0.3) {
                    img.set(x, y, 1.0);
                }
            }
        }
        let shifted = shift_image(&img, 0, 0, 0.0).unwrap();
        prop_assert_eq!(&shifted.pixels, &img.pixels);
        let flipped_twice = hflip_image(&hflip_image(&img));
        prop_assert_eq!(&flipped_twice.pixels, &img.pixels);
    }
}
