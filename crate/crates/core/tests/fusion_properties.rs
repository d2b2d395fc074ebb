mod common;

use proptest::prelude::*;
use rand::Rng;

use common::{random_table, rng, to_html};
use tablecellqa::fusion_reference::{
    assemble_sequence, expected_length, gradcheck, layout_embed, Activation, FusionConfig,
    MlpParams, TokenKind,
};
use tablecellqa::layout_engine::{compute_layout, LayoutStyle};
use tablecellqa::table_model::{parse_html_table, DEFAULT_ID_ATTRIBUTE};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sequence_length_and_order(seed in any::<u64>(), question in "\\PC{0,10}", n_image in 0usize..6) {
        let cfg = FusionConfig { d: 8, hidden: 16, n_image_tokens: n_image, seed, ..Default::default() };
        let params = MlpParams::init(&cfg);
        let t = random_table(&mut rng(seed), 6, 6, 10);
        let g = parse_html_table(&to_html(&t), "t", DEFAULT_ID_ATTRIBUTE).unwrap();
        let doc = compute_layout(&g, &LayoutStyle::default()).unwrap();
        let seq = assemble_sequence(&doc, &question, &params, &cfg).unwrap();

        let chars: usize = doc.spans.iter().map(|s| s.text.chars().count()).sum();
        prop_assert_eq!(seq.len(), doc.spans.len() + chars + n_image + question.chars().count());
        prop_assert_eq!(seq.len(), expected_length(&doc, &question, &cfg));
        prop_assert!(seq.check_block_order(n_image).is_ok());
        let layout_tokens = seq.kinds().iter().filter(|k| **k == TokenKind::Layout).count();
        prop_assert_eq!(layout_tokens, doc.spans.len());
        prop_assert!(seq.positions.iter().all(|p| p.embedding.len() == cfg.d));
    }

    #[test]
    fn layout_embedding_is_lipschitz(seed in any::<u64>()) {
        let mut r = rng(seed);
        for act in [Activation::Gelu, Activation::Relu, Activation::Tanh] {
            let cfg = FusionConfig { activation: act, seed, ..Default::default() };
            let params = MlpParams::init(&cfg);
            let bound = params.lipschitz_bound(act);
            prop_assert!(bound.is_finite());
            let b: [f64; 4] = std::array::from_fn(|_| r.gen_range(0.0..=1.0));
            let delta: [f64; 4] = std::array::from_fn(|_| r.gen_range(-1e-3..=1e-3));
            let moved: [f64; 4] = std::array::from_fn(|k| b[k] + delta[k]);
            let out_diff = layout_embed(&b, &params, &cfg) - layout_embed(&moved, &params, &cfg);
            let num = out_diff.iter().map(|v| v * v).sum::<f64>().sqrt();
            let den = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(num <= bound * den + 1e-12);
            prop_assert_eq!(layout_embed(&b, &params, &cfg), layout_embed(&b, &params, &cfg));
        }
    }
}

#[test]
fn gradcheck_holds_across_activations_and_seeds() {
    for act in [Activation::Gelu, Activation::Tanh] {
        for seed in 0..5 {
            let cfg = FusionConfig {
                activation: act,
                seed,
                ..Default::default()
            };
            let err = gradcheck(&MlpParams::init(&cfg), &cfg, 100).unwrap();
            assert!(err < 1e-5, "{act:?} seed {seed}: {err}");
        }
    }
}
