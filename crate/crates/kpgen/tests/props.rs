//! Property tests for the text pipeline, the mixture distribution and the
//! metric suite.

use kpgen::eval::{match_at_k, recall_at_k};
use kpgen::model::{mix_distributions, softmax};
use kpgen::text::{
    build_target_sequence, dedup_phrases, is_present, normalize_and_tokenize,
    partition_keyphrases, porter_stem, Document, Phrase, Token,
};
use proptest::prelude::*;

fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,8}"
}

fn phrase_text() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..3).prop_map(|ws| ws.join(" "))
}

fn doc() -> impl Strategy<Value = Document> {
    (prop::collection::vec(word(), 1..12), prop::collection::vec(phrase_text(), 1..5)).prop_map(
        |(src, keys)| {
            let gold: Vec<Phrase> = keys.iter().filter_map(|k| Phrase::from_text(k)).collect();
            Document {
                id: "p".into(),
                source: normalize_and_tokenize(&src.join(" ")),
                title_len: 0,
                gold: dedup_phrases(&gold),
            }
        },
    )
}

proptest! {
    #[test]
    fn tokenizer_output_is_normalized(raw in ".{0,60}") {
        for tok in normalize_and_tokenize(&raw) {
            prop_assert!(!tok.as_str().is_empty());
            prop_assert!(!tok.as_str().chars().any(|c| c.is_whitespace()));
            prop_assert!(!tok.as_str().chars().any(|c| c.is_uppercase()));
        }
    }

    #[test]
    fn partition_is_a_partition(d in doc()) {
        let (present, absent) = partition_keyphrases(&d);
        prop_assert_eq!(present.len() + absent.len(), d.gold.len());
        // every gold phrase lands on exactly one side, identity preserved
        for p in &present {
            prop_assert!(is_present(p, &d.source));
        }
        for a in &absent {
            prop_assert!(!is_present(a, &d.source));
        }
    }

    #[test]
    fn present_phrases_match_a_brute_force_window_scan(d in doc()) {
        let src_stems: Vec<String> =
            d.source.iter().map(|t| porter_stem(t.as_str())).collect();
        for p in &d.gold {
            let stems: Vec<String> = p.stemmed_key.split(' ').map(String::from).collect();
            let mut found = false;
            if stems.len() <= src_stems.len() {
                for w in 0..=(src_stems.len() - stems.len()) {
                    if src_stems[w..w + stems.len()] == stems[..] {
                        found = true;
                        break;
                    }
                }
            }
            prop_assert_eq!(is_present(p, &d.source), found);
        }
    }

    #[test]
    fn is_present_stable_under_renormalization(d in doc()) {
        for p in &d.gold {
            let renorm = Phrase::from_text(&p.surface()).unwrap();
            let resrc = normalize_and_tokenize(&kpgen::text::join_tokens(&d.source));
            prop_assert_eq!(is_present(p, &d.source), is_present(&renorm, &resrc));
        }
    }

    #[test]
    fn target_sequence_sep_and_eos_counts(d in doc()) {
        let (present, absent) = partition_keyphrases(&d);
        let target = build_target_sequence(&present, &absent);
        let seps = target.iter().filter(|t| t.as_str() == "<sep>").count();
        let eos = target.iter().filter(|t| t.as_str() == "</s>").count();
        prop_assert_eq!(seps, d.gold.len() - 1);
        prop_assert_eq!(eos, 1);
        prop_assert_eq!(target.last().map(Token::as_str), Some("</s>"));
    }

    #[test]
    fn dedup_is_idempotent(keys in prop::collection::vec(phrase_text(), 0..8)) {
        let phrases: Vec<Phrase> = keys.iter().filter_map(|k| Phrase::from_text(k)).collect();
        let once = dedup_phrases(&phrases);
        let twice = dedup_phrases(&once);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn mixture_is_a_distribution(
        logits in prop::collection::vec(-4.0f64..4.0, 5),
        energies in prop::collection::vec(-4.0f64..4.0, 3),
        s in 0.0f64..=1.0,
        ids in prop::collection::vec(0usize..7, 3),
    ) {
        let p_a = softmax(&ndarray::Array1::from(logits));
        let alpha = softmax(&ndarray::Array1::from(energies));
        let p = mix_distributions(s, &p_a, &alpha, &ids, 7);
        prop_assert!((p.sum() - 1.0).abs() < 1e-6);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn recall_monotone_in_k_and_precision_ignores_tail_permutations(
        n_preds in 1usize..12,
        n_gold in 1usize..6,
        seed in 0u64..1000,
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let gold: Vec<Phrase> =
            (0..n_gold).map(|i| Phrase::from_text(&format!("gld{i}")).unwrap()).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut preds: Vec<Phrase> = (0..n_preds)
            .map(|i| {
                if i % 3 == 0 && i / 3 < n_gold {
                    gold[i / 3].clone()
                } else {
                    Phrase::from_text(&format!("prd{i}")).unwrap()
                }
            })
            .collect();
        let mut last = 0.0;
        for k in 1..=(n_preds + 2) {
            let r = recall_at_k(&preds, &gold, k).unwrap();
            prop_assert!(r + 1e-12 >= last, "recall must not decrease in k");
            last = r;
        }
        // permuting predictions ranked below k leaves P@k unchanged
        let k = 1 + n_preds / 2;
        let before = match_at_k(&preds, &gold, k).unwrap();
        preds[k.min(n_preds)..].shuffle(&mut rng);
        let after = match_at_k(&preds, &gold, k).unwrap();
        prop_assert_eq!(before.correct, after.correct);
        prop_assert_eq!(before.considered, after.considered);
    }
}
