//! Property-based invariants across modules.

use proptest::prelude::*;

use summ::abstractor::{Abstractor, AbstractorConfig, Source};
use summ::corpus::{build_vocab, generate_synthetic_corpus, tokenize, Document, Sentence, SummaryPair, SynthConfig, Vocabulary, RESERVED, UNK};
use summ::decoding::{beam_search, parallel_map, rerank, repeated_ngrams, AbstractorScorer, RerankItem};
use summ::extractor::{argmax, Extractor, ExtractorConfig, Mode};
use summ::metrics::{lcs_len, rouge_l, rouge_n};
use summ::proxy::{build_abstractor_pairs, match_proxy_labels};
use summ::rl::{compute_returns, episode_rewards, Action, ActorCritic, RlExample};
use summ::substrate::tape::log_softmax_values;

fn tokens(alpha: u8, max_len: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0..alpha, 0..=max_len)
}

fn words(max_len: usize) -> impl Strategy<Value = Sentence> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 1..=max_len)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

fn brute_lcs(a: &[u8], b: &[u8]) -> usize {
    let sub = |s: &[u8], t: &[u8]| {
        let mut it = t.iter();
        s.iter().all(|x| it.any(|y| y == x))
    };
    (0u32..1 << a.len())
        .filter_map(|m| {
            let s: Vec<u8> = (0..a.len()).filter(|i| m >> i & 1 == 1).map(|i| a[i]).collect();
            sub(&s, b).then_some(s.len())
        })
        .max()
        .unwrap_or(0)
}

fn vocab_of(n: usize) -> Vocabulary {
    let mut v: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    v.extend((4..n).map(|i| format!("t{i}")));
    Vocabulary::from_tokens(v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tokenize_is_idempotent(text in "[ a-zA-Z0-9.,'!?\\-]{0,60}") {
        let once = tokenize(&text);
        prop_assert_eq!(tokenize(&once.join(" ")), once);
    }

    #[test]
    fn vocabulary_round_trip(toks in prop::collection::vec("[a-z]{1,4}", 1..30), probe in "[A-Z]{1,3}") {
        let doc = Document::new("d", vec![toks.clone()]).unwrap();
        let pair = SummaryPair::new(doc, vec![toks.clone()]).unwrap();
        let vocab = build_vocab(&[pair], 10_000).unwrap();
        for t in &toks {
            prop_assert_eq!(vocab.decode(vocab.encode(t)), t.as_str());
        }
        prop_assert_eq!(vocab.encode(&probe), UNK);
    }

    #[test]
    fn noise_free_labels_recover_salient(seed in 0u64..1000, sents in 3usize..8, salient in 1usize..3) {
        let pairs = generate_synthetic_corpus(&SynthConfig {
            n_docs: 5,
            vocab_size: 200,
            sents_per_doc: sents,
            salient_per_doc: salient.min(sents),
            noise_rate: 0.0,
            seed,
        }).unwrap();
        for p in &pairs {
            prop_assert_eq!(Some(&match_proxy_labels(p).indices), p.salient.as_ref());
        }
    }

    #[test]
    fn lcs_symmetric_and_exact(a in tokens(4, 12), b in tokens(4, 12)) {
        let l = lcs_len(&a, &b);
        prop_assert_eq!(l, lcs_len(&b, &a));
        prop_assert_eq!(l, brute_lcs(&a, &b));
    }

    #[test]
    fn appending_reference_token_keeps_recall(hyp in tokens(5, 10), reference in tokens(5, 10), pick in 0usize..10, n in 1usize..4) {
        prop_assume!(!reference.is_empty());
        let mut longer = hyp.clone();
        longer.push(reference[pick % reference.len()]);
        prop_assert!(rouge_n(&longer, &reference, n).recall >= rouge_n(&hyp, &reference, n).recall);
    }

    #[test]
    fn scores_bounded(hyp in tokens(5, 10), reference in tokens(5, 10), n in 1usize..4) {
        for s in [rouge_n(&hyp, &reference, n), rouge_l(&hyp, &reference)] {
            for v in [s.precision, s.recall, s.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-15);
        }
    }

    #[test]
    fn proxy_source_is_best_match(doc in prop::collection::vec(words(8), 1..6), summ in prop::collection::vec(words(6), 1..4)) {
        let pair = SummaryPair::new(Document::new("d", doc.clone()).unwrap(), summ).unwrap();
        let labels = match_proxy_labels(&pair);
        prop_assert_eq!(&labels, &match_proxy_labels(&pair));
        for (src, tgt) in build_abstractor_pairs(&pair, &labels).unwrap() {
            let chosen = rouge_l(&src, &tgt).recall;
            for d in &doc {
                prop_assert!(chosen >= rouge_l(d, &tgt).recall);
            }
        }
    }

    #[test]
    fn argmax_invariant_to_shift(logits in prop::collection::vec(-5.0f64..5.0, 2..8), shift in -10.0f64..10.0, mask_bits in any::<u8>()) {
        let mut mask: Vec<bool> = (0..logits.len()).map(|i| mask_bits >> (i % 8) & 1 == 1).collect();
        mask[0] = true;
        let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
        let a = log_softmax_values(&logits, Some(&mask));
        let b = log_softmax_values(&shifted, Some(&mask));
        prop_assert_eq!(argmax(&a), argmax(&b));
        prop_assert!(mask[argmax(&a)]);
    }

    #[test]
    fn rewards_and_returns_bounded(
        sents in prop::collection::vec(words(6), 1..6),
        refs in prop::collection::vec(words(6), 1..4),
        picks in prop::collection::vec(0usize..6, 0..6),
        stop in any::<bool>(),
        gamma in 0.0f64..=1.0,
    ) {
        let mut seen = std::collections::HashSet::new();
        let mut actions: Vec<Action> = picks.iter().map(|p| p % sents.len()).filter(|p| seen.insert(*p)).map(Action::Select).collect();
        if stop || actions.is_empty() {
            actions.push(Action::Stop);
        }
        let rewards = episode_rewards(&actions, &sents, &refs);
        prop_assert_eq!(rewards.len(), actions.len());
        prop_assert!(rewards.iter().all(|r| (0.0..=1.0).contains(r)));
        let returns = compute_returns(&rewards, gamma);
        for (t, r) in returns.iter().enumerate() {
            let bound: f64 = (0..rewards.len() - t).map(|k| gamma.powi(k as i32)).sum();
            prop_assert!(*r >= 0.0 && *r <= bound + 1e-12);
        }
    }

    #[test]
    fn rerank_is_minimal(beams in prop::collection::vec(prop::collection::vec((words(5), -3.0f64..0.0), 1..4), 1..4)) {
        let beams: Vec<Vec<RerankItem>> = beams
            .into_iter()
            .map(|b| b.into_iter().map(|(tokens, score)| RerankItem { tokens, score }).collect())
            .collect();
        let best = rerank(&beams, 2, 1_000_000);
        let mut min = usize::MAX;
        let total: usize = beams.iter().map(Vec::len).product();
        for mut code in 0..total {
            let mut pick = Vec::new();
            for b in beams.iter().rev() {
                pick.push(&b[code % b.len()].tokens);
                code /= b.len();
            }
            pick.reverse();
            min = min.min(repeated_ngrams(&pick, 2));
        }
        prop_assert_eq!(best.repeated, min);
    }

    #[test]
    fn parallel_map_matches_serial(items in prop::collection::vec(any::<u32>(), 0..200), workers in 1usize..9) {
        let f = |x: &u32| x.wrapping_mul(2_654_435_761).rotate_left(7);
        prop_assert_eq!(parallel_map(&items, workers, f).unwrap(), items.iter().map(f).collect::<Vec<_>>());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn beam_outputs_blocked_and_sorted(seed in 0u64..10_000, src in prop::collection::vec(4usize..14, 1..8), k in 1usize..6) {
        let vocab = vocab_of(14);
        let abs = Abstractor::new(AbstractorConfig { vocab_size: 14, emb_dim: 4, hidden: 4 }, seed);
        let toks: Sentence = src.iter().map(|i| format!("t{i}")).collect();
        let source = Source::new(&toks, &vocab);
        let hyps = beam_search(&AbstractorScorer::new(&abs, &source), k, 1.0, 12);
        prop_assert!(!hyps.is_empty() && hyps.len() <= k);
        for w in hyps.windows(2) {
            prop_assert!(w[0].normalized_score() >= w[1].normalized_score());
        }
        for h in &hyps {
            let tri: Vec<&[usize]> = h.tokens.windows(3).collect();
            let distinct: std::collections::HashSet<&[usize]> = tri.iter().copied().collect();
            prop_assert_eq!(tri.len(), distinct.len());
        }
    }

    #[test]
    fn extraction_never_repeats(seed in 0u64..10_000, n in 1usize..7, cap in 1usize..9, sample in any::<bool>()) {
        let ext = Extractor::new(ExtractorConfig { vocab_size: 20, emb_dim: 4, conv_filters: 2, hidden: 4 }, seed);
        let doc: Vec<Vec<usize>> = (0..n).map(|i| vec![4 + i, 5 + i, 6 + i]).collect();
        let mut r = summ::substrate::rng(seed);
        let mode = if sample { Mode::Sample } else { Mode::Greedy };
        let e = ext.run(&doc, mode, cap, true, Some(&mut r));
        prop_assert!(e.indices.len() <= n.min(cap));
        let distinct: std::collections::HashSet<_> = e.indices.iter().collect();
        prop_assert_eq!(distinct.len(), e.indices.len());
        prop_assert!(e.indices.iter().all(|&i| i < n));
    }
}

#[test]
fn rl_parameters_exclude_the_abstractor() {
    let ac = ActorCritic::new(
        Extractor::new(
            ExtractorConfig {
                vocab_size: 20,
                emb_dim: 4,
                conv_filters: 2,
                hidden: 4,
            },
            1,
        ),
        2,
    );
    let abs = Abstractor::new(
        AbstractorConfig {
            vocab_size: 20,
            emb_dim: 4,
            hidden: 4,
        },
        3,
    );
    let abs_names: Vec<&str> = abs.params.iter().map(|(_, n, _)| n).collect();
    assert!(ac.params().iter().all(|(_, n, _)| !abs_names.contains(&n)));

    // probe: a tiny perturbation of every abstractor weight leaves the
    // cached rewrites, and so every reward, unchanged
    let vocab = vocab_of(20);
    let doc = Document::new("d", vec![tokenize("t4 t5 t6 t7"), tokenize("t8 t9 t10")]).unwrap();
    let pair = SummaryPair::new(doc, vec![tokenize("t5 t6")]).unwrap();
    let mut nudged = abs.clone();
    let ids: Vec<_> = nudged.params.iter().map(|(id, _, _)| id).collect();
    for id in ids {
        for x in &mut nudged.params.get_mut(id).data {
            *x += 1e-7;
        }
    }
    let a = RlExample::build(&pair, &vocab, Some(&abs));
    let b = RlExample::build(&pair, &vocab, Some(&nudged));
    let actions = [Action::Select(1), Action::Select(0), Action::Stop];
    assert_eq!(episode_rewards(&actions, &a.rewritten, &a.refs), episode_rewards(&actions, &b.rewritten, &b.refs));
}
