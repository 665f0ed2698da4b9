//! Property tests against brute-force oracles.

use std::collections::BTreeMap;

use proptest::prelude::*;
use zeco_core::analysis::{closest_match, delta_sim_rows, token_drift};
use zeco_core::encoder::{toy_base_vector, toy_encode, EncoderConfig, ToyEncoder};
use zeco_core::eval::{maxp_aggregate, ndcg_at_k, recall_at_k, QrelSet};
use zeco_core::index::{score, search_exact, search_two_stage, TokenIndex};
use zeco_core::query::{encode_variant, QueryEncoding, Variant};
use zeco_core::stats::{paired_t_test, pearson};
use zeco_core::{Conversation, ConversationTurn, Ranking, Role, Token, TokenMatrix};

fn unit_rows(dim: usize, n: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(prop::collection::vec(-1.0f32..1.0, dim), n).prop_map(|rows| {
        rows.into_iter()
            .flat_map(|mut r| {
                let n = r.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
                if n < 1e-3 {
                    r.iter_mut().for_each(|x| *x = 0.0);
                    r[0] = 1.0;
                } else {
                    r.iter_mut().for_each(|x| *x = (*x as f64 / n) as f32);
                }
                r
            })
            .collect()
    })
}

fn matrix(data: Vec<f32>, dim: usize, role: Role) -> TokenMatrix {
    let n = data.len() / dim;
    let tokens = (0..n)
        .map(|i| Token::new(format!("t{i}"), role).unwrap())
        .collect();
    TokenMatrix::new(tokens, data, dim).unwrap()
}

fn naive_score(q: &QueryEncoding, doc: &[f32]) -> f64 {
    let dim = q.dim();
    let mut total = 0.0;
    for (i, &m) in q.mask().iter().enumerate() {
        if !m {
            continue;
        }
        let qr = q.matrix().row(i);
        let mut best = f64::NEG_INFINITY;
        for d in doc.chunks(dim) {
            let mut s = 0.0;
            for k in 0..dim {
                s += qr[k] as f64 * d[k] as f64;
            }
            if s > best {
                best = s;
            }
        }
        total += best;
    }
    total
}

fn query_strategy() -> impl Strategy<Value = (usize, QueryEncoding)> {
    (2usize..12, 1usize..8).prop_flat_map(|(dim, n)| {
        (unit_rows(dim, n), prop::collection::vec(any::<bool>(), n)).prop_map(
            move |(rows, mut mask)| {
                if !mask.iter().any(|&m| m) {
                    mask[0] = true;
                }
                let q = QueryEncoding::new(
                    "q",
                    matrix(rows, dim, Role::LastTurn),
                    mask,
                    Variant::Zeco2,
                )
                .unwrap();
                (dim, q)
            },
        )
    })
}

proptest! {
    #[test]
    fn score_matches_double_loop(
        (dim, q) in query_strategy(),
        doc_tokens in 1usize..20,
        seed in any::<u64>(),
    ) {
        let mut rng = zeco_core::encoder::SplitMix64::new(seed);
        let doc: Vec<f32> = (0..doc_tokens * dim).map(|_| rng.next_symmetric() as f32).collect();
        let s = score(&q, &doc).unwrap();
        prop_assert!((s - naive_score(&q, &doc)).abs() < 1e-9);
    }

    #[test]
    fn score_is_permutation_invariant_and_monotone((dim, q) in query_strategy(), extra in 1usize..4, seed in any::<u64>()) {
        let mut rng = zeco_core::encoder::SplitMix64::new(seed);
        let doc: Vec<f32> = (0..5 * dim).map(|_| rng.next_symmetric() as f32).collect();
        let base = score(&q, &doc).unwrap();

        let mut reversed: Vec<f32> = doc.chunks(dim).rev().flatten().copied().collect();
        prop_assert!((score(&q, &reversed).unwrap() - base).abs() < 1e-12);

        reversed.extend((0..extra * dim).map(|_| rng.next_symmetric() as f32));
        prop_assert!(score(&q, &reversed).unwrap() >= base - 1e-12);

        // Query token order does not matter either.
        let n = q.matrix().len();
        let rows: Vec<f32> = (0..n).rev().flat_map(|i| q.matrix().row(i).to_vec()).collect();
        let mask: Vec<bool> = q.mask().iter().rev().copied().collect();
        let rq = QueryEncoding::new("q", matrix(rows, dim, Role::LastTurn), mask, Variant::Zeco2).unwrap();
        prop_assert!((score(&rq, &doc).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn unit_scores_are_bounded((dim, q) in query_strategy(), n in 1usize..6) {
        let doc = q.matrix().as_slice().iter().copied().cycle().take(n * dim).collect::<Vec<f32>>();
        let s = score(&q, &doc).unwrap();
        prop_assert!(s.abs() <= q.masked_count() as f64 + 1e-6);
    }

    #[test]
    fn two_stage_converges_to_exact(
        (dim, q) in query_strategy(),
        sizes in prop::collection::vec(1usize..6, 1..15),
        seed in any::<u64>(),
        k in 1usize..6,
    ) {
        let mut rng = zeco_core::encoder::SplitMix64::new(seed);
        let passages: Vec<(String, TokenMatrix)> = sizes.iter().enumerate().map(|(i, &n)| {
            let mut data: Vec<f32> = Vec::new();
            for _ in 0..n {
                let mut r: Vec<f64> = (0..dim).map(|_| rng.next_symmetric()).collect();
                let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                r.iter_mut().for_each(|x| *x /= norm);
                data.extend(r.iter().map(|&x| x as f32));
            }
            (format!("p{i:02}"), matrix(data, dim, Role::Doc))
        }).collect();
        let index = TokenIndex::build(dim, passages.iter().map(|(id, m)| (id.clone(), m))).unwrap();
        let exact = search_exact(&q, &index, k).unwrap();
        let two = search_two_stage(&q, &index, k, index.token_count()).unwrap();
        prop_assert_eq!(&exact, &two);

        // Any probe depth only ever returns exact scores for its candidates.
        let shallow = search_two_stage(&q, &index, k, 1).unwrap();
        for e in shallow.entries() {
            let p = index.passage_ids().iter().position(|id| *id == e.doc_id).unwrap();
            prop_assert_eq!(e.score, score(&q, index.passage_rows(p)).unwrap());
        }
    }

    #[test]
    fn maxp_equals_group_by_max(
        scores in prop::collection::vec(-5.0f64..5.0, 1..30),
        docs in prop::collection::vec(0usize..6, 30),
    ) {
        let ranking = Ranking::from_scores(
            "q",
            scores.iter().enumerate().map(|(i, &s)| (format!("p{i}"), s)),
            1000,
        ).unwrap();
        let doc_of: BTreeMap<String, String> =
            (0..scores.len()).map(|i| (format!("p{i}"), format!("d{}", docs[i]))).collect();
        let got = maxp_aggregate(&ranking, &doc_of).unwrap();

        let mut best: BTreeMap<String, f64> = BTreeMap::new();
        for (i, &s) in scores.iter().enumerate() {
            let d = format!("d{}", docs[i]);
            let e = best.entry(d).or_insert(f64::NEG_INFINITY);
            if s > *e { *e = s; }
        }
        let mut expect: Vec<(String, f64)> = best.into_iter().collect();
        expect.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let got: Vec<(String, f64)> = got.entries().iter().map(|e| (e.doc_id.clone(), e.score)).collect();
        prop_assert_eq!(got, expect);
    }

    #[test]
    fn metrics_ignore_tail(grades in prop::collection::vec(0u32..4, 1..20), cut in 1usize..10) {
        let mut qrels = QrelSet::default();
        for (i, &g) in grades.iter().enumerate() {
            qrels.insert("q", format!("d{i}"), g).unwrap();
        }
        let n = grades.len();
        let full = Ranking::from_scores("q", (0..n).map(|i| (format!("d{i}"), -(i as f64))), 1000).unwrap();
        let head = Ranking::from_scores("q", (0..n.min(cut)).map(|i| (format!("d{i}"), -(i as f64))), 1000).unwrap();
        prop_assert_eq!(ndcg_at_k(&full, &qrels, cut.min(3)), ndcg_at_k(&head, &qrels, cut.min(3)));
        prop_assert_eq!(recall_at_k(&full, &qrels, cut), recall_at_k(&head, &qrels, cut));
        let v = ndcg_at_k(&full, &qrels, 3);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
    }

    #[test]
    fn t_test_is_antisymmetric(a in prop::collection::vec(-1.0f64..1.0, 2..30), shift in -0.5f64..0.5) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x + shift + (i as f64 * 0.37).sin() * 0.1).collect();
        let ab = paired_t_test(&a, &b).unwrap();
        let ba = paired_t_test(&b, &a).unwrap();
        prop_assert_eq!(ab.t, -ba.t);
        prop_assert_eq!(ab.p, ba.p);
        prop_assert!((0.0..=1.0).contains(&ab.p));
    }

    #[test]
    fn pearson_of_affine_map_is_unit(x in prop::collection::vec(-100.0f64..100.0, 3..40), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        prop_assume!(x.iter().any(|&v| (v - x[0]).abs() > 1e-3));
        let up: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let down: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
        prop_assert!((pearson(&x, &up).unwrap().r - 1.0).abs() < 1e-12);
        prop_assert!((pearson(&x, &down).unwrap().r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn delta_sim_is_antisymmetric(a in unit_rows(4, 2), b in unit_rows(4, 3), r in unit_rows(4, 2)) {
        let a: Vec<&[f32]> = a.chunks(4).collect();
        let b: Vec<&[f32]> = b.chunks(4).collect();
        let r: Vec<&[f32]> = r.chunks(4).collect();
        prop_assert_eq!(delta_sim_rows(&a, &b, &r), delta_sim_rows(&b, &a, &r).map(|d| -d));
    }

    #[test]
    fn closest_match_equals_exhaustive_scan(probe in unit_rows(3, 1), h1 in unit_rows(3, 4), h2 in unit_rows(3, 2)) {
        let (m1, m2) = (matrix(h1, 3, Role::LastTurn), matrix(h2, 3, Role::LastTurn));
        let got = closest_match(&probe, &[(1, &m1), (2, &m2)]).unwrap();
        let mut best = (0usize, 0usize, f64::NEG_INFINITY);
        for (turn, m) in [(1, &m1), (2, &m2)] {
            for (pos, row) in m.rows().enumerate() {
                let s = zeco_core::vector::cosine(&probe, row);
                if s > best.2 { best = (turn, pos, s); }
            }
        }
        prop_assert_eq!((got.turn_id, got.position, got.similarity), best);
    }

    #[test]
    fn toy_encoding_is_contextual(words in prop::collection::vec("[a-z]{1,6}", 2..8), alpha in 0.05f64..0.95) {
        let tokens: Vec<Token> = words.iter().map(|w| Token::new(w.clone(), Role::Doc).unwrap()).collect();
        let cfg = EncoderConfig { dim: 16, alpha, ..Default::default() };
        let m = toy_encode(&tokens, &cfg).unwrap();
        for (i, w) in words.iter().enumerate() {
            let base = toy_base_vector(w, 16).unwrap();
            let norm = m.row(i).iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-6);
            if words.iter().any(|o| o != w) {
                prop_assert!(zeco_core::vector::cosine(m.row(i), &base) < 1.0);
            }
        }
    }

    #[test]
    fn first_turn_has_no_drift(utterance in "[a-z]{1,5}( [a-z]{1,5}){0,6} \\?") {
        let conv = Conversation::new("c", vec![ConversationTurn::new(1, utterance)]).unwrap();
        let enc = ToyEncoder::new(EncoderConfig { dim: 16, ..Default::default() }).unwrap();
        for s in token_drift(&conv, 1, &enc, false).unwrap() {
            prop_assert_eq!(s.drift, 0.0);
        }
    }

    #[test]
    fn zeco2_and_all_history_share_the_matrix(
        turns in prop::collection::vec("[a-z]{1,5}( [a-z]{1,5}){0,5}", 1..5),
        max_tokens in 4usize..40,
    ) {
        let conv = Conversation::new(
            "c",
            turns.iter().enumerate().map(|(i, u)| ConversationTurn::new(i + 1, u.clone())).collect(),
        ).unwrap();
        let enc = ToyEncoder::new(EncoderConfig { dim: 8, max_tokens, ..Default::default() }).unwrap();
        for t in 1..=conv.len() {
            let z = encode_variant(&conv, t, Variant::Zeco2, &enc, false).unwrap();
            let a = encode_variant(&conv, t, Variant::AllHistory, &enc, false).unwrap();
            let l = encode_variant(&conv, t, Variant::LastTurn, &enc, false).unwrap();
            prop_assert_eq!(z.matrix(), a.matrix());
            prop_assert!(z.masked_count() >= 1);
            // The utterance is never truncated.
            prop_assert_eq!(z.masked_count(), l.masked_count());
            let masked_roles_ok = z.matrix().tokens().iter().zip(z.mask()).all(|(tok, &m)| m == (tok.role() == Role::LastTurn));
            prop_assert!(masked_roles_ok);
        }
    }
}
