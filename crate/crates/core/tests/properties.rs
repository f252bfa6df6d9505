use proptest::prelude::*;
use quotereel::corpus::ClipRecord;
use quotereel::embedding::{retrieval_loss, RetrievalVariant};
use quotereel::metrics::{rouge_tokens, RougeVariant};
use quotereel::retriever::{build_pool, retrieve_top_k, NegativeSampler};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vecs(
    n: impl Into<proptest::collection::SizeRange>,
    dim: usize,
) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, dim), n)
        .prop_filter("non-zero", |vs| {
            vs.iter().all(|v| v.iter().any(|x| x.abs() > 1e-3))
        })
}

fn variant() -> impl Strategy<Value = RougeVariant> {
    prop_oneof![
        Just(RougeVariant::One),
        Just(RougeVariant::Two),
        Just(RougeVariant::L)
    ]
}

proptest! {
    #[test]
    fn top_k_is_a_prefix_of_the_full_ranking(embs in vecs(1..40, 4), q in vecs(1, 4), k in 1usize..50) {
        let clips: Vec<ClipRecord> = embs.iter().enumerate().map(|(i, e)| {
            let mut c = ClipRecord::new(format!("c{i:02}"), "d", 0.0, 1.0, "t");
            c.text_embedding = Some(e.clone());
            c
        }).collect();
        let pool = build_pool(clips, None, RetrievalVariant::T).unwrap();
        let full = retrieve_top_k(&q[0], &pool, pool.len()).unwrap();
        let top = retrieve_top_k(&q[0], &pool, k).unwrap();
        prop_assert_eq!(top.ranked.len(), k.min(pool.len()));
        prop_assert_eq!(&full.ranked[..top.ranked.len()], &top.ranked[..]);
        prop_assert!(full.ranked.windows(2).all(|w| w[0].1 >= w[1].1));
        prop_assert!(full.ranked.iter().all(|(_, s)| (-1.0..=1.0).contains(s)));
    }

    #[test]
    fn rouge_is_a_symmetric_unit_score(a in proptest::collection::vec(0u8..6, 0..15), b in proptest::collection::vec(0u8..6, 0..15), v in variant()) {
        let f = rouge_tokens(&a, &b, v);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert_eq!(f, rouge_tokens(&b, &a, v));
        let self_score = rouge_tokens(&a, &a, v);
        let has_units = match v { RougeVariant::Two => a.len() >= 2, _ => !a.is_empty() };
        prop_assert_eq!(self_score, if has_units { 1.0 } else { 0.0 });
    }

    #[test]
    fn contrastive_loss_bounds(q in vecs(1..5, 6), p in vecs(5, 6), n in vecs(1..12, 6), include_pos in any::<bool>()) {
        let slots = q.len();
        let negs = vec![n.clone(); slots];
        let l = retrieval_loss(&q, &p[..slots], &negs, include_pos).unwrap();
        let bound = if include_pos { 0.0 } else { slots as f64 * (-2.0 + (n.len() as f64).ln()) };
        prop_assert!(l >= bound, "{} < {}", l, bound);
    }

    #[test]
    fn sampler_never_draws_the_positive(sizes in proptest::collection::vec(1usize..10, 1..5), frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let docs: Vec<String> = sizes.iter().enumerate().flat_map(|(d, &n)| vec![format!("d{d}"); n]).collect();
        let s = NegativeSampler::new(&docs);
        prop_assume!(docs.len() >= 2);
        let n_neg = (docs.len() - 1).min(6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for pos in 0..docs.len() {
            let d = s.draw(pos, frac, n_neg, &mut rng).unwrap();
            prop_assert_eq!(d.indices.len(), n_neg);
            prop_assert!(!d.indices.contains(&pos));
            let mut u = d.indices.clone();
            u.sort_unstable();
            u.dedup();
            prop_assert_eq!(u.len(), n_neg);
            let same = d.indices.iter().filter(|&&i| docs[i] == docs[pos]).count();
            prop_assert_eq!(same, d.same_doc);
        }
    }
}
